#include "kneemark/run_config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "kneemark/annotations.hpp"

namespace kneemark {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return {};
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

Range symmetric(double magnitude) { return Range{-magnitude, magnitude}; }

}  // namespace

const std::vector<std::string>& RunConfig::known_keys() {
  static const std::vector<std::string> keys{
      "model.width", "model.depth", "model.landmarks", "model.input_side", "model.beta", "model.dropout",
      "model.block",
      "loss", "wing.w", "wing.C", "wing.eps", "wing.heatmap_units",
      "mixup.enabled", "mixup.alpha",
      "train.lr", "train.batch", "train.weight_decay", "train.epochs", "train.seed", "train.augment",
      "train.selection_subset",
      "augment.p_geometric", "augment.rotation_deg", "augment.translate_frac", "augment.scale_min",
      "augment.scale_max", "augment.shear_deg", "augment.projective", "augment.p_gamma", "augment.gamma_min",
      "augment.gamma_max", "augment.p_salt_pepper", "augment.salt_pepper_max", "augment.p_median",
      "augment.p_gaussian_blur", "augment.p_noise", "augment.noise_sigma_max", "augment.p_cutout",
      "augment.cutout", "augment.jitter_px",
      "data.roi_spacing", "data.landmark_spacing", "data.crop_mm",
      "cv.folds", "cv.fold", "cv.seed",
      "pipeline.stages",
      "phantom.side", "phantom.spacing", "phantom.count", "phantom.seed", "phantom.bilateral", "phantom.noise_sigma",
  };
  return keys;
}

RunConfig RunConfig::parse(const std::string& text) {
  RunConfig config;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError("expected 'key = value'", line_no);
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ParseError("empty key", line_no);
    try {
      config.set(key, value);
    } catch (const ConfigError& e) {
      throw ParseError(e.what(), line_no);
    }
  }
  return config;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse(text.str());
}

void RunConfig::set(const std::string& key, const std::string& value) {
  const auto& keys = known_keys();
  if (std::find(keys.begin(), keys.end(), key) == keys.end()) throw ConfigError("unknown config key '" + key + "'");
  values_[key] = value;
}

void RunConfig::set_assignment(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("expected key=value, got '" + assignment + "'");
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

std::string RunConfig::get_string(const std::string& key, const std::string& fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

double RunConfig::get_double(const std::string& key, double fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    return parse_double(it->second);
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "' expects a number, got '" + it->second + "'");
  }
}

long long RunConfig::get_int(const std::string& key, long long fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  long long v = 0;
  const auto& s = it->second;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ConfigError("config key '" + key + "' expects an integer, got '" + s + "'");
  }
  return v;
}

bool RunConfig::get_bool(const std::string& key, bool fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  const auto& s = it->second;
  if (s == "true" || s == "1" || s == "on" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "off" || s == "no") return false;
  throw ConfigError("config key '" + key + "' expects true or false, got '" + s + "'");
}

std::string RunConfig::str() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
  return out;
}

TrainConfig train_config_from(const RunConfig& c, Stage stage) {
  TrainConfig t;
  t.stage = stage;
  ModelConfig& m = t.model;
  m.width = int(c.get_int("model.width", m.width));
  m.depth = int(c.get_int("model.depth", m.depth));
  m.landmarks = int(c.get_int("model.landmarks", stage == Stage::kRoi ? 1 : kKneeLandmarks));
  m.input_side = int(c.get_int("model.input_side", m.input_side));
  m.beta = c.get_double("model.beta", m.beta);
  m.dropout = c.get_double("model.dropout", m.dropout);
  m.block = parse_block_kind(c.get_string("model.block", to_string(m.block)));

  t.loss.kind = parse_loss_kind(c.get_string("loss", to_string(t.loss.kind)));
  const double w = c.get_double("wing.w", t.loss.wing.w());
  if (c.has("wing.eps") && c.has("wing.C")) throw ConfigError("set either wing.C or wing.eps, not both");
  t.loss.wing = c.has("wing.eps") ? WingParams::from_w_eps(w, c.get_double("wing.eps", 0.0))
                                  : WingParams::from_w_c(w, c.get_double("wing.C", t.loss.wing.c()));
  t.wing_heatmap_units = c.get_bool("wing.heatmap_units", t.wing_heatmap_units);

  t.mixup = c.get_bool("mixup.enabled", t.mixup);
  t.mixup_alpha = c.get_double("mixup.alpha", t.mixup_alpha);

  t.lr = c.get_double("train.lr", t.lr);
  t.batch = int(c.get_int("train.batch", t.batch));
  t.weight_decay = c.get_double("train.weight_decay", t.weight_decay);
  t.epochs = int(c.get_int("train.epochs", t.epochs));
  t.seed = std::uint64_t(c.get_int("train.seed", 0));
  t.augment = c.get_bool("train.augment", t.augment);
  t.selection_subset = c.get_string("train.selection_subset", t.selection_subset);

  AugmentationConfig& a = t.augmentation;
  a.p_geometric = c.get_double("augment.p_geometric", a.p_geometric);
  a.rotation_deg = symmetric(c.get_double("augment.rotation_deg", a.rotation_deg.hi));
  a.translate_frac = symmetric(c.get_double("augment.translate_frac", a.translate_frac.hi));
  a.scale = Range{c.get_double("augment.scale_min", a.scale.lo), c.get_double("augment.scale_max", a.scale.hi)};
  a.shear_deg = symmetric(c.get_double("augment.shear_deg", a.shear_deg.hi));
  a.projective = symmetric(c.get_double("augment.projective", a.projective.hi));
  a.p_gamma = c.get_double("augment.p_gamma", a.p_gamma);
  a.gamma = Range{c.get_double("augment.gamma_min", a.gamma.lo), c.get_double("augment.gamma_max", a.gamma.hi)};
  a.p_salt_pepper = c.get_double("augment.p_salt_pepper", a.p_salt_pepper);
  a.salt_pepper_max = c.get_double("augment.salt_pepper_max", a.salt_pepper_max);
  a.p_median = c.get_double("augment.p_median", a.p_median);
  a.p_gaussian_blur = c.get_double("augment.p_gaussian_blur", a.p_gaussian_blur);
  a.p_noise = c.get_double("augment.p_noise", a.p_noise);
  a.noise_sigma_max = c.get_double("augment.noise_sigma_max", a.noise_sigma_max);
  a.p_cutout = c.get_double("augment.p_cutout", a.p_cutout);
  a.cutout_fraction = c.get_double("augment.cutout", a.cutout_fraction);
  a.jitter_px = c.get_double("augment.jitter_px", a.jitter_px);

  t.sampling.roi_spacing = c.get_double("data.roi_spacing", t.sampling.roi_spacing);
  t.sampling.landmark_spacing = c.get_double("data.landmark_spacing", t.sampling.landmark_spacing);
  t.sampling.crop_mm = c.get_double("data.crop_mm", t.sampling.crop_mm);
  t.sampling.input_side = m.input_side;
  t.validate();
  return t;
}

PipelineConfig pipeline_config_from(const RunConfig& c) {
  PipelineConfig p;
  p.roi_spacing = c.get_double("data.roi_spacing", p.roi_spacing);
  p.landmark_spacing = c.get_double("data.landmark_spacing", p.landmark_spacing);
  p.crop_mm = c.get_double("data.crop_mm", p.crop_mm);
  p.stages = int(c.get_int("pipeline.stages", p.stages));
  p.validate();
  return p;
}

PhantomSpec phantom_spec_from(const RunConfig& c) {
  PhantomSpec s;
  s.side = int(c.get_int("phantom.side", s.side));
  s.spacing = c.get_double("phantom.spacing", s.spacing);
  s.count = int(c.get_int("phantom.count", s.count));
  s.seed = std::uint64_t(c.get_int("phantom.seed", 0));
  s.bilateral = c.get_bool("phantom.bilateral", s.bilateral);
  s.noise_sigma = c.get_double("phantom.noise_sigma", s.noise_sigma);
  s.validate();
  return s;
}

}  // namespace kneemark
