#include "kneemark/cli.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "kneemark/ablation.hpp"
#include "kneemark/annotations.hpp"
#include "kneemark/checkpoint.hpp"
#include "kneemark/cv_split.hpp"
#include "kneemark/png_io.hpp"
#include "kneemark/run_config.hpp"

namespace kneemark {

namespace {

namespace fs = std::filesystem;

struct ConfigOptions {
  std::string file;
  std::vector<std::string> sets;

  void add_to(CLI::App* app) {
    app->add_option("--config", file, "Run configuration file (key = value)");
    app->add_option("--set", sets, "Override a config key, e.g. --set wing.w=10")->take_all();
  }

  // Command-line flags win over --set, which wins over the file.
  RunConfig load(const std::map<std::string, std::string>& flags) const {
    RunConfig c = file.empty() ? RunConfig{} : RunConfig::load(file);
    for (const auto& s : sets) c.set_assignment(s);
    for (const auto& [k, v] : flags) c.set(k, v);
    return c;
  }
};

// Values of flags that mirror config keys, recorded only when given.
struct FlagOverrides {
  std::map<std::string, std::string> values;

  template <typename T>
  void bind(CLI::App* app, const std::string& flag, const std::string& key, const std::string& help) {
    app->add_option_function<std::string>(flag, [this, key](const std::string& v) { values[key] = v; }, help)
        ->type_name(std::is_same_v<T, std::string> ? "TEXT" : "NUMBER");
  }
};

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

std::vector<AnnotationRecord> load_records(const fs::path& data, const std::string& annotations) {
  const fs::path path = annotations.empty() ? data / "annotations.csv" : fs::path(annotations);
  std::vector<AnnotationRecord> records;
  for (auto& r : read_annotations(path)) {
    if (!r.exclude) records.push_back(std::move(r));
  }
  if (records.empty()) throw ConfigError("no usable records in " + path.string());
  return records;
}

struct TrainOptions {
  std::string data;
  std::string annotations;
  std::string out;
  std::string history;
  std::string pretrained;
  int fold = -1;
  ConfigOptions config;
  FlagOverrides flags;

  void add_to(CLI::App* app, bool allow_pretrained) {
    app->add_option("--data", data, "Directory with annotations.csv and the images")->required();
    app->add_option("--annotations", annotations, "Annotation CSV (default <data>/annotations.csv)");
    app->add_option("--out", out, "Checkpoint directory to write")->required();
    app->add_option("--history", history, "History CSV (default <out>/history.csv)");
    app->add_option("--fold", fold, "Validation fold; -1 trains on every record");
    if (allow_pretrained) app->add_option("--pretrained", pretrained, "ROI checkpoint to initialize from");
    flags.bind<int>(app, "--epochs", "train.epochs", "Training epochs");
    flags.bind<int>(app, "--seed", "train.seed", "Seed for initialization, shuffling and augmentation");
    flags.bind<int>(app, "--batch", "train.batch", "Batch size");
    flags.bind<double>(app, "--lr", "train.lr", "Learning rate");
    flags.bind<int>(app, "--folds", "cv.folds", "Number of cross-validation folds");
    config.add_to(app);
  }
};

// Training and validation samples for the requested fold.
std::pair<std::vector<Sample>, std::vector<Sample>> fold_samples(const std::vector<AnnotationRecord>& records,
                                                                 ImageCache& images, const RunConfig& rc, int fold,
                                                                 const TrainConfig& cfg) {
  std::vector<int> train_ids;
  std::vector<int> val_ids;
  if (fold < 0) {
    for (size_t i = 0; i < records.size(); ++i) train_ids.push_back(int(i));
  } else {
    const int k = int(rc.get_int("cv.folds", 5));
    if (fold >= k) throw ConfigError("fold " + std::to_string(fold) + " outside 0.." + std::to_string(k - 1));
    const FoldSplit split = make_cv_splits(records, k, std::uint64_t(rc.get_int("cv.seed", 0)));
    train_ids = split.training_records(fold);
    val_ids = split.validation_records(fold);
  }
  return {prepare_samples(records, train_ids, images, cfg.stage, cfg.sampling),
          prepare_samples(records, val_ids, images, cfg.stage, cfg.sampling)};
}

int cmd_train(TrainOptions& o, Stage stage, std::ostream& out) {
  const RunConfig rc = o.config.load(o.flags.values);
  const TrainConfig cfg = train_config_from(rc, stage);
  const auto records = load_records(o.data, o.annotations);
  ImageCache images(o.data);
  auto [training, validation] = fold_samples(records, images, rc, o.fold, cfg);

  HourglassModel<float> model = o.pretrained.empty()
                                    ? HourglassModel<float>(cfg.model, cfg.seed)
                                    : transfer_init(cfg.model, load_checkpoint(o.pretrained), cfg.seed);
  TrainResult result = train(std::move(model), training, validation, cfg, [&out](const EpochStats& s, const auto&) {
    out << "epoch " << s.epoch << " loss " << format_double(s.loss) << " pck2 " << format_double(s.pck[2]) << '\n';
    return true;
  });
  save_checkpoint(result.best, o.out);
  write_text(o.history.empty() ? fs::path(o.out) / "history.csv" : fs::path(o.history), history_csv(result.history));
  out << "best epoch " << result.best_epoch << " saved to " << o.out << '\n';
  if (result.diverged) throw DivergenceError(result.divergence + " (best checkpoint saved)");
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Knee landmark localization toolkit", "kneemark"};
  app.require_subcommand(1);

  // gen-phantom
  auto* gen = app.add_subcommand("gen-phantom", "Write a synthetic knee corpus (PNG + annotations.csv)");
  std::string gen_out;
  bool gen_bilateral = false;
  ConfigOptions gen_config;
  FlagOverrides gen_flags;
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen->add_flag("--bilateral", gen_bilateral, "Two knees per image");
  gen_flags.bind<int>(gen, "--count", "phantom.count", "Number of images");
  gen_flags.bind<int>(gen, "--seed", "phantom.seed", "Master seed");
  gen_flags.bind<int>(gen, "--side", "phantom.side", "Image height in px");
  gen_flags.bind<double>(gen, "--spacing", "phantom.spacing", "mm per px");
  gen_flags.bind<double>(gen, "--noise", "phantom.noise_sigma", "Additive noise sigma");
  gen_config.add_to(gen);

  auto* train_roi = app.add_subcommand("train-roi", "Train the joint-centre (ROI) model");
  TrainOptions roi_options;
  roi_options.add_to(train_roi, false);

  auto* train_lm = app.add_subcommand("train-landmarks", "Train the 16-landmark model");
  TrainOptions lm_options;
  lm_options.add_to(train_lm, true);

  // infer
  auto* inf = app.add_subcommand("infer", "Two-stage landmark inference on bilateral images");
  std::string inf_roi, inf_lm, inf_data, inf_annotations, inf_image, inf_out;
  double inf_spacing = 0.0;
  ConfigOptions inf_config;
  FlagOverrides inf_flags;
  inf->add_option("--roi", inf_roi, "ROI checkpoint")->required();
  inf->add_option("--landmarks", inf_lm, "Landmark checkpoint")->required();
  inf->add_option("--data", inf_data, "Directory whose annotations.csv lists images and spacings");
  inf->add_option("--annotations", inf_annotations, "Annotation CSV (default <data>/annotations.csv)");
  inf->add_option("--image", inf_image, "Single PNG instead of --data");
  inf->add_option("--spacing", inf_spacing, "mm per px of --image");
  inf->add_option("--out", inf_out, "Predictions CSV")->required();
  inf_flags.bind<int>(inf, "--stages", "pipeline.stages", "1, or 2 to re-centre and repeat the landmark pass");
  inf_config.add_to(inf);

  // evaluate
  auto* eval = app.add_subcommand("evaluate", "PCK and outlier report for a predictions CSV");
  std::string ev_data, ev_annotations, ev_predictions, ev_out, ev_csv, ev_cdf, ev_subset = "test", ev_dataset = "data",
                                                                                 ev_fold = "all";
  eval->add_option("--data", ev_data, "Directory with the ground-truth annotations.csv");
  eval->add_option("--annotations", ev_annotations, "Ground-truth CSV (default <data>/annotations.csv)");
  eval->add_option("--predictions", ev_predictions, "Predictions CSV")->required();
  eval->add_option("--subset", ev_subset, "Landmark subset for PCK")->check(CLI::IsMember({"ablation", "test", "all"}));
  eval->add_option("--out", ev_out, "JSON report (default: stdout)");
  eval->add_option("--csv", ev_csv, "Flat CSV report");
  eval->add_option("--cdf", ev_cdf, "Cumulative error distribution CSV");
  eval->add_option("--dataset", ev_dataset, "Dataset tag in the report");
  eval->add_option("--fold", ev_fold, "Fold label in the report");

  // ablate
  auto* abl = app.add_subcommand("ablate", "Run the ablation grid, one report row per setting");
  TrainOptions ab_options;
  std::string ab_out;
  bool ab_full = false;
  bool ab_dry = false;
  abl->add_option("--data", ab_options.data, "Directory with annotations.csv and the images");
  abl->add_option("--annotations", ab_options.annotations, "Annotation CSV (default <data>/annotations.csv)");
  abl->add_option("--out", ab_out, "Rows CSV")->required();
  abl->add_option("--fold", ab_options.fold, "Validation fold (default 0)");
  abl->add_option("--pretrained", ab_options.pretrained, "ROI checkpoint for finetune rows");
  abl->add_flag("--full-grid", ab_full, "Every combination of the axes instead of the single-axis rows");
  abl->add_flag("--dry-run", ab_dry, "List the settings without training");
  ab_options.flags.bind<int>(abl, "--epochs", "train.epochs", "Training epochs per row");
  ab_options.flags.bind<int>(abl, "--seed", "train.seed", "Seed");
  ab_options.flags.bind<int>(abl, "--folds", "cv.folds", "Number of cross-validation folds");
  ab_options.config.add_to(abl);
  ab_options.fold = 0;

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "kneemark: " << e.what() << "\n";
    const auto subs = app.get_subcommands();
    err << (subs.empty() ? app.help() : subs.front()->help());
    return 2;
  }

  try {
    if (gen->parsed()) {
      const RunConfig rc = gen_config.load(gen_flags.values);
      PhantomSpec spec = phantom_spec_from(rc);
      if (gen_bilateral) spec.bilateral = true;
      const PhantomCorpus corpus = generate(spec);
      write_corpus(corpus, gen_out);
      out << "wrote " << corpus.images.size() << " images and " << corpus.records.size() << " records to " << gen_out
          << '\n';
      return 0;
    }
    if (train_roi->parsed()) return cmd_train(roi_options, Stage::kRoi, out);
    if (train_lm->parsed()) return cmd_train(lm_options, Stage::kLandmarks, out);

    if (inf->parsed()) {
      const RunConfig rc = inf_config.load(inf_flags.values);
      const PipelineConfig pc = pipeline_config_from(rc);
      HourglassModel<float> roi = load_checkpoint(inf_roi);
      HourglassModel<float> lm = load_checkpoint(inf_lm);
      std::vector<Image> images;
      if (!inf_image.empty()) {
        if (!(inf_spacing > 0.0)) throw ConfigError("--image needs --spacing > 0");
        images.push_back(read_png(inf_image, inf_spacing));
        images.back().id = fs::path(inf_image).filename().string();
      } else {
        if (inf_data.empty()) throw ConfigError("infer needs --data or --image");
        std::set<std::string> seen;
        for (const auto& r : load_records(inf_data, inf_annotations)) {
          if (!seen.insert(r.image).second) continue;
          images.push_back(read_png(fs::path(inf_data) / r.image, r.spacing));
          images.back().id = r.image;
        }
      }
      std::vector<PredictionRow> rows;
      for (const auto& img : images) {
        for (const auto& knee : infer(roi, lm, img, pc)) append_rows(rows, img.id, knee);
      }
      write_text(inf_out, predictions_csv(rows));
      out << "wrote " << rows.size() << " predictions to " << inf_out << '\n';
      return 0;
    }

    if (eval->parsed()) {
      if (ev_data.empty() && ev_annotations.empty()) throw ConfigError("evaluate needs --data or --annotations");
      const auto records = load_records(ev_data, ev_annotations);
      const auto rows = parse_predictions(read_text(ev_predictions));
      std::map<std::pair<std::string, Side>, LandmarkSet> predicted;
      for (const auto& r : rows) {
        auto& lms = predicted[{r.image, r.side}];
        if (lms.points.rows() <= r.id) lms.points.conservativeResize(r.id + 1, 2);
        lms.points.row(r.id) << r.x, r.y;
      }
      ErrorMatrix errors;
      for (const auto& rec : records) {
        const auto it = predicted.find({rec.image, rec.side});
        if (it == predicted.end()) {
          throw InvalidArgument("no prediction for " + rec.image + " (" + (rec.side == Side::kLeft ? "L" : "R") + ")");
        }
        errors.append(radial_errors(it->second, rec.landmarks, rec.spacing), rec.kl, ev_dataset);
      }
      const EvaluationReport report = evaluate(errors, ev_subset, ev_dataset, ev_fold);
      nlohmann::json j = to_json(report);
      for (int kl = 0; kl <= 4; ++kl) {
        const ErrorMatrix part = errors.select_kl(kl);
        if (part.images() > 0) j["by_kl"][std::to_string(kl)] = to_json(evaluate(part, ev_subset, ev_dataset, ev_fold));
      }
      if (ev_out.empty()) {
        out << j.dump(2) << '\n';
      } else {
        write_text(ev_out, j.dump(2) + "\n");
      }
      if (!ev_csv.empty()) write_text(ev_csv, report_csv({report}));
      if (!ev_cdf.empty()) write_text(ev_cdf, cdf_csv(cumulative_distribution(errors, report.subset)));
      return 0;
    }

    if (abl->parsed()) {
      const auto settings = ab_full ? ablation_full_grid() : ablation_table_rows();
      std::string csv = ablation_csv_header();
      if (ab_dry) {
        for (const auto& s : settings) csv += ablation_csv_row(s, nullptr);
        write_text(ab_out, csv);
        out << settings.size() << " settings listed in " << ab_out << '\n';
        return 0;
      }
      if (ab_options.data.empty()) throw ConfigError("ablate needs --data");
      const RunConfig rc = ab_options.config.load(ab_options.flags.values);
      const TrainConfig base = train_config_from(rc, Stage::kLandmarks);
      const auto records = load_records(ab_options.data, ab_options.annotations);
      ImageCache images(ab_options.data);
      auto [training, validation] = fold_samples(records, images, rc, ab_options.fold, base);
      std::optional<HourglassModel<float>> pretrained;
      for (const auto& s : settings) {
        const TrainConfig cfg = s.apply(base);
        HourglassModel<float> model(cfg.model, cfg.seed);
        if (s.finetune) {
          if (ab_options.pretrained.empty()) throw ConfigError("finetune settings need --pretrained");
          if (!pretrained) pretrained = load_checkpoint(ab_options.pretrained);
          model = transfer_init(cfg.model, *pretrained, cfg.seed);
        }
        const TrainResult result = train(std::move(model), training, validation, cfg);
        const EpochStats* best = result.best_epoch > 0 ? &result.history[size_t(result.best_epoch - 1)] : nullptr;
        csv += ablation_csv_row(s, best);
        out << s.name() << (best ? " pck2 " + format_double(best->pck[2]) : std::string(" diverged")) << '\n';
        write_text(ab_out, csv);
      }
      return 0;
    }
  } catch (const std::exception& e) {
    err << "kneemark: error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

int run_cli(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run_cli(args, std::cout, std::cerr);
}

}  // namespace kneemark
