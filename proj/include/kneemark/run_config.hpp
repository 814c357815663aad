#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "kneemark/phantom.hpp"
#include "kneemark/pipeline.hpp"
#include "kneemark/training.hpp"

namespace kneemark {

// Flat `key = value` document with dotted section keys, '#' comments and
// blank lines, e.g.
//
//   loss = wing
//   wing.w = 15
//   mixup.enabled = true
class RunConfig {
 public:
  static RunConfig parse(const std::string& text);
  static RunConfig load(const std::filesystem::path& path);

  // Throws ConfigError for keys outside known_keys().
  void set(const std::string& key, const std::string& value);
  // "key=value" form used by --set.
  void set_assignment(const std::string& assignment);
  bool has(const std::string& key) const { return values_.count(key) > 0; }

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  long long get_int(const std::string& key, long long fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  std::string str() const;
  static const std::vector<std::string>& known_keys();

 private:
  std::map<std::string, std::string> values_;
};

// Landmark count defaults to 1 for the ROI stage and 16 for the landmark stage.
TrainConfig train_config_from(const RunConfig& config, Stage stage);
PipelineConfig pipeline_config_from(const RunConfig& config);
PhantomSpec phantom_spec_from(const RunConfig& config);

}  // namespace kneemark
