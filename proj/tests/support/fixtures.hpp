#pragma once

#include <filesystem>
#include <fstream>
#include <iterator>
#include <numeric>
#include <string>
#include <vector>

#include "kneemark/phantom.hpp"
#include "kneemark/samples.hpp"
#include "kneemark/training.hpp"

namespace kneemark::testing {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("kneemark_" + tag + "_" + std::to_string(std::random_device{}()));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream(path, std::ios::binary | std::ios::trunc) << text;
}

// Small, quick phantom corpus: 0.6 mm spacing keeps the 140 mm crop at 233 px.
inline PhantomSpec small_phantoms(int count, std::uint64_t seed, bool bilateral = false) {
  PhantomSpec spec;
  spec.side = 240;
  spec.spacing = 0.6;
  spec.count = count;
  spec.seed = seed;
  spec.bilateral = bilateral;
  return spec;
}

inline ModelConfig tiny_model(int side, int landmarks = kKneeLandmarks) {
  ModelConfig m;
  m.width = 4;
  m.depth = 1;
  m.input_side = side;
  m.landmarks = landmarks;
  return m;
}

inline TrainConfig tiny_training(int side, int epochs) {
  TrainConfig c;
  c.model = tiny_model(side);
  c.sampling.input_side = side;
  c.sampling.landmark_spacing = 0.6;
  c.epochs = epochs;
  c.batch = 4;
  c.seed = 5;
  return c;
}

inline std::vector<Sample> landmark_samples(const PhantomCorpus& corpus, const SamplingOptions& options) {
  ImageCache cache(corpus.images);
  std::vector<int> all(corpus.records.size());
  std::iota(all.begin(), all.end(), 0);
  return prepare_samples(corpus.records, all, cache, Stage::kLandmarks, options);
}

}  // namespace kneemark::testing
