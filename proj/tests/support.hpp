#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "dentalx/config.hpp"
#include "dentalx/dataset.hpp"
#include "dentalx/synthetic.hpp"

namespace testing {

// 64x64 input, every width scaled down to a handful of channels.
inline dentalx::ModelConfig tiny_config(bool use_context = true) {
  dentalx::ModelConfig c;
  c.num_disease_classes = 3;
  c.input_height = c.input_width = 64;
  c.width_multiplier = 1.0 / 32.0;
  c.depth_multiplier = 1.0 / 3.0;
  c.use_context = use_context;
  c.seed = 3;
  return c;
}

inline dentalx::GeneratorConfig tiny_generator() {
  dentalx::GeneratorConfig g;
  g.width = g.height = 64;
  g.min_teeth = 1;
  g.max_teeth = 2;
  g.num_disease_classes = 3;
  return g;
}

inline dentalx::Corpus tiny_corpus(int n_det, int n_seg, std::uint64_t seed = 11) {
  return dentalx::synthesize_corpus(n_det, n_seg, seed, tiny_generator());
}

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("dentalx_" + tag + "_" + std::to_string(rd()));
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

}  // namespace testing
