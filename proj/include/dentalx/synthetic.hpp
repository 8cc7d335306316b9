#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dentalx/evaluation.hpp"
#include "dentalx/image.hpp"
#include "json.hpp"

namespace dentalx {

// Procedural generator of toy radiograph scenes. Anatomy is painted in layers
// (background, bone, root dentin, dentin, enamel shell, pulp, implant) and
// disease boxes are placed only where the default rule table allows them.
struct GeneratorConfig {
  int width = 128;
  int height = 128;
  int min_teeth = 2;
  int max_teeth = 3;
  int min_diseases = 1;
  int max_diseases = 4;
  int num_disease_classes = 6;
  double implant_probability = 0.35;
  double noise_sigma = 0.03;
  double gradient_strength = 0.08;
  double lesion_contrast = 0.45;
  double min_rule_coverage = 0.8;
  int max_retries = 32;

  void validate() const;
  nlohmann::json to_json() const;
  static GeneratorConfig from_json(const nlohmann::json& j);
};

struct DiseasePlacement {
  int class_id = 0;
  int anchor = 0;  // anatomy label the lesion is centred on
  Box box;
};

struct Scene {
  GrayImage image;
  LabelMask mask;
  std::vector<DiseasePlacement> diseases;
  std::uint64_t seed = 0;
  int attempts = 1;

  std::vector<GroundTruthBox> targets() const;
};

// Deterministic in (seed, config). Infeasible layouts are redrawn from derived
// sub-seeds up to config.max_retries times.
Scene generate_scene(std::uint64_t seed, const GeneratorConfig& config);

// SplitMix64 finalizer; used to derive per-sample seeds.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

enum class Task { kDetection, kSegmentation };

// Seed of the index-th sample of a task within a corpus generated from seed.
std::uint64_t sample_seed(std::uint64_t seed, Task task, int index);

std::string to_string(Task task);
Task task_from_string(const std::string& s);

struct ManifestEntry {
  std::string id;
  Task task = Task::kDetection;
  std::string image;  // relative to the manifest directory
  std::string mask;   // segmentation samples only
  std::string image_sha256;
  std::string mask_sha256;
};

struct DatasetManifest {
  std::string split;
  std::uint64_t seed = 0;
  std::string config_hash;
  GeneratorConfig generator;
  std::string annotations;  // detection annotation file, relative
  std::vector<ManifestEntry> entries;
  std::filesystem::path path;  // where the manifest was written or read

  nlohmann::json to_json() const;
  static DatasetManifest from_json(const nlohmann::json& j);
  std::size_t count(Task task) const;
};

// Writes n_detection box-annotated and n_segmentation mask-annotated images
// into out_dir, plus annotations.json and manifest.json. Image sets are
// disjoint by construction.
DatasetManifest export_dataset(int n_detection, int n_segmentation, std::uint64_t seed,
                               const std::filesystem::path& out_dir, const GeneratorConfig& config = {},
                               const std::string& split = "train");

DatasetManifest load_manifest(const std::filesystem::path& manifest_path);

std::string sha256_hex(const void* data, std::size_t size);
std::string sha256_file(const std::filesystem::path& path);

}  // namespace dentalx
