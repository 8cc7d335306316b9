#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dentalx/evaluation.hpp"
#include "dentalx/image.hpp"
#include "dentalx/synthetic.hpp"

namespace dentalx {

// (X_i, Y_i): radiograph with disease boxes only.
struct DetectionSample {
  std::string id;
  GrayImage image;
  std::vector<GroundTruthBox> targets;
};

// (U_i, V_i): radiograph with an anatomy mask only.
struct SegmentationSample {
  std::string id;
  GrayImage image;
  LabelMask mask;
};

struct Corpus {
  std::vector<DetectionSample> detection;
  std::vector<SegmentationSample> segmentation;
  int width = 0;
  int height = 0;
  int num_disease_classes = 0;

  bool empty() const { return detection.empty() && segmentation.empty(); }
};

// Reads every sample listed in a manifest, verifying that annotations only
// reference detection images and that image sizes agree.
Corpus load_corpus(const DatasetManifest& manifest);
Corpus load_corpus(const std::filesystem::path& manifest_path);

// Same samples export_dataset() would write for (n_det, n_seg, seed, config),
// kept in memory.
Corpus synthesize_corpus(int n_detection, int n_segmentation, std::uint64_t seed, const GeneratorConfig& config);

}  // namespace dentalx
