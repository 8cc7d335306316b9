#include "dentalx/dataset.hpp"

#include <cstdio>
#include <fstream>
#include <map>
#include <set>

#include "dentalx/errors.hpp"
#include "dentalx/taxonomy.hpp"

namespace dentalx {

Corpus load_corpus(const DatasetManifest& manifest) {
  const auto root = manifest.path.parent_path();
  Corpus corpus;
  corpus.width = manifest.generator.width;
  corpus.height = manifest.generator.height;
  corpus.num_disease_classes = manifest.generator.num_disease_classes;

  std::map<std::string, std::vector<GroundTruthBox>> boxes;
  if (manifest.count(Task::kDetection) > 0) {
    std::ifstream in(root / manifest.annotations);
    if (!in) throw DataError("missing detection annotations " + manifest.annotations);
    nlohmann::json ann;
    try {
      in >> ann;
      for (const auto& a : ann.at("annotations")) {
        const auto b = a.at("box").get<std::vector<double>>();
        if (b.size() != 4) throw DataError("annotation box must have 4 coordinates");
        GroundTruthBox g{{b[0], b[1], b[2], b[3]}, a.at("class_id").get<int>()};
        if (!g.box.valid()) throw DataError("degenerate annotation box");
        if (g.class_id < 0 || g.class_id >= corpus.num_disease_classes) throw DataError("annotation class out of range");
        boxes[a.at("image_id").get<std::string>()].push_back(g);
      }
    } catch (const nlohmann::json::exception& ex) {
      throw DataError(std::string("malformed annotations: ") + ex.what());
    }
  }

  std::set<std::string> seen;
  for (const auto& e : manifest.entries) {
    if (!seen.insert(e.id).second) throw DataError("duplicate sample id " + e.id);
    GrayImage image = read_png(root / e.image);
    if (image.width != corpus.width || image.height != corpus.height)
      throw DataError("image " + e.image + " does not match the manifest size");
    if (e.task == Task::kDetection) {
      auto it = boxes.find(e.id);
      DetectionSample s{e.id, std::move(image), it == boxes.end() ? std::vector<GroundTruthBox>{} : it->second};
      if (it != boxes.end()) boxes.erase(it);
      corpus.detection.push_back(std::move(s));
    } else {
      LabelMask mask = read_png(root / e.mask);
      if (mask.width != image.width || mask.height != image.height)
        throw DataError("mask " + e.mask + " does not match its image");
      for (auto v : mask.data)
        if (v > kNamedAnatomyClasses) throw DataError("mask " + e.mask + " holds an unknown label");
      corpus.segmentation.push_back({e.id, std::move(image), std::move(mask)});
    }
  }
  if (!boxes.empty())
    throw DataError("annotations reference image '" + boxes.begin()->first + "' that is not a detection sample");
  return corpus;
}

Corpus load_corpus(const std::filesystem::path& manifest_path) { return load_corpus(load_manifest(manifest_path)); }

Corpus synthesize_corpus(int n_detection, int n_segmentation, std::uint64_t seed, const GeneratorConfig& config) {
  config.validate();
  Corpus corpus;
  corpus.width = config.width;
  corpus.height = config.height;
  corpus.num_disease_classes = config.num_disease_classes;
  char id[32];
  for (int i = 0; i < n_detection; ++i) {
    Scene s = generate_scene(sample_seed(seed, Task::kDetection, i), config);
    std::snprintf(id, sizeof id, "det_%05d", i);
    corpus.detection.push_back({id, std::move(s.image), s.targets()});
  }
  for (int i = 0; i < n_segmentation; ++i) {
    Scene s = generate_scene(sample_seed(seed, Task::kSegmentation, i), config);
    std::snprintf(id, sizeof id, "seg_%05d", i);
    corpus.segmentation.push_back({id, std::move(s.image), std::move(s.mask)});
  }
  return corpus;
}

}  // namespace dentalx
