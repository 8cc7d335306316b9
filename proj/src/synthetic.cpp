#include "dentalx/synthetic.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numbers>
#include <optional>
#include <cstdio>
#include <random>

#include "dentalx/errors.hpp"
#include "dentalx/taxonomy.hpp"

namespace dentalx {
namespace {

using Rng = std::mt19937_64;

double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }
int uniform_int(Rng& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

struct Tooth {
  double cx = 0;
  double cej = 0;           // cemento-enamel junction height
  double half_width = 0;    // crown semi-axis
  double crown_height = 0;  // crown semi-axis above the CEJ
  double enamel_top = 0;
  double enamel_side = 0;
  double root_length = 0;
  double apex_half_width = 0;
  bool implant = false;
};

struct Layout {
  double crest_base = 0, crest_amp = 0, crest_freq = 0, crest_phase = 0;
  std::vector<Tooth> teeth;

  double crest(double x, int width) const {
    return crest_base + crest_amp * std::sin(2 * std::numbers::pi * crest_freq * x / width + crest_phase);
  }
};

double sq(double v) { return v * v; }

Anatomy tooth_label(const Tooth& t, double px, double py, Anatomy current) {
  const double dx = px - t.cx;
  if (t.implant) {
    const double top = t.cej;
    const double bottom = t.cej + t.root_length;
    if (py < top || py > bottom) return current;
    const double f = (py - top) / t.root_length;
    const double hw = t.half_width * (0.55 - 0.2 * std::max(0.0, f - 0.7) / 0.3);
    return std::abs(dx) <= hw ? Anatomy::kImplant : current;
  }
  Anatomy label = current;
  if (py <= t.cej) {
    const double dy = py - t.cej;
    if (sq(dx / t.half_width) + sq(dy / t.crown_height) <= 1.0) {
      const bool inner = sq(dx / (t.half_width - t.enamel_side)) + sq(dy / (t.crown_height - t.enamel_top)) <= 1.0;
      label = inner ? Anatomy::kDentin : Anatomy::kEnamel;
      if (sq(dx / (t.half_width * 0.32)) + sq(dy / (t.crown_height * 0.42)) <= 1.0) label = Anatomy::kPulp;
    }
  } else if (py <= t.cej + t.root_length) {
    const double f = (py - t.cej) / t.root_length;
    const double hw = (t.half_width - 0.5 * t.enamel_side) * (1 - f) + t.apex_half_width * f;
    if (std::abs(dx) <= hw) {
      label = Anatomy::kRootDentin;
      const double canal_len = 0.85 * t.root_length;
      if (py - t.cej <= canal_len) {
        const double g = (py - t.cej) / canal_len;
        const double canal_hw = t.half_width * 0.32 * (1 - g) + 0.8 * g;
        if (std::abs(dx) <= canal_hw) label = Anatomy::kPulp;
      }
    }
  }
  return label;
}

Layout draw_layout(Rng& rng, const GeneratorConfig& cfg) {
  const double w = cfg.width, h = cfg.height;
  Layout layout;
  layout.crest_base = h * uniform(rng, 0.54, 0.6);
  layout.crest_amp = h * uniform(rng, 0.01, 0.025);
  layout.crest_freq = uniform(rng, 0.5, 1.5);
  layout.crest_phase = uniform(rng, 0, 2 * std::numbers::pi);
  const int n = uniform_int(rng, cfg.min_teeth, cfg.max_teeth);
  const double slot = w / n;
  for (int i = 0; i < n; ++i) {
    Tooth t;
    t.cx = slot * (i + 0.5) + slot * uniform(rng, -0.05, 0.05);
    t.half_width = slot * uniform(rng, 0.3, 0.36);
    t.crown_height = h * uniform(rng, 0.2, 0.24);
    t.enamel_top = t.crown_height * uniform(rng, 0.3, 0.36);
    t.enamel_side = std::max(2.0, t.half_width * uniform(rng, 0.26, 0.32));
    t.root_length = h * uniform(rng, 0.26, 0.31);
    t.apex_half_width = std::max(1.5, t.half_width * 0.22);
    t.cej = layout.crest(t.cx, cfg.width) - h * uniform(rng, 0.02, 0.04);
    t.implant = uniform(rng, 0, 1) < cfg.implant_probability;
    layout.teeth.push_back(t);
  }
  return layout;
}

LabelMask paint_mask(const Layout& layout, const GeneratorConfig& cfg) {
  LabelMask mask(cfg.width, cfg.height, static_cast<std::uint8_t>(Anatomy::kBackground));
  for (int y = 0; y < cfg.height; ++y) {
    for (int x = 0; x < cfg.width; ++x) {
      const double px = x + 0.5, py = y + 0.5;
      Anatomy label = py >= layout.crest(px, cfg.width) ? Anatomy::kBone : Anatomy::kBackground;
      for (const auto& t : layout.teeth) label = tooth_label(t, px, py, label);
      mask.at(x, y) = static_cast<std::uint8_t>(label);
    }
  }
  return mask;
}

double allowed_coverage(const Box& box, int class_id, const LabelMask& mask, const DiseaseRuleTable& rules) {
  return 1.0 - forbidden_coverage(box, class_id, mask, rules);
}

bool box_inside(const Box& b, const GeneratorConfig& cfg) {
  return b.x1 >= 0 && b.y1 >= 0 && b.x2 <= cfg.width && b.y2 <= cfg.height && b.valid();
}

Box centered_box(double cx, double cy, double w, double h) {
  const double x1 = std::round(cx - w / 2), y1 = std::round(cy - h / 2);
  return {x1, y1, x1 + std::max(2.0, std::round(w)), y1 + std::max(2.0, std::round(h))};
}

std::vector<std::pair<int, int>> pixels_with(const LabelMask& mask, Anatomy label, double max_y) {
  std::vector<std::pair<int, int>> out;
  for (int y = 0; y < mask.height && y < max_y; ++y)
    for (int x = 0; x < mask.width; ++x)
      if (mask.at(x, y) == static_cast<std::uint8_t>(label)) out.emplace_back(x, y);
  return out;
}

// Proposes a box for a disease template; nullopt when the scene cannot host it.
std::optional<DiseasePlacement> propose(Rng& rng, DiseaseTemplate tmpl, const Layout& layout, const LabelMask& mask,
                                        const GeneratorConfig& cfg) {
  const double s = cfg.height * uniform(rng, 0.075, 0.1);
  auto natural = std::vector<const Tooth*>{};
  auto implants = std::vector<const Tooth*>{};
  for (const auto& t : layout.teeth) (t.implant ? implants : natural).push_back(&t);

  auto pick = [&](const std::vector<const Tooth*>& v) { return v[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(v.size()) - 1))]; };
  DiseasePlacement p;
  switch (tmpl) {
    case DiseaseTemplate::kCalculus: {
      if (natural.empty()) return std::nullopt;
      const Tooth& t = *pick(natural);
      const double theta = uniform(rng, 0.35, 1.2) * (uniform(rng, 0, 1) < 0.5 ? -1 : 1);
      const double cx = t.cx + t.half_width * std::sin(theta);
      const double cy = t.cej - t.crown_height * std::cos(theta);
      p.anchor = static_cast<int>(Anatomy::kEnamel);
      p.box = centered_box(cx, cy, s * 0.8, s * 0.8);
      break;
    }
    case DiseaseTemplate::kCariesEnamel:
    case DiseaseTemplate::kCariesDentin: {
      if (natural.empty()) return std::nullopt;
      const bool enamel = tmpl == DiseaseTemplate::kCariesEnamel;
      const Tooth& t = *pick(natural);
      const double max_y = enamel ? t.cej - t.crown_height * 0.45 : t.cej;
      auto px = pixels_with(mask, enamel ? Anatomy::kEnamel : Anatomy::kDentin, max_y);
      std::erase_if(px, [&](const auto& q) { return std::abs(q.first + 0.5 - t.cx) > t.half_width; });
      if (px.empty()) return std::nullopt;
      const auto [x, y] = px[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(px.size()) - 1))];
      p.anchor = static_cast<int>(enamel ? Anatomy::kEnamel : Anatomy::kDentin);
      p.box = enamel ? centered_box(x + 0.5, y + 0.5, s, std::min(s * 0.8, t.enamel_top))
                     : centered_box(x + 0.5, y + 0.5, s * 0.8, s * 0.8);
      break;
    }
    case DiseaseTemplate::kBoneLoss:
    case DiseaseTemplate::kPeriImplantBoneLoss: {
      const auto& pool = tmpl == DiseaseTemplate::kBoneLoss ? natural : implants;
      if (pool.empty()) return std::nullopt;
      const Tooth& t = *pick(pool);
      const double side = uniform(rng, 0, 1) < 0.5 ? -1 : 1;
      const double reach = t.implant ? t.half_width * 0.55 : t.half_width * 0.9;
      const double cx = t.cx + side * (reach + s * 0.2);
      const double cy = layout.crest(cx, cfg.width) + s * uniform(rng, 0.1, 0.35);
      p.anchor = static_cast<int>(Anatomy::kBone);
      p.box = centered_box(cx, cy, s * 0.9, s * 1.2);
      break;
    }
    case DiseaseTemplate::kPeriapicalLesion: {
      if (natural.empty()) return std::nullopt;
      const Tooth& t = *pick(natural);
      const double cy = t.cej + t.root_length + s * uniform(rng, 0.0, 0.3);
      p.anchor = static_cast<int>(Anatomy::kBone);
      p.box = centered_box(t.cx + uniform(rng, -1.5, 1.5), cy, s * 1.2, s * 1.2);
      break;
    }
  }
  return p;
}

double base_intensity(Anatomy a) {
  switch (a) {
    case Anatomy::kBackground: return 0.08;
    case Anatomy::kEnamel: return 0.86;
    case Anatomy::kDentin: return 0.68;
    case Anatomy::kRootDentin: return 0.62;
    case Anatomy::kPulp: return 0.3;
    case Anatomy::kBone: return 0.45;
    case Anatomy::kImplant: return 0.97;
  }
  return 0.0;
}

GrayImage render(Rng& rng, const LabelMask& mask, const std::vector<DiseasePlacement>& diseases,
                 const GeneratorConfig& cfg) {
  const int w = cfg.width, h = cfg.height;
  const double gx = uniform(rng, -cfg.gradient_strength, cfg.gradient_strength);
  const double gy = uniform(rng, -cfg.gradient_strength, cfg.gradient_strength);
  const double ph1 = uniform(rng, 0, 2 * std::numbers::pi), ph2 = uniform(rng, 0, 2 * std::numbers::pi);
  std::vector<double> field(static_cast<std::size_t>(w) * h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const auto label = static_cast<Anatomy>(mask.at(x, y));
      double v = base_intensity(label);
      if (label == Anatomy::kBone) v += 0.05 * std::sin(x * 0.45 + ph1) * std::sin(y * 0.38 + ph2);
      v += gx * (static_cast<double>(x) / w - 0.5) + gy * (static_cast<double>(y) / h - 0.5);
      field[static_cast<std::size_t>(y) * w + x] = v;
    }
  }
  for (const auto& d : diseases) {
    const double cx = (d.box.x1 + d.box.x2) / 2, cy = (d.box.y1 + d.box.y2) / 2;
    const double rx = d.box.width() / 2, ry = d.box.height() / 2;
    const bool bright = disease_template(d.class_id) == DiseaseTemplate::kCalculus;
    for (int y = std::max(0, static_cast<int>(d.box.y1)); y < std::min(h, static_cast<int>(d.box.y2)); ++y) {
      for (int x = std::max(0, static_cast<int>(d.box.x1)); x < std::min(w, static_cast<int>(d.box.x2)); ++x) {
        const double r2 = sq((x + 0.5 - cx) / rx) + sq((y + 0.5 - cy) / ry);
        const double g = std::pow(std::clamp(1.0 - r2, 0.0, 1.0), 0.6);
        double& v = field[static_cast<std::size_t>(y) * w + x];
        v = bright ? v + (1.0 - v) * cfg.lesion_contrast * 1.4 * g : v * (1.0 - cfg.lesion_contrast * g);
      }
    }
  }
  GrayImage image(w, h);
  std::normal_distribution<double> noise(0.0, cfg.noise_sigma);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0;
      int n = 0;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const int xx = x + dx, yy = y + dy;
          if (xx < 0 || yy < 0 || xx >= w || yy >= h) continue;
          acc += field[static_cast<std::size_t>(yy) * w + xx];
          ++n;
        }
      const double v = acc / n + noise(rng);
      image.at(x, y) = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
    }
  }
  return image;
}

std::optional<Scene> try_generate(std::uint64_t seed, const GeneratorConfig& cfg, const DiseaseRuleTable& rules) {
  Rng rng(seed);
  const Layout layout = draw_layout(rng, cfg);
  Scene scene;
  scene.mask = paint_mask(layout, cfg);
  const int k = uniform_int(rng, cfg.min_diseases, cfg.max_diseases);
  constexpr int kPlacementTries = 24;
  for (int i = 0; i < k; ++i) {
    bool placed = false;
    for (int attempt = 0; attempt < kPlacementTries && !placed; ++attempt) {
      const int class_id = uniform_int(rng, 0, cfg.num_disease_classes - 1);
      auto p = propose(rng, disease_template(class_id), layout, scene.mask, cfg);
      if (!p) continue;
      p->class_id = class_id;
      if (!box_inside(p->box, cfg)) continue;
      if (allowed_coverage(p->box, class_id, scene.mask, rules) < cfg.min_rule_coverage) continue;
      const bool overlaps = std::any_of(scene.diseases.begin(), scene.diseases.end(), [&](const auto& o) {
        return box_iou(o.box, p->box) > 0.0;
      });
      if (overlaps) continue;
      scene.diseases.push_back(*p);
      placed = true;
    }
    if (!placed) return std::nullopt;
  }
  scene.image = render(rng, scene.mask, scene.diseases, cfg);
  return scene;
}

nlohmann::json entry_to_json(const ManifestEntry& e) {
  nlohmann::json j{{"id", e.id}, {"task", to_string(e.task)}, {"image", e.image}, {"image_sha256", e.image_sha256}};
  if (e.task == Task::kSegmentation) {
    j["mask"] = e.mask;
    j["mask_sha256"] = e.mask_sha256;
  }
  return j;
}

}  // namespace

void GeneratorConfig::validate() const {
  if (width < 32 || height < 32) throw ConfigError("generator: image must be at least 32x32");
  if (min_teeth < 1 || max_teeth < min_teeth) throw ConfigError("generator: invalid tooth count range");
  if (min_diseases < 0 || max_diseases < min_diseases) throw ConfigError("generator: invalid disease count range");
  if (num_disease_classes < 1) throw ConfigError("generator: need at least one disease class");
  if (implant_probability < 0 || implant_probability > 1) throw ConfigError("generator: implant probability");
  if (noise_sigma < 0) throw ConfigError("generator: noise_sigma must be non-negative");
  if (min_rule_coverage <= 0 || min_rule_coverage > 1) throw ConfigError("generator: min_rule_coverage");
  if (max_retries < 1) throw ConfigError("generator: max_retries must be positive");
}

nlohmann::json GeneratorConfig::to_json() const {
  return {{"width", width},
          {"height", height},
          {"min_teeth", min_teeth},
          {"max_teeth", max_teeth},
          {"min_diseases", min_diseases},
          {"max_diseases", max_diseases},
          {"num_disease_classes", num_disease_classes},
          {"implant_probability", implant_probability},
          {"noise_sigma", noise_sigma},
          {"gradient_strength", gradient_strength},
          {"lesion_contrast", lesion_contrast},
          {"min_rule_coverage", min_rule_coverage},
          {"max_retries", max_retries}};
}

GeneratorConfig GeneratorConfig::from_json(const nlohmann::json& j) {
  GeneratorConfig c;
  c.width = j.value("width", c.width);
  c.height = j.value("height", c.height);
  c.min_teeth = j.value("min_teeth", c.min_teeth);
  c.max_teeth = j.value("max_teeth", c.max_teeth);
  c.min_diseases = j.value("min_diseases", c.min_diseases);
  c.max_diseases = j.value("max_diseases", c.max_diseases);
  c.num_disease_classes = j.value("num_disease_classes", c.num_disease_classes);
  c.implant_probability = j.value("implant_probability", c.implant_probability);
  c.noise_sigma = j.value("noise_sigma", c.noise_sigma);
  c.gradient_strength = j.value("gradient_strength", c.gradient_strength);
  c.lesion_contrast = j.value("lesion_contrast", c.lesion_contrast);
  c.min_rule_coverage = j.value("min_rule_coverage", c.min_rule_coverage);
  c.max_retries = j.value("max_retries", c.max_retries);
  c.validate();
  return c;
}

std::vector<GroundTruthBox> Scene::targets() const {
  std::vector<GroundTruthBox> out;
  for (const auto& d : diseases) out.push_back({d.box, d.class_id});
  return out;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

Scene generate_scene(std::uint64_t seed, const GeneratorConfig& config) {
  config.validate();
  const auto rules = DiseaseRuleTable::defaults(config.num_disease_classes);
  for (int attempt = 0; attempt < config.max_retries; ++attempt) {
    const std::uint64_t sub_seed = attempt == 0 ? seed : mix_seed(seed, static_cast<std::uint64_t>(attempt));
    if (auto scene = try_generate(sub_seed, config, rules)) {
      scene->seed = seed;
      scene->attempts = attempt + 1;
      return std::move(*scene);
    }
  }
  throw DataError("generate_scene: no feasible layout for seed " + std::to_string(seed) + " after " +
                  std::to_string(config.max_retries) + " attempts");
}

std::uint64_t sample_seed(std::uint64_t seed, Task task, int index) {
  const std::uint64_t base = task == Task::kDetection ? 0x100000000ULL : 0x200000000ULL;
  return mix_seed(seed, base + static_cast<std::uint64_t>(index));
}

std::string to_string(Task task) { return task == Task::kDetection ? "detection" : "segmentation"; }

Task task_from_string(const std::string& s) {
  if (s == "detection") return Task::kDetection;
  if (s == "segmentation") return Task::kSegmentation;
  throw DataError("unknown task tag '" + s + "'");
}

nlohmann::json DatasetManifest::to_json() const {
  nlohmann::json samples = nlohmann::json::array();
  for (const auto& e : entries) samples.push_back(entry_to_json(e));
  return {{"format", "dentalx-manifest-1"},
          {"split", split},
          {"seed", seed},
          {"config_hash", config_hash},
          {"generator", generator.to_json()},
          {"annotations", annotations},
          {"samples", samples}};
}

DatasetManifest DatasetManifest::from_json(const nlohmann::json& j) {
  DatasetManifest m;
  try {
    m.split = j.at("split").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.config_hash = j.at("config_hash").get<std::string>();
    m.generator = GeneratorConfig::from_json(j.at("generator"));
    m.annotations = j.at("annotations").get<std::string>();
    for (const auto& s : j.at("samples")) {
      ManifestEntry e;
      e.id = s.at("id").get<std::string>();
      e.task = task_from_string(s.at("task").get<std::string>());
      e.image = s.at("image").get<std::string>();
      e.image_sha256 = s.value("image_sha256", "");
      if (e.task == Task::kSegmentation) {
        e.mask = s.at("mask").get<std::string>();
        e.mask_sha256 = s.value("mask_sha256", "");
      } else if (s.contains("mask")) {
        throw DataError("detection sample '" + e.id + "' carries a mask");
      }
      m.entries.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& ex) {
    throw DataError(std::string("malformed manifest: ") + ex.what());
  }
  return m;
}

std::size_t DatasetManifest::count(Task task) const {
  return static_cast<std::size_t>(
      std::count_if(entries.begin(), entries.end(), [&](const ManifestEntry& e) { return e.task == task; }));
}

DatasetManifest export_dataset(int n_detection, int n_segmentation, std::uint64_t seed,
                               const std::filesystem::path& out_dir, const GeneratorConfig& config,
                               const std::string& split) {
  namespace fs = std::filesystem;
  if (n_detection < 0 || n_segmentation < 0) throw ConfigError("export_dataset: counts must be non-negative");
  config.validate();
  std::error_code ec;
  fs::create_directories(out_dir / "images", ec);
  fs::create_directories(out_dir / "masks", ec);
  if (ec || !fs::is_directory(out_dir)) throw DataError("cannot create output directory " + out_dir.string());

  DatasetManifest manifest;
  manifest.split = split;
  manifest.seed = seed;
  manifest.generator = config;
  const std::string config_text = config.to_json().dump();
  manifest.config_hash = sha256_hex(config_text.data(), config_text.size());
  manifest.annotations = "annotations.json";

  nlohmann::json images = nlohmann::json::array();
  nlohmann::json annotations = nlohmann::json::array();
  nlohmann::json categories = nlohmann::json::array();
  const auto names = disease_names(config.num_disease_classes);
  for (int c = 0; c < config.num_disease_classes; ++c)
    categories.push_back({{"id", c}, {"name", names[static_cast<std::size_t>(c)]}});

  auto emit = [&](Task task, int index) {
    const Scene scene = generate_scene(sample_seed(seed, task, index), config);
    char id_buf[32];
    std::snprintf(id_buf, sizeof id_buf, "%s_%05d", task == Task::kDetection ? "det" : "seg", index);
    ManifestEntry e;
    e.id = id_buf;
    e.task = task;
    e.image = "images/" + e.id + ".png";
    write_gray_png(out_dir / e.image, scene.image);
    e.image_sha256 = sha256_file(out_dir / e.image);
    if (task == Task::kSegmentation) {
      e.mask = "masks/" + e.id + ".png";
      write_indexed_png(out_dir / e.mask, scene.mask, anatomy_palette());
      e.mask_sha256 = sha256_file(out_dir / e.mask);
    } else {
      images.push_back({{"id", e.id}, {"file", e.image}, {"w", config.width}, {"h", config.height}});
      for (const auto& d : scene.diseases)
        annotations.push_back(
            {{"image_id", e.id}, {"class_id", d.class_id}, {"box", {d.box.x1, d.box.y1, d.box.x2, d.box.y2}}});
    }
    manifest.entries.push_back(std::move(e));
  };
  for (int i = 0; i < n_detection; ++i) emit(Task::kDetection, i);
  for (int i = 0; i < n_segmentation; ++i) emit(Task::kSegmentation, i);

  const nlohmann::json ann{{"images", images}, {"annotations", annotations}, {"categories", categories}};
  {
    std::ofstream out(out_dir / manifest.annotations);
    if (!out) throw DataError("cannot write annotations in " + out_dir.string());
    out << ann.dump(1) << '\n';
  }
  manifest.path = out_dir / "manifest.json";
  std::ofstream out(manifest.path);
  if (!out) throw DataError("cannot write manifest in " + out_dir.string());
  out << manifest.to_json().dump(1) << '\n';
  return manifest;
}

DatasetManifest load_manifest(const std::filesystem::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw DataError("manifest not found: " + manifest_path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& ex) {
    throw DataError("manifest is not valid JSON: " + std::string(ex.what()));
  }
  DatasetManifest m = DatasetManifest::from_json(j);
  m.path = manifest_path;
  const auto root = manifest_path.parent_path();
  for (const auto& e : m.entries) {
    if (!std::filesystem::exists(root / e.image)) throw DataError("manifest lists missing image " + e.image);
    if (e.task == Task::kSegmentation && !std::filesystem::exists(root / e.mask))
      throw DataError("manifest lists missing mask " + e.mask);
  }
  return m;
}

std::string sha256_hex(const void* data, std::size_t size) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  if (EVP_Digest(data, size, digest.data(), &len, EVP_sha256(), nullptr) != 1) throw DataError("sha256 failed");
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xF]);
  }
  return out;
}

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return sha256_hex(bytes.data(), bytes.size());
}

}  // namespace dentalx
