#include "cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include <torch/torch.h>

#include "CLI11.hpp"
#include "dentalx/ablation.hpp"
#include "dentalx/checkpoint.hpp"
#include "dentalx/errors.hpp"
#include "dentalx/inference.hpp"
#include "dentalx/synthetic.hpp"
#include "dentalx/training.hpp"

namespace dentalx::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Relative data paths resolve under $DENTALX_DATA_ROOT when it is set.
fs::path data_path(const std::string& path) {
  const char* root = std::getenv("DENTALX_DATA_ROOT");
  fs::path p(path);
  if (root && *root && p.is_relative()) return fs::path(root) / p;
  return p;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

// Config file first, then --set overrides, then dedicated flags.
struct ConfigSources {
  std::string config_file;
  std::vector<std::string> overrides;
  std::vector<std::pair<std::string, std::string>> flags;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--config", config_file, "TOML-style run config");
    cmd->add_option("--set", overrides, "Override a config key, e.g. --set train.lr=0.01");
  }

  RunConfig resolve() const {
    RunConfig cfg;
    if (!config_file.empty()) {
      std::string text;
      try {
        text = read_text(config_file);
      } catch (const DataError& e) {
        throw ConfigError(e.what());
      }
      for (const auto& [key, value] : parse_config_text(text)) cfg.set(key, value);
    }
    for (const auto& item : overrides) {
      const auto eq = item.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + item + "'");
      cfg.set(item.substr(0, eq), item.substr(eq + 1));
    }
    for (const auto& [key, value] : flags) cfg.set(key, value);
    cfg.validate();
    return cfg;
  }
};

// Registers a flag whose value, when given, becomes a config override.
void flag(CLI::App* cmd, ConfigSources& sources, const std::string& name, const std::string& key,
          const std::string& help) {
  cmd->add_option_function<std::string>(
      name, [&sources, key](const std::string& v) { sources.flags.emplace_back(key, v); }, help);
}

void print_effective_config(std::ostream& out, const RunConfig& cfg) {
  out << "# effective config\n" << cfg.to_text() << "# end config\n";
}

// ---------------------------------------------------------------- generate-data

struct GenerateArgs {
  int det = -1;
  int seg = -1;
  std::uint64_t seed = 0;
  std::string out;
  std::string split = "train";
  int size = 128;
  int classes = 6;
};

int cmd_generate_data(const GenerateArgs& a, std::ostream& out) {
  if (a.det < 0 || a.seg < 0) throw ConfigError("--det and --seg must be >= 0");
  if (a.det == 0 && a.seg == 0) throw DataError("empty corpus: --det and --seg are both 0");
  GeneratorConfig gen;
  gen.width = gen.height = a.size;
  gen.num_disease_classes = a.classes;
  gen.validate();
  const fs::path dir = data_path(a.out);
  const auto manifest = export_dataset(a.det, a.seg, a.seed, dir, gen, a.split);
  write_text(dir / "rules.json", DiseaseRuleTable::defaults(a.classes).to_json(a.classes).dump(2) + "\n");
  const fs::path manifest_path = dir / "manifest.json";
  out << "manifest: " << manifest_path.string() << "\n"
      << "split: " << manifest.split << "\n"
      << "detection samples: " << manifest.count(Task::kDetection) << "\n"
      << "segmentation samples: " << manifest.count(Task::kSegmentation) << "\n"
      << "seed: " << manifest.seed << "\n"
      << "config_hash: " << manifest.config_hash << "\n"
      << "manifest_sha256: " << sha256_file(manifest_path) << "\n";
  return kOk;
}

// ------------------------------------------------------------------------ train

struct TrainArgs {
  ConfigSources config;
  std::string resume;
  int threads = 1;
  int log_every = 50;
};

int cmd_train(const TrainArgs& a, std::ostream& out) {
  const RunConfig cfg = a.config.resolve();
  if (cfg.train_manifest.empty()) throw ConfigError("train needs --manifest (or run.train_manifest)");
  torch::set_num_threads(a.threads);
  print_effective_config(out, cfg);

  const Corpus corpus = load_corpus(data_path(cfg.train_manifest));
  const ModelConfig model_config = cfg.effective_model();
  validate_training_setup(model_config, corpus, cfg.mode);

  const fs::path out_dir(cfg.out_dir);
  fs::create_directories(out_dir);
  write_text(out_dir / "effective_config.toml", cfg.to_text());

  auto model = build_model(model_config);
  Trainer trainer(model, corpus, cfg.train, cfg.mode, out_dir);
  if (!a.resume.empty()) {
    trainer.resume(a.resume);
    out << "resumed from " << a.resume << " at step " << trainer.global_step() << "\n";
  }
  out << "mode " << to_string(cfg.mode) << ", " << trainer.total_steps() << " steps, "
      << parameter_count(*model) << " parameters\n";
  trainer.run(-1, [&](const StepLog& log) {
    if (log.step % a.log_every == 0 || log.step + 1 == trainer.total_steps())
      out << log.to_json().dump() << "\n" << std::flush;
  });
  fs::path checkpoint = trainer.last_checkpoint();
  if (checkpoint.empty()) {
    checkpoint = out_dir / "last.pt";
    trainer.save(checkpoint);
  }
  out << "checkpoint: " << checkpoint.string() << "\n";
  return kOk;
}

// ------------------------------------------------------------------------- eval

struct EvalArgs {
  ConfigSources config;
  std::string checkpoint;
  std::string manifest;
  std::string task;
  std::string filter_rules;
  std::string report;
  std::string pr_curve;
  std::string detections_out;
  std::string masks_out;
  std::string predictions_in;
  std::string pred_masks_in;
  double rule_threshold = 0.5;
  int threads = 1;
};

std::vector<std::vector<Detection>> read_detections_jsonl(const fs::path& path, const Corpus& corpus) {
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < corpus.detection.size(); ++i) index[corpus.detection[i].id] = i;
  std::vector<std::vector<Detection>> result(corpus.detection.size());
  std::istringstream in(read_text(path));
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      const auto it = index.find(j.at("image_id").get<std::string>());
      if (it == index.end()) throw DataError("unknown image_id " + j.at("image_id").dump());
      const auto& b = j.at("box");
      result[it->second].push_back(
          {{b.at(0).get<double>(), b.at(1).get<double>(), b.at(2).get<double>(), b.at(3).get<double>()},
           j.at("class_id").get<int>(),
           j.at("score").get<double>()});
    } catch (const json::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return result;
}

void write_detections_jsonl(const fs::path& path, const Corpus& corpus,
                            const std::vector<std::vector<Detection>>& detections) {
  std::ostringstream out;
  for (std::size_t i = 0; i < detections.size(); ++i)
    for (const auto& d : detections[i])
      out << json{{"image_id", corpus.detection[i].id},
                  {"class_id", d.class_id},
                  {"class_name", disease_name(d.class_id)},
                  {"score", d.score},
                  {"box", {d.box.x1, d.box.y1, d.box.x2, d.box.y2}}}
                 .dump()
          << "\n";
  write_text(path, out.str());
}

void write_pr_curve(const fs::path& path, const APReport& report, const char* stage) {
  std::ostringstream out;
  out << "stage,class_id,class_name,recall,precision\n";
  for (const auto& c : report.per_class)
    for (const auto& p : c.curve_at_50)
      out << stage << ',' << c.class_id << ',' << disease_name(c.class_id) << ',' << p.recall << ',' << p.precision
          << "\n";
  write_text(path, out.str());
}

LabelMask read_mask(const fs::path& path, int width, int height) {
  LabelMask mask = read_png(path);
  if (mask.width != width || mask.height != height) throw DataError("mask " + path.string() + " has the wrong size");
  return mask;
}

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  RunConfig cfg = a.config.resolve();
  torch::set_num_threads(a.threads);
  const std::string manifest = !a.manifest.empty() ? a.manifest : cfg.test_manifest;
  if (manifest.empty()) throw ConfigError("eval needs --manifest (or run.test_manifest)");
  const bool external = !a.predictions_in.empty() || !a.pred_masks_in.empty();
  if (external == !a.checkpoint.empty())
    throw ConfigError("eval needs either --checkpoint or --predictions/--pred-masks");

  std::optional<Checkpoint> ckpt;
  if (!a.checkpoint.empty()) {
    if (!fs::exists(a.checkpoint)) throw DataError("checkpoint not found: " + a.checkpoint);
    ckpt = load_checkpoint(a.checkpoint);
  }

  EvalTask task = EvalTask::kBoth;
  if (!a.task.empty()) {
    task = eval_task_from_string(a.task);
  } else if (ckpt && ckpt->mode) {
    task = !trains_segmentation(*ckpt->mode) ? EvalTask::kDetection
           : !trains_detection(*ckpt->mode)  ? EvalTask::kSegmentation
                                             : EvalTask::kBoth;
  } else if (external) {
    task = a.predictions_in.empty() ? EvalTask::kSegmentation
           : a.pred_masks_in.empty() ? EvalTask::kDetection
                                     : EvalTask::kBoth;
  }
  if (ckpt) check_task_trained(ckpt->mode, task);

  const Corpus corpus = load_corpus(data_path(manifest));
  const int num_classes = ckpt ? ckpt->config.num_disease_classes : std::max(corpus.num_disease_classes, 1);

  std::optional<DiseaseRuleTable> rules;
  if (!a.filter_rules.empty()) {
    try {
      rules = DiseaseRuleTable::from_json(json::parse(read_text(data_path(a.filter_rules))), num_classes);
    } catch (const json::exception& e) {
      throw DataError("rules file " + a.filter_rules + ": " + e.what());
    }
  }

  EvalResult result;
  if (ckpt) {
    if (ckpt->config.input_width != corpus.width || ckpt->config.input_height != corpus.height)
      throw DataError("test images do not match the checkpoint's input size");
    EvalOptions options;
    options.inference = cfg.inference;
    options.task = task;
    options.rules = rules;
    options.rule_threshold = a.rule_threshold;
    result = evaluate(ckpt->model, corpus, options);
  } else {
    if (task != EvalTask::kSegmentation) {
      if (a.predictions_in.empty()) throw ConfigError("detection metrics need --predictions");
      std::vector<std::vector<GroundTruthBox>> truth;
      for (const auto& s : corpus.detection) truth.push_back(s.targets);
      result.detections = read_detections_jsonl(a.predictions_in, corpus);
      result.detection = compute_ap(result.detections, truth, num_classes);
      if (rules) {
        if (a.pred_masks_in.empty()) throw ConfigError("--filter-rules with --predictions needs --pred-masks");
        for (std::size_t i = 0; i < corpus.detection.size(); ++i) {
          const auto anatomy = read_mask(fs::path(a.pred_masks_in) / (corpus.detection[i].id + ".png"), corpus.width,
                                         corpus.height);
          result.filtered_detections.push_back(
              domain_rule_filter(result.detections[i], anatomy, *rules, a.rule_threshold));
        }
        result.detection_filtered = compute_ap(result.filtered_detections, truth, num_classes);
      }
    }
    if (task != EvalTask::kDetection) {
      if (a.pred_masks_in.empty()) throw ConfigError("segmentation metrics need --pred-masks");
      std::vector<LabelMask> truth;
      for (const auto& s : corpus.segmentation) {
        truth.push_back(s.mask);
        result.segmentation_predictions.push_back(
            read_mask(fs::path(a.pred_masks_in) / (s.id + ".png"), corpus.width, corpus.height));
      }
      result.segmentation = compute_seg_metrics(result.segmentation_predictions, truth,
                                                static_cast<int>(Anatomy::kImplant) + 1);
    }
  }

  json report = result.to_json();
  report["manifest"] = manifest;
  report["settings"] = {{"task", task == EvalTask::kDetection ? "det" : task == EvalTask::kSegmentation ? "seg" : "both"},
                        {"score_threshold", cfg.inference.score_threshold},
                        {"nms_iou", cfg.inference.nms_iou},
                        {"rule_threshold", a.rule_threshold},
                        {"filter_rules", a.filter_rules}};
  if (ckpt) report["checkpoint"] = a.checkpoint;
  if (result.detection && result.detection_filtered)
    report["filter_delta_ap50"] = result.detection_filtered->ap50 - result.detection->ap50;
  out << report.dump(2) << "\n";
  if (!a.report.empty()) write_text(a.report, report.dump(2) + "\n");
  if (!a.pr_curve.empty() && result.detection) {
    write_pr_curve(a.pr_curve, *result.detection, "raw");
    if (result.detection_filtered) {
      fs::path filtered = a.pr_curve;
      filtered.replace_filename(filtered.stem().string() + "_filtered" + filtered.extension().string());
      write_pr_curve(filtered, *result.detection_filtered, "filtered");
    }
  }
  if (!a.detections_out.empty() && result.detection) write_detections_jsonl(a.detections_out, corpus, result.detections);
  if (!a.masks_out.empty() && result.segmentation && ckpt) {
    fs::create_directories(a.masks_out);
    for (std::size_t i = 0; i < corpus.segmentation.size(); ++i)
      write_indexed_png(fs::path(a.masks_out) / (corpus.segmentation[i].id + ".png"),
                        result.segmentation_predictions[i], anatomy_palette());
  }
  return kOk;
}

// ----------------------------------------------------------------------- ablate

struct AblateArgs {
  ConfigSources config;
  std::vector<std::uint64_t> seeds{0, 1, 2};
  int threads = 1;
};

int cmd_ablate(const AblateArgs& a, std::ostream& out) {
  const RunConfig cfg = a.config.resolve();
  if (cfg.train_manifest.empty() || cfg.test_manifest.empty())
    throw ConfigError("ablate needs --train-manifest and --test-manifest");
  if (a.seeds.empty()) throw ConfigError("ablate needs at least one seed");
  torch::set_num_threads(a.threads);
  print_effective_config(out, cfg);

  const Corpus train = load_corpus(data_path(cfg.train_manifest));
  const Corpus test = load_corpus(data_path(cfg.test_manifest));
  const fs::path out_dir(cfg.out_dir);
  fs::create_directories(out_dir);
  write_text(out_dir / "effective_config.toml", cfg.to_text());

  std::vector<AblationTable> tables;
  json per_seed = json::array();
  for (std::uint64_t seed : a.seeds) {
    AblationSettings settings;
    settings.model = cfg.model;
    settings.model.seed = seed;
    settings.train = cfg.train;
    settings.train.seed = seed;
    settings.inference = cfg.inference;
    settings.out_dir = out_dir / ("seed_" + std::to_string(seed));
    tables.push_back(run_ablation(train, test, settings));
    write_text(settings.out_dir / "ablation.csv", tables.back().to_csv());
    per_seed.push_back({{"seed", seed}, {"rows", tables.back().to_json()}});
    out << "seed " << seed << "\n" << tables.back().to_csv() << std::flush;
  }
  const AblationTable median = median_table(tables);
  write_text(out_dir / "ablation.csv", median.to_csv());
  write_text(out_dir / "ablation.json",
             json{{"seeds", a.seeds}, {"median", median.to_json()}, {"per_seed", per_seed}}.dump(2) + "\n");
  out << "median over " << a.seeds.size() << " seed(s)\n" << median.to_csv();
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Joint dental detection and anatomy segmentation"};
  app.name("dentalx");
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* generate = app.add_subcommand("generate-data", "Write a synthetic corpus with a manifest");
  generate->add_option("--det", gen.det, "Number of detection-labelled images")->required();
  generate->add_option("--seg", gen.seg, "Number of segmentation-labelled images")->required();
  generate->add_option("--seed", gen.seed, "Generator seed");
  generate->add_option("--out", gen.out, "Output directory")->required();
  generate->add_option("--split", gen.split, "Split name stored in the manifest");
  generate->add_option("--size", gen.size, "Image side length in pixels");
  generate->add_option("--classes", gen.classes, "Number of disease classes");

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "Train one mode and write checkpoints and a JSON-lines log");
  train.config.add_to(train_cmd);
  flag(train_cmd, train.config, "--manifest", "run.train_manifest", "Training manifest");
  flag(train_cmd, train.config, "--mode", "run.mode", "det-only | seg-only | joint-nocontext | joint-context");
  flag(train_cmd, train.config, "--out", "run.out_dir", "Output directory");
  flag(train_cmd, train.config, "--epochs", "train.epochs", "Epochs");
  flag(train_cmd, train.config, "--lr", "train.lr", "Initial learning rate");
  flag(train_cmd, train.config, "--batch-size", "train.batch_size", "Batch size (even)");
  flag(train_cmd, train.config, "--max-steps", "train.max_steps", "Cap on optimisation steps");
  flag(train_cmd, train.config, "--seed", "train.seed", "Sampler seed");
  flag(train_cmd, train.config, "--model-seed", "model.seed", "Initialisation seed");
  flag(train_cmd, train.config, "--hflip", "train.hflip", "Horizontal flip augmentation (true/false)");
  train_cmd->add_option("--resume", train.resume, "Continue from a checkpoint");
  train_cmd->add_option("--threads", train.threads, "Intra-op threads");
  train_cmd->add_option("--log-every", train.log_every, "Print every n-th step");

  EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("eval", "Score a checkpoint or stored predictions on a manifest");
  eval.config.add_to(eval_cmd);
  eval_cmd->add_option("--checkpoint", eval.checkpoint, "Model checkpoint");
  eval_cmd->add_option("--manifest", eval.manifest, "Test manifest");
  eval_cmd->add_option("--task", eval.task, "det | seg | both (default: what the checkpoint trained)");
  eval_cmd->add_option("--filter-rules", eval.filter_rules, "Rules JSON; also reports AP after filtering");
  eval_cmd->add_option("--rule-threshold", eval.rule_threshold, "Forbidden coverage that removes a box");
  eval_cmd->add_option("--report", eval.report, "Write the report JSON here");
  eval_cmd->add_option("--pr-curve", eval.pr_curve, "Write precision-recall points at IoU 0.5 (CSV)");
  eval_cmd->add_option("--detections", eval.detections_out, "Write detections as JSON lines");
  eval_cmd->add_option("--masks", eval.masks_out, "Write predicted anatomy masks (indexed PNG)");
  eval_cmd->add_option("--predictions", eval.predictions_in, "Score these JSON-lines detections instead");
  eval_cmd->add_option("--pred-masks", eval.pred_masks_in, "Score masks <id>.png from this directory instead");
  flag(eval_cmd, eval.config, "--score-threshold", "eval.score_threshold", "Decode score threshold");
  flag(eval_cmd, eval.config, "--nms-iou", "eval.nms_iou", "NMS IoU threshold");
  eval_cmd->add_option("--threads", eval.threads, "Intra-op threads");

  AblateArgs ablate;
  auto* ablate_cmd = app.add_subcommand("ablate", "Train and evaluate all four modes over several seeds");
  ablate.config.add_to(ablate_cmd);
  flag(ablate_cmd, ablate.config, "--train-manifest", "run.train_manifest", "Training manifest");
  flag(ablate_cmd, ablate.config, "--test-manifest", "run.test_manifest", "Test manifest");
  flag(ablate_cmd, ablate.config, "--out", "run.out_dir", "Output directory");
  flag(ablate_cmd, ablate.config, "--epochs", "train.epochs", "Epochs per mode");
  flag(ablate_cmd, ablate.config, "--lr", "train.lr", "Initial learning rate");
  flag(ablate_cmd, ablate.config, "--max-steps", "train.max_steps", "Cap on steps per mode");
  flag(ablate_cmd, ablate.config, "--batch-size", "train.batch_size", "Batch size (even)");
  ablate_cmd->add_option("--seeds", ablate.seeds, "Seeds, e.g. --seeds 0 1 2")->delimiter(',');
  ablate_cmd->add_option("--threads", ablate.threads, "Intra-op threads");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kConfigFailure;
  }

  try {
    if (generate->parsed()) return cmd_generate_data(gen, out);
    if (train_cmd->parsed()) return cmd_train(train, out);
    if (eval_cmd->parsed()) return cmd_eval(eval, out);
    if (ablate_cmd->parsed()) return cmd_ablate(ablate, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kConfigFailure;
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << "\n";
    return kNumericalFailure;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return kDataFailure;
  } catch (const ShapeError& e) {
    err << "data error: " << e.what() << "\n";
    return kDataFailure;
  } catch (const fs::filesystem_error& e) {
    err << "data error: " << e.what() << "\n";
    return kDataFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kFailure;
}

}  // namespace dentalx::cli
