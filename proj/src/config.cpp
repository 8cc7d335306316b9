#include "dentalx/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <vector>

#include "dentalx/errors.hpp"

namespace dentalx {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string unquote(const std::string& s) {
  if (s.size() >= 2 && (s.front() == '"' || s.front() == '\'') && s.back() == s.front())
    return s.substr(1, s.size() - 2);
  return s;
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  std::istringstream in(value);
  T out{};
  in >> out;
  if (in.fail() || !in.eof()) throw ConfigError("'" + key + "' expects a number, got '" + value + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw ConfigError("'" + key + "' expects true/false, got '" + value + "'");
}

std::vector<int> parse_int_list(const std::string& key, const std::string& value) {
  std::string body = value;
  if (!body.empty() && body.front() == '[') body = body.substr(1);
  if (!body.empty() && body.back() == ']') body.pop_back();
  std::vector<int> out;
  std::istringstream in(body);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(parse_number<int>(key, item));
  }
  return out;
}

template <std::size_t N>
std::array<int, N> to_array(const std::string& key, const std::vector<int>& v) {
  if (v.size() != N) throw ConfigError("'" + key + "' expects " + std::to_string(N) + " entries");
  std::array<int, N> out{};
  std::copy(v.begin(), v.end(), out.begin());
  return out;
}

std::string list_text(const std::array<int, 3>& v) {
  return "[" + std::to_string(v[0]) + ", " + std::to_string(v[1]) + ", " + std::to_string(v[2]) + "]";
}

std::string num_text(double v) {
  std::ostringstream out;
  out.precision(17);
  out << v;
  return out.str();
}

}  // namespace

void ModelConfig::validate() const {
  if (num_disease_classes < 1) throw ConfigError("num_disease_classes must be >= 1");
  if (num_anatomy_classes < 1) throw ConfigError("num_anatomy_classes must be >= 1");
  if (input_height <= 0 || input_width <= 0 || input_height % 32 != 0 || input_width % 32 != 0)
    throw ConfigError("input size must be a positive multiple of 32, got " + std::to_string(input_height) + "x" +
                      std::to_string(input_width));
  if (input_channels != 1 && input_channels != 3) throw ConfigError("input_channels must be 1 or 3");
  if (strides != std::array<int, 3>{8, 16, 32}) throw ConfigError("strides are fixed at (8, 16, 32)");
  for (int i = 0; i < 3; ++i)
    if (pyramid_channels[static_cast<std::size_t>(i)] <= 0) throw ConfigError("pyramid channels must be positive");
  if (!(width_multiplier > 0) || !(depth_multiplier >= 0)) throw ConfigError("width/depth multipliers must be positive");
  if (head_channels <= 0 || sce_channels <= 0) throw ConfigError("head/sce channels must be positive");
  if (head_depth < 1 || sce_depth < 1) throw ConfigError("head/sce depth must be >= 1");
}

int ModelConfig::scaled(int channels) const {
  return std::max(1, static_cast<int>(std::lround(channels * width_multiplier)));
}

int ModelConfig::blocks_per_stage() const { return static_cast<int>(std::lround(3.0 * depth_multiplier)); }

nlohmann::json ModelConfig::to_json() const {
  return {{"num_disease_classes", num_disease_classes},
          {"num_anatomy_classes", num_anatomy_classes},
          {"input_size", {input_height, input_width}},
          {"input_channels", input_channels},
          {"pyramid_channels", pyramid_channels},
          {"strides", strides},
          {"width_multiplier", width_multiplier},
          {"depth_multiplier", depth_multiplier},
          {"head_channels", head_channels},
          {"head_depth", head_depth},
          {"sce_channels", sce_channels},
          {"sce_depth", sce_depth},
          {"use_context", use_context},
          {"seed", seed}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  try {
    c.num_disease_classes = j.at("num_disease_classes").get<int>();
    c.num_anatomy_classes = j.at("num_anatomy_classes").get<int>();
    const auto size = j.at("input_size").get<std::vector<int>>();
    if (size.size() != 2) throw ConfigError("input_size must have two entries");
    c.input_height = size[0];
    c.input_width = size[1];
    c.input_channels = j.at("input_channels").get<int>();
    c.pyramid_channels = j.at("pyramid_channels").get<std::array<int, 3>>();
    c.strides = j.at("strides").get<std::array<int, 3>>();
    c.width_multiplier = j.at("width_multiplier").get<double>();
    c.depth_multiplier = j.at("depth_multiplier").get<double>();
    c.head_channels = j.at("head_channels").get<int>();
    c.head_depth = j.at("head_depth").get<int>();
    c.sce_channels = j.at("sce_channels").get<int>();
    c.sce_depth = j.at("sce_depth").get<int>();
    c.use_context = j.at("use_context").get<bool>();
    c.seed = j.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& ex) {
    throw ConfigError(std::string("malformed model config: ") + ex.what());
  }
  c.validate();
  return c;
}

std::string to_string(TrainMode mode) {
  switch (mode) {
    case TrainMode::kDetOnly: return "det-only";
    case TrainMode::kSegOnly: return "seg-only";
    case TrainMode::kJointNoContext: return "joint-nocontext";
    case TrainMode::kJointContext: return "joint-context";
  }
  return "?";
}

TrainMode train_mode_from_string(const std::string& s) {
  for (auto m : {TrainMode::kDetOnly, TrainMode::kSegOnly, TrainMode::kJointNoContext, TrainMode::kJointContext})
    if (to_string(m) == s) return m;
  throw ConfigError("unknown mode '" + s + "' (det-only | seg-only | joint-nocontext | joint-context)");
}

bool trains_detection(TrainMode mode) { return mode != TrainMode::kSegOnly; }
bool trains_segmentation(TrainMode mode) { return mode != TrainMode::kDetOnly; }

void TrainConfig::validate() const {
  if (!(initial_lr > 0)) throw ConfigError("lr must be positive");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 2 || batch_size % 2 != 0) throw ConfigError("batch_size must be even and >= 2");
  if (momentum < 0 || momentum >= 1) throw ConfigError("momentum must lie in [0, 1)");
  if (weight_decay < 0) throw ConfigError("weight_decay must be non-negative");
  if (!(center_radius > 0)) throw ConfigError("center_radius must be positive");
  if (max_steps < 0) throw ConfigError("max_steps must be non-negative");
  if (checkpoint_every < 1) throw ConfigError("checkpoint_every must be >= 1");
}

nlohmann::json TrainConfig::to_json() const {
  return {{"lr", initial_lr},
          {"epochs", epochs},
          {"batch_size", batch_size},
          {"momentum", momentum},
          {"weight_decay", weight_decay},
          {"seed", seed},
          {"hflip", hflip},
          {"assigner", assigner == Assigner::kSimOTA ? "simota" : "center"},
          {"center_radius", center_radius},
          {"overlap_loss", overlap_loss == OverlapLoss::kDice ? "dice" : "jaccard"},
          {"max_steps", max_steps},
          {"checkpoint_every", checkpoint_every}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.initial_lr = j.value("lr", c.initial_lr);
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.momentum = j.value("momentum", c.momentum);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.seed = j.value("seed", c.seed);
  c.hflip = j.value("hflip", c.hflip);
  c.assigner = j.value("assigner", std::string("center")) == "simota" ? Assigner::kSimOTA : Assigner::kCenterPrior;
  c.center_radius = j.value("center_radius", c.center_radius);
  c.overlap_loss = j.value("overlap_loss", std::string("jaccard")) == "dice" ? OverlapLoss::kDice : OverlapLoss::kJaccard;
  c.max_steps = j.value("max_steps", c.max_steps);
  c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
  c.validate();
  return c;
}

void InferenceConfig::validate() const {
  if (score_threshold < 0 || score_threshold > 1) throw ConfigError("score_threshold must lie in [0, 1]");
  if (!(nms_iou > 0 && nms_iou <= 1)) throw ConfigError("nms_iou must lie in (0, 1]");
}

void RunConfig::validate() const {
  model.validate();
  train.validate();
  inference.validate();
}

ModelConfig RunConfig::effective_model() const {
  ModelConfig m = model;
  m.use_context = mode == TrainMode::kJointContext;
  return m;
}

void RunConfig::set(const std::string& key, const std::string& raw) {
  const std::string value = unquote(trim(raw));
  if (key == "model.num_disease_classes") model.num_disease_classes = parse_number<int>(key, value);
  else if (key == "model.num_anatomy_classes") model.num_anatomy_classes = parse_number<int>(key, value);
  else if (key == "model.input_size") {
    const auto hw = to_array<2>(key, parse_int_list(key, value));
    model.input_height = hw[0];
    model.input_width = hw[1];
  } else if (key == "model.input_channels") model.input_channels = parse_number<int>(key, value);
  else if (key == "model.pyramid_channels") model.pyramid_channels = to_array<3>(key, parse_int_list(key, value));
  else if (key == "model.strides") model.strides = to_array<3>(key, parse_int_list(key, value));
  else if (key == "model.width_multiplier") model.width_multiplier = parse_number<double>(key, value);
  else if (key == "model.depth_multiplier") model.depth_multiplier = parse_number<double>(key, value);
  else if (key == "model.head_channels") model.head_channels = parse_number<int>(key, value);
  else if (key == "model.head_depth") model.head_depth = parse_number<int>(key, value);
  else if (key == "model.sce_channels") model.sce_channels = parse_number<int>(key, value);
  else if (key == "model.sce_depth") model.sce_depth = parse_number<int>(key, value);
  else if (key == "model.seed") model.seed = parse_number<std::uint64_t>(key, value);
  else if (key == "train.lr") train.initial_lr = parse_number<double>(key, value);
  else if (key == "train.epochs") train.epochs = parse_number<int>(key, value);
  else if (key == "train.batch_size") train.batch_size = parse_number<int>(key, value);
  else if (key == "train.momentum") train.momentum = parse_number<double>(key, value);
  else if (key == "train.weight_decay") train.weight_decay = parse_number<double>(key, value);
  else if (key == "train.seed") train.seed = parse_number<std::uint64_t>(key, value);
  else if (key == "train.hflip") train.hflip = parse_bool(key, value);
  else if (key == "train.assigner") {
    if (value != "center" && value != "simota") throw ConfigError("train.assigner must be center or simota");
    train.assigner = value == "simota" ? Assigner::kSimOTA : Assigner::kCenterPrior;
  } else if (key == "train.center_radius") train.center_radius = parse_number<double>(key, value);
  else if (key == "train.overlap_loss") {
    if (value != "jaccard" && value != "dice") throw ConfigError("train.overlap_loss must be jaccard or dice");
    train.overlap_loss = value == "dice" ? OverlapLoss::kDice : OverlapLoss::kJaccard;
  } else if (key == "train.max_steps") train.max_steps = parse_number<long>(key, value);
  else if (key == "train.checkpoint_every") train.checkpoint_every = parse_number<int>(key, value);
  else if (key == "eval.score_threshold") inference.score_threshold = parse_number<double>(key, value);
  else if (key == "eval.nms_iou") inference.nms_iou = parse_number<double>(key, value);
  else if (key == "run.mode") mode = train_mode_from_string(value);
  else if (key == "run.train_manifest") train_manifest = value;
  else if (key == "run.test_manifest") test_manifest = value;
  else if (key == "run.out_dir") out_dir = value;
  else throw ConfigError("unknown config key '" + key + "'");
}

std::string RunConfig::to_text() const {
  std::ostringstream out;
  out << "[run]\n"
      << "mode = \"" << to_string(mode) << "\"\n"
      << "train_manifest = \"" << train_manifest << "\"\n"
      << "test_manifest = \"" << test_manifest << "\"\n"
      << "out_dir = \"" << out_dir << "\"\n\n"
      << "[model]\n"
      << "num_disease_classes = " << model.num_disease_classes << "\n"
      << "num_anatomy_classes = " << model.num_anatomy_classes << "\n"
      << "input_size = [" << model.input_height << ", " << model.input_width << "]\n"
      << "input_channels = " << model.input_channels << "\n"
      << "pyramid_channels = " << list_text(model.pyramid_channels) << "\n"
      << "strides = " << list_text(model.strides) << "\n"
      << "width_multiplier = " << num_text(model.width_multiplier) << "\n"
      << "depth_multiplier = " << num_text(model.depth_multiplier) << "\n"
      << "head_channels = " << model.head_channels << "\n"
      << "head_depth = " << model.head_depth << "\n"
      << "sce_channels = " << model.sce_channels << "\n"
      << "sce_depth = " << model.sce_depth << "\n"
      << "seed = " << model.seed << "\n\n"
      << "[train]\n"
      << "lr = " << num_text(train.initial_lr) << "\n"
      << "epochs = " << train.epochs << "\n"
      << "batch_size = " << train.batch_size << "\n"
      << "momentum = " << num_text(train.momentum) << "\n"
      << "weight_decay = " << num_text(train.weight_decay) << "\n"
      << "seed = " << train.seed << "\n"
      << "hflip = " << (train.hflip ? "true" : "false") << "\n"
      << "assigner = \"" << (train.assigner == Assigner::kSimOTA ? "simota" : "center") << "\"\n"
      << "center_radius = " << num_text(train.center_radius) << "\n"
      << "overlap_loss = \"" << (train.overlap_loss == OverlapLoss::kDice ? "dice" : "jaccard") << "\"\n"
      << "max_steps = " << train.max_steps << "\n"
      << "checkpoint_every = " << train.checkpoint_every << "\n\n"
      << "[eval]\n"
      << "score_threshold = " << num_text(inference.score_threshold) << "\n"
      << "nms_iou = " << num_text(inference.nms_iou) << "\n";
  return out.str();
}

std::map<std::string, std::string> parse_config_text(const std::string& text) {
  std::map<std::string, std::string> out;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    // Strip comments outside quotes.
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '"') quoted = !quoted;
      if (line[i] == '#' && !quoted) {
        line.resize(i);
        break;
      }
    }
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[' && line.back() == ']' && line.find('=') == std::string::npos) {
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
    out[section.empty() ? key : section + "." + key] = trim(line.substr(eq + 1));
  }
  return out;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  RunConfig cfg;
  for (const auto& [key, value] : parse_config_text(buf.str())) cfg.set(key, value);
  cfg.validate();
  return cfg;
}

}  // namespace dentalx
