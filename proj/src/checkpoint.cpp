#include "dentalx/checkpoint.hpp"

#include <torch/serialize.h>

#include <cstring>
#include <fstream>
#include <iterator>

#include "dentalx/errors.hpp"

namespace dentalx {
namespace {

c10::impl::GenericDict tensor_dict(const torch::OrderedDict<std::string, torch::Tensor>& items) {
  c10::impl::GenericDict dict(c10::StringType::get(), c10::TensorType::get());
  for (const auto& item : items) dict.insert(item.key(), item.value().detach().clone());
  return dict;
}

torch::Tensor bytes_to_tensor(const std::string& bytes) {
  auto t = torch::empty({static_cast<int64_t>(bytes.size())}, torch::kUInt8);
  if (!bytes.empty()) std::memcpy(t.data_ptr<std::uint8_t>(), bytes.data(), bytes.size());
  return t;
}

std::string tensor_to_bytes(const torch::Tensor& t) {
  const auto c = t.contiguous();
  return {reinterpret_cast<const char*>(c.data_ptr<std::uint8_t>()), static_cast<std::size_t>(c.numel())};
}

const c10::IValue& require(const c10::impl::GenericDict& dict, const std::string& key) {
  auto it = dict.find(key);
  if (it == dict.end()) throw DataError("checkpoint is missing '" + key + "'");
  return it->value();
}

void copy_into(const torch::OrderedDict<std::string, torch::Tensor>& targets, const c10::impl::GenericDict& stored,
               const char* kind) {
  torch::NoGradGuard guard;
  for (const auto& item : targets) {
    const auto& value = require(stored, item.key());
    const auto src = value.toTensor();
    if (src.sizes() != item.value().sizes())
      throw DataError(std::string("checkpoint ") + kind + " '" + item.key() + "' has shape " + c10::str(src.sizes()));
    item.value().copy_(src);
  }
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, DentalXModel& model, std::optional<TrainMode> mode,
                     const TrainingState* state) {
  c10::impl::GenericDict root(c10::StringType::get(), c10::AnyType::get());
  root.insert("version", std::string(kCheckpointVersion));
  root.insert("config", model->config().to_json().dump());
  root.insert("mode", mode ? to_string(*mode) : std::string());
  root.insert("params", tensor_dict(model->named_parameters(true)));
  root.insert("buffers", tensor_dict(model->named_buffers(true)));
  if (state) {
    c10::impl::GenericDict ts(c10::StringType::get(), c10::AnyType::get());
    ts.insert("train_config", state->train.to_json().dump());
    ts.insert("step", static_cast<int64_t>(state->step));
    ts.insert("epoch", static_cast<int64_t>(state->epoch));
    ts.insert("sampler", bytes_to_tensor(state->sampler_state));
    ts.insert("optimizer", bytes_to_tensor(state->optimizer_state));
    root.insert("train_state", ts);
  }
  const std::vector<char> bytes = torch::pickle_save(c10::IValue(root));
  if (!path.parent_path().empty()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw DataError("cannot write checkpoint " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const ModelConfig* expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("checkpoint not found: " + path.string());
  const std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  c10::IValue value;
  try {
    value = torch::pickle_load(bytes);
  } catch (const c10::Error& e) {
    throw DataError("cannot parse checkpoint " + path.string());
  }
  if (!value.isGenericDict()) throw DataError("checkpoint root is not a dictionary");
  const auto root = value.toGenericDict();
  const auto version = require(root, "version").toStringRef();
  if (version != kCheckpointVersion) throw DataError("unsupported checkpoint version '" + version + "'");

  Checkpoint ckpt;
  ckpt.config = ModelConfig::from_json(nlohmann::json::parse(require(root, "config").toStringRef()));
  if (expected && !(*expected == ckpt.config))
    throw ConfigError("checkpoint config does not match the requested model config");
  const auto mode = require(root, "mode").toStringRef();
  if (!mode.empty()) ckpt.mode = train_mode_from_string(mode);

  ckpt.model = DentalXModel(ckpt.config);
  copy_into(ckpt.model->named_parameters(true), require(root, "params").toGenericDict(), "parameter");
  copy_into(ckpt.model->named_buffers(true), require(root, "buffers").toGenericDict(), "buffer");

  auto it = root.find("train_state");
  if (it != root.end()) {
    const auto ts = it->value().toGenericDict();
    TrainingState state;
    state.train = TrainConfig::from_json(nlohmann::json::parse(require(ts, "train_config").toStringRef()));
    state.step = require(ts, "step").toInt();
    state.epoch = static_cast<int>(require(ts, "epoch").toInt());
    state.sampler_state = tensor_to_bytes(require(ts, "sampler").toTensor());
    state.optimizer_state = tensor_to_bytes(require(ts, "optimizer").toTensor());
    ckpt.state = std::move(state);
  }
  return ckpt;
}

}  // namespace dentalx
