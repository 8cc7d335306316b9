#include "dentalx/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>

#include "dentalx/errors.hpp"

namespace dentalx {

double cosine_lr(long step, long total_steps, double initial_lr) {
  if (total_steps <= 0) return initial_lr;
  const double t = static_cast<double>(std::clamp(step, 0L, total_steps));
  return 0.5 * initial_lr * (1.0 + std::cos(std::numbers::pi * t / static_cast<double>(total_steps)));
}

MixedBatchSampler::MixedBatchSampler(std::size_t num_detection, std::size_t num_segmentation, int batch_size,
                                     TrainMode mode, std::uint64_t seed, bool hflip)
    : num_detection_(num_detection),
      num_segmentation_(num_segmentation),
      half_batch_(batch_size / 2),
      mode_(mode),
      hflip_(hflip),
      rng_(seed) {
  if (batch_size < 2 || batch_size % 2 != 0) throw ConfigError("batch_size must be even and >= 2");
  if (trains_detection(mode) && num_detection == 0)
    throw DataError("mode " + to_string(mode) + " needs detection samples but the detection dataset is empty");
  if (trains_segmentation(mode) && num_segmentation == 0)
    throw DataError("mode " + to_string(mode) + " needs segmentation samples but the segmentation dataset is empty");
  std::size_t longest = 0;
  if (trains_detection(mode)) longest = std::max(longest, num_detection);
  if (trains_segmentation(mode)) longest = std::max(longest, num_segmentation);
  steps_per_epoch_ = static_cast<long>((longest + static_cast<std::size_t>(half_batch_) - 1) / static_cast<std::size_t>(half_batch_));
  start_epoch();
}

std::vector<int> MixedBatchSampler::stream(std::size_t dataset_size, std::size_t length) {
  std::vector<int> out;
  out.reserve(length);
  std::vector<int> perm(dataset_size);
  while (out.size() < length) {
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng_);
    for (int i : perm) {
      if (out.size() == length) break;
      out.push_back(i);
    }
  }
  return out;
}

void MixedBatchSampler::start_epoch() {
  const auto length = static_cast<std::size_t>(steps_per_epoch_) * static_cast<std::size_t>(half_batch_);
  det_stream_ = trains_detection(mode_) ? stream(num_detection_, length) : std::vector<int>{};
  seg_stream_ = trains_segmentation(mode_) ? stream(num_segmentation_, length) : std::vector<int>{};
  std::bernoulli_distribution coin(0.5);
  det_flip_.assign(det_stream_.size(), false);
  seg_flip_.assign(seg_stream_.size(), false);
  if (hflip_) {
    for (std::size_t i = 0; i < det_flip_.size(); ++i) det_flip_[i] = coin(rng_);
    for (std::size_t i = 0; i < seg_flip_.size(); ++i) seg_flip_[i] = coin(rng_);
  }
  position_ = 0;
}

MixedBatch MixedBatchSampler::next() {
  if (position_ == steps_per_epoch_) {
    ++epoch_;
    start_epoch();
  }
  MixedBatch batch;
  const auto begin = static_cast<std::size_t>(position_) * static_cast<std::size_t>(half_batch_);
  for (int k = 0; k < half_batch_; ++k) {
    const auto i = begin + static_cast<std::size_t>(k);
    if (!det_stream_.empty()) {
      batch.detection.push_back(det_stream_[i]);
      batch.detection_flip.push_back(det_flip_[i]);
    }
    if (!seg_stream_.empty()) {
      batch.segmentation.push_back(seg_stream_[i]);
      batch.segmentation_flip.push_back(seg_flip_[i]);
    }
  }
  ++position_;
  return batch;
}

std::string MixedBatchSampler::state() const {
  std::ostringstream out;
  out << epoch_ << ' ' << position_ << ' ' << det_stream_.size() << ' ' << seg_stream_.size() << '\n';
  for (std::size_t i = 0; i < det_stream_.size(); ++i) out << det_stream_[i] << ' ' << det_flip_[i] << ' ';
  out << '\n';
  for (std::size_t i = 0; i < seg_stream_.size(); ++i) out << seg_stream_[i] << ' ' << seg_flip_[i] << ' ';
  out << '\n' << rng_;
  return out.str();
}

void MixedBatchSampler::restore(const std::string& state) {
  std::istringstream in(state);
  std::size_t nd = 0, ns = 0;
  in >> epoch_ >> position_ >> nd >> ns;
  det_stream_.resize(nd);
  det_flip_.resize(nd);
  seg_stream_.resize(ns);
  seg_flip_.resize(ns);
  for (std::size_t i = 0; i < nd; ++i) {
    bool f = false;
    in >> det_stream_[i] >> f;
    det_flip_[i] = f;
  }
  for (std::size_t i = 0; i < ns; ++i) {
    bool f = false;
    in >> seg_stream_[i] >> f;
    seg_flip_[i] = f;
  }
  in >> rng_;
  if (in.fail()) throw DataError("corrupt sampler state in checkpoint");
  if (position_ < 0 || position_ > steps_per_epoch_) throw DataError("sampler state does not fit this dataset");
}

MixedBatch sample_mixed_batch(std::size_t num_detection, std::size_t num_segmentation, int batch_size,
                              std::uint64_t seed) {
  MixedBatchSampler sampler(num_detection, num_segmentation, batch_size, TrainMode::kJointContext, seed);
  return sampler.next();
}

nlohmann::json StepLog::to_json() const {
  return {{"step", step},        {"epoch", epoch},       {"l_reg", loss.l_reg}, {"l_obj", loss.l_obj},
          {"l_cls", loss.l_cls}, {"l_ce", loss.l_ce},     {"l_iou", loss.l_iou}, {"total", loss.total},
          {"lr", lr}};
}

namespace {

LabelMask flipped(const LabelMask& mask) {
  LabelMask out(mask.width, mask.height);
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x) out.at(x, y) = mask.at(mask.width - 1 - x, y);
  return out;
}

DetectionTarget flipped(const std::vector<GroundTruthBox>& boxes, double width, bool flip) {
  DetectionTarget t{boxes};
  if (flip)
    for (auto& g : t.boxes) g.box = {width - g.box.x2, g.box.y1, width - g.box.x1, g.box.y2};
  return t;
}

}  // namespace

BatchLoss compute_batch_loss(DentalXModel& model, const Corpus& corpus, const MixedBatch& batch, TrainMode mode,
                             const LossOptions& options) {
  const ModelConfig& config = model->config();
  const auto n_det = static_cast<int64_t>(batch.detection.size());
  const auto n_seg = static_cast<int64_t>(batch.segmentation.size());
  const int64_t total = n_det + n_seg;
  if (total == 0) throw DataError("empty batch");
  if (n_det > 0 && !trains_detection(mode)) throw DataError("detection samples in a " + to_string(mode) + " batch");
  if (n_seg > 0 && !trains_segmentation(mode)) throw DataError("segmentation samples in a " + to_string(mode) + " batch");

  std::vector<const GrayImage*> images;
  std::vector<char> flips_storage;
  for (std::size_t k = 0; k < batch.detection.size(); ++k) {
    images.push_back(&corpus.detection.at(static_cast<std::size_t>(batch.detection[k])).image);
    flips_storage.push_back(k < batch.detection_flip.size() && batch.detection_flip[k]);
  }
  for (std::size_t k = 0; k < batch.segmentation.size(); ++k) {
    images.push_back(&corpus.segmentation.at(static_cast<std::size_t>(batch.segmentation[k])).image);
    flips_storage.push_back(k < batch.segmentation_flip.size() && batch.segmentation_flip[k]);
  }
  std::unique_ptr<bool[]> flips(new bool[flips_storage.size()]);
  for (std::size_t k = 0; k < flips_storage.size(); ++k) flips[k] = flips_storage[k] != 0;
  const auto pixels = images_to_tensor(images, config, std::span<const bool>(flips.get(), flips_storage.size()));

  const auto pyramid = model->forward_backbone(pixels);
  ModelOutputs out;
  out.head_rows.assign(static_cast<std::size_t>(total), -1);
  out.seg_rows.assign(static_cast<std::size_t>(total), -1);

  const bool use_context = mode == TrainMode::kJointContext && n_det > 0;
  if (use_context) {
    out.context = model->forward_sce(pyramid.p3);
    for (int64_t i = n_det; i < total; ++i) out.seg_rows[static_cast<std::size_t>(i)] = i;
  } else if (n_seg > 0) {
    out.context = model->forward_sce(pyramid.p3.narrow(0, n_det, n_seg));
    for (int64_t i = n_det; i < total; ++i) out.seg_rows[static_cast<std::size_t>(i)] = i - n_det;
  }
  if (n_det > 0) {
    const FeaturePyramid det_pyramid{pyramid.p3.narrow(0, 0, n_det), pyramid.p4.narrow(0, 0, n_det),
                                     pyramid.p5.narrow(0, 0, n_det)};
    std::optional<StructuralContext> det_context;
    if (use_context) {
      det_context.emplace();
      for (std::size_t l = 0; l < 3; ++l) det_context->context_maps[l] = out.context->context_maps[l].narrow(0, 0, n_det);
    }
    out.head = model->forward_detection_head(det_pyramid, det_context ? &*det_context : nullptr);
    for (int64_t i = 0; i < n_det; ++i) out.head_rows[static_cast<std::size_t>(i)] = i;
  }

  BatchLoss result;
  std::vector<torch::Tensor> totals;
  for (int64_t i = 0; i < total; ++i) {
    LabeledSample sample;
    if (i < n_det) {
      const auto& s = corpus.detection.at(static_cast<std::size_t>(batch.detection[static_cast<std::size_t>(i)]));
      sample.detection = flipped(s.targets, config.input_width, flips[static_cast<std::size_t>(i)]);
    } else {
      const auto k = static_cast<std::size_t>(i - n_det);
      const auto& s = corpus.segmentation.at(static_cast<std::size_t>(batch.segmentation[k]));
      sample.segmentation = flips[static_cast<std::size_t>(i)] ? flipped(s.mask) : s.mask;
    }
    auto breakdown = joint_loss(out, i, sample, config, options);
    totals.push_back(breakdown.total());
    result.per_sample.push_back(std::move(breakdown));
  }
  // Single-task modes fill half of each batch; the empty half counts as zero loss.
  const double slots = static_cast<double>(trains_detection(mode) && trains_segmentation(mode) ? total : 2 * total);
  result.total = torch::stack(totals).sum() / slots;

  const double inv = 1.0 / slots;
  for (const auto& b : result.per_sample) {
    const auto v = b.values();
    result.mean.l_reg += v.l_reg * inv;
    result.mean.l_obj += v.l_obj * inv;
    result.mean.l_cls += v.l_cls * inv;
    result.mean.l_ce += v.l_ce * inv;
    result.mean.l_iou += v.l_iou * inv;
  }
  result.mean.l_det = result.mean.l_reg + result.mean.l_obj + result.mean.l_cls;
  result.mean.l_seg = result.mean.l_ce + result.mean.l_iou;
  result.mean.total = result.mean.l_det + result.mean.l_seg;
  return result;
}

void validate_training_setup(const ModelConfig& model, const Corpus& corpus, TrainMode mode) {
  if (model.use_context != (mode == TrainMode::kJointContext))
    throw ConfigError("mode " + to_string(mode) + " requires a model " +
                      (mode == TrainMode::kJointContext ? "with" : "without") + " structural context");
  if (corpus.width != model.input_width || corpus.height != model.input_height)
    throw DataError("corpus images are " + std::to_string(corpus.width) + "x" + std::to_string(corpus.height) +
                    " but the model expects " + std::to_string(model.input_width) + "x" +
                    std::to_string(model.input_height));
  if (corpus.num_disease_classes > model.num_disease_classes)
    throw ConfigError("corpus has more disease classes than the model");
  if (trains_detection(mode) && corpus.detection.empty())
    throw DataError("mode " + to_string(mode) + " needs detection samples");
  if (trains_segmentation(mode) && corpus.segmentation.empty())
    throw DataError("mode " + to_string(mode) + " needs segmentation samples");
}

Trainer::Trainer(DentalXModel model, const Corpus& corpus, TrainConfig config, TrainMode mode,
                 std::filesystem::path out_dir)
    : model_(std::move(model)),
      corpus_(corpus),
      config_(config),
      mode_(mode),
      loss_options_(LossOptions::from(config)),
      out_dir_(std::move(out_dir)),
      sampler_((config.validate(), corpus.detection.size()), corpus.segmentation.size(), config.batch_size, mode,
               config.seed, config.hflip),
      optimizer_(model_->parameters(),
                 torch::optim::SGDOptions(config.initial_lr).momentum(config.momentum).weight_decay(config.weight_decay)) {
  validate_training_setup(model_->config(), corpus_, mode_);
  total_steps_ = static_cast<long>(config_.epochs) * sampler_.steps_per_epoch();
  if (config_.max_steps > 0) total_steps_ = std::min(total_steps_, config_.max_steps);
  model_->train();
  if (!out_dir_.empty()) std::filesystem::create_directories(out_dir_);
}

bool Trainer::finished() const { return step_ >= total_steps_; }

StepLog Trainer::step() {
  if (finished()) throw std::logic_error("training schedule already finished");
  const double lr = cosine_lr(step_, total_steps_, config_.initial_lr);
  for (auto& group : optimizer_.param_groups()) static_cast<torch::optim::SGDOptions&>(group.options()).lr(lr);

  const MixedBatch batch = sampler_.next();
  BatchLoss loss = compute_batch_loss(model_, corpus_, batch, mode_, loss_options_);

  StepLog entry;
  entry.step = step_;
  entry.epoch = epoch_;
  entry.lr = lr;
  entry.loss = loss.mean;
  if (!std::isfinite(loss.mean.total)) {
    auto record = entry.to_json();
    record["error"] = "non-finite loss";
    if (!out_dir_.empty()) std::ofstream(out_dir_ / "train_log.jsonl", std::ios::app) << record.dump() << '\n';
    throw NumericalError("non-finite loss at step " + std::to_string(step_) + ": " + record.dump());
  }

  optimizer_.zero_grad();
  loss.total.backward();
  optimizer_.step();

  history_.push_back(entry);
  if (!out_dir_.empty()) std::ofstream(out_dir_ / "train_log.jsonl", std::ios::app) << entry.to_json().dump() << '\n';
  ++step_;
  if (step_ % sampler_.steps_per_epoch() == 0 || finished()) end_of_epoch();
  return entry;
}

void Trainer::end_of_epoch() {
  if (step_ % sampler_.steps_per_epoch() == 0) ++epoch_;
  if (out_dir_.empty()) return;
  if (epoch_ % config_.checkpoint_every == 0 || finished()) {
    const auto path = out_dir_ / ("checkpoint_epoch" + std::to_string(epoch_) + ".pt");
    save(path);
    std::filesystem::copy_file(path, out_dir_ / "last.pt", std::filesystem::copy_options::overwrite_existing);
    last_checkpoint_ = out_dir_ / "last.pt";
  }
}

std::vector<StepLog> Trainer::run(long max_steps, const std::function<void(const StepLog&)>& on_step) {
  std::vector<StepLog> out;
  while (!finished() && (max_steps < 0 || static_cast<long>(out.size()) < max_steps)) {
    out.push_back(step());
    if (on_step) on_step(out.back());
  }
  return out;
}

void Trainer::save(const std::filesystem::path& path) {
  TrainingState state;
  state.train = config_;
  state.step = step_;
  state.epoch = epoch_;
  state.sampler_state = sampler_.state();
  torch::serialize::OutputArchive archive;
  optimizer_.save(archive);
  std::ostringstream os;
  archive.save_to(os);
  state.optimizer_state = os.str();
  save_checkpoint(path, model_, mode_, &state);
}

void Trainer::resume(const std::filesystem::path& path) {
  Checkpoint ckpt = load_checkpoint(path, &model_->config());
  if (!ckpt.state) throw DataError("checkpoint " + path.string() + " holds no training state");
  if (ckpt.mode && *ckpt.mode != mode_) throw ConfigError("checkpoint was trained in mode " + to_string(*ckpt.mode));
  auto stored = ckpt.state->train.to_json();
  auto current = config_.to_json();
  stored.erase("checkpoint_every");
  current.erase("checkpoint_every");
  if (stored != current) throw ConfigError("resume: training config differs from the checkpoint's");
  {
    torch::NoGradGuard guard;
    auto src_params = ckpt.model->named_parameters(true);
    for (auto& item : model_->named_parameters(true)) item.value().copy_(src_params[item.key()]);
    auto src_buffers = ckpt.model->named_buffers(true);
    for (auto& item : model_->named_buffers(true)) item.value().copy_(src_buffers[item.key()]);
  }
  torch::serialize::InputArchive archive;
  std::istringstream is(ckpt.state->optimizer_state);
  archive.load_from(is);
  optimizer_.load(archive);
  sampler_.restore(ckpt.state->sampler_state);
  step_ = ckpt.state->step;
  epoch_ = ckpt.state->epoch;
  model_->train();
}

}  // namespace dentalx
