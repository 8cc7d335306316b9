#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "dentalx/checkpoint.hpp"
#include "dentalx/config.hpp"
#include "dentalx/dataset.hpp"
#include "dentalx/losses.hpp"
#include "dentalx/model.hpp"

namespace dentalx {

// lr(t) = 0.5 lr0 (1 + cos(pi t / T)); t is clamped to [0, T].
double cosine_lr(long step, long total_steps, double initial_lr);

// Indices into the detection and segmentation datasets for one step.
struct MixedBatch {
  std::vector<int> detection;
  std::vector<int> segmentation;
  std::vector<bool> detection_flip;
  std::vector<bool> segmentation_flip;

  std::size_t size() const { return detection.size() + segmentation.size(); }
};

// Seeded per-epoch index streams. Joint modes draw batch_size/2 samples from
// each task per step; single-task modes draw batch_size/2 from their own task.
// An epoch is one pass over the larger stream; the smaller dataset is cycled
// through fresh shuffles to the same length.
class MixedBatchSampler {
 public:
  MixedBatchSampler(std::size_t num_detection, std::size_t num_segmentation, int batch_size, TrainMode mode,
                    std::uint64_t seed, bool hflip = false);

  MixedBatch next();
  long steps_per_epoch() const { return steps_per_epoch_; }
  int epoch() const { return epoch_; }

  std::string state() const;
  void restore(const std::string& state);

 private:
  void start_epoch();
  std::vector<int> stream(std::size_t dataset_size, std::size_t length);

  std::size_t num_detection_, num_segmentation_;
  int half_batch_;
  TrainMode mode_;
  bool hflip_;
  long steps_per_epoch_ = 0;
  int epoch_ = 0;
  long position_ = 0;
  std::vector<int> det_stream_, seg_stream_;
  std::vector<bool> det_flip_, seg_flip_;
  std::mt19937_64 rng_;
};

// Convenience wrapper: one batch from a fresh sampler state.
MixedBatch sample_mixed_batch(std::size_t num_detection, std::size_t num_segmentation, int batch_size,
                              std::uint64_t seed);

struct StepLog {
  long step = 0;
  int epoch = 0;
  double lr = 0;
  LossValues loss;

  nlohmann::json to_json() const;
};

struct BatchLoss {
  torch::Tensor total;  // sum of per-sample totals divided by the number of batch slots
  std::vector<JointLossBreakdown> per_sample;
  LossValues mean;
};

// Forward pass for a mixed batch: backbone on every image, SCE when the mode
// needs segmentation or context, detection head on detection samples only.
BatchLoss compute_batch_loss(DentalXModel& model, const Corpus& corpus, const MixedBatch& batch, TrainMode mode,
                             const LossOptions& options);

class Trainer {
 public:
  Trainer(DentalXModel model, const Corpus& corpus, TrainConfig config, TrainMode mode,
          std::filesystem::path out_dir = {});

  StepLog step();
  // Runs until the schedule ends (or max_steps when positive).
  std::vector<StepLog> run(long max_steps = -1, const std::function<void(const StepLog&)>& on_step = {});

  bool finished() const;
  long global_step() const { return step_; }
  long total_steps() const { return total_steps_; }
  int epoch() const { return epoch_; }
  const std::vector<StepLog>& history() const { return history_; }
  DentalXModel model() const { return model_; }

  void save(const std::filesystem::path& path);
  // Restores parameters, optimizer, sampler and step counter.
  void resume(const std::filesystem::path& path);

  std::filesystem::path last_checkpoint() const { return last_checkpoint_; }

 private:
  void end_of_epoch();

  DentalXModel model_;
  const Corpus& corpus_;
  TrainConfig config_;
  TrainMode mode_;
  LossOptions loss_options_;
  std::filesystem::path out_dir_;
  MixedBatchSampler sampler_;
  torch::optim::SGD optimizer_;
  long step_ = 0;
  int epoch_ = 0;
  long total_steps_ = 0;
  std::vector<StepLog> history_;
  std::filesystem::path last_checkpoint_;
};

// Checks that the model's context wiring matches the mode and the corpus has
// the data the mode needs.
void validate_training_setup(const ModelConfig& model, const Corpus& corpus, TrainMode mode);

}  // namespace dentalx
