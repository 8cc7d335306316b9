#pragma once

#include <optional>
#include <vector>

#include <torch/torch.h>

#include "dentalx/config.hpp"
#include "dentalx/detection.hpp"
#include "dentalx/evaluation.hpp"
#include "dentalx/image.hpp"
#include "dentalx/sce.hpp"
#include "dentalx/synthetic.hpp"

namespace dentalx {

// Y_i: disease boxes of one image.
struct DetectionTarget {
  std::vector<GroundTruthBox> boxes;

  void validate(const ModelConfig& config) const;
};

// One grid cell of the flattened P3/P4/P5 prediction layout.
struct GridCell {
  int level = 0;
  int row = 0;
  int col = 0;
  int stride = 0;

  double center_x() const { return (col + 0.5) * stride; }
  double center_y() const { return (row + 0.5) * stride; }
};

// Level-major, row-major order; matches the flattening used by the losses.
std::vector<GridCell> grid_cells(const ModelConfig& config);

struct Assignment {
  std::vector<int> matched_gt;  // per grid cell; -1 = negative

  int num_positive() const;
  std::vector<int64_t> positive_cells() const;
};

struct LossOptions {
  Assigner assigner = Assigner::kCenterPrior;
  double center_radius = 2.5;
  OverlapLoss overlap = OverlapLoss::kJaccard;

  static LossOptions from(const TrainConfig& train);
};

// Pyramid level whose canonical object size (4 x stride) is closest in log
// scale to sqrt(w h); ties go to the finer level.
int preferred_level(const Box& box, const ModelConfig& config);

// Center prior: at the preferred level, every cell whose centre lies within
// center_radius cells of the box centre (per axis) is positive; a cell claimed
// by several boxes goes to the nearest centre, then the lower index. SimOTA
// uses the detached predictions of `row` to pick a dynamic number of cells.
Assignment assign_targets(const HeadOutputs& outputs, int64_t row, const DetectionTarget& target,
                          const ModelConfig& config, const LossOptions& options);

struct DetectionLossTerms {
  torch::Tensor reg;  // mean over positives of 1 - IoU(decoded, matched gt)
  torch::Tensor obj;  // BCE over all cells, divided by max(#positives, 1)
  torch::Tensor cls;  // per-positive sum of per-class BCE, averaged over positives
};

DetectionLossTerms detection_loss(const HeadOutputs& outputs, int64_t row, const DetectionTarget& target,
                                  const Assignment& assignment, const ModelConfig& config);

struct SegmentationLossTerms {
  torch::Tensor ce;       // mean per-pixel cross-entropy over C_s + 1 classes
  torch::Tensor overlap;  // 1 - mean soft Jaccard (or Dice)
};

// Prediction mass below which a class absent from the target is skipped in the
// overlap term.
inline constexpr double kAbsentClassMass = 1.0;

// seg_logits: C x h x w (or 1 x C x h x w); bilinearly resized to the mask size.
SegmentationLossTerms segmentation_loss(const torch::Tensor& seg_logits, const LabelMask& target,
                                        OverlapLoss overlap = OverlapLoss::kJaccard);

// A training sample carries exactly one task's labels.
struct LabeledSample {
  std::optional<DetectionTarget> detection;
  std::optional<LabelMask> segmentation;

  Task task() const;
};

struct LossValues {
  double l_reg = 0, l_obj = 0, l_cls = 0, l_ce = 0, l_iou = 0;
  double l_det = 0, l_seg = 0, total = 0;

  nlohmann::json to_json() const;
};

struct JointLossBreakdown {
  torch::Tensor l_reg, l_obj, l_cls, l_ce, l_iou;

  torch::Tensor l_det() const { return l_reg + l_obj + l_cls; }
  torch::Tensor l_seg() const { return l_ce + l_iou; }
  torch::Tensor total() const { return l_det() + l_seg(); }
  LossValues values() const;
};

// Forward results for a batch. head_rows / seg_rows map a batch position to
// its row in the head outputs or structural context (-1 when not computed).
struct ModelOutputs {
  std::optional<HeadOutputs> head;
  std::vector<int64_t> head_rows;
  std::optional<StructuralContext> context;
  std::vector<int64_t> seg_rows;
};

// Per-sample masked loss: only the owned task's terms are computed; the other
// task's terms are exact zeros.
JointLossBreakdown joint_loss(const ModelOutputs& outputs, int64_t index, const LabeledSample& sample,
                              const ModelConfig& config, const LossOptions& options);

}  // namespace dentalx
