#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dentalx/geometry.hpp"
#include "dentalx/image.hpp"
#include "dentalx/taxonomy.hpp"

namespace dentalx {

struct GroundTruthBox {
  Box box;
  int class_id = 0;
};

// IoU thresholds {0.50, 0.55, ..., 0.95}.
std::vector<double> coco_iou_thresholds();

struct PrecisionRecallPoint {
  double recall = 0;
  double precision = 0;
};

struct ClassAP {
  int class_id = 0;
  int num_ground_truth = 0;
  std::vector<double> ap_per_threshold;  // aligned with APReport::iou_thresholds
  std::vector<PrecisionRecallPoint> curve_at_50;
};

struct APReport {
  std::vector<double> iou_thresholds;
  double ap50 = 0;
  double ap75 = 0;
  double ap5095 = 0;
  std::vector<ClassAP> per_class;     // classes with at least one ground-truth box
  std::vector<int> excluded_classes;  // no ground truth; left out of the means
};

// 101-point interpolated AP for one class at one IoU threshold. predictions[i]
// and ground_truth[i] describe the same image.
double average_precision(std::span<const std::vector<Detection>> predictions,
                         std::span<const std::vector<GroundTruthBox>> ground_truth, int class_id,
                         double iou_threshold, std::vector<PrecisionRecallPoint>* curve = nullptr);

// ap50/ap75 are read from thresholds 0.5 and 0.75 when present; ap5095 averages
// every supplied threshold.
APReport compute_ap(std::span<const std::vector<Detection>> predictions,
                    std::span<const std::vector<GroundTruthBox>> ground_truth, int num_classes,
                    std::span<const double> iou_thresholds = {});

struct SegClassMetrics {
  int class_id = 0;
  std::uint64_t gt_pixels = 0;
  double iou = 0;
  double dice = 0;
  double accuracy = 0;
};

struct SegReport {
  std::vector<SegClassMetrics> per_class;  // every class, including absent ones
  double miou = 0;
  double mdice = 0;
  double macc = 0;
  double pixel_accuracy = 0;
};

// Confusion-matrix metrics accumulated over the whole image set. Means run over
// classes that occur in the ground truth.
SegReport compute_seg_metrics(std::span<const LabelMask> predictions, std::span<const LabelMask> ground_truth,
                              int num_labels);

// Fraction of the box's pixels (pixel centers inside the box) whose anatomy
// label is not allowed for the disease.
double forbidden_coverage(const Box& box, int class_id, const LabelMask& anatomy,
                          const DiseaseRuleTable& rules);

// Drops detections whose forbidden coverage reaches overlap_threshold. Classes
// missing from the rule table are kept (with a warning).
std::vector<Detection> domain_rule_filter(std::span<const Detection> detections, const LabelMask& anatomy,
                                          const DiseaseRuleTable& rules, double overlap_threshold = 0.5);

}  // namespace dentalx
