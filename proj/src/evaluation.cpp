#include "dentalx/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>

#include "dentalx/errors.hpp"

namespace dentalx {
namespace {

constexpr int kRecallPoints = 101;

bool near(double a, double b) { return std::abs(a - b) < 1e-9; }

double mean(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

template <typename Fn>
void for_each_box_pixel(const Box& box, int width, int height, Fn&& fn) {
  const int x0 = std::max(0, static_cast<int>(std::floor(box.x1 - 0.5)));
  const int y0 = std::max(0, static_cast<int>(std::floor(box.y1 - 0.5)));
  const int x1 = std::min(width - 1, static_cast<int>(std::ceil(box.x2)));
  const int y1 = std::min(height - 1, static_cast<int>(std::ceil(box.y2)));
  for (int y = y0; y <= y1; ++y) {
    const double cy = y + 0.5;
    if (cy < box.y1 || cy >= box.y2) continue;
    for (int x = x0; x <= x1; ++x) {
      const double cx = x + 0.5;
      if (cx < box.x1 || cx >= box.x2) continue;
      fn(x, y);
    }
  }
}

}  // namespace

std::vector<double> coco_iou_thresholds() {
  std::vector<double> t;
  for (int i = 0; i < 10; ++i) t.push_back(0.5 + 0.05 * i);
  return t;
}

double average_precision(std::span<const std::vector<Detection>> predictions,
                         std::span<const std::vector<GroundTruthBox>> ground_truth, int class_id,
                         double iou_threshold, std::vector<PrecisionRecallPoint>* curve) {
  if (predictions.size() != ground_truth.size())
    throw DataError("average_precision: predictions and ground truth cover different image counts");

  struct Scored {
    std::size_t image;
    const Detection* det;
  };
  std::vector<Scored> scored;
  std::size_t num_gt = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    for (const auto& d : predictions[i])
      if (d.class_id == class_id) scored.push_back({i, &d});
    for (const auto& g : ground_truth[i])
      if (g.class_id == class_id) ++num_gt;
  }
  if (curve) curve->clear();
  if (num_gt == 0) return 0.0;

  std::stable_sort(scored.begin(), scored.end(),
                   [](const Scored& a, const Scored& b) { return a.det->score > b.det->score; });

  std::vector<std::vector<bool>> matched(ground_truth.size());
  for (std::size_t i = 0; i < ground_truth.size(); ++i) matched[i].assign(ground_truth[i].size(), false);

  std::vector<double> precision, recall;
  precision.reserve(scored.size());
  recall.reserve(scored.size());
  std::size_t tp = 0;
  for (std::size_t k = 0; k < scored.size(); ++k) {
    const auto& gts = ground_truth[scored[k].image];
    auto& used = matched[scored[k].image];
    double best = iou_threshold;
    std::ptrdiff_t best_idx = -1;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (gts[g].class_id != class_id || used[g]) continue;
      const double iou = box_iou(scored[k].det->box, gts[g].box);
      if (iou >= best) {
        best = iou;
        best_idx = static_cast<std::ptrdiff_t>(g);
      }
    }
    if (best_idx >= 0) {
      used[static_cast<std::size_t>(best_idx)] = true;
      ++tp;
    }
    precision.push_back(static_cast<double>(tp) / static_cast<double>(k + 1));
    recall.push_back(static_cast<double>(tp) / static_cast<double>(num_gt));
  }
  if (curve)
    for (std::size_t k = 0; k < precision.size(); ++k) curve->push_back({recall[k], precision[k]});

  // Precision envelope, then sample at recall 0, 0.01, ..., 1.
  for (std::size_t k = precision.size(); k-- > 1;) precision[k - 1] = std::max(precision[k - 1], precision[k]);
  double sum = 0;
  for (int r = 0; r < kRecallPoints; ++r) {
    const double target = static_cast<double>(r) / (kRecallPoints - 1);
    auto it = std::lower_bound(recall.begin(), recall.end(), target);
    if (it != recall.end()) sum += precision[static_cast<std::size_t>(it - recall.begin())];
  }
  return sum / kRecallPoints;
}

APReport compute_ap(std::span<const std::vector<Detection>> predictions,
                    std::span<const std::vector<GroundTruthBox>> ground_truth, int num_classes,
                    std::span<const double> iou_thresholds) {
  APReport report;
  report.iou_thresholds = iou_thresholds.empty() ? coco_iou_thresholds()
                                                 : std::vector<double>(iou_thresholds.begin(), iou_thresholds.end());
  for (double t : report.iou_thresholds)
    if (!(t > 0.0 && t <= 1.0)) throw ConfigError("IoU thresholds must lie in (0, 1]");

  for (int c = 0; c < num_classes; ++c) {
    ClassAP cls;
    cls.class_id = c;
    for (const auto& gts : ground_truth)
      for (const auto& g : gts) cls.num_ground_truth += g.class_id == c ? 1 : 0;
    if (cls.num_ground_truth == 0) {
      report.excluded_classes.push_back(c);
      continue;
    }
    for (double t : report.iou_thresholds) {
      std::vector<PrecisionRecallPoint>* curve = near(t, 0.5) ? &cls.curve_at_50 : nullptr;
      cls.ap_per_threshold.push_back(average_precision(predictions, ground_truth, c, t, curve));
    }
    report.per_class.push_back(std::move(cls));
  }
  if (!report.excluded_classes.empty()) {
    std::clog << "[eval] " << report.excluded_classes.size()
              << " class(es) without ground truth excluded from AP means\n";
  }

  std::vector<double> at50, at75, all;
  for (const auto& cls : report.per_class) {
    for (std::size_t t = 0; t < report.iou_thresholds.size(); ++t) {
      if (near(report.iou_thresholds[t], 0.5)) at50.push_back(cls.ap_per_threshold[t]);
      if (near(report.iou_thresholds[t], 0.75)) at75.push_back(cls.ap_per_threshold[t]);
    }
    all.push_back(mean(cls.ap_per_threshold));
  }
  report.ap50 = mean(at50);
  report.ap75 = mean(at75);
  report.ap5095 = mean(all);
  return report;
}

SegReport compute_seg_metrics(std::span<const LabelMask> predictions, std::span<const LabelMask> ground_truth,
                              int num_labels) {
  if (predictions.size() != ground_truth.size()) throw ShapeError("seg metrics: image counts differ");
  if (num_labels < 1) throw ConfigError("seg metrics: num_labels must be positive");
  const auto k = static_cast<std::size_t>(num_labels);
  std::vector<std::uint64_t> confusion(k * k, 0);  // [gt][pred]
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const auto& p = predictions[i];
    const auto& g = ground_truth[i];
    if (p.width != g.width || p.height != g.height) throw ShapeError("seg metrics: mask shapes differ");
    for (std::size_t px = 0; px < g.size(); ++px) {
      if (g.data[px] >= k || p.data[px] >= k) throw DataError("seg metrics: label out of range");
      ++confusion[g.data[px] * k + p.data[px]];
    }
  }

  SegReport report;
  std::uint64_t correct = 0, total = 0;
  std::vector<double> ious, dices, accs;
  for (std::size_t c = 0; c < k; ++c) {
    std::uint64_t gt_count = 0, pred_count = 0;
    for (std::size_t j = 0; j < k; ++j) {
      gt_count += confusion[c * k + j];
      pred_count += confusion[j * k + c];
    }
    const std::uint64_t tp = confusion[c * k + c];
    correct += tp;
    total += gt_count;
    SegClassMetrics m;
    m.class_id = static_cast<int>(c);
    m.gt_pixels = gt_count;
    const std::uint64_t uni = gt_count + pred_count - tp;
    m.iou = uni ? static_cast<double>(tp) / static_cast<double>(uni) : 0.0;
    m.dice = (gt_count + pred_count) ? 2.0 * static_cast<double>(tp) / static_cast<double>(gt_count + pred_count) : 0.0;
    m.accuracy = gt_count ? static_cast<double>(tp) / static_cast<double>(gt_count) : 0.0;
    if (gt_count > 0) {
      ious.push_back(m.iou);
      dices.push_back(m.dice);
      accs.push_back(m.accuracy);
    }
    report.per_class.push_back(m);
  }
  report.miou = mean(ious);
  report.mdice = mean(dices);
  report.macc = mean(accs);
  report.pixel_accuracy = total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
  return report;
}

double forbidden_coverage(const Box& box, int class_id, const LabelMask& anatomy, const DiseaseRuleTable& rules) {
  const auto& allowed = rules.allowed(class_id);
  std::size_t inside = 0, forbidden = 0;
  for_each_box_pixel(box, anatomy.width, anatomy.height, [&](int x, int y) {
    ++inside;
    if (!allowed.contains(anatomy.at(x, y))) ++forbidden;
  });
  return inside ? static_cast<double>(forbidden) / static_cast<double>(inside) : 0.0;
}

std::vector<Detection> domain_rule_filter(std::span<const Detection> detections, const LabelMask& anatomy,
                                          const DiseaseRuleTable& rules, double overlap_threshold) {
  std::vector<Detection> kept;
  for (const auto& d : detections) {
    if (!rules.contains(d.class_id)) {
      std::clog << "[filter] warning: no rule for disease class " << d.class_id << ", detection kept\n";
      kept.push_back(d);
      continue;
    }
    if (forbidden_coverage(d.box, d.class_id, anatomy, rules) < overlap_threshold) kept.push_back(d);
  }
  return kept;
}

}  // namespace dentalx
