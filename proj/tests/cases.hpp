// Random inputs shared by the unit and acceptance suites.
#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include <torch/torch.h>

#include "dentalx/config.hpp"
#include "dentalx/detection.hpp"
#include "dentalx/evaluation.hpp"
#include "dentalx/losses.hpp"
#include "oracles.hpp"

namespace cases {

using namespace dentalx;

struct MicroCase {
  std::vector<std::vector<Detection>> preds;
  std::vector<std::vector<GroundTruthBox>> gts;
  std::vector<oracle::Pred> opreds;
  std::vector<oracle::Truth> ogts;
};

// Up to 3 images and 5 boxes per image; predictions jitter ground truth so
// that every IoU threshold sees a mix of hits and misses.
inline MicroCase micro_case(std::mt19937& rng, int num_classes) {
  std::uniform_int_distribution<int> images(1, 3), boxes(0, 5), cls(0, num_classes - 1);
  std::uniform_real_distribution<double> pos(0, 40), size(4, 20), jitter(-3, 3), score(0, 1), coin(0, 1);
  MicroCase m;
  const int n = images(rng);
  m.preds.resize(static_cast<std::size_t>(n));
  m.gts.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const int ng = boxes(rng);
    for (int k = 0; k < ng; ++k) {
      const double x = pos(rng), y = pos(rng);
      const GroundTruthBox g{{x, y, x + size(rng), y + size(rng)}, cls(rng)};
      m.gts[static_cast<std::size_t>(i)].push_back(g);
      m.ogts.push_back({i, {g.box.x1, g.box.y1, g.box.x2, g.box.y2}, g.class_id});
      if (coin(rng) < 0.8) {
        const Box b{g.box.x1 + jitter(rng), g.box.y1 + jitter(rng), g.box.x2 + jitter(rng), g.box.y2 + jitter(rng)};
        const int c = coin(rng) < 0.85 ? g.class_id : cls(rng);
        m.preds[static_cast<std::size_t>(i)].push_back({b, c, score(rng)});
      }
    }
    const int extra = boxes(rng) / 2;
    for (int k = 0; k < extra; ++k) {
      const double x = pos(rng), y = pos(rng);
      m.preds[static_cast<std::size_t>(i)].push_back({{x, y, x + size(rng), y + size(rng)}, cls(rng), score(rng)});
    }
    for (const auto& d : m.preds[static_cast<std::size_t>(i)])
      m.opreds.push_back({i, {d.box.x1, d.box.y1, d.box.x2, d.box.y2}, d.class_id, d.score});
  }
  return m;
}

inline HeadOutputs random_outputs(const ModelConfig& cfg, int64_t batch, torch::Dtype dtype = torch::kDouble) {
  HeadOutputs out;
  for (int l = 0; l < 3; ++l) {
    const int s = cfg.strides[static_cast<std::size_t>(l)];
    const int h = cfg.input_height / s, w = cfg.input_width / s;
    auto& level = out.levels[static_cast<std::size_t>(l)];
    level.class_logits = torch::randn({batch, cfg.num_disease_classes, h, w}, dtype);
    level.box_regression = 0.3 * torch::randn({batch, 4, h, w}, dtype);
    level.objectness_logits = torch::randn({batch, 1, h, w}, dtype);
    level.stride = s;
  }
  return out;
}

// Scalar view of one cell of the head outputs.
struct CellView {
  std::vector<double> cls;
  double reg[4];
  double obj;
};

inline CellView cell_view(const HeadOutputs& out, const GridCell& cell) {
  const auto& lv = out.levels[static_cast<std::size_t>(cell.level)];
  CellView v;
  for (int64_t k = 0; k < lv.class_logits.size(1); ++k)
    v.cls.push_back(lv.class_logits[0][k][cell.row][cell.col].item<double>());
  for (int k = 0; k < 4; ++k) v.reg[k] = lv.box_regression[0][k][cell.row][cell.col].item<double>();
  v.obj = lv.objectness_logits[0][0][cell.row][cell.col].item<double>();
  return v;
}

// Scalar-loop detection loss for one image: (reg, obj, cls) normalised by the
// number of positives.
struct DetectionLossReference {
  double reg = 0, obj = 0, cls = 0;
  int positives = 0;
};

inline DetectionLossReference detection_loss_reference(const HeadOutputs& out, const DetectionTarget& t,
                                                       const Assignment& a, const std::vector<GridCell>& cells) {
  DetectionLossReference r;
  for (std::size_t k = 0; k < cells.size(); ++k) {
    const auto v = cell_view(out, cells[k]);
    const int g = a.matched_gt[k];
    r.obj += oracle::bce_with_logits(v.obj, g >= 0 ? 1.0 : 0.0);
    if (g < 0) continue;
    ++r.positives;
    const double s = cells[k].stride;
    const double cx = (cells[k].col + v.reg[0]) * s, cy = (cells[k].row + v.reg[1]) * s;
    const double w = std::exp(v.reg[2]) * s, h = std::exp(v.reg[3]) * s;
    const Box& b = t.boxes[static_cast<std::size_t>(g)].box;
    r.reg += 1.0 - oracle::iou({cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2}, {b.x1, b.y1, b.x2, b.y2});
    for (std::size_t q = 0; q < v.cls.size(); ++q)
      r.cls += oracle::bce_with_logits(v.cls[q], static_cast<int>(q) == t.boxes[static_cast<std::size_t>(g)].class_id);
  }
  const double n = std::max(r.positives, 1);
  r.reg /= n;
  r.obj /= n;
  r.cls /= n;
  return r;
}

}  // namespace cases
