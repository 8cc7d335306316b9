#include "dentalx/losses.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>

#include "dentalx/errors.hpp"

namespace dentalx {

namespace F = torch::nn::functional;

namespace {

// Per-sample predictions flattened over all grid cells.
struct FlatPredictions {
  torch::Tensor cls;  // N x C
  torch::Tensor reg;  // N x 4
  torch::Tensor obj;  // N
};

FlatPredictions flatten(const HeadOutputs& outputs, int64_t row) {
  if (row < 0 || row >= outputs.batch_size()) throw std::out_of_range("head output row out of range");
  std::vector<torch::Tensor> cls, reg, obj;
  for (const auto& level : outputs.levels) {
    const auto c = level.class_logits[row];
    cls.push_back(c.reshape({c.size(0), -1}).t());
    const auto r = level.box_regression[row];
    reg.push_back(r.reshape({4, -1}).t());
    obj.push_back(level.objectness_logits[row].reshape({-1}));
  }
  return {torch::cat(cls, 0), torch::cat(reg, 0), torch::cat(obj, 0)};
}

// Differentiable IoU between matching rows of two N x 4 (x1, y1, x2, y2) tensors.
torch::Tensor paired_iou(const torch::Tensor& a, const torch::Tensor& b) {
  const auto iw = (torch::min(a.select(1, 2), b.select(1, 2)) - torch::max(a.select(1, 0), b.select(1, 0))).clamp_min(0);
  const auto ih = (torch::min(a.select(1, 3), b.select(1, 3)) - torch::max(a.select(1, 1), b.select(1, 1))).clamp_min(0);
  const auto inter = iw * ih;
  const auto area_a = (a.select(1, 2) - a.select(1, 0)) * (a.select(1, 3) - a.select(1, 1));
  const auto area_b = (b.select(1, 2) - b.select(1, 0)) * (b.select(1, 3) - b.select(1, 1));
  return inter / (area_a + area_b - inter).clamp_min(1e-12);
}

// Boxes decoded from raw regression for the given cells.
torch::Tensor decode_cells(const torch::Tensor& reg, const std::vector<GridCell>& cells,
                           const std::vector<int64_t>& indices) {
  const auto opts = reg.options();
  std::vector<double> col(indices.size()), rowv(indices.size()), stride(indices.size());
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const auto& c = cells[static_cast<std::size_t>(indices[k])];
    col[k] = c.col;
    rowv[k] = c.row;
    stride[k] = c.stride;
  }
  const auto n = static_cast<int64_t>(indices.size());
  const auto gx = torch::from_blob(col.data(), {n}, torch::kDouble).to(opts.dtype(), false, true);
  const auto gy = torch::from_blob(rowv.data(), {n}, torch::kDouble).to(opts.dtype(), false, true);
  const auto s = torch::from_blob(stride.data(), {n}, torch::kDouble).to(opts.dtype(), false, true);
  const auto idx = torch::from_blob(const_cast<int64_t*>(indices.data()), {n}, torch::kLong).clone();
  const auto r = reg.index_select(0, idx);
  const auto cx = (gx + r.select(1, 0)) * s;
  const auto cy = (gy + r.select(1, 1)) * s;
  const auto w = torch::exp(r.select(1, 2).clamp(-20.0, 20.0)) * s;
  const auto h = torch::exp(r.select(1, 3).clamp(-20.0, 20.0)) * s;
  return torch::stack({cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2}, 1);
}

Assignment center_prior(const std::vector<GridCell>& cells, const DetectionTarget& target, const ModelConfig& config,
                        double radius) {
  Assignment a;
  a.matched_gt.assign(cells.size(), -1);
  std::vector<double> best_dist(cells.size(), std::numeric_limits<double>::infinity());
  for (std::size_t g = 0; g < target.boxes.size(); ++g) {
    const Box& box = target.boxes[g].box;
    const int level = preferred_level(box, config);
    const double gx = (box.x1 + box.x2) / 2, gy = (box.y1 + box.y2) / 2;
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const auto& cell = cells[c];
      if (cell.level != level) continue;
      const double dx = cell.center_x() - gx, dy = cell.center_y() - gy;
      const double reach = radius * cell.stride;
      if (std::abs(dx) > reach || std::abs(dy) > reach) continue;
      const double dist = std::hypot(dx, dy);
      if (dist < best_dist[c]) {
        best_dist[c] = dist;
        a.matched_gt[c] = static_cast<int>(g);
      }
    }
  }
  return a;
}

Assignment simota(const FlatPredictions& pred, const std::vector<GridCell>& cells, const DetectionTarget& target,
                  double radius) {
  torch::NoGradGuard guard;
  Assignment a;
  a.matched_gt.assign(cells.size(), -1);
  const auto num_gt = target.boxes.size();
  if (num_gt == 0) return a;
  const auto n = static_cast<int64_t>(cells.size());
  std::vector<int64_t> all(cells.size());
  std::iota(all.begin(), all.end(), int64_t{0});
  const auto boxes = decode_cells(pred.reg.detach().to(torch::kDouble), cells, all);
  const auto cls_prob = torch::sigmoid(pred.cls.detach().to(torch::kDouble));
  const auto obj_prob = torch::sigmoid(pred.obj.detach().to(torch::kDouble)).unsqueeze(1);
  const auto joint = (cls_prob * obj_prob).sqrt_().clamp(1e-6, 1 - 1e-6);
  const auto b_acc = boxes.accessor<double, 2>();
  const auto j_acc = joint.accessor<double, 2>();
  const int64_t num_classes = joint.size(1);

  std::vector<std::vector<double>> cost(num_gt, std::vector<double>(cells.size()));
  std::vector<std::vector<double>> ious(num_gt, std::vector<double>(cells.size()));
  std::vector<bool> candidate(cells.size(), false);
  for (std::size_t g = 0; g < num_gt; ++g) {
    const Box& gt = target.boxes[g].box;
    const double gx = (gt.x1 + gt.x2) / 2, gy = (gt.y1 + gt.y2) / 2;
    for (int64_t c = 0; c < n; ++c) {
      const auto& cell = cells[static_cast<std::size_t>(c)];
      const double px = cell.center_x(), py = cell.center_y();
      const bool in_box = px > gt.x1 && px < gt.x2 && py > gt.y1 && py < gt.y2;
      const double reach = radius * cell.stride;
      const bool in_center = std::abs(px - gx) < reach && std::abs(py - gy) < reach;
      if (in_box || in_center) candidate[static_cast<std::size_t>(c)] = true;
      const double iou = box_iou({b_acc[c][0], b_acc[c][1], b_acc[c][2], b_acc[c][3]}, gt);
      double cls_cost = 0;
      for (int64_t k = 0; k < num_classes; ++k) {
        const double p = j_acc[c][k];
        cls_cost -= k == target.boxes[g].class_id ? std::log(p) : std::log(1 - p);
      }
      ious[g][static_cast<std::size_t>(c)] = iou;
      cost[g][static_cast<std::size_t>(c)] = cls_cost + 3.0 * -std::log(iou + 1e-8) + (in_box && in_center ? 0.0 : 1e5);
    }
  }

  std::vector<int64_t> cand;
  for (std::size_t c = 0; c < cells.size(); ++c)
    if (candidate[c]) cand.push_back(static_cast<int64_t>(c));
  std::vector<double> chosen_cost(cells.size(), std::numeric_limits<double>::infinity());
  for (std::size_t g = 0; g < num_gt; ++g) {
    std::vector<double> cand_iou;
    for (auto c : cand) cand_iou.push_back(ious[g][static_cast<std::size_t>(c)]);
    std::sort(cand_iou.begin(), cand_iou.end(), std::greater<>());
    const std::size_t top = std::min<std::size_t>(10, cand_iou.size());
    const int k = std::max(1, static_cast<int>(std::accumulate(cand_iou.begin(), cand_iou.begin() + static_cast<std::ptrdiff_t>(top), 0.0)));
    std::vector<int64_t> order = cand;
    std::stable_sort(order.begin(), order.end(), [&](int64_t x, int64_t y) {
      return cost[g][static_cast<std::size_t>(x)] < cost[g][static_cast<std::size_t>(y)];
    });
    for (int i = 0; i < k && i < static_cast<int>(order.size()); ++i) {
      const auto c = static_cast<std::size_t>(order[static_cast<std::size_t>(i)]);
      if (cost[g][c] < chosen_cost[c]) {
        chosen_cost[c] = cost[g][c];
        a.matched_gt[c] = static_cast<int>(g);
      }
    }
  }
  return a;
}

torch::Tensor zero_like_scalar(const torch::TensorOptions& opts) { return torch::zeros({}, opts); }

torch::Tensor mask_tensor(const LabelMask& mask) {
  auto t = torch::empty({mask.height, mask.width}, torch::kUInt8);
  std::memcpy(t.data_ptr<std::uint8_t>(), mask.data.data(), mask.data.size());
  return t.to(torch::kLong);
}

}  // namespace

void DetectionTarget::validate(const ModelConfig& config) const {
  for (const auto& g : boxes) {
    if (!g.box.valid()) throw DataError("detection target holds a degenerate box");
    if (g.box.x1 < 0 || g.box.y1 < 0 || g.box.x2 > config.input_width || g.box.y2 > config.input_height)
      throw DataError("detection target box lies outside the image");
    if (g.class_id < 0 || g.class_id >= config.num_disease_classes)
      throw DataError("detection target class out of range");
  }
}

std::vector<GridCell> grid_cells(const ModelConfig& config) {
  std::vector<GridCell> cells;
  for (int l = 0; l < 3; ++l) {
    const int s = config.strides[static_cast<std::size_t>(l)];
    for (int i = 0; i < config.input_height / s; ++i)
      for (int j = 0; j < config.input_width / s; ++j) cells.push_back({l, i, j, s});
  }
  return cells;
}

int Assignment::num_positive() const {
  return static_cast<int>(std::count_if(matched_gt.begin(), matched_gt.end(), [](int g) { return g >= 0; }));
}

std::vector<int64_t> Assignment::positive_cells() const {
  std::vector<int64_t> out;
  for (std::size_t c = 0; c < matched_gt.size(); ++c)
    if (matched_gt[c] >= 0) out.push_back(static_cast<int64_t>(c));
  return out;
}

LossOptions LossOptions::from(const TrainConfig& train) {
  return {train.assigner, train.center_radius, train.overlap_loss};
}

int preferred_level(const Box& box, const ModelConfig& config) {
  const double size = std::log2(std::sqrt(std::max(box.area(), 1e-12)));
  int best = 0;
  double best_gap = std::numeric_limits<double>::infinity();
  for (int l = 0; l < 3; ++l) {
    const double gap = std::abs(size - std::log2(4.0 * config.strides[static_cast<std::size_t>(l)]));
    if (gap < best_gap) {
      best_gap = gap;
      best = l;
    }
  }
  return best;
}

Assignment assign_targets(const HeadOutputs& outputs, int64_t row, const DetectionTarget& target,
                          const ModelConfig& config, const LossOptions& options) {
  const auto cells = grid_cells(config);
  int64_t expected = 0;
  for (const auto& level : outputs.levels) expected += level.objectness_logits.size(2) * level.objectness_logits.size(3);
  if (expected != static_cast<int64_t>(cells.size()))
    throw ShapeError("assign_targets: head outputs do not match the config grid");
  if (options.assigner == Assigner::kSimOTA) return simota(flatten(outputs, row), cells, target, options.center_radius);
  return center_prior(cells, target, config, options.center_radius);
}

DetectionLossTerms detection_loss(const HeadOutputs& outputs, int64_t row, const DetectionTarget& target,
                                  const Assignment& assignment, const ModelConfig& config) {
  const auto pred = flatten(outputs, row);
  const auto opts = pred.obj.options();
  const auto cells = grid_cells(config);
  if (assignment.matched_gt.size() != cells.size()) throw ShapeError("detection_loss: assignment size mismatch");

  const auto positives = assignment.positive_cells();
  const auto num_pos = static_cast<int64_t>(positives.size());

  auto obj_target = torch::zeros_like(pred.obj);
  DetectionLossTerms terms;
  if (num_pos == 0) {
    terms.reg = zero_like_scalar(opts);
    terms.cls = zero_like_scalar(opts);
    terms.obj = F::binary_cross_entropy_with_logits(pred.obj, obj_target,
                                                    F::BinaryCrossEntropyWithLogitsFuncOptions().reduction(torch::kSum));
    return terms;
  }

  const auto idx = torch::from_blob(const_cast<int64_t*>(positives.data()), {num_pos}, torch::kLong).clone();
  obj_target.index_fill_(0, idx, 1.0);

  std::vector<double> gt_coords;
  std::vector<int64_t> gt_classes;
  for (auto c : positives) {
    const auto& g = target.boxes.at(static_cast<std::size_t>(assignment.matched_gt[static_cast<std::size_t>(c)]));
    gt_coords.insert(gt_coords.end(), {g.box.x1, g.box.y1, g.box.x2, g.box.y2});
    gt_classes.push_back(g.class_id);
  }
  const auto gt_boxes = torch::from_blob(gt_coords.data(), {num_pos, 4}, torch::kDouble).to(opts.dtype(), false, true);
  const auto cls_target = F::one_hot(torch::from_blob(gt_classes.data(), {num_pos}, torch::kLong).clone(),
                                     config.num_disease_classes)
                              .to(opts.dtype());

  const auto decoded = decode_cells(pred.reg, cells, positives);
  const double denom = static_cast<double>(num_pos);
  terms.reg = (1.0 - paired_iou(decoded, gt_boxes)).sum() / denom;
  terms.obj = F::binary_cross_entropy_with_logits(pred.obj, obj_target,
                                                  F::BinaryCrossEntropyWithLogitsFuncOptions().reduction(torch::kSum)) /
              denom;
  terms.cls = F::binary_cross_entropy_with_logits(pred.cls.index_select(0, idx), cls_target,
                                                  F::BinaryCrossEntropyWithLogitsFuncOptions().reduction(torch::kSum)) /
              denom;
  return terms;
}

SegmentationLossTerms segmentation_loss(const torch::Tensor& seg_logits, const LabelMask& target, OverlapLoss overlap) {
  auto logits = seg_logits.dim() == 3 ? seg_logits.unsqueeze(0) : seg_logits;
  if (logits.dim() != 4 || logits.size(0) != 1) throw ShapeError("segmentation_loss: expected one C x h x w map");
  const int64_t num_classes = logits.size(1);
  for (auto v : target.data)
    if (v >= num_classes) throw DataError("segmentation target value " + std::to_string(v) + " out of range");
  if (logits.size(2) != target.height || logits.size(3) != target.width) {
    logits = F::interpolate(logits, F::InterpolateFuncOptions()
                                        .size(std::vector<int64_t>{target.height, target.width})
                                        .mode(torch::kBilinear)
                                        .align_corners(false));
  }
  const auto flat = logits.squeeze(0).reshape({num_classes, -1}).t();  // P x C
  const auto labels = mask_tensor(target).reshape({-1});
  const auto log_probs = torch::log_softmax(flat, 1);

  SegmentationLossTerms terms;
  terms.ce = -log_probs.gather(1, labels.unsqueeze(1)).mean();

  const auto probs = log_probs.exp();
  const auto onehot = F::one_hot(labels, num_classes).to(probs.dtype());
  const auto inter = (probs * onehot).sum(0);
  const auto pred_mass = probs.sum(0);
  const auto target_mass = onehot.sum(0);

  std::vector<int64_t> keep;
  {
    const auto pm = pred_mass.detach().to(torch::kDouble).contiguous();
    const auto tm = target_mass.detach().to(torch::kDouble).contiguous();
    for (int64_t k = 0; k < num_classes; ++k) {
      const bool absent = tm[k].item<double>() == 0.0 && pm[k].item<double>() < kAbsentClassMass;
      if (!absent) keep.push_back(k);
    }
  }
  if (keep.empty()) {
    terms.overlap = torch::zeros({}, probs.options());
    return terms;
  }
  const auto kidx = torch::from_blob(keep.data(), {static_cast<int64_t>(keep.size())}, torch::kLong).clone();
  const auto i = inter.index_select(0, kidx);
  const auto p = pred_mass.index_select(0, kidx);
  const auto t = target_mass.index_select(0, kidx);
  const auto score = overlap == OverlapLoss::kDice ? 2.0 * i / (p + t).clamp_min(1e-12) : i / (p + t - i).clamp_min(1e-12);
  terms.overlap = 1.0 - score.mean();
  return terms;
}

Task LabeledSample::task() const {
  if (detection.has_value() == segmentation.has_value())
    throw DataError("a training sample must carry exactly one task's labels");
  return detection ? Task::kDetection : Task::kSegmentation;
}

nlohmann::json LossValues::to_json() const {
  return {{"l_reg", l_reg}, {"l_obj", l_obj}, {"l_cls", l_cls}, {"l_ce", l_ce},
          {"l_iou", l_iou}, {"l_det", l_det}, {"l_seg", l_seg}, {"total", total}};
}

LossValues JointLossBreakdown::values() const {
  auto v = [](const torch::Tensor& t) { return t.detach().to(torch::kDouble).item<double>(); };
  LossValues out;
  out.l_reg = v(l_reg);
  out.l_obj = v(l_obj);
  out.l_cls = v(l_cls);
  out.l_ce = v(l_ce);
  out.l_iou = v(l_iou);
  out.l_det = v(l_det());
  out.l_seg = v(l_seg());
  out.total = v(total());
  return out;
}

JointLossBreakdown joint_loss(const ModelOutputs& outputs, int64_t index, const LabeledSample& sample,
                              const ModelConfig& config, const LossOptions& options) {
  const Task task = sample.task();
  JointLossBreakdown out;
  if (task == Task::kDetection) {
    if (!outputs.head || index >= static_cast<int64_t>(outputs.head_rows.size()) ||
        outputs.head_rows[static_cast<std::size_t>(index)] < 0)
      throw std::logic_error("joint_loss: detection sample without head outputs");
    const int64_t row = outputs.head_rows[static_cast<std::size_t>(index)];
    sample.detection->validate(config);
    const auto assignment = assign_targets(*outputs.head, row, *sample.detection, config, options);
    const auto terms = detection_loss(*outputs.head, row, *sample.detection, assignment, config);
    out.l_reg = terms.reg;
    out.l_obj = terms.obj;
    out.l_cls = terms.cls;
    out.l_ce = torch::zeros({}, terms.obj.options());
    out.l_iou = torch::zeros({}, terms.obj.options());
  } else {
    if (!outputs.context || index >= static_cast<int64_t>(outputs.seg_rows.size()) ||
        outputs.seg_rows[static_cast<std::size_t>(index)] < 0)
      throw std::logic_error("joint_loss: segmentation sample without SCE outputs");
    const int64_t row = outputs.seg_rows[static_cast<std::size_t>(index)];
    const auto terms = segmentation_loss(outputs.context->seg_logits[row], *sample.segmentation, options.overlap);
    out.l_ce = terms.ce;
    out.l_iou = terms.overlap;
    out.l_reg = torch::zeros({}, terms.ce.options());
    out.l_obj = torch::zeros({}, terms.ce.options());
    out.l_cls = torch::zeros({}, terms.ce.options());
  }
  return out;
}

}  // namespace dentalx
