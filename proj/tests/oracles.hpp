// Slow, loop-based reference implementations used as test oracles. They share
// no code with the library.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <vector>

namespace oracle {

struct Rect {
  double x1, y1, x2, y2;
};

inline double iou(const Rect& a, const Rect& b) {
  const double aa = std::max(0.0, a.x2 - a.x1) * std::max(0.0, a.y2 - a.y1);
  const double ab = std::max(0.0, b.x2 - b.x1) * std::max(0.0, b.y2 - b.y1);
  if (aa <= 0 || ab <= 0) return 0;
  const double w = std::max(0.0, std::min(a.x2, b.x2) - std::max(a.x1, b.x1));
  const double h = std::max(0.0, std::min(a.y2, b.y2) - std::max(a.y1, b.y1));
  return w * h / (aa + ab - w * h);
}

struct Pred {
  int image;
  Rect box;
  int cls;
  double score;
};

struct Truth {
  int image;
  Rect box;
  int cls;
};

// AP for one class: score-ordered greedy matching, then precision sampled at
// 101 recall levels as the maximum precision over all operating points whose
// recall reaches the level (quadratic, no envelope trick).
inline double average_precision(const std::vector<Pred>& preds, const std::vector<Truth>& truth, int cls,
                                double thr) {
  std::vector<Pred> p;
  for (const auto& x : preds)
    if (x.cls == cls) p.push_back(x);
  std::vector<Truth> g;
  for (const auto& x : truth)
    if (x.cls == cls) g.push_back(x);
  if (g.empty()) return -1;
  std::stable_sort(p.begin(), p.end(), [](const Pred& a, const Pred& b) { return a.score > b.score; });
  std::vector<bool> used(g.size(), false);
  std::vector<double> recall, precision;
  int tp = 0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    int best = -1;
    double best_iou = -1;
    for (std::size_t j = 0; j < g.size(); ++j) {
      if (used[j] || g[j].image != p[k].image) continue;
      const double v = iou(p[k].box, g[j].box);
      if (v >= thr && v > best_iou) {
        best_iou = v;
        best = static_cast<int>(j);
      }
    }
    if (best >= 0) {
      used[static_cast<std::size_t>(best)] = true;
      ++tp;
    }
    recall.push_back(static_cast<double>(tp) / static_cast<double>(g.size()));
    precision.push_back(static_cast<double>(tp) / static_cast<double>(k + 1));
  }
  double sum = 0;
  for (int r = 0; r <= 100; ++r) {
    const double level = r / 100.0;
    double best = 0;
    for (std::size_t k = 0; k < recall.size(); ++k)
      if (recall[k] >= level - 1e-12) best = std::max(best, precision[k]);
    sum += best;
  }
  return sum / 101.0;
}

// Greedy suppression by checking every candidate against every kept box.
struct NmsItem {
  Rect box;
  int cls;
  double score;
};

inline std::vector<NmsItem> nms(std::vector<NmsItem> items, double thr) {
  std::sort(items.begin(), items.end(), [](const NmsItem& a, const NmsItem& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.cls != b.cls) return a.cls < b.cls;
    return a.box.x1 < b.box.x1;
  });
  std::vector<NmsItem> kept;
  for (const auto& c : items) {
    bool suppressed = false;
    for (const auto& k : kept)
      if (k.cls == c.cls && iou(k.box, c.box) > thr) suppressed = true;
    if (!suppressed) kept.push_back(c);
  }
  return kept;
}

struct SegMetrics {
  std::vector<double> iou, dice, acc;
  std::vector<bool> present;
  double miou = 0, mdice = 0, macc = 0;
};

// Per-class pixel counting over flattened masks.
inline SegMetrics seg_metrics(const std::vector<std::vector<std::uint8_t>>& pred,
                              const std::vector<std::vector<std::uint8_t>>& gt, int num_labels) {
  SegMetrics m;
  int present = 0;
  for (int c = 0; c < num_labels; ++c) {
    double tp = 0, fp = 0, fn = 0, gt_count = 0;
    for (std::size_t i = 0; i < pred.size(); ++i)
      for (std::size_t k = 0; k < pred[i].size(); ++k) {
        const bool p = pred[i][k] == c, t = gt[i][k] == c;
        tp += p && t;
        fp += p && !t;
        fn += !p && t;
        gt_count += t;
      }
    const bool here = gt_count > 0;
    m.present.push_back(here);
    m.iou.push_back(tp + fp + fn > 0 ? tp / (tp + fp + fn) : 0);
    m.dice.push_back(2 * tp + fp + fn > 0 ? 2 * tp / (2 * tp + fp + fn) : 0);
    m.acc.push_back(here ? tp / gt_count : 0);
    if (here) {
      ++present;
      m.miou += m.iou.back();
      m.mdice += m.dice.back();
      m.macc += m.acc.back();
    }
  }
  if (present > 0) {
    m.miou /= present;
    m.mdice /= present;
    m.macc /= present;
  }
  return m;
}

// logits[c][pixel]; labels[pixel].
inline double cross_entropy(const std::vector<std::vector<double>>& logits, const std::vector<int>& labels) {
  double total = 0;
  for (std::size_t p = 0; p < labels.size(); ++p) {
    double mx = -std::numeric_limits<double>::infinity();
    for (const auto& ch : logits) mx = std::max(mx, ch[p]);
    double z = 0;
    for (const auto& ch : logits) z += std::exp(ch[p] - mx);
    total += -(logits[static_cast<std::size_t>(labels[p])][p] - mx - std::log(z));
  }
  return total / static_cast<double>(labels.size());
}

// 1 - mean soft Jaccard (or Dice) over softmax probabilities; classes with no
// target pixels and prediction mass below `absent_mass` are skipped.
inline double soft_overlap_loss(const std::vector<std::vector<double>>& logits, const std::vector<int>& labels,
                                bool dice, double absent_mass) {
  const std::size_t C = logits.size(), P = labels.size();
  std::vector<std::vector<double>> prob(C, std::vector<double>(P));
  for (std::size_t p = 0; p < P; ++p) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < C; ++c) mx = std::max(mx, logits[c][p]);
    double z = 0;
    for (std::size_t c = 0; c < C; ++c) z += std::exp(logits[c][p] - mx);
    for (std::size_t c = 0; c < C; ++c) prob[c][p] = std::exp(logits[c][p] - mx) / z;
  }
  double sum = 0;
  int counted = 0;
  for (std::size_t c = 0; c < C; ++c) {
    double inter = 0, pm = 0, tm = 0;
    for (std::size_t p = 0; p < P; ++p) {
      const double t = labels[p] == static_cast<int>(c) ? 1.0 : 0.0;
      inter += prob[c][p] * t;
      pm += prob[c][p];
      tm += t;
    }
    if (tm == 0 && pm < absent_mass) continue;
    sum += dice ? 2 * inter / (pm + tm) : inter / (pm + tm - inter);
    ++counted;
  }
  return counted == 0 ? 0.0 : 1.0 - sum / counted;
}

inline double bce_with_logits(double x, double y) {
  const double log_sig = x >= 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
  const double log_one_minus = x >= 0 ? -x - std::log1p(std::exp(-x)) : -std::log1p(std::exp(x));
  return -(y * log_sig + (1 - y) * log_one_minus);
}

// Half-pixel bilinear resize of one channel (h x w) to (H x W), edge-clamped.
inline std::vector<double> bilinear(const std::vector<double>& src, int h, int w, int H, int W) {
  std::vector<double> out(static_cast<std::size_t>(H) * W);
  const double sy = static_cast<double>(h) / H, sx = static_cast<double>(w) / W;
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      const double fy = std::max(0.0, (y + 0.5) * sy - 0.5), fx = std::max(0.0, (x + 0.5) * sx - 0.5);
      const int y0 = std::min(static_cast<int>(fy), h - 1), x0 = std::min(static_cast<int>(fx), w - 1);
      const int y1 = std::min(y0 + 1, h - 1), x1 = std::min(x0 + 1, w - 1);
      const double ly = fy - y0, lx = fx - x0;
      auto at = [&](int yy, int xx) { return src[static_cast<std::size_t>(yy) * w + xx]; };
      out[static_cast<std::size_t>(y) * W + x] = (1 - ly) * ((1 - lx) * at(y0, x0) + lx * at(y0, x1)) +
                                                  ly * ((1 - lx) * at(y1, x0) + lx * at(y1, x1));
    }
  return out;
}

}  // namespace oracle
