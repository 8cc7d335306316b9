#pragma once

#include <span>
#include <vector>

namespace dentalx {

// Axis-aligned box in input-image pixels, (x1, y1) top-left, (x2, y2) bottom-right.
struct Box {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double area() const;
  bool valid() const { return x1 < x2 && y1 < y2; }

  friend bool operator==(const Box&, const Box&) = default;
};

struct Detection {
  Box box;
  int class_id = 0;
  double score = 0;

  friend bool operator==(const Detection&, const Detection&) = default;
};

// Intersection over union; zero for degenerate boxes.
double box_iou(const Box& a, const Box& b);

Box clip_box(const Box& box, double width, double height);

// Greedy per-class suppression in descending score order. Ties are broken by
// lower class id, then lower x1. A box is dropped when its IoU with an already
// retained box of the same class exceeds iou_threshold.
std::vector<Detection> nms(std::span<const Detection> detections, double iou_threshold);

// The ordering nms() uses; exposed so callers can reproduce it.
bool detection_rank_less(const Detection& a, const Detection& b);

}  // namespace dentalx
