#include <random>

#include "printing.hpp"
#include "doctest_torch.hpp"
#include "dentalx/geometry.hpp"
#include "oracles.hpp"

using namespace dentalx;

namespace {

Box random_box(std::mt19937& rng, double extent = 40) {
  std::uniform_real_distribution<double> pos(0, extent), size(2, extent / 2);
  const double x = pos(rng), y = pos(rng);
  return {x, y, x + size(rng), y + size(rng)};
}

}  // namespace

TEST_CASE("box_iou basics") {
  const Box a{0, 0, 2, 2};
  CHECK(box_iou(a, a) == doctest::Approx(1.0));
  CHECK(box_iou(a, {5, 5, 6, 6}) == 0.0);
  CHECK(box_iou(a, {1, 0, 3, 2}) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK(box_iou(a, {1, 1, 1, 3}) == 0.0);
  CHECK(box_iou({1, 1, 1, 1}, {1, 1, 1, 1}) == 0.0);
}

TEST_CASE("box_iou is symmetric and bounded") {
  std::mt19937 rng(5);
  for (int t = 0; t < 500; ++t) {
    const Box a = random_box(rng), b = random_box(rng);
    const double v = box_iou(a, b);
    CHECK(v == box_iou(b, a));
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
    CHECK(v == doctest::Approx(oracle::iou({a.x1, a.y1, a.x2, a.y2}, {b.x1, b.y1, b.x2, b.y2})).epsilon(1e-12));
  }
}

TEST_CASE("clip_box keeps boxes inside the image") {
  const Box c = clip_box({-3, 2, 70, 80}, 64, 64);
  CHECK(c == Box{0, 2, 64, 64});
}

TEST_CASE("nms examples") {
  SUBCASE("identical boxes keep the higher score") {
    std::vector<Detection> d{{{0, 0, 10, 10}, 1, 0.8}, {{0, 0, 10, 10}, 1, 0.9}};
    const auto kept = nms(d, 0.5);
    REQUIRE(kept.size() == 1);
    CHECK(kept[0].score == 0.9);
  }
  SUBCASE("disjoint boxes are all kept") {
    std::vector<Detection> d{{{0, 0, 10, 10}, 0, 0.5}, {{20, 20, 30, 30}, 0, 0.6}, {{40, 0, 50, 10}, 0, 0.7}};
    CHECK(nms(d, 0.5).size() == 3);
  }
  SUBCASE("different classes never suppress each other") {
    std::vector<Detection> d{{{0, 0, 10, 10}, 0, 0.9}, {{0, 0, 10, 10}, 1, 0.8}};
    CHECK(nms(d, 0.5).size() == 2);
  }
  SUBCASE("threshold outside (0, 1] is rejected") {
    std::vector<Detection> d{{{0, 0, 10, 10}, 0, 0.9}};
    CHECK_THROWS(nms(d, 0.0));
    CHECK_THROWS(nms(d, 1.5));
  }
}

TEST_CASE("nms matches the pairwise oracle and is idempotent") {
  std::mt19937 rng(17);
  std::uniform_real_distribution<double> score(0, 1);
  std::uniform_int_distribution<int> cls(0, 1);
  for (int t = 0; t < 200; ++t) {
    std::vector<Detection> d;
    std::vector<oracle::NmsItem> o;
    const int n = 1 + t % 5;
    for (int k = 0; k < n; ++k) {
      const Box b = random_box(rng, 20);
      const Detection det{b, cls(rng), score(rng)};
      d.push_back(det);
      o.push_back({{b.x1, b.y1, b.x2, b.y2}, det.class_id, det.score});
    }
    const double thr = 0.3 + 0.1 * (t % 5);
    const auto kept = nms(d, thr);
    const auto expected = oracle::nms(o, thr);
    REQUIRE(kept.size() == expected.size());
    for (std::size_t k = 0; k < kept.size(); ++k) {
      CHECK(kept[k].score == expected[k].score);
      CHECK(kept[k].class_id == expected[k].cls);
    }
    for (const auto& k : kept) CHECK(std::find(d.begin(), d.end(), k) != d.end());
    CHECK(nms(kept, thr) == kept);
    for (std::size_t i = 0; i < kept.size(); ++i)
      for (std::size_t j = i + 1; j < kept.size(); ++j)
        if (kept[i].class_id == kept[j].class_id) CHECK(box_iou(kept[i].box, kept[j].box) <= thr);
  }
}

TEST_CASE("nms tie-break is deterministic") {
  std::vector<Detection> d{{{5, 0, 15, 10}, 0, 0.5}, {{4, 0, 14, 10}, 0, 0.5}};
  const auto kept = nms(d, 0.5);
  REQUIRE(kept.size() == 1);
  CHECK(kept[0].box.x1 == 4);
}
