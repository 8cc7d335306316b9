#include <fstream>
#include <random>
#include <set>

#include <torch/torch.h>

#include "doctest_torch.hpp"
#include "dentalx/checkpoint.hpp"
#include "dentalx/errors.hpp"
#include "dentalx/model.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace dentalx;

namespace {

bool same_tensor(const torch::Tensor& a, const torch::Tensor& b) { return a.sizes() == b.sizes() && a.equal(b); }

HeadOutputs blank_outputs(const ModelConfig& cfg, double obj_logit) {
  HeadOutputs out;
  for (int l = 0; l < 3; ++l) {
    const int s = cfg.strides[static_cast<std::size_t>(l)];
    const int h = cfg.input_height / s, w = cfg.input_width / s;
    auto& level = out.levels[static_cast<std::size_t>(l)];
    level.class_logits = torch::full({1, cfg.num_disease_classes, h, w}, -10.0);
    level.box_regression = torch::zeros({1, 4, h, w});
    level.objectness_logits = torch::full({1, 1, h, w}, obj_logit);
    level.stride = s;
  }
  return out;
}

}  // namespace

TEST_CASE("pyramid widths follow the width multiplier") {
  ModelConfig c;
  c.width_multiplier = 0.25;
  CHECK(c.pyramid_width(0) == 64);
  CHECK(c.pyramid_width(1) == 128);
  CHECK(c.pyramid_width(2) == 256);
}

TEST_CASE("build_model rejects invalid configs") {
  ModelConfig c = testing::tiny_config();
  c.input_width = 48;
  CHECK_THROWS_AS(build_model(c), ConfigError);
  c = testing::tiny_config();
  c.num_disease_classes = 0;
  CHECK_THROWS_AS(build_model(c), ConfigError);
}

TEST_CASE("backbone shapes for several input sizes") {
  for (auto [h, w] : {std::pair{64, 64}, std::pair{96, 64}, std::pair{32, 128}}) {
    ModelConfig c = testing::tiny_config();
    c.input_height = h;
    c.input_width = w;
    auto model = build_model(c);
    model->eval();
    const auto pyr = model->forward_backbone(torch::rand({2, 1, h, w}));
    for (int l = 0; l < 3; ++l) {
      const int s = c.strides[static_cast<std::size_t>(l)];
      CHECK(pyr.level(l).sizes() == torch::IntArrayRef({2, c.pyramid_width(l), h / s, w / s}));
    }
  }
}

TEST_CASE("backbone rejects mismatched input and stays finite on zeros") {
  auto model = build_model(testing::tiny_config());
  CHECK_THROWS_AS(model->forward_backbone(torch::zeros({1, 1, 32, 32})), ShapeError);
  CHECK_THROWS_AS(model->forward_backbone(torch::zeros({1, 3, 64, 64})), ShapeError);
  model->eval();
  const auto pyr = model->forward_backbone(torch::zeros({1, 1, 64, 64}));
  for (int l = 0; l < 3; ++l) CHECK(torch::isfinite(pyr.level(l)).all().item<bool>());
}

TEST_CASE("three-channel mode replicates the gray channel") {
  ModelConfig c = testing::tiny_config();
  c.input_channels = 3;
  GrayImage img(64, 64);
  for (std::size_t i = 0; i < img.data.size(); ++i) img.data[i] = static_cast<std::uint8_t>(i % 251);
  const GrayImage* ptr = &img;
  const auto t = images_to_tensor(std::span<const GrayImage* const>(&ptr, 1), c);
  CHECK(t.sizes() == torch::IntArrayRef({1, 3, 64, 64}));
  CHECK(t[0][0].equal(t[0][2]));
  CHECK(t.max().item<float>() <= 1.0f);
  auto model = build_model(c);
  CHECK_NOTHROW(model->forward_backbone(t));
}

TEST_CASE("seeded builds are bit-identical") {
  ModelConfig c = testing::tiny_config();
  c.seed = 7;
  auto a = build_model(c), b = build_model(c);
  auto pb = b->named_parameters();
  for (const auto& item : a->named_parameters()) CHECK(same_tensor(item.value(), pb[item.key()]));
  c.seed = 8;
  auto d = build_model(c);
  CHECK_FALSE(same_tensor(a->parameters()[0], d->parameters()[0]));
}

TEST_CASE("parameters partition into the three named groups") {
  auto model = build_model(testing::tiny_config());
  std::set<std::string> seen;
  std::size_t total = 0;
  for (auto g : {ParameterGroup::kBackbone, ParameterGroup::kDetection, ParameterGroup::kSce}) {
    const auto params = model->group_parameters(g);
    CHECK_FALSE(params.empty());
    for (const auto& [name, _] : params) CHECK(seen.insert(name).second);
    total += params.size();
  }
  CHECK(total == model->parameters().size());
}

TEST_CASE("head and SCE shapes") {
  const ModelConfig c = testing::tiny_config();
  auto model = build_model(c);
  model->eval();
  const auto pyr = model->forward_backbone(torch::rand({2, 1, 64, 64}));
  const auto ctx = model->forward_sce(pyr.p3);
  CHECK(ctx.seg_logits.sizes() == torch::IntArrayRef({2, 7, 16, 16}));
  const auto head = model->forward_detection_head(pyr, &ctx);
  for (int l = 0; l < 3; ++l) {
    const int side = 64 / c.strides[static_cast<std::size_t>(l)];
    CHECK(ctx.context_maps[static_cast<std::size_t>(l)].sizes() == torch::IntArrayRef({2, 7, side, side}));
    const auto& lv = head.levels[static_cast<std::size_t>(l)];
    CHECK(lv.class_logits.sizes() == torch::IntArrayRef({2, 3, side, side}));
    CHECK(lv.box_regression.sizes() == torch::IntArrayRef({2, 4, side, side}));
    CHECK(lv.objectness_logits.sizes() == torch::IntArrayRef({2, 1, side, side}));
    CHECK(lv.cls_features.size(1) == c.head_width());
    CHECK(model->detection()->level(l)->classifier_in_channels() == c.head_width() + 7);
  }
  CHECK_THROWS_AS(model->forward_detection_head(pyr, nullptr), ShapeError);
  CHECK_THROWS_AS(model->forward_sce(pyr.p4), ShapeError);
}

TEST_CASE("context only reaches the classifier") {
  const ModelConfig with = testing::tiny_config(true), without = testing::tiny_config(false);
  auto a = build_model(with), b = build_model(without);
  {
    torch::NoGradGuard g;
    auto pb = b->named_parameters();
    for (const auto& item : a->named_parameters())
      if (item.value().sizes() == pb[item.key()].sizes()) pb[item.key()].copy_(item.value());
    auto bb = b->named_buffers();
    for (const auto& item : a->named_buffers()) bb[item.key()].copy_(item.value());
  }
  a->eval();
  b->eval();
  CHECK(b->detection()->level(0)->classifier_in_channels() == without.head_width());
  const auto x = torch::rand({1, 1, 64, 64});
  const auto pa = a->forward_backbone(x), pb = b->forward_backbone(x);
  const auto ctx = a->forward_sce(pa.p3);
  const auto ha = a->forward_detection_head(pa, &ctx), hb = b->forward_detection_head(pb, nullptr);
  for (int l = 0; l < 3; ++l) {
    CHECK(ha.levels[static_cast<std::size_t>(l)].box_regression.equal(hb.levels[static_cast<std::size_t>(l)].box_regression));
    CHECK(ha.levels[static_cast<std::size_t>(l)].objectness_logits.equal(hb.levels[static_cast<std::size_t>(l)].objectness_logits));
    CHECK(ha.levels[static_cast<std::size_t>(l)].class_logits.sizes() == hb.levels[static_cast<std::size_t>(l)].class_logits.sizes());
  }
  CHECK_THROWS_AS(b->forward_detection_head(pb, &ctx), ShapeError);
}

TEST_CASE("context maps of a constant logit map equal the constant") {
  auto model = build_model(testing::tiny_config());
  const auto logits = torch::arange(7, torch::kFloat).reshape({1, 7, 1, 1}).expand({1, 7, 16, 16}).contiguous();
  const auto maps = context_maps_from_logits(logits);
  for (int l = 0; l < 3; ++l) {
    const int side = 8 >> l;
    CHECK(maps[static_cast<std::size_t>(l)].sizes() == torch::IntArrayRef({1, 7, side, side}));
    CHECK(maps[static_cast<std::size_t>(l)].equal(logits.narrow(2, 0, side).narrow(3, 0, side)));
  }
  model->eval();
  const auto zero = model->forward_sce(torch::zeros({1, testing::tiny_config().pyramid_width(0), 8, 8}));
  CHECK(torch::isfinite(zero.seg_logits).all().item<bool>());
}

TEST_CASE("predict_anatomy_mask") {
  SUBCASE("dominant channel") {
    auto logits = torch::zeros({7, 4, 4});
    logits[2].fill_(5.0);
    const auto mask = predict_anatomy_mask(logits, 16, 16);
    for (auto v : mask.data) CHECK(v == 2);
  }
  SUBCASE("one-hot pattern survives resizing in the interior") {
    auto logits = torch::full({7, 4, 4}, -10.0);
    for (int y = 0; y < 4; ++y)
      for (int x = 0; x < 4; ++x) logits[(x + y) % 7][y][x] = 10.0;
    const auto mask = predict_anatomy_mask(logits, 16, 16);
    for (int y = 0; y < 4; ++y)
      for (int x = 0; x < 4; ++x) CHECK(mask.at(4 * x + 1, 4 * y + 1) == (x + y) % 7);
  }
  SUBCASE("random logits match a per-pixel bilinear argmax") {
    torch::manual_seed(4);
    const auto logits = torch::randn({7, 5, 6}, torch::kDouble);
    const auto mask = predict_anatomy_mask(logits, 10, 12);
    std::vector<std::vector<double>> up;
    for (int c = 0; c < 7; ++c) {
      auto ch = logits[c].contiguous();
      std::vector<double> src(ch.data_ptr<double>(), ch.data_ptr<double>() + 30);
      up.push_back(oracle::bilinear(src, 5, 6, 10, 12));
    }
    for (int p = 0; p < 120; ++p) {
      int best = 0;
      for (int c = 1; c < 7; ++c)
        if (up[static_cast<std::size_t>(c)][static_cast<std::size_t>(p)] > up[static_cast<std::size_t>(best)][static_cast<std::size_t>(p)]) best = c;
      CHECK(mask.data[static_cast<std::size_t>(p)] == best);
    }
  }
}

TEST_CASE("decode_predictions") {
  const ModelConfig c = testing::tiny_config();
  SUBCASE("nothing survives a confident background") {
    CHECK(decode_predictions(blank_outputs(c, -10.0), c, 0.01)[0].empty());
  }
  SUBCASE("one confident cell") {
    auto out = blank_outputs(c, -10.0);
    auto& lv = out.levels[0];
    lv.objectness_logits[0][0][0][0] = 10.0;
    lv.class_logits[0][1][0][0] = 10.0;
    lv.box_regression[0][0][0][0] = 0.5;
    lv.box_regression[0][1][0][0] = 0.5;
    const auto dets = decode_predictions(out, c, 0.01)[0];
    REQUIRE(dets.size() == 1);
    CHECK(dets[0].box == Box{0, 0, 8, 8});
    CHECK(dets[0].class_id == 1);
    const double p = 1.0 / (1.0 + std::exp(-10.0));
    CHECK(dets[0].score == doctest::Approx(p * p).epsilon(1e-6));
  }
  SUBCASE("hand-computed cell on P4 and translation equivariance") {
    auto out = blank_outputs(c, -10.0);
    auto& lv = out.levels[1];
    // Cell (row 1, col 2) at stride 16: centre ((2 + 0.25) * 16, (1 + 0.5) * 16) = (36, 24),
    // size (exp(log 2) * 16, 16) = (32, 16).
    lv.objectness_logits[0][0][1][2] = 8.0;
    lv.class_logits[0][0][1][2] = 8.0;
    lv.box_regression[0][0][1][2] = 0.25;
    lv.box_regression[0][1][1][2] = 0.5;
    lv.box_regression[0][2][1][2] = std::log(2.0);
    const auto d1 = decode_predictions(out, c, 0.5)[0];
    REQUIRE(d1.size() == 1);
    CHECK(d1[0].box.x1 == doctest::Approx(20));
    CHECK(d1[0].box.y1 == doctest::Approx(16));
    CHECK(d1[0].box.x2 == doctest::Approx(52));
    CHECK(d1[0].box.y2 == doctest::Approx(32));

    auto shifted = blank_outputs(c, -10.0);
    auto& sv = shifted.levels[1];
    sv.objectness_logits[0][0][2][1] = 8.0;
    sv.class_logits[0][0][2][1] = 8.0;
    sv.box_regression[0][0][2][1] = 0.25;
    sv.box_regression[0][1][2][1] = 0.5;
    sv.box_regression[0][2][2][1] = std::log(2.0);
    const auto d2 = decode_predictions(shifted, c, 0.5)[0];
    REQUIRE(d2.size() == 1);
    CHECK(d2[0].box.x1 == doctest::Approx(d1[0].box.x1 - 16));
    CHECK(d2[0].box.y1 == doctest::Approx(d1[0].box.y1 + 16));
  }
  SUBCASE("boxes are clipped to the image") {
    auto out = blank_outputs(c, -10.0);
    out.levels[2].objectness_logits[0][0][0][0] = 10.0;
    out.levels[2].class_logits[0][0][0][0] = 10.0;
    out.levels[2].box_regression[0][2][0][0] = 2.0;
    const auto dets = decode_predictions(out, c, 0.01)[0];
    REQUIRE(dets.size() == 1);
    CHECK(dets[0].box.x1 == 0.0);
    CHECK(dets[0].box.x2 <= 64.0);
  }
}

TEST_CASE("checkpoint round trip and validation") {
  testing::TempDir dir("ckpt");
  auto model = build_model(testing::tiny_config());
  save_checkpoint(dir / "m.pt", model, TrainMode::kJointContext);
  const auto loaded = load_checkpoint(dir / "m.pt");
  CHECK(loaded.config == model->config());
  REQUIRE(loaded.mode.has_value());
  CHECK(*loaded.mode == TrainMode::kJointContext);
  auto lp = loaded.model->named_parameters();
  for (const auto& item : model->named_parameters()) CHECK(same_tensor(item.value(), lp[item.key()]));
  auto lb = loaded.model->named_buffers();
  for (const auto& item : model->named_buffers()) CHECK(same_tensor(item.value(), lb[item.key()]));

  ModelConfig other = testing::tiny_config();
  other.num_disease_classes = 5;
  CHECK_THROWS_AS(load_checkpoint(dir / "m.pt", &other), ConfigError);
  {
    std::ofstream junk(dir / "junk.pt");
    junk << "not a checkpoint";
  }
  CHECK_THROWS(load_checkpoint(dir / "junk.pt"));
  CHECK_THROWS(load_checkpoint(dir / "absent.pt"));
}
