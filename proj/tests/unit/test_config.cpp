#include "doctest_torch.hpp"
#include "dentalx/config.hpp"
#include "dentalx/errors.hpp"

using namespace dentalx;

TEST_CASE("config text parser") {
  const auto kv = parse_config_text(R"(# comment
[model]
width_multiplier = 0.25   # trailing comment
input_size = [128, 128]

[train]
lr = 1e-3
hflip = true
)");
  CHECK(kv.at("model.width_multiplier") == "0.25");
  CHECK(kv.at("model.input_size") == "[128, 128]");
  CHECK(kv.at("train.lr") == "1e-3");
  CHECK(kv.at("train.hflip") == "true");
  CHECK_THROWS_AS(parse_config_text("[model\nx = 1"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("[model]\njust a line"), ConfigError);
}

TEST_CASE("run config set and text round trip") {
  RunConfig cfg;
  cfg.set("model.width_multiplier", "0.25");
  cfg.set("model.input_size", "[128, 96]");
  cfg.set("train.lr", "0.02");
  cfg.set("train.assigner", "simota");
  cfg.set("run.mode", "\"det-only\"");
  cfg.set("eval.nms_iou", "0.5");
  CHECK(cfg.model.pyramid_width(0) == 64);
  CHECK(cfg.model.pyramid_width(2) == 256);
  CHECK(cfg.model.input_width == 96);
  CHECK(cfg.mode == TrainMode::kDetOnly);
  CHECK_FALSE(cfg.effective_model().use_context);

  RunConfig back;
  for (const auto& [k, v] : parse_config_text(cfg.to_text())) back.set(k, v);
  CHECK(back.model == cfg.model);
  CHECK(back.train.to_json() == cfg.train.to_json());
  CHECK(back.mode == cfg.mode);
  CHECK(back.inference.nms_iou == cfg.inference.nms_iou);
  CHECK(back.to_text() == cfg.to_text());
}

TEST_CASE("invalid configs are rejected") {
  RunConfig cfg;
  CHECK_THROWS_AS(cfg.set("model.nonsense", "1"), ConfigError);
  CHECK_THROWS_AS(cfg.set("train.lr", "fast"), ConfigError);
  CHECK_THROWS_AS(cfg.set("run.mode", "both"), ConfigError);

  ModelConfig m;
  m.input_height = 100;
  CHECK_THROWS_AS(m.validate(), ConfigError);
  m = {};
  m.num_disease_classes = 0;
  CHECK_THROWS_AS(m.validate(), ConfigError);
  m = {};
  m.num_anatomy_classes = 0;
  CHECK_THROWS_AS(m.validate(), ConfigError);
  m = {};
  m.strides = {8, 16, 64};
  CHECK_THROWS_AS(m.validate(), ConfigError);

  TrainConfig t;
  t.batch_size = 7;
  CHECK_THROWS_AS(t.validate(), ConfigError);
  t = {};
  t.epochs = 0;
  CHECK_THROWS_AS(t.validate(), ConfigError);
  t = {};
  t.initial_lr = 0;
  CHECK_THROWS_AS(t.validate(), ConfigError);
}

TEST_CASE("train modes") {
  for (auto m : {TrainMode::kDetOnly, TrainMode::kSegOnly, TrainMode::kJointNoContext, TrainMode::kJointContext})
    CHECK(train_mode_from_string(to_string(m)) == m);
  CHECK(trains_detection(TrainMode::kDetOnly));
  CHECK_FALSE(trains_segmentation(TrainMode::kDetOnly));
  CHECK_FALSE(trains_detection(TrainMode::kSegOnly));
  CHECK(trains_segmentation(TrainMode::kJointNoContext));
}

TEST_CASE("defaults follow the reference setup") {
  const ModelConfig m;
  CHECK(m.num_disease_classes == 20);
  CHECK(m.num_anatomy_classes == 6);
  CHECK(m.seg_channels() == 7);
  CHECK(m.pyramid_width(0) == 256);
  CHECK(m.pyramid_width(1) == 512);
  CHECK(m.pyramid_width(2) == 1024);
  const TrainConfig t;
  CHECK(t.initial_lr == 0.001);
  CHECK(t.momentum == 0.9);
  CHECK(t.weight_decay == 5e-4);
}

TEST_CASE("shipped desk config loads") {
  const auto cfg = load_run_config(std::string(DENTALX_SOURCE_DIR) + "/configs/desk.toml");
  CHECK(cfg.model.input_height == 128);
  CHECK(cfg.model.width_multiplier == doctest::Approx(0.125));
  CHECK(cfg.train.initial_lr == doctest::Approx(0.01));
  CHECK(cfg.mode == TrainMode::kJointContext);
}
