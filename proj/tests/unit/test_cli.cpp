#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "doctest_torch.hpp"
#include "support.hpp"

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = dentalx::cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string line_with(const std::string& text, const std::string& prefix) {
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line))
    if (line.rfind(prefix, 0) == 0) return line;
  return {};
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

const std::vector<std::string> kTinyModel{"--set", "model.input_size=[64, 64]", "--set", "model.width_multiplier=0.03125",
                                          "--set", "model.num_disease_classes=3", "--set", "train.batch_size=4"};

std::vector<std::string> with_tiny(std::vector<std::string> args) {
  args.insert(args.end(), kTinyModel.begin(), kTinyModel.end());
  return args;
}

std::string generate(const testing::TempDir& dir, const std::string& name, int det, int seg, int seed = 1) {
  const auto r = run({"generate-data", "--det", std::to_string(det), "--seg", std::to_string(seg), "--seed",
                      std::to_string(seed), "--size", "64", "--classes", "3", "--out", (dir / name).string()});
  REQUIRE(r.code == 0);
  return (dir / name / "manifest.json").string();
}

}  // namespace

TEST_CASE("cli generate-data") {
  testing::TempDir dir("cli_gen");
  const auto r = run({"generate-data", "--det", "8", "--seg", "8", "--seed", "1", "--out", (dir / "a").string()});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("detection samples: 8") != std::string::npos);
  CHECK(r.out.find("segmentation samples: 8") != std::string::npos);
  CHECK(std::filesystem::exists(dir / "a" / "rules.json"));
  const auto again = run({"generate-data", "--det", "8", "--seg", "8", "--seed", "1", "--out", (dir / "b").string()});
  CHECK(line_with(r.out, "manifest_sha256") == line_with(again.out, "manifest_sha256"));
  CHECK_FALSE(line_with(r.out, "manifest_sha256").empty());

  const auto empty = run({"generate-data", "--det", "0", "--seg", "0", "--out", (dir / "c").string()});
  CHECK(empty.code == dentalx::cli::kDataFailure);
  CHECK(empty.err.find("empty corpus") != std::string::npos);
}

TEST_CASE("cli honours the data root variable") {
  testing::TempDir dir("cli_root");
  setenv("DENTALX_DATA_ROOT", dir.path().c_str(), 1);
  const auto r = run({"generate-data", "--det", "1", "--seg", "1", "--size", "64", "--out", "rel"});
  unsetenv("DENTALX_DATA_ROOT");
  CHECK(r.code == 0);
  CHECK(std::filesystem::exists(dir / "rel" / "manifest.json"));
}

TEST_CASE("cli usage errors map to the config exit code") {
  CHECK(run({}).code == dentalx::cli::kConfigFailure);
  CHECK(run({"train", "--bogus"}).code == dentalx::cli::kConfigFailure);
  CHECK(run({"train", "--set", "model.nothing=1", "--manifest", "x"}).code == dentalx::cli::kConfigFailure);
  CHECK(run({"train", "--mode", "sideways", "--manifest", "x"}).code == dentalx::cli::kConfigFailure);
  CHECK(run({"--help"}).code == 0);
}

TEST_CASE("cli train, eval and the task guard") {
  testing::TempDir dir("cli_train");
  const auto manifest = generate(dir, "data", 4, 4);
  const auto out = (dir / "det").string();
  const auto train = run(with_tiny({"train", "--manifest", manifest, "--mode", "det-only", "--epochs", "1", "--out", out}));
  REQUIRE_MESSAGE(train.code == 0, train.err);
  CHECK(train.out.find("# effective config") != std::string::npos);
  CHECK(std::filesystem::exists(dir / "det" / "last.pt"));
  CHECK(std::filesystem::exists(dir / "det" / "effective_config.toml"));
  std::istringstream log(slurp(dir / "det" / "train_log.jsonl"));
  std::string line;
  int lines = 0;
  while (std::getline(log, line)) {
    const auto j = nlohmann::json::parse(line);
    CHECK(j.at("l_ce") == 0.0);
    CHECK(j.at("l_iou") == 0.0);
    ++lines;
  }
  CHECK(lines == 2);

  const auto ckpt = (dir / "det" / "last.pt").string();
  const auto seg_eval = run({"eval", "--checkpoint", ckpt, "--manifest", manifest, "--task", "seg"});
  CHECK(seg_eval.code == dentalx::cli::kConfigFailure);
  CHECK(seg_eval.err.find("det-only") != std::string::npos);

  const auto report = (dir / "report.json").string();
  const auto det_eval = run({"eval", "--checkpoint", ckpt, "--manifest", manifest, "--report", report, "--detections",
                             (dir / "dets.jsonl").string(), "--pr-curve", (dir / "pr.csv").string()});
  REQUIRE_MESSAGE(det_eval.code == 0, det_eval.err);
  const auto j = nlohmann::json::parse(slurp(report));
  CHECK(j.contains("detection"));
  CHECK_FALSE(j.contains("segmentation"));
  CHECK(std::filesystem::exists(dir / "pr.csv"));

  // Scoring stored detections reproduces the checkpoint's numbers.
  const auto stored = run({"eval", "--manifest", manifest, "--predictions", (dir / "dets.jsonl").string()});
  REQUIRE_MESSAGE(stored.code == 0, stored.err);
  CHECK(nlohmann::json::parse(stored.out.substr(0, stored.out.rfind('}') + 1)).at("detection").at("ap50") ==
        j.at("detection").at("ap50"));

  CHECK(run({"eval", "--checkpoint", (dir / "nope.pt").string(), "--manifest", manifest}).code ==
        dentalx::cli::kDataFailure);
}

TEST_CASE("cli eval with the rule filter reports both AP values") {
  testing::TempDir dir("cli_filter");
  const auto manifest = generate(dir, "data", 4, 4);
  const auto out = (dir / "joint").string();
  REQUIRE(run(with_tiny({"train", "--manifest", manifest, "--mode", "joint-context", "--epochs", "1", "--out", out}))
              .code == 0);
  const auto r = run({"eval", "--checkpoint", (dir / "joint" / "last.pt").string(), "--manifest", manifest,
                      "--filter-rules", (dir / "data" / "rules.json").string(), "--masks", (dir / "masks").string(),
                      "--report", (dir / "r.json").string()});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  const auto j = nlohmann::json::parse(slurp(dir / "r.json"));
  CHECK(j.contains("detection"));
  CHECK(j.contains("detection_filtered"));
  CHECK(j.contains("segmentation"));
  CHECK(std::filesystem::exists(dir / "masks" / "seg_00000.png"));

  const auto resumed = run(with_tiny({"train", "--manifest", manifest, "--mode", "joint-context", "--epochs", "2",
                                      "--out", (dir / "more").string(), "--resume",
                                      (dir / "joint" / "last.pt").string()}));
  CHECK(resumed.code == dentalx::cli::kConfigFailure);
}

TEST_CASE("cli ablate emits a four-row grid") {
  testing::TempDir dir("cli_ablate");
  const auto train = generate(dir, "train", 4, 4, 1);
  const auto test = generate(dir, "test", 2, 2, 2);
  auto args = with_tiny({"ablate", "--train-manifest", train, "--test-manifest", test, "--epochs", "1", "--seeds", "0",
                         "--out", (dir / "a").string()});
  const auto r = run(args);
  REQUIRE_MESSAGE(r.code == 0, r.err);
  const auto csv = slurp(dir / "a" / "ablation.csv");
  std::istringstream in(csv);
  std::vector<std::string> rows;
  std::string line;
  while (std::getline(in, line)) rows.push_back(line);
  REQUIRE(rows.size() == 5);
  CHECK(rows[0] == "mode,AP50,AP75,AP50_95,mIoU,mDice,mAcc");
  CHECK(rows[1].rfind("det-only,", 0) == 0);
  CHECK(rows[1].substr(rows[1].size() - 3) == ",,,");
  CHECK(rows[2].rfind("seg-only,,,,", 0) == 0);
  CHECK(std::filesystem::exists(dir / "a" / "ablation.json"));

  *(std::find(args.begin(), args.end(), "--out") + 1) = (dir / "b").string();
  const auto again = run(args);
  REQUIRE_MESSAGE(again.code == 0, again.err);
  CHECK(slurp(dir / "b" / "ablation.csv") == csv);
}
