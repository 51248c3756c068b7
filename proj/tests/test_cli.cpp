#include <gtest/gtest.h>

#include <sstream>

#include "freshcast/cli/run.hpp"
#include "synthetic.hpp"
#include "test_util.hpp"

using namespace freshcast;
using fctest::TempDir;

namespace {

struct Outcome {
  int code;
  std::string out, err;
};

Outcome invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "freshcast");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string p(const std::filesystem::path& x) { return x.string(); }

const std::string kReference = std::string(FRESHCAST_DATA_DIR) + "/reference/";

}  // namespace

TEST(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(invoke({}).code, 2);
  EXPECT_EQ(invoke({"frobnicate"}).code, 2);
  EXPECT_EQ(invoke({"scan"}).code, 2);
  EXPECT_EQ(invoke({"scan", "--root", "/definitely/missing"}).code, 2);
  EXPECT_EQ(invoke({"corrupt", "--root", ".", "--out", "x", "--kind", "speckle"}).code, 2);
  EXPECT_EQ(invoke({"--help"}).code, 0);
  EXPECT_EQ(invoke({"--version"}).out, "0.3.0\n");
}

TEST(Cli, RuntimeErrorsExitOne) {
  TempDir dir;
  std::filesystem::create_directories(dir / "empty");
  const auto r = invoke({"split", "--root", p(dir / "empty"), "--out", p(dir / "m.json")});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("error:"), std::string::npos);
}

TEST(Cli, ScanSplitAndCorrupt) {
  TempDir dir;
  fctest::write_synthetic_dataset(dir / "data", {3, 4, 3, 32});
  auto r = invoke({"scan", "--root", p(dir / "data"), "--out", p(dir / "scan.json")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("36 samples"), std::string::npos);

  r = invoke({"split", "--root", p(dir / "data"), "--out", p(dir / "manifest.json"), "--seed", "5"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto m = load_manifest(dir / "manifest.json");
  EXPECT_EQ(m.samples.size(), 36u);
  EXPECT_EQ(m.provenance["command"], "split");
  EXPECT_EQ(m.provenance["seed"], 5);

  r = invoke({"corrupt", "--root", p(dir / "data"), "--out", p(dir / "copy"), "--count", "0"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(fctest::tree_contents(dir / "data"), fctest::tree_contents(dir / "copy"));

  r = invoke({"corrupt", "--root", p(dir / "data"), "--out", p(dir / "noisy"), "--kind", "salt_pepper", "--intensity", "0.1",
              "--seed", "3", "--workers", "2"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto cm = read_json_file(dir / "noisy.corruption.json");
  EXPECT_EQ(cm["n_corrupted"], 24);
  EXPECT_TRUE(cm.contains("provenance"));
}

TEST(Cli, TrainEvaluateExplainSmoke) {
  TempDir dir;
  fctest::write_synthetic_dataset(dir / "data", {3, 4, 3, 32});
  ASSERT_EQ(invoke({"split", "--root", p(dir / "data"), "--out", p(dir / "manifest.json")}).code, 0);
  ASSERT_EQ(invoke({"corrupt", "--root", p(dir / "data"), "--out", p(dir / "noisy")}).code, 0);

  auto r = invoke({"train", "--model", "A", "--manifest", p(dir / "manifest.json"), "--out", p(dir / "models"), "--epochs", "2"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("epoch   2"), std::string::npos);
  EXPECT_NE(r.err.find("resized from 8 to 3"), std::string::npos);
  EXPECT_TRUE(std::filesystem::exists(dir / "models" / "mobilenetv2" / "weights.fcw"));

  r = invoke({"evaluate", "--model-id", "mobilenetv2", "--models-dir", p(dir / "models"), "--manifest", p(dir / "manifest.json"),
              "--out", p(dir / "orig.json")});
  ASSERT_EQ(r.code, 0) << r.err;
  r = invoke({"evaluate", "--model-id", "mobilenetv2", "--models-dir", p(dir / "models"), "--manifest", p(dir / "manifest.json"),
              "--root", p(dir / "noisy"), "--dataset-id", "noisy", "--out", p(dir / "noisy.json")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rep = eval::reports_from_json(read_json_file(dir / "noisy.json"));
  ASSERT_EQ(rep.size(), 1u);
  EXPECT_EQ(rep[0].dataset_id, "noisy");
  EXPECT_GT(*rep[0].n_samples, 0);

  r = invoke({"diff", "--original", p(dir / "orig.json"), "--noisy", p(dir / "noisy.json"), "--out", p(dir / "diff.csv")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(eval::diff_from_csv(read_text_file(dir / "diff.csv")).size(), 1u);
  EXPECT_TRUE(std::filesystem::exists(dir / "diff.csv.provenance.json"));

  const auto image = (dir / "data" / "tomato" / "day2_1" / "img0.png").string();
  r = invoke({"explain", "--model-id", "mobilenetv2", "--models-dir", p(dir / "models"), "--image", image, "--segments", "10",
              "--samples", "100", "--out", p(dir / "ex")});
  ASSERT_EQ(r.code, 0) << r.err;
  for (const char* f : {"explanation.json", "overlay_vegetable.png", "overlay_spoilage.png", "overlay_day.png"})
    EXPECT_TRUE(std::filesystem::exists(dir / "ex" / f)) << f;

  r = invoke({"evaluate", "--model-id", "nope", "--models-dir", p(dir / "models"), "--manifest", p(dir / "manifest.json")});
  EXPECT_EQ(r.code, 1);
}

TEST(Cli, ReproduceTable5) {
  TempDir dir;
  auto r = invoke({"reproduce-table5", "--out", p(dir / "t5.csv")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rows = eval::diff_from_csv(read_text_file(dir / "t5.csv"));
  EXPECT_EQ(rows.size(), 10u);
  EXPECT_TRUE(std::filesystem::exists(dir / "t5.csv.provenance.json"));

  // Three published cells disagree with the tables they are derived from.
  r = invoke({"reproduce-table5", "--check", kReference + "published_differences.csv"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("3 cell(s)"), std::string::npos);
  r = invoke({"reproduce-table5", "--check", kReference + "published_differences.csv", "--tolerance", "0.35"});
  EXPECT_EQ(r.code, 0) << r.err;
}
