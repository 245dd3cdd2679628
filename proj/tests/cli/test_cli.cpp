#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include <json.hpp>

namespace fs = std::filesystem;
using Json = nlohmann::json;

namespace {

struct Outcome {
  int code = -1;
  std::string out;
  std::string err;
};

std::string Slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("maskfuse_cli_" + std::to_string(std::random_device{}()));
    fs::create_directories(dir_);
  }
  void TearDown() override {
    std::error_code ec;
    fs::remove_all(dir_, ec);
  }

  Outcome Exec(const std::string& args) {
    const fs::path out = dir_ / "stdout.txt", err = dir_ / "stderr.txt";
    const std::string cmd = std::string(MASKFUSE_CLI_PATH) + " " + args + " >" + out.string() +
                            " 2>" + err.string();
    const int raw = std::system(cmd.c_str());
    Outcome r;
    r.code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    r.out = Slurp(out);
    r.err = Slurp(err);
    return r;
  }

  std::string Synth(const std::string& extra = "") {
    const auto ds = (dir_ / "ds").string();
    const auto r = Exec("synth --out " + ds +
                        " --clips 2 --frames 8 --width 32 --height 32 --objects 2 --classes 4"
                        " --min-size 6 --max-size 12 --feature-dim 4 --seed 3 " + extra);
    EXPECT_EQ(r.code, 0) << r.err;
    return (dir_ / "ds" / "manifest.json").string();
  }

  fs::path dir_;
};

}  // namespace

TEST_F(Cli, SynthThenEval) {
  const auto manifest = Synth();
  const auto r = Exec("--manifest " + manifest + " eval --csv " + (dir_ / "c.csv").string());
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = Json::parse(r.out);
  EXPECT_GT(j["miou"].get<double>(), 0.0);
  EXPECT_TRUE(j.contains("config"));
  EXPECT_EQ(Slurp(dir_ / "c.csv").rfind("class,iou", 0), 0u);
}

TEST_F(Cli, PipelineReportReproduces) {
  const auto manifest = Synth("--perfect-scores");
  const auto report = (dir_ / "rep.json").string();
  const auto a = Exec("--manifest " + manifest + " pipeline --window 4 --vote-scope per_track --report " + report);
  ASSERT_EQ(a.code, 0) << a.err;
  const auto first = Json::parse(Slurp(report));
  EXPECT_EQ(first["config"]["tracker"]["window"], 4);
  const auto b = Exec("--manifest " + manifest + " --config " + report + " pipeline");
  ASSERT_EQ(b.code, 0) << b.err;
  const auto second = Json::parse(b.out);
  EXPECT_EQ(second["after"], first["after"]);
  EXPECT_EQ(second["config"], first["config"]);
}

TEST_F(Cli, SweepWritesCsv) {
  const auto manifest = Synth();
  const auto csv = (dir_ / "s.csv").string();
  const auto r = Exec("--manifest " + manifest + " sweep --window 1 2 4 8 16 32 --csv " + csv);
  ASSERT_EQ(r.code, 0) << r.err;
  std::istringstream in(Slurp(csv));
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "window,mIoU,FWIoU,mVC8,mVC16");
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, 6);
}

TEST_F(Cli, SweepNeedsOneParameter) {
  const auto manifest = Synth();
  const auto r = Exec("--manifest " + manifest + " sweep");
  EXPECT_EQ(r.code, 1);
  const auto r2 = Exec("--manifest " + manifest + " sweep --window 1 --pred-iou 0.5");
  EXPECT_EQ(r2.code, 1);
}

TEST_F(Cli, MissingManifestGivesIoErrorJson) {
  const auto r = Exec("--manifest " + (dir_ / "none.json").string() + " eval");
  EXPECT_EQ(r.code, 11);
  const auto j = Json::parse(r.err);
  EXPECT_EQ(j["error"]["status"], "io");
  EXPECT_EQ(j["error"]["code"], 11);
  EXPECT_NE(j["error"]["message"].get<std::string>().find("none.json"), std::string::npos);
}

TEST_F(Cli, BadFlagIsInvalidArgument) {
  const auto r = Exec("eval --frobnicate");
  EXPECT_EQ(r.code, 1);
  EXPECT_EQ(Json::parse(r.err)["error"]["status"], "invalid_argument");
}

TEST_F(Cli, BadConfigValueIsConfigError) {
  const auto manifest = Synth();
  std::ofstream(dir_ / "cfg.json") << R"({"tracker":{"window":0}})";
  const auto r = Exec("--manifest " + manifest + " --config " + (dir_ / "cfg.json").string() + " pipeline");
  EXPECT_EQ(r.code, 7) << r.err;
}

TEST_F(Cli, ValidateOnly) {
  const auto manifest = Synth();
  auto r = Exec("--manifest " + manifest + " eval --validate-only");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(Json::parse(r.out)["errors"].empty());
  for (const auto& e : fs::recursive_directory_iterator(dir_ / "ds")) {
    if (e.path().extension() == ".jsonl") {
      std::ofstream(e.path(), std::ios::app) << "{broken\n";
      break;
    }
  }
  r = Exec("--manifest " + manifest + " eval --validate-only");
  EXPECT_EQ(r.code, 3);
  EXPECT_FALSE(Json::parse(r.out)["errors"].empty());
}

TEST_F(Cli, FilterRefineTrainClassify) {
  const auto manifest = Synth("--perfect-scores");
  auto r = Exec("--manifest " + manifest + " filter --out " + (dir_ / "f").string());
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(dir_ / "f" / "manifest.json"));
  r = Exec("--manifest " + manifest + " refine --out " + (dir_ / "r").string());
  ASSERT_EQ(r.code, 0) << r.err;
  r = Exec("--manifest " + (dir_ / "r" / "manifest.json").string() + " eval");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto model = (dir_ / "m.mmlp").string();
  r = Exec("--manifest " + manifest + " --seed 1 train --epochs 3 --hidden 8 --model-out " + model);
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(model));
  r = Exec("--manifest " + manifest + " classify --model " + model + " --base-from pred --out " +
           (dir_ / "c").string());
  ASSERT_EQ(r.code, 0) << r.err;
  r = Exec("--manifest " + (dir_ / "c" / "manifest.json").string() + " eval");
  EXPECT_EQ(r.code, 0) << r.err;
}
