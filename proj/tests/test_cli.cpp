#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>

#include "support.hpp"

using testing_support::read_file;
using testing_support::TempDir;

namespace {

struct Run {
  int status = -1;
  std::string out;
  std::string err;
};

Run cli(const TempDir& dir, const std::string& args) {
  const auto out = dir / "stdout.txt", err = dir / "stderr.txt";
  const std::string cmd = std::string("\"") + PROBE3D_CLI_PATH + "\" " + args + " >\"" +
                          out.string() + "\" 2>\"" + err.string() + "\"";
  const int raw = std::system(cmd.c_str());
  Run r;
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  r.out = read_file(out);
  r.err = read_file(err);
  return r;
}

void write(const std::filesystem::path& p, const std::string& text) {
  std::ofstream(p, std::ios::binary) << text;
}

// A tiny two-key corpus generated through the CLI.
std::filesystem::path synth_corpus(const TempDir& dir) {
  write(dir / "synth.json", R"({"synth": {"train_images": 2, "val_images": 2, "test_images": 2,
    "regions_per_image": 9, "channels": 16, "signal_channels": 4}})");
  const auto root = dir / "corpus";
  const auto r = cli(dir, "synth --config \"" + (dir / "synth.json").string() + "\" --out \"" +
                              root.string() + "\" --timesteps 120,360 --layers E1,D3 --seed 3");
  EXPECT_EQ(r.status, 0) << r.err;
  return root;
}

std::string grid_args(const std::filesystem::path& root, const std::filesystem::path& out) {
  std::string args = "grid --features \"" + (root / "features").string() + "\" --pairs \"" +
                     (root / "pairs").string() + "\" --out \"" + out.string() + "\"";
  for (const char* split : {"train", "val", "test"})
    args += " --manifest \"" + (root / "manifests" / (std::string(split) + ".json")).string() + "\"";
  return args;
}

}  // namespace

TEST(Cli, AucOfPerfectRanking) {
  TempDir dir("cli_auc");
  write(dir / "scores.csv", "score,label\n0.1,0\n0.2,0\n0.8,1\n0.9,1\n");
  const auto r = cli(dir, "auc --scores \"" + (dir / "scores.csv").string() + "\"");
  EXPECT_EQ(r.status, 0) << r.err;
  EXPECT_EQ(r.out, "1.0\n");
  write(dir / "two.csv", "0.9,1\n0.8,0\n");
  EXPECT_EQ(cli(dir, "auc --scores \"" + (dir / "two.csv").string() + "\"").out, "1.0\n");
  write(dir / "half.csv", "0.5,0\n0.5,1\n");
  EXPECT_EQ(cli(dir, "auc --scores \"" + (dir / "half.csv").string() + "\"").out, "0.5\n");
}

TEST(Cli, UsageErrorsExitOne) {
  TempDir dir("cli_usage");
  EXPECT_EQ(cli(dir, "grid --no-such-flag").status, 1);
  EXPECT_EQ(cli(dir, "").status, 1);
  EXPECT_EQ(cli(dir, "frobnicate").status, 1);
  const auto r = cli(dir, "synth");
  EXPECT_EQ(r.status, 1);
  EXPECT_NE(r.err.find("--out"), std::string::npos) << r.err;
  EXPECT_EQ(cli(dir, "grid --property volume --features x --out y").status, 1);
}

TEST(Cli, DataErrorsExitTwo) {
  TempDir dir("cli_data");
  write(dir / "labels.csv", "0.1,1\n0.2,1\n");
  EXPECT_EQ(cli(dir, "auc --scores \"" + (dir / "labels.csv").string() + "\"").status, 2);
  write(dir / "bad.json", R"({"images": [{"image_id": "a"}]})");
  const auto r = cli(dir, "validate --manifest \"" + (dir / "bad.json").string() + "\"");
  EXPECT_EQ(r.status, 2);
  EXPECT_NE(r.err.find("/images/0"), std::string::npos) << r.err;
}

TEST(Cli, SynthValidateAndGrid) {
  TempDir dir("cli_grid");
  const auto root = synth_corpus(dir);
  const auto v = cli(dir, "validate --manifest \"" + (root / "manifests" / "val.json").string() +
                              "\" --pairs \"" + (root / "pairs" / "val.jsonl").string() + "\"");
  EXPECT_EQ(v.status, 0) << v.err;

  const auto out = dir / "report";
  const auto g = cli(dir, grid_args(root, out) + " --workers 2");
  ASSERT_EQ(g.status, 0) << g.err;
  EXPECT_NE(g.out.find("best t=360 D3"), std::string::npos) << g.out;
  for (const char* f : {"grid_result.json", "cells.csv", "auc_curve_same_plane.svg", "summary.csv",
                        "best_model.json", "timing.json"})
    EXPECT_TRUE(std::filesystem::exists(out / f)) << f;

  // The same run again writes byte-identical artifacts apart from timing.
  const auto again = dir / "again";
  ASSERT_EQ(cli(dir, grid_args(root, again) + " --workers 1").status, 0);
  for (const char* f : {"grid_result.json", "cells.csv", "auc_curve_same_plane.svg", "summary.csv",
                        "best_model.json"})
    EXPECT_EQ(read_file(out / f), read_file(again / f)) << f;
}

TEST(Cli, MissingFeatureExitsTwo) {
  TempDir dir("cli_missing");
  const auto root = synth_corpus(dir);
  const auto r = cli(dir, grid_args(root, dir / "report") + " --timesteps 120,240");
  EXPECT_EQ(r.status, 2);
  EXPECT_NE(r.err.find("timestep 240"), std::string::npos) << r.err;
}

TEST(Cli, ConfigFileSuppliesGridOptions) {
  TempDir dir("cli_config");
  const auto root = synth_corpus(dir);
  write(dir / "grid.json",
        "{\"features\": \"" + (root / "features").generic_string() + "\", \"pairs\": \"" +
            (root / "pairs").generic_string() + "\", \"manifest\": [\"" +
            (root / "manifests" / "train.json").generic_string() + "\", \"" +
            (root / "manifests" / "val.json").generic_string() + "\", \"" +
            (root / "manifests" / "test.json").generic_string() +
            "\"], \"layers\": [\"D3\"], \"timesteps\": [360], \"coarse_c\": [10]}");
  const auto r = cli(dir, "grid --config \"" + (dir / "grid.json").string() + "\" --out \"" +
                              (dir / "report").string() + "\"");
  ASSERT_EQ(r.status, 0) << r.err;
  EXPECT_NE(r.out.find("(1 cells)"), std::string::npos) << r.out;
}
