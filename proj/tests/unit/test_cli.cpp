#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "fera/cli.hpp"
#include "fera/config.hpp"
#include "fera/errors.hpp"
#include "fera/svg.hpp"

using namespace fera;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    root_ = fs::temp_directory_path() / ("fera_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(root_);
    fs::create_directories(root_);
    config_ = root_ / "run.ini";
    std::ofstream os(config_);
    os << "[data]\nsize = 16\ntrain_count = 16\nval_count = 4\n"
       << "[train]\nsteps = 4\npretrain_steps = 10\nbatch = 2\n"
       << "[sample]\nsteps = 5\ncount = 2\n"
       << "[snr]\nnoise_draws = 8\nbins = 8\n";
  }
  void TearDown() override { fs::remove_all(root_); }

  int run(const std::string& command, const std::string& out, std::vector<std::string> sets = {},
          std::optional<std::uint64_t> seed = std::nullopt) {
    CommandOptions o;
    o.command = command;
    o.config = config_;
    o.out = root_ / out;
    o.seed = seed;
    o.overrides = std::move(sets);
    return run_command(o);
  }

  fs::path root_;
  fs::path config_;
};

}  // namespace

TEST(Config, DefaultsFileAndOverrides) {
  RunConfig c = RunConfig::defaults();
  EXPECT_EQ(c.get_real("router.tau"), 0.7);
  EXPECT_EQ(c.get_count("spectrum.n_bands"), 3u);
  std::istringstream is("# comment\n[train]\nlambda_f = 0.25 ; trailing\n[router]\nmode=timestep_soft\n");
  c.load_stream(is, "inline");
  EXPECT_EQ(c.get_real("train.lambda_f"), 0.25);
  EXPECT_EQ(c.get("router.mode"), "timestep_soft");
  c.apply_override("ablate.seeds=0,1,2");
  EXPECT_EQ(c.get_counts("ablate.seeds"), (std::vector<std::size_t>{0, 1, 2}));
  EXPECT_TRUE(c.get_list("router.thresholds").empty());

  EXPECT_THROW(c.set("train.nope", "1"), ConfigError);
  EXPECT_THROW(c.apply_override("train.lr"), ConfigError);
  std::istringstream bad("[train]\nlr 0.1\n");
  EXPECT_THROW(c.load_stream(bad, "bad"), ConfigError);
  c.set("train.steps", "many");
  EXPECT_THROW(c.get_count("train.steps"), ConfigError);
  c.set("train.steps", "-3");
  EXPECT_THROW(c.get_count("train.steps"), ConfigError);
}

TEST(Config, ResolveOrderAndStageSettings) {
  CommandOptions o;
  o.command = "train";
  o.overrides = {"run.seed=4", "train.steps=7"};
  EXPECT_EQ(resolve_config(o).get_u64("run.seed"), 4u);
  o.seed = 9;
  const RunConfig c = resolve_config(o);
  EXPECT_EQ(c.get_u64("run.seed"), 9u);
  const TrainConfig adapt = train_config_from(c, "adapt");
  EXPECT_EQ(adapt.steps, 7u);
  EXPECT_EQ(adapt.seed, 9u);
  EXPECT_EQ(train_config_from(c, "pretrain").steps, 3000u);
  EXPECT_EQ(adapt.attachment, (std::vector<std::size_t>{1}));
  EXPECT_THROW(train_config_from(c, "finetune"), ConfigError);
}

TEST(Svg, EmbedsCompanionCsv) {
  const std::string csv = "t,a & b\n1,<2>\n";
  LinePlot p;
  p.title = "demo";
  p.series.push_back({"s", {0, 1, 2}, {1, 3, 2}});
  std::ostringstream os;
  write_line_plot_svg(os, p, csv);
  EXPECT_EQ(embedded_csv(os.str()), csv);
  EXPECT_NE(os.str().find("<svg"), std::string::npos);
  Heatmap h;
  h.row_labels = {"r"};
  h.col_labels = {"c1", "c2"};
  h.values = {{0.2, 0.8}};
  std::ostringstream hs;
  write_heatmap_svg(hs, h, csv);
  EXPECT_EQ(embedded_csv(hs.str()), csv);
}

TEST_F(CliTest, AnalyzeWritesManifestAndMatchingSvg) {
  ASSERT_EQ(run("analyze", "a"), kExitOk);
  const std::string manifest = slurp(root_ / "a" / "manifest.txt");
  EXPECT_NE(manifest.find("command analyze"), std::string::npos);
  EXPECT_NE(manifest.find("status complete"), std::string::npos);
  EXPECT_NE(manifest.find("file evolution.csv"), std::string::npos);
  EXPECT_EQ(embedded_csv(slurp(root_ / "a" / "evolution.svg")), slurp(root_ / "a" / "evolution.csv"));
  EXPECT_TRUE(fs::exists(root_ / "a" / "config.ini"));
}

TEST_F(CliTest, SnrIsDeterministicPerSeed) {
  ASSERT_EQ(run("snr", "s1", {}, 3), kExitOk);
  ASSERT_EQ(run("snr", "s2", {}, 3), kExitOk);
  for (const char* f : {"snr_bands.csv", "crossings.csv", "snr_radial.csv", "snr_slope.csv"})
    EXPECT_EQ(slurp(root_ / "s1" / f), slurp(root_ / "s2" / f)) << f;
  EXPECT_EQ(embedded_csv(slurp(root_ / "s1" / "snr_bands.svg")), slurp(root_ / "s1" / "snr_bands.csv"));
}

TEST_F(CliTest, TrainSampleRouteCompare) {
  ASSERT_EQ(run("train", "pre", {"train.stage=pretrain"}), kExitOk);
  const std::string ckpt = (root_ / "pre" / "checkpoint").string();
  ASSERT_TRUE(fs::exists(ckpt + "/params.bin"));
  ASSERT_EQ(run("train", "ad", {"model.checkpoint=" + ckpt}), kExitOk);
  const std::string summary = slurp(root_ / "ad" / "train_summary.csv");
  EXPECT_EQ(summary.substr(0, summary.find('\n')),
            "stage,steps,initial_val_loss,final_val_loss,trainable_parameters,adapter_parameters,degenerate_fecl");
  EXPECT_EQ(embedded_csv(slurp(root_ / "ad" / "train.svg")), slurp(root_ / "ad" / "train.csv"));

  const std::string adapted = (root_ / "ad" / "checkpoint").string();
  ASSERT_EQ(run("sample", "sa", {"model.checkpoint=" + adapted}), kExitOk);
  ASSERT_EQ(run("sample", "sb", {"model.checkpoint=" + adapted}), kExitOk);
  EXPECT_EQ(slurp(root_ / "sa" / "samples" / "sample_00001.fera"), slurp(root_ / "sb" / "samples" / "sample_00001.fera"));
  EXPECT_EQ(slurp(root_ / "sa" / "trace.csv"), slurp(root_ / "sb" / "trace.csv"));

  ASSERT_EQ(run("route-compare", "rc", {"model.checkpoint=" + adapted}), kExitOk);
  const std::string cmp = slurp(root_ / "rc" / "compare.csv");
  EXPECT_EQ(cmp.substr(0, cmp.find('\n')), "router,steps,max_adjacent_jump,switches");
  EXPECT_TRUE(fs::exists(root_ / "rc" / "heatmap_discrete.svg"));
}

TEST_F(CliTest, AdaptWithoutCheckpointIsUsageError) {
  EXPECT_EQ(run("train", "x"), kExitUsage);
  EXPECT_NE(slurp(root_ / "x" / "manifest.txt").find("status partial"), std::string::npos);
  EXPECT_EQ(run("analyze", "y", {"nope.key=1"}), kExitUsage);
  EXPECT_EQ(run("launch", "z"), kExitUsage);
}

TEST_F(CliTest, AblateGridRows) {
  ASSERT_EQ(run("ablate", "ab", {"ablate.routing=fei_soft,single", "ablate.seeds=0,1", "train.steps=2"}), kExitOk);
  const std::string csv = slurp(root_ / "ab" / "summary.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);
  const std::string means = slurp(root_ / "ab" / "means.csv");
  EXPECT_EQ(std::count(means.begin(), means.end(), '\n'), 3);
}

TEST_F(CliTest, GradcheckPasses) {
  ASSERT_EQ(run("gradcheck", "g"), kExitOk);
  const std::string csv = slurp(root_ / "g" / "gradcheck.csv");
  EXPECT_EQ(csv.find(",0\n"), std::string::npos);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 8);
}
