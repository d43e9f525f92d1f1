#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "probe3d/search.hpp"
#include "support.hpp"

using namespace probe3d;
using testing_support::load_corpus;
using testing_support::TempDir;

namespace {

GridCell cell(int t, const char* layer, double c, double val) {
  return GridCell{t, LayerId::parse(layer), c, 0.5, val};
}

bool same_c(double a, double b) { return std::abs(a - b) <= 1e-12 * std::max(1.0, b); }

}  // namespace

TEST(BetterCell, TieBreakOrder) {
  // Higher validation AUC wins outright.
  EXPECT_TRUE(better_cell(cell(600, "D4", 1000, 0.9), cell(20, "E1", 0.1, 0.8)));
  // Equal AUC: earlier timestep, then layer order, then smaller C.
  EXPECT_TRUE(better_cell(cell(120, "D4", 10, 0.9), cell(360, "E1", 0.1, 0.9)));
  EXPECT_TRUE(better_cell(cell(360, "E2", 10, 0.9), cell(360, "D1", 0.1, 0.9)));
  EXPECT_TRUE(better_cell(cell(360, "D3", 0.1, 0.9), cell(360, "D3", 0.2, 0.9)));
  EXPECT_FALSE(better_cell(cell(360, "D3", 0.1, 0.9), cell(360, "D3", 0.1, 0.9)));
}

TEST(CheckBalanced, RejectsUnbalancedAndEmpty) {
  std::vector<PairExample> pairs = {{Property::depth, "i", "a", "b", true},
                                    {Property::depth, "i", "a", "c", false}};
  EXPECT_NO_THROW(check_balanced(pairs, "train"));
  pairs.push_back({Property::depth, "i", "b", "c", true});
  EXPECT_THROW(check_balanced(pairs, "train"), ValidationError);
  EXPECT_THROW(check_balanced({}, "val"), ValidationError);
}

class GridSearch : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new TempDir("grid");
    corpus_ = load_corpus(generate(testing_support::small_synth(), dir_->path())).release();
    cfg_ = new GridConfig(testing_support::grid_for(testing_support::small_synth()));
    result_ = new GridResult(run_grid(*cfg_, Property::same_plane, corpus_->splits, corpus_->inputs));
  }
  static void TearDownTestSuite() {
    delete result_;
    delete cfg_;
    delete corpus_;
    delete dir_;
  }

  static TempDir* dir_;
  static testing_support::Corpus* corpus_;
  static GridConfig* cfg_;
  static GridResult* result_;
};

TempDir* GridSearch::dir_ = nullptr;
testing_support::Corpus* GridSearch::corpus_ = nullptr;
GridConfig* GridSearch::cfg_ = nullptr;
GridResult* GridSearch::result_ = nullptr;

TEST_F(GridSearch, FindsPlantedCell) {
  EXPECT_EQ(result_->best.timestep, 360);
  EXPECT_EQ(result_->best.layer, LayerId::parse("D3"));
  EXPECT_GE(result_->best.val_auc, 0.99);
  EXPECT_GE(result_->test_auc, 0.95);
  ASSERT_TRUE(result_->best_model.has_value());
  EXPECT_EQ(result_->best_model->penalty, result_->best.c);
  EXPECT_EQ(result_->model_id, "synth");
}

TEST_F(GridSearch, CellsSortedAndBestIsMaximal) {
  const auto& cells = result_->cells;
  for (std::size_t i = 1; i < cells.size(); ++i) {
    const auto& a = cells[i - 1];
    const auto& b = cells[i];
    EXPECT_TRUE(std::tie(a.timestep, a.layer, a.c) < std::tie(b.timestep, b.layer, b.c));
  }
  for (const auto& c : cells) {
    EXPECT_FALSE(better_cell(c, result_->best));
    EXPECT_GE(c.val_auc, 0.0);
    EXPECT_LE(c.val_auc, 1.0);
  }
}

TEST_F(GridSearch, FineSweepOnlyWhenCoarseBestInTriggerRange) {
  for (int t : cfg_->timesteps) {
    for (const auto& layer : cfg_->layers) {
      std::vector<GridCell> coarse, fine;
      for (const auto& c : result_->cells) {
        if (c.timestep != t || c.layer != layer) continue;
        const bool is_coarse = std::any_of(cfg_->coarse_c.begin(), cfg_->coarse_c.end(),
                                           [&](double v) { return same_c(c.c, v); });
        (is_coarse ? coarse : fine).push_back(c);
      }
      ASSERT_EQ(coarse.size(), cfg_->coarse_c.size());
      const auto best = *std::min_element(coarse.begin(), coarse.end(), better_cell);
      const bool triggered = best.c >= 0.1 - 1e-12 && best.c <= 1.0 + 1e-12;
      if (triggered) {
        // 0.2 .. 0.9 are the fine values not already on the coarse list
        EXPECT_EQ(fine.size(), 8u) << "t=" << t << " " << layer.str();
      } else {
        EXPECT_TRUE(fine.empty()) << "t=" << t << " " << layer.str();
      }
    }
  }
}

TEST_F(GridSearch, TestAucMatchesRetrainedModel) {
  const double again = evaluate(*result_->best_model, corpus_->splits.test, Property::same_plane,
                                result_->best.timestep, result_->best.layer, corpus_->inputs);
  EXPECT_EQ(again, result_->test_auc);
}

TEST_F(GridSearch, ParallelWorkersGiveIdenticalResult) {
  auto cfg = *cfg_;
  cfg.workers = 4;
  const auto parallel = run_grid(cfg, Property::same_plane, corpus_->splits, corpus_->inputs);
  EXPECT_TRUE(parallel == *result_);
  EXPECT_EQ(parallel.best_model->weights, result_->best_model->weights);
  EXPECT_EQ(parallel.best_model->bias, result_->best_model->bias);
}

TEST_F(GridSearch, CacheRoundTripGivesIdenticalResult) {
  TempDir cache_dir("cache");
  const FeatureCache cache(cache_dir.path());
  auto inputs = corpus_->inputs;
  inputs.cache = &cache;
  const auto cold = run_grid(*cfg_, Property::same_plane, corpus_->splits, inputs);
  EXPECT_TRUE(cold == *result_);
  // The second run must be served from the cache alone.
  std::filesystem::remove_all(corpus_->layout.features() / "t120");
  std::filesystem::remove_all(corpus_->layout.features() / "t360");
  const auto warm = run_grid(*cfg_, Property::same_plane, corpus_->splits, inputs);
  EXPECT_TRUE(warm == *result_);
  auto no_cache = corpus_->inputs;
  EXPECT_THROW(run_grid(*cfg_, Property::same_plane, corpus_->splits, no_cache),
               MissingFeatureError);
}

TEST(GridSearchErrors, MissingKeyAndUnbalancedSplit) {
  TempDir dir("grid_err");
  const auto synth = testing_support::small_synth();
  const auto corpus = load_corpus(generate(synth, dir.path()));
  auto cfg = testing_support::grid_for(synth);
  cfg.timesteps = {120, 240};
  try {
    run_grid(cfg, Property::same_plane, corpus->splits, corpus->inputs);
    FAIL() << "expected MissingFeatureError";
  } catch (const MissingFeatureError& e) {
    EXPECT_NE(std::string(e.what()).find("timestep 240"), std::string::npos) << e.what();
  }

  cfg = testing_support::grid_for(synth);
  auto splits = corpus->splits;
  splits.val.pop_back();
  EXPECT_THROW(run_grid(cfg, Property::same_plane, splits, corpus->inputs), ValidationError);
  splits = corpus->splits;
  splits.train.clear();
  EXPECT_THROW(run_grid(cfg, Property::same_plane, splits, corpus->inputs), ValidationError);

  cfg.coarse_c = {0.1, -1.0};
  EXPECT_THROW(run_grid(cfg, Property::same_plane, corpus->splits, corpus->inputs), UsageError);
}

TEST(GridSearchProperty, ShuffledLabelsGiveChanceAuc) {
  TempDir dir("shuffle");
  auto synth = testing_support::small_synth();
  synth.regions_per_image = 25;
  synth.val_images = 8;
  synth.timesteps = {360};
  synth.layers = {LayerId::parse("D3")};
  const auto corpus = load_corpus(generate(synth, dir.path()));
  ASSERT_GE(corpus->splits.val.size(), 2000u);

  // Permuting labels keeps every split balanced but destroys the signal.
  std::mt19937_64 rng(5);
  auto splits = corpus->splits;
  for (auto* split : {&splits.train, &splits.val}) {
    std::vector<bool> labels;
    for (const auto& p : *split) labels.push_back(p.label);
    std::shuffle(labels.begin(), labels.end(), rng);
    for (std::size_t i = 0; i < split->size(); ++i) (*split)[i].label = labels[i];
  }
  auto cfg = testing_support::grid_for(synth);
  cfg.coarse_c = {1.0};
  cfg.fine_c = {};
  const auto r = run_grid(cfg, Property::same_plane, splits, corpus->inputs);
  EXPECT_NEAR(r.best.val_auc, 0.5, 0.05);
}
