#pragma once

// Grid search over (timestep, layer, C): train on the train pairs, select on
// validation AUC, evaluate the selected cell once on the test pairs.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "probe3d/dataset.hpp"
#include "probe3d/error.hpp"
#include "probe3d/feature_store.hpp"
#include "probe3d/metrics.hpp"
#include "probe3d/pooling.hpp"
#include "probe3d/svm.hpp"

namespace probe3d {

inline constexpr int kMaxTimestep = 1000;

inline std::vector<int> default_diffusion_timesteps() {
  std::vector<int> t;
  for (int s = 20; s <= kMaxTimestep; s += 20) t.push_back(s);
  return t;
}

inline std::vector<double> default_coarse_c() { return {0.001, 0.01, 0.1, 1, 10, 100, 1000}; }

inline std::vector<double> default_fine_c() {
  std::vector<double> c;
  for (int k = 1; k <= 10; ++k) c.push_back(k / 10.0);
  return c;
}

struct GridConfig {
  std::string model_id;
  std::vector<int> timesteps = default_diffusion_timesteps();
  std::vector<LayerId> layers = unet_layers();
  std::vector<double> coarse_c = default_coarse_c();
  std::vector<double> fine_c = default_fine_c();
  // The fine sweep runs for a (timestep, layer) only when its best coarse C
  // lies in [fine_trigger_low, fine_trigger_high].
  double fine_trigger_low = 0.1;
  double fine_trigger_high = 1.0;
  Normalization normalization = Normalization::regions;
  double svm_tolerance = 1e-3;
  std::size_t svm_max_iterations = 0;
  std::uint64_t seed = 0;
  unsigned workers = 1;

  void validate() const {
    if (timesteps.empty()) throw UsageError("grid needs at least one timestep");
    if (layers.empty()) throw UsageError("grid needs at least one layer");
    if (coarse_c.empty()) throw UsageError("grid needs at least one C value");
    for (int t : timesteps)
      if (t < 0 || t > kMaxTimestep)
        throw UsageError("timestep " + std::to_string(t) + " outside [0, 1000]");
    for (const auto& l : layers) l.validate();
    for (double c : coarse_c)
      if (!(c > 0.0)) throw UsageError("C values must be positive");
    for (double c : fine_c)
      if (!(c > 0.0)) throw UsageError("C values must be positive");
  }
};

struct GridCell {
  int timestep = 0;
  LayerId layer;
  double c = 0.0;
  double train_auc = 0.0;
  double val_auc = 0.0;
  friend bool operator==(const GridCell&, const GridCell&) = default;
};

// Strict preference used for selection: higher val AUC, then smaller
// timestep, then earlier layer, then smaller C.
inline bool better_cell(const GridCell& a, const GridCell& b) {
  if (a.val_auc != b.val_auc) return a.val_auc > b.val_auc;
  if (a.timestep != b.timestep) return a.timestep < b.timestep;
  if (a.layer != b.layer) return a.layer < b.layer;
  return a.c < b.c;
}

struct GridTiming {
  double seconds = 0.0;
  unsigned workers = 1;
};

struct GridResult {
  Property property = Property::same_plane;
  std::string model_id;
  std::vector<GridCell> cells;  // sorted by (timestep, layer, C)
  GridCell best;
  double test_auc = 0.0;
  std::optional<svm::Model> best_model;
  GridTiming timing;  // not part of equality or the JSON artifact

  friend bool operator==(const GridResult& a, const GridResult& b) {
    return a.property == b.property && a.model_id == b.model_id && a.cells == b.cells &&
           a.best == b.best && a.test_auc == b.test_auc;
  }
};

struct Splits {
  std::vector<PairExample> train;
  std::vector<PairExample> val;
  std::vector<PairExample> test;
};

// Everything run_grid reads: the feature store, an optional pooled-feature
// cache and the annotated images the pairs refer to.
struct ProbeInputs {
  const FeatureIndex* index = nullptr;
  const FeatureCache* cache = nullptr;
  std::map<std::string, ImageRecord> images;

  const ImageRecord& image(const std::string& id) const {
    auto it = images.find(id);
    if (it == images.end()) throw ValidationError("pair refers to unknown image '" + id + "'");
    return it->second;
  }
};

inline void check_balanced(const std::vector<PairExample>& pairs, const char* split) {
  if (pairs.empty()) throw ValidationError(std::string(split) + " split is empty");
  std::size_t pos = 0;
  for (const auto& p : pairs) pos += p.label;
  const std::size_t neg = pairs.size() - pos;
  if (pos != neg)
    throw ValidationError(std::string(split) + " split is unbalanced: " + std::to_string(pos) +
                          " positive vs " + std::to_string(neg) + " negative pairs");
}

/// Probe vectors and labels for one split at one (timestep, layer).
struct ProbeMatrix {
  std::vector<float> vectors;
  std::size_t dimension = 0;
  std::vector<int> labels;  // -1 / +1

  std::span<const float> row(std::size_t i) const {
    return std::span<const float>(vectors).subspan(i * dimension, dimension);
  }
  std::vector<std::uint8_t> binary_labels() const {
    std::vector<std::uint8_t> out(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) out[i] = labels[i] > 0;
    return out;
  }
};

class PooledLookup {
 public:
  PooledLookup(const ProbeInputs& inputs, int timestep, LayerId layer)
      : inputs_(inputs), timestep_(timestep), layer_(layer) {}

  const RegionFeatureTable& table(const std::string& image_id) {
    auto it = tables_.find(image_id);
    if (it != tables_.end()) return it->second;
    auto table =
        ensure_pooled(*inputs_.index, inputs_.cache, inputs_.image(image_id), timestep_, layer_);
    return tables_.emplace(image_id, std::move(table)).first->second;
  }

 private:
  const ProbeInputs& inputs_;
  int timestep_;
  LayerId layer_;
  std::map<std::string, RegionFeatureTable> tables_;
};

inline ProbeMatrix assemble(const std::vector<PairExample>& pairs, Property property,
                            PooledLookup& lookup, Normalization normalization) {
  ProbeMatrix m;
  for (const auto& p : pairs) {
    if (p.property != property)
      throw ValidationError("pair for property " + std::string(to_string(p.property)) +
                            " in a " + std::string(to_string(property)) + " run");
    const auto& table = lookup.table(p.image_id);
    const auto v = probe_vector(table.row(p.region_a), table.row(p.region_b),
                                is_symmetric(property), normalization);
    if (m.dimension == 0) m.dimension = v.size();
    if (v.size() != m.dimension)
      throw ValidationError("inconsistent channel count at image " + p.image_id);
    m.vectors.insert(m.vectors.end(), v.begin(), v.end());
    m.labels.push_back(p.label ? 1 : -1);
  }
  return m;
}

inline double score_auc(const svm::Model& model, const ProbeMatrix& m) {
  std::vector<double> scores(m.labels.size());
  for (std::size_t i = 0; i < scores.size(); ++i) scores[i] = svm::decision(model, m.row(i));
  return roc_auc(scores, m.binary_labels());
}

inline svm::Model train_cell(const ProbeMatrix& train, double c, const GridConfig& cfg,
                             const svm::Gram* gram) {
  svm::Problem problem;
  problem.vectors = train.vectors;
  problem.dimension = train.dimension;
  problem.labels = train.labels;
  problem.penalty = c;
  problem.tolerance = cfg.svm_tolerance;
  problem.max_iterations = cfg.svm_max_iterations;
  return svm::train(problem, gram);
}

// Gram matrices above this many entries are not precomputed.
inline constexpr std::size_t kMaxGramEntries = std::size_t{1} << 26;

/// All C values for one (timestep, layer): the coarse sweep, then the fine
/// sweep when the best coarse C falls in the trigger range.
inline std::vector<GridCell> search_cell(const GridConfig& cfg, Property property,
                                         const Splits& splits, const ProbeInputs& inputs,
                                         int timestep, LayerId layer) {
  PooledLookup lookup(inputs, timestep, layer);
  const auto train = assemble(splits.train, property, lookup, cfg.normalization);
  const auto val = assemble(splits.val, property, lookup, cfg.normalization);

  svm::Problem shape;
  shape.vectors = train.vectors;
  shape.dimension = train.dimension;
  shape.labels = train.labels;
  std::optional<svm::Gram> gram;
  if (train.labels.size() * train.labels.size() <= kMaxGramEntries) gram.emplace(shape);

  std::vector<GridCell> cells;
  auto run = [&](double c) {
    const auto model = train_cell(train, c, cfg, gram ? &*gram : nullptr);
    cells.push_back(GridCell{timestep, layer, c, score_auc(model, train), score_auc(model, val)});
  };

  for (double c : cfg.coarse_c) run(c);
  const GridCell coarse_best = *std::min_element(cells.begin(), cells.end(), better_cell);
  if (coarse_best.c >= cfg.fine_trigger_low - 1e-12 &&
      coarse_best.c <= cfg.fine_trigger_high + 1e-12) {
    for (double c : cfg.fine_c) {
      const bool seen = std::any_of(cells.begin(), cells.end(), [&](const GridCell& g) {
        return std::abs(g.c - c) <= 1e-12 * std::max(1.0, c);
      });
      if (!seen) run(c);
    }
  }
  return cells;
}

/// Test AUC of `model` on `pairs` at (timestep, layer).
inline double evaluate(const svm::Model& model, const std::vector<PairExample>& pairs,
                       Property property, int timestep, LayerId layer, const ProbeInputs& inputs,
                       Normalization normalization = Normalization::regions) {
  PooledLookup lookup(inputs, timestep, layer);
  const auto test = assemble(pairs, property, lookup, normalization);
  if (test.dimension != model.weights.size())
    throw ValidationError("test vectors do not match the model dimension");
  return score_auc(model, test);
}

inline GridResult run_grid(const GridConfig& cfg, Property property, const Splits& splits,
                           const ProbeInputs& inputs) {
  cfg.validate();
  if (!inputs.index) throw UsageError("run_grid needs a feature index");
  check_balanced(splits.train, "train");
  check_balanced(splits.val, "val");
  check_balanced(splits.test, "test");

  const auto started = std::chrono::steady_clock::now();

  struct Job {
    int timestep;
    LayerId layer;
  };
  std::vector<Job> jobs;
  for (int t : cfg.timesteps)
    for (const auto& l : cfg.layers) jobs.push_back({t, l});

  std::vector<std::vector<GridCell>> outputs(jobs.size());
  std::vector<std::exception_ptr> errors(jobs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (;;) {
      const std::size_t k = next.fetch_add(1);
      if (k >= jobs.size()) return;
      try {
        outputs[k] = search_cell(cfg, property, splits, inputs, jobs[k].timestep, jobs[k].layer);
      } catch (...) {
        errors[k] = std::current_exception();
      }
    }
  };
  const unsigned workers =
      std::max(1u, std::min<unsigned>(cfg.workers, static_cast<unsigned>(jobs.size())));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(worker);
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  GridResult result;
  result.property = property;
  result.model_id = inputs.index->model_id();
  for (auto& cells : outputs) result.cells.insert(result.cells.end(), cells.begin(), cells.end());
  std::sort(result.cells.begin(), result.cells.end(), [](const GridCell& a, const GridCell& b) {
    if (a.timestep != b.timestep) return a.timestep < b.timestep;
    if (a.layer != b.layer) return a.layer < b.layer;
    return a.c < b.c;
  });
  result.best = *std::min_element(result.cells.begin(), result.cells.end(), better_cell);

  // Retrain at the selected cell (training is deterministic) and touch the
  // test split exactly once.
  PooledLookup lookup(inputs, result.best.timestep, result.best.layer);
  const auto train = assemble(splits.train, property, lookup, cfg.normalization);
  svm::Problem shape;
  shape.vectors = train.vectors;
  shape.dimension = train.dimension;
  shape.labels = train.labels;
  std::optional<svm::Gram> gram;
  if (train.labels.size() * train.labels.size() <= kMaxGramEntries) gram.emplace(shape);
  auto model = train_cell(train, result.best.c, cfg, gram ? &*gram : nullptr);
  result.test_auc = evaluate(model, splits.test, property, result.best.timestep,
                             result.best.layer, inputs, cfg.normalization);
  result.best_model = std::move(model);

  result.timing.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  result.timing.workers = workers;
  return result;
}

}  // namespace probe3d
