#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "probe3d/probe3d.hpp"

namespace testing_support {

namespace fs = std::filesystem;

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "probe3d") {
    static std::atomic<int> counter{0};
    std::random_device rd;
    path_ = fs::temp_directory_path() /
            (tag + "_" + std::to_string(rd()) + "_" + std::to_string(counter++));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& s) const { return path_ / s; }

 private:
  fs::path path_;
};

inline std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// A loaded synth corpus ready for run_grid.
struct Corpus {
  probe3d::SynthLayout layout;
  probe3d::FeatureIndex index;
  probe3d::ProbeInputs inputs;
  probe3d::Splits splits;
};

inline std::unique_ptr<Corpus> load_corpus(const probe3d::SynthLayout& layout) {
  auto c = std::make_unique<Corpus>();
  c->layout = layout;
  c->index = probe3d::FeatureIndex::load(layout.features());
  c->inputs.index = &c->index;
  for (const char* split : {"train", "val", "test"}) {
    auto m = probe3d::load_manifest(layout.manifest(split));
    for (auto& rec : m.images) {
      const auto id = rec.image_id;
      c->inputs.images.emplace(id, std::move(rec));
    }
  }
  c->splits.train = probe3d::read_pairs(layout.pairs("train"));
  c->splits.val = probe3d::read_pairs(layout.pairs("val"));
  c->splits.test = probe3d::read_pairs(layout.pairs("test"));
  return c;
}

// Small planted corpus: 2 timesteps x 2 layers, planted at (360, D3).
inline probe3d::SynthConfig small_synth(probe3d::Property property = probe3d::Property::same_plane) {
  probe3d::SynthConfig cfg;
  cfg.train_images = 2;
  cfg.val_images = 2;
  cfg.test_images = 2;
  cfg.regions_per_image = 9;
  cfg.channels = 16;
  cfg.signal_channels = 4;
  cfg.timesteps = {120, 360};
  cfg.layers = {probe3d::LayerId::parse("E1"), probe3d::LayerId::parse("D3")};
  cfg.planted_timestep = 360;
  cfg.planted_layer = probe3d::LayerId::parse("D3");
  cfg.property = property;
  cfg.seed = 11;
  return cfg;
}

inline probe3d::GridConfig grid_for(const probe3d::SynthConfig& s) {
  probe3d::GridConfig g;
  g.model_id = s.model_id;
  g.timesteps = s.timesteps;
  g.layers = s.layers;
  return g;
}

// Random SVM problem: two Gaussian blobs in d dimensions with a random
// offset, so some draws are separable and some overlap.
struct SvmCase {
  std::vector<std::vector<double>> X;
  std::vector<int> y;
  std::vector<float> flat;
  std::size_t d = 0;
};

inline SvmCase random_svm_case(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> n_dist(4, 20), d_dist(1, 5);
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> sep(0.0, 2.5);
  SvmCase c;
  const int n = n_dist(rng);
  c.d = d_dist(rng);
  std::vector<double> dir(c.d);
  for (auto& v : dir) v = g(rng);
  const double offset = sep(rng);
  for (int i = 0; i < n; ++i) {
    const int label = i < 2 ? (i == 0 ? 1 : -1) : (rng() % 2 ? 1 : -1);
    std::vector<double> x(c.d);
    for (std::size_t k = 0; k < c.d; ++k) {
      // float-representable coordinates so both solvers see the same data
      x[k] = static_cast<float>(g(rng) + label * offset * dir[k]);
      c.flat.push_back(static_cast<float>(x[k]));
    }
    c.X.push_back(x);
    c.y.push_back(label);
  }
  return c;
}

inline probe3d::svm::Problem as_problem(const SvmCase& c, double C) {
  probe3d::svm::Problem p;
  p.vectors = c.flat;
  p.dimension = c.d;
  p.labels = c.y;
  p.penalty = C;
  return p;
}

}  // namespace testing_support
