#pragma once

// Synthetic feature store with a linear signal planted at one feature key.
//
// Each image is a grid of square regions. A region owns a block of
// `cells_per_region` x `cells_per_region` feature cells, all holding the same
// vector, and its mask covers exactly the pixels whose bilinear taps stay
// inside that block, so pooling returns the planted vector unchanged.
//
// At the planted key a region's vector is base + signal, unit norm before
// noise: the base lives in channels [signal_channels, C) and the signal in
// channels [0, signal_channels) along a hidden unit direction h.
//  - class properties (same_plane, perpendicular_plane, material, occlusion,
//    shadow): signal = +-beta*h by class, so |a-b| on the signal channels is
//    0 within a class and 2*beta*|h| across classes.
//  - depth: signal = beta*z*h with z in [-1, 1] increasing with depth level.
//  - support: one floor region (z = -1) supports all others (z = +1).
// Every other key holds independent Gaussian noise.

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "probe3d/dataset.hpp"
#include "probe3d/dataset_io.hpp"
#include "probe3d/error.hpp"
#include "probe3d/feature_store.hpp"
#include "probe3d/pooling.hpp"
#include "probe3d/random.hpp"
#include "probe3d/tensor_store.hpp"

namespace probe3d {

struct SynthConfig {
  std::string model_id = "synth";
  std::size_t train_images = 4;
  std::size_t val_images = 8;
  std::size_t test_images = 4;
  std::size_t regions_per_image = 25;
  std::uint32_t cells_per_region = 3;  // feature cells per region side
  std::uint32_t stride = 8;            // image pixels per feature cell
  std::size_t channels = 64;
  std::size_t signal_channels = 8;
  std::vector<int> timesteps = {120, 240, 360, 480, 600};
  std::vector<LayerId> layers = unet_layers();
  int planted_timestep = 360;
  LayerId planted_layer{LayerFamily::unet_decoder, 3};
  int depth_levels = 5;
  double noise_sigma = 0.05;
  double margin = 0.3;
  Property property = Property::same_plane;
  std::uint64_t seed = 7;

  std::size_t num_images() const { return train_images + val_images + test_images; }
  std::uint32_t grid_cols() const {
    return static_cast<std::uint32_t>(std::ceil(std::sqrt(double(regions_per_image))));
  }
  std::uint32_t grid_rows() const {
    const auto cols = grid_cols();
    return static_cast<std::uint32_t>((regions_per_image + cols - 1) / cols);
  }
  std::uint32_t feature_h() const { return grid_rows() * cells_per_region; }
  std::uint32_t feature_w() const { return grid_cols() * cells_per_region; }
  std::uint32_t image_h() const { return feature_h() * stride; }
  std::uint32_t image_w() const { return feature_w() * stride; }

  // Signal amplitude so the planted separation along h is `margin`.
  double beta() const {
    if (property == Property::depth) return margin * (depth_levels - 1) / 2.0;
    return margin;
  }

  void validate() const {
    if (!(margin > 0.0)) throw UsageError("synth margin must be positive");
    if (!(noise_sigma >= 0.0)) throw UsageError("synth noise_sigma must be non-negative");
    if (beta() >= 1.0) throw UsageError("synth margin too large for unit-norm region vectors");
    if (regions_per_image < 2) throw UsageError("synth needs at least two regions per image");
    if (signal_channels < 1 || signal_channels >= channels)
      throw UsageError("synth signal_channels must be in [1, channels)");
    if (train_images == 0 || val_images == 0 || test_images == 0)
      throw UsageError("synth needs images in every split");
    if (cells_per_region < 1 || stride < 1) throw UsageError("bad synth geometry");
    if (depth_levels < 2) throw UsageError("synth depth_levels must be at least 2");
    bool t_ok = false, l_ok = false;
    for (int t : timesteps) t_ok |= t == planted_timestep;
    for (const auto& l : layers) l_ok |= l == planted_layer;
    if (!t_ok || !l_ok) throw UsageError("planted key is not on the synth grid");
    const auto mask = region_pixel_range(0);
    if (std::uint64_t(mask.second - mask.first) * (mask.second - mask.first) < kMinRegionPixels)
      throw UsageError("synth regions would be smaller than 100 pixels");
  }

  // Pixel interval [lo, hi) along one axis for the block starting at the
  // cell index `block * cells_per_region`: pixels whose source coordinate
  // (x + 0.5) / stride - 0.5 lies inside the block's cells.
  std::pair<std::uint32_t, std::uint32_t> region_pixel_range(std::uint32_t block) const {
    const double c0 = double(block) * cells_per_region;
    const double c1 = c0 + cells_per_region - 1;
    const auto lo = static_cast<std::uint32_t>(std::ceil(stride * (c0 + 0.5) - 0.5));
    const auto hi = static_cast<std::uint32_t>(std::floor(stride * (c1 + 0.5) - 0.5)) + 1;
    return {lo, hi};
  }
};

inline nlohmann::json synth_config_to_json(const SynthConfig& c) {
  std::vector<std::string> layers;
  for (const auto& l : c.layers) layers.push_back(l.str());
  return {{"model_id", c.model_id},
          {"train_images", c.train_images},
          {"val_images", c.val_images},
          {"test_images", c.test_images},
          {"regions_per_image", c.regions_per_image},
          {"cells_per_region", c.cells_per_region},
          {"stride", c.stride},
          {"channels", c.channels},
          {"signal_channels", c.signal_channels},
          {"timesteps", c.timesteps},
          {"layers", layers},
          {"planted_timestep", c.planted_timestep},
          {"planted_layer", c.planted_layer.str()},
          {"depth_levels", c.depth_levels},
          {"noise_sigma", c.noise_sigma},
          {"margin", c.margin},
          {"property", std::string(to_string(c.property))},
          {"seed", c.seed}};
}

struct SynthLayout {
  std::filesystem::path root;
  std::filesystem::path features() const { return root / "features"; }
  std::filesystem::path manifest(const std::string& split) const {
    return root / "manifests" / (split + ".json");
  }
  std::filesystem::path pairs_dir() const { return root / "pairs"; }
  std::filesystem::path pairs(const std::string& split) const {
    return pairs_dir() / (split + ".jsonl");
  }
};

namespace detail {

struct SynthRegion {
  int cls = 0;     // class code for class properties
  double z = 0.0;  // signed signal level for asymmetric properties
  int level = 0;   // depth level
  bool floor = false;
  bool object = false;  // shadow property: object region vs shadow region
};

inline std::vector<double> random_unit(Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  double s = 0.0;
  for (auto& x : v) {
    x = rng.normal();
    s += x * x;
  }
  s = std::sqrt(s);
  for (auto& x : v) x /= s;
  return v;
}

inline void write_atomic_tensor(const std::filesystem::path& path, const Tensor& t) {
  const auto tmp = path.string() + ".tmp";
  write_tensor(tmp, t);
  std::filesystem::rename(tmp, path);
}

}  // namespace detail

/// Writes features, manifests and pair files for cfg under out_dir.
inline SynthLayout generate(const SynthConfig& cfg, const std::filesystem::path& out_dir) {
  cfg.validate();
  namespace fs = std::filesystem;
  SynthLayout layout{out_dir};
  fs::create_directories(layout.features());
  fs::create_directories(out_dir / "manifests");
  fs::create_directories(layout.pairs_dir());
  if (cfg.property == Property::depth) fs::create_directories(out_dir / "depth");

  const std::size_t C = cfg.channels;
  const std::size_t S = cfg.signal_channels;
  const auto fh = cfg.feature_h(), fw = cfg.feature_w();
  const auto H = cfg.image_h(), W = cfg.image_w();
  const auto cols = cfg.grid_cols();
  const double beta = cfg.beta();

  Rng hidden_rng(mix_seed(cfg.seed, 1));
  const auto h = detail::random_unit(hidden_rng, S);

  FeatureIndex index(cfg.model_id, layout.features());
  std::vector<ImageRecord> records;

  for (std::size_t img = 0; img < cfg.num_images(); ++img) {
    Rng rng(mix_seed(cfg.seed, 1000 + img));
    ImageRecord rec;
    rec.image_id = "img" + std::to_string(img);
    rec.width = W;
    rec.height = H;

    // Latent region properties. Class sizes are balanced, order shuffled.
    const std::size_t R = cfg.regions_per_image;
    std::vector<detail::SynthRegion> latent(R);
    std::vector<std::size_t> order(R);
    for (std::size_t k = 0; k < R; ++k) order[k] = k;
    for (std::size_t k = R; k > 1; --k) std::swap(order[k - 1], order[rng.uniform_index(k)]);
    for (std::size_t k = 0; k < R; ++k) {
      auto& l = latent[order[k]];
      l.cls = static_cast<int>(k % 2);
      l.level = static_cast<int>(k % cfg.depth_levels);
      l.object = k < 2;  // shadow: one object per class, the rest are shadows
    }
    latent[0].floor = true;
    for (auto& l : latent) {
      switch (cfg.property) {
        case Property::depth: l.z = 2.0 * l.level / (cfg.depth_levels - 1) - 1.0; break;
        case Property::support: l.z = l.floor ? -1.0 : 1.0; break;
        default: l.z = l.cls == 0 ? 1.0 : -1.0; break;
      }
    }

    // Region masks.
    for (std::size_t k = 0; k < R; ++k) {
      const auto [r0, r1] = cfg.region_pixel_range(static_cast<std::uint32_t>(k / cols));
      const auto [c0, c1] = cfg.region_pixel_range(static_cast<std::uint32_t>(k % cols));
      std::vector<std::uint64_t> idx;
      for (auto r = r0; r < r1; ++r)
        for (auto c = c0; c < c1; ++c) idx.push_back(std::uint64_t(r) * W + c);
      rec.regions.push_back(
          Region::from_mask("r" + std::to_string(k), RleMask::from_indices(W, H, idx)));
    }

    // Annotations for the chosen property.
    auto& ann = rec.annotations;
    for (std::size_t k = 0; k < R; ++k) {
      const auto& id = rec.regions[k].region_id;
      const auto& l = latent[k];
      switch (cfg.property) {
        case Property::same_plane:
          ann.planes[id] = PlaneAnnotation{l.cls, l.cls == 0 ? std::array<double, 3>{0, 0, 1}
                                                             : std::array<double, 3>{0, 1, 0}};
          break;
        case Property::perpendicular_plane:
          ann.planes[id] = PlaneAnnotation{l.cls, l.cls == 0 ? std::array<double, 3>{1, 0, 0}
                                                             : std::array<double, 3>{0, 1, 0}};
          break;
        case Property::material: ann.materials[id] = l.cls + 1; break;
        case Property::occlusion: ann.instances[id] = l.cls; break;
        case Property::support:
          if (!l.floor) ann.support.emplace_back(id, rec.regions[0].region_id);
          break;
        case Property::shadow: break;
        case Property::depth: break;
      }
    }
    if (cfg.property == Property::shadow) {
      std::string objects[2];
      for (std::size_t k = 0; k < R; ++k)
        if (latent[k].object) objects[latent[k].cls] = rec.regions[k].region_id;
      for (std::size_t k = 0; k < R; ++k)
        if (!latent[k].object)
          ann.shadows.emplace_back(objects[latent[k].cls], rec.regions[k].region_id);
    }
    if (cfg.property == Property::depth) {
      std::vector<float> depth(std::uint64_t(H) * W, 1.0f);
      for (std::size_t k = 0; k < R; ++k) {
        const float d = static_cast<float>(std::pow(1.5, latent[k].level));
        rec.regions[k].mask.for_each_foreground([&](std::uint64_t p) { depth[p] = d; });
      }
      const auto rel = "../depth/" + rec.image_id + ".pbt";
      detail::write_atomic_tensor(out_dir / "depth" / (rec.image_id + ".pbt"),
                                  Tensor({H, W}, std::move(depth)));
      rec.depth_map = rel;
    }

    // Feature maps, one per grid key.
    for (int t : cfg.timesteps) {
      for (const auto& layer : cfg.layers) {
        const bool planted = t == cfg.planted_timestep && layer == cfg.planted_layer;
        Rng key_rng(mix_seed(cfg.seed, hash_string(rec.image_id + "/" + std::to_string(t) + "/" +
                                                   layer.str())));
        std::vector<float> fm(C * fh * fw);
        const double cell_scale = 1.0 / std::sqrt(double(C));
        for (auto& v : fm) v = static_cast<float>(key_rng.normal() * cell_scale);

        for (std::size_t k = 0; k < R; ++k) {
          std::vector<double> vec(C);
          if (planted) {
            const double s = beta * latent[k].z;
            const auto base = detail::random_unit(key_rng, C - S);
            const double base_norm = std::sqrt(std::max(0.0, 1.0 - s * s));
            for (std::size_t c = 0; c < S; ++c) vec[c] = s * h[c];
            for (std::size_t c = S; c < C; ++c) vec[c] = base_norm * base[c - S];
            for (auto& v : vec) v += cfg.noise_sigma * key_rng.normal();
          } else {
            for (auto& v : vec) v = key_rng.normal() * cell_scale;
          }
          const auto br = static_cast<std::uint32_t>(k / cols) * cfg.cells_per_region;
          const auto bc = static_cast<std::uint32_t>(k % cols) * cfg.cells_per_region;
          for (std::size_t c = 0; c < C; ++c)
            for (std::uint32_t y = br; y < br + cfg.cells_per_region; ++y)
              for (std::uint32_t x = bc; x < bc + cfg.cells_per_region; ++x)
                fm[(c * fh + y) * fw + x] = static_cast<float>(vec[c]);
        }

        const auto rel = "t" + std::to_string(t) + "/" + layer.str() + "/" + rec.image_id + ".pbt";
        fs::create_directories((layout.features() / rel).parent_path());
        detail::write_atomic_tensor(layout.features() / rel, Tensor({C, fh, fw}, std::move(fm)));
        index.add(FeatureEntry{rec.image_id, t, layer, rel, C, fh, fw});
      }
    }
    records.push_back(std::move(rec));
  }
  index.save();

  const std::pair<const char*, std::pair<std::size_t, std::size_t>> splits[] = {
      {"train", {0, cfg.train_images}},
      {"val", {cfg.train_images, cfg.train_images + cfg.val_images}},
      {"test", {cfg.train_images + cfg.val_images, cfg.num_images()}}};
  std::uint64_t stream = 0;
  for (const auto& [name, range] : splits) {
    Manifest m;
    m.images.assign(records.begin() + range.first, records.begin() + range.second);
    save_manifest(m, layout.manifest(name));
    // Re-load so depth maps are resolved exactly as a user of the files would.
    const auto loaded = load_manifest(layout.manifest(name));
    write_pairs(layout.pairs(name),
                build_pairs(cfg.property, loaded.images, mix_seed(cfg.seed, 77 + stream++)));
  }
  write_text_file(out_dir / "synth.json", synth_config_to_json(cfg).dump(1) + "\n");
  return layout;
}

}  // namespace probe3d
