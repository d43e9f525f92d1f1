#pragma once

#include <algorithm>
#include <cmath>
#include <compare>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "probe3d/dataset.hpp"
#include "probe3d/error.hpp"
#include "probe3d/mask.hpp"
#include "probe3d/tensor_store.hpp"

namespace probe3d {

enum class LayerFamily : std::uint8_t { unet_encoder = 0, unet_decoder = 1, transformer = 2 };

// E1-E4 / D1-D4 for the U-Net, T<n> for transformer blocks (1-based from the
// input side). Ordering is E1 < ... < E4 < D1 < ... < D4 < T1 < T2 < ...
struct LayerId {
  LayerFamily family = LayerFamily::unet_decoder;
  int index = 1;

  friend auto operator<=>(const LayerId&, const LayerId&) = default;

  std::string str() const {
    const char prefix = family == LayerFamily::unet_encoder   ? 'E'
                        : family == LayerFamily::unet_decoder ? 'D'
                                                              : 'T';
    return prefix + std::to_string(index);
  }

  static LayerId parse(std::string_view text) {
    if (text.size() < 2) throw UsageError("bad layer id '" + std::string(text) + "'");
    LayerId id;
    switch (text[0]) {
      case 'E': id.family = LayerFamily::unet_encoder; break;
      case 'D': id.family = LayerFamily::unet_decoder; break;
      case 'T': id.family = LayerFamily::transformer; break;
      default: throw UsageError("bad layer id '" + std::string(text) + "'");
    }
    int value = 0;
    for (char c : text.substr(1)) {
      if (c < '0' || c > '9') throw UsageError("bad layer id '" + std::string(text) + "'");
      value = value * 10 + (c - '0');
      if (value > 1'000'000) throw UsageError("bad layer id '" + std::string(text) + "'");
    }
    id.index = value;
    id.validate();
    return id;
  }

  void validate() const {
    if (index < 1) throw UsageError("layer index must be at least 1 in " + str());
    if (family != LayerFamily::transformer && index > 4)
      throw UsageError("U-Net layer index must be in [1, 4], got " + str());
  }
};

inline const std::vector<LayerId>& unet_layers() {
  static const std::vector<LayerId> layers = {
      {LayerFamily::unet_encoder, 1}, {LayerFamily::unet_encoder, 2},
      {LayerFamily::unet_encoder, 3}, {LayerFamily::unet_encoder, 4},
      {LayerFamily::unet_decoder, 1}, {LayerFamily::unet_decoder, 2},
      {LayerFamily::unet_decoder, 3}, {LayerFamily::unet_decoder, 4}};
  return layers;
}

struct FeatureKey {
  std::string model_id;
  int timestep = 0;  // 0 for non-diffusion models
  LayerId layer;

  friend auto operator<=>(const FeatureKey&, const FeatureKey&) = default;

  std::string str() const {
    return model_id + "/t" + std::to_string(timestep) + "/" + layer.str();
  }
};

struct RegionFeature {
  std::string region_id;
  FeatureKey key;
  std::vector<float> vector;
};

namespace detail {

// Source taps for one output coordinate under the half-pixel-centre
// convention: src = (dst + 0.5) * (in / out) - 0.5, clamped to [0, in - 1].
struct Tap {
  std::uint32_t lo = 0;
  std::uint32_t hi = 0;
  double frac = 0.0;
};

inline std::vector<Tap> bilinear_taps(std::uint32_t in, std::uint32_t out) {
  std::vector<Tap> taps(out);
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (std::uint32_t x = 0; x < out; ++x) {
    double src = (x + 0.5) * scale - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(in - 1));
    const auto lo = static_cast<std::uint32_t>(std::floor(src));
    taps[x].lo = lo;
    taps[x].hi = std::min(lo + 1, in - 1);
    taps[x].frac = src - lo;
  }
  return taps;
}

inline void check_feature_map(const Tensor& fm) {
  if (fm.rank() != 3) throw ValidationError("feature map must be [C,H,W]");
  if (fm.dtype() != DType::float32) throw ValidationError("feature map must be float32");
}

}  // namespace detail

inline Tensor upsample_bilinear(const Tensor& fm, std::uint32_t height, std::uint32_t width) {
  detail::check_feature_map(fm);
  const auto channels = fm.dim(0);
  const auto h = static_cast<std::uint32_t>(fm.dim(1));
  const auto w = static_cast<std::uint32_t>(fm.dim(2));
  if (h < 1 || w < 1 || h > height || w > width)
    throw ValidationError("upsample target " + std::to_string(height) + "x" +
                          std::to_string(width) + " is smaller than feature map " +
                          std::to_string(h) + "x" + std::to_string(w));
  const auto rows = detail::bilinear_taps(h, height);
  const auto cols = detail::bilinear_taps(w, width);
  const auto src = fm.values<float>();
  std::vector<float> out(channels * height * width);
  for (std::uint64_t c = 0; c < channels; ++c) {
    const float* plane = src.data() + c * h * w;
    float* dst = out.data() + c * height * width;
    for (std::uint32_t y = 0; y < height; ++y) {
      const auto& ry = rows[y];
      const float* r0 = plane + std::uint64_t(ry.lo) * w;
      const float* r1 = plane + std::uint64_t(ry.hi) * w;
      for (std::uint32_t x = 0; x < width; ++x) {
        const auto& cx = cols[x];
        const double top = (1.0 - cx.frac) * r0[cx.lo] + cx.frac * r0[cx.hi];
        const double bottom = (1.0 - cx.frac) * r1[cx.lo] + cx.frac * r1[cx.hi];
        dst[std::uint64_t(y) * width + x] = static_cast<float>((1.0 - ry.frac) * top + ry.frac * bottom);
      }
    }
  }
  return Tensor({channels, height, width}, std::move(out));
}

// Masked average over an already-upsampled [C,H,W] map.
inline std::vector<float> pool_region(const Tensor& upsampled, const Region& region) {
  detail::check_feature_map(upsampled);
  const auto channels = upsampled.dim(0);
  const auto plane = upsampled.dim(1) * upsampled.dim(2);
  if (region.mask.height() != upsampled.dim(1) || region.mask.width() != upsampled.dim(2))
    throw ValidationError("region " + region.region_id + " does not match feature map size");
  if (region.mask.foreground_count() == 0)
    throw ValidationError("region " + region.region_id + " is empty");
  const auto src = upsampled.values<float>();
  std::vector<double> acc(channels, 0.0);
  std::uint64_t n = 0;
  region.mask.for_each_foreground([&](std::uint64_t idx) {
    for (std::uint64_t c = 0; c < channels; ++c) acc[c] += src[c * plane + idx];
    ++n;
  });
  std::vector<float> out(channels);
  for (std::uint64_t c = 0; c < channels; ++c) out[c] = static_cast<float>(acc[c] / n);
  return out;
}

/// Upsample-then-pool for many regions at once without materialising the
/// full-resolution map: each region pixel's bilinear value is evaluated
/// from the taps directly. Numerically this is the same computation as
/// pool_region(upsample_bilinear(fm, H, W), r) without the float rounding of
/// the intermediate map. Returns one vector per region, in input order.
inline std::vector<std::vector<float>> pool_regions(const Tensor& fm, std::uint32_t height,
                                                    std::uint32_t width,
                                                    std::span<const Region> regions) {
  detail::check_feature_map(fm);
  const auto channels = fm.dim(0);
  const auto h = static_cast<std::uint32_t>(fm.dim(1));
  const auto w = static_cast<std::uint32_t>(fm.dim(2));
  if (h > height || w > width)
    throw ValidationError("feature map " + std::to_string(h) + "x" + std::to_string(w) +
                          " exceeds image size " + std::to_string(height) + "x" +
                          std::to_string(width));
  const auto rows = detail::bilinear_taps(h, height);
  const auto cols = detail::bilinear_taps(w, width);
  const auto src = fm.values<float>();

  // Per region, the pooled value is a weighted sum of source cells; collect
  // the weight of each source cell first, then contract with the channels.
  std::vector<std::vector<float>> out;
  out.reserve(regions.size());
  std::vector<double> weights(std::uint64_t(h) * w);
  for (const auto& region : regions) {
    if (region.mask.height() != height || region.mask.width() != width)
      throw ValidationError("region " + region.region_id + " does not match image size");
    std::fill(weights.begin(), weights.end(), 0.0);
    std::uint64_t n = 0;
    std::uint64_t first = weights.size(), last = 0;
    region.mask.for_each_foreground([&](std::uint64_t idx) {
      const auto& ry = rows[idx / width];
      const auto& cx = cols[idx % width];
      weights[std::uint64_t(ry.lo) * w + cx.lo] += (1.0 - ry.frac) * (1.0 - cx.frac);
      weights[std::uint64_t(ry.lo) * w + cx.hi] += (1.0 - ry.frac) * cx.frac;
      weights[std::uint64_t(ry.hi) * w + cx.lo] += ry.frac * (1.0 - cx.frac);
      weights[std::uint64_t(ry.hi) * w + cx.hi] += ry.frac * cx.frac;
      first = std::min<std::uint64_t>(first, std::uint64_t(ry.lo) * w + std::min(cx.lo, cx.hi));
      last = std::max<std::uint64_t>(last, std::uint64_t(ry.hi) * w + cx.hi);
      ++n;
    });
    if (n == 0) throw ValidationError("region " + region.region_id + " is empty");
    std::vector<float> vec(channels);
    for (std::uint64_t c = 0; c < channels; ++c) {
      const float* plane = src.data() + c * h * w;
      double acc = 0.0;
      for (std::uint64_t k = first; k <= last; ++k)
        if (weights[k] != 0.0) acc += weights[k] * plane[k];
      vec[c] = static_cast<float>(acc / n);
    }
    out.push_back(std::move(vec));
  }
  return out;
}

enum class Normalization {
  regions,     // L2-normalise each region vector, then take the difference
  difference,  // take the difference, then L2-normalise it
  none,
};

inline std::string_view to_string(Normalization n) {
  switch (n) {
    case Normalization::regions: return "regions";
    case Normalization::difference: return "difference";
    case Normalization::none: return "none";
  }
  return "?";
}

inline Normalization parse_normalization(std::string_view s) {
  if (s == "regions") return Normalization::regions;
  if (s == "difference") return Normalization::difference;
  if (s == "none") return Normalization::none;
  throw UsageError("unknown normalization '" + std::string(s) + "'");
}

namespace detail {

inline double l2_norm(std::span<const float> v) {
  double s = 0.0;
  for (float x : v) s += double(x) * x;
  return std::sqrt(s);
}

}  // namespace detail

/// SVM input for one region pair: |a - b| for symmetric questions, a - b
/// otherwise, computed on L2-normalised region vectors by default.
inline std::vector<float> probe_vector(std::span<const float> a, std::span<const float> b,
                                       bool symmetric,
                                       Normalization normalization = Normalization::regions) {
  if (a.size() != b.size())
    throw ValidationError("probe vectors have different channel counts (" +
                          std::to_string(a.size()) + " vs " + std::to_string(b.size()) + ")");
  double scale_a = 1.0, scale_b = 1.0;
  if (normalization == Normalization::regions) {
    const double na = detail::l2_norm(a), nb = detail::l2_norm(b);
    if (!(na > 0.0) || !(nb > 0.0)) throw DataError("degenerate region feature with zero norm");
    scale_a = 1.0 / na;
    scale_b = 1.0 / nb;
  }
  std::vector<double> diff(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff[i] = a[i] * scale_a - b[i] * scale_b;
    if (symmetric) diff[i] = std::abs(diff[i]);
  }
  double post = 1.0;
  if (normalization == Normalization::difference) {
    double s = 0.0;
    for (double d : diff) s += d * d;
    // Identical regions give a zero difference; leave it at zero.
    if (s > 0.0) post = 1.0 / std::sqrt(s);
  }
  std::vector<float> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = static_cast<float>(diff[i] * post);
  return out;
}

inline std::vector<float> probe_vector(const RegionFeature& a, const RegionFeature& b,
                                       Property property,
                                       Normalization normalization = Normalization::regions) {
  if (a.key != b.key)
    throw ValidationError("region features come from different keys: " + a.key.str() + " vs " +
                          b.key.str());
  return probe_vector(a.vector, b.vector, is_symmetric(property), normalization);
}

}  // namespace probe3d
