#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "probe3d/error.hpp"
#include "probe3d/mask.hpp"
#include "probe3d/random.hpp"
#include "probe3d/tensor_store.hpp"

namespace probe3d {

enum class Property {
  same_plane,
  perpendicular_plane,
  material,
  support,
  shadow,
  occlusion,
  depth,
};

inline constexpr std::array<Property, 7> kAllProperties = {
    Property::same_plane, Property::perpendicular_plane, Property::material, Property::support,
    Property::shadow,     Property::occlusion,           Property::depth};

inline std::string_view to_string(Property p) {
  switch (p) {
    case Property::same_plane: return "same_plane";
    case Property::perpendicular_plane: return "perpendicular_plane";
    case Property::material: return "material";
    case Property::support: return "support";
    case Property::shadow: return "shadow";
    case Property::occlusion: return "occlusion";
    case Property::depth: return "depth";
  }
  return "?";
}

inline Property parse_property(std::string_view name) {
  for (auto p : kAllProperties)
    if (to_string(p) == name) return p;
  throw UsageError("unknown property '" + std::string(name) + "'");
}

// Symmetric questions satisfy Q(A,B) = Q(B,A) and are probed with |a - b|.
constexpr bool is_symmetric(Property p) {
  return p != Property::support && p != Property::depth;
}

inline constexpr double kDepthRatio = 1.2;
inline constexpr double kPerpendicularLowDeg = 85.0;
inline constexpr double kPerpendicularHighDeg = 95.0;
inline constexpr double kParallelBelowDeg = 60.0;
inline constexpr double kParallelAboveDeg = 120.0;
inline constexpr std::uint64_t kMinRegionPixels = 100;
inline constexpr int kMaterialCategories = 46;

struct PlaneAnnotation {
  int plane_id = 0;
  std::array<double, 3> normal{};
  friend bool operator==(const PlaneAnnotation&, const PlaneAnnotation&) = default;
};

using RegionEdge = std::pair<std::string, std::string>;

struct Annotations {
  std::map<std::string, PlaneAnnotation> planes;
  std::map<std::string, int> materials;
  std::vector<RegionEdge> support;  // (supported, supporter)
  std::vector<RegionEdge> shadows;  // (object, shadow)
  std::map<std::string, int> instances;
  std::map<std::string, double> depths;  // mean region depth in meters
  friend bool operator==(const Annotations&, const Annotations&) = default;
};

struct ImageRecord {
  std::string image_id;
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::vector<Region> regions;
  std::optional<std::string> depth_map;
  Annotations annotations;

  const Region* find_region(std::string_view id) const {
    for (const auto& r : regions)
      if (r.region_id == id) return &r;
    return nullptr;
  }

  friend bool operator==(const ImageRecord&, const ImageRecord&) = default;
};

enum class PairLabel { positive, negative, excluded };

struct PairExample {
  Property property = Property::same_plane;
  std::string image_id;
  std::string region_a;
  std::string region_b;
  bool label = false;
  friend bool operator==(const PairExample&, const PairExample&) = default;
};

inline double average_depth(const Region& region, const Tensor& depth_map) {
  if (depth_map.rank() != 2) throw ValidationError("depth map must be [H,W]");
  if (depth_map.dim(0) != region.mask.height() || depth_map.dim(1) != region.mask.width())
    throw ValidationError("depth map size does not match region mask for " + region.region_id);
  const auto depth = depth_map.values<float>();
  double sum = 0.0;
  std::uint64_t n = 0;
  region.mask.for_each_foreground([&](std::uint64_t idx) {
    const float d = depth[idx];
    if (!(d > 0.0f))
      throw DataError("non-positive depth " + std::to_string(d) + " at pixel " +
                      std::to_string(idx) + " of region " + region.region_id);
    sum += d;
    ++n;
  });
  if (n == 0) throw DataError("region " + region.region_id + " is empty");
  return sum / static_cast<double>(n);
}

// Fills annotations.depths from the record's depth map for regions that lack
// an explicit mean depth. Relative depth_map paths resolve against base_dir.
inline void resolve_depths(ImageRecord& record, const std::filesystem::path& base_dir) {
  if (!record.depth_map) return;
  std::filesystem::path path(*record.depth_map);
  if (path.is_relative()) path = base_dir / path;
  const Tensor depth = read_tensor(path);
  for (const auto& region : record.regions)
    if (!record.annotations.depths.contains(region.region_id))
      record.annotations.depths[region.region_id] = average_depth(region, depth);
}

namespace detail {

[[noreturn]] inline void missing(Property p, std::string_view region, std::string_view what) {
  throw AnnotationError("property " + std::string(to_string(p)) + ": region '" +
                        std::string(region) + "' has no " + std::string(what) + " annotation");
}

template <typename Map>
const auto& require(const Map& m, Property p, const std::string& region, std::string_view what) {
  auto it = m.find(region);
  if (it == m.end()) missing(p, region, what);
  return it->second;
}

inline bool has_edge(const std::vector<RegionEdge>& edges, const std::string& first,
                     const std::string& second) {
  for (const auto& e : edges)
    if (e.first == first && e.second == second) return true;
  return false;
}

inline bool is_first(const std::vector<RegionEdge>& edges, const std::string& id) {
  for (const auto& e : edges)
    if (e.first == id) return true;
  return false;
}

inline bool is_second(const std::vector<RegionEdge>& edges, const std::string& id) {
  for (const auto& e : edges)
    if (e.second == id) return true;
  return false;
}

}  // namespace detail

// Angle in degrees between two unit normals, from the unsigned dot product,
// so flipping either normal's sign gives the same answer. Range [0, 90].
inline double normal_angle_deg(const std::array<double, 3>& a, const std::array<double, 3>& b) {
  double dot = std::abs(a[0] * b[0] + a[1] * b[1] + a[2] * b[2]);
  dot = std::min(dot, 1.0);
  // Rounded to 1e-9 degrees so normals annotated exactly on a band edge
  // (60, 85, 95, 120) land on it rather than a rounding error either side.
  return std::round(std::acos(dot) * 180.0 / std::numbers::pi * 1e9) / 1e9;
}

inline PairLabel label_perpendicular(double theta_deg) {
  if (theta_deg > kPerpendicularLowDeg && theta_deg < kPerpendicularHighDeg)
    return PairLabel::positive;
  if (theta_deg < kParallelBelowDeg || theta_deg > kParallelAboveDeg) return PairLabel::negative;
  return PairLabel::excluded;
}

inline PairLabel label_depth(double depth_a, double depth_b) {
  if (depth_a > kDepthRatio * depth_b) return PairLabel::positive;
  if (depth_b > kDepthRatio * depth_a) return PairLabel::negative;
  return PairLabel::excluded;
}

inline PairLabel label_pair(Property property, const ImageRecord& record, const std::string& a,
                            const std::string& b) {
  if (!record.find_region(a) || !record.find_region(b))
    throw AnnotationError("property " + std::string(to_string(property)) + ": image '" +
                          record.image_id + "' has no region '" +
                          (record.find_region(a) ? b : a) + "'");
  const auto& ann = record.annotations;
  switch (property) {
    case Property::same_plane: {
      const auto& pa = detail::require(ann.planes, property, a, "plane");
      const auto& pb = detail::require(ann.planes, property, b, "plane");
      return pa.plane_id == pb.plane_id ? PairLabel::positive : PairLabel::negative;
    }
    case Property::perpendicular_plane: {
      const auto& pa = detail::require(ann.planes, property, a, "plane");
      const auto& pb = detail::require(ann.planes, property, b, "plane");
      return label_perpendicular(normal_angle_deg(pa.normal, pb.normal));
    }
    case Property::material: {
      const int ma = detail::require(ann.materials, property, a, "material");
      const int mb = detail::require(ann.materials, property, b, "material");
      return ma == mb ? PairLabel::positive : PairLabel::negative;
    }
    case Property::support: {
      if (detail::has_edge(ann.support, a, b)) return PairLabel::positive;
      if (detail::is_first(ann.support, a)) return PairLabel::negative;
      return PairLabel::excluded;
    }
    case Property::shadow: {
      // Orientation-free: whichever of the two is the object is tested
      // against the other as its shadow.
      std::string object = a, shadow = b;
      if (!(detail::is_first(ann.shadows, object) && detail::is_second(ann.shadows, shadow)))
        std::swap(object, shadow);
      if (!(detail::is_first(ann.shadows, object) && detail::is_second(ann.shadows, shadow)))
        return PairLabel::excluded;
      return detail::has_edge(ann.shadows, object, shadow) ? PairLabel::positive
                                                           : PairLabel::negative;
    }
    case Property::occlusion: {
      const int ia = detail::require(ann.instances, property, a, "instance");
      const int ib = detail::require(ann.instances, property, b, "instance");
      return ia == ib ? PairLabel::positive : PairLabel::negative;
    }
    case Property::depth: {
      const double da = detail::require(ann.depths, property, a, "depth");
      const double db = detail::require(ann.depths, property, b, "depth");
      return label_depth(da, db);
    }
  }
  return PairLabel::excluded;
}

struct PairOptions {
  std::size_t max_candidates = 400;  // per image per property, before balancing
};

/// Balanced probe pairs for one property. Candidates are unordered pairs for
/// symmetric properties and ordered pairs otherwise. Per image: cap the
/// candidate list (seeded sample), label, drop excluded, then subsample the
/// majority class to the minority count. Every image draws from its own
/// stream derived from (seed, property, image_id), so its output does not
/// depend on the other records in the list.
inline std::vector<PairExample> build_pairs(Property property,
                                            std::span<const ImageRecord> records,
                                            std::uint64_t seed, PairOptions options = {}) {
  std::vector<PairExample> out;
  for (const auto& record : records) {
    std::vector<std::pair<std::size_t, std::size_t>> candidates;
    const auto n = record.regions.size();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = is_symmetric(property) ? i + 1 : 0; j < n; ++j)
        if (i != j) candidates.emplace_back(i, j);

    Rng rng(mix_seed(seed, hash_string(record.image_id) ^
                               (static_cast<std::uint64_t>(property) << 56)));
    if (candidates.size() > options.max_candidates) {
      std::vector<std::pair<std::size_t, std::size_t>> kept;
      for (auto idx : rng.sample_indices(candidates.size(), options.max_candidates))
        kept.push_back(candidates[idx]);
      candidates = std::move(kept);
    }

    std::vector<PairExample> positives, negatives;
    for (auto [i, j] : candidates) {
      const auto& a = record.regions[i].region_id;
      const auto& b = record.regions[j].region_id;
      const auto label = label_pair(property, record, a, b);
      if (label == PairLabel::excluded) continue;
      auto& bucket = label == PairLabel::positive ? positives : negatives;
      bucket.push_back(PairExample{property, record.image_id, a, b, label == PairLabel::positive});
    }
    if (positives.empty() || negatives.empty()) continue;

    auto& majority = positives.size() > negatives.size() ? positives : negatives;
    const auto keep = std::min(positives.size(), negatives.size());
    if (majority.size() > keep) {
      std::vector<PairExample> kept;
      for (auto idx : rng.sample_indices(majority.size(), keep)) kept.push_back(majority[idx]);
      majority = std::move(kept);
    }
    out.insert(out.end(), positives.begin(), positives.end());
    out.insert(out.end(), negatives.begin(), negatives.end());
  }
  return out;
}

}  // namespace probe3d
