#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "probe3d/error.hpp"
#include "probe3d/tensor_store.hpp"

namespace probe3d {

// Row-major run-length encoding. The first run is background and runs
// alternate; a mask starting with foreground has a leading zero count.
class RleMask {
 public:
  RleMask() = default;
  RleMask(std::uint32_t width, std::uint32_t height, std::vector<std::uint64_t> counts)
      : width_(width), height_(height), counts_(std::move(counts)) {}

  static RleMask encode(std::uint32_t width, std::uint32_t height,
                        std::span<const std::uint8_t> pixels) {
    if (pixels.size() != std::uint64_t(width) * height)
      throw ValidationError("mask buffer size does not match width x height");
    std::vector<std::uint64_t> counts;
    std::uint8_t current = 0;
    std::uint64_t run = 0;
    for (auto p : pixels) {
      const std::uint8_t v = p ? 1 : 0;
      if (v != current) {
        counts.push_back(run);
        run = 0;
        current = v;
      }
      ++run;
    }
    counts.push_back(run);
    return RleMask(width, height, std::move(counts));
  }

  // From strictly ascending row-major pixel indices.
  static RleMask from_indices(std::uint32_t width, std::uint32_t height,
                              std::span<const std::uint64_t> indices) {
    std::vector<std::uint64_t> counts;
    std::uint64_t pos = 0;
    std::size_t i = 0;
    while (i < indices.size()) {
      std::size_t j = i + 1;
      while (j < indices.size() && indices[j] == indices[j - 1] + 1) ++j;
      counts.push_back(indices[i] - pos);
      counts.push_back(j - i);
      pos = indices[j - 1] + 1;
      i = j;
    }
    counts.push_back(std::uint64_t(width) * height - pos);
    if (counts.size() > 1 && counts.back() == 0) counts.pop_back();
    return RleMask(width, height, std::move(counts));
  }

  std::uint32_t width() const { return width_; }
  std::uint32_t height() const { return height_; }
  const std::vector<std::uint64_t>& counts() const { return counts_; }

  std::uint64_t total() const {
    return std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0});
  }

  std::uint64_t foreground_count() const {
    std::uint64_t n = 0;
    for (std::size_t i = 1; i < counts_.size(); i += 2) n += counts_[i];
    return n;
  }

  // Calls fn(row_major_index) for every foreground pixel in ascending order.
  template <typename Fn>
  void for_each_foreground(Fn&& fn) const {
    std::uint64_t pos = 0;
    for (std::size_t i = 0; i < counts_.size(); ++i) {
      if (i % 2 == 1)
        for (std::uint64_t k = 0; k < counts_[i]; ++k) fn(pos + k);
      pos += counts_[i];
    }
  }

  std::vector<std::uint8_t> decode() const {
    std::vector<std::uint8_t> pixels(std::uint64_t(width_) * height_, 0);
    for_each_foreground([&](std::uint64_t idx) {
      if (idx < pixels.size()) pixels[idx] = 1;
    });
    return pixels;
  }

  void validate() const {
    if (total() != std::uint64_t(width_) * height_)
      throw ValidationError("RLE counts sum to " + std::to_string(total()) + ", expected " +
                            std::to_string(std::uint64_t(width_) * height_));
  }

  friend bool operator==(const RleMask&, const RleMask&) = default;

 private:
  std::uint32_t width_ = 0;
  std::uint32_t height_ = 0;
  std::vector<std::uint64_t> counts_;
};

struct Region {
  std::string region_id;
  RleMask mask;
  std::uint64_t pixel_count = 0;

  static Region from_mask(std::string id, RleMask mask) {
    const auto n = mask.foreground_count();
    return Region{std::move(id), std::move(mask), n};
  }

  friend bool operator==(const Region&, const Region&) = default;
};

/// Splits the foreground of a binary [H,W] mask (uint8, 0/1) into maximal
/// 8-connected components. Components are numbered in order of their first
/// pixel in row-major scan and named `<prefix><n>`.
inline std::vector<Region> connected_components(const Tensor& mask,
                                                const std::string& prefix = "cc") {
  if (mask.rank() != 2) throw ValidationError("connected_components expects an [H,W] mask");
  const auto pixels = mask.values<std::uint8_t>();
  const auto height = static_cast<std::int64_t>(mask.dim(0));
  const auto width = static_cast<std::int64_t>(mask.dim(1));

  std::vector<std::int32_t> label(pixels.size(), -1);
  std::vector<std::int64_t> stack;
  std::vector<Region> regions;
  std::vector<std::uint64_t> members;

  for (std::int64_t start = 0; start < height * width; ++start) {
    if (pixels[start] > 1) throw ValidationError("mask values must be 0 or 1");
    if (!pixels[start] || label[start] >= 0) continue;
    const auto id = static_cast<std::int32_t>(regions.size());
    members.clear();
    label[start] = id;
    stack.push_back(start);
    while (!stack.empty()) {
      const auto idx = stack.back();
      stack.pop_back();
      members.push_back(static_cast<std::uint64_t>(idx));
      const auto r = idx / width, c = idx % width;
      for (std::int64_t dr = -1; dr <= 1; ++dr) {
        for (std::int64_t dc = -1; dc <= 1; ++dc) {
          const auto rr = r + dr, cc = c + dc;
          if (rr < 0 || rr >= height || cc < 0 || cc >= width) continue;
          const auto n = rr * width + cc;
          if (pixels[n] == 1 && label[n] < 0) {
            label[n] = id;
            stack.push_back(n);
          }
        }
      }
    }
    std::sort(members.begin(), members.end());
    regions.push_back(Region::from_mask(
        prefix + std::to_string(id),
        RleMask::from_indices(static_cast<std::uint32_t>(width),
                              static_cast<std::uint32_t>(height), members)));
  }
  return regions;
}

inline std::vector<Region> filter_regions(std::vector<Region> regions,
                                          std::uint64_t min_pixels = 100) {
  std::erase_if(regions, [&](const Region& r) { return r.pixel_count < min_pixels; });
  return regions;
}

}  // namespace probe3d
