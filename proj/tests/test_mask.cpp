#include <gtest/gtest.h>

#include <random>

#include "oracles/oracles.hpp"
#include "probe3d/mask.hpp"

using namespace probe3d;

namespace {

Tensor mask_tensor(const std::vector<std::uint8_t>& px, std::uint64_t h, std::uint64_t w) {
  return Tensor({h, w}, px);
}

std::vector<std::uint64_t> pixels_of(const Region& r) {
  std::vector<std::uint64_t> out;
  r.mask.for_each_foreground([&](std::uint64_t i) { out.push_back(i); });
  return out;
}

}  // namespace

TEST(RleMask, EncodeDecodeRoundTrip) {
  const std::vector<std::uint8_t> px = {1, 1, 0, 0, 0, 1, 0, 1, 1};
  const auto m = RleMask::encode(3, 3, px);
  // Leading foreground gets a zero-length background run.
  EXPECT_EQ(m.counts(), (std::vector<std::uint64_t>{0, 2, 3, 1, 1, 2}));
  EXPECT_EQ(m.decode(), px);
  EXPECT_EQ(m.total(), 9u);
  EXPECT_EQ(m.foreground_count(), 5u);
  m.validate();
}

TEST(RleMask, FromIndicesMatchesEncode) {
  std::mt19937 rng(4);
  for (int rep = 0; rep < 200; ++rep) {
    const std::uint32_t w = 1 + rng() % 12, h = 1 + rng() % 12;
    std::vector<std::uint8_t> px(w * h);
    std::vector<std::uint64_t> idx;
    for (std::size_t i = 0; i < px.size(); ++i)
      if (rng() % 3 == 0) px[i] = 1, idx.push_back(i);
    const auto a = RleMask::encode(w, h, px);
    const auto b = RleMask::from_indices(w, h, idx);
    EXPECT_EQ(a.decode(), b.decode());
    EXPECT_EQ(a.foreground_count(), b.foreground_count());
    b.validate();
  }
}

TEST(RleMask, BadSumFailsValidation) {
  const RleMask m(3, 3, {2, 3});
  EXPECT_THROW(m.validate(), ValidationError);
}

TEST(ConnectedComponents, DiagonalPixelsJoin) {
  const std::vector<std::uint8_t> px = {1, 0, 0, 1};
  const auto regions = connected_components(mask_tensor(px, 2, 2));
  ASSERT_EQ(regions.size(), 1u);
  EXPECT_EQ(regions[0].pixel_count, 2u);
}

TEST(ConnectedComponents, BackgroundRowSeparates) {
  const std::vector<std::uint8_t> px = {1, 1, 0, 0, 1, 1};
  const auto regions = connected_components(mask_tensor(px, 3, 2));
  ASSERT_EQ(regions.size(), 2u);
  EXPECT_EQ(pixels_of(regions[0]), (std::vector<std::uint64_t>{0, 1}));
  EXPECT_EQ(pixels_of(regions[1]), (std::vector<std::uint64_t>{4, 5}));
  EXPECT_EQ(regions[0].region_id, "cc0");
  EXPECT_EQ(regions[1].region_id, "cc1");
}

TEST(ConnectedComponents, MatchesUnionFindOracle) {
  std::mt19937 rng(8);
  for (int rep = 0; rep < 300; ++rep) {
    const int h = 1 + rng() % 20, w = 1 + rng() % 20;
    const unsigned density = 2 + rng() % 5;
    std::vector<std::uint8_t> px(h * w);
    for (auto& p : px) p = rng() % density == 0;
    const auto regions = connected_components(mask_tensor(px, h, w));
    const auto expected = oracle::components(px, h, w);
    ASSERT_EQ(regions.size(), expected.size());
    std::uint64_t covered = 0;
    for (std::size_t k = 0; k < regions.size(); ++k) {
      EXPECT_EQ(pixels_of(regions[k]), expected[k]);
      EXPECT_EQ(regions[k].pixel_count, expected[k].size());
      EXPECT_EQ(regions[k].mask.total(), std::uint64_t(h) * w);
      covered += regions[k].pixel_count;
    }
    // The components partition the foreground.
    std::uint64_t fg = 0;
    for (auto p : px) fg += p;
    EXPECT_EQ(covered, fg);
  }
}

TEST(ConnectedComponents, UsesPrefix) {
  const std::vector<std::uint8_t> px = {1};
  EXPECT_EQ(connected_components(mask_tensor(px, 1, 1), "seg")[0].region_id, "seg0");
}

TEST(ConnectedComponents, RejectsNonBinary) {
  const std::vector<std::uint8_t> px = {0, 2};
  EXPECT_THROW(connected_components(mask_tensor(px, 1, 2)), ValidationError);
  EXPECT_THROW(connected_components(Tensor::filled<std::uint8_t>({4}, 1)), ValidationError);
}

TEST(FilterRegions, ThresholdIsInclusive) {
  std::vector<Region> regions;
  for (std::uint64_t n : {99, 100, 101}) {
    std::vector<std::uint64_t> idx(n);
    for (std::uint64_t i = 0; i < n; ++i) idx[i] = i;
    regions.push_back(Region::from_mask("r" + std::to_string(n), RleMask::from_indices(16, 16, idx)));
  }
  const auto kept = filter_regions(regions, 100);
  ASSERT_EQ(kept.size(), 2u);
  EXPECT_EQ(kept[0].pixel_count, 100u);
  EXPECT_EQ(kept[1].pixel_count, 101u);
}
