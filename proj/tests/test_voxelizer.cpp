#include <gtest/gtest.h>

#include <numeric>

#include "mvp/mvp.hpp"
#include "oracles.hpp"

using namespace mvp;

namespace {

VirtualPoint vp(const Vec3& p, std::vector<double> e) { return {p, 0.0, std::move(e)}; }

VirtualPointSet one_group(std::vector<VirtualPoint> pts, std::uint32_t dim) {
  VirtualPointSet s;
  s.feature_dim = dim;
  s.groups.push_back({1, std::move(pts)});
  return s;
}

/// Small grid so random points collide often.
VoxelGridSpec coarse() { return {-4, 4, -4, 4, -2, 2, 0.5, 0.5, 0.5}; }

std::pair<PointCloud, VirtualPointSet> random_input(std::uint64_t seed, std::size_t n_real, std::size_t n_virtual) {
  CounterRng rng(seed);
  auto coord = [&](double lo, double hi) { return lo + (hi - lo) * rng.uniform(); };
  PointCloud real;
  for (std::size_t i = 0; i < n_real; ++i)
    real.points.push_back({coord(-4.5, 4.5), coord(-4.5, 4.5), coord(-2.5, 2.5), rng.uniform(), coord(-0.05, 0)});
  VirtualPointSet virt;
  virt.feature_dim = 4;
  std::size_t made = 0;
  for (std::uint32_t g = 1; made < n_virtual; ++g) {
    VirtualGroup group{g, {}};
    const std::size_t count = std::min<std::size_t>(n_virtual - made, 1 + rng.below(500));
    const int cls = static_cast<int>(rng.below(3));
    const double score = rng.uniform();
    for (std::size_t i = 0; i < count; ++i) {
      std::vector<double> e(4, 0.0);
      e[static_cast<std::size_t>(cls)] = 1;
      e[3] = score;
      group.points.push_back(vp(Vec3(coord(-4.5, 4.5), coord(-4.5, 4.5), coord(-2.5, 2.5)), e));
    }
    made += count;
    virt.groups.push_back(std::move(group));
  }
  return {real, virt};
}

void expect_matches_oracle(const VoxelEncoding& enc, const PointCloud& real, const VirtualPointSet& virt, bool padded) {
  const auto want = oracle::naive_voxels(real, virt, enc.spec, padded);
  ASSERT_EQ(enc.voxels.size(), want.size());
  std::size_t i = 0;
  for (const auto& [key, nv] : want) {
    const auto& v = enc.voxels[i++];
    ASSERT_EQ((std::array<std::int32_t, 3>{v.coord.x, v.coord.y, v.coord.z}), key);
    EXPECT_EQ(v.real_count, nv.real_count);
    EXPECT_EQ(v.virtual_count, nv.virtual_count);
    ASSERT_EQ(v.features.size(), nv.features.size());
    for (std::size_t c = 0; c < v.features.size(); ++c) EXPECT_NEAR(v.features[c], nv.features[c], 1e-12);
  }
}

}  // namespace

TEST(Assign, HalfOpenBoundaries) {
  const VoxelGridSpec spec;
  const auto lo = assign(Vec3(spec.x_min, 0, 0), spec);
  ASSERT_TRUE(lo);
  EXPECT_EQ(lo->x, 0);
  EXPECT_FALSE(assign(Vec3(spec.x_max, 0, 0), spec));
  EXPECT_FALSE(assign(Vec3(0, 0, spec.z_max), spec));
  EXPECT_TRUE(assign(Vec3(0, 0, spec.z_min), spec));
}

TEST(Assign, OriginLandsInCell720) {
  const VoxelGridSpec spec;
  EXPECT_EQ(spec.nx(), 1440);
  EXPECT_EQ(spec.nz(), 40);
  const auto c = assign(Vec3(0, 0, 0), spec);
  ASSERT_TRUE(c);
  EXPECT_EQ(c->x, 720);
  EXPECT_EQ(c->y, 720);
  EXPECT_EQ(c->z, 25);
}

TEST(Assign, LastCellIsReachableButNeverExceeded) {
  const VoxelGridSpec spec;
  const auto c = assign(Vec3(std::nextafter(spec.x_max, 0.0), 0, std::nextafter(spec.z_max, 0.0)), spec);
  ASSERT_TRUE(c);
  EXPECT_EQ(c->x, 1439);
  EXPECT_EQ(c->z, 39);
}

TEST(GridSpec, RejectsIncompatibleRange) {
  VoxelGridSpec spec;
  spec.dx = 0.07;
  EXPECT_THROW(spec.validate(), InputError);
  spec = {};
  spec.dz = 0;
  EXPECT_THROW(spec.validate(), InputError);
  spec = {};
  spec.x_max = spec.x_min;
  EXPECT_THROW(spec.validate(), InputError);
}

TEST(Split, RealOnlyVoxelAveragesReflectance) {
  PointCloud real;
  real.points.push_back({0.01, 0.01, 0.01, 0.2, 0});
  real.points.push_back({0.02, 0.02, 0.02, 0.4, 0});
  const auto enc = encode_split(real, one_group({}, 4), VoxelGridSpec{});
  ASSERT_EQ(enc.voxels.size(), 1u);
  EXPECT_DOUBLE_EQ(enc.voxels[0].features[3], 0.3);
  EXPECT_EQ(enc.voxels[0].real_count, 2u);
  EXPECT_EQ(enc.voxels[0].virtual_count, 0u);
  for (std::size_t c = 5; c < enc.width(); ++c) EXPECT_EQ(enc.voxels[0].features[c], 0.0);
}

TEST(Split, ModalitiesDoNotMix) {
  PointCloud real;
  real.points.push_back({0.01, 0.02, 0.03, 0.6, -0.01});
  const auto virt = one_group({vp(Vec3(0.04, 0.05, 0.06), {0, 1, 0, 0.9})}, 4);
  const auto enc = encode_split(real, virt, VoxelGridSpec{});
  ASSERT_EQ(enc.voxels.size(), 1u);
  EXPECT_EQ(enc.width(), 5u + 8u);
  const std::vector<double> want{0.01, 0.02, 0.03, 0.6, -0.01, 0.04, 0.05, 0.06, 0, 0, 1, 0, 0.9};
  EXPECT_EQ(enc.voxels[0].features, want);
}

TEST(Padded, RealOnlyVoxelHasZeroSemantics) {
  PointCloud real;
  real.points.push_back({0.01, 0.01, 0.01, 0.6, 0});
  const auto enc = encode_padded(real, one_group({}, 4), VoxelGridSpec{});
  ASSERT_EQ(enc.voxels.size(), 1u);
  EXPECT_EQ(enc.width(), 6u + 4u);
  for (std::size_t c = 5; c < enc.width(); ++c) EXPECT_EQ(enc.voxels[0].features[c], 0.0);
}

TEST(Padded, ReflectanceIsBlurredByVirtualPoints) {
  PointCloud real;
  real.points.push_back({0.01, 0.01, 0.01, 0.6, 0});
  const auto virt = one_group({vp(Vec3(0.02, 0.02, 0.02), {1, 0, 0, 0.5})}, 4);
  const auto enc = encode_padded(real, virt, VoxelGridSpec{});
  ASSERT_EQ(enc.voxels.size(), 1u);
  EXPECT_DOUBLE_EQ(enc.voxels[0].features[4], 0.3);
  EXPECT_DOUBLE_EQ(enc.voxels[0].features[5], 0.5);   // class 0 one-hot halved
  EXPECT_DOUBLE_EQ(enc.voxels[0].features.back(), 0.5);  // is_virtual
}

TEST(Encode, MatchesNaiveOracle) {
  const auto [real, virt] = random_input(5, 10000, 5000);
  expect_matches_oracle(encode_split(real, virt, coarse()), real, virt, false);
  expect_matches_oracle(encode_padded(real, virt, coarse()), real, virt, true);
}

TEST(Encode, CountsAreConserved) {
  const auto [real, virt] = random_input(6, 3000, 2000);
  for (const auto& enc : {encode_split(real, virt, coarse()), encode_padded(real, virt, coarse())}) {
    std::size_t nr = 0, nv = 0;
    for (const auto& v : enc.voxels) {
      nr += v.real_count;
      nv += v.virtual_count;
      EXPECT_GT(v.real_count + v.virtual_count, 0u);
    }
    EXPECT_EQ(nr + enc.dropped_real, real.points.size());
    EXPECT_EQ(nv + enc.dropped_virtual, virt.total_points());
    EXPECT_GT(enc.dropped_real, 0u);
    EXPECT_TRUE(std::is_sorted(enc.voxels.begin(), enc.voxels.end(),
                               [](const EncodedVoxel& a, const EncodedVoxel& b) { return a.coord < b.coord; }));
  }
}

TEST(Encode, SplitRealBlockIgnoresVirtualPoints) {
  const auto [real, virt] = random_input(7, 2000, 2000);
  VirtualPointSet none;
  none.feature_dim = virt.feature_dim;
  const auto with = encode_split(real, virt, coarse());
  const auto without = encode_split(real, none, coarse());
  std::size_t j = 0;
  for (const auto& v : with.voxels) {
    if (v.real_count == 0) continue;
    ASSERT_LT(j, without.voxels.size());
    const auto& w = without.voxels[j++];
    EXPECT_EQ(v.coord, w.coord);
    for (std::size_t c = 0; c < 5; ++c) EXPECT_EQ(v.features[c], w.features[c]);
  }
  EXPECT_EQ(j, without.voxels.size());
}

TEST(Encode, PermutationChangesOnlyRoundingWithinVoxels) {
  auto [real, virt] = random_input(8, 4000, 0);
  const auto a = encode_split(real, virt, coarse());
  std::reverse(real.points.begin(), real.points.end());
  const auto b = encode_split(real, virt, coarse());
  ASSERT_EQ(a.voxels.size(), b.voxels.size());
  for (std::size_t i = 0; i < a.voxels.size(); ++i) {
    EXPECT_EQ(a.voxels[i].coord, b.voxels[i].coord);
    EXPECT_EQ(a.voxels[i].real_count, b.voxels[i].real_count);
    for (std::size_t c = 0; c < a.width(); ++c) EXPECT_NEAR(a.voxels[i].features[c], b.voxels[i].features[c], 1e-12);
  }
}

TEST(Encode, FeatureWidthMismatchIsAnError) {
  PointCloud real;
  auto virt = one_group({vp(Vec3(0, 0, 0), {1, 0, 0.5})}, 4);
  EXPECT_THROW(encode_split(real, virt, VoxelGridSpec{}), FormatError);
  EXPECT_THROW(encode_padded(real, virt, VoxelGridSpec{}), FormatError);
}

TEST(VoxelFile, RoundTrip) {
  const auto [real, virt] = random_input(9, 500, 500);
  for (const auto& enc : {encode_split(real, virt, coarse()), encode_padded(real, virt, coarse())}) {
    const auto back = decode_voxels(encode_voxels(enc));
    EXPECT_EQ(back.mode, enc.mode);
    EXPECT_EQ(back.spec.values(), enc.spec.values());
    EXPECT_EQ(back.width_a, enc.width_a);
    EXPECT_EQ(back.width_b, enc.width_b);
    ASSERT_EQ(back.voxels.size(), enc.voxels.size());
    for (std::size_t i = 0; i < enc.voxels.size(); ++i) {
      EXPECT_EQ(back.voxels[i].coord, enc.voxels[i].coord);
      for (std::size_t c = 0; c < enc.width(); ++c)
        EXPECT_EQ(back.voxels[i].features[c], static_cast<double>(static_cast<float>(enc.voxels[i].features[c])));
    }
  }
  auto bytes = encode_voxels(encode_split(real, virt, coarse()));
  bytes.resize(bytes.size() - 3);
  EXPECT_THROW(decode_voxels(bytes), ParseError);
}
