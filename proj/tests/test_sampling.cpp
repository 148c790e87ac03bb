#include "doctest.h"

#include <cstdio>

#include "csrecon/mask.hpp"

using namespace csrecon;

TEST_CASE("R = 1 gives the all-ones mask") {
  SamplingMask m = poisson_disc_mask(64, 64, 1.0, 16, 0);
  CHECK(m.ones() == 64 * 64);
  CHECK(m.achieved_fraction == 1.0);
}

TEST_CASE("center disc is fully sampled: all 797 points at 218x170, radius 16") {
  SamplingMask m = poisson_disc_mask(218, 170, 4.0, 16, 5);
  // brute-force enumeration of the disc membership
  const double cy = static_cast<double>(center_index(218));
  const double cz = static_cast<double>(center_index(170));
  std::size_t inside = 0, sampled = 0;
  for (std::size_t y = 0; y < 218; ++y)
    for (std::size_t z = 0; z < 170; ++z) {
      const double dy = y - cy, dz = z - cz;
      if (dy * dy + dz * dz <= 256.0) {
        ++inside;
        sampled += m.at(y, z);
      }
    }
  CHECK(inside == 797);
  CHECK(sampled == inside);
}

TEST_CASE("achieved fraction honors the 2% tolerance at R = 8") {
  SamplingMask m = poisson_disc_mask(218, 170, 8.0, 16, 1);
  CHECK(m.achieved_fraction >= 0.1225);
  CHECK(m.achieved_fraction <= 0.1275);
}

TEST_CASE("determinism: identical parameters reproduce the identical mask") {
  SamplingMask a = poisson_disc_mask(128, 96, 6.0, 16, 77);
  SamplingMask b = poisson_disc_mask(128, 96, 6.0, 16, 77);
  CHECK(a.grid == b.grid);
  SamplingMask c = poisson_disc_mask(128, 96, 6.0, 16, 78);
  CHECK_FALSE(a.grid == c.grid);
}

TEST_CASE("blue-noise property outside the center disc") {
  SamplingMask m = poisson_disc_mask(128, 128, 8.0, 16, 3);
  const double cy = static_cast<double>(center_index(128));
  const double cz = static_cast<double>(center_index(128));
  const double rad = static_cast<double>(m.center_radius);
  std::vector<std::pair<double, double>> pts;
  for (std::size_t y = 0; y < 128; ++y)
    for (std::size_t z = 0; z < 128; ++z) {
      if (!m.at(y, z)) continue;
      const double dy = y - cy, dz = z - cz;
      if (dy * dy + dz * dz > rad * rad)
        pts.emplace_back(static_cast<double>(y), static_cast<double>(z));
    }
  REQUIRE(m.d_min > 0.0);
  const double limit = m.d_min - std::sqrt(2.0);
  double min_nn = 1e9;
  for (std::size_t i = 0; i < pts.size(); ++i)
    for (std::size_t j = i + 1; j < pts.size(); ++j) {
      const double dy = pts[i].first - pts[j].first, dz = pts[i].second - pts[j].second;
      min_nn = std::min(min_nn, std::sqrt(dy * dy + dz * dz));
    }
  CHECK(min_nn >= limit);
}

TEST_CASE("infeasible R reports the minimum feasible bound") {
  // center disc alone (797 of 37060 points) exceeds the budget at R = 60
  CHECK_THROWS_WITH_AS(poisson_disc_mask(218, 170, 60.0, 16, 0),
                       doctest::Contains("minimum feasible R"), ParamError);
}

TEST_CASE("achieved acceleration") {
  SamplingMask all;
  all.ny = 16;
  all.nz = 16;
  all.grid.assign(256, 1);
  CHECK(achieved_acceleration(all) == 1.0);

  SamplingMask half = all;
  for (std::size_t i = 0; i < 128; ++i) half.grid[i] = 0;
  CHECK(achieved_acceleration(half) == 2.0);

  SamplingMask none = all;
  none.grid.assign(256, 0);
  CHECK_THROWS_AS(achieved_acceleration(none), ParamError);

  SamplingMask gen = poisson_disc_mask(218, 170, 4.0, 16, 9);
  const double r = achieved_acceleration(gen);
  CHECK(r >= 3.92);
  CHECK(r <= 4.08);
}

TEST_CASE("apply_mask") {
  KSpaceVolume v;
  v.data = ComplexTensor({1, 1, 2, 2});
  v.data[0] = cplx(1.0, 1.0);
  v.data[1] = cplx(2.0, 0.0);
  v.data[2] = cplx(3.0, 0.0);
  v.data[3] = cplx(4.0, -1.0);

  SUBCASE("hand-checked elementwise product") {
    SamplingMask m;
    m.ny = 2;
    m.nz = 2;
    m.grid = {1, 0, 0, 1};
    KSpaceVolume out = apply_mask(v, m);
    CHECK(out.data[0] == cplx(1.0, 1.0));
    CHECK(out.data[1] == cplx(0.0, 0.0));
    CHECK(out.data[2] == cplx(0.0, 0.0));
    CHECK(out.data[3] == cplx(4.0, -1.0));
  }
  SUBCASE("all-ones mask is the identity") {
    SamplingMask m;
    m.ny = 2;
    m.nz = 2;
    m.grid = {1, 1, 1, 1};
    CHECK(apply_mask(v, m).data == v.data);
  }
  SUBCASE("all-zeros mask annihilates") {
    SamplingMask m;
    m.ny = 2;
    m.nz = 2;
    m.grid = {0, 0, 0, 0};
    for (const cplx& x : apply_mask(v, m).data.values) CHECK(x == cplx(0.0, 0.0));
  }
  SUBCASE("idempotence") {
    SamplingMask m;
    m.ny = 2;
    m.nz = 2;
    m.grid = {1, 0, 1, 0};
    KSpaceVolume once = apply_mask(v, m);
    KSpaceVolume twice = apply_mask(once, m);
    CHECK(once.data == twice.data);
  }
  SUBCASE("shape mismatch is rejected") {
    SamplingMask m;
    m.ny = 4;
    m.nz = 4;
    m.grid.assign(16, 1);
    CHECK_THROWS_AS(apply_mask(v, m), ShapeError);
  }
}

TEST_CASE("mask container round trip") {
  SamplingMask m = poisson_disc_mask(96, 64, 5.0, 12, 21);
  const std::string path = "/tmp/csrecon_test_mask.msk";
  save_mask(path, m);
  SamplingMask loaded = load_mask(path);
  CHECK(loaded.grid == m.grid);
  CHECK(loaded.ny == m.ny);
  CHECK(loaded.nz == m.nz);
  CHECK(loaded.target_r == m.target_r);
  CHECK(loaded.center_radius == m.center_radius);
  CHECK(loaded.seed == m.seed);
  std::remove(path.c_str());
}
