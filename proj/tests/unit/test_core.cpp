#include <cmath>
#include <numbers>
#include <random>
#include <set>
#include <stdexcept>
#include <utility>

#include "doctest.h"
#include "pact/core.hpp"

using namespace pact;

namespace {

Sinogram labelled_sinogram(std::size_t elements, std::size_t samples) {
  Acquisition acq{20e6, samples, 0.0};
  Sinogram s(RingGeometry(0.04, elements), Medium{}, acq);
  for (std::size_t e = 0; e < elements; ++e) {
    for (std::size_t i = 0; i < samples; ++i) s.at(e, i) = static_cast<double>(e * 1000 + i);
  }
  return s;
}

}  // namespace

TEST_CASE("element positions lie on the ring") {
  const RingGeometry ring(0.04, 256);
  for (std::size_t i = 0; i < ring.num_elements(); ++i) {
    CHECK(norm(ring.element_position(i)) == doctest::Approx(0.04).epsilon(1e-15));
    const Point2 n = ring.inward_normal(i);
    CHECK(norm(n) == doctest::Approx(1.0));
  }
  CHECK(ring.element_position(0).x == doctest::Approx(0.04));
  CHECK(ring.element_position(64).y == doctest::Approx(0.04));
}

TEST_CASE("invalid geometry, medium and acquisition are rejected") {
  CHECK_THROWS_AS(RingGeometry(0.0, 8), std::invalid_argument);
  CHECK_THROWS_AS(RingGeometry(0.04, 0), std::invalid_argument);
  CHECK_THROWS_AS((Medium{-1.0, 1.0}).validate(), std::invalid_argument);
  CHECK_THROWS_AS((Medium{1500.0, 0.0}).validate(), std::invalid_argument);
  CHECK_THROWS_AS((Acquisition{20e6, 2, 0.0}).validate(), std::invalid_argument);
  CHECK_THROWS_AS((Acquisition{0.0, 16, 0.0}).validate(), std::invalid_argument);
}

TEST_CASE("subsample_projections") {
  SUBCASE("k equal to element count is the identity") {
    const auto s = labelled_sinogram(256, 8);
    const auto sub = subsample_projections(s, 256);
    CHECK(sub.geometry() == s.geometry());
    CHECK(std::equal(sub.data().begin(), sub.data().end(), s.data().begin()));
  }
  SUBCASE("256 -> 64 keeps every fourth element from 0") {
    const auto s = labelled_sinogram(256, 8);
    const auto sub = subsample_projections(s, 64);
    REQUIRE(sub.num_elements() == 64);
    for (std::size_t e = 0; e < 64; ++e) CHECK(sub.at(e, 3) == doctest::Approx(4.0 * e * 1000 + 3));
    CHECK(sub.at(63, 0) == doctest::Approx(252000.0));
  }
  SUBCASE("512 -> 128 gives uniform 2pi/128 spacing") {
    const auto s = labelled_sinogram(512, 4);
    const auto sub = subsample_projections(s, 128);
    for (std::size_t e = 0; e < 128; ++e) {
      const double expected = 2.0 * std::numbers::pi * static_cast<double>(e) / 128.0;
      CHECK(sub.geometry().element_angle(e) == doctest::Approx(expected).epsilon(1e-14));
      // Positions match the original element 4e.
      const Point2 a = sub.geometry().element_position(e);
      const Point2 b = s.geometry().element_position(4 * e);
      CHECK(norm(a - b) < 1e-15);
    }
    for (std::size_t e = 0; e + 1 < 128; ++e) {
      const double gap = sub.geometry().element_angle(e + 1) - sub.geometry().element_angle(e);
      CHECK(gap == doctest::Approx(2.0 * std::numbers::pi / 128.0).epsilon(1e-12));
    }
  }
  SUBCASE("subsampling twice equals subsampling once") {
    const auto s = labelled_sinogram(256, 5);
    for (std::size_t k : {128u, 64u, 32u, 16u}) {
      const auto twice = subsample_projections(subsample_projections(s, k), k / 2);
      const auto once = subsample_projections(s, k / 2);
      CHECK(twice.geometry() == once.geometry());
      CHECK(std::equal(twice.data().begin(), twice.data().end(), once.data().begin()));
    }
  }
  SUBCASE("non-divisors and out of range counts are rejected") {
    const auto s = labelled_sinogram(256, 4);
    CHECK_THROWS_AS(subsample_projections(s, 0), std::invalid_argument);
    CHECK_THROWS_AS(subsample_projections(s, 512), std::invalid_argument);
    CHECK_THROWS_AS(subsample_projections(s, 100), std::invalid_argument);
  }
}

TEST_CASE("pixel_center") {
  const ImageGrid grid(512, 512, 0.05e-3);
  SUBCASE("central pair straddles the origin") {
    const Point2 a = pixel_center(grid, 255, 255);
    const Point2 b = pixel_center(grid, 256, 256);
    CHECK(a.x == doctest::Approx(-b.x));
    CHECK(a.y == doctest::Approx(-b.y));
    CHECK(b.x == doctest::Approx(0.025e-3));
  }
  SUBCASE("(0,0) follows the affine definition") {
    const ImageGrid shifted(10, 6, 0.5, Point2{1.0, -2.0});
    const Point2 p = pixel_center(shifted, 0, 0);
    CHECK(p.x == doctest::Approx(-4.5 * 0.5 + 1.0));
    CHECK(p.y == doctest::Approx(-2.5 * 0.5 - 2.0));
  }
  SUBCASE("out-of-range indices are rejected") {
    CHECK_THROWS_AS(pixel_center(grid, 512, 0), std::out_of_range);
    CHECK_THROWS_AS(pixel_center(grid, 0, 512), std::out_of_range);
  }
  SUBCASE("point -> nearest pixel -> centre stays within half a pixel (16x16 scan)") {
    const ImageGrid small(16, 16, 0.4e-3);
    std::mt19937 rng(7);
    std::uniform_real_distribution<double> u(-small.half_width_m(), small.half_width_m());
    for (int trial = 0; trial < 4000; ++trial) {
      const Point2 p{u(rng), u(rng)};
      const Point2 c = small.to_pixel_coords(p);
      const auto ix = static_cast<std::size_t>(std::clamp(std::lround(c.x), 0L, 15L));
      const auto iy = static_cast<std::size_t>(std::clamp(std::lround(c.y), 0L, 15L));
      const Point2 q = pixel_center(small, ix, iy);
      CHECK(std::abs(q.x - p.x) <= 0.5 * small.pixel_size_m() + 1e-15);
      CHECK(std::abs(q.y - p.y) <= 0.5 * small.pixel_size_m() + 1e-15);
    }
    for (std::size_t iy = 0; iy < 16; ++iy) {
      for (std::size_t ix = 0; ix < 16; ++ix) {
        const Point2 c = small.to_pixel_coords(pixel_center(small, ix, iy));
        CHECK(c.x == doctest::Approx(static_cast<double>(ix)));
        CHECK(c.y == doctest::Approx(static_cast<double>(iy)));
      }
    }
  }
  SUBCASE("injective over indices") {
    const ImageGrid small(16, 12, 1.0);
    std::set<std::pair<double, double>> seen;
    for (std::size_t iy = 0; iy < 12; ++iy) {
      for (std::size_t ix = 0; ix < 16; ++ix) {
        const Point2 p = pixel_center(small, ix, iy);
        seen.insert({p.x, p.y});
      }
    }
    CHECK(seen.size() == 16 * 12);
  }
}

TEST_CASE("ROI radius is the half-diagonal and must sit inside the ring") {
  const ImageGrid grid(512, 512, 0.05e-3);
  CHECK(grid.roi_radius_m() == doctest::Approx(0.0128 * std::sqrt(2.0)));
  CHECK_NOTHROW(require_grid_inside_ring(grid, RingGeometry(0.04, 256)));
  CHECK_THROWS_AS(require_grid_inside_ring(grid, RingGeometry(0.017, 256)), std::invalid_argument);
}

TEST_CASE("containers validate their payload") {
  const ImageGrid grid(4, 4, 1.0);
  CHECK_THROWS_AS(HeatImage(grid, std::vector<double>(15)), std::invalid_argument);
  std::vector<double> bad(16, 0.0);
  bad[3] = std::nan("");
  CHECK_THROWS_AS(HeatImage(grid, bad), std::invalid_argument);
  CHECK_THROWS_AS(Sinogram(RingGeometry(1.0, 2), Medium{}, Acquisition{1.0, 3, 0.0}, std::vector<double>(5)),
                  std::invalid_argument);
}
