#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

#include "doctest.h"
#include "pact/forward.hpp"
#include "test_support.hpp"

using namespace pact;
using pact::test::dot;
using pact::test::l2;
using pact::test::rel_diff;

namespace {

constexpr double kPi = std::numbers::pi;

struct Setup {
  RingGeometry ring;
  Medium medium;
  Acquisition acq;
  ImageGrid grid;
};

// 32x32 @ 0.8 mm inside a 40 mm ring; 5 MHz keeps every arc inside 256 samples.
Setup small_setup(std::size_t elements = 16) {
  return {RingGeometry(0.04, elements), Medium{}, Acquisition{5e6, 256, 0.0},
          ImageGrid(32, 32, 0.8e-3)};
}

// 64x64 @ 0.4 mm, 10 MHz, 512 samples.
Setup desk_setup(std::size_t elements) {
  return {RingGeometry(0.04, elements), Medium{}, Acquisition{10e6, 512, 0.0},
          ImageGrid(64, 64, 0.4e-3)};
}

ForwardOperator make_op(const Setup& s, ForwardConfig cfg = {}) {
  return ForwardOperator(s.ring, s.medium, s.acq, s.grid, cfg);
}

}  // namespace

TEST_CASE("opening_angle") {
  CHECK(opening_angle(0.02, 0.04) == doctest::Approx(kPi / 3.0).epsilon(1e-14));
  CHECK(opening_angle(1e-12, 0.04) == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(opening_angle(1e-12, 0.04) < 1e-10);
  // Half-diagonal of a 2.5 cm square ROI.
  CHECK(opening_angle(17.68e-3, 0.04) == doctest::Approx(0.9156541376221021).epsilon(1e-12));
  CHECK_THROWS_AS(opening_angle(0.04, 0.04), std::invalid_argument);
  CHECK_THROWS_AS(opening_angle(0.05, 0.04), std::invalid_argument);
}

TEST_CASE("arc_points") {
  const double c = 1500.0;
  const double alpha = kPi / 3.0;
  SUBCASE("middle point of an odd arc lies on the element->centre ray") {
    const auto pts = arc_points({0.04, 0.0}, 0.04 / c, alpha, 101, c);
    CHECK(pts[50].x == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(std::abs(pts[50].y) < 1e-15);
    const auto half = arc_points({0.04, 0.0}, 0.02 / c, alpha, 101, c);
    CHECK(half[50].x == doctest::Approx(0.02));
    CHECK(std::abs(half[50].y) < 1e-15);
  }
  SUBCASE("all points are c*t from the element") {
    const auto pts = arc_points({0.0, -0.04}, 3e-5, alpha, 17, c);
    for (const auto& p : pts) CHECK(norm(p - Point2{0.0, -0.04}) == doctest::Approx(c * 3e-5));
  }
  SUBCASE("endpoints are mirror images about the element->centre ray") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> ang(0.0, 2.0 * kPi);
    std::uniform_real_distribution<double> tt(1e-6, 5e-5);
    for (int trial = 0; trial < 50; ++trial) {
      const double phi = ang(rng);
      const Point2 e{0.04 * std::cos(phi), 0.04 * std::sin(phi)};
      const auto pts = arc_points(e, tt(rng), 0.9, 33, c);
      // Reflect the first endpoint across the line through e and the origin.
      const Point2 d{-std::cos(phi), -std::sin(phi)};
      const Point2 v = pts.front() - e;
      const double along = v.x * d.x + v.y * d.y;
      const Point2 reflected = e + Point2{2.0 * along * d.x - v.x, 2.0 * along * d.y - v.y};
      CHECK(norm(reflected - pts.back()) < 1e-15);
    }
  }
  SUBCASE("non-positive time is rejected") {
    CHECK_THROWS_AS(arc_points({0.04, 0.0}, 0.0, alpha, 5, c), std::invalid_argument);
  }
}

TEST_CASE("segment_lengths and arc weights") {
  const double c = 1500.0;
  const double t = 0.04 / c;
  const auto d = segment_lengths(kPi / 3.0, 101, t, c);
  REQUIRE(d.size() == 102);
  CHECK(d.front() == 0.0);
  CHECK(d.back() == 0.0);
  CHECK(d[1] == doctest::Approx(0.418879020478639e-3).epsilon(1e-12));
  const auto w = arc_point_weights(kPi / 3.0, 101, t, c);
  CHECK(w.front() == doctest::Approx(0.5 * w[1]));
  CHECK(w.back() == doctest::Approx(0.5 * w[50]));
  double sum = 0.0;
  for (double x : w) sum += x;
  CHECK(sum == doctest::Approx(kPi / 3.0 * 0.04).epsilon(1e-13));
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<std::size_t> mdist(3, 400);
  std::uniform_real_distribution<double> adist(0.01, 3.0);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t M = mdist(rng);
    const double a = adist(rng);
    const auto ww = arc_point_weights(a, M, t, c);
    double s = 0.0;
    for (double x : ww) s += x;
    CHECK(s == doctest::Approx(a * c * t).epsilon(1e-12));
  }
  CHECK_THROWS_AS(segment_lengths(1.0, 2, t, c), std::invalid_argument);
}

TEST_CASE("default arc point count keeps spacing below one pixel") {
  const auto s = desk_setup(64);
  const std::size_t M = default_arc_points(s.grid, s.ring);
  const double alpha = opening_angle(s.grid.roi_radius_m(), s.ring.radius_m());
  const double farthest = s.ring.radius_m() + s.grid.roi_radius_m();
  CHECK(alpha * farthest / static_cast<double>(M - 1) <= s.grid.pixel_size_m());
  CHECK(alpha * farthest / static_cast<double>(M - 2) > s.grid.pixel_size_m());
}

TEST_CASE("shell_integral") {
  const auto s = desk_setup(64);
  const double c = s.medium.sos_mps;
  SUBCASE("constant heat over the whole arc integrates to h*alpha") {
    for (double t : {2.0e-5, 2.7e-5, 3.5e-5}) {
      const double v = shell_integral([](Point2) { return 0.7; }, s.ring, 3, t, 0.9, 139, c);
      CHECK(v == doctest::Approx(0.7 * 0.9).epsilon(1e-13));
    }
    // Grid mode with an arc that stays inside a large constant image.
    const HeatImage big(ImageGrid(200, 200, 0.4e-3), 0.3);
    const double v = shell_integral([&](Point2 p) { return sample_bilinear(big, p); },
                                    RingGeometry(0.05, 8), 0, 0.05 / c, 0.2, 61, c);
    CHECK(v == doctest::Approx(0.3 * 0.2).epsilon(1e-12));
  }
  SUBCASE("zero image integrates to zero") {
    const HeatImage zero(s.grid);
    CHECK(shell_integral(zero, s.ring, s.medium, 5, 2.7e-5) == 0.0);
  }
  SUBCASE("single bright pixel: peak at time of flight, area identity") {
    const ImageGrid odd(33, 33, 0.4e-3);
    HeatImage img(odd);
    const std::size_t ix = 24;
    const std::size_t iy = 13;
    img.at(ix, iy) = 1.0;
    const Point2 src = odd.pixel_center(ix, iy);
    const RingGeometry ring(0.04, 8);
    const double dt = 1.0 / 40e6;
    for (std::size_t e = 0; e < ring.num_elements(); ++e) {
      const double dist = norm(ring.element_position(e) - src);
      double best = 0.0;
      double best_t = 0.0;
      double area = 0.0;
      for (int i = 1; i < 4000; ++i) {
        const double t = i * dt;
        const double v = shell_integral(img, ring, s.medium, e, t, 801);
        area += v * c * dt;
        if (v > best) {
          best = v;
          best_t = t;
        }
      }
      CHECK(std::abs(best_t * c - dist) <= c * dt);
      // Integrating I(t) over c*dt recovers the area integral of H/|r - r'|,
      // which for a bilinear tent of one pixel is dx^2 / dist.
      CHECK(area == doctest::Approx(odd.pixel_size_m() * odd.pixel_size_m() / dist).epsilon(0.02));
    }
  }
  SUBCASE("t <= 0 is rejected") {
    CHECK_THROWS_AS(shell_integral([](Point2) { return 1.0; }, s.ring, 0, 0.0, 0.9, 11, c),
                    std::invalid_argument);
  }
}

TEST_CASE("apply") {
  SUBCASE("grid outside the ring is rejected") {
    CHECK_THROWS_AS(ForwardOperator(RingGeometry(0.01, 8), Medium{}, Acquisition{10e6, 64, 0.0},
                                    ImageGrid(64, 64, 0.4e-3)),
                    std::invalid_argument);
  }
  SUBCASE("point source gives an odd-symmetric trace around the time of flight") {
    const Setup s{RingGeometry(0.04, 8), Medium{}, Acquisition{20e6, 1024, 0.0},
                  ImageGrid(33, 33, 0.4e-3)};
    const auto op = make_op(s);
    HeatImage img(s.grid);
    img.at(16, 16) = 1.0;  // origin
    const Sinogram p = op.apply(img);
    const double t0 = 0.04 / 1500.0 * 20e6;  // 533.33 samples
    for (std::size_t e = 0; e < 8; ++e) {
      const auto tr = p.trace(e);
      // Interpolate the trace at mirrored offsets around the continuous time
      // of flight; the even part should be small compared with the odd part.
      auto at = [&](double x) {
        const auto i = static_cast<std::size_t>(std::floor(x));
        const double f = x - std::floor(x);
        return (1.0 - f) * tr[i] + f * tr[i + 1];
      };
      double even = 0.0;
      double odd = 0.0;
      for (double k = 0.25; k < 20.0; k += 0.25) {
        const double a = at(t0 + k);
        const double b = at(t0 - k);
        even += (a + b) * (a + b);
        odd += (a - b) * (a - b);
      }
      CHECK(odd > 0.0);
      CHECK(even < 0.05 * odd);
      // Energy only near the time of flight.
      double near = 0.0;
      double total = 0.0;
      for (std::size_t i = 0; i < tr.size(); ++i) {
        total += tr[i] * tr[i];
        if (std::abs(static_cast<double>(i) - t0) < 12.0) near += tr[i] * tr[i];
      }
      CHECK(near == doctest::Approx(total));
    }
  }
  SUBCASE("linearity") {
    const auto s = small_setup();
    const auto op = make_op(s);
    std::mt19937_64 rng(3);
    const HeatImage x(s.grid, pact::test::random_vector(s.grid.size(), rng));
    const HeatImage y(s.grid, pact::test::random_vector(s.grid.size(), rng));
    std::vector<double> comb(s.grid.size());
    for (std::size_t k = 0; k < comb.size(); ++k) comb[k] = 2.5 * x.values()[k] - 0.75 * y.values()[k];
    const auto lhs = op.apply(HeatImage(s.grid, comb));
    const auto ax = op.apply(x);
    const auto ay = op.apply(y);
    std::vector<double> rhs(lhs.data().size());
    for (std::size_t k = 0; k < rhs.size(); ++k) rhs[k] = 2.5 * ax.data()[k] - 0.75 * ay.data()[k];
    CHECK(rel_diff(lhs.data(), rhs) < 1e-12);
  }
  SUBCASE("boundary samples are zero") {
    const auto s = small_setup();
    const auto op = make_op(s);
    std::mt19937_64 rng(9);
    const auto p = op.apply(HeatImage(s.grid, pact::test::random_vector(s.grid.size(), rng, 0, 1)));
    for (std::size_t e = 0; e < p.num_elements(); ++e) {
      CHECK(p.at(e, 0) == 0.0);
      CHECK(p.at(e, p.num_samples() - 1) == 0.0);
    }
  }
}

TEST_CASE("adjoint") {
  const auto s = small_setup();
  const auto op = make_op(s);
  SUBCASE("dot-product test on random instances") {
    std::mt19937_64 rng(21);
    for (int trial = 0; trial < 10; ++trial) {
      const auto x = pact::test::random_vector(op.cols(), rng);
      const auto y = pact::test::random_vector(op.rows(), rng);
      std::vector<double> ax(op.rows());
      std::vector<double> aty(op.cols());
      op.apply(x, ax);
      op.adjoint(y, aty);
      const double err = std::abs(dot(ax, y) - dot(x, aty)) / (l2(ax) * l2(y));
      CHECK(err < 1e-12);
    }
  }
  SUBCASE("zero sinogram maps to the zero image") {
    const Sinogram zero(s.ring, s.medium, s.acq);
    const auto img = op.adjoint(zero);
    CHECK(std::all_of(img.values().begin(), img.values().end(), [](double v) { return v == 0.0; }));
  }
  SUBCASE("normal operator peaks at a delta's own pixel") {
    for (auto [ix, iy] : {std::pair<std::size_t, std::size_t>{10, 20}, {16, 16}, {5, 27}}) {
      HeatImage delta(s.grid);
      delta.at(ix, iy) = 1.0;
      const auto back = op.adjoint(op.apply(delta));
      const auto vals = back.values();
      const auto k = static_cast<std::size_t>(std::max_element(vals.begin(), vals.end()) - vals.begin());
      const long px = static_cast<long>(k % s.grid.nx());
      const long py = static_cast<long>(k / s.grid.nx());
      CHECK(std::abs(px - static_cast<long>(ix)) <= 1);
      CHECK(std::abs(py - static_cast<long>(iy)) <= 1);
    }
  }
  SUBCASE("shape mismatch is rejected") {
    const Sinogram wrong(RingGeometry(0.04, 8), s.medium, s.acq);
    CHECK_THROWS_AS(op.adjoint(wrong), std::invalid_argument);
  }
  SUBCASE("result does not depend on worker count") {
    std::mt19937_64 rng(4);
    const auto y = pact::test::random_vector(op.rows(), rng);
    ForwardConfig c1;
    c1.workers = 1;
    ForwardConfig c3;
    c3.workers = 3;
    std::vector<double> a(op.cols());
    std::vector<double> b(op.cols());
    make_op(s, c1).adjoint(y, a);
    make_op(s, c3).adjoint(y, b);
    CHECK(a == b);
  }
}

TEST_CASE("assemble") {
  SUBCASE("assembled and matrix-free agree on random images") {
    const auto s = desk_setup(32);
    const auto mf = make_op(s);
    const auto as = ForwardOperator::assemble(s.ring, s.medium, s.acq, s.grid);
    CHECK(as.representation() == Representation::assembled_sparse);
    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 10; ++trial) {
      const auto x = pact::test::random_vector(mf.cols(), rng, 0.0, 1.0);
      std::vector<double> a(mf.rows());
      std::vector<double> b(mf.rows());
      mf.apply(x, a);
      as.apply(x, b);
      CHECK(rel_diff(b, a) < 1e-5);
    }
    const auto y = pact::test::random_vector(mf.rows(), rng);
    std::vector<double> a(mf.cols());
    std::vector<double> b(mf.cols());
    mf.adjoint(y, a);
    as.adjoint(y, b);
    CHECK(rel_diff(b, a) < 1e-5);

    std::size_t max_nnz = 0;
    for (std::size_t row = 0; row < as.rows(); ++row) {
      const std::size_t sample = row % s.acq.num_samples;
      const std::size_t n = as.row_nnz(row);
      max_nnz = std::max(max_nnz, n);
      // Rows whose two arcs both miss the ROI are empty.
      if (sample == 0 || sample + 1 == s.acq.num_samples ||
          (!as.sample_active(sample - 1) && !as.sample_active(sample + 1))) {
        CHECK(n == 0);
      }
    }
    // Hard bound: four bilinear taps per arc point, two arcs per sample.  With
    // sub-pixel arc spacing neighbouring points share taps, so 4M holds too.
    CHECK(max_nnz <= 8 * as.num_arc_points());
    CHECK(max_nnz <= 4 * as.num_arc_points());
    MESSAGE("max nnz per row = " << max_nnz << ", M = " << as.num_arc_points());
  }
  SUBCASE("memory budget") {
    const auto s = desk_setup(32);
    ForwardConfig cfg;
    cfg.memory_budget_bytes = 1024;
    try {
      (void)ForwardOperator::assemble(s.ring, s.medium, s.acq, s.grid, cfg);
      FAIL("expected MemoryBudgetExceeded");
    } catch (const MemoryBudgetExceeded& e) {
      CHECK(e.required_bytes() > 1024);
      CHECK(e.required_bytes() == make_op(s).assembled_bytes_estimate());
    }
  }
}

TEST_CASE("rotational equivariance") {
  SUBCASE("quarter turn permutes traces exactly") {
    const auto s = small_setup(16);
    const auto op = make_op(s);
    std::mt19937_64 rng(12);
    const HeatImage img(s.grid, pact::test::random_vector(s.grid.size(), rng, 0.0, 1.0));
    // Rotating by +90 degrees: new(ix, iy) = old(iy, n-1-ix).
    HeatImage rot(s.grid);
    const std::size_t n = s.grid.nx();
    for (std::size_t iy = 0; iy < n; ++iy)
      for (std::size_t ix = 0; ix < n; ++ix) rot.at(ix, iy) = img.at(iy, n - 1 - ix);
    const auto p = op.apply(img);
    const auto q = op.apply(rot);
    const std::size_t shift = 16 / 4;
    double num = 0.0;
    double den = 0.0;
    for (std::size_t e = 0; e < 16; ++e) {
      const auto a = p.trace(e);
      const auto b = q.trace((e + shift) % 16);
      for (std::size_t i = 0; i < a.size(); ++i) {
        num += (a[i] - b[i]) * (a[i] - b[i]);
        den += a[i] * a[i];
      }
    }
    CHECK(std::sqrt(num / den) < 1e-9);
  }
  SUBCASE("one element spacing on a smooth image") {
    // Bilinear interpolation error falls as dx^2; 0.2 mm pixels keep it under
    // the 1e-3 tolerance for this blob (0.4 mm pixels give ~3e-3).
    const Setup s{RingGeometry(0.04, 32), Medium{}, Acquisition{10e6, 512, 0.0},
                  ImageGrid(128, 128, 0.2e-3)};
    const auto op = make_op(s);
    const double step = 2.0 * kPi / 32.0;
    // Smooth blob well inside the grid: bilinear error scales like (dx/sigma)^2.
    const Point2 c{1e-3, -0.5e-3};
    const Point2 cr{c.x * std::cos(step) - c.y * std::sin(step), c.x * std::sin(step) + c.y * std::cos(step)};
    const auto p = op.apply(pact::test::gaussian_image(s.grid, c, 3.0e-3));
    const auto q = op.apply(pact::test::gaussian_image(s.grid, cr, 3.0e-3));
    double num = 0.0;
    double den = 0.0;
    for (std::size_t e = 0; e < 32; ++e) {
      const auto a = p.trace(e);
      const auto b = q.trace((e + 1) % 32);
      for (std::size_t i = 0; i < a.size(); ++i) {
        num += (a[i] - b[i]) * (a[i] - b[i]);
        den += a[i] * a[i];
      }
    }
    MESSAGE("relative trace mismatch after one-element rotation: " << std::sqrt(num / den));
    CHECK(std::sqrt(num / den) < 1e-3);
  }
}

TEST_CASE("doubling M barely changes the output on smooth images") {
  const auto s = desk_setup(32);
  const auto coarse = make_op(s);
  ForwardConfig fine_cfg;
  fine_cfg.arc.num_arc_points = 2 * coarse.num_arc_points() - 1;
  const auto fine = make_op(s, fine_cfg);
  const auto img = pact::test::gaussian_image(s.grid, {2e-3, 1e-3}, 2.5e-3);
  const auto a = coarse.apply(img);
  const auto b = fine.apply(img);
  MESSAGE("relative change from doubling M: " << rel_diff(a.data(), b.data()));
  CHECK(rel_diff(a.data(), b.data()) < 5e-3);
}
