#include "pact/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

namespace pact {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

struct Grower {
  const VesselTreeParams& params;
  std::mt19937_64 rng;
  std::vector<TaperedSegment> out;

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

  // Clips the step p -> q so that a capsule of the given width stays inside
  // the square; returns false if the step had to be shortened.
  bool clip(Point2 p, Point2& q, double width) const {
    const double bound = 0.5 * params.extent_m - 0.5 * width;
    double s = 1.0;
    const Point2 d = q - p;
    for (const auto& [pc, dc] : {std::pair{p.x, d.x}, std::pair{p.y, d.y}}) {
      if (pc + dc > bound) s = std::min(s, (bound - pc) / dc);
      if (pc + dc < -bound) s = std::min(s, (-bound - pc) / dc);
    }
    s = std::max(s, 0.0);
    q = p + s * d;
    return s >= 1.0;
  }

  void grow(Point2 start, double angle, double width, double length, std::size_t depth) {
    const double amplitude = uniform(params.min_amplitude, params.max_amplitude);
    const double end_width = std::max(params.min_width_m, 0.8 * width);
    constexpr int kPieces = 3;
    Point2 p = start;
    double heading = angle;
    for (int k = 0; k < kPieces; ++k) {
      heading += uniform(-10.0, 10.0) * kDeg;
      const double w0 = width + (end_width - width) * k / kPieces;
      const double w1 = width + (end_width - width) * (k + 1) / kPieces;
      Point2 q = p + (length / kPieces) * Point2{std::cos(heading), std::sin(heading)};
      const bool whole = clip(p, q, std::max(w0, w1));
      if (norm(q - p) > 0.0) out.push_back({p, q, w0, w1, amplitude});
      p = q;
      if (!whole) return;
    }
    if (depth == 0) return;
    const double spread_left = uniform(18.0, 38.0) * kDeg;
    const double spread_right = uniform(18.0, 38.0) * kDeg;
    for (const double child_angle : {heading + spread_left, heading - spread_right}) {
      const double child_width = std::max(params.min_width_m, end_width * uniform(0.75, 0.92));
      grow(p, child_angle, child_width, length * uniform(0.65, 0.85), depth - 1);
    }
  }
};

bool inside_segment(const TaperedSegment& s, Point2 p) {
  const Point2 ab = s.b - s.a;
  const double len2 = ab.x * ab.x + ab.y * ab.y;
  double t = 0.0;
  if (len2 > 0.0) t = std::clamp(((p.x - s.a.x) * ab.x + (p.y - s.a.y) * ab.y) / len2, 0.0, 1.0);
  const Point2 closest = s.a + t * ab;
  const double half_width = 0.5 * (s.width_a_m + t * (s.width_b_m - s.width_a_m));
  return norm(p - closest) <= half_width;
}

template <typename Inside>
void paint(HeatImage& img, double xmin, double xmax, double ymin, double ymax, double amplitude,
           Inside&& inside) {
  const ImageGrid& g = img.grid();
  const Point2 lo = g.to_pixel_coords({xmin, ymin});
  const Point2 hi = g.to_pixel_coords({xmax, ymax});
  const long nx = static_cast<long>(g.nx());
  const long ny = static_cast<long>(g.ny());
  const long ix0 = std::clamp(static_cast<long>(std::floor(lo.x)), 0L, nx - 1);
  const long ix1 = std::clamp(static_cast<long>(std::ceil(hi.x)), 0L, nx - 1);
  const long iy0 = std::clamp(static_cast<long>(std::floor(lo.y)), 0L, ny - 1);
  const long iy1 = std::clamp(static_cast<long>(std::ceil(hi.y)), 0L, ny - 1);
  for (long iy = iy0; iy <= iy1; ++iy) {
    for (long ix = ix0; ix <= ix1; ++ix) {
      const auto ux = static_cast<std::size_t>(ix);
      const auto uy = static_cast<std::size_t>(iy);
      if (inside(g.pixel_center(ux, uy))) img.at(ux, uy) = std::max(img.at(ux, uy), amplitude);
    }
  }
}

}  // namespace

std::vector<TaperedSegment> generate_vessel_tree(const VesselTreeParams& params, std::uint64_t seed) {
  if (!(params.extent_m > 0.0) || !(params.trunk_width_m > 0.0) || !(params.min_width_m > 0.0)) {
    throw std::invalid_argument("vessel tree sizes must be positive");
  }
  if (params.trunk_width_m >= 0.5 * params.extent_m) {
    throw std::invalid_argument("vessel trunk wider than half the extent");
  }
  Grower g{params, std::mt19937_64(seed), {}};
  const Point2 root{g.uniform(-0.1, 0.1) * params.extent_m,
                    -0.5 * params.extent_m + 0.5 * params.trunk_width_m};
  g.grow(root, (90.0 + g.uniform(-10.0, 10.0)) * kDeg, params.trunk_width_m, 0.3 * params.extent_m,
         params.depth);
  return std::move(g.out);
}

PhantomStructures expand(const PhantomSpec& spec) {
  PhantomStructures s{spec.discs, spec.segments};
  for (const auto& w : spec.wires) {
    if (w.points.size() < 2) throw std::invalid_argument("wire polyline needs at least two points");
    for (std::size_t i = 0; i + 1 < w.points.size(); ++i) {
      s.segments.push_back({w.points[i], w.points[i + 1], w.width_m, w.width_m, w.amplitude});
    }
  }
  if (spec.kind == PhantomKind::vessel_branches) {
    const auto tree = generate_vessel_tree(spec.vessel, spec.seed);
    s.segments.insert(s.segments.end(), tree.begin(), tree.end());
  }
  return s;
}

void validate(const PhantomSpec& spec, const ImageGrid& grid) {
  const auto s = expand(spec);
  const Point2 c = grid.center();
  const double hw = grid.half_width_m();
  const double hh = grid.half_height_m();
  auto check_box = [&](double xmin, double xmax, double ymin, double ymax) {
    if (xmin < c.x - hw || xmax > c.x + hw || ymin < c.y - hh || ymax > c.y + hh) {
      throw std::invalid_argument("phantom structure exits the reconstruction ROI");
    }
  };
  auto check_amp = [](double a) {
    if (!(a > 0.0 && a <= 1.0)) throw std::invalid_argument("phantom amplitude must be in (0, 1]");
  };
  for (const auto& d : s.discs) {
    if (!(d.radius_m > 0.0)) throw std::invalid_argument("disc radius must be positive");
    check_amp(d.amplitude);
    check_box(d.center.x - d.radius_m, d.center.x + d.radius_m, d.center.y - d.radius_m,
              d.center.y + d.radius_m);
  }
  for (const auto& seg : s.segments) {
    if (!(seg.width_a_m > 0.0) || !(seg.width_b_m > 0.0)) {
      throw std::invalid_argument("segment width must be positive");
    }
    check_amp(seg.amplitude);
    const double r = 0.5 * std::max(seg.width_a_m, seg.width_b_m);
    check_box(std::min(seg.a.x, seg.b.x) - r, std::max(seg.a.x, seg.b.x) + r,
              std::min(seg.a.y, seg.b.y) - r, std::max(seg.a.y, seg.b.y) + r);
  }
}

HeatImage rasterize(const PhantomSpec& spec, const ImageGrid& grid) {
  validate(spec, grid);
  const auto s = expand(spec);
  HeatImage img(grid);
  for (const auto& d : s.discs) {
    paint(img, d.center.x - d.radius_m, d.center.x + d.radius_m, d.center.y - d.radius_m,
          d.center.y + d.radius_m, d.amplitude,
          [&](Point2 p) { return norm(p - d.center) <= d.radius_m; });
  }
  for (const auto& seg : s.segments) {
    const double r = 0.5 * std::max(seg.width_a_m, seg.width_b_m);
    paint(img, std::min(seg.a.x, seg.b.x) - r, std::max(seg.a.x, seg.b.x) + r,
          std::min(seg.a.y, seg.b.y) - r, std::max(seg.a.y, seg.b.y) + r, seg.amplitude,
          [&](Point2 p) { return inside_segment(seg, p); });
  }
  return img;
}

Sinogram synthesize_sinogram(const HeatImage& img, const RingGeometry& geometry, const Medium& medium,
                             const Acquisition& acquisition, std::optional<double> noise_snr_db,
                             std::uint64_t noise_seed, ForwardConfig forward) {
  const ForwardOperator op(geometry, medium, acquisition, img.grid(), forward);
  Sinogram sino = op.apply(img);
  if (noise_snr_db) {
    double power = 0.0;
    for (double v : sino.data()) power += v * v;
    power /= static_cast<double>(sino.data().size());
    const double sigma = std::sqrt(power) / std::pow(10.0, *noise_snr_db / 20.0);
    std::mt19937_64 rng(noise_seed);
    std::normal_distribution<double> n(0.0, sigma);
    for (double& v : sino.data()) v += n(rng);
  }
  return sino;
}

}  // namespace pact
