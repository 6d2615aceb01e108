#include "pact/forward.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "pact/parallel.hpp"

namespace pact {

namespace {

/// Unit directions of the M arc points of one element (independent of t).
std::vector<Point2> arc_directions(double element_angle, double alpha, std::size_t M) {
  const double beta0 = element_angle + std::numbers::pi - 0.5 * alpha;
  const double step = alpha / static_cast<double>(M - 1);
  std::vector<Point2> dirs(M);
  for (std::size_t j = 0; j < M; ++j) {
    const double beta = beta0 + static_cast<double>(j) * step;
    dirs[j] = {std::cos(beta), std::sin(beta)};
  }
  return dirs;
}

template <typename Sink>
void bilinear_taps(const ImageGrid& grid, Point2 p, double weight, Sink&& sink) {
  const Point2 u = grid.to_pixel_coords(p);
  const double fx0 = std::floor(u.x);
  const double fy0 = std::floor(u.y);
  const double nx = static_cast<double>(grid.nx());
  const double ny = static_cast<double>(grid.ny());
  if (fx0 < -1.0 || fy0 < -1.0 || fx0 > nx - 1.0 || fy0 > ny - 1.0) return;
  const double ax = u.x - fx0;
  const double ay = u.y - fy0;
  const auto ix0 = static_cast<long>(fx0);
  const auto iy0 = static_cast<long>(fy0);
  const long inx = static_cast<long>(grid.nx());
  const long iny = static_cast<long>(grid.ny());
  const double wx[2] = {1.0 - ax, ax};
  const double wy[2] = {1.0 - ay, ay};
  for (int dy = 0; dy < 2; ++dy) {
    const long iy = iy0 + dy;
    if (iy < 0 || iy >= iny || wy[dy] == 0.0) continue;
    for (int dx = 0; dx < 2; ++dx) {
      const long ix = ix0 + dx;
      if (ix < 0 || ix >= inx || wx[dx] == 0.0) continue;
      sink(static_cast<std::uint32_t>(iy * inx + ix), weight * wx[dx] * wy[dy]);
    }
  }
}

}  // namespace

MemoryBudgetExceeded::MemoryBudgetExceeded(std::size_t required, std::size_t budget)
    : std::runtime_error("assembled forward operator needs about " + std::to_string(required) +
                         " bytes, budget is " + std::to_string(budget)),
      required_(required) {}

double opening_angle(double roi_radius_m, double ring_radius_m) {
  if (!(roi_radius_m > 0.0) || !(ring_radius_m > 0.0)) {
    throw std::invalid_argument("ROI and ring radii must be positive");
  }
  if (roi_radius_m >= ring_radius_m) {
    throw std::invalid_argument("ROI radius must be smaller than the ring radius");
  }
  return 2.0 * std::asin(roi_radius_m / ring_radius_m);
}

std::vector<Point2> arc_points(Point2 element_pos, double t, double alpha, std::size_t M, double c) {
  if (!(t > 0.0)) throw std::invalid_argument("arc time must be positive");
  if (M < 3) throw std::invalid_argument("arc needs at least 3 points");
  const double radius = c * t;
  const double element_angle = std::atan2(element_pos.y, element_pos.x);
  const auto dirs = arc_directions(element_angle, alpha, M);
  std::vector<Point2> pts(M);
  for (std::size_t j = 0; j < M; ++j) pts[j] = element_pos + radius * dirs[j];
  return pts;
}

std::vector<double> segment_lengths(double alpha, std::size_t M, double t, double c) {
  if (M < 3) throw std::invalid_argument("arc needs at least 3 points");
  std::vector<double> d(M + 1, alpha * c * t / static_cast<double>(M - 1));
  d.front() = 0.0;
  d.back() = 0.0;
  return d;
}

std::vector<double> arc_point_weights(double alpha, std::size_t M, double t, double c) {
  const auto d = segment_lengths(alpha, M, t, c);
  std::vector<double> w(M);
  for (std::size_t l = 0; l < M; ++l) w[l] = 0.5 * (d[l] + d[l + 1]);
  return w;
}

std::size_t default_arc_points(const ImageGrid& grid, const RingGeometry& geometry) {
  const double ri = grid.roi_radius_m();
  const double alpha = opening_angle(ri, geometry.radius_m());
  const double farthest = geometry.radius_m() + ri;
  const auto m = static_cast<std::size_t>(std::ceil(alpha * farthest / grid.pixel_size_m())) + 1;
  return std::max<std::size_t>(m, 3);
}

double sample_bilinear(const HeatImage& img, Point2 p) {
  double acc = 0.0;
  const auto v = img.values();
  bilinear_taps(img.grid(), p, 1.0, [&](std::uint32_t k, double w) { acc += w * v[k]; });
  return acc;
}

double support_weight(const ImageGrid& grid, Point2 p) {
  double acc = 0.0;
  bilinear_taps(grid, p, 1.0, [&](std::uint32_t, double w) { acc += w; });
  return acc;
}

double shell_integral(const std::function<double(Point2)>& sampler, const RingGeometry& geometry,
                      std::size_t element, double t, double alpha, std::size_t M, double c) {
  if (!(t > 0.0)) throw std::invalid_argument("shell integral needs t > 0");
  const Point2 r = geometry.element_position(element);
  const auto pts = arc_points(r, t, alpha, M, c);
  const auto w = arc_point_weights(alpha, M, t, c);
  double acc = 0.0;
  for (std::size_t l = 0; l < M; ++l) acc += sampler(pts[l]) / norm(r - pts[l]) * w[l];
  return acc;
}

double shell_integral(const HeatImage& img, const RingGeometry& geometry, const Medium& medium,
                      std::size_t element, double t, std::size_t M) {
  const double alpha = opening_angle(img.grid().roi_radius_m(), geometry.radius_m());
  if (M == 0) M = default_arc_points(img.grid(), geometry);
  return shell_integral([&](Point2 p) { return sample_bilinear(img, p); }, geometry, element, t, alpha,
                        M, medium.sos_mps);
}

ForwardOperator::ForwardOperator(RingGeometry geometry, Medium medium, Acquisition acquisition,
                                 ImageGrid grid, ForwardConfig config)
    : geometry_(geometry),
      medium_(medium),
      acquisition_(acquisition),
      grid_(grid),
      config_(config),
      representation_(config.representation) {
  medium_.validate();
  acquisition_.validate();
  require_grid_inside_ring(grid_, geometry_);
  if (grid_.size() > std::size_t{0xffffffffu}) throw std::invalid_argument("grid too large");
  alpha_ = pact::opening_angle(grid_.roi_radius_m(), geometry_.radius_m());
  num_arc_points_ = config_.arc.num_arc_points == 0 ? default_arc_points(grid_, geometry_)
                                                    : config_.arc.num_arc_points;
  if (num_arc_points_ < 3) throw std::invalid_argument("arc needs at least 3 points");
  difference_scale_ = medium_.grueneisen / (4.0 * std::numbers::pi * medium_.sos_mps) /
                      (2.0 * acquisition_.dt());
  directions_.reserve(geometry_.num_elements() * num_arc_points_);
  for (std::size_t e = 0; e < geometry_.num_elements(); ++e) {
    const auto d = arc_directions(geometry_.element_angle(e), alpha_, num_arc_points_);
    directions_.insert(directions_.end(), d.begin(), d.end());
  }
  if (representation_ == Representation::assembled_sparse) build_sparse();
}

ForwardOperator ForwardOperator::assemble(RingGeometry geometry, Medium medium,
                                          Acquisition acquisition, ImageGrid grid,
                                          ForwardConfig config) {
  config.representation = Representation::assembled_sparse;
  return ForwardOperator(geometry, medium, acquisition, grid, config);
}

bool ForwardOperator::sample_active(std::size_t sample) const {
  const double t = acquisition_.time(sample);
  if (!(t > 0.0)) return false;
  const double r = medium_.sos_mps * t;
  const double ri = grid_.roi_radius_m();
  return r >= geometry_.radius_m() - ri && r <= geometry_.radius_m() + ri;
}

void ForwardOperator::arc_samples(std::size_t element, std::size_t sample,
                                  std::vector<ArcSample>& out) const {
  out.clear();
  if (!sample_active(sample)) return;
  const double radius = medium_.sos_mps * acquisition_.time(sample);
  const Point2 r = geometry_.element_position(element);
  const Point2* dirs = directions_.data() + element * num_arc_points_;
  // Every arc point is c*t from the element, so the trapezoid weight over the
  // distance reduces to alpha/(M-1), halved at both ends.
  const double interior = alpha_ * radius / static_cast<double>(num_arc_points_ - 1);
  for (std::size_t l = 0; l < num_arc_points_; ++l) {
    const double seg = (l == 0 || l + 1 == num_arc_points_) ? 0.5 * interior : interior;
    out.push_back({r + radius * dirs[l], seg / radius});
  }
}

void ForwardOperator::shell_taps(std::size_t element, std::size_t sample,
                                 std::vector<PixelWeight>& out) const {
  out.clear();
  thread_local std::vector<ArcSample> arc;
  arc_samples(element, sample, arc);
  for (const auto& a : arc) {
    bilinear_taps(grid_, a.point, a.coeff,
                  [&](std::uint32_t k, double wk) { out.push_back({k, wk}); });
  }
}

Sinogram ForwardOperator::apply(const HeatImage& img) const {
  if (!(img.grid() == grid_)) throw std::invalid_argument("image grid does not match operator");
  Sinogram out(geometry_, medium_, acquisition_);
  apply(img.values(), out.data());
  return out;
}

HeatImage ForwardOperator::adjoint(const Sinogram& sino) const {
  if (sino.num_elements() != geometry_.num_elements() ||
      sino.num_samples() != acquisition_.num_samples) {
    throw std::invalid_argument("sinogram shape does not match operator");
  }
  HeatImage out(grid_);
  adjoint(sino.data(), out.values());
  return out;
}

void ForwardOperator::apply(std::span<const double> image, std::span<double> sino) const {
  if (image.size() != cols() || sino.size() != rows()) {
    throw std::invalid_argument("forward apply: shape mismatch");
  }
  if (representation_ == Representation::matrix_free) {
    apply_matrix_free(image, sino);
    return;
  }
  parallel_for(
      rows(),
      [&](std::size_t row) {
        double acc = 0.0;
        for (std::size_t k = row_start_[row]; k < row_start_[row + 1]; ++k) {
          acc += values_[k] * image[col_index_[k]];
        }
        sino[row] = acc;
      },
      config_.workers);
}

void ForwardOperator::adjoint(std::span<const double> sino, std::span<double> image) const {
  if (image.size() != cols() || sino.size() != rows()) {
    throw std::invalid_argument("forward adjoint: shape mismatch");
  }
  if (representation_ == Representation::matrix_free) {
    adjoint_matrix_free(sino, image);
    return;
  }
  std::fill(image.begin(), image.end(), 0.0);
  for (std::size_t row = 0; row < rows(); ++row) {
    const double y = sino[row];
    if (y == 0.0) continue;
    for (std::size_t k = row_start_[row]; k < row_start_[row + 1]; ++k) {
      image[col_index_[k]] += values_[k] * y;
    }
  }
}

void ForwardOperator::apply_matrix_free(std::span<const double> image,
                                        std::span<double> sino) const {
  const std::size_t ns = acquisition_.num_samples;
  parallel_for(
      geometry_.num_elements(),
      [&](std::size_t e) {
        std::vector<double> shell(ns, 0.0);
        std::vector<PixelWeight> taps;
        for (std::size_t i = 0; i < ns; ++i) {
          shell_taps(e, i, taps);
          double acc = 0.0;
          for (const auto& tap : taps) acc += tap.weight * image[tap.pixel];
          shell[i] = acc;
        }
        auto trace = sino.subspan(e * ns, ns);
        trace[0] = 0.0;
        trace[ns - 1] = 0.0;
        for (std::size_t i = 1; i + 1 < ns; ++i) {
          trace[i] = difference_scale_ * (shell[i + 1] - shell[i - 1]);
        }
      },
      config_.workers);
}

void ForwardOperator::adjoint_matrix_free(std::span<const double> sino,
                                          std::span<double> image) const {
  const std::size_t ns = acquisition_.num_samples;
  const std::size_t ne = geometry_.num_elements();
  // Elements are reduced in fixed groups so the summation order does not
  // depend on the worker count.
  const std::size_t groups = std::min<std::size_t>(ne, 16);
  const std::size_t per_group = (ne + groups - 1) / groups;
  std::vector<std::vector<double>> partial(groups);
  parallel_for(
      groups,
      [&](std::size_t g) {
        auto& acc = partial[g];
        acc.assign(grid_.size(), 0.0);
        std::vector<double> shell_grad(ns);
        std::vector<PixelWeight> taps;
        for (std::size_t e = g * per_group; e < std::min(ne, (g + 1) * per_group); ++e) {
          const auto trace = sino.subspan(e * ns, ns);
          std::fill(shell_grad.begin(), shell_grad.end(), 0.0);
          for (std::size_t i = 1; i + 1 < ns; ++i) {
            shell_grad[i + 1] += difference_scale_ * trace[i];
            shell_grad[i - 1] -= difference_scale_ * trace[i];
          }
          for (std::size_t i = 0; i < ns; ++i) {
            if (shell_grad[i] == 0.0) continue;
            shell_taps(e, i, taps);
            for (const auto& tap : taps) acc[tap.pixel] += tap.weight * shell_grad[i];
          }
        }
      },
      config_.workers);
  std::fill(image.begin(), image.end(), 0.0);
  for (const auto& acc : partial) {
    for (std::size_t k = 0; k < image.size(); ++k) image[k] += acc[k];
  }
}

std::size_t ForwardOperator::assembled_bytes_estimate() const {
  const std::size_t ns = acquisition_.num_samples;
  std::size_t active_rows = 0;
  for (std::size_t i = 1; i + 1 < ns; ++i) {
    if (sample_active(i - 1) || sample_active(i + 1)) ++active_rows;
  }
  active_rows *= geometry_.num_elements();
  const std::size_t per_row = std::min<std::size_t>(8 * num_arc_points_, grid_.size());
  return active_rows * per_row * (sizeof(double) + sizeof(std::uint32_t)) +
         (rows() + 1) * sizeof(std::size_t);
}

std::size_t ForwardOperator::row_nnz(std::size_t row) const {
  if (representation_ != Representation::assembled_sparse) return 0;
  return row_start_.at(row + 1) - row_start_.at(row);
}

void ForwardOperator::build_sparse() {
  const std::size_t required = assembled_bytes_estimate();
  if (required > config_.memory_budget_bytes) {
    throw MemoryBudgetExceeded(required, config_.memory_budget_bytes);
  }
  const std::size_t ns = acquisition_.num_samples;
  const std::size_t ne = geometry_.num_elements();
  std::vector<std::vector<std::uint32_t>> cols(ne);
  std::vector<std::vector<double>> vals(ne);
  std::vector<std::vector<std::size_t>> counts(ne);
  parallel_for(
      ne,
      [&](std::size_t e) {
        std::vector<std::vector<PixelWeight>> shells(ns);
        for (std::size_t i = 0; i < ns; ++i) shell_taps(e, i, shells[i]);
        std::vector<double> dense(grid_.size(), 0.0);
        std::vector<char> touched(grid_.size(), 0);
        std::vector<std::uint32_t> order;
        counts[e].assign(ns, 0);
        for (std::size_t i = 1; i + 1 < ns; ++i) {
          order.clear();
          auto add = [&](const std::vector<PixelWeight>& taps, double sign) {
            for (const auto& tap : taps) {
              if (!touched[tap.pixel]) {
                touched[tap.pixel] = 1;
                order.push_back(tap.pixel);
              }
              dense[tap.pixel] += sign * tap.weight;
            }
          };
          add(shells[i + 1], 1.0);
          add(shells[i - 1], -1.0);
          std::sort(order.begin(), order.end());
          for (const auto k : order) {
            cols[e].push_back(k);
            vals[e].push_back(difference_scale_ * dense[k]);
            dense[k] = 0.0;
            touched[k] = 0;
          }
          counts[e][i] = order.size();
        }
      },
      config_.workers);
  row_start_.assign(rows() + 1, 0);
  for (std::size_t e = 0; e < ne; ++e) {
    for (std::size_t i = 0; i < ns; ++i) {
      row_start_[e * ns + i + 1] = row_start_[e * ns + i] + counts[e][i];
    }
  }
  col_index_.reserve(row_start_.back());
  values_.reserve(row_start_.back());
  for (std::size_t e = 0; e < ne; ++e) {
    col_index_.insert(col_index_.end(), cols[e].begin(), cols[e].end());
    values_.insert(values_.end(), vals[e].begin(), vals[e].end());
    std::vector<std::uint32_t>().swap(cols[e]);
    std::vector<double>().swap(vals[e]);
  }
}

}  // namespace pact
