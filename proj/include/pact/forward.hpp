#pragma once

// Discretised photoacoustic forward model for a ring array.
//
// For element r and time t the heat image is integrated along the arc of
// radius c*t centred on the element, restricted to the angular sector that
// covers the circular ROI:
//
//   I(t)   = sum_l H(r'_l) / |r - r'_l| * (d_{l-1,l} + d_{l,l+1}) / 2
//   p(t_i) = Gamma / (4 pi c) * (I(t_{i+1}) - I(t_{i-1})) / (2 dt)
//
// The first and last samples of every trace are zero.  Grid images are
// sampled bilinearly with zero heat outside the grid.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

#include "pact/core.hpp"

namespace pact {

struct ArcSamplingConfig {
  /// Arc points per shell (M).  Zero selects the smallest M whose spacing at
  /// the farthest arc crossing the ROI is at most one pixel.
  std::size_t num_arc_points = 0;
};

enum class Representation { matrix_free, assembled_sparse };

struct ForwardConfig {
  ArcSamplingConfig arc;
  Representation representation = Representation::matrix_free;
  std::size_t memory_budget_bytes = std::size_t{2} << 30;
  std::size_t workers = 0;
};

/// Thrown by assembly when the sparse matrix would not fit the budget.
class MemoryBudgetExceeded : public std::runtime_error {
 public:
  MemoryBudgetExceeded(std::size_t required, std::size_t budget);
  std::size_t required_bytes() const { return required_; }

 private:
  std::size_t required_;
};

double opening_angle(double roi_radius_m, double ring_radius_m);

/// M points on the arc of radius c*t around `element_pos`, spread over an
/// opening angle alpha centred on the element->origin direction.
std::vector<Point2> arc_points(Point2 element_pos, double t, double alpha, std::size_t M, double c);

/// Segment lengths d_{l,l+1} for l = 0..M (M+1 entries, zero at both ends).
std::vector<double> segment_lengths(double alpha, std::size_t M, double t, double c);

/// Per-point trapezoid weights (d_{l-1,l} + d_{l,l+1}) / 2, M entries.
std::vector<double> arc_point_weights(double alpha, std::size_t M, double t, double c);

std::size_t default_arc_points(const ImageGrid& grid, const RingGeometry& geometry);

/// Bilinear sample of a grid image with zero outside the pixel-centre lattice.
double sample_bilinear(const HeatImage& img, Point2 p);

/// Total bilinear weight of the in-grid taps at p: 1 inside the pixel-centre
/// lattice, falling to 0 half a pixel beyond it.
double support_weight(const ImageGrid& grid, Point2 p);

/// Shell integral I(t) for an arbitrary heat sampler.  t must be positive.
double shell_integral(const std::function<double(Point2)>& sampler, const RingGeometry& geometry,
                      std::size_t element, double t, double alpha, std::size_t M, double c);

/// Grid-mode shell integral with the default sector for the image's ROI.
double shell_integral(const HeatImage& img, const RingGeometry& geometry, const Medium& medium,
                      std::size_t element, double t, std::size_t M = 0);

/// One bilinear tap of the sparse arc expansion.
struct PixelWeight {
  std::uint32_t pixel;
  double weight;
};

/// Arc point and its weight (trapezoid length over distance) in I(t).
struct ArcSample {
  Point2 point;
  double coeff;
};

/// Linear map A from heat images to sinograms, with its exact transpose.
class ForwardOperator {
 public:
  ForwardOperator(RingGeometry geometry, Medium medium, Acquisition acquisition, ImageGrid grid,
                  ForwardConfig config = {});

  /// Builds the operator in assembled_sparse form regardless of config.
  static ForwardOperator assemble(RingGeometry geometry, Medium medium, Acquisition acquisition,
                                  ImageGrid grid, ForwardConfig config = {});

  const RingGeometry& geometry() const { return geometry_; }
  const Medium& medium() const { return medium_; }
  const Acquisition& acquisition() const { return acquisition_; }
  const ImageGrid& grid() const { return grid_; }
  Representation representation() const { return representation_; }

  std::size_t num_arc_points() const { return num_arc_points_; }
  double opening_angle() const { return alpha_; }
  /// Gamma / (4 pi c) / (2 dt): multiplies I(t+dt) - I(t-dt).
  double difference_scale() const { return difference_scale_; }
  std::size_t rows() const { return geometry_.num_elements() * acquisition_.num_samples; }
  std::size_t cols() const { return grid_.size(); }

  /// True when the arc at sample i can touch the grid's ROI circle.
  bool sample_active(std::size_t sample) const;

  Sinogram apply(const HeatImage& img) const;
  HeatImage adjoint(const Sinogram& sino) const;
  void apply(std::span<const double> image, std::span<double> sino) const;
  void adjoint(std::span<const double> sino, std::span<double> image) const;

  /// Arc points of I(t_sample) for one element; empty for inactive samples.
  void arc_samples(std::size_t element, std::size_t sample, std::vector<ArcSample>& out) const;

  /// Bilinear taps (with trapezoid/distance weights folded in) of I(t_sample)
  /// for one element.  Repeated pixels are not merged.
  void shell_taps(std::size_t element, std::size_t sample, std::vector<PixelWeight>& out) const;

  /// Upper bound on the assembled representation's memory use.
  std::size_t assembled_bytes_estimate() const;
  std::size_t nnz() const { return col_index_.size(); }
  /// Nonzeros of one assembled row (0 for matrix-free operators).
  std::size_t row_nnz(std::size_t row) const;

 private:
  void build_sparse();
  void apply_matrix_free(std::span<const double> image, std::span<double> sino) const;
  void adjoint_matrix_free(std::span<const double> sino, std::span<double> image) const;

  RingGeometry geometry_;
  Medium medium_;
  Acquisition acquisition_;
  ImageGrid grid_;
  ForwardConfig config_;
  Representation representation_;
  std::size_t num_arc_points_ = 0;
  double alpha_ = 0.0;
  double difference_scale_ = 0.0;
  std::vector<Point2> directions_;

  std::vector<std::size_t> row_start_;
  std::vector<std::uint32_t> col_index_;
  std::vector<double> values_;
};

}  // namespace pact
