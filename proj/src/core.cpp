#include "pact/core.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace pact {

double norm(Point2 p) { return std::hypot(p.x, p.y); }

RingGeometry::RingGeometry(double radius_m, std::size_t num_elements)
    : radius_m_(radius_m), num_elements_(num_elements) {
  if (!(radius_m > 0.0) || !std::isfinite(radius_m)) {
    throw std::invalid_argument("ring radius must be positive");
  }
  if (num_elements == 0) {
    throw std::invalid_argument("ring needs at least one element");
  }
}

double RingGeometry::element_angle(std::size_t i) const {
  return 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(num_elements_);
}

Point2 RingGeometry::element_position(std::size_t i) const {
  const double phi = element_angle(i);
  return {radius_m_ * std::cos(phi), radius_m_ * std::sin(phi)};
}

Point2 RingGeometry::inward_normal(std::size_t i) const {
  const double phi = element_angle(i);
  return {-std::cos(phi), -std::sin(phi)};
}

void Medium::validate() const {
  if (!(sos_mps > 0.0) || !std::isfinite(sos_mps)) {
    throw std::invalid_argument("speed of sound must be positive");
  }
  if (!(grueneisen > 0.0) || !std::isfinite(grueneisen)) {
    throw std::invalid_argument("Grueneisen parameter must be positive");
  }
}

void Acquisition::validate() const {
  if (!(sample_rate_hz > 0.0) || !std::isfinite(sample_rate_hz)) {
    throw std::invalid_argument("sample rate must be positive");
  }
  if (num_samples < 3) {
    throw std::invalid_argument("acquisition needs at least 3 samples");
  }
  if (!std::isfinite(t_start_s)) {
    throw std::invalid_argument("t_start must be finite");
  }
}

ImageGrid::ImageGrid(std::size_t nx, std::size_t ny, double pixel_size_m, Point2 center)
    : nx_(nx), ny_(ny), pixel_size_m_(pixel_size_m), center_(center) {
  if (nx == 0 || ny == 0) {
    throw std::invalid_argument("image grid must have at least one pixel per axis");
  }
  if (!(pixel_size_m > 0.0) || !std::isfinite(pixel_size_m)) {
    throw std::invalid_argument("pixel size must be positive");
  }
}

double ImageGrid::roi_radius_m() const { return std::hypot(half_width_m(), half_height_m()); }

Point2 ImageGrid::pixel_center(std::size_t ix, std::size_t iy) const {
  if (ix >= nx_ || iy >= ny_) {
    throw std::out_of_range("pixel index (" + std::to_string(ix) + ", " + std::to_string(iy) +
                            ") outside grid");
  }
  return {center_.x + (static_cast<double>(ix) - 0.5 * static_cast<double>(nx_ - 1)) * pixel_size_m_,
          center_.y + (static_cast<double>(iy) - 0.5 * static_cast<double>(ny_ - 1)) * pixel_size_m_};
}

Point2 ImageGrid::to_pixel_coords(Point2 p) const {
  return {(p.x - center_.x) / pixel_size_m_ + 0.5 * static_cast<double>(nx_ - 1),
          (p.y - center_.y) / pixel_size_m_ + 0.5 * static_cast<double>(ny_ - 1)};
}

void require_grid_inside_ring(const ImageGrid& grid, const RingGeometry& geometry) {
  const Point2 c = grid.center();
  const double hw = grid.half_width_m();
  const double hh = grid.half_height_m();
  for (const Point2 corner : {Point2{c.x - hw, c.y - hh}, Point2{c.x + hw, c.y - hh},
                              Point2{c.x - hw, c.y + hh}, Point2{c.x + hw, c.y + hh}}) {
    if (!(norm(corner) < geometry.radius_m())) {
      throw std::invalid_argument("image grid extends outside the transducer ring");
    }
  }
}

Sinogram::Sinogram(RingGeometry geometry, Medium medium, Acquisition acquisition)
    : geometry_(geometry),
      medium_(medium),
      acquisition_(acquisition),
      data_(geometry.num_elements() * acquisition.num_samples, 0.0) {
  medium_.validate();
  acquisition_.validate();
}

Sinogram::Sinogram(RingGeometry geometry, Medium medium, Acquisition acquisition,
                   std::vector<double> data)
    : geometry_(geometry), medium_(medium), acquisition_(acquisition), data_(std::move(data)) {
  medium_.validate();
  acquisition_.validate();
  if (data_.size() != geometry_.num_elements() * acquisition_.num_samples) {
    throw std::invalid_argument("sinogram data size does not match elements x samples");
  }
  if (!std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); })) {
    throw std::invalid_argument("sinogram contains non-finite samples");
  }
}

std::span<const double> Sinogram::trace(std::size_t element) const {
  if (element >= num_elements()) throw std::out_of_range("element index out of range");
  return std::span<const double>(data_).subspan(element * num_samples(), num_samples());
}

std::span<double> Sinogram::trace(std::size_t element) {
  if (element >= num_elements()) throw std::out_of_range("element index out of range");
  return std::span<double>(data_).subspan(element * num_samples(), num_samples());
}

double Sinogram::max_abs() const {
  double m = 0.0;
  for (double v : data_) m = std::max(m, std::abs(v));
  return m;
}

HeatImage::HeatImage(ImageGrid grid, double fill) : grid_(grid), values_(grid.size(), fill) {}

HeatImage::HeatImage(ImageGrid grid, std::vector<double> values)
    : grid_(grid), values_(std::move(values)) {
  if (values_.size() != grid_.size()) {
    throw std::invalid_argument("image value count does not match grid");
  }
  if (!std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); })) {
    throw std::invalid_argument("image contains non-finite values");
  }
}

double HeatImage::max() const { return *std::max_element(values_.begin(), values_.end()); }
double HeatImage::min() const { return *std::min_element(values_.begin(), values_.end()); }

Sinogram subsample_projections(const Sinogram& sino, std::size_t k) {
  const std::size_t n = sino.num_elements();
  if (k == 0 || k > n) {
    throw std::invalid_argument("projection count must be in [1, num_elements]");
  }
  if (n % k != 0) {
    throw std::invalid_argument("projection count " + std::to_string(k) +
                                " does not divide element count " + std::to_string(n));
  }
  const std::size_t stride = n / k;
  const std::size_t ns = sino.num_samples();
  std::vector<double> data(k * ns);
  for (std::size_t e = 0; e < k; ++e) {
    const auto src = sino.trace(e * stride);
    std::copy(src.begin(), src.end(), data.begin() + static_cast<std::ptrdiff_t>(e * ns));
  }
  return Sinogram(RingGeometry(sino.geometry().radius_m(), k), sino.medium(), sino.acquisition(),
                  std::move(data));
}

Point2 pixel_center(const ImageGrid& grid, std::size_t ix, std::size_t iy) {
  return grid.pixel_center(ix, iy);
}

}  // namespace pact
