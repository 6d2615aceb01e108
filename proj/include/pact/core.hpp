#pragma once

// Domain types shared by every reconstruction path: ring geometry, medium,
// acquisition window, image grid and the two data containers (sinogram and
// heat image).  All types are plain values and immutable once validated.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace pact {

struct Point2 {
  double x = 0.0;
  double y = 0.0;

  bool operator==(const Point2&) const = default;
};

inline Point2 operator+(Point2 a, Point2 b) { return {a.x + b.x, a.y + b.y}; }
inline Point2 operator-(Point2 a, Point2 b) { return {a.x - b.x, a.y - b.y}; }
inline Point2 operator*(double s, Point2 a) { return {s * a.x, s * a.y}; }
double norm(Point2 p);

/// Uniform ring of transducer elements centred on the origin.  Element i sits
/// at angle 2*pi*i/num_elements.
class RingGeometry {
 public:
  RingGeometry() = default;
  RingGeometry(double radius_m, std::size_t num_elements);

  double radius_m() const { return radius_m_; }
  std::size_t num_elements() const { return num_elements_; }
  double element_angle(std::size_t i) const;
  Point2 element_position(std::size_t i) const;
  /// Unit vector pointing from the element towards the ring centre.
  Point2 inward_normal(std::size_t i) const;

  bool operator==(const RingGeometry&) const = default;

 private:
  double radius_m_ = 0.04;
  std::size_t num_elements_ = 1;
};

struct Medium {
  double sos_mps = 1500.0;
  double grueneisen = 1.0;

  void validate() const;
  bool operator==(const Medium&) const = default;
};

struct Acquisition {
  double sample_rate_hz = 20e6;
  std::size_t num_samples = 1024;
  double t_start_s = 0.0;

  void validate() const;
  double dt() const { return 1.0 / sample_rate_hz; }
  double time(std::size_t i) const { return t_start_s + static_cast<double>(i) * dt(); }
  bool operator==(const Acquisition&) const = default;
};

/// Square-pixel grid centred on `center`.  Row-major storage with ix fastest;
/// iy grows with +y.
class ImageGrid {
 public:
  ImageGrid() = default;
  ImageGrid(std::size_t nx, std::size_t ny, double pixel_size_m, Point2 center = {});

  std::size_t nx() const { return nx_; }
  std::size_t ny() const { return ny_; }
  std::size_t size() const { return nx_ * ny_; }
  double pixel_size_m() const { return pixel_size_m_; }
  Point2 center() const { return center_; }

  /// Half-diagonal of the physical (pixel-edge) extent.
  double roi_radius_m() const;
  /// Physical half extents measured to the outer pixel edges.
  double half_width_m() const { return 0.5 * static_cast<double>(nx_) * pixel_size_m_; }
  double half_height_m() const { return 0.5 * static_cast<double>(ny_) * pixel_size_m_; }

  Point2 pixel_center(std::size_t ix, std::size_t iy) const;
  /// Continuous pixel coordinates of a physical point: pixel centres land on
  /// integers.
  Point2 to_pixel_coords(Point2 p) const;
  std::size_t index(std::size_t ix, std::size_t iy) const { return iy * nx_ + ix; }

  bool operator==(const ImageGrid&) const = default;

 private:
  std::size_t nx_ = 1;
  std::size_t ny_ = 1;
  double pixel_size_m_ = 1e-4;
  Point2 center_{};
};

/// Throws std::invalid_argument unless every grid corner lies strictly inside
/// the ring.
void require_grid_inside_ring(const ImageGrid& grid, const RingGeometry& geometry);

class Sinogram {
 public:
  Sinogram() = default;
  Sinogram(RingGeometry geometry, Medium medium, Acquisition acquisition);
  Sinogram(RingGeometry geometry, Medium medium, Acquisition acquisition, std::vector<double> data);

  const RingGeometry& geometry() const { return geometry_; }
  const Medium& medium() const { return medium_; }
  const Acquisition& acquisition() const { return acquisition_; }
  std::size_t num_elements() const { return geometry_.num_elements(); }
  std::size_t num_samples() const { return acquisition_.num_samples; }

  std::span<const double> trace(std::size_t element) const;
  std::span<double> trace(std::size_t element);
  std::span<const double> data() const { return data_; }
  std::span<double> data() { return data_; }

  double& at(std::size_t element, std::size_t sample) { return data_[element * num_samples() + sample]; }
  double at(std::size_t element, std::size_t sample) const { return data_[element * num_samples() + sample]; }

  double max_abs() const;

 private:
  RingGeometry geometry_;
  Medium medium_;
  Acquisition acquisition_;
  std::vector<double> data_;
};

class HeatImage {
 public:
  HeatImage() = default;
  explicit HeatImage(ImageGrid grid, double fill = 0.0);
  HeatImage(ImageGrid grid, std::vector<double> values);

  const ImageGrid& grid() const { return grid_; }
  std::span<const double> values() const { return values_; }
  std::span<double> values() { return values_; }
  double& at(std::size_t ix, std::size_t iy) { return values_[grid_.index(ix, iy)]; }
  double at(std::size_t ix, std::size_t iy) const { return values_[grid_.index(ix, iy)]; }

  double max() const;
  double min() const;

 private:
  ImageGrid grid_;
  std::vector<double> values_;
};

/// Keeps k equally spaced elements starting with element 0.
Sinogram subsample_projections(const Sinogram& sino, std::size_t k);

Point2 pixel_center(const ImageGrid& grid, std::size_t ix, std::size_t iy);

}  // namespace pact
