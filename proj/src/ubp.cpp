#include "pact/ubp.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "pact/parallel.hpp"

namespace pact {

namespace {

/// Central differences of each trace, one-sided at both ends, in units of 1/s.
std::vector<double> time_derivative(const Sinogram& sino) {
  const std::size_t ns = sino.num_samples();
  const double inv_dt = sino.acquisition().sample_rate_hz;
  std::vector<double> d(sino.data().size());
  for (std::size_t e = 0; e < sino.num_elements(); ++e) {
    const auto p = sino.trace(e);
    double* out = d.data() + e * ns;
    out[0] = (p[1] - p[0]) * inv_dt;
    out[ns - 1] = (p[ns - 1] - p[ns - 2]) * inv_dt;
    for (std::size_t i = 1; i + 1 < ns; ++i) out[i] = 0.5 * (p[i + 1] - p[i - 1]) * inv_dt;
  }
  return d;
}

class BackProjector {
 public:
  BackProjector(const Sinogram& sino, const Medium& medium, const UbpConfig& config)
      : sino_(sino), derivative_(time_derivative(sino)), sos_(medium.sos_mps) {
    const auto& g = sino.geometry();
    const double element_area =
        2.0 * std::numbers::pi * g.radius_m() * config.element_height_m / static_cast<double>(g.num_elements());
    scale_ = element_area / config.solid_angle;
  }

  double operator()(Point2 r) const {
    const auto& g = sino_.geometry();
    const auto& acq = sino_.acquisition();
    const std::size_t ns = sino_.num_samples();
    double sum = 0.0;
    for (std::size_t e = 0; e < g.num_elements(); ++e) {
      const Point2 d = g.element_position(e) - r;
      const double dist = norm(d);
      if (dist == 0.0) continue;
      const double t = dist / sos_;
      const double f = (t - acq.t_start_s) * acq.sample_rate_hz;
      if (!(f >= 0.0) || f > static_cast<double>(ns - 1)) continue;
      const auto i0 = std::min(static_cast<std::size_t>(f), ns - 2);
      const double w = f - static_cast<double>(i0);
      const auto p = sino_.trace(e);
      const double* dp = derivative_.data() + e * ns;
      const double pv = (1.0 - w) * p[i0] + w * p[i0 + 1];
      const double dv = (1.0 - w) * dp[i0] + w * dp[i0 + 1];
      const double b = 2.0 * pv - 2.0 * t * dv;
      const Point2 n = g.inward_normal(e);
      // Unit vector from the point to the element, against the inward normal.
      const double cos_theta = -(d.x * n.x + d.y * n.y) / dist;
      sum += b * cos_theta / (dist * dist);
    }
    return scale_ * sum;
  }

 private:
  const Sinogram& sino_;
  std::vector<double> derivative_;
  double sos_;
  double scale_ = 0.0;
};

void check_inputs(const Sinogram& sino, const Medium& medium, const UbpConfig& config) {
  config.validate();
  medium.validate();
  if (sino.num_samples() < 3) throw std::invalid_argument("ubp needs at least 3 samples per trace");
}

}  // namespace

void UbpConfig::validate() const {
  if (!(solid_angle > 0.0)) throw std::invalid_argument("ubp solid angle must be positive");
  if (!(element_height_m > 0.0)) throw std::invalid_argument("ubp element height must be positive");
}

HeatImage ubp_reconstruct(const Sinogram& sino, const ImageGrid& grid, const Medium& medium,
                          const UbpConfig& config) {
  check_inputs(sino, medium, config);
  const BackProjector bp(sino, medium, config);
  HeatImage img(grid);
  auto values = img.values();
  parallel_for(
      grid.ny(),
      [&](std::size_t iy) {
        for (std::size_t ix = 0; ix < grid.nx(); ++ix) {
          double v = bp(grid.pixel_center(ix, iy));
          if (config.clamp_negatives) v = std::max(v, 0.0);
          values[grid.index(ix, iy)] = v;
        }
      },
      config.workers);
  return img;
}

double ubp_value(const Sinogram& sino, Point2 point, const Medium& medium, const UbpConfig& config) {
  check_inputs(sino, medium, config);
  return BackProjector(sino, medium, config)(point);
}

}  // namespace pact
