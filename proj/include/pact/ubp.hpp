#pragma once

#include <numbers>

#include "pact/core.hpp"

namespace pact {

struct UbpConfig {
  bool clamp_negatives = true;
  /// Solid angle subtended by the detection surface.
  double solid_angle = 4.0 * std::numbers::pi;
  /// Nominal elevation of an element; the element area is arc length times this.
  double element_height_m = 1.0;
  std::size_t workers = 0;

  void validate() const;
};

/// Universal back-projection of `sino` onto the pixel centres of `grid`.
HeatImage ubp_reconstruct(const Sinogram& sino, const ImageGrid& grid, const Medium& medium,
                          const UbpConfig& config = {});

/// Back-projected value at a single point, without clamping.
double ubp_value(const Sinogram& sino, Point2 point, const Medium& medium, const UbpConfig& config = {});

}  // namespace pact
