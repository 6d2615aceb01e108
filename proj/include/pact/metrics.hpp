#pragma once

#include <cstddef>
#include <vector>

#include "pact/core.hpp"

namespace pact {

struct SsimOptions {
  /// Use C1 = 0.01, C2 = 0.03 as written instead of (K L)^2.
  bool raw_constants = false;
  /// Mean of 11x11 Gaussian-windowed SSIM (sigma 1.5) instead of one global window.
  bool gaussian_window = false;
  double dynamic_range = 1.0;
};

double ssim(const HeatImage& f, const HeatImage& gt, const SsimOptions& options = {});

/// 10 log10(I_max^2 / MSE) with I_max the maximum over both images; +inf when
/// the images are identical.
double psnr(const HeatImage& f, const HeatImage& gt);

/// Linear map onto [0, 1]; a constant image maps to zeros.
HeatImage normalize_min_max(const HeatImage& img);

struct FidelityScores {
  double ssim = 0.0;
  double psnr_db = 0.0;
};
/// SSIM and PSNR after min-max normalizing both images.
FidelityScores compare_to_ground_truth(const HeatImage& f, const HeatImage& gt, const SsimOptions& options = {});

struct PixelRect {
  std::size_t x0 = 0;
  std::size_t y0 = 0;
  std::size_t width = 0;
  std::size_t height = 0;

  std::size_t area() const { return width * height; }
  bool overlaps(const PixelRect& o) const;
};

struct RegionSpec {
  PixelRect signal;
  PixelRect background;

  void validate(const ImageGrid& grid) const;
};

struct RegionRatio {
  double db = 0.0;
  /// Set when the signal mean is negative; db is then computed from its magnitude.
  bool negative_signal = false;
};

/// 20 log10(mean(signal) / std(background)); population standard deviation.
RegionRatio snr(const HeatImage& img, const RegionSpec& regions);
/// 20 log10(|mean(signal) - mean(background)| / std(background)).
double cnr(const HeatImage& img, const RegionSpec& regions);

/// Square (Chebyshev) dilation of a boolean mask.
std::vector<bool> dilate(const std::vector<bool>& mask, std::size_t nx, std::size_t ny, std::size_t radius);

/// Share of sum(img^2) lying outside the dilated support of `truth`.
double background_energy_fraction(const HeatImage& img, const HeatImage& truth, std::size_t dilation = 2);

}  // namespace pact
