#include "pact/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace pact {

namespace {

void require_same_shape(const HeatImage& a, const HeatImage& b) {
  if (a.grid().nx() != b.grid().nx() || a.grid().ny() != b.grid().ny()) {
    throw std::invalid_argument("metric inputs differ in shape");
  }
}

struct Moments {
  double mean_f = 0.0;
  double mean_g = 0.0;
  double var_f = 0.0;
  double var_g = 0.0;
  double cov = 0.0;
};

double ssim_from(const Moments& m, double c1, double c2) {
  return ((2.0 * (m.mean_f * m.mean_g) + c1) * (2.0 * m.cov + c2)) /
         ((m.mean_f * m.mean_f + m.mean_g * m.mean_g + c1) * (m.var_f + m.var_g + c2));
}

double global_ssim(std::span<const double> f, std::span<const double> g, double c1, double c2) {
  const auto n = static_cast<double>(f.size());
  Moments m;
  for (std::size_t k = 0; k < f.size(); ++k) {
    m.mean_f += f[k];
    m.mean_g += g[k];
  }
  m.mean_f /= n;
  m.mean_g /= n;
  for (std::size_t k = 0; k < f.size(); ++k) {
    const double a = f[k] - m.mean_f;
    const double b = g[k] - m.mean_g;
    m.var_f += a * a;
    m.var_g += b * b;
    m.cov += a * b;
  }
  m.var_f /= n;
  m.var_g /= n;
  m.cov /= n;
  return ssim_from(m, c1, c2);
}

double windowed_ssim(const HeatImage& f, const HeatImage& g, double c1, double c2) {
  constexpr int kSize = 11;
  constexpr double kSigma = 1.5;
  const std::size_t nx = f.grid().nx();
  const std::size_t ny = f.grid().ny();
  if (nx < kSize || ny < kSize) throw std::invalid_argument("windowed ssim needs images of at least 11x11");
  double w[kSize][kSize];
  double total = 0.0;
  for (int j = 0; j < kSize; ++j) {
    for (int i = 0; i < kSize; ++i) {
      const double dx = i - kSize / 2;
      const double dy = j - kSize / 2;
      w[j][i] = std::exp(-(dx * dx + dy * dy) / (2.0 * kSigma * kSigma));
      total += w[j][i];
    }
  }
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t y0 = 0; y0 + kSize <= ny; ++y0) {
    for (std::size_t x0 = 0; x0 + kSize <= nx; ++x0) {
      Moments m;
      for (int j = 0; j < kSize; ++j) {
        for (int i = 0; i < kSize; ++i) {
          const double wt = w[j][i] / total;
          m.mean_f += wt * f.at(x0 + i, y0 + j);
          m.mean_g += wt * g.at(x0 + i, y0 + j);
        }
      }
      for (int j = 0; j < kSize; ++j) {
        for (int i = 0; i < kSize; ++i) {
          const double wt = w[j][i] / total;
          const double a = f.at(x0 + i, y0 + j) - m.mean_f;
          const double b = g.at(x0 + i, y0 + j) - m.mean_g;
          m.var_f += wt * a * a;
          m.var_g += wt * b * b;
          m.cov += wt * a * b;
        }
      }
      sum += ssim_from(m, c1, c2);
      ++count;
    }
  }
  return sum / static_cast<double>(count);
}

struct RegionStats {
  double mean = 0.0;
  double stddev = 0.0;
};

RegionStats stats(const HeatImage& img, const PixelRect& r) {
  double sum = 0.0;
  for (std::size_t y = r.y0; y < r.y0 + r.height; ++y) {
    for (std::size_t x = r.x0; x < r.x0 + r.width; ++x) sum += img.at(x, y);
  }
  const auto n = static_cast<double>(r.area());
  RegionStats s;
  s.mean = sum / n;
  double var = 0.0;
  for (std::size_t y = r.y0; y < r.y0 + r.height; ++y) {
    for (std::size_t x = r.x0; x < r.x0 + r.width; ++x) {
      const double d = img.at(x, y) - s.mean;
      var += d * d;
    }
  }
  s.stddev = std::sqrt(var / n);
  return s;
}

}  // namespace

double ssim(const HeatImage& f, const HeatImage& gt, const SsimOptions& options) {
  require_same_shape(f, gt);
  const double l = options.dynamic_range;
  const double c1 = options.raw_constants ? 0.01 : (0.01 * l) * (0.01 * l);
  const double c2 = options.raw_constants ? 0.03 : (0.03 * l) * (0.03 * l);
  if (options.gaussian_window) return windowed_ssim(f, gt, c1, c2);
  return global_ssim(f.values(), gt.values(), c1, c2);
}

double psnr(const HeatImage& f, const HeatImage& gt) {
  require_same_shape(f, gt);
  double mse = 0.0;
  for (std::size_t k = 0; k < f.values().size(); ++k) {
    const double d = f.values()[k] - gt.values()[k];
    mse += d * d;
  }
  mse /= static_cast<double>(f.values().size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  const double peak = std::max(f.max(), gt.max());
  return 10.0 * std::log10(peak * peak / mse);
}

HeatImage normalize_min_max(const HeatImage& img) {
  const double lo = img.min();
  const double range = img.max() - lo;
  HeatImage out(img.grid());
  if (range == 0.0) return out;
  for (std::size_t k = 0; k < out.values().size(); ++k) out.values()[k] = (img.values()[k] - lo) / range;
  return out;
}

FidelityScores compare_to_ground_truth(const HeatImage& f, const HeatImage& gt, const SsimOptions& options) {
  const auto a = normalize_min_max(f);
  const auto b = normalize_min_max(gt);
  return {ssim(a, b, options), psnr(a, b)};
}

bool PixelRect::overlaps(const PixelRect& o) const {
  return x0 < o.x0 + o.width && o.x0 < x0 + width && y0 < o.y0 + o.height && o.y0 < y0 + height;
}

void RegionSpec::validate(const ImageGrid& grid) const {
  for (const PixelRect* r : {&signal, &background}) {
    if (r->area() < 4) throw std::invalid_argument("metric regions need at least 4 pixels");
    if (r->x0 + r->width > grid.nx() || r->y0 + r->height > grid.ny()) {
      throw std::invalid_argument("metric region exceeds the image");
    }
  }
  if (signal.overlaps(background)) throw std::invalid_argument("signal and background regions overlap");
}

RegionRatio snr(const HeatImage& img, const RegionSpec& regions) {
  regions.validate(img.grid());
  const auto s = stats(img, regions.signal);
  const auto b = stats(img, regions.background);
  RegionRatio r;
  r.negative_signal = s.mean < 0.0;
  if (b.stddev == 0.0) {
    r.db = std::numeric_limits<double>::infinity();
  } else {
    r.db = 20.0 * std::log10(std::abs(s.mean) / b.stddev);
  }
  return r;
}

double cnr(const HeatImage& img, const RegionSpec& regions) {
  regions.validate(img.grid());
  const auto s = stats(img, regions.signal);
  const auto b = stats(img, regions.background);
  if (s.mean == b.mean) return -std::numeric_limits<double>::infinity();
  if (b.stddev == 0.0) return std::numeric_limits<double>::infinity();
  return 20.0 * std::log10(std::abs(s.mean - b.mean) / b.stddev);
}

std::vector<bool> dilate(const std::vector<bool>& mask, std::size_t nx, std::size_t ny, std::size_t radius) {
  if (mask.size() != nx * ny) throw std::invalid_argument("mask size does not match dimensions");
  std::vector<bool> out(mask.size(), false);
  const long r = static_cast<long>(radius);
  for (long y = 0; y < static_cast<long>(ny); ++y) {
    for (long x = 0; x < static_cast<long>(nx); ++x) {
      if (!mask[static_cast<std::size_t>(y) * nx + static_cast<std::size_t>(x)]) continue;
      for (long yy = std::max(0L, y - r); yy <= std::min<long>(static_cast<long>(ny) - 1, y + r); ++yy) {
        for (long xx = std::max(0L, x - r); xx <= std::min<long>(static_cast<long>(nx) - 1, x + r); ++xx) {
          out[static_cast<std::size_t>(yy) * nx + static_cast<std::size_t>(xx)] = true;
        }
      }
    }
  }
  return out;
}

double background_energy_fraction(const HeatImage& img, const HeatImage& truth, std::size_t dilation) {
  require_same_shape(img, truth);
  std::vector<bool> support(truth.values().size());
  for (std::size_t k = 0; k < support.size(); ++k) support[k] = truth.values()[k] > 0.0;
  const auto near = dilate(support, truth.grid().nx(), truth.grid().ny(), dilation);
  double total = 0.0;
  double outside = 0.0;
  for (std::size_t k = 0; k < near.size(); ++k) {
    const double e = img.values()[k] * img.values()[k];
    total += e;
    if (!near[k]) outside += e;
  }
  return total > 0.0 ? outside / total : 0.0;
}

}  // namespace pact
