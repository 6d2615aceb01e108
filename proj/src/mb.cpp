#include "pact/mb.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

namespace pact {

double tv_value(std::span<const double> h, std::size_t nx, std::size_t ny, double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("tv epsilon must be positive");
  double sum = 0.0;
  for (std::size_t iy = 0; iy < ny; ++iy) {
    for (std::size_t ix = 0; ix < nx; ++ix) {
      const std::size_t k = iy * nx + ix;
      const double dx = ix + 1 < nx ? h[k + 1] - h[k] : 0.0;
      const double dy = iy + 1 < ny ? h[k + nx] - h[k] : 0.0;
      sum += std::sqrt(dx * dx + dy * dy + eps * eps) - eps;
    }
  }
  return sum;
}

void tv_gradient(std::span<const double> h, std::size_t nx, std::size_t ny, double eps, std::span<double> g) {
  if (!(eps > 0.0)) throw std::invalid_argument("tv epsilon must be positive");
  std::fill(g.begin(), g.end(), 0.0);
  for (std::size_t iy = 0; iy < ny; ++iy) {
    for (std::size_t ix = 0; ix < nx; ++ix) {
      const std::size_t k = iy * nx + ix;
      const bool has_x = ix + 1 < nx;
      const bool has_y = iy + 1 < ny;
      const double dx = has_x ? h[k + 1] - h[k] : 0.0;
      const double dy = has_y ? h[k + nx] - h[k] : 0.0;
      const double inv = 1.0 / std::sqrt(dx * dx + dy * dy + eps * eps);
      if (has_x) {
        g[k + 1] += dx * inv;
        g[k] -= dx * inv;
      }
      if (has_y) {
        g[k + nx] += dy * inv;
        g[k] -= dy * inv;
      }
    }
  }
}

double tv_value(const HeatImage& img, double eps) {
  return tv_value(img.values(), img.grid().nx(), img.grid().ny(), eps);
}

HeatImage tv_gradient(const HeatImage& img, double eps) {
  HeatImage g(img.grid());
  tv_gradient(img.values(), img.grid().nx(), img.grid().ny(), eps, g.values());
  return g;
}

void MbConfig::validate() const {
  if (!(lambda >= 0.0)) throw std::invalid_argument("mb lambda must be >= 0");
  if (max_iters < 1) throw std::invalid_argument("mb max_iters must be >= 1");
  if (!(tv_epsilon > 0.0)) throw std::invalid_argument("mb tv_epsilon must be > 0");
  if (!(step >= 0.0)) throw std::invalid_argument("mb step must be >= 0");
  if (step_rule == StepRule::backtracking && !(backtrack_factor > 0.0 && backtrack_factor < 1.0)) {
    throw std::invalid_argument("mb backtrack_factor must be in (0, 1)");
  }
}

double operator_norm_squared(const ForwardOperator& op, std::size_t iterations, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> x(op.cols());
  for (double& v : x) v = u(rng);
  std::vector<double> y(op.rows());
  double estimate = 0.0;
  for (std::size_t it = 0; it < std::max<std::size_t>(iterations, 1); ++it) {
    double nx = 0.0;
    for (double v : x) nx += v * v;
    nx = std::sqrt(nx);
    if (nx == 0.0) return 0.0;
    for (double& v : x) v /= nx;
    op.apply(x, y);
    op.adjoint(y, x);
    estimate = 0.0;
    for (double v : x) estimate += v * v;
    estimate = std::sqrt(estimate);
  }
  return estimate;
}

namespace {

class Objective {
 public:
  Objective(const Sinogram& sino, const ForwardOperator& op, const MbConfig& cfg, double kappa)
      : op_(op), cfg_(cfg), kappa_(kappa), target_(sino.data().begin(), sino.data().end()),
        residual_(op.rows()), nx_(op.grid().nx()), ny_(op.grid().ny()) {
    for (double& v : target_) v *= kappa_;
  }

  /// Evaluates the objective at h; leaves the residual kappa*A h - target in place.
  MbIterate evaluate(std::span<const double> h) {
    op_.apply(h, residual_);
    double data = 0.0;
    for (std::size_t k = 0; k < residual_.size(); ++k) {
      residual_[k] = kappa_ * residual_[k] - target_[k];
      data += residual_[k] * residual_[k];
    }
    MbIterate it;
    it.data_term = data;
    it.tv_term = cfg_.lambda > 0.0 ? tv_value(h, nx_, ny_, cfg_.tv_epsilon) : 0.0;
    it.objective = data + cfg_.lambda * it.tv_term;
    if (!std::isfinite(it.objective)) throw std::runtime_error("mb objective became non-finite");
    return it;
  }

  /// Gradient at the point of the last evaluate call.
  void gradient(std::span<const double> h, std::span<double> g) {
    op_.adjoint(residual_, g);
    for (double& v : g) v *= 2.0 * kappa_;
    if (cfg_.lambda > 0.0) {
      tv_scratch_.resize(g.size());
      tv_gradient(h, nx_, ny_, cfg_.tv_epsilon, tv_scratch_);
      for (std::size_t k = 0; k < g.size(); ++k) g[k] += cfg_.lambda * tv_scratch_[k];
    }
  }

 private:
  const ForwardOperator& op_;
  const MbConfig& cfg_;
  double kappa_;
  std::vector<double> target_;
  std::vector<double> residual_;
  std::vector<double> tv_scratch_;
  std::size_t nx_;
  std::size_t ny_;
};

void require_consistent(const Sinogram& sino, const ForwardOperator& op) {
  if (!(sino.geometry() == op.geometry()) || !(sino.acquisition() == op.acquisition()) ||
      !(sino.medium() == op.medium())) {
    throw std::invalid_argument("sinogram does not match the forward operator");
  }
}

}  // namespace

MbResult mb_reconstruct(const Sinogram& sino, const ForwardOperator& op, const MbConfig& cfg) {
  cfg.validate();
  require_consistent(sino, op);
  const std::size_t n = op.cols();
  MbResult result{HeatImage(op.grid()), {}, true};
  const double peak = sino.max_abs();
  if (peak == 0.0) {
    result.history.push_back({});
    return result;
  }
  const double kappa = 1.0 / peak;

  double step = cfg.step;
  if (step == 0.0) {
    const double lipschitz = 2.0 * kappa * kappa * operator_norm_squared(op, cfg.power_iterations, cfg.seed);
    step = 1.0 / lipschitz;
  }

  Objective f(sino, op, cfg, kappa);
  std::vector<double> x(n, 0.0);
  std::vector<double> x_prev(n, 0.0);
  std::vector<double> y(n, 0.0);
  std::vector<double> g(n);
  std::vector<double> trial(n);
  MbIterate current = f.evaluate(x);
  result.history.push_back(current);
  const double initial_step = step;
  double momentum = 1.0;
  // True while the objective's cached residual belongs to x.
  bool residual_at_x = true;

  for (std::size_t iter = 1; iter <= cfg.max_iters; ++iter) {
    // Base point: extrapolated for FISTA, otherwise the current iterate.
    bool extrapolated = false;
    if (cfg.fista && iter > 1) {
      const double next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * momentum * momentum));
      const double beta = (momentum - 1.0) / next;
      momentum = next;
      for (std::size_t k = 0; k < n; ++k) y[k] = std::max(0.0, x[k] + beta * (x[k] - x_prev[k]));
      extrapolated = beta > 0.0;
    }
    if (!extrapolated) y = x;

    MbIterate base = current;
    if (extrapolated || !residual_at_x) base = f.evaluate(y);
    f.gradient(y, g);

    MbIterate accepted;
    bool found = false;
    double tau = step;
    const std::size_t attempts = cfg.step_rule == StepRule::backtracking ? cfg.max_backtracks + 1 : 1;
    for (std::size_t a = 0; a < attempts; ++a) {
      double decrease = 0.0;
      for (std::size_t k = 0; k < n; ++k) {
        trial[k] = std::max(0.0, y[k] - tau * g[k]);
        decrease += g[k] * (trial[k] - y[k]);
      }
      accepted = f.evaluate(trial);
      if (cfg.step_rule == StepRule::fixed) {
        found = true;
        break;
      }
      if (accepted.objective <= base.objective + cfg.armijo * decrease && accepted.objective <= current.objective) {
        found = true;
        break;
      }
      tau *= cfg.backtrack_factor;
    }
    if (!found && extrapolated) {
      // Momentum restart from the current iterate.
      momentum = 1.0;
      y = x;
      base = f.evaluate(x);
      f.gradient(x, g);
      tau = step;
      for (std::size_t a = 0; a < attempts && !found; ++a) {
        double decrease = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
          trial[k] = std::max(0.0, x[k] - tau * g[k]);
          decrease += g[k] * (trial[k] - x[k]);
        }
        accepted = f.evaluate(trial);
        found = accepted.objective <= base.objective + cfg.armijo * decrease;
        if (!found) tau *= cfg.backtrack_factor;
      }
    }
    residual_at_x = found;
    if (!found) {
      result.converged_line_search = false;
      current.iter = iter;
      current.step = 0.0;
      result.history.push_back(current);
      continue;
    }
    x_prev = x;
    x = trial;
    accepted.iter = iter;
    accepted.step = tau;
    current = accepted;
    result.history.push_back(current);
    if (cfg.step_rule == StepRule::backtracking) step = std::min(initial_step, tau / cfg.backtrack_factor);
  }
  std::copy(x.begin(), x.end(), result.image.values().begin());
  return result;
}

}  // namespace pact
