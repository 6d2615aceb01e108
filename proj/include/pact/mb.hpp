#pragma once

#include <cstdint>
#include <vector>

#include "pact/core.hpp"
#include "pact/forward.hpp"

namespace pact {

/// sum over pixels of sqrt(dx^2 + dy^2 + eps^2) - eps with forward differences
/// and replicated boundary.
double tv_value(const HeatImage& img, double eps);
HeatImage tv_gradient(const HeatImage& img, double eps);

/// Raw-span forms used by the solvers; `grad` is overwritten.
double tv_value(std::span<const double> values, std::size_t nx, std::size_t ny, double eps);
void tv_gradient(std::span<const double> values, std::size_t nx, std::size_t ny, double eps,
                 std::span<double> grad);

enum class StepRule { fixed, backtracking };

struct MbConfig {
  double lambda = 0.01;
  std::size_t max_iters = 50;
  double tv_epsilon = 1e-6;
  StepRule step_rule = StepRule::backtracking;
  /// Fixed step, or the first trial step of the line search.  0 picks
  /// 1/L with L the data-term Lipschitz constant from power iteration.
  double step = 0.0;
  double backtrack_factor = 0.5;
  double armijo = 1e-4;
  std::size_t max_backtracks = 40;
  bool fista = false;
  std::size_t power_iterations = 30;
  std::uint64_t seed = 1;

  void validate() const;
};

struct MbIterate {
  std::size_t iter = 0;
  double data_term = 0.0;
  double tv_term = 0.0;
  double objective = 0.0;
  double step = 0.0;
};

struct MbResult {
  HeatImage image;
  /// Entry 0 is the starting point H = 0.
  std::vector<MbIterate> history;
  /// False when the line search could not find a decreasing step.
  bool converged_line_search = true;
};

/// Largest eigenvalue of A^T A by power iteration.
double operator_norm_squared(const ForwardOperator& op, std::size_t iterations, std::uint64_t seed);

/// Projected gradient for min_{H >= 0} ||p/s - A H / s||^2 + lambda TV(H),
/// s = max |p|.  H stays in the units of the heat image that produced p.
MbResult mb_reconstruct(const Sinogram& sino, const ForwardOperator& op, const MbConfig& config = {});

}  // namespace pact
