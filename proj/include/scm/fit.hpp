#pragma once

// Damped least squares (Levenberg-Marquardt with Marquardt scaling). Residual
// callbacks return the weighted residual vector; Jacobians come from central
// finite differences.

#include <Eigen/Dense>
#include <functional>
#include <vector>

#include "scm/model.hpp"

namespace scm {

enum class FitStatus { Converged, IterationLimit, Degenerate };

struct FitOptions {
  int max_iterations = 200;
  double ftol = 1e-12;        // relative cost decrease
  double xtol = 1e-12;        // relative step size
  double initial_damping = 1e-3;
  double fd_step = 1e-6;      // relative central-difference step
};

struct FitResult {
  Eigen::VectorXd params;
  FitStatus status = FitStatus::IterationLimit;
  int iterations = 0;
  double cost = 0.0;  // sum of squared residuals
  std::vector<double> cost_history;
  Eigen::MatrixXd covariance;  // (JᵀJ)⁻¹ · cost/(n−p)
  Eigen::VectorXd stderrs;

  bool converged() const { return status == FitStatus::Converged; }
};

using ResidualFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;
using FeasibleFn = std::function<bool(const Eigen::VectorXd&)>;

// feasible() guards the finite-difference probes and trial steps; infeasible
// trial points are rejected like uphill ones.
FitResult fit_least_squares(const ResidualFn& residuals, const Eigen::VectorXd& init,
                            const FitOptions& opts = {}, const FeasibleFn& feasible = {});

}  // namespace scm
