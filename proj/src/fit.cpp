#include "scm/fit.hpp"

#include <cmath>

namespace scm {

namespace {

Eigen::MatrixXd central_jacobian(const ResidualFn& f, const Eigen::VectorXd& p,
                                 Eigen::Index n_resid, double rel_step,
                                 const FeasibleFn& feasible) {
  const Eigen::Index np = p.size();
  Eigen::MatrixXd jac(n_resid, np);
  for (Eigen::Index j = 0; j < np; ++j) {
    const double h = rel_step * std::max(std::abs(p[j]), 1.0);
    Eigen::VectorXd hi = p, lo = p;
    hi[j] += h;
    lo[j] -= h;
    if (feasible && (!feasible(hi) || !feasible(lo))) {
      // one-sided fallback at a feasibility boundary
      if (feasible(hi)) {
        jac.col(j) = (f(hi) - f(p)) / h;
      } else if (feasible(lo)) {
        jac.col(j) = (f(p) - f(lo)) / h;
      } else {
        jac.col(j).setZero();
      }
      continue;
    }
    jac.col(j) = (f(hi) - f(lo)) / (2.0 * h);
  }
  return jac;
}

}  // namespace

FitResult fit_least_squares(const ResidualFn& residuals, const Eigen::VectorXd& init,
                            const FitOptions& opts, const FeasibleFn& feasible) {
  if (feasible && !feasible(init))
    throw Error(ErrorKind::InvalidRequest, "initial guess is infeasible");

  FitResult out;
  out.params = init;
  Eigen::VectorXd r = residuals(init);
  if (!r.allFinite())
    throw Error(ErrorKind::InvalidRequest, "residuals not finite at initial guess");
  double cost = r.squaredNorm();
  out.cost_history.push_back(cost);

  const Eigen::Index np = init.size();
  double damping = opts.initial_damping;
  Eigen::MatrixXd jac = central_jacobian(residuals, out.params, r.size(), opts.fd_step, feasible);

  auto finish = [&](FitStatus status) {
    out.status = status;
    out.cost = cost;
    // Gauss-Newton covariance with diag regularization only if needed
    Eigen::MatrixXd jtj = jac.transpose() * jac;
    const Eigen::Index dof = r.size() - np;
    Eigen::FullPivLU<Eigen::MatrixXd> lu(jtj);
    if (dof > 0 && lu.isInvertible()) {
      out.covariance = lu.inverse() * (cost / static_cast<double>(dof));
      out.stderrs = out.covariance.diagonal().cwiseMax(0.0).cwiseSqrt();
    } else {
      out.covariance = Eigen::MatrixXd::Constant(np, np, std::nan(""));
      out.stderrs = Eigen::VectorXd::Constant(np, std::nan(""));
    }
    return out;
  };

  for (int it = 0; it < opts.max_iterations; ++it) {
    out.iterations = it + 1;
    Eigen::MatrixXd jtj = jac.transpose() * jac;
    const Eigen::VectorXd jtr = jac.transpose() * r;

    if (jtj.diagonal().maxCoeff() <= 0.0) return finish(FitStatus::Degenerate);

    bool stepped = false;
    for (int attempt = 0; attempt < 40 && !stepped; ++attempt) {
      Eigen::MatrixXd a = jtj;
      a.diagonal() += damping * jtj.diagonal().cwiseMax(1e-30);
      Eigen::LDLT<Eigen::MatrixXd> solver(a);
      if (solver.info() != Eigen::Success) return finish(FitStatus::Degenerate);
      const Eigen::VectorXd step = solver.solve(-jtr);
      if (!step.allFinite()) return finish(FitStatus::Degenerate);

      const Eigen::VectorXd trial = out.params + step;
      bool ok = !feasible || feasible(trial);
      Eigen::VectorXd r_trial;
      double cost_trial = 0.0;
      if (ok) {
        r_trial = residuals(trial);
        ok = r_trial.allFinite();
        if (ok) cost_trial = r_trial.squaredNorm();
      }
      if (ok && cost_trial <= cost) {
        const double drop = cost - cost_trial;
        const double step_size = step.norm();
        const double param_size = out.params.norm();
        out.params = trial;
        r = r_trial;
        cost = cost_trial;
        out.cost_history.push_back(cost);
        damping = std::max(damping * 0.25, 1e-14);
        stepped = true;
        if (drop <= opts.ftol * std::max(cost, 1e-300) ||
            step_size <= opts.xtol * std::max(param_size, 1.0)) {
          jac = central_jacobian(residuals, out.params, r.size(), opts.fd_step, feasible);
          return finish(FitStatus::Converged);
        }
      } else {
        damping *= 8.0;
        if (damping > 1e14) return finish(FitStatus::Degenerate);
      }
    }
    if (!stepped) return finish(FitStatus::Degenerate);
    jac = central_jacobian(residuals, out.params, r.size(), opts.fd_step, feasible);
  }
  return finish(FitStatus::IterationLimit);
}

}  // namespace scm
