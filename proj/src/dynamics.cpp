#include "scm/dynamics.hpp"

#include <cmath>

namespace scm {

namespace {

constexpr Complex kImag{0.0, 1.0};

void require_time_grid(const Eigen::ArrayXd& t) {
  if (t.size() < 1) throw Error(ErrorKind::NonMonotonicGrid, "empty time grid");
  if (t[0] < 0.0) throw Error(ErrorKind::NonMonotonicGrid, "time grid starts before 0");
  for (Eigen::Index i = 1; i < t.size(); ++i)
    if (!(t[i] > t[i - 1]))
      throw Error(ErrorKind::NonMonotonicGrid, "time grid must strictly increase");
}

}  // namespace

EigenRates eigenrates(const CoupledSystemParams& params) {
  validate(params);
  EigenRates r;
  r.c1 = -kImag * params.detuning / 2.0 - params.kappa / 2.0;
  r.c2 = kImag * params.detuning / 2.0 - params.gamma / 2.0 - params.gamma_d;
  const Complex diff = r.c1 - r.c2;
  r.d = std::sqrt(diff * diff - 4.0 * params.g * params.g);
  if (r.d.real() < 0.0 || (r.d.real() == 0.0 && r.d.imag() < 0.0)) r.d = -r.d;
  r.lambda_plus = (r.c1 + r.c2 + r.d) / 2.0;
  r.lambda_minus = (r.c1 + r.c2 - r.d) / 2.0;
  return r;
}

AmplitudeTrajectory amplitude_trajectory(const CoupledSystemParams& params,
                                         const Eigen::ArrayXd& t_grid) {
  require_time_grid(t_grid);
  const EigenRates r = eigenrates(params);

  AmplitudeTrajectory out;
  out.t = t_grid;
  out.a.resize(t_grid.size());
  out.sigma.resize(t_grid.size());

  const double t_max = t_grid[t_grid.size() - 1];
  const bool degenerate = std::abs(r.d) * std::max(t_max, 1.0) < 1e-8;
  const Complex lam_mean = (r.c1 + r.c2) / 2.0;
  const Complex cdiff = r.c1 - r.c2;

  for (Eigen::Index i = 0; i < t_grid.size(); ++i) {
    const double t = t_grid[i];
    if (degenerate) {
      const Complex env = std::exp(lam_mean * t);
      out.a[i] = params.g * t * env;
      out.sigma[i] = env * (1.0 - cdiff * t / 2.0);
    } else {
      const Complex ep = std::exp(r.lambda_plus * t);
      const Complex em = std::exp(r.lambda_minus * t);
      out.a[i] = params.g * (ep - em) / r.d;
      out.sigma[i] = (cdiff * (em - ep) + r.d * (em + ep)) / (2.0 * r.d);
    }
  }
  return out;
}

Eigen::Matrix3cd op_a() {
  Eigen::Matrix3cd m = Eigen::Matrix3cd::Zero();
  m(2, 1) = 1.0;  // |g,0><g,1|
  return m;
}

Eigen::Matrix3cd op_sigma() {
  Eigen::Matrix3cd m = Eigen::Matrix3cd::Zero();
  m(2, 0) = 1.0;  // |g,0><e,0|
  return m;
}

Eigen::Matrix3cd op_sigma_z() {
  return Eigen::Vector3cd(1.0, -1.0, -1.0).asDiagonal();
}

// The printed Hamiltonian's diagonal is fixed up so that both Maxwell-Bloch
// rates carry detuning/2, matching the closed-form c1, c2; only energy
// differences against |g,0> are observable in this subspace.
Eigen::Matrix3cd hamiltonian(const CoupledSystemParams& params) {
  Eigen::Matrix3cd h = Eigen::Matrix3cd::Zero();
  h(0, 0) = -params.detuning / 2.0;
  h(1, 1) = params.detuning / 2.0;
  h(1, 0) = kImag * params.g;  // ig(sigma a† - a sigma†)
  h(0, 1) = -kImag * params.g;
  return h;
}

Complex expectation_a(const DensityMatrix& rho) { return rho(1, 2); }

Complex expectation_sigma(const DensityMatrix& rho) { return rho(0, 2); }

void check_density_matrix(const DensityMatrix& rho, double tol) {
  if (!rho.allFinite()) throw Error(ErrorKind::InvalidRequest, "density matrix not finite");
  const double herm = (rho - rho.adjoint()).cwiseAbs().maxCoeff();
  if (herm > tol)
    throw Error(ErrorKind::InvalidRequest,
                "density matrix not hermitian (deviation " + std::to_string(herm) + ")");
  const double tr = std::abs(rho.trace() - 1.0);
  if (tr > tol)
    throw Error(ErrorKind::InvalidRequest,
                "density matrix trace != 1 (deviation " + std::to_string(tr) + ")");
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3cd> eig((rho + rho.adjoint()) / 2.0);
  if (eig.eigenvalues().minCoeff() < -tol)
    throw Error(ErrorKind::InvalidRequest, "density matrix not positive semidefinite");
}

namespace {

struct LindbladRhs {
  Eigen::Matrix3cd h;
  double kappa, gamma, gamma_d;

  Eigen::Matrix3cd operator()(const Eigen::Matrix3cd& rho) const {
    Eigen::Matrix3cd out = -kImag * (h * rho - rho * h);
    // kappa D[a]: a = E(2,1)
    out(2, 2) += kappa * rho(1, 1);
    out.row(1) -= (kappa / 2.0) * rho.row(1);
    out.col(1) -= (kappa / 2.0) * rho.col(1);
    // gamma D[sigma]: sigma = E(2,0)
    out(2, 2) += gamma * rho(0, 0);
    out.row(0) -= (gamma / 2.0) * rho.row(0);
    out.col(0) -= (gamma / 2.0) * rho.col(0);
    // (gamma_d/2)(sigma_z rho sigma_z - rho): kills only row/col 0 vs {1,2}
    out(0, 1) -= gamma_d * rho(0, 1);
    out(1, 0) -= gamma_d * rho(1, 0);
    out(0, 2) -= gamma_d * rho(0, 2);
    out(2, 0) -= gamma_d * rho(2, 0);
    return out;
  }
};

double error_norm(const Eigen::Matrix3cd& err, const Eigen::Matrix3cd& y0,
                  const Eigen::Matrix3cd& y1, double rtol, double atol) {
  double worst = 0.0;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) {
      const double scale = atol + rtol * std::max(std::abs(y0(r, c)), std::abs(y1(r, c)));
      worst = std::max(worst, std::abs(err(r, c)) / scale);
    }
  return worst;
}

}  // namespace

std::vector<DensityMatrix> lindblad_evolve(const CoupledSystemParams& params,
                                           const DensityMatrix& rho0, const Eigen::ArrayXd& t_grid,
                                           const LindbladOptions& opts) {
  require_time_grid(t_grid);
  validate(params);
  check_density_matrix(rho0);

  const LindbladRhs rhs{hamiltonian(params), params.kappa, params.gamma, params.gamma_d};

  // Dormand-Prince 5(4) with FSAL
  static const double a21 = 1.0 / 5;
  static const double a31 = 3.0 / 40, a32 = 9.0 / 40;
  static const double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  static const double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                      a54 = -212.0 / 729;
  static const double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                      a64 = 49.0 / 176, a65 = -5103.0 / 18656;
  static const double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784,
                      b6 = 11.0 / 84;
  static const double e1 = 35.0 / 384 - 5179.0 / 57600, e3 = 500.0 / 1113 - 7571.0 / 16695,
                      e4 = 125.0 / 192 - 393.0 / 640, e5 = -2187.0 / 6784 + 92097.0 / 339200,
                      e6 = 11.0 / 84 - 187.0 / 2100, e7 = -1.0 / 40;

  std::vector<DensityMatrix> out;
  out.reserve(static_cast<std::size_t>(t_grid.size()));
  out.push_back(rho0);

  DensityMatrix y = rho0;
  double t = t_grid[0];
  Eigen::Matrix3cd k1 = rhs(y);

  const double rate_scale =
      std::max({params.kappa, params.gamma, params.gamma_d, params.g, std::abs(params.detuning),
                1e-3});
  double h = 0.1 / rate_scale;

  for (Eigen::Index idx = 1; idx < t_grid.size(); ++idx) {
    const double t_target = t_grid[idx];
    while (t < t_target) {
      const double h_try = std::min(h, t_target - t);
      if (h_try < 1e-14 * std::max(t, 1.0))
        throw Error(ErrorKind::ToleranceNotMet, "step size underflow in lindblad_evolve");

      const Eigen::Matrix3cd k2 = rhs(y + h_try * (a21 * k1));
      const Eigen::Matrix3cd k3 = rhs(y + h_try * (a31 * k1 + a32 * k2));
      const Eigen::Matrix3cd k4 = rhs(y + h_try * (a41 * k1 + a42 * k2 + a43 * k3));
      const Eigen::Matrix3cd k5 = rhs(y + h_try * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4));
      const Eigen::Matrix3cd k6 =
          rhs(y + h_try * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5));
      const Eigen::Matrix3cd y_new =
          y + h_try * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
      const Eigen::Matrix3cd k7 = rhs(y_new);
      const Eigen::Matrix3cd err =
          h_try * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);

      const double en = error_norm(err, y, y_new, opts.rel_tol, opts.abs_tol);
      if (!std::isfinite(en))
        throw Error(ErrorKind::ToleranceNotMet, "non-finite state in lindblad_evolve");
      if (en <= 1.0) {
        t += h_try;
        y = y_new;
        k1 = k7;
        const double grow = en > 0.0 ? 0.9 * std::pow(en, -0.2) : 5.0;
        h = h_try * std::min(5.0, std::max(0.2, grow));
      } else {
        h = h_try * std::max(0.2, 0.9 * std::pow(en, -0.2));
      }
    }
    out.push_back(y);
  }
  return out;
}

Spectrum emission_spectrum_numeric(const CoupledSystemParams& params, const DetectionCoeffs& coeffs,
                                   const Eigen::ArrayXd& omega_grid) {
  validate(params);
  validate(coeffs);
  if (omega_grid.size() < 1)
    throw Error(ErrorKind::NonMonotonicGrid, "empty frequency grid");
  for (Eigen::Index i = 1; i < omega_grid.size(); ++i)
    if (!(omega_grid[i] > omega_grid[i - 1]))
      throw Error(ErrorKind::NonMonotonicGrid, "frequency grid must strictly increase");
  if (params.gamma <= 0.0)
    throw Error(ErrorKind::ZeroRate, "spectrum normalization needs gamma > 0");

  const EigenRates r = eigenrates(params);
  if (r.lambda_plus.real() >= 0.0 || r.lambda_minus.real() >= 0.0)
    throw Error(ErrorKind::DivergentIntegral, "nondecaying eigenmode, spectrum integral diverges");

  const double w_sigma = std::sqrt(coeffs.c_nv * params.gamma);
  const Complex w_a =
      std::exp(kImag * coeffs.delta_phi) * std::sqrt(coeffs.c_cav * params.kappa);
  const double half_gamma = params.gamma / 2.0 + params.gamma_d;
  const double norm = half_gamma * half_gamma / params.gamma;

  Spectrum s;
  s.x = omega_grid;
  s.x_unit = "rad/ns";
  s.y.resize(omega_grid.size());

  const bool degenerate = std::abs(r.d) < 1e-12 * std::max({std::abs(r.c1), std::abs(r.c2),
                                                            params.g, 1.0});
  if (degenerate) {
    // eps(t) = e^{lam t}(alpha + beta t)
    const Complex lam = (r.c1 + r.c2) / 2.0;
    const Complex alpha = w_sigma;
    const Complex beta = w_a * params.g - w_sigma * (r.c1 - r.c2) / 2.0;
    for (Eigen::Index i = 0; i < omega_grid.size(); ++i) {
      const Complex st = lam + kImag * omega_grid[i];
      const Complex f = -alpha / st + beta / (st * st);
      s.y[i] = norm * std::norm(f);
    }
    return s;
  }

  const Complex cdiff = r.c1 - r.c2;
  const Complex a_plus = params.g / r.d;
  const Complex a_minus = -params.g / r.d;
  const Complex s_plus = (r.d - cdiff) / (2.0 * r.d);
  const Complex s_minus = (r.d + cdiff) / (2.0 * r.d);
  const Complex amp_plus = w_sigma * s_plus + w_a * a_plus;
  const Complex amp_minus = w_sigma * s_minus + w_a * a_minus;

  for (Eigen::Index i = 0; i < omega_grid.size(); ++i) {
    const Complex iw = kImag * omega_grid[i];
    const Complex f = -amp_plus / (r.lambda_plus + iw) - amp_minus / (r.lambda_minus + iw);
    s.y[i] = norm * std::norm(f);
  }
  return s;
}

double purcell_factor(const CoupledSystemParams& params) {
  validate(params);
  if (params.kappa <= 0.0 || params.gamma <= 0.0)
    throw Error(ErrorKind::ZeroRate, "purcell factor needs kappa > 0 and gamma > 0");
  return params.g * params.g / (params.kappa * params.gamma);
}

}  // namespace scm
