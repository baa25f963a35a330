#include "scm/spectro.hpp"

#include <algorithm>
#include <cmath>

#include "scm/fit.hpp"

namespace scm {

std::complex<double> lorentzian(double omega, double omega_c, double kappa_hwhm) {
  if (kappa_hwhm <= 0.0)
    throw Error(ErrorKind::InvalidRequest, "lorentzian needs kappa_hwhm > 0");
  return 1.0 / std::complex<double>(1.0, (omega - omega_c) / kappa_hwhm);
}

ModePeak FitMode::to_peak() const {
  const double wc = omega_from_lambda(lambda_c);
  return {wc, wc / (2.0 * q_factor), f_c};
}

namespace {

double bracket_at(const DetectionCoeffs& coeffs, const std::vector<ModePeak>& modes,
                  double omega) {
  double acc = coeffs.c_nv;
  const std::complex<double> phase{std::cos(coeffs.delta_phi), std::sin(coeffs.delta_phi)};
  for (const auto& m : modes) {
    const auto l = lorentzian(omega, m.omega_c, m.kappa_hwhm);
    acc += coeffs.c_cav * m.f_c * std::norm(l);
    acc += 2.0 * coeffs.c_int * (phase * std::sqrt(m.f_c) * l).real();
  }
  return acc;
}

void require_modes(const std::vector<ModePeak>& modes) {
  if (modes.empty()) throw Error(ErrorKind::InvalidRequest, "no cavity modes given");
  for (const auto& m : modes) {
    if (!(m.kappa_hwhm > 0.0))
      throw Error(ErrorKind::InvalidRequest, "mode needs kappa_hwhm > 0");
    if (!(m.f_c >= 0.0)) throw Error(ErrorKind::InvalidRequest, "mode needs f_c >= 0");
  }
}

}  // namespace

Spectrum detected_spectrum(const DetectionCoeffs& coeffs, const std::vector<ModePeak>& modes,
                           const Spectrum& nv_baseline, const Eigen::ArrayXd& omega_grid) {
  validate(coeffs);
  require_modes(modes);
  const Eigen::ArrayXd base = interp_linear(nv_baseline, omega_grid);
  Spectrum s;
  s.x = omega_grid;
  s.x_unit = "rad/ns";
  s.y.resize(omega_grid.size());
  for (Eigen::Index i = 0; i < omega_grid.size(); ++i)
    s.y[i] = base[i] * bracket_at(coeffs, modes, omega_grid[i]);
  return s;
}

Spectrum detected_spectrum_lambda(const DetectionCoeffs& coeffs, const std::vector<FitMode>& modes,
                                  const Spectrum& nv_baseline, const Eigen::ArrayXd& lambda_grid) {
  validate(coeffs);
  std::vector<ModePeak> peaks;
  peaks.reserve(modes.size());
  for (const auto& m : modes) peaks.push_back(m.to_peak());
  require_modes(peaks);

  const Eigen::ArrayXd base = interp_linear(nv_baseline, lambda_grid);
  Spectrum s;
  s.x = lambda_grid;
  s.y.resize(lambda_grid.size());
  for (Eigen::Index i = 0; i < lambda_grid.size(); ++i)
    s.y[i] = base[i] * bracket_at(coeffs, peaks, omega_from_lambda(lambda_grid[i]));
  return s;
}

namespace {

struct ParamMap {
  // order: globals then per-mode triples
  std::vector<std::string> names;
  Eigen::VectorXd values;

  static ParamMap build(const SpectrumFit& init, const std::set<std::string>& fixed) {
    ParamMap map;
    std::vector<std::pair<std::string, double>> entries;
    auto want = [&](const std::string& n) { return fixed.count(n) == 0; };
    if (want("c_nv")) entries.emplace_back("c_nv", init.coeffs.c_nv);
    if (want("c_cav")) entries.emplace_back("c_cav", init.coeffs.c_cav);
    if (want("c_int")) entries.emplace_back("c_int", init.coeffs.c_int);
    if (want("delta_phi")) entries.emplace_back("delta_phi", init.coeffs.delta_phi);
    for (std::size_t k = 0; k < init.modes.size(); ++k) {
      const std::string idx = "[" + std::to_string(k) + "]";
      if (want("lambda_c")) entries.emplace_back("lambda_c" + idx, init.modes[k].lambda_c);
      if (want("q_factor")) entries.emplace_back("q_factor" + idx, init.modes[k].q_factor);
      if (want("f_c")) entries.emplace_back("f_c" + idx, init.modes[k].f_c);
    }
    map.values.resize(static_cast<Eigen::Index>(entries.size()));
    for (std::size_t i = 0; i < entries.size(); ++i) {
      map.names.push_back(entries[i].first);
      map.values[static_cast<Eigen::Index>(i)] = entries[i].second;
    }
    return map;
  }

  void apply(const Eigen::VectorXd& p, SpectrumFit& fit) const {
    for (std::size_t i = 0; i < names.size(); ++i) {
      const double v = p[static_cast<Eigen::Index>(i)];
      const std::string& n = names[i];
      if (n == "c_nv") fit.coeffs.c_nv = v;
      else if (n == "c_cav") fit.coeffs.c_cav = v;
      else if (n == "c_int") fit.coeffs.c_int = v;
      else if (n == "delta_phi") fit.coeffs.delta_phi = v;
      else {
        const auto open = n.find('[');
        const std::size_t k = std::stoul(n.substr(open + 1, n.size() - open - 2));
        const std::string base = n.substr(0, open);
        if (base == "lambda_c") fit.modes[k].lambda_c = v;
        else if (base == "q_factor") fit.modes[k].q_factor = v;
        else fit.modes[k].f_c = v;
      }
    }
  }
};

}  // namespace

SpectrumFit fit_spectrum(const Spectrum& data, const Spectrum& nv_baseline, const SpectrumFit& init,
                         const std::set<std::string>& fixed, FitWeights weights,
                         int max_iterations) {
  validate(data);
  validate(nv_baseline);
  if (init.modes.empty()) throw Error(ErrorKind::InvalidRequest, "fit needs at least one mode");

  const ParamMap map = ParamMap::build(init, fixed);
  if (map.values.size() == 0) throw Error(ErrorKind::InvalidRequest, "all parameters fixed");

  Eigen::ArrayXd sigma(data.size());
  if (weights == FitWeights::Poisson)
    for (Eigen::Index i = 0; i < data.size(); ++i) sigma[i] = std::sqrt(std::max(data.y[i], 1.0));
  else
    sigma.setOnes();

  SpectrumFit work = init;
  auto model_y = [&](const Eigen::VectorXd& p) {
    map.apply(p, work);
    return detected_spectrum_lambda(work.coeffs, work.modes, nv_baseline, data.x).y;
  };
  auto residuals = [&](const Eigen::VectorXd& p) -> Eigen::VectorXd {
    return ((model_y(p) - data.y) / sigma).matrix();
  };
  auto feasible = [&](const Eigen::VectorXd& p) {
    map.apply(p, work);
    if (!(work.coeffs.c_nv >= 0.0) || !(work.coeffs.c_cav >= 0.0)) return false;
    const double bound = std::sqrt(work.coeffs.c_nv * work.coeffs.c_cav) * (1.0 + 1e-9) + 1e-12;
    if (std::abs(work.coeffs.c_int) > bound) return false;
    for (const auto& m : work.modes)
      if (!(m.lambda_c > 0.0) || !(m.q_factor > 1.0) || !(m.f_c >= 0.0)) return false;
    return true;
  };

  FitOptions opts;
  opts.max_iterations = max_iterations;
  FitResult res = fit_least_squares(residuals, map.values, opts, feasible);
  if (res.status == FitStatus::Degenerate)
    throw Error(ErrorKind::DegenerateJacobian, "spectrum fit jacobian is rank-deficient");

  SpectrumFit out = init;
  map.apply(res.params, out);
  out.free_names = map.names;
  out.covariance = res.covariance;
  out.iterations = res.iterations;
  out.converged = res.converged();
  const Eigen::ArrayXd final_model =
      detected_spectrum_lambda(out.coeffs, out.modes, nv_baseline, data.x).y;
  out.residual_rms = std::sqrt((final_model - data.y).square().mean());
  return out;
}

LifetimeFit fit_lifetime(const TimeTrace& trace, double tau_guess,
                         std::optional<double> window_start) {
  validate(trace);
  if (!(tau_guess > 0.0)) throw Error(ErrorKind::InvalidRequest, "tau_guess must be > 0");

  Eigen::Index peak = 0;
  trace.y.maxCoeff(&peak);
  const double start = window_start.value_or(trace.x[peak]);
  Eigen::Index i0 = 0;
  while (i0 < trace.size() && trace.x[i0] < start) ++i0;
  const Eigen::Index n = trace.size() - i0;
  if (n < 4 || trace.x[trace.size() - 1] - start < 3.0 * tau_guess)
    throw Error(ErrorKind::WindowTooShort, "lifetime window shorter than 3 tau");

  const Eigen::ArrayXd t = trace.x.segment(i0, n) - start;
  const Eigen::ArrayXd y = trace.y.segment(i0, n);
  Eigen::ArrayXd sigma = y.max(1.0).sqrt();

  const double b0 = y.minCoeff();
  Eigen::VectorXd p0(3);
  p0 << std::max(y[0] - b0, 1e-12), tau_guess, b0;

  auto residuals = [&](const Eigen::VectorXd& p) -> Eigen::VectorXd {
    return (((p[0] * (-t / p[1]).exp() + p[2]) - y) / sigma).matrix();
  };
  auto feasible = [](const Eigen::VectorXd& p) { return p[1] > 1e-12; };

  FitResult res = fit_least_squares(residuals, p0, {}, feasible);

  LifetimeFit out;
  out.amplitude = res.params[0];
  out.tau = res.params[1];
  out.baseline = res.params[2];
  out.tau_stderr = res.stderrs.size() > 1 ? res.stderrs[1] : 0.0;
  out.iterations = res.iterations;
  // an undefined tau error means the decay carried no information (flat trace)
  out.converged =
      res.converged() && out.tau > 0.0 && out.amplitude > 0.0 && std::isfinite(out.tau_stderr);
  return out;
}

PurcellSpectrum purcell_spectrum(const Spectrum& i_coupled, const Spectrum& i_bare, double tau_c,
                                 double tau_0) {
  validate(i_coupled);
  validate(i_bare);
  if (!(tau_c > 0.0) || !(tau_0 > 0.0))
    throw Error(ErrorKind::InvalidRequest, "lifetimes must be positive");

  const double lo = std::max(i_coupled.x[0], i_bare.x[0]);
  const double hi =
      std::min(i_coupled.x[i_coupled.size() - 1], i_bare.x[i_bare.size() - 1]);
  if (!(lo < hi)) throw Error(ErrorKind::NoOverlap, "spectra do not overlap");

  std::vector<double> grid;
  for (Eigen::Index i = 0; i < i_coupled.size(); ++i)
    if (i_coupled.x[i] >= lo && i_coupled.x[i] <= hi) grid.push_back(i_coupled.x[i]);
  if (grid.size() < 2) throw Error(ErrorKind::NoOverlap, "overlap too small");

  PurcellSpectrum out;
  out.lambda = Eigen::Map<Eigen::ArrayXd>(grid.data(), static_cast<Eigen::Index>(grid.size()));
  const Eigen::ArrayXd ic = interp_linear(i_coupled, out.lambda);
  const Eigen::ArrayXd i0 = interp_linear(i_bare, out.lambda);
  const double floor = 0.01 * i0.maxCoeff();

  out.f.setZero(out.lambda.size());
  out.valid.resize(out.lambda.size());
  for (Eigen::Index i = 0; i < out.lambda.size(); ++i) {
    out.valid[i] = i0[i] >= floor;
    if (out.valid[i]) out.f[i] = ic[i] * tau_0 / (i0[i] * tau_c);
  }
  return out;
}

Branching branching_fractions(const EmissionBudget& budget) {
  validate(budget);
  Branching out;
  out.beta = budget.channel_rates / budget.total_rate();
  out.nonradiative_fraction = 1.0 - out.beta.sum();
  return out;
}

Eigen::ArrayXd intensity_model(const EmissionBudget& budget) {
  validate(budget);
  return budget.proportionality * budget.pump_rate * budget.collection_eff *
         budget.channel_rates / budget.total_rate();
}

Spectrum synthetic_bare_spectrum(const Eigen::ArrayXd& lambda_grid, double scale) {
  auto gauss = [](const Eigen::ArrayXd& x, double mu, double s) {
    return (-(x - mu).square() / (2.0 * s * s)).exp();
  };
  Spectrum s;
  s.x = lambda_grid;
  s.y = scale * (0.35 * gauss(lambda_grid, 637.0, 3.0) + gauss(lambda_grid, 672.0, 16.0) +
                 0.7 * gauss(lambda_grid, 700.0, 22.0) + 0.3 * gauss(lambda_grid, 732.0, 30.0) +
                 0.05 * gauss(lambda_grid, 680.0, 60.0));
  return s;
}

}  // namespace scm
