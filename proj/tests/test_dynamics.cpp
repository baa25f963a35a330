#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <complex>

#include "oracles.hpp"
#include "scm/dynamics.hpp"
#include "scm/random.hpp"

using namespace scm;

namespace {

CoupledSystemParams make_params(double detuning, double g, double kappa, double gamma,
                                double gamma_d) {
  CoupledSystemParams p;
  p.detuning = detuning;
  p.g = g;
  p.kappa = kappa;
  p.gamma = gamma;
  p.gamma_d = gamma_d;
  return p;
}

CoupledSystemParams random_params(Rng& rng) {
  return make_params(rng.uniform(-3.0, 3.0), rng.uniform(0.0, 2.0), rng.uniform(0.01, 3.0),
                     rng.uniform(0.01, 1.0), rng.uniform(0.0, 2.0));
}

DensityMatrix superposition_state() {
  Eigen::Vector3cd psi;
  psi << 1.0 / std::sqrt(2.0), 0.0, 1.0 / std::sqrt(2.0);  // (|e,0> + |g,0>)/sqrt(2)
  return psi * psi.adjoint();
}

}  // namespace

TEST_CASE("eigenrates decouple at g = 0") {
  const auto p = make_params(0.7, 0.0, 1.3, 0.2, 0.5);
  const EigenRates r = eigenrates(p);
  const Complex c1 = r.c1, c2 = r.c2;
  const bool order1 = std::abs(r.lambda_plus - c1) < 1e-14 && std::abs(r.lambda_minus - c2) < 1e-14;
  const bool order2 = std::abs(r.lambda_plus - c2) < 1e-14 && std::abs(r.lambda_minus - c1) < 1e-14;
  CHECK((order1 || order2));
}

TEST_CASE("eigenrates hand-checked point") {
  const auto p = make_params(0.0, 1.0, 2.0, 0.0, 0.0);
  const EigenRates r = eigenrates(p);
  CHECK(r.c1 == Complex(-1.0, 0.0));
  CHECK(r.c2 == Complex(0.0, 0.0));
  CHECK(r.d.real() == 0.0);
  CHECK(r.d.imag() == doctest::Approx(std::sqrt(3.0)).epsilon(1e-15));
  CHECK(r.lambda_plus.real() == doctest::Approx(-0.5).epsilon(1e-15));
  CHECK(r.lambda_plus.imag() == doctest::Approx(std::sqrt(3.0) / 2.0).epsilon(1e-15));
  CHECK(r.lambda_minus.real() == doctest::Approx(-0.5).epsilon(1e-15));
  CHECK(r.lambda_minus.imag() == doctest::Approx(-std::sqrt(3.0) / 2.0).epsilon(1e-15));
}

TEST_CASE("eigenrates degenerate symmetric case") {
  const auto p = make_params(0.0, 0.0, 0.8, 0.8, 0.0);
  const EigenRates r = eigenrates(p);
  CHECK(std::abs(r.lambda_plus - Complex(-0.4, 0.0)) < 1e-15);
  CHECK(std::abs(r.lambda_minus - Complex(-0.4, 0.0)) < 1e-15);
}

TEST_CASE("eigenrates satisfy the characteristic polynomial") {
  Rng rng(17);
  for (int i = 0; i < 50; ++i) {
    const auto p = random_params(rng);
    const EigenRates r = eigenrates(p);
    for (const Complex lam : {r.lambda_plus, r.lambda_minus}) {
      const Complex res = lam * lam - (r.c1 + r.c2) * lam + (r.c1 * r.c2 + p.g * p.g);
      CHECK(std::abs(res) < 1e-12 * std::max(1.0, std::norm(lam)));
    }
    CHECK(r.d.real() >= 0.0);
  }
}

TEST_CASE("amplitude trajectory initial condition and derivatives") {
  const auto p = make_params(1.1, 0.8, 1.7, 0.3, 0.4);
  const double h = 5e-6;
  Eigen::ArrayXd t(3);
  t << 0.0, h, 2.0 * h;
  const AmplitudeTrajectory tr = amplitude_trajectory(p, t);

  CHECK(std::abs(tr.a[0]) == 0.0);
  CHECK(tr.sigma[0] == Complex(1.0, 0.0));

  // one-sided derivative at 0 from the first three samples
  const Complex da = (-3.0 * tr.a[0] + 4.0 * tr.a[1] - tr.a[2]) / (2.0 * h);
  const Complex ds = (-3.0 * tr.sigma[0] + 4.0 * tr.sigma[1] - tr.sigma[2]) / (2.0 * h);
  const EigenRates r = eigenrates(p);
  CHECK(std::abs(da - Complex(p.g, 0.0)) < 1e-7);
  CHECK(std::abs(ds - r.c2) < 1e-7);
}

TEST_CASE("amplitude trajectory decoupled limit") {
  const auto p = make_params(-0.9, 0.0, 2.2, 0.5, 0.8);
  const Eigen::ArrayXd t = Eigen::ArrayXd::LinSpaced(40, 0.0, 8.0);
  const AmplitudeTrajectory tr = amplitude_trajectory(p, t);
  const EigenRates r = eigenrates(p);
  for (Eigen::Index i = 0; i < t.size(); ++i) {
    CHECK(std::abs(tr.a[i]) == 0.0);
    CHECK(std::abs(tr.sigma[i] - std::exp(r.c2 * t[i])) < 1e-13);
  }
}

TEST_CASE("amplitude trajectory solves the coupled equations") {
  Rng rng(23);
  const double h = 5e-6;
  for (int draw = 0; draw < 30; ++draw) {
    const auto p = random_params(rng);
    const EigenRates r = eigenrates(p);

    std::vector<double> centers = {0.1, 0.4, 1.0, 2.5};
    Eigen::ArrayXd t(3 * centers.size());
    for (std::size_t k = 0; k < centers.size(); ++k) {
      t[3 * k] = centers[k] - h;
      t[3 * k + 1] = centers[k];
      t[3 * k + 2] = centers[k] + h;
    }
    const AmplitudeTrajectory tr = amplitude_trajectory(p, t);
    const double scale =
        std::max({tr.a.abs().maxCoeff(), tr.sigma.abs().maxCoeff(), 1e-30});

    for (std::size_t k = 0; k < centers.size(); ++k) {
      const Eigen::Index i = Eigen::Index(3 * k + 1);
      const Complex da = (tr.a[i + 1] - tr.a[i - 1]) / (2.0 * h);
      const Complex ds = (tr.sigma[i + 1] - tr.sigma[i - 1]) / (2.0 * h);
      const Complex res_a = da - (r.c1 * tr.a[i] + p.g * tr.sigma[i]);
      const Complex res_s = ds - (r.c2 * tr.sigma[i] - p.g * tr.a[i]);
      CHECK(std::abs(res_a) < 1e-8 * scale);
      CHECK(std::abs(res_s) < 1e-8 * scale);
    }
  }
}

TEST_CASE("amplitude trajectory near-degenerate branch stays finite and consistent") {
  // with detuning 0, gamma = kappa - 2 gamma_d makes c1 = c2, so d = 2ig
  const double kappa = 1.0;
  const double g = 1e-12;
  const auto p = make_params(0.0, g, kappa, kappa, 0.0);
  const Eigen::ArrayXd t = Eigen::ArrayXd::LinSpaced(20, 0.0, 5.0);
  const AmplitudeTrajectory tr = amplitude_trajectory(p, t);
  for (Eigen::Index i = 0; i < t.size(); ++i) {
    CHECK(std::isfinite(tr.a[i].real()));
    // sigma collapses to exp(-kappa t / 2) in this limit
    CHECK(std::abs(tr.sigma[i] - std::exp(-kappa * t[i] / 2.0)) < 1e-9);
    // a = g t e^{lambda t} to first order in g
    CHECK(std::abs(tr.a[i] - g * t[i] * std::exp(-kappa * t[i] / 2.0)) < 1e-9 * g + 1e-25);
  }
}

TEST_CASE("time grids must be monotone and nonnegative") {
  const auto p = make_params(0.0, 0.5, 1.0, 0.1, 0.0);
  Eigen::ArrayXd bad(3);
  bad << 0.0, 2.0, 1.0;
  CHECK_THROWS_AS(amplitude_trajectory(p, bad), Error);
  Eigen::ArrayXd neg(2);
  neg << -1.0, 1.0;
  CHECK_THROWS_AS(amplitude_trajectory(p, neg), Error);
  CHECK_THROWS_AS(lindblad_evolve(p, superposition_state(), bad), Error);
}

TEST_CASE("vacuum is stationary under the lindblad flow") {
  const auto p = make_params(1.3, 0.9, 2.0, 0.4, 0.7);
  DensityMatrix rho0 = DensityMatrix::Zero();
  rho0(2, 2) = 1.0;
  const Eigen::ArrayXd t = Eigen::ArrayXd::LinSpaced(6, 0.0, 10.0);
  const auto states = lindblad_evolve(p, rho0, t);
  REQUIRE(states.size() == std::size_t(t.size()));
  for (const auto& rho : states) CHECK((rho - rho0).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("lindblad evolution conserves trace and positivity over 10 lifetimes") {
  Rng rng(31);
  for (int draw = 0; draw < 5; ++draw) {
    const auto p = make_params(rng.uniform(-2.0, 2.0), rng.uniform(0.1, 1.5),
                               rng.uniform(0.2, 2.5), rng.uniform(0.05, 0.5),
                               rng.uniform(0.0, 1.0));
    DensityMatrix rho0 = DensityMatrix::Zero();
    rho0(0, 0) = 1.0;  // excited emitter, empty cavity
    const double t_max = 10.0 / p.gamma;
    const Eigen::ArrayXd t = Eigen::ArrayXd::LinSpaced(12, 0.0, t_max);
    const auto states = lindblad_evolve(p, rho0, t);
    for (const auto& rho : states) {
      CHECK(std::abs(rho.trace().real() - 1.0) < 1e-8);
      CHECK(std::abs(rho.trace().imag()) < 1e-12);
      CHECK_NOTHROW(check_density_matrix(rho, 1e-8));
    }
    // everything ends in the vacuum sink
    CHECK(std::abs(states.back()(2, 2) - 1.0) < 1e-5);
  }
}

TEST_CASE("closed forms and integrator agree on the field expectations") {
  Rng rng(47);
  const DensityMatrix rho0 = superposition_state();
  for (int draw = 0; draw < 10; ++draw) {
    const auto p = random_params(rng);
    const double t_max = std::min(50.0, 4.0 / std::max(0.05, p.gamma / 2.0 + p.gamma_d / 2.0));
    const Eigen::ArrayXd t = Eigen::ArrayXd::LinSpaced(9, 0.0, t_max);
    const auto states = lindblad_evolve(p, rho0, t);
    const AmplitudeTrajectory tr = amplitude_trajectory(p, t);
    for (Eigen::Index i = 0; i < t.size(); ++i) {
      // rho0 carries half a unit of initial coherence, the closed form one
      CHECK(std::abs(2.0 * expectation_a(states[i]) - tr.a[i]) < 1e-7);
      CHECK(std::abs(2.0 * expectation_sigma(states[i]) - tr.sigma[i]) < 1e-7);
    }
  }
}

TEST_CASE("integrator reports unreachable tolerances") {
  const auto p = make_params(0.4, 0.6, 1.2, 0.2, 0.1);
  LindbladOptions opts;
  opts.rel_tol = 1e-17;
  opts.abs_tol = 1e-300;
  const Eigen::ArrayXd t = Eigen::ArrayXd::LinSpaced(3, 0.0, 5.0);
  try {
    lindblad_evolve(p, superposition_state(), t, opts);
    FAIL("expected ToleranceNotMet");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::ToleranceNotMet);
  }
}

TEST_CASE("bare emitter spectrum is a lorentzian of width gamma + 2 gamma_d") {
  const double gamma = 0.3, gamma_d = 0.8, detuning = 1.4;
  const auto p = make_params(detuning, 0.0, 1.0, gamma, gamma_d);
  DetectionCoeffs coeffs;
  coeffs.c_nv = 2.5;
  const double hw = gamma / 2.0 + gamma_d;
  // emitter line sits at -detuning/2 in this rotating frame
  const Eigen::ArrayXd w = Eigen::ArrayXd::LinSpaced(4001, -detuning / 2.0 - 8.0 * hw,
                                                     -detuning / 2.0 + 8.0 * hw);
  const Spectrum s = emission_spectrum_numeric(p, coeffs, w);

  Eigen::Index peak = 0;
  const double peak_val = s.y.maxCoeff(&peak);
  CHECK(peak_val == doctest::Approx(2.5).epsilon(1e-6));
  CHECK(s.x[peak] == doctest::Approx(-detuning / 2.0).epsilon(1e-3));
  const double fwhm = oracles::fwhm_around_peak(s.x, s.y);
  CHECK(fwhm == doctest::Approx(gamma + 2.0 * gamma_d).epsilon(0.01));
}

TEST_CASE("no cavity channel means no phase dependence") {
  const auto p = make_params(0.5, 0.7, 1.1, 0.2, 0.3);
  const Eigen::ArrayXd w = Eigen::ArrayXd::LinSpaced(101, -4.0, 4.0);
  DetectionCoeffs c0;
  c0.c_nv = 1.0;
  c0.c_cav = 0.0;
  c0.delta_phi = 0.0;
  DetectionCoeffs c1 = c0;
  c1.delta_phi = 2.1;
  const Spectrum s0 = emission_spectrum_numeric(p, c0, w);
  const Spectrum s1 = emission_spectrum_numeric(p, c1, w);
  CHECK((s0.y - s1.y).abs().maxCoeff() == 0.0);
}

TEST_CASE("spectrum satisfies parseval against the time-domain energy") {
  const auto p = make_params(0.8, 0.6, 1.5, 0.25, 0.4);
  DetectionCoeffs coeffs;
  coeffs.c_nv = 1.0;
  coeffs.c_cav = 0.8;
  coeffs.delta_phi = 0.7;

  // time side: trapezoid of |eps(t)|^2 on a fine grid until fully decayed
  const EigenRates r = eigenrates(p);
  const double decay = -std::max(r.lambda_plus.real(), r.lambda_minus.real());
  const double t_max = 14.0 / decay;
  const Eigen::Index nt = 200001;
  const Eigen::ArrayXd t = Eigen::ArrayXd::LinSpaced(nt, 0.0, t_max);
  const AmplitudeTrajectory tr = amplitude_trajectory(p, t);
  const double ws = std::sqrt(coeffs.c_nv * p.gamma);
  const Complex wa = std::exp(Complex(0.0, coeffs.delta_phi)) * std::sqrt(coeffs.c_cav * p.kappa);
  Eigen::ArrayXd e2(nt);
  for (Eigen::Index i = 0; i < nt; ++i) e2[i] = std::norm(ws * tr.sigma[i] + wa * tr.a[i]);
  const double time_side = oracles::trapezoid(t, e2);

  // frequency side: Simpson quadrature over the real line via w = s tan(u)
  const double hw = p.gamma / 2.0 + p.gamma_d;
  const double norm = hw * hw / p.gamma;
  const double s_scale = 2.0 * (hw + p.kappa);
  const int n = 40001;
  Eigen::ArrayXd nodes(n), weights(n);
  const double lo = -pi / 2 + 1e-8, hi = pi / 2 - 1e-8;
  const double du = (hi - lo) / (n - 1);
  for (int i = 0; i < n; ++i) {
    const double u = lo + i * du;
    const double c = std::cos(u);
    nodes[i] = s_scale * std::tan(u);
    const double simpson = (i == 0 || i == n - 1) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
    weights[i] = simpson * s_scale / (c * c) * du / 3.0;
  }
  const Spectrum spec = emission_spectrum_numeric(p, coeffs, nodes);
  const double freq_side = (spec.y * weights).sum() / (2.0 * pi * norm);

  CHECK(freq_side == doctest::Approx(time_side).epsilon(1e-6));
}

TEST_CASE("spectrum errors: zero gamma and nondecaying modes") {
  DetectionCoeffs coeffs;
  const Eigen::ArrayXd w = Eigen::ArrayXd::LinSpaced(11, -1.0, 1.0);

  try {
    emission_spectrum_numeric(make_params(0.0, 0.1, 1.0, 0.0, 0.5), coeffs, w);
    FAIL("expected ZeroRate");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::ZeroRate);
  }

  try {
    // kappa = 0 and g = 0 leaves an undamped cavity eigenmode
    emission_spectrum_numeric(make_params(0.7, 0.0, 0.0, 1.0, 0.0), coeffs, w);
    FAIL("expected DivergentIntegral");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::DivergentIntegral);
  }
}

TEST_CASE("purcell factor definition") {
  CHECK(purcell_factor(make_params(0.0, 0.0, 1.0, 0.1, 0.0)) == 0.0);
  CHECK(purcell_factor(make_params(0.3, 0.5, 2.5, 0.1, 0.4)) ==
        doctest::Approx(0.25 / 0.25).epsilon(1e-12));
  const double f1 = purcell_factor(make_params(0.0, 0.4, 1.7, 0.2, 0.0));
  const double f2 = purcell_factor(make_params(0.0, 0.8, 1.7, 0.2, 0.0));
  CHECK(f2 == doctest::Approx(4.0 * f1).epsilon(1e-12));

  try {
    purcell_factor(make_params(0.0, 0.5, 0.0, 0.1, 0.0));
    FAIL("expected ZeroRate");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::ZeroRate);
  }
}
