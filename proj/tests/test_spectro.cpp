#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <set>

#include "oracles.hpp"
#include "scm/random.hpp"
#include "scm/spectro.hpp"

using namespace scm;

namespace {

Spectrum flat_baseline(const Eigen::ArrayXd& grid, double level = 1.0) {
  Spectrum s;
  s.x = grid;
  s.y = Eigen::ArrayXd::Constant(grid.size(), level);
  return s;
}

std::vector<FitMode> paper_modes() {
  return {{643.0, 610.0, 5.3}, {667.3, 550.0, 0.7}};
}

DetectionCoeffs coeffs(double c_nv, double c_cav, double c_int = 0.0, double dphi = 0.0) {
  DetectionCoeffs c;
  c.c_nv = c_nv;
  c.c_cav = c_cav;
  c.c_int = c_int;
  c.delta_phi = dphi;
  return c;
}

}  // namespace

TEST_CASE("lorentzian anchor points") {
  CHECK(lorentzian(5.0, 5.0, 0.3) == std::complex<double>(1.0, 0.0));
  CHECK(std::norm(lorentzian(5.3, 5.0, 0.3)) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(std::abs(lorentzian(5.0 + 1e6, 5.0, 0.3)) < 1e-5);
  CHECK_THROWS_AS(lorentzian(1.0, 1.0, 0.0), Error);
}

TEST_CASE("detected spectrum peak algebra") {
  const double wc = omega_from_lambda(643.0);
  const double kappa = wc / (2.0 * 610.0);
  std::vector<ModePeak> modes = {{wc, kappa, 5.3}};
  Eigen::ArrayXd grid(3);
  grid << wc - 40.0 * kappa, wc, wc + 40.0 * kappa;
  Spectrum base = flat_baseline(Eigen::ArrayXd::LinSpaced(9, wc - 100.0 * kappa,
                                                          wc + 100.0 * kappa),
                                2.0);
  const Spectrum s = detected_spectrum(coeffs(1.0, 1.0), modes, base, grid);
  CHECK(s.y[1] == doctest::Approx(2.0 * (1.0 + 5.3)).epsilon(1e-12));
  // far wings fall back to baseline * c_nv
  CHECK(s.y[0] == doctest::Approx(2.0).epsilon(1e-2));
  CHECK(s.y[2] == doctest::Approx(2.0).epsilon(1e-2));
}

TEST_CASE("detected spectrum reproduces the two-mode peak ratios") {
  const Eigen::ArrayXd grid = Eigen::ArrayXd::LinSpaced(1601, 620.0, 700.0);
  const Spectrum s = detected_spectrum_lambda(coeffs(1.0, 1.0), paper_modes(),
                                              flat_baseline(grid), grid);
  const auto at = [&](double lambda) {
    Eigen::Index best = 0;
    (grid - lambda).abs().minCoeff(&best);
    return s.y[best];
  };
  const double background = at(620.0);  // far-detuned reference at the grid edge
  CHECK(at(643.0) / background == doctest::Approx(6.3).epsilon(5e-3));
  CHECK(at(667.3) / background == doctest::Approx(1.7).epsilon(5e-3));
}

TEST_CASE("interference term vanishes with c_int = 0") {
  const Eigen::ArrayXd grid = Eigen::ArrayXd::LinSpaced(501, 640.0, 670.0);
  const Spectrum a = detected_spectrum_lambda(coeffs(1.0, 1.0, 0.0, 0.0), paper_modes(),
                                              flat_baseline(grid), grid);
  const Spectrum b = detected_spectrum_lambda(coeffs(1.0, 1.0, 0.0, 1.9), paper_modes(),
                                              flat_baseline(grid), grid);
  CHECK((a.y - b.y).abs().maxCoeff() == 0.0);
}

TEST_CASE("baseline support is enforced") {
  const Eigen::ArrayXd grid = Eigen::ArrayXd::LinSpaced(11, 600.0, 700.0);
  const Spectrum narrow = flat_baseline(Eigen::ArrayXd::LinSpaced(11, 630.0, 660.0));
  try {
    detected_spectrum_lambda(coeffs(1.0, 0.5), paper_modes(), narrow, grid);
    FAIL("expected GridOutsideBaseline");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::GridOutsideBaseline);
  }
}

TEST_CASE("noise-free spectrum fit recovers the model exactly") {
  const Eigen::ArrayXd grid = Eigen::ArrayXd::LinSpaced(1201, 630.0, 680.0);
  const Spectrum base = synthetic_bare_spectrum(grid, 800.0);
  const Spectrum data = detected_spectrum_lambda(coeffs(1.0, 1.0), paper_modes(), base, grid);

  SpectrumFit init;
  init.coeffs = coeffs(0.9, 1.0);
  init.modes = {{643.1, 500.0, 4.0}, {667.2, 500.0, 1.0}};
  const SpectrumFit fit =
      fit_spectrum(data, base, init, {"c_cav", "c_int", "delta_phi"});

  CHECK(fit.converged);
  CHECK(fit.residual_rms < 1e-9 * data.y.maxCoeff());
  CHECK(fit.modes[0].f_c == doctest::Approx(5.3).epsilon(1e-6));
  CHECK(fit.modes[1].f_c == doctest::Approx(0.7).epsilon(1e-6));
  CHECK(fit.modes[0].q_factor == doctest::Approx(610.0).epsilon(1e-6));
  CHECK(fit.coeffs.c_nv == doctest::Approx(1.0).epsilon(1e-8));
  CHECK(fit.free_names.size() == 7);
}

TEST_CASE("spectrum fit round trip with 1 percent noise") {
  const Eigen::ArrayXd grid = Eigen::ArrayXd::LinSpaced(1601, 620.0, 700.0);
  const Spectrum base = synthetic_bare_spectrum(grid, 1000.0);
  const Spectrum clean = detected_spectrum_lambda(coeffs(1.0, 1.0), paper_modes(), base, grid);

  Rng rng(101);
  Spectrum data = clean;
  for (Eigen::Index i = 0; i < data.size(); ++i) data.y[i] *= 1.0 + 0.01 * rng.normal();

  SpectrumFit init;
  init.coeffs = coeffs(1.0, 1.0);
  init.modes = {{643.05, 550.0, 4.0}, {667.25, 500.0, 1.0}};
  const SpectrumFit fit = fit_spectrum(data, base, init, {"c_cav", "c_int", "delta_phi"});

  CHECK(fit.converged);
  CHECK(fit.modes[0].f_c == doctest::Approx(5.3).epsilon(0.04));
  CHECK(fit.modes[0].q_factor == doctest::Approx(610.0).epsilon(0.05));
  CHECK(fit.modes[1].f_c == doctest::Approx(0.7).epsilon(0.15));
}

TEST_CASE("fano asymmetry follows the interference phase") {
  const double f_c = 2.0, q = 900.0;
  const Eigen::ArrayXd grid = Eigen::ArrayXd::LinSpaced(1401, 655.0, 665.0);
  const Spectrum base = flat_baseline(grid, 500.0);
  const Spectrum data = detected_spectrum_lambda(coeffs(1.0, 1.0, 0.6, pi / 2.0),
                                                 {{660.0, q, f_c}}, base, grid);

  // sin(delta_phi) > 0 boosts the high-frequency (short-wavelength) shoulder
  const auto at = [&](double lambda) {
    Eigen::Index best = 0;
    (grid - lambda).abs().minCoeff(&best);
    return data.y[best];
  };
  const double hwhm_lambda = 660.0 / (2.0 * q);
  CHECK(at(660.0 - hwhm_lambda) > at(660.0 + hwhm_lambda));

  SpectrumFit init;
  init.coeffs = coeffs(1.0, 1.0, 0.3, pi / 2.0);
  init.modes = {{660.02, 700.0, 1.5}};
  const SpectrumFit fit = fit_spectrum(data, base, init, {"c_cav", "delta_phi"});
  CHECK(fit.converged);
  CHECK(fit.coeffs.c_int / fit.coeffs.c_nv == doctest::Approx(0.6).epsilon(0.05 / 0.6));
}

TEST_CASE("randomized spectrum fit round trips") {
  const Eigen::ArrayXd grid = Eigen::ArrayXd::LinSpaced(1601, 640.0, 660.0);
  const Spectrum base = flat_baseline(grid, 1000.0);
  Rng rng(7);
  int passed = 0;
  const int n_draws = 50;
  for (int draw = 0; draw < n_draws; ++draw) {
    const double f_true = rng.uniform(0.1, 10.0);
    const double q_true = rng.uniform(200.0, 5000.0);
    const double ratio = rng.uniform(0.0, 0.8);
    const Spectrum clean = detected_spectrum_lambda(coeffs(1.0, 1.0, ratio, pi / 2.0),
                                                    {{650.0, q_true, f_true}}, base, grid);
    Spectrum data = clean;
    for (Eigen::Index i = 0; i < data.size(); ++i) data.y[i] *= 1.0 + 0.01 * rng.normal();

    SpectrumFit init;
    init.coeffs = coeffs(1.0, 1.0, 0.4, pi / 2.0);
    init.modes = {{650.002, q_true * 1.15, f_true * 0.8}};
    SpectrumFit fit;
    try {
      fit = fit_spectrum(data, base, init, {"c_cav", "delta_phi"});
    } catch (const Error&) {
      continue;  // counted as a failure below
    }
    const bool ok = fit.converged && std::abs(fit.modes[0].f_c - f_true) <= 0.10 * f_true &&
                    std::abs(fit.modes[0].q_factor - q_true) <= 0.05 * q_true;
    if (ok) ++passed;
  }
  CHECK(passed >= 45);
}

TEST_CASE("lifetime fit recovers the paper lifetimes from poisson data") {
  Rng rng(55);
  for (const double tau_true : {16.4, 12.7}) {
    const Eigen::ArrayXd t = Eigen::ArrayXd::LinSpaced(481, 0.0, 120.0);
    TimeTrace trace;
    trace.x = t;
    trace.x_unit = "ns";
    trace.y.resize(t.size());
    for (Eigen::Index i = 0; i < t.size(); ++i) {
      const double mean = 1e4 * std::exp(-t[i] / tau_true) + 20.0;
      trace.y[i] = double(rng.poisson(mean));
    }
    const LifetimeFit fit = fit_lifetime(trace, 10.0);
    CHECK(fit.converged);
    CHECK(fit.tau == doctest::Approx(tau_true).epsilon(0.5 / tau_true));
    CHECK(fit.tau_stderr < 0.5);
    CHECK(fit.tau_stderr > 0.0);
  }
}

TEST_CASE("lifetime fit flags degenerate inputs") {
  TimeTrace flat;
  flat.x = Eigen::ArrayXd::LinSpaced(200, 0.0, 100.0);
  flat.y = Eigen::ArrayXd::Constant(200, 50.0);
  bool soft_failed = false;
  try {
    const LifetimeFit fit = fit_lifetime(flat, 10.0);
    soft_failed = !fit.converged;
  } catch (const Error& e) {
    soft_failed = e.kind() == ErrorKind::WindowTooShort;
  }
  CHECK(soft_failed);

  TimeTrace snippet;
  snippet.x = Eigen::ArrayXd::LinSpaced(10, 0.0, 9.0);
  snippet.y = (-snippet.x / 16.4).exp() * 100.0;
  try {
    fit_lifetime(snippet, 16.4);  // 9 ns window for a 16 ns guess
    FAIL("expected WindowTooShort");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::WindowTooShort);
  }
}

TEST_CASE("purcell spectrum pointwise arithmetic") {
  const Eigen::ArrayXd grid = Eigen::ArrayXd::LinSpaced(101, 630.0, 700.0);
  const Spectrum bare = synthetic_bare_spectrum(grid, 100.0);

  Spectrum same = bare;
  const PurcellSpectrum unit = purcell_spectrum(same, bare, 12.0, 12.0);
  for (Eigen::Index i = 0; i < unit.lambda.size(); ++i)
    if (unit.valid[i]) CHECK(unit.f[i] == doctest::Approx(1.0).epsilon(1e-12));

  Spectrum doubled = bare;
  doubled.y *= 2.0;
  const PurcellSpectrum two = purcell_spectrum(doubled, bare, 12.7, 16.4);
  for (Eigen::Index i = 0; i < two.lambda.size(); ++i)
    if (two.valid[i]) CHECK(two.f[i] == doctest::Approx(2.0 * 16.4 / 12.7).epsilon(1e-12));
}

TEST_CASE("purcell spectrum is scale invariant and masks weak bins") {
  const Eigen::ArrayXd grid = Eigen::ArrayXd::LinSpaced(201, 610.0, 760.0);
  Spectrum bare;
  bare.x = grid;
  bare.y = 50.0 * (-(grid - 680.0).square() / (2.0 * 10.0 * 10.0)).exp() + 1e-9;
  Spectrum coupled = bare;
  coupled.y *= 1.7;

  const PurcellSpectrum a = purcell_spectrum(coupled, bare, 12.7, 16.4);
  Spectrum bare10 = bare, coupled10 = coupled;
  bare10.y *= 10.0;
  coupled10.y *= 10.0;
  const PurcellSpectrum b = purcell_spectrum(coupled10, bare10, 12.7, 16.4);
  CHECK((a.f - b.f).abs().maxCoeff() < 1e-12);

  // the 610 nm edge of the synthetic emitter is far below 1% of its maximum
  CHECK_FALSE(a.valid[0]);
  CHECK(a.valid.cast<int>().sum() > 0);
}

TEST_CASE("purcell spectrum needs overlapping support") {
  Spectrum left, right;
  left.x = Eigen::ArrayXd::LinSpaced(10, 600.0, 620.0);
  left.y = Eigen::ArrayXd::Ones(10);
  right.x = Eigen::ArrayXd::LinSpaced(10, 650.0, 680.0);
  right.y = Eigen::ArrayXd::Ones(10);
  try {
    purcell_spectrum(left, right, 10.0, 10.0);
    FAIL("expected NoOverlap");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::NoOverlap);
  }
}

TEST_CASE("branching fractions") {
  EmissionBudget b;
  b.channel_rates = Eigen::ArrayXd::Constant(1, 0.25);
  b.collection_eff = Eigen::ArrayXd::Constant(1, 1.0);
  b.gamma_nr = 0.0;
  const Branching single = branching_fractions(b);
  CHECK(single.beta[0] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(single.nonradiative_fraction == doctest::Approx(0.0).scale(1.0).epsilon(1e-15));

  b.channel_rates = Eigen::ArrayXd::Constant(4, 0.1);
  b.collection_eff = Eigen::ArrayXd::Constant(4, 1.0);
  const Branching uniform = branching_fractions(b);
  for (Eigen::Index i = 0; i < 4; ++i)
    CHECK(uniform.beta[i] == doctest::Approx(0.25).epsilon(1e-15));

  b.channel_rates.resize(2);
  b.channel_rates << 1.0, 3.0;
  b.collection_eff = Eigen::ArrayXd::Constant(2, 1.0);
  b.gamma_nr = 1.0;
  const Branching mixed = branching_fractions(b);
  CHECK(mixed.beta[0] == doctest::Approx(0.2).epsilon(1e-15));
  CHECK(mixed.beta[1] == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(mixed.nonradiative_fraction == doctest::Approx(0.2).epsilon(1e-12));
}

TEST_CASE("intensity model linearity and rate-ratio collapse") {
  EmissionBudget b;
  b.pump_rate = 2.0;
  b.proportionality = 1.5;
  b.channel_rates.resize(3);
  b.channel_rates << 0.2, 0.5, 0.1;
  b.collection_eff.resize(3);
  b.collection_eff << 0.3, 0.0, 0.9;
  b.gamma_nr = 0.4;

  const Eigen::ArrayXd i1 = intensity_model(b);
  CHECK(i1[1] == 0.0);  // eta = 0 collects nothing

  EmissionBudget b2 = b;
  b2.pump_rate *= 2.0;
  const Eigen::ArrayXd i2 = intensity_model(b2);
  CHECK((i2 - 2.0 * i1).abs().maxCoeff() < 1e-15);

  // with equal pump and collection the intensity ratio reduces to rate ratios
  Rng rng(12);
  for (int k = 0; k < 20; ++k) {
    EmissionBudget cav = b, bulk = b;
    cav.channel_rates = Eigen::ArrayXd::NullaryExpr(3, [&](Eigen::Index) {
      return rng.uniform(0.05, 2.0);
    });
    bulk.channel_rates = Eigen::ArrayXd::NullaryExpr(3, [&](Eigen::Index) {
      return rng.uniform(0.05, 2.0);
    });
    cav.gamma_nr = rng.uniform(0.0, 1.0);
    bulk.gamma_nr = rng.uniform(0.0, 1.0);
    const Eigen::ArrayXd ic = intensity_model(cav);
    const Eigen::ArrayXd i0 = intensity_model(bulk);
    for (Eigen::Index j = 0; j < 3; ++j) {
      if (b.collection_eff[j] == 0.0) continue;
      const double expected = cav.channel_rates[j] * bulk.total_rate() /
                              (bulk.channel_rates[j] * cav.total_rate());
      CHECK(ic[j] / i0[j] == doctest::Approx(expected).epsilon(1e-12));
    }
  }
}
