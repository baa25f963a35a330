#pragma once

// Detected-spectrum line model, spectrum/lifetime fitting, and the rate
// algebra that turns intensity ratios plus lifetimes into Purcell factors.

#include <Eigen/Dense>
#include <complex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "scm/model.hpp"

namespace scm {

// L(omega) = 1/(1 + i(omega - omega_c)/kappa_hwhm)
std::complex<double> lorentzian(double omega, double omega_c, double kappa_hwhm);

struct ModePeak {
  double omega_c = 0.0;     // rad/ns
  double kappa_hwhm = 0.0;  // rad/ns
  double f_c = 0.0;
};

// S_d(omega) = baseline(omega) * [c_nv + sum_m c_cav f_c |L_m|^2
//                                 + 2 c_int Re(e^{i dphi} sqrt(f_c) L_m)]
Spectrum detected_spectrum(const DetectionCoeffs& coeffs, const std::vector<ModePeak>& modes,
                           const Spectrum& nv_baseline, const Eigen::ArrayXd& omega_grid);

struct FitMode {
  double lambda_c = 0.0;  // nm
  double q_factor = 0.0;
  double f_c = 0.0;

  ModePeak to_peak() const;
};

// wavelength-domain frontend; baseline sampled in nm
Spectrum detected_spectrum_lambda(const DetectionCoeffs& coeffs, const std::vector<FitMode>& modes,
                                  const Spectrum& nv_baseline, const Eigen::ArrayXd& lambda_grid);

struct SpectrumFit {
  std::vector<FitMode> modes;
  DetectionCoeffs coeffs;
  double residual_rms = 0.0;
  Eigen::MatrixXd covariance;  // over the free parameters, fit order
  std::vector<std::string> free_names;
  int iterations = 0;
  bool converged = false;
};

enum class FitWeights { Poisson, Uniform };

// fixed: any of {c_nv, c_cav, c_int, delta_phi, lambda_c, q_factor, f_c};
// mode-shape names freeze that field across all modes
SpectrumFit fit_spectrum(const Spectrum& data, const Spectrum& nv_baseline, const SpectrumFit& init,
                         const std::set<std::string>& fixed = {},
                         FitWeights weights = FitWeights::Poisson, int max_iterations = 200);

struct LifetimeFit {
  double tau = 0.0;  // ns
  double amplitude = 0.0;
  double baseline = 0.0;
  double tau_stderr = 0.0;
  bool converged = false;
  int iterations = 0;
};

// A exp(-t/tau) + B over a window starting at the trace peak (or window_start)
LifetimeFit fit_lifetime(const TimeTrace& trace, double tau_guess,
                         std::optional<double> window_start = std::nullopt);

struct PurcellSpectrum {
  Eigen::ArrayXd lambda;
  Eigen::ArrayXd f;
  Eigen::Array<bool, Eigen::Dynamic, 1> valid;  // false where the bare spectrum is masked
};

// F(lambda) = I_c(lambda) tau_0 / (I_0(lambda) tau_c); bare bins below 1% of
// the bare maximum are masked
PurcellSpectrum purcell_spectrum(const Spectrum& i_coupled, const Spectrum& i_bare, double tau_c,
                                 double tau_0);

struct Branching {
  Eigen::ArrayXd beta;
  double nonradiative_fraction = 0.0;
};

Branching branching_fractions(const EmissionBudget& budget);

// I_j = c p eta_j gamma_j / Gamma
Eigen::ArrayXd intensity_model(const EmissionBudget& budget);

// smooth emitter-like baseline (narrow zero-phonon line plus broad sideband)
// for synthetic data; arbitrary units, strictly positive on 600-780 nm
Spectrum synthetic_bare_spectrum(const Eigen::ArrayXd& lambda_grid, double scale = 1.0);

}  // namespace scm
