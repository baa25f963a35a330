#pragma once

// Photon statistics of a pumped three-level emitter (ground/excited/shelf)
// and ground-state spin signals: ESR dips and Rabi flopping.

#include <Eigen/Dense>
#include <cstdint>

#include "scm/model.hpp"

namespace scm {

struct ThreeLevelRates {
  double k_pump = 0.0;      // 1/ns, ground -> excited
  double k_decay = 0.0;     // 1/ns, excited -> ground (radiative)
  double k_shelve = 0.0;    // 1/ns, excited -> shelf
  double k_deshelve = 0.0;  // 1/ns, shelf -> ground

  std::vector<Violation> check() const;
};

// dp/dt = M p with populations ordered (ground, excited, shelf)
Eigen::Matrix3d rate_matrix(const ThreeLevelRates& rates);

// normalized stationary populations; SingularRateMatrix when no emissive
// steady state exists
Eigen::Vector3d steady_state(const ThreeLevelRates& rates);

// g2(tau) = p_e(|tau|)/p_e(inf) starting from the post-detection ground state
TimeTrace g2_rate_model(const ThreeLevelRates& rates, const Eigen::ArrayXd& tau_grid);

struct HbtResult {
  TimeTrace histogram;    // bin centers, normalized coincidences (g2 estimate)
  Eigen::ArrayXd counts;  // raw coincidences per bin
  std::int64_t n_photons_a = 0;
  std::int64_t n_photons_b = 0;
  double duration = 0.0;  // ns
};

// stochastic emission trajectory, 50/50 split onto two detectors, start-stop
// histogram over all pairs within the window; tau_max = 0 picks 100 bins
HbtResult hbt_histogram(const ThreeLevelRates& rates, double total_time, double bin_width,
                        std::uint64_t seed, double tau_max = 0.0);

struct SpinParams {
  double zero_field_split = 2.87;  // GHz
  double zeeman_split = 0.0;       // GHz, splits the dip pair
  double linewidth = 0.01;         // GHz, Lorentzian half width
  double contrast = 0.3;
  double rabi_freq = 0.0;          // rad/ns
  double t2_star = 0.0;            // ns, used when the envelope flag is set

  std::vector<Violation> check() const;
};

// relative fluorescence 1 - contrast*(dip at D-delta/2 + dip at D+delta/2)
Spectrum esr_spectrum(const SpinParams& spin, const Eigen::ArrayXd& nu_grid);

// 1 - contrast*sin^2(Omega t/2), optionally damped by exp(-t/t2_star)
TimeTrace rabi_trace(const SpinParams& spin, const Eigen::ArrayXd& pulse_durations,
                     bool envelope = false);

}  // namespace scm
