#include "scm/qstats.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>
#include <vector>

#include "scm/random.hpp"

namespace scm {

std::vector<Violation> ThreeLevelRates::check() const {
  std::vector<Violation> v;
  auto nonneg = [&](double x, const char* name) {
    if (!(std::isfinite(x) && x >= 0.0)) v.push_back({name, ">= 0"});
  };
  nonneg(k_pump, "k_pump");
  nonneg(k_shelve, "k_shelve");
  nonneg(k_deshelve, "k_deshelve");
  if (!(std::isfinite(k_decay) && k_decay > 0.0)) v.push_back({"k_decay", "> 0"});
  return v;
}

Eigen::Matrix3d rate_matrix(const ThreeLevelRates& r) {
  validate(r);
  Eigen::Matrix3d m;
  m << -r.k_pump, r.k_decay, r.k_deshelve,
       r.k_pump, -(r.k_decay + r.k_shelve), 0.0,
       0.0, r.k_shelve, -r.k_deshelve;
  return m;
}

Eigen::Vector3d steady_state(const ThreeLevelRates& rates) {
  Eigen::Matrix3d m = rate_matrix(rates);
  // replace one balance row with normalization
  m.row(0) = Eigen::RowVector3d::Ones();
  const Eigen::FullPivLU<Eigen::Matrix3d> lu(m);
  if (!lu.isInvertible())
    throw Error(ErrorKind::SingularRateMatrix, "rate matrix has no unique steady state");
  const Eigen::Vector3d p = lu.solve(Eigen::Vector3d(1.0, 0.0, 0.0));
  if (!(p[1] > 1e-300))
    throw Error(ErrorKind::SingularRateMatrix, "steady state carries no excited population");
  return p;
}

TimeTrace g2_rate_model(const ThreeLevelRates& rates, const Eigen::ArrayXd& tau_grid) {
  for (Eigen::Index i = 1; i < tau_grid.size(); ++i)
    if (!(tau_grid[i] > tau_grid[i - 1]))
      throw Error(ErrorKind::NonMonotonicGrid, "tau grid must strictly increase");

  const Eigen::Matrix3d m = rate_matrix(rates);
  const double pe_inf = steady_state(rates)[1];
  const Eigen::Vector3d p0(1.0, 0.0, 0.0);  // detection resets to ground

  TimeTrace out;
  out.x = tau_grid;
  out.x_unit = "ns";
  out.y_unit = "g2";
  out.y.resize(tau_grid.size());
  for (Eigen::Index i = 0; i < tau_grid.size(); ++i) {
    const Eigen::Matrix3d prop = (m * std::abs(tau_grid[i])).exp();
    out.y[i] = (prop * p0)[1] / pe_inf;
  }
  return out;
}

HbtResult hbt_histogram(const ThreeLevelRates& rates, double total_time, double bin_width,
                        std::uint64_t seed, double tau_max) {
  validate(rates);
  if (!(bin_width > 0.0)) throw Error(ErrorKind::InvalidRequest, "bin_width must be > 0");
  if (!(total_time > 0.0)) throw Error(ErrorKind::InvalidRequest, "total_time must be > 0");
  if (tau_max <= 0.0) tau_max = 100.0 * bin_width;
  const auto n_side = static_cast<Eigen::Index>(std::ceil(tau_max / bin_width - 1e-12));
  const Eigen::Index n_bins = 2 * n_side;
  const double window = n_side * bin_width;

  Rng rng(seed);
  std::vector<double> clicks_a, clicks_b;

  enum { kGround, kExcited, kShelf } state = kGround;
  double t = 0.0;
  while (true) {
    double rate_total;
    switch (state) {
      case kGround: rate_total = rates.k_pump; break;
      case kExcited: rate_total = rates.k_decay + rates.k_shelve; break;
      default: rate_total = rates.k_deshelve; break;
    }
    if (rate_total <= 0.0) break;  // stuck (e.g. zero pump): no further events
    t += rng.exponential(rate_total);
    if (t >= total_time) break;
    switch (state) {
      case kGround:
        state = kExcited;
        break;
      case kExcited:
        if (rng.uniform() * rate_total < rates.k_decay) {
          state = kGround;
          (rng.uniform() < 0.5 ? clicks_a : clicks_b).push_back(t);
        } else {
          state = kShelf;
        }
        break;
      default:
        state = kGround;
        break;
    }
  }

  HbtResult out;
  out.duration = total_time;
  out.n_photons_a = static_cast<std::int64_t>(clicks_a.size());
  out.n_photons_b = static_cast<std::int64_t>(clicks_b.size());
  out.counts.setZero(n_bins);

  // all A-B pairs within the window, two-pointer sweep
  std::size_t lo = 0;
  for (const double ta : clicks_a) {
    while (lo < clicks_b.size() && clicks_b[lo] < ta - window) ++lo;
    for (std::size_t j = lo; j < clicks_b.size(); ++j) {
      const double tau = clicks_b[j] - ta;
      if (tau >= window) break;
      const auto bin = static_cast<Eigen::Index>(std::floor((tau + window) / bin_width));
      if (bin >= 0 && bin < n_bins) out.counts[bin] += 1.0;
    }
  }

  out.histogram.x.resize(n_bins);
  out.histogram.y.resize(n_bins);
  out.histogram.x_unit = "ns";
  out.histogram.y_unit = "g2";
  const double pair_density =
      static_cast<double>(out.n_photons_a) * static_cast<double>(out.n_photons_b) / total_time;
  for (Eigen::Index b = 0; b < n_bins; ++b) {
    const double center = (b - n_side + 0.5) * bin_width;
    out.histogram.x[b] = center;
    const double expected =
        pair_density * bin_width * std::max(1.0 - std::abs(center) / total_time, 1e-12);
    out.histogram.y[b] = expected > 0.0 ? out.counts[b] / expected : 0.0;
  }
  return out;
}

std::vector<Violation> SpinParams::check() const {
  std::vector<Violation> v;
  if (!(std::isfinite(zero_field_split) && zero_field_split > 0.0))
    v.push_back({"zero_field_split", "> 0"});
  if (!(std::isfinite(zeeman_split) && zeeman_split >= 0.0)) v.push_back({"zeeman_split", ">= 0"});
  if (!(std::isfinite(linewidth) && linewidth > 0.0)) v.push_back({"linewidth", "> 0"});
  if (!(std::isfinite(contrast) && contrast > 0.0 && contrast <= 1.0))
    v.push_back({"contrast", "in (0, 1]"});
  if (!(std::isfinite(rabi_freq) && rabi_freq >= 0.0)) v.push_back({"rabi_freq", ">= 0"});
  if (!(std::isfinite(t2_star) && t2_star >= 0.0)) v.push_back({"t2_star", ">= 0"});
  return v;
}

Spectrum esr_spectrum(const SpinParams& spin, const Eigen::ArrayXd& nu_grid) {
  validate(spin);
  for (Eigen::Index i = 1; i < nu_grid.size(); ++i)
    if (!(nu_grid[i] > nu_grid[i - 1]))
      throw Error(ErrorKind::NonMonotonicGrid, "frequency grid must strictly increase");

  auto dip = [&](double nu, double center) {
    const double d = (nu - center) / spin.linewidth;
    return 1.0 / (1.0 + d * d);
  };
  const double lo = spin.zero_field_split - spin.zeeman_split / 2.0;
  const double hi = spin.zero_field_split + spin.zeeman_split / 2.0;

  Spectrum out;
  out.x = nu_grid;
  out.x_unit = "GHz";
  out.y_unit = "relative";
  out.y.resize(nu_grid.size());
  for (Eigen::Index i = 0; i < nu_grid.size(); ++i)
    out.y[i] = 1.0 - spin.contrast * (dip(nu_grid[i], lo) + dip(nu_grid[i], hi));
  return out;
}

TimeTrace rabi_trace(const SpinParams& spin, const Eigen::ArrayXd& pulse_durations,
                     bool envelope) {
  validate(spin);
  if (!(spin.rabi_freq > 0.0)) throw Error(ErrorKind::ZeroRate, "rabi_freq must be > 0");
  if (envelope && !(spin.t2_star > 0.0))
    throw Error(ErrorKind::InvalidRequest, "envelope needs t2_star > 0");
  for (Eigen::Index i = 1; i < pulse_durations.size(); ++i)
    if (!(pulse_durations[i] > pulse_durations[i - 1]))
      throw Error(ErrorKind::NonMonotonicGrid, "duration grid must strictly increase");

  TimeTrace out;
  out.x = pulse_durations;
  out.x_unit = "ns";
  out.y_unit = "relative";
  out.y.resize(pulse_durations.size());
  for (Eigen::Index i = 0; i < pulse_durations.size(); ++i) {
    const double t = pulse_durations[i];
    const double s = std::sin(spin.rabi_freq * t / 2.0);
    const double damp = envelope ? std::exp(-t / spin.t2_star) : 1.0;
    out.y[i] = 1.0 - spin.contrast * s * s * damp;
  }
  return out;
}

}  // namespace scm
