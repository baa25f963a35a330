#include "scm/model.hpp"

#include <cmath>
#include <sstream>

namespace scm {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::NonMonotonicGrid: return "NonMonotonicGrid";
    case ErrorKind::ToleranceNotMet: return "ToleranceNotMet";
    case ErrorKind::DivergentIntegral: return "DivergentIntegral";
    case ErrorKind::ZeroRate: return "ZeroRate";
    case ErrorKind::GridOutsideBaseline: return "GridOutsideBaseline";
    case ErrorKind::DegenerateJacobian: return "DegenerateJacobian";
    case ErrorKind::WindowTooShort: return "WindowTooShort";
    case ErrorKind::NoOverlap: return "NoOverlap";
    case ErrorKind::GridMismatch: return "GridMismatch";
    case ErrorKind::ZeroResponse: return "ZeroResponse";
    case ErrorKind::SingularRateMatrix: return "SingularRateMatrix";
    case ErrorKind::InvalidRequest: return "InvalidRequest";
    case ErrorKind::IoFailure: return "IoFailure";
  }
  return "Unknown";
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

namespace {

std::string format_violations(const std::vector<Violation>& violations) {
  std::ostringstream oss;
  oss << "validation failed:";
  for (const auto& v : violations) oss << " [" << v.field << ": " << v.rule << "]";
  return oss.str();
}

void require(std::vector<Violation>& out, bool ok, const char* field, const char* rule) {
  if (!ok) out.push_back({field, rule});
}

bool strictly_increasing(const Eigen::ArrayXd& x) {
  for (Eigen::Index i = 1; i < x.size(); ++i)
    if (!(x[i] > x[i - 1])) return false;
  return true;
}

}  // namespace

ValidationError::ValidationError(std::vector<Violation> violations)
    : std::runtime_error(format_violations(violations)), violations_(std::move(violations)) {}

std::vector<Violation> Series::check() const {
  std::vector<Violation> v;
  require(v, x.size() == y.size(), "x/y", "lengths equal");
  require(v, x.allFinite(), "x", "finite");
  require(v, y.allFinite(), "y", "finite");
  require(v, strictly_increasing(x), "x", "strictly increasing");
  return v;
}

double interp_linear(const Series& s, double xq) {
  if (s.size() < 2 || xq < s.x[0] || xq > s.x[s.size() - 1])
    throw Error(ErrorKind::GridOutsideBaseline,
                "query " + std::to_string(xq) + " outside series support");
  // binary search for the bracketing interval
  Eigen::Index lo = 0, hi = s.size() - 1;
  while (hi - lo > 1) {
    Eigen::Index mid = (lo + hi) / 2;
    (s.x[mid] <= xq ? lo : hi) = mid;
  }
  const double t = (xq - s.x[lo]) / (s.x[hi] - s.x[lo]);
  return s.y[lo] + t * (s.y[hi] - s.y[lo]);
}

Eigen::ArrayXd interp_linear(const Series& s, const Eigen::ArrayXd& xq) {
  Eigen::ArrayXd out(xq.size());
  for (Eigen::Index i = 0; i < xq.size(); ++i) out[i] = interp_linear(s, xq[i]);
  return out;
}

Spectrum to_omega_axis(const Spectrum& s) {
  Spectrum out;
  out.x = omega_from_lambda(s.x.reverse().eval());
  out.y = s.y.reverse();
  out.x_unit = "rad/ns";
  out.y_unit = s.y_unit;
  return out;
}

Spectrum to_lambda_axis(const Spectrum& s) {
  Spectrum out;
  out.x = lambda_from_omega(s.x.reverse().eval());
  out.y = s.y.reverse();
  out.x_unit = "nm";
  out.y_unit = s.y_unit;
  return out;
}

std::vector<Violation> CavityMode::check() const {
  std::vector<Violation> v;
  require(v, std::isfinite(lambda_c) && lambda_c > 0, "lambda_c", "> 0");
  require(v, std::isfinite(q_factor) && q_factor > 0, "q_factor", "> 0");
  require(v, std::isfinite(lattice_a) && lattice_a > 0, "lattice_a", "> 0");
  require(v, std::isfinite(envelope_wx) && envelope_wx > 0, "envelope_wx", "> 0");
  require(v, std::isfinite(envelope_wy) && envelope_wy > 0, "envelope_wy", "> 0");
  require(v, std::isfinite(z_decay) && z_decay > 0, "z_decay", "> 0");
  require(v, std::isfinite(polarization_angle), "polarization_angle", "finite");
  require(v, std::isfinite(n_slab) && n_slab > 0, "n_slab", "> 0");
  if (mode_volume) require(v, std::isfinite(*mode_volume) && *mode_volume > 0, "mode_volume", "> 0");
  if (v.empty())
    require(v, kappa_energy(*this) > 0, "kappa", "derived linewidth strictly positive");
  return v;
}

double omega_c(const CavityMode& mode) { return omega_from_lambda(mode.lambda_c); }

double kappa_of(const CavityMode& mode) { return omega_c(mode) / (2.0 * mode.q_factor); }

double kappa_energy(const CavityMode& mode) { return omega_c(mode) / mode.q_factor; }

double lambda_fwhm(const CavityMode& mode) { return mode.lambda_c / mode.q_factor; }

std::vector<Violation> Emitter::check() const {
  std::vector<Violation> v = bare_spectrum.check();
  for (auto& item : v) item.field = "bare_spectrum." + item.field;
  require(v, std::isfinite(tau0) && tau0 > 0, "tau0", "> 0");
  require(v, position.allFinite(), "position", "finite");
  require(v, std::isfinite(dipole_angle), "dipole_angle", "finite");
  require(v, std::isfinite(zero_field_split) && zero_field_split > 0, "zero_field_split", "> 0");
  require(v, std::isfinite(gyromagnetic_ratio), "gyromagnetic_ratio", "finite");
  require(v, std::isfinite(contrast) && contrast > 0 && contrast <= 1, "contrast", "in (0, 1]");
  return v;
}

std::vector<Violation> CoupledSystemParams::check() const {
  std::vector<Violation> v;
  require(v, std::isfinite(detuning), "detuning", "finite");
  require(v, std::isfinite(g) && g >= 0, "g", ">= 0");
  require(v, std::isfinite(kappa) && kappa >= 0, "kappa", ">= 0");
  require(v, std::isfinite(gamma) && gamma >= 0, "gamma", ">= 0");
  require(v, std::isfinite(gamma_d) && gamma_d >= 0, "gamma_d", ">= 0");
  return v;
}

std::vector<Violation> DetectionCoeffs::check() const {
  std::vector<Violation> v;
  require(v, std::isfinite(c_nv) && c_nv >= 0, "c_nv", ">= 0");
  require(v, std::isfinite(c_cav) && c_cav >= 0, "c_cav", ">= 0");
  require(v, std::isfinite(c_int), "c_int", "finite");
  require(v, std::isfinite(delta_phi), "delta_phi", "finite");
  if (v.empty()) {
    // Cauchy-Schwarz bound on the interference weight (4-ulp slack).
    const double bound = std::sqrt(c_nv * c_cav);
    require(v, std::abs(c_int) <= bound * (1.0 + 4e-16) + 0.0,
            "c_int", "|c_int| <= sqrt(c_nv * c_cav)");
  }
  return v;
}

std::vector<Violation> EmissionBudget::check() const {
  std::vector<Violation> v;
  require(v, collection_eff.size() == channel_rates.size(), "collection_eff/channel_rates",
          "lengths equal");
  require(v, std::isfinite(pump_rate) && pump_rate >= 0, "pump_rate", ">= 0");
  require(v, std::isfinite(proportionality), "proportionality", "finite");
  require(v, collection_eff.size() == 0 ||
                 (collection_eff.allFinite() && (collection_eff >= 0.0).all() &&
                  (collection_eff <= 1.0).all()),
          "collection_eff", "in [0, 1]");
  require(v, channel_rates.size() == 0 ||
                 (channel_rates.allFinite() && (channel_rates >= 0.0).all()),
          "channel_rates", ">= 0");
  require(v, std::isfinite(gamma_nr) && gamma_nr >= 0, "gamma_nr", ">= 0");
  if (v.empty()) require(v, total_rate() > 0, "total_rate", "> 0");
  return v;
}

}  // namespace scm
