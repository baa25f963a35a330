#pragma once

#include <Eigen/Dense>

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

// Shared domain types and validation. Unit convention used throughout:
// wavelengths in nm, times in ns, rates angular in rad/ns with
// omega = 2*pi*c_light/lambda (see README for the rate-scale convention).

namespace scm {

inline constexpr double c_light = 299792.458;
inline constexpr double pi = 3.14159265358979323846;

template <typename T>
T omega_from_lambda(const T& lambda_nm) {
  return T(2.0 * pi * c_light / lambda_nm);
}

template <typename T>
T lambda_from_omega(const T& omega) {
  return T(2.0 * pi * c_light / omega);
}

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

enum class ErrorKind {
  NonMonotonicGrid,
  ToleranceNotMet,
  DivergentIntegral,
  ZeroRate,
  GridOutsideBaseline,
  DegenerateJacobian,
  WindowTooShort,
  NoOverlap,
  GridMismatch,
  ZeroResponse,
  SingularRateMatrix,
  InvalidRequest,
  IoFailure,
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message);
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

/// One failed validation rule: which field, which rule.
struct Violation {
  std::string field;
  std::string rule;
};

class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(std::vector<Violation> violations);
  const std::vector<Violation>& violations() const { return violations_; }

 private:
  std::vector<Violation> violations_;
};

// ---------------------------------------------------------------------------
// Sampled series (the I/O currency for spectra and time traces)
// ---------------------------------------------------------------------------

/// Sampled (x, y) series; x strictly increasing, both finite.
struct Series {
  Eigen::ArrayXd x;
  Eigen::ArrayXd y;
  std::string x_unit = "nm";
  std::string y_unit = "counts";

  Eigen::Index size() const { return x.size(); }
  std::vector<Violation> check() const;
};

using Spectrum = Series;
using TimeTrace = Series;

/// Linear interpolation; throws GridOutsideBaseline for queries off support.
double interp_linear(const Series& s, double xq);
Eigen::ArrayXd interp_linear(const Series& s, const Eigen::ArrayXd& xq);

/// Convert a wavelength-axis spectrum to angular frequency (reverses order
/// so x stays increasing), and back.
Spectrum to_omega_axis(const Spectrum& s);
Spectrum to_lambda_axis(const Spectrum& s);

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

struct CavityMode {
  double lambda_c = 0;            // resonance wavelength, nm
  double q_factor = 0;            // dimensionless
  double lattice_a = 176.0;       // photonic-crystal lattice period, nm
  double envelope_wx = 352.0;     // in-plane Gaussian envelope width, nm
  double envelope_wy = 176.0;     // in-plane Gaussian envelope width, nm
  double z_decay = 100.0;         // evanescent 1/e intensity decay length, nm
  double polarization_angle = 0;  // radians in the slab plane
  std::optional<double> mode_volume;  // (lambda/n)^3, metadata only
  double n_slab = 3.4;

  std::vector<Violation> check() const;
};

double omega_c(const CavityMode& mode);
/// Half width at half maximum of |L(omega)|^2: omega_c / (2 Q), rad/ns.
double kappa_of(const CavityMode& mode);
/// Cavity energy (population) decay rate: omega_c / Q, rad/ns.
double kappa_energy(const CavityMode& mode);
/// Wavelength FWHM of the resonance: lambda_c / Q, nm.
double lambda_fwhm(const CavityMode& mode);

struct Emitter {
  Spectrum bare_spectrum;                   // I0(lambda), x in nm
  double tau0 = 0;                          // bare lifetime, ns
  Eigen::Vector3d position{0.0, 0.0, 0.0};  // nm, cavity frame
  double dipole_angle = 0;                  // radians in the slab plane
  double zero_field_split = 2.87;           // GHz
  double gyromagnetic_ratio = 28.0;         // GHz/T
  double contrast = 0.3;                    // in (0, 1]

  std::vector<Violation> check() const;
};

/// Open-system rate set. kappa is the cavity population decay rate
/// (the same quantity as kappa_energy of a CavityMode); gamma the emitter
/// population decay; gamma_d pure dephasing. All rad/ns.
struct CoupledSystemParams {
  double detuning = 0;  // cavity minus emitter, rad/ns
  double g = 0;         // coupling rate, rad/ns
  double kappa = 0;
  double gamma = 0;
  double gamma_d = 0;

  std::vector<Violation> check() const;
};

/// Relative detection weights of the emitter channel, the cavity channel,
/// and their interference, plus the collection phase offset.
struct DetectionCoeffs {
  double c_nv = 1;
  double c_cav = 0;
  double c_int = 0;
  double delta_phi = 0;  // radians

  std::vector<Violation> check() const;
};

struct EmissionBudget {
  double pump_rate = 1;                // arbitrary units
  Eigen::ArrayXd collection_eff;       // per channel, in [0, 1]
  double proportionality = 1;          // arbitrary units
  Eigen::ArrayXd channel_rates;        // gamma_j, rad/ns
  double gamma_nr = 0;                 // nonradiative rate, rad/ns

  double total_rate() const { return channel_rates.sum() + gamma_nr; }
  std::vector<Violation> check() const;
};

/// Throws ValidationError listing every violated invariant; returns the
/// value unchanged when all checks pass.
template <typename T>
const T& validate(const T& value) {
  auto violations = value.check();
  if (!violations.empty()) throw ValidationError(std::move(violations));
  return value;
}

}  // namespace scm
