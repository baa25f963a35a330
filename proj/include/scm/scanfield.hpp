#pragma once

// Parametric cavity-field model, scan simulation along a positioner track,
// geometry fitting against measured enhancement series, and the convolution /
// deconvolution imaging model for extended samples.

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "scm/io.hpp"
#include "scm/model.hpp"
#include "scm/spectro.hpp"

namespace scm {

struct FieldModel {
  CavityMode mode;
  double f_c_max = 1.0;
  // optional gridded |E|^2 override on the z=0 plane, centered on the defect;
  // replaces the in-plane factors, z decay stays exponential
  std::optional<FieldGrid> sampled;
};

// I(x,y,z) = cos^2(pi x/a) exp(-2x^2/wx^2) exp(-2y^2/wy^2) exp(-z/z_decay),
// equal to 1 at the on-surface antinode
double mode_intensity(const FieldModel& field, const Eigen::Vector3d& r);

// f_c_max * intensity * cos^2(dipole_angle - polarization_angle)
double fc_at(const FieldModel& field, const Eigen::Vector3d& r, double dipole_angle);

// scale f_c_max so the peak of fc_at over x at the given (y, z, theta) hits
// target_fc
double calibrate_fc_max(const FieldModel& field, double target_fc, double y, double z,
                        double theta);

struct ScanTrack {
  Eigen::Matrix<double, Eigen::Dynamic, 3> positions;  // nm, row per stop
  double commanded_step = 0.0;                         // nm

  Eigen::Index size() const { return positions.rows(); }
  void append(const ScanTrack& other);
};

ScanTrack make_linear_track(const Eigen::Vector3d& start, const Eigen::Vector3d& direction,
                            double step, int n_steps, double slip_sigma = 0.0,
                            std::uint64_t seed = 0);

struct ScanOptions {
  double noise_peak_counts = 0.0;  // 0 keeps spectra noiseless
  std::uint64_t seed = 0;
  int threads = 1;
};

struct ScanResult {
  ScanTrack track;
  std::vector<Spectrum> spectra;
  Eigen::MatrixXd fc;  // track positions x modes, noiseless model values
};

// at each stop the emitter sits at emitter.position - track position relative
// to the cavity; spectra use the emitter's bare spectrum as baseline
ScanResult simulate_scan(const std::vector<FieldModel>& fields, const Emitter& emitter,
                         const DetectionCoeffs& coeffs, const ScanTrack& track,
                         const Eigen::ArrayXd& lambda_grid, const ScanOptions& opts = {});

struct TrackGeometry {
  double x_offset = 0.0;  // emitter position, cavity frame, nm
  double y = 0.0;
  double z = 0.0;
  double theta = 0.0;     // dipole angle, rad
  double fc_scale = 1.0;  // common multiplier on every f_c_max
};

struct TrackFitOptions {
  TrackGeometry init;
  std::set<std::string> free = {"z", "y", "theta"};  // of {x_offset,y,z,theta,fc_scale}
  int max_iterations = 200;
};

struct TrackFit {
  TrackGeometry geometry;
  std::vector<std::string> free_names;
  Eigen::VectorXd stderrs;  // aligned with free_names
  double residual_rms = 0.0;
  int iterations = 0;
  bool converged = false;
};

// least squares of the fc_at model against measured.fc over all modes
TrackFit fit_track(const ScanResult& measured, const std::vector<FieldModel>& fields,
                   const TrackFitOptions& opts);

// discrete convolution along the scan coordinate, trapezoidal weights,
// zero-padded boundaries; response sampled on the same spacing around 0
Series convolve_sample(const Series& sample, const Series& response);
FieldGrid convolve_sample(const FieldGrid& sample, const FieldGrid& response);

enum class DeconvolveMethod { RegularizedInverse, Multiplicative };

struct DeconvolveOptions {
  DeconvolveMethod method = DeconvolveMethod::RegularizedInverse;
  double epsilon_rel = 1e-3;  // of max |response spectrum|^2
  int iterations = 50;        // multiplicative scheme only
};

Series deconvolve(const Series& pl, const Series& response, const DeconvolveOptions& opts = {});
FieldGrid deconvolve(const FieldGrid& pl, const FieldGrid& response,
                     const DeconvolveOptions& opts = {});

}  // namespace scm
