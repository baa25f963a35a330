#include "scm/scanfield.hpp"

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <thread>

#include "scm/fit.hpp"
#include "scm/random.hpp"

namespace scm {

namespace {

double grid_spacing(const Eigen::ArrayXd& x, const char* what) {
  if (x.size() < 2) throw Error(ErrorKind::GridMismatch, std::string(what) + ": grid too short");
  const double dx = x[1] - x[0];
  if (!(dx > 0.0)) throw Error(ErrorKind::GridMismatch, std::string(what) + ": grid not increasing");
  for (Eigen::Index i = 1; i < x.size(); ++i)
    if (std::abs((x[i] - x[i - 1]) - dx) > 1e-9 * dx)
      throw Error(ErrorKind::GridMismatch, std::string(what) + ": grid not uniform");
  return dx;
}

double bilinear(const FieldGrid& g, double x, double y) {
  // grid centered on the defect: col c at (c - (nx-1)/2) dx, row r likewise
  const double cx = (g.values.cols() - 1) / 2.0;
  const double cy = (g.values.rows() - 1) / 2.0;
  const double fc = x / g.dx + cx;
  const double fr = y / g.dy + cy;
  if (fc < 0.0 || fr < 0.0 || fc > g.values.cols() - 1 || fr > g.values.rows() - 1) return 0.0;
  const auto c0 = static_cast<Eigen::Index>(std::floor(fc));
  const auto r0 = static_cast<Eigen::Index>(std::floor(fr));
  const Eigen::Index c1 = std::min(c0 + 1, g.values.cols() - 1);
  const Eigen::Index r1 = std::min(r0 + 1, g.values.rows() - 1);
  const double tc = fc - c0, tr = fr - r0;
  return (1 - tr) * ((1 - tc) * g.values(r0, c0) + tc * g.values(r0, c1)) +
         tr * ((1 - tc) * g.values(r1, c0) + tc * g.values(r1, c1));
}

}  // namespace

double mode_intensity(const FieldModel& field, const Eigen::Vector3d& r) {
  const CavityMode& m = field.mode;
  const double axial = std::exp(-r.z() / m.z_decay);
  if (field.sampled) return bilinear(*field.sampled, r.x(), r.y()) * axial;
  const double standing = std::cos(pi * r.x() / m.lattice_a);
  return standing * standing *
         std::exp(-2.0 * r.x() * r.x() / (m.envelope_wx * m.envelope_wx)) *
         std::exp(-2.0 * r.y() * r.y() / (m.envelope_wy * m.envelope_wy)) * axial;
}

double fc_at(const FieldModel& field, const Eigen::Vector3d& r, double dipole_angle) {
  const double proj = std::cos(dipole_angle - field.mode.polarization_angle);
  return field.f_c_max * mode_intensity(field, r) * proj * proj;
}

double calibrate_fc_max(const FieldModel& field, double target_fc, double y, double z,
                        double theta) {
  if (!(target_fc >= 0.0))
    throw Error(ErrorKind::InvalidRequest, "calibration target must be >= 0");
  double peak = 0.0;
  const double span = 2.0 * std::max(field.mode.envelope_wx, field.mode.lattice_a);
  const int n = 2001;
  for (int i = 0; i < n; ++i) {
    const double x = -span + 2.0 * span * i / (n - 1);
    peak = std::max(peak, fc_at(field, {x, y, z}, theta));
  }
  if (peak <= 0.0)
    throw Error(ErrorKind::ZeroRate, "field vanishes along the calibration line");
  return field.f_c_max * target_fc / peak;
}

void ScanTrack::append(const ScanTrack& other) {
  const Eigen::Index n = positions.rows();
  positions.conservativeResize(n + other.positions.rows(), 3);
  positions.bottomRows(other.positions.rows()) = other.positions;
}

ScanTrack make_linear_track(const Eigen::Vector3d& start, const Eigen::Vector3d& direction,
                            double step, int n_steps, double slip_sigma, std::uint64_t seed) {
  if (n_steps < 2) throw Error(ErrorKind::InvalidRequest, "track needs at least 2 points");
  if (!(step > 0.0)) throw Error(ErrorKind::InvalidRequest, "step must be > 0");
  const double norm = direction.norm();
  if (!(norm > 0.0)) throw Error(ErrorKind::InvalidRequest, "direction must be nonzero");
  const Eigen::Vector3d dir = direction / norm;

  ScanTrack track;
  track.commanded_step = step;
  track.positions.resize(n_steps, 3);
  Rng rng(seed);
  double slip = 0.0;
  for (int i = 0; i < n_steps; ++i) {
    if (slip_sigma > 0.0 && i > 0) slip += rng.normal(0.0, slip_sigma);
    track.positions.row(i) = (start + (i * step + slip) * dir).transpose();
  }
  return track;
}

ScanResult simulate_scan(const std::vector<FieldModel>& fields, const Emitter& emitter,
                         const DetectionCoeffs& coeffs, const ScanTrack& track,
                         const Eigen::ArrayXd& lambda_grid, const ScanOptions& opts) {
  if (fields.empty()) throw Error(ErrorKind::InvalidRequest, "no field models given");
  if (track.size() < 2) throw Error(ErrorKind::InvalidRequest, "track needs at least 2 points");
  validate(emitter);
  validate(coeffs);

  const Eigen::Index n_pos = track.size();
  const auto n_modes = static_cast<Eigen::Index>(fields.size());

  ScanResult result;
  result.track = track;
  result.fc.resize(n_pos, n_modes);
  result.spectra.resize(static_cast<std::size_t>(n_pos));

  auto work = [&](Eigen::Index begin, Eigen::Index end) {
    std::vector<FitMode> modes(fields.size());
    for (Eigen::Index i = begin; i < end; ++i) {
      const Eigen::Vector3d rel = emitter.position - track.positions.row(i).transpose();
      for (Eigen::Index m = 0; m < n_modes; ++m) {
        const auto& f = fields[static_cast<std::size_t>(m)];
        result.fc(i, m) = fc_at(f, rel, emitter.dipole_angle);
        modes[static_cast<std::size_t>(m)] = {f.mode.lambda_c, f.mode.q_factor,
                                              result.fc(i, m)};
      }
      result.spectra[static_cast<std::size_t>(i)] =
          detected_spectrum_lambda(coeffs, modes, emitter.bare_spectrum, lambda_grid);
    }
  };

  const int n_threads = std::max(1, opts.threads);
  if (n_threads == 1 || n_pos < 4) {
    work(0, n_pos);
  } else {
    std::vector<std::thread> pool;
    const Eigen::Index chunk = (n_pos + n_threads - 1) / n_threads;
    for (int t = 0; t < n_threads; ++t) {
      const Eigen::Index begin = t * chunk;
      if (begin >= n_pos) break;
      pool.emplace_back(work, begin, std::min(begin + chunk, n_pos));
    }
    for (auto& th : pool) th.join();
  }

  if (opts.noise_peak_counts > 0.0) {
    double peak = 0.0;
    for (const auto& s : result.spectra) peak = std::max(peak, s.y.maxCoeff());
    if (peak > 0.0) {
      const double scale = opts.noise_peak_counts / peak;
      for (Eigen::Index i = 0; i < n_pos; ++i) {
        Rng rng(mix_seed(opts.seed, static_cast<std::uint64_t>(i)));
        auto& y = result.spectra[static_cast<std::size_t>(i)].y;
        for (Eigen::Index j = 0; j < y.size(); ++j)
          y[j] = static_cast<double>(rng.poisson(y[j] * scale));
      }
    }
  }
  return result;
}

namespace {

const std::vector<std::string> kGeometryNames = {"x_offset", "y", "z", "theta", "fc_scale"};

double* geometry_field(TrackGeometry& g, const std::string& name) {
  if (name == "x_offset") return &g.x_offset;
  if (name == "y") return &g.y;
  if (name == "z") return &g.z;
  if (name == "theta") return &g.theta;
  if (name == "fc_scale") return &g.fc_scale;
  return nullptr;
}

}  // namespace

TrackFit fit_track(const ScanResult& measured, const std::vector<FieldModel>& fields,
                   const TrackFitOptions& opts) {
  const Eigen::Index n_pos = measured.fc.rows();
  const auto n_modes = static_cast<Eigen::Index>(fields.size());
  if (n_pos < 10) throw Error(ErrorKind::InvalidRequest, "track fit needs >= 10 positions");
  if (measured.fc.cols() != n_modes)
    throw Error(ErrorKind::InvalidRequest, "field model count does not match fc columns");
  if (measured.track.size() != n_pos)
    throw Error(ErrorKind::InvalidRequest, "track length does not match fc rows");
  if (measured.fc.cwiseAbs().maxCoeff() <= 0.0)
    throw Error(ErrorKind::DegenerateJacobian, "all-zero enhancement series carries no information");

  std::vector<std::string> free_names;
  for (const auto& n : kGeometryNames)
    if (opts.free.count(n)) free_names.push_back(n);
  if (free_names.size() != opts.free.size())
    throw Error(ErrorKind::InvalidRequest, "unknown free parameter name");
  if (free_names.empty()) throw Error(ErrorKind::InvalidRequest, "no free parameters");

  TrackGeometry geo = opts.init;
  Eigen::VectorXd p0(static_cast<Eigen::Index>(free_names.size()));
  for (std::size_t i = 0; i < free_names.size(); ++i)
    p0[static_cast<Eigen::Index>(i)] = *geometry_field(geo, free_names[i]);

  auto unpack = [&](const Eigen::VectorXd& p) {
    TrackGeometry g = opts.init;
    for (std::size_t i = 0; i < free_names.size(); ++i)
      *geometry_field(g, free_names[i]) = p[static_cast<Eigen::Index>(i)];
    return g;
  };

  auto model_fc = [&](const TrackGeometry& g) {
    Eigen::MatrixXd fc(n_pos, n_modes);
    const Eigen::Vector3d emitter_pos(g.x_offset, g.y, g.z);
    for (Eigen::Index i = 0; i < n_pos; ++i) {
      const Eigen::Vector3d rel = emitter_pos - measured.track.positions.row(i).transpose();
      for (Eigen::Index m = 0; m < n_modes; ++m) {
        FieldModel f = fields[static_cast<std::size_t>(m)];
        f.f_c_max *= g.fc_scale;
        fc(i, m) = fc_at(f, rel, g.theta);
      }
    }
    return fc;
  };

  auto residuals = [&](const Eigen::VectorXd& p) -> Eigen::VectorXd {
    const Eigen::MatrixXd fc = model_fc(unpack(p));
    return (fc - measured.fc).reshaped();
  };
  auto feasible = [&](const Eigen::VectorXd& p) {
    const TrackGeometry g = unpack(p);
    return g.z >= 0.0 && g.fc_scale > 0.0;
  };

  FitOptions fit_opts;
  fit_opts.max_iterations = opts.max_iterations;
  FitResult res = fit_least_squares(residuals, p0, fit_opts, feasible);
  if (res.status == FitStatus::Degenerate)
    throw Error(ErrorKind::DegenerateJacobian, "track fit jacobian is rank-deficient");

  TrackFit out;
  out.geometry = unpack(res.params);
  out.free_names = free_names;
  out.stderrs = res.stderrs;
  out.iterations = res.iterations;
  out.converged = res.converged();
  out.residual_rms = std::sqrt(res.cost / static_cast<double>(n_pos * n_modes));
  return out;
}

Series convolve_sample(const Series& sample, const Series& response) {
  const double dx = grid_spacing(sample.x, "sample");
  const double dr = grid_spacing(response.x, "response");
  if (std::abs(dx - dr) > 1e-9 * dx)
    throw Error(ErrorKind::GridMismatch, "sample and response spacings differ");
  if (sample.x.size() != sample.y.size() || response.x.size() != response.y.size())
    throw Error(ErrorKind::GridMismatch, "x/y lengths differ");
  // zero lag must sit on the response grid
  const double k0f = -response.x[0] / dx;
  const auto k0 = static_cast<Eigen::Index>(std::llround(k0f));
  if (std::abs(k0f - static_cast<double>(k0)) > 1e-6)
    throw Error(ErrorKind::GridMismatch, "response grid does not contain zero lag");

  const Eigen::Index n = sample.size(), m = response.size();
  Series out;
  out.x = sample.x;
  out.x_unit = sample.x_unit;
  out.y_unit = sample.y_unit;
  out.y.setZero(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double acc = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      const Eigen::Index k = i - j + k0;
      if (k < 0 || k >= m) continue;
      const double w = (j == 0 || j == n - 1) ? 0.5 * dx : dx;
      acc += w * sample.y[j] * response.y[k];
    }
    out.y[i] = acc;
  }
  return out;
}

FieldGrid convolve_sample(const FieldGrid& sample, const FieldGrid& response) {
  if (std::abs(sample.dx - response.dx) > 1e-9 * sample.dx ||
      std::abs(sample.dy - response.dy) > 1e-9 * sample.dy)
    throw Error(ErrorKind::GridMismatch, "sample and response spacings differ");
  const Eigen::Index rows = sample.values.rows(), cols = sample.values.cols();
  const Eigen::Index rr = response.values.rows(), rc = response.values.cols();
  const Eigen::Index r0 = rr / 2, c0 = rc / 2;  // response centered on its middle pixel

  FieldGrid out;
  out.dx = sample.dx;
  out.dy = sample.dy;
  out.values.setZero(rows, cols);
  const double cell = sample.dx * sample.dy;
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) {
      double acc = 0.0;
      for (Eigen::Index rj = 0; rj < rows; ++rj) {
        const Eigen::Index kr = r - rj + r0;
        if (kr < 0 || kr >= rr) continue;
        const double wr = (rj == 0 || rj == rows - 1) ? 0.5 : 1.0;
        for (Eigen::Index cj = 0; cj < cols; ++cj) {
          const Eigen::Index kc = c - cj + c0;
          if (kc < 0 || kc >= rc) continue;
          const double wc = (cj == 0 || cj == cols - 1) ? 0.5 : 1.0;
          acc += wr * wc * cell * sample.values(rj, cj) * response.values(kr, kc);
        }
      }
      out.values(r, c) = acc;
    }
  return out;
}

namespace {

std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

using ComplexVec = std::vector<std::complex<double>>;

// response spectrum with zero lag rotated to index 0 and the dx quadrature
// weight absorbed
ComplexVec response_spectrum(const Eigen::ArrayXd& resp, Eigen::Index k0, double dx,
                             std::size_t nfft) {
  std::vector<double> padded(nfft, 0.0);
  for (Eigen::Index j = 0; j < resp.size(); ++j) {
    const auto idx = static_cast<std::size_t>(
        ((j - k0) % static_cast<Eigen::Index>(nfft) + static_cast<Eigen::Index>(nfft)) %
        static_cast<Eigen::Index>(nfft));
    padded[idx] = resp[j] * dx;
  }
  Eigen::FFT<double> fft;
  ComplexVec spec;
  fft.fwd(spec, padded);
  return spec;
}

ComplexVec forward_padded(const Eigen::ArrayXd& y, std::size_t nfft) {
  std::vector<double> padded(nfft, 0.0);
  for (Eigen::Index i = 0; i < y.size(); ++i) padded[static_cast<std::size_t>(i)] = y[i];
  Eigen::FFT<double> fft;
  ComplexVec spec;
  fft.fwd(spec, padded);
  return spec;
}

Eigen::ArrayXd inverse_fft(const ComplexVec& spec, Eigen::Index n_keep) {
  Eigen::FFT<double> fft;
  std::vector<double> time;
  ComplexVec copy = spec;
  fft.inv(time, copy);
  Eigen::ArrayXd out(n_keep);
  for (Eigen::Index i = 0; i < n_keep; ++i) out[i] = time[static_cast<std::size_t>(i)];
  return out;
}

}  // namespace

Series deconvolve(const Series& pl, const Series& response, const DeconvolveOptions& opts) {
  const double dx = grid_spacing(pl.x, "pl");
  const double dr = grid_spacing(response.x, "response");
  if (std::abs(dx - dr) > 1e-9 * dx)
    throw Error(ErrorKind::GridMismatch, "pl and response spacings differ");
  const double k0f = -response.x[0] / dx;
  const auto k0 = static_cast<Eigen::Index>(std::llround(k0f));
  if (std::abs(k0f - static_cast<double>(k0)) > 1e-6)
    throw Error(ErrorKind::GridMismatch, "response grid does not contain zero lag");
  if (response.y.cwiseAbs().maxCoeff() <= 0.0)
    throw Error(ErrorKind::ZeroResponse, "response is identically zero");

  const Eigen::Index n = pl.size();
  const std::size_t nfft =
      next_pow2(static_cast<std::size_t>(n + response.size()));
  const ComplexVec rhat = response_spectrum(response.y, k0, dx, nfft);

  double rmax2 = 0.0;
  for (const auto& c : rhat) rmax2 = std::max(rmax2, std::norm(c));
  if (rmax2 <= 0.0) throw Error(ErrorKind::ZeroResponse, "response is identically zero");

  Series out;
  out.x = pl.x;
  out.x_unit = pl.x_unit;
  out.y_unit = pl.y_unit;

  if (opts.method == DeconvolveMethod::RegularizedInverse) {
    const double eps = opts.epsilon_rel * rmax2;
    ComplexVec phat = forward_padded(pl.y, nfft);
    for (std::size_t i = 0; i < nfft; ++i)
      phat[i] = phat[i] * std::conj(rhat[i]) / (std::norm(rhat[i]) + eps);
    out.y = inverse_fft(phat, n);
    return out;
  }

  // multiplicative scheme for nonnegative signals: the usual ratio update with
  // the mirrored response, all convolutions in the frequency domain
  const Eigen::ArrayXd data = pl.y.max(0.0);
  const double rsum = response.y.sum() * dx;
  Eigen::ArrayXd est = Eigen::ArrayXd::Constant(n, std::max(data.mean(), 1e-12) /
                                                       std::max(rsum, 1e-12));
  auto conv_with = [&](const Eigen::ArrayXd& v, bool mirrored) {
    ComplexVec vhat = forward_padded(v, nfft);
    for (std::size_t i = 0; i < nfft; ++i)
      vhat[i] *= mirrored ? std::conj(rhat[i]) : rhat[i];
    return inverse_fft(vhat, n);
  };
  const Eigen::ArrayXd norm = conv_with(Eigen::ArrayXd::Ones(n), true).max(1e-30);
  for (int it = 0; it < opts.iterations; ++it) {
    const Eigen::ArrayXd denom = conv_with(est, false).max(1e-30);
    est *= conv_with(data / denom, true) / norm;
  }
  out.y = est;
  return out;
}

FieldGrid deconvolve(const FieldGrid& pl, const FieldGrid& response,
                     const DeconvolveOptions& opts) {
  if (std::abs(pl.dx - response.dx) > 1e-9 * pl.dx ||
      std::abs(pl.dy - response.dy) > 1e-9 * pl.dy)
    throw Error(ErrorKind::GridMismatch, "pl and response spacings differ");
  if (response.values.cwiseAbs().maxCoeff() <= 0.0)
    throw Error(ErrorKind::ZeroResponse, "response is identically zero");
  if (opts.method != DeconvolveMethod::RegularizedInverse)
    throw Error(ErrorKind::InvalidRequest, "2d deconvolution supports the regularized inverse");

  const Eigen::Index rows = pl.values.rows(), cols = pl.values.cols();
  const std::size_t nr = next_pow2(static_cast<std::size_t>(rows + response.values.rows()));
  const std::size_t nc = next_pow2(static_cast<std::size_t>(cols + response.values.cols()));
  const Eigen::Index r0 = response.values.rows() / 2, c0 = response.values.cols() / 2;
  const double cell = pl.dx * pl.dy;

  using Cmat = Eigen::MatrixXcd;
  Cmat rpad = Cmat::Zero(static_cast<Eigen::Index>(nr), static_cast<Eigen::Index>(nc));
  for (Eigen::Index r = 0; r < response.values.rows(); ++r)
    for (Eigen::Index c = 0; c < response.values.cols(); ++c) {
      const Eigen::Index rr = ((r - r0) % static_cast<Eigen::Index>(nr) +
                               static_cast<Eigen::Index>(nr)) % static_cast<Eigen::Index>(nr);
      const Eigen::Index cc = ((c - c0) % static_cast<Eigen::Index>(nc) +
                               static_cast<Eigen::Index>(nc)) % static_cast<Eigen::Index>(nc);
      rpad(rr, cc) = response.values(r, c) * cell;
    }
  Cmat ppad = Cmat::Zero(static_cast<Eigen::Index>(nr), static_cast<Eigen::Index>(nc));
  ppad.topLeftCorner(rows, cols) = pl.values.cast<std::complex<double>>();

  Eigen::FFT<double> fft;
  auto fft2 = [&](Cmat m, bool inverse) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      ComplexVec row(m.cols()), spec;
      for (Eigen::Index c = 0; c < m.cols(); ++c) row[static_cast<std::size_t>(c)] = m(r, c);
      if (inverse) fft.inv(spec, row); else fft.fwd(spec, row);
      for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = spec[static_cast<std::size_t>(c)];
    }
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      ComplexVec col(m.rows()), spec;
      for (Eigen::Index r = 0; r < m.rows(); ++r) col[static_cast<std::size_t>(r)] = m(r, c);
      if (inverse) fft.inv(spec, col); else fft.fwd(spec, col);
      for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) = spec[static_cast<std::size_t>(r)];
    }
    return m;
  };

  const Cmat rhat = fft2(rpad, false);
  Cmat phat = fft2(ppad, false);
  double rmax2 = 0.0;
  for (Eigen::Index r = 0; r < rhat.rows(); ++r)
    for (Eigen::Index c = 0; c < rhat.cols(); ++c)
      rmax2 = std::max(rmax2, std::norm(rhat(r, c)));
  const double eps = opts.epsilon_rel * rmax2;
  for (Eigen::Index r = 0; r < phat.rows(); ++r)
    for (Eigen::Index c = 0; c < phat.cols(); ++c)
      phat(r, c) = phat(r, c) * std::conj(rhat(r, c)) / (std::norm(rhat(r, c)) + eps);

  const Cmat est = fft2(phat, true);
  FieldGrid out;
  out.dx = pl.dx;
  out.dy = pl.dy;
  out.values = est.topLeftCorner(rows, cols).real();
  return out;
}

}  // namespace scm
