#pragma once

// Small self-contained numerics used to cross-check library results from an
// independent direction: quadrature, finite differences, naive DFT, linear
// least squares, autocorrelation. Deliberately simple, O(n^2) where easiest.

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <functional>
#include <vector>

namespace oracles {

inline double trapezoid(const Eigen::ArrayXd& x, const Eigen::ArrayXd& y) {
  double sum = 0.0;
  for (Eigen::Index i = 1; i < x.size(); ++i)
    sum += 0.5 * (y[i] + y[i - 1]) * (x[i] - x[i - 1]);
  return sum;
}

// central difference with a fixed step
inline double derivative(const std::function<double(double)>& f, double x, double h = 1e-6) {
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

// integral of f over (-inf, inf) by the substitution w = s*tan(u), composite
// Simpson on u; s sets where the nodes cluster
inline double integrate_real_line(const std::function<double(double)>& f, double s, int n = 20001) {
  if (n % 2 == 0) ++n;
  const double pi = 3.14159265358979323846;
  const double lo = -pi / 2 + 1e-9, hi = pi / 2 - 1e-9;
  const double h = (hi - lo) / (n - 1);
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    const double u = lo + i * h;
    const double c = std::cos(u);
    const double w = i == 0 || i == n - 1 ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
    sum += w * f(s * std::tan(u)) * s / (c * c);
  }
  return sum * h / 3.0;
}

// ordinary least squares via normal equations
inline Eigen::VectorXd linear_lsq(const Eigen::MatrixXd& design, const Eigen::VectorXd& rhs) {
  return (design.transpose() * design).ldlt().solve(design.transpose() * rhs);
}

// lag (in samples) of the first local maximum of the autocorrelation of
// (series - mean) searched within [lag_lo, lag_hi]
inline Eigen::Index autocorr_peak_lag(const Eigen::ArrayXd& series, Eigen::Index lag_lo,
                                      Eigen::Index lag_hi) {
  const Eigen::ArrayXd s = series - series.mean();
  Eigen::Index best = lag_lo;
  double best_val = -1e300;
  for (Eigen::Index lag = lag_lo; lag <= lag_hi && lag < s.size(); ++lag) {
    double acc = 0.0;
    for (Eigen::Index i = 0; i + lag < s.size(); ++i) acc += s[i] * s[i + lag];
    acc /= double(s.size() - lag);  // overlap shrinks with lag
    if (acc > best_val) {
      best_val = acc;
      best = lag;
    }
  }
  return best;
}

// FWHM of the lobe around the global maximum, linear interpolation at the
// half-maximum crossings; x must be increasing
inline double fwhm_around_peak(const Eigen::ArrayXd& x, const Eigen::ArrayXd& y) {
  Eigen::Index peak = 0;
  y.maxCoeff(&peak);
  const double half = 0.5 * y[peak];
  double left = x[0], right = x[x.size() - 1];
  for (Eigen::Index i = peak; i > 0; --i)
    if (y[i - 1] < half) {
      left = x[i - 1] + (x[i] - x[i - 1]) * (half - y[i - 1]) / (y[i] - y[i - 1]);
      break;
    }
  for (Eigen::Index i = peak; i + 1 < y.size(); ++i)
    if (y[i + 1] < half) {
      right = x[i] + (x[i + 1] - x[i]) * (half - y[i]) / (y[i + 1] - y[i]);
      break;
    }
  return right - left;
}

// unnormalized forward DFT, O(n^2); matches the convention of a radix-2 FFT
inline Eigen::VectorXcd naive_dft(const Eigen::VectorXcd& v) {
  const double pi = 3.14159265358979323846;
  const Eigen::Index n = v.size();
  Eigen::VectorXcd out(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    std::complex<double> acc = 0.0;
    for (Eigen::Index j = 0; j < n; ++j)
      acc += v[j] * std::exp(std::complex<double>(0.0, -2.0 * pi * double(k) * double(j) / n));
    out[k] = acc;
  }
  return out;
}

}  // namespace oracles
