#pragma once

// Single-excitation cavity QED on the basis {|e,0>, |g,1>, |g,0>}: closed-form
// Maxwell-Bloch amplitudes, a Lindblad integrator for cross-checks, and the
// detected emission spectrum from the regression-theorem Laplace transforms.

#include <Eigen/Dense>
#include <complex>
#include <vector>

#include "scm/model.hpp"

namespace scm {

using Complex = std::complex<double>;
using DensityMatrix = Eigen::Matrix3cd;

struct EigenRates {
  Complex c1;  // cavity amplitude rate: -i*detuning/2 - kappa/2
  Complex c2;  // coherence rate: +i*detuning/2 - gamma/2 - gamma_d
  Complex d;   // sqrt((c1-c2)^2 - 4g^2), Re >= 0 branch
  Complex lambda_plus;
  Complex lambda_minus;
};

EigenRates eigenrates(const CoupledSystemParams& params);

struct AmplitudeTrajectory {
  Eigen::ArrayXd t;
  Eigen::ArrayXcd a;
  Eigen::ArrayXcd sigma;
};

// closed forms for a(0)=0, sigma(0)=1
AmplitudeTrajectory amplitude_trajectory(const CoupledSystemParams& params,
                                         const Eigen::ArrayXd& t_grid);

Eigen::Matrix3cd op_a();
Eigen::Matrix3cd op_sigma();
Eigen::Matrix3cd op_sigma_z();
Eigen::Matrix3cd hamiltonian(const CoupledSystemParams& params);

Complex expectation_a(const DensityMatrix& rho);
Complex expectation_sigma(const DensityMatrix& rho);

// hermiticity, unit trace, positive semidefiniteness (within tol)
void check_density_matrix(const DensityMatrix& rho, double tol = 1e-9);

struct LindbladOptions {
  double rel_tol = 1e-9;
  double abs_tol = 1e-12;
};

// adaptive embedded Runge-Kutta; output states aligned with t_grid, the first
// entry being rho0 itself
std::vector<DensityMatrix> lindblad_evolve(const CoupledSystemParams& params,
                                           const DensityMatrix& rho0, const Eigen::ArrayXd& t_grid,
                                           const LindbladOptions& opts = {});

// S(omega) = N * |integral_0^inf eps(t) e^{i omega t} dt|^2 with
// eps(t) = sqrt(c_nv*gamma)*sigma(t) + e^{i delta_phi} sqrt(c_cav*kappa)*a(t),
// normalized so the bare-emitter case (g=0) peaks at c_nv
Spectrum emission_spectrum_numeric(const CoupledSystemParams& params, const DetectionCoeffs& coeffs,
                                   const Eigen::ArrayXd& omega_grid);

// g^2/(kappa*gamma), energy-decay kappa convention
double purcell_factor(const CoupledSystemParams& params);

}  // namespace scm
