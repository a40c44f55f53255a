#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lobflux/first_order.hpp"
#include "lobflux/params.hpp"

namespace lobflux {

enum class CovarianceExponent { integral, literal };

// The martingale-price reduction: fluctuations of (B, Y) follow the 2D
// Ornstein-Uhlenbeck process dZ = D(Y(t)) Z dt + sigma(t) dW with
//   P(t) = p^{B+A}(Y(t))
//   Q(t) = p^{B+A}(Y(t)) * u(t, 0)
//   R(t) = p^{B+A}(Y(t)) * u(t, 0)^2 + G(Y(t)) - F(Y(t))^2
// and D = [[0, 0], [0, F'(Y)]].
struct SimplifiedModel {
  std::function<double(double)> Y;         // first-order volume indicator path
  std::function<double(double)> u_top;     // first-order u(t, 0)
  std::function<double(double)> P, Q, R;   // covariance entries vs time
  std::function<double(double)> Fprime;    // OU drift rate F'(Y(t)) vs time
  double T = 0.0;
};

// Closed-form first-order paths from linear aggregate coefficients:
// Y(t) relaxes exponentially to -F_c/F_y; u_top integrates f0(Y(s)).
SimplifiedModel make_simplified_from_coeffs(const SimplifiedCoefficients& coeffs, double y0,
                                            double u_top0, double T);

// Aggregates read off a first-order solution of a martingale-price model
// (p identically 0) under the model's own volume indicator.
SimplifiedModel make_simplified_from_solution(const Model& model, const FirstOrderSolution& sol);

struct SimplifiedCovariance {
  double var_ZB = 0.0;
  double var_ZY = 0.0;
  double cov = 0.0;
  double rho = 0.0;
};

// Covariance integrals by trapezoid quadrature with `quad_steps` panels. The
// Var(Z^Y)/Cov weights use exp(k * int_s^t F'(Y(r)) dr) by default; the
// `literal` mode evaluates exp(k * F'(Y(t-s))) as displayed instead.
SimplifiedCovariance simplified_covariance(const SimplifiedModel& model, double t, int quad_steps,
                                           CovarianceExponent mode = CovarianceExponent::integral);

struct GaussianEnsemble {
  std::vector<double> checkpoint_t;
  std::vector<double> var_ZB, var_ZY, cov, corr;
  std::vector<double> se_var_ZB, se_var_ZY, se_cov;
  std::vector<double> mean_ZB, mean_ZY;
  int n_paths = 0;
};

struct OUSimConfig {
  double T = 0.0;
  double dt = 1e-3;
  int n_paths = 1000;
  std::uint64_t seed = 1;
  int n_threads = 1;
  int n_checkpoints = 20;
  bool force_zero_Q = false;  // independence ablation
};

// Euler-Maruyama with the upper-triangular factor
// sigma = [[sqrt(P - Q^2/R), Q/sqrt(R)], [0, sqrt(R)]]; errors name the first
// time point where the 2x2 matrix fails positive semidefiniteness.
GaussianEnsemble simulate_simplified_ou(const SimplifiedModel& model, const OUSimConfig& cfg);

// ---------------------------------------------------------------------------
// General model: truncated-spectral covariance and mild-solution simulator.

// Basis over [-L, L]: index 0 is the price axis; volume modes are the
// constant followed by cos/sin pairs (translation acts as an exact rotation
// of each pair).
struct SpectralBasis {
  TickGrid grid;
  int n_modes = 0;                            // volume modes, excludes price axis
  std::vector<std::vector<double>> mode_cells;  // per-mode cell integrals
  std::vector<int> pair_freq;                 // frequency q of each mode, 0 for const

  static SpectralBasis make(const TickGrid& grid, int n_modes);
  double mode_value(int mode, double x) const;
};

struct SpectralCovarianceSample {
  double t = 0.0;
  Eigen::MatrixXd sigma;     // (K+1) x (K+1), symmetric
  Eigen::MatrixXd factor;    // sigma_clipped = factor * factor^T
  double lambda_min = 0.0;   // before clipping
  double clip_magnitude = 0.0;
  double norm = 0.0;         // spectral norm of sigma
  double trace = 0.0;
};

// Galerkin matrix of the covariance operator at time t:
//   Sigma_00 = sigma_0^2, Sigma_0k = <Q(t), e_k>, Sigma_jk = <R(t) e_k, e_j>
// with d/dx via the forward difference of the first-order density and the
// g-multiplication term via per-cell quadrature. Negative eigenvalues are
// clipped at 0 with the magnitude recorded.
SpectralCovarianceSample assemble_sigma(const Model& model, const FirstOrderSolution& sol,
                                        double t, const SpectralBasis& basis);

struct SpdeSimConfig {
  double T = 0.0;
  double dt = 1e-3;
  int n_modes = 32;
  int n_paths = 1000;
  std::uint64_t seed = 1;
  int n_threads = 1;
  int n_checkpoints = 20;
  bool force_zero_Q = false;
  bool drift_off = false;   // F = 0 (translation + noise only)
  bool noise_off = false;   // sigma = 0 (pure mild flow)
};

struct SpdeResult {
  GaussianEnsemble stats;               // Z^B and Z^Y = <Z^u, h>
  std::vector<std::string> test_fn_ids;
  std::vector<std::vector<double>> mean_Zu;  // [fn][checkpoint]
  std::vector<std::vector<double>> var_Zu;
  double total_clip = 0.0;
  double min_lambda_ratio = 0.0;  // min over mesh of lambda_min / norm
};

// Exponential-Euler on Galerkin coordinates: translation handled exactly by
// phase rotation per step, then dt * F(t, Z), then factor(t) * sqrt(dt) * xi.
SpdeResult simulate_spde(const Model& model, const FirstOrderSolution& sol,
                         const SpdeSimConfig& cfg,
                         const std::vector<TrackedFunctional>& test_fns = {},
                         const Eigen::VectorXd* z0 = nullptr);

}  // namespace lobflux
