#pragma once

#include <string>
#include <vector>

#include "lobflux/first_order.hpp"
#include "lobflux/microsim.hpp"
#include "lobflux/params.hpp"

namespace lobflux {

// Rescaled fluctuation processes Z^B = (B^(n) - B)/sqrt(delta),
// <Z^u, phi> = (<u^(n), phi> - <u, phi>)/sqrt(delta), Z^Y = <h, Z^u>.
struct FluctuationSeries {
  double delta = 0.0;
  double normalization = 0.0;  // sqrt(delta)
  std::vector<double> t;
  std::vector<double> ZB;
  std::vector<double> ZY;
  std::vector<std::string> ids;
  std::vector<std::vector<double>> Zu;  // [test function][event index]
};

FluctuationSeries compute_fluctuations(const LOBPath& path, const FirstOrderSolution& sol);

// The compensated processes M^B, L^B, M^u(phi), L^u(phi), N(phi) built from
// the discrete drift/covariance operators evaluated at the realized states.
// The first-order time integrals inside the compensators are taken as the
// solver's actual increments, so M^B, L^B and M^u have exactly centered
// increments; L^u and N carry the O(sqrt(delta)) remainder of the principal-
// part operators.
struct MartingaleDiagnostics {
  double delta = 0.0;
  std::vector<double> t;
  std::vector<double> MB, LB;
  std::vector<std::string> ids;
  std::vector<std::vector<double>> Mu, Lu, N;
  std::vector<std::vector<double>> comp_R;  // running integral of R^(n), per phi
  std::vector<std::vector<double>> comp_Q;  // running integral of Q^(n), per phi
};

MartingaleDiagnostics martingale_diagnostics(const LOBPath& path, const FirstOrderSolution& sol,
                                             const Model& model,
                                             const std::vector<TrackedFunctional>& tracked);

// Cross-path test of the martingale suite: zero-mean / flat-compensator
// checks at evenly spaced checkpoints, 4 * stderr, with the c * sqrt(delta)
// allowance on the remainder-carrying series (L^u, N).
struct SeriesCheck {
  std::string name;
  bool pass = true;
  double worst_ratio = 0.0;  // max_k |mean| / tolerance
  std::vector<double> mean, stderr_, tolerance;
};

struct MartingaleSuiteResult {
  std::vector<int> checkpoint_k;
  std::vector<double> checkpoint_t;
  std::vector<SeriesCheck> checks;
  // Per-step orthogonality: cross-path mean of dMB*dMu against Q^(n)*delta,
  // batched between checkpoints.
  std::vector<std::string> ortho_ids;
  std::vector<std::vector<double>> ortho_emp, ortho_model, ortho_stderr;
  int n_paths = 0;
  bool all_pass() const;
};

struct MartingaleSuiteConfig {
  int n_paths = 1000;
  std::uint64_t base_seed = 1;
  int n_threads = 1;
  int n_checkpoints = 20;
  // c in the c*sqrt(delta) widening applied to the remainder-carrying series
  // (L^u, N). Calibrated on the constant-parameter model at delta = 0.002,
  // n_paths = 1e4, where the suite passes at plain 4*stderr with worst
  // |mean|/tol = 0.59; c = 0.5 covers the principal-part evaluation bias
  // without masking a real drift.
  double remainder_allowance = 0.5;
};

MartingaleSuiteResult run_martingale_suite(const SimConfig& sim, const Model& model,
                                           const InitialState& init,
                                           const std::vector<TrackedFunctional>& tracked,
                                           const FirstOrderSolution& sol,
                                           const MartingaleSuiteConfig& cfg);

// Cross-path fluctuation moments (Var ZB, Var ZY, Cov) at checkpoints, used
// by the micro-to-limit comparisons.
struct FluctuationEnsemble {
  std::vector<int> checkpoint_k;
  std::vector<double> checkpoint_t;
  std::vector<double> var_ZB, var_ZY, cov;
  std::vector<double> se_var_ZB, se_var_ZY, se_cov;  // MC standard errors
  std::vector<double> mean_ZB, mean_ZY;
  std::vector<double> corr;
  int n_paths = 0;
};

FluctuationEnsemble fluctuation_ensemble(const SimConfig& sim, const Model& model,
                                         const InitialState& init, const FirstOrderSolution& sol,
                                         int n_paths, std::uint64_t base_seed, int n_threads,
                                         int n_checkpoints);

// E[sup_t |<S^(n)(t) - S(t), zeta>|] for a price/volume test pair
// zeta = (zeta_b, zeta_u); the law-of-large-numbers rate probe.
double lln_sup_gap(const SimConfig& sim, const Model& model, const InitialState& init,
                   const FirstOrderSolution& sol, double zeta_b, const TrackedFunctional& zeta_u,
                   int n_paths, std::uint64_t base_seed, int n_threads);

}  // namespace lobflux
