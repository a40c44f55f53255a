#pragma once

#include <atomic>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "lobflux/grid.hpp"

namespace lobflux {

// Telemetry for the least-surprise repairs: probability rescaling and
// second-moment feasibility floors. Shared so copies of a model accumulate
// into the same counters.
struct ClampStats {
  std::atomic<long long> prob_clamps{0};
  std::atomic<long long> g_floor_clamps{0};
};

struct EventProbs {
  double a = 0.0;  // price-down (market order)
  double b = 0.0;  // price-up (spread placement)
  double c = 1.0;  // passive
  bool clamped = false;
};

// Conditional event probabilities p^A(b,y), p^B(b,y) with clamping policy:
// negatives floored at 0, then both rescaled by 1/(p_A+p_B) if the sum
// exceeds 1; clamp events are counted.
struct EventProbabilityFns {
  std::function<double(double, double)> p_a;
  std::function<double(double, double)> p_b;
  // Optional analytic partials of p = p_B - p_A; central differences when absent.
  std::function<double(double, double)> p_db;
  std::function<double(double, double)> p_dy;
  std::shared_ptr<ClampStats> stats = std::make_shared<ClampStats>();

  EventProbs eval(double b, double y) const;
  double imbalance(double b, double y) const;   // p = p_B - p_A after clamping
  double sum(double b, double y) const;         // p^{B+A} after clamping
  double partial_b(double b, double y) const;
  double partial_y(double b, double y) const;
};

// sigma_0^2 = p^{B+A} - p^2, the per-event price-increment variance.
double sigma0_sq(const EventProbabilityFns& probs, double b, double y);

// First/second conditional moment field of the order flow: a map
// (b,y) -> step density. The separable form scale(b,y) * profile covers every
// model this artifact ships and keeps per-event evaluation O(1); a general
// callable is accepted as well.
struct MomentField {
  StepDensity profile;                                   // fixed spatial shape
  std::function<double(double, double)> scale;           // null => general form
  std::function<double(double, double)> scale_db;        // optional partials
  std::function<double(double, double)> scale_dy;
  std::function<StepDensity(double, double)> general;

  bool separable() const { return static_cast<bool>(scale); }
  StepDensity eval(double b, double y) const;
  double eval_scale(double b, double y) const;
  // <field(b,y), psi> given per-cell integrals of psi (fast when separable).
  double pair(double b, double y, const std::vector<double>& psi_cells) const;
  StepDensity partial_b(double b, double y) const;
  StepDensity partial_y(double b, double y) const;
  bool empty() const { return !scale && !general; }
};

struct PlacementMomentFns {
  MomentField f;  // first moment density
  MomentField g;  // second moment density, must be >= 0 cellwise
};

// Volume indicator h, supported on the non-positive half line. The indicator
// kinds admit O(1) incremental updates in the simulator; the smooth kind is
// required by the spectral pipeline (the indicator is not smooth enough
// there and is served by the dedicated 2x2 path instead).
struct VolumeIndicator {
  enum class Kind { smooth, left_indicator, window_indicator };
  Kind kind = Kind::left_indicator;
  double window = 0.0;  // window_indicator: h = 1_{(-window, 0]}
  TestFunction h;       // evaluable for all kinds

  static VolumeIndicator left_indicator();
  static VolumeIndicator window_indicator(double width);
  static VolumeIndicator smooth(TestFunction h);
};

// Coefficients of the linear/quadratic aggregate model
//   p^{B+A}(Y) = p_c + p_y Y          (clamped to [0,1] on evaluation)
//   f0(Y)      = f0_c + f0_y Y        (top-of-book density rate)
//   F(Y)       = F_c + F_y Y          (aggregate first moment)
//   G(Y)       = G_c + G_y Y + G_yy Y^2 / 2   (aggregate second moment)
// plus the feasibility floor applied to G where the raw quadratic would
// not be a valid second moment (reported through ClampStats).
struct SimplifiedCoefficients {
  double p_c = 0.0, p_y = 0.0;
  double f0_c = 0.0, f0_y = 0.0;
  double F_c = 0.0, F_y = 0.0;
  double G_c = 0.0, G_y = 0.0, G_yy = 0.0;
  double g_floor_abs = 0.0;      // absolute floor on G_eff
  double g_feas_margin = 1e-3;   // G_eff >= (1+margin) * F^2 / p_C

  std::shared_ptr<ClampStats> stats = std::make_shared<ClampStats>();

  double p_sum(double y) const;        // clamped to [0,1], counted
  double p_sum_raw(double y) const { return p_c + p_y * y; }
  double f0(double y) const { return f0_c + f0_y * y; }
  double F_agg(double y) const { return F_c + F_y * y; }
  double G_agg_raw(double y) const { return G_c + G_y * y + 0.5 * G_yy * y * y; }
  double G_agg_effective(double y) const;  // raw with feasibility floor, counted
  double g_minus_f_sq(double y) const { return G_agg_raw(y) - F_agg(y) * F_agg(y); }
  // Fixed point of the aggregate drift, Y* = -F_c / F_y (F_y != 0).
  double equilibrium_y() const;
};

// Sample coefficient estimates from a Deutsche Telekom order-book session
// (Oct 2022, tick 0.002 EUR), bundled for demos and tests. Note: the p_y
// estimate is positive while its reported t-statistic is negative; the
// values are kept verbatim.
SimplifiedCoefficients preset_dte2022_bid();
SimplifiedCoefficients preset_dte2022_ask();

// Per-event sampling ingredients at a fixed state: event probabilities, cell
// weights, and per-cell two-point order-size laws matching the first two
// conditional moments exactly:
//   E[1_C w 1_{cell j}] = delta * f_j,  E[1_C w^2 1_{cell j}] = delta * g_j.
struct CellLaw {
  int cell = -1;        // array index
  double weight = 0.0;  // P(cell | C)
  double mu = 0.0;      // E[omega | C, cell]
  double s = 0.0;       // E[omega^2 | C, cell]
  double lo = 0.0, hi = 0.0, q_hi = 0.5;  // two-point support and P(hi)
};

struct EventDistribution {
  EventProbs probs;
  std::vector<CellLaw> laws;
  std::vector<double> cum_weight;  // cumulative weights for cell sampling
  bool noop_c = false;             // f = g = 0: C events carry omega = 0
};

// Build the sampler at state (b, y). `omega_bound` is the a.s. bound M on
// order sizes; the two-point spread ratio is auto-adjusted toward it and an
// infeasibility error is raised when no valid law exists.
EventDistribution sampler_ingredients(const EventProbabilityFns& probs,
                                      const PlacementMomentFns& moments,
                                      double b, double y, double delta,
                                      double omega_bound);

struct ValidationCheck {
  std::string id;
  bool pass = true;
  std::string witness;
};

struct ValidationReport {
  std::vector<ValidationCheck> checks;
  bool all_pass() const;
  std::string summary() const;
};

struct SampleBox {
  double b_lo = 0.0, b_hi = 0.0;
  double y_lo = 0.0, y_hi = 0.0;
  int n_b = 5, n_y = 21;
};

// Runtime validators for the standing model assumptions: initial-state
// support/bounds, moment-field supports and norms, probability validity, and
// per-cell two-point feasibility over a deterministic lattice of the box.
ValidationReport validate_assumptions(const EventProbabilityFns& probs,
                                      const PlacementMomentFns& moments,
                                      const StepDensity& init, double support_bound,
                                      const SampleBox& box);

// ---------------------------------------------------------------------------
// Model lifts: assembled (probs, moments, h) bundles used by the pipelines.

struct Model {
  EventProbabilityFns probs;
  PlacementMomentFns moments;
  VolumeIndicator indicator;
  TickGrid grid;
  double omega_bound = 0.0;                       // M
  std::optional<SimplifiedCoefficients> coeffs;   // set for coefficient lifts
};

enum class ProfileShape { box, cosine };

// Normalized placement profile (integrates to 1) on [lo, hi].
StepDensity make_profile(const TickGrid& grid, double lo, double hi, ProfileShape shape);

// Constant-parameter model: p_A, p_B fixed, f = f_scale * profile,
// g = g_scale * profile.
Model make_constant_model(const TickGrid& grid, double p_a, double p_b,
                          double f_scale, double g_scale, const StepDensity& profile,
                          VolumeIndicator h, double omega_bound);

// Martingale-price lift of aggregate coefficients: p_A = p_B = p^{B+A}(Y)/2,
// f = F(Y) * profile, g = G_eff(Y) * profile.
Model make_simplified_model(const TickGrid& grid, const SimplifiedCoefficients& coeffs,
                            const StepDensity& profile, VolumeIndicator h,
                            double omega_bound);

// As the simplified lift but with a price imbalance p(y) = p_base +
// p_slope_y * (y - y_ref), split as p_B = (p^{B+A} + p)/2, p_A = (p^{B+A} - p)/2.
Model make_general_model(const TickGrid& grid, const SimplifiedCoefficients& coeffs,
                         const StepDensity& profile, VolumeIndicator h,
                         double omega_bound, double p_base, double p_slope_y, double y_ref);

}  // namespace lobflux
