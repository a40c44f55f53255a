#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "lobflux/microsim.hpp"
#include "lobflux/params.hpp"
#include "lobflux/second_order.hpp"

namespace lobflux {

struct BookSnapshot {
  double timestamp = 0.0;  // seconds since session start
  std::vector<double> bid_prices, bid_sizes, ask_prices, ask_sizes;
};

// Column layout: ts, bp1..bpN, bs1..bsN, ap1..apN, as1..asN. The level count
// is configurable; header names may be remapped.
struct SnapshotSchema {
  int n_levels = 10;
  std::string ts_col = "ts";
  std::string bp_prefix = "bp", bs_prefix = "bs", ap_prefix = "ap", as_prefix = "as";
  double max_reject_fraction = 0.01;
};

struct IngestReject {
  long line = 0;
  std::string reason;
};

struct IngestResult {
  std::vector<BookSnapshot> snapshots;
  std::vector<IngestReject> rejects;
  long lines_read = 0;
};

// Validated snapshots with a rejects report; monotone timestamps enforced
// with keep-last on duplicates; more than max_reject_fraction rejected rows
// is a hard error.
IngestResult ingest_csv(std::istream& in, const SnapshotSchema& schema);
IngestResult ingest_csv_file(const std::string& path, const SnapshotSchema& schema);

enum class BookSide { bid, ask };

// Per-second features. The estimation convention: a second is "active" when
// the best price moved by at least one tick; moment proxies are built on the
// price-stable transitions only and reweighted by (1 - p_hat^{B+A}(Y)) from
// the first-stage activity fit, which removes the conditioning bias of the
// exclusion.
struct FeatureSeries {
  double tick = 0.0;
  double delta = 0.0;  // model time units per sample second (= tick scale)
  std::vector<double> t;
  std::vector<double> price;
  std::vector<double> y;           // sum of visible sizes
  std::vector<double> top_volume;  // best-level size
  // transition features, length n-1; usable marks price-stable transitions
  std::vector<double> active;
  std::vector<double> y_prev;
  std::vector<double> dy;
  std::vector<double> d_top;
  std::vector<char> usable;
  int gaps = 0;
  int tick_rounding_warnings = 0;
};

FeatureSeries build_features(const std::vector<BookSnapshot>& snapshots, BookSide side,
                             double tick);

// Same construction from raw per-second series (best price, visible volume,
// top-level volume); used when the session lives in memory.
FeatureSeries features_from_series(const std::vector<double>& price,
                                   const std::vector<double>& y,
                                   const std::vector<double>& top_volume, double tick);

struct RegressionFit {
  std::string model_id;
  std::vector<std::string> terms;
  std::vector<double> coef, se, t_stat;
  double r_squared = 0.0;
  double sigma2 = 0.0;
  long n_obs = 0;
};

RegressionFit ols(const std::vector<double>& y, const std::vector<std::vector<double>>& columns,
                  const std::vector<std::string>& terms, const std::string& model_id);

struct FitSet {
  RegressionFit pAB, f0, F, G;
};

// The four aggregate regressions: activity ~ [1, Y]; f0, F ~ [1, Y] and
// G ~ [1, Y, Y^2/2] on reweighted stable-second proxies.
FitSet fit_models(const FeatureSeries& features);

std::string fits_pretty_table(const FitSet& fits);
std::string fits_json(const FitSet& fits, BookSide side);

struct CorrelationReport {
  std::vector<double> t;
  std::vector<double> sample_rho;
  std::vector<double> model_rho;
  std::vector<double> stderr_rho;
  int n_windows = 0;
  int window_samples = 0;
  double mean_abs_gap = 0.0;
  double mean_stderr = 0.0;
  bool low_window_warning = false;
  std::string to_csv() const;
};

struct CorrelationConfig {
  int window_samples = 180;
  double burn_in = 0.15;
  int quad_steps_per_sample = 1;
  CovarianceExponent exponent = CovarianceExponent::integral;
};

// Slices the series into non-overlapping windows, anchors each window's
// fluctuations at its own start (Z^B against a constant price, Z^Y against
// the exponential-linear aggregate path), and compares the across-window
// sample correlation per timestep with the window-averaged model correlation.
CorrelationReport windowed_correlation(const std::vector<double>& price,
                                       const std::vector<double>& y_series,
                                       const std::vector<double>& top_volume, double delta,
                                       double tick, const SimplifiedCoefficients& coeffs,
                                       const CorrelationConfig& cfg);

CorrelationReport windowed_correlation(const FeatureSeries& features,
                                       const SimplifiedCoefficients& coeffs,
                                       const CorrelationConfig& cfg);

// Level-mass functionals lvl1..lvlN (one tick each below the best bid) that
// let simulate_path track the visible book for snapshot export.
std::vector<TrackedFunctional> make_level_functionals(const TickGrid& grid, int n_levels);

// Snapshot CSV from a simulated path with level projections; one row per
// event second. The ask side is synthesized one tick above with unit sizes
// (the model is one-sided).
void write_book_csv(std::ostream& out, const LOBPath& path, int n_levels, double tick);

}  // namespace lobflux
