#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "lobflux/grid.hpp"
#include "lobflux/params.hpp"
#include "lobflux/rng.hpp"

namespace lobflux {

// delta is simultaneously the tick size, the event time step, and the order
// size scale; horizon_T gives T_n = floor(T / delta) events.
struct SimConfig {
  double delta = 0.0;
  double horizon_T = 0.0;
  std::uint64_t seed = 0;
  int record_stride = 0;  // snapshot every k-th event; 0 disables snapshots

  int t_n() const { return static_cast<int>(horizon_T / delta + 1e-9); }
};

enum class EventKind : std::uint8_t { A = 0, B = 1, C = 2 };

struct EventRecord {
  EventKind kind = EventKind::C;
  std::int32_t cell = -1;  // relative array index of the placement; -1 for A/B/no-op
  double omega = 0.0;
};

// A test function tracked through the simulation: per-event values of
// <u_k, phi>, <grad+ u_k, phi>, <grad- u_k, phi> maintained incrementally.
struct TrackedFunctional {
  std::string id;
  TestFunction phi;
  std::vector<double> cells;  // per-cell integrals of phi on the grid

  static TrackedFunctional make(const std::string& id, TestFunction phi, const TickGrid& grid);
};

struct ProjectionSeries {
  std::string id;
  std::vector<double> u_phi;       // length T_n + 1
  std::vector<double> grad_plus;   // <grad+ u_k, phi>
  std::vector<double> grad_minus;  // <grad- u_k, phi>
};

struct LOBPath {
  SimConfig config;
  std::vector<double> B;            // length T_n + 1
  std::vector<double> Y;            // length T_n + 1
  std::vector<EventRecord> events;  // length T_n
  std::map<int, StepDensity> snapshots;
  std::vector<ProjectionSeries> projections;
  double dropped_mass = 0.0;
  double max_l2_sq = 0.0;       // max_k ||u_k||_{L2}^2
  double final_l2_sq = 0.0;
  double max_y_drift = 0.0;     // worst |incremental - recomputed| Y at snapshots
};

struct InitialState {
  double b0 = 0.0;
  StepDensity u0;
};

// One event transition on an explicit state copy; the full-path simulator
// below is the production path, this entry point exists for the per-event
// contracts and tests.
struct StepResult {
  double b = 0.0;
  StepDensity u;
  double y = 0.0;
  EventRecord event;
};
StepResult step(double b, const StepDensity& u, const Model& model, double delta,
                SplitMix64& rng);

LOBPath simulate_path(const SimConfig& config, const Model& model, const InitialState& init,
                      const std::vector<TrackedFunctional>& tracked = {});

// Cross-path moments at checkpoints; reductions use fixed-shape pairwise
// summation over path index, so results are bitwise identical for a given
// (base seed, n_paths) regardless of thread count.
struct EnsembleSummary {
  std::vector<int> checkpoint_k;
  std::vector<double> checkpoint_t;
  std::vector<double> mean_B, var_B;
  std::vector<double> mean_Y, var_Y;
  std::vector<double> cov_BY;
  std::vector<std::string> functional_ids;
  std::vector<std::vector<double>> mean_u_phi;  // [functional][checkpoint]
  std::vector<std::vector<double>> var_u_phi;
  int n_paths = 0;
  double total_dropped_mass = 0.0;
  double max_l2_sq = 0.0;
  std::string to_json() const;
};

struct EnsembleConfig {
  int n_paths = 1;
  std::uint64_t base_seed = 0;
  int n_threads = 1;
  int n_checkpoints = 20;  // evenly spaced in event index, always includes T_n
};

EnsembleSummary simulate_ensemble(const SimConfig& config, const Model& model,
                                  const InitialState& init, const EnsembleConfig& ens,
                                  const std::vector<TrackedFunctional>& tracked = {});

// Evenly spaced event-index checkpoints 0 < k_1 < ... < k_m = T_n.
std::vector<int> make_checkpoints(int t_n, int n_checkpoints);

}  // namespace lobflux
