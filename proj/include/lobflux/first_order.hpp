#pragma once

#include <map>
#include <string>
#include <vector>

#include "lobflux/grid.hpp"
#include "lobflux/microsim.hpp"
#include "lobflux/params.hpp"

namespace lobflux {

// Deterministic limit of the rescaled book: dB/dt = p(B, Y),
// u_t = p(B, Y) u_x + f(B, Y; x), Y(t) = <h, u(t)>.
//
// Semi-Lagrangian scheme: each step back-traces along the characteristic
// (shift by the accumulated midpoint-rule integral of p) and interpolates the
// step values; the source is sampled half-way along the trace. Unconditionally
// stable; first order in dt for the coupled system.
struct FirstOrderSolution {
  TickGrid grid;
  double dt = 0.0;
  double T = 0.0;
  int n_steps = 0;
  std::vector<double> t;               // length n_steps + 1
  std::vector<double> B;
  std::vector<double> Y;
  std::vector<double> characteristic;  // cumulative integral of p
  std::map<int, StepDensity> snapshots;
  int snapshot_stride = 0;
  std::vector<ProjectionSeries> projections;  // per tracked test function
  double sup_l2 = 0.0;                        // sup_t ||u(t)||_{L2}
  std::vector<std::string> warnings;

  int step_of(double time) const;
};

FirstOrderSolution solve_first_order(const Model& model, const InitialState& init,
                                     double dt, double T,
                                     const std::vector<TrackedFunctional>& tracked = {},
                                     int snapshot_stride = 0, int fixed_point_iters = 2);

struct FirstOrderSample {
  double b = 0.0;
  double y = 0.0;
  StepDensity u;
};

// Linear time interpolation for (B, Y); u reconstructed from the nearest
// stored snapshot shifted by the characteristic difference.
FirstOrderSample evaluate(const FirstOrderSolution& sol, double t);

}  // namespace lobflux
