#include <cmath>

#include "doctest.h"
#include "lobflux/fluctuations.hpp"

using namespace lobflux;

namespace {

struct Setup {
  TickGrid grid = TickGrid::make(0.002, 1.0);
  Model model;
  InitialState init;
  std::vector<TrackedFunctional> tracked;
  FirstOrderSolution sol;
};

// Constant-parameter model: p_A = 0.04, p_B = 0.06, box placements.
Setup make_setup(double f_scale = 1.0, double g_scale = 4.0) {
  Setup s;
  StepDensity prof = make_profile(s.grid, -0.5, 0.0, ProfileShape::box);
  s.model = make_constant_model(s.grid, 0.04, 0.06, f_scale, g_scale, prof,
                                VolumeIndicator::left_indicator(), 10.0);
  s.init.b0 = 0.0;
  s.init.u0 = StepDensity(s.grid);
  for (int a = 0; a < s.grid.n_cells; ++a) {
    double x = s.grid.x_center(a);
    if (x > -0.5 && x <= 0.0) s.init.u0.values[(std::size_t)a] = 1.0;
  }
  TestFunction phi;
  phi.f = [](double x) { return std::exp(-0.5 * (x + 0.25) * (x + 0.25) / (0.1 * 0.1)); };
  phi.label = "gauss";
  s.tracked.push_back(TrackedFunctional::make("gauss", phi, s.grid));
  s.sol = solve_first_order(s.model, s.init, s.grid.delta, 0.36, s.tracked, 8, 2);
  return s;
}

}  // namespace

TEST_CASE("fluctuations definitions and linearity") {
  Setup s = make_setup();
  SimConfig cfg{s.grid.delta, 0.36, 5, 0};
  LOBPath path = simulate_path(cfg, s.model, s.init, s.tracked);
  FluctuationSeries fl = compute_fluctuations(path, s.sol);
  const double sq = std::sqrt(s.grid.delta);
  // identical inits: Z at k = 0 vanishes
  CHECK(fl.ZB.front() == doctest::Approx(0.0));
  CHECK(fl.ZY.front() == doctest::Approx(0.0));
  for (std::size_t k = 0; k < path.B.size(); k += 37) {
    CHECK(fl.ZB[k] == doctest::Approx((path.B[k] - s.sol.B[k]) / sq).epsilon(1e-12));
    CHECK(fl.ZY[k] == doctest::Approx((path.Y[k] - s.sol.Y[k]) / sq).epsilon(1e-12));
  }
  // doubling the gap doubles Z pointwise (pure rescaling)
  LOBPath doubled = path;
  for (std::size_t k = 0; k < doubled.B.size(); ++k) {
    doubled.B[k] = s.sol.B[k] + 2.0 * (path.B[k] - s.sol.B[k]);
  }
  FluctuationSeries fl2 = compute_fluctuations(doubled, s.sol);
  for (std::size_t k = 0; k < path.B.size(); k += 53) {
    CHECK(fl2.ZB[k] == doctest::Approx(2.0 * fl.ZB[k]).epsilon(1e-12));
  }
}

TEST_CASE("M^B increments are exactly the centered event indicators") {
  Setup s = make_setup();
  SimConfig cfg{s.grid.delta, 0.36, 29, 0};
  LOBPath path = simulate_path(cfg, s.model, s.init, s.tracked);
  MartingaleDiagnostics d = martingale_diagnostics(path, s.sol, s.model, s.tracked);
  const double sq = std::sqrt(s.grid.delta);
  CHECK(d.MB.front() == 0.0);
  for (std::size_t k = 1; k < path.B.size(); ++k) {
    EventProbs pr = s.model.probs.eval(path.B[k - 1], path.Y[k - 1]);
    double ind = 0.0;
    if (path.events[k - 1].kind == EventKind::B) ind = 1.0;
    if (path.events[k - 1].kind == EventKind::A) ind = -1.0;
    double expect = sq * (ind - (pr.b - pr.a));
    CHECK(d.MB[k] - d.MB[k - 1] == doctest::Approx(expect).epsilon(1e-9));
  }
}

TEST_CASE("martingale suite passes on the constant-parameter model") {
  Setup s = make_setup();
  SimConfig cfg{s.grid.delta, 0.36, 0, 0};
  MartingaleSuiteConfig mc;
  mc.n_paths = 2000;
  mc.base_seed = 424242;
  mc.n_threads = 4;
  mc.n_checkpoints = 20;
  MartingaleSuiteResult res = run_martingale_suite(cfg, s.model, s.init, s.tracked, s.sol, mc);
  for (const auto& c : res.checks) {
    INFO(c.name, " worst ratio ", c.worst_ratio);
    CHECK(c.pass);
  }
}

TEST_CASE("orthogonal test function: Q vanishes and N is centered") {
  Setup s = make_setup();
  // phi supported on the far positive axis: no overlap with u, f, or shifts
  TestFunction phi;
  phi.f = [](double x) { return (x > 0.55 && x <= 0.85) ? (x - 0.55) * (0.85 - x) : 0.0; };
  phi.label = "far";
  std::vector<TrackedFunctional> far{TrackedFunctional::make("far", phi, s.grid)};
  FirstOrderSolution sol = solve_first_order(s.model, s.init, s.grid.delta, 0.36, far, 8, 2);
  SimConfig cfg{s.grid.delta, 0.36, 77, 0};
  LOBPath path = simulate_path(cfg, s.model, s.init, far);
  MartingaleDiagnostics d = martingale_diagnostics(path, sol, s.model, far);
  // the compensator integral of Q^(n) is identically zero off the support
  CHECK(std::abs(d.comp_Q[0].back()) < 1e-12);
  // and so is the projection itself: nothing ever lands there
  CHECK(std::abs(d.Mu[0].back()) < 1e-9);
}

TEST_CASE("pure-price fluctuation variance matches sigma0^2 * t") {
  TickGrid grid = TickGrid::make(0.002, 1.0);
  StepDensity none(grid);
  Model model = make_constant_model(grid, 0.05, 0.05, 0.0, 0.0, none,
                                    VolumeIndicator::left_indicator(), 10.0);
  InitialState init{0.0, StepDensity(grid)};
  FirstOrderSolution sol = solve_first_order(model, init, grid.delta, 0.36, {}, 0, 2);
  SimConfig cfg{grid.delta, 0.36, 0, 0};
  FluctuationEnsemble fe = fluctuation_ensemble(cfg, model, init, sol, 4000, 99, 4, 4);
  double expect = 0.1 * 0.36;  // sigma0^2 * t = 0.036
  CHECK(std::abs(fe.var_ZB.back() - expect) < 4.0 * fe.se_var_ZB.back());
}

TEST_CASE("lln sup gap decreases with delta at roughly the square-root rate") {
  double deltas[2] = {0.004, 0.001};
  double gaps[2];
  for (int r = 0; r < 2; ++r) {
    TickGrid grid = TickGrid::make(deltas[r], 1.0);
    StepDensity prof = make_profile(grid, -0.5, 0.0, ProfileShape::box);
    Model model = make_constant_model(grid, 0.04, 0.06, 1.0, 4.0, prof,
                                      VolumeIndicator::left_indicator(), 10.0);
    InitialState init{0.0, StepDensity(grid)};
    for (int a = 0; a < grid.n_cells; ++a) {
      double x = grid.x_center(a);
      if (x > -0.5 && x <= 0.0) init.u0.values[(std::size_t)a] = 1.0;
    }
    TestFunction zeta;
    zeta.f = [](double x) { return std::exp(-8.0 * (x + 0.2) * (x + 0.2)); };
    zeta.label = "zeta";
    TrackedFunctional tz = TrackedFunctional::make("zeta", zeta, grid);
    FirstOrderSolution sol = solve_first_order(model, init, deltas[r], 0.36, {tz}, 0, 2);
    SimConfig cfg{deltas[r], 0.36, 0, 0};
    gaps[r] = lln_sup_gap(cfg, model, init, sol, 1.0, tz, 160, 31, 4);
  }
  double slope = std::log(gaps[0] / gaps[1]) / std::log(deltas[0] / deltas[1]);
  CHECK(slope > 0.3);
  CHECK(slope < 0.75);
}
