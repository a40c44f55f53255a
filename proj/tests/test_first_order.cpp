#include <cmath>

#include "doctest.h"
#include "lobflux/first_order.hpp"

using namespace lobflux;

namespace {

StepDensity gaussian_density(const TickGrid& g, double c, double s, double height) {
  StepDensity d(g);
  for (int a = 0; a < g.n_cells; ++a) {
    double x = g.x_center(a);
    d.values[(std::size_t)a] = height * std::exp(-0.5 * (x - c) * (x - c) / (s * s));
  }
  return d;
}

double l2_error_vs(const StepDensity& u, const std::function<double(double)>& ref) {
  double e = 0.0;
  for (int a = 0; a < u.grid.n_cells; ++a) {
    double d = u.values[(std::size_t)a] - ref(u.grid.x_center(a));
    e += d * d * u.grid.delta;
  }
  return std::sqrt(e);
}

Model drift_model(const TickGrid& g, double p_const) {
  // p = p_B - p_A = p_const, no placements
  StepDensity none(g);
  double pb = 0.5 * (1.0 + p_const), pa = 0.5 * (1.0 - p_const);
  return make_constant_model(g, pa, pb, 0.0, 0.0, none, VolumeIndicator::left_indicator(), 10.0);
}

}  // namespace

TEST_CASE("constant-speed transport reproduces u0(x + ct)") {
  const double c = 0.37;
  double errs[2];
  double deltas[2] = {0.01, 0.005};
  for (int r = 0; r < 2; ++r) {
    TickGrid g = TickGrid::make(deltas[r], 1.0);
    Model model = drift_model(g, c);
    StepDensity u0 = gaussian_density(g, -0.35, 0.08, 1.0);
    double T = 0.4;
    FirstOrderSolution sol = solve_first_order(model, {0.0, u0}, deltas[r], T, {}, 1);
    // B and the characteristic are exact for constant p
    CHECK(sol.B.back() == doctest::Approx(c * sol.T).epsilon(1e-12));
    CHECK(sol.characteristic.back() == doctest::Approx(c * sol.T).epsilon(1e-12));
    const StepDensity& uT = sol.snapshots.at(sol.n_steps);
    double T_end = sol.T;
    errs[r] = l2_error_vs(uT, [&](double x) {
      double xx = x + c * T_end;
      return std::exp(-0.5 * (xx + 0.35) * (xx + 0.35) / (0.08 * 0.08));
    });
  }
  CHECK(errs[0] < 0.05);
  // first order: halving (dt, delta) together halves the error
  double ratio = errs[0] / errs[1];
  CHECK(ratio > 1.6);
  CHECK(ratio < 2.4);
}

TEST_CASE("pure source: u grows linearly and Y integrates <h, f> exactly") {
  TickGrid g = TickGrid::make(0.01, 1.0);
  StepDensity prof = make_profile(g, -0.5, 0.0, ProfileShape::box);
  Model model = make_constant_model(g, 0.1, 0.1, 0.8, 3.0, prof,
                                    VolumeIndicator::left_indicator(), 10.0);
  StepDensity u0 = gaussian_density(g, -0.3, 0.1, 0.5);
  double T = 0.3;
  FirstOrderSolution sol = solve_first_order(model, {0.0, u0}, 0.01, T, {}, 1);
  // p = 0: no transport; u(t) = u0 + t * f exactly on the mesh
  const StepDensity& uT = sol.snapshots.at(sol.n_steps);
  for (int a = 0; a < g.n_cells; ++a) {
    double expect = u0.values[(std::size_t)a] + sol.T * 0.8 * prof.values[(std::size_t)a];
    CHECK(uT.values[(std::size_t)a] == doctest::Approx(expect).epsilon(1e-10));
  }
  double y0 = sol.Y.front();
  CHECK(sol.Y.back() == doctest::Approx(y0 + sol.T * 0.8).epsilon(1e-9));
  // mass balance: d/dt int u = int f
  double m0 = u0.mass();
  CHECK(uT.mass() == doctest::Approx(m0 + sol.T * 0.8).epsilon(1e-9));
}

TEST_CASE("evaluate: mesh points exact, midpoints linear, t=0 is the init") {
  TickGrid g = TickGrid::make(0.01, 1.0);
  Model model = drift_model(g, 0.5);
  StepDensity u0 = gaussian_density(g, -0.3, 0.1, 1.0);
  FirstOrderSolution sol = solve_first_order(model, {1.0, u0}, 0.01, 0.2, {}, 4);
  FirstOrderSample at0 = evaluate(sol, 0.0);
  CHECK(at0.b == doctest::Approx(1.0));
  for (int a = 0; a < g.n_cells; ++a) {
    CHECK(at0.u.values[(std::size_t)a] == doctest::Approx(u0.values[(std::size_t)a]).epsilon(1e-9));
  }
  int i = 7;
  FirstOrderSample at_mesh = evaluate(sol, sol.t[(std::size_t)i]);
  CHECK(at_mesh.b == doctest::Approx(sol.B[(std::size_t)i]));
  CHECK(at_mesh.y == doctest::Approx(sol.Y[(std::size_t)i]));
  double tm = 0.5 * (sol.t[7] + sol.t[8]);
  FirstOrderSample at_mid = evaluate(sol, tm);
  CHECK(at_mid.b == doctest::Approx(0.5 * (sol.B[7] + sol.B[8])));
  CHECK_THROWS_AS(evaluate(sol, -0.1), Error);
  CHECK_THROWS_AS(evaluate(sol, 1.0), Error);
}

TEST_CASE("support stays inside the trapezoid [-M - t, M + t]") {
  TickGrid g = TickGrid::make(0.01, 1.0);
  Model model = drift_model(g, -0.8);
  StepDensity u0(g);
  double M = 0.3;
  for (int a = 0; a < g.n_cells; ++a) {
    if (std::abs(g.x_center(a)) < M) u0.values[(std::size_t)a] = 1.0;
  }
  double T = 0.4;
  FirstOrderSolution sol = solve_first_order(model, {0.0, u0}, 0.01, T, {}, 1);
  for (const auto& [k, u] : sol.snapshots) {
    double t = k * sol.dt;
    double outside = 0.0, total = 0.0;
    for (int a = 0; a < g.n_cells; ++a) {
      double x = g.x_center(a);
      total += std::abs(u.values[(std::size_t)a]) * g.delta;
      if (x < -M - t - 2 * g.delta || x > M + t + 2 * g.delta) {
        outside += std::abs(u.values[(std::size_t)a]) * g.delta;
      }
    }
    CHECK(outside <= 1e-10 * std::max(total, 1.0));
  }
}

TEST_CASE("aggregate volume follows the closed-form linear ODE") {
  // martingale-price lift with the sample bid coefficients: the aggregate
  // drift is dY/dt = F_c + F_y Y with the known exponential solution
  SimplifiedCoefficients coeffs = preset_dte2022_bid();
  TickGrid g = TickGrid::make(0.002, 1.5);
  StepDensity prof = make_profile(g, -0.5, 0.0, ProfileShape::box);
  Model model = make_simplified_model(g, coeffs, prof, VolumeIndicator::left_indicator(), 1e7);
  double y0 = 1.0e4;
  StepDensity u0(g);
  for (int a = 0; a < g.n_cells; ++a) {
    double x = g.x_center(a);
    if (x > -0.5 && x <= 0.0) u0.values[(std::size_t)a] = y0 / 0.5;
  }
  double T = 0.36;
  FirstOrderSolution sol = solve_first_order(model, {0.0, u0}, 0.002, T, {}, 0);
  double y_star = coeffs.equilibrium_y();
  CHECK(y_star == doctest::Approx(6.2503e4).epsilon(1e-3));
  double y_exact = (y0 - y_star) * std::exp(coeffs.F_y * sol.T) + y_star;
  CHECK(std::abs(sol.Y.back() - y_exact) <= 1e-6 * std::abs(y_exact));
}

TEST_CASE("dt above the grid spacing triggers the interpolation warning") {
  TickGrid g = TickGrid::make(0.01, 1.0);
  Model model = drift_model(g, 0.2);
  StepDensity u0 = gaussian_density(g, -0.3, 0.1, 1.0);
  FirstOrderSolution sol = solve_first_order(model, {0.0, u0}, 0.05, 0.2, {}, 0);
  CHECK(!sol.warnings.empty());
}
