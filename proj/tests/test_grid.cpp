#include <cmath>
#include <random>

#include "doctest.h"
#include "lobflux/grid.hpp"
#include "lobflux/rng.hpp"

using namespace lobflux;

namespace {

StepDensity density_of(const TickGrid& g, std::vector<double> v) {
  return StepDensity(g, std::move(v));
}

TestFunction fn(std::function<double(double)> f) {
  TestFunction t;
  t.f = std::move(f);
  return t;
}

}  // namespace

TEST_CASE("grid construction validates alignment") {
  TickGrid g = TickGrid::make(0.25, 2.0);
  CHECK(g.n_cells == 16);
  CHECK(g.x_left(0) == doctest::Approx(-2.0));
  CHECK(g.x_right(15) == doctest::Approx(2.0));
  CHECK_THROWS_AS(TickGrid::make(0.3, 1.0), Error);
  CHECK_THROWS_AS(TickGrid::make(-0.1, 1.0), Error);
}

TEST_CASE("cell_index implements the left-open right-closed interval") {
  TickGrid g = TickGrid::make(0.002, 1.0);
  // x = 0.0031 lies in the lattice cell (0.002, 0.004], lattice index 1
  int a = g.cell_index(0.0031);
  CHECK(g.lattice_of(a) == 1);
  // the right edge belongs to its own cell
  int j = 7;
  double edge = (j + 1) * 0.002;
  CHECK(g.lattice_of(g.cell_index(edge)) == j);
  // midpoint
  CHECK(g.lattice_of(g.cell_index(j * 0.002 + 0.001)) == j);
  // out of range
  CHECK_THROWS_AS(g.cell_index(1.5), Error);
  CHECK_THROWS_AS(g.cell_index(-1.0), Error);  // x = -L has no cell in (-L, L]
  // exact lattice edges across the whole grid
  for (int jj = -499; jj <= 500; ++jj) {
    double x = jj * 0.002;
    CHECK(g.lattice_of(g.cell_index(x)) == jj - 1);
  }
}

TEST_CASE("translate matches the pointwise definition of T_+ and T_-") {
  TickGrid g = TickGrid::make(1.0, 2.0);  // 4 cells
  StepDensity d = density_of(g, {1.0, 2.0, 3.0, 4.0});
  StepDensity plus = translate(d, Shift::plus);    // f(. + delta)
  StepDensity minus = translate(d, Shift::minus);  // f(. - delta)
  for (int a = 0; a < g.n_cells; ++a) {
    double x = g.x_center(a);
    // T_+ d at x equals d at x + delta (zero outside)
    double expect_p = (x + g.delta <= g.half_width) ? d.values[(std::size_t)g.cell_index(x + 1.0)] : 0.0;
    CHECK(plus.values[(std::size_t)a] == doctest::Approx(expect_p));
    double expect_m = (x - g.delta > -g.half_width) ? d.values[(std::size_t)g.cell_index(x - 1.0)] : 0.0;
    CHECK(minus.values[(std::size_t)a] == doctest::Approx(expect_m));
  }
}

TEST_CASE("translate moves one cell, zero-fills, and counts dropped mass") {
  TickGrid g = TickGrid::make(1.0, 2.0);  // 4 cells
  StepDensity d = density_of(g, {0.0, 5.0, 0.0, 0.0});
  double drop = 0.0;
  StepDensity m = translate(d, Shift::minus, &drop);
  CHECK(m.values == std::vector<double>{0.0, 0.0, 5.0, 0.0});  // graph of f(x - delta) moves right
  CHECK(drop == 0.0);
  drop = 0.0;
  StepDensity p = translate(d, Shift::plus, &drop);
  CHECK(p.values == std::vector<double>{5.0, 0.0, 0.0, 0.0});
  CHECK(drop == 0.0);

  // shift-inverse on densities with zero boundary cells
  StepDensity roundtrip = translate(translate(d, Shift::plus), Shift::minus);
  CHECK(roundtrip.values == d.values);

  // dropped mass accounting
  StepDensity edge = density_of(g, {0.0, 0.0, 0.0, 3.0});
  drop = 0.0;
  StepDensity gone = translate(edge, Shift::minus, &drop);
  CHECK(gone.values == std::vector<double>{0.0, 0.0, 0.0, 0.0});
  CHECK(drop == doctest::Approx(3.0 * g.delta));
}

TEST_CASE("no mass is dropped while the support stays inside [-L, L]") {
  // u0 supported on [-M, M] with L > M + T and at most T/delta shifts
  double delta = 0.1, M = 1.0, T = 0.8, L = 2.0;
  TickGrid g = TickGrid::make(delta, L);
  StepDensity d(g);
  for (int a = 0; a < g.n_cells; ++a) {
    if (std::abs(g.x_center(a)) < M) d.values[(std::size_t)a] = 1.0;
  }
  double drop = 0.0;
  StepDensity cur = d;
  int shifts = static_cast<int>(T / delta);
  for (int i = 0; i < shifts; ++i) cur = translate(cur, Shift::minus, &drop);
  CHECK(drop == 0.0);
  CHECK(cur.mass() == doctest::Approx(d.mass()));
}

TEST_CASE("finite differences: constants vanish, indicators produce the stencil") {
  TickGrid g = TickGrid::make(0.5, 2.0);
  StepDensity c(g);
  for (auto& v : c.values) v = 3.25;
  StepDensity dc = finite_diff(c, DiffSide::plus);
  for (int a = 0; a + 1 < g.n_cells; ++a) CHECK(dc.values[(std::size_t)a] == doctest::Approx(0.0));

  // indicator of cell j with value 1/delta
  int j = 4;
  StepDensity ind(g);
  ind.values[(std::size_t)j] = 1.0 / g.delta;
  StepDensity dp = finite_diff(ind, DiffSide::plus);
  CHECK(dp.values[(std::size_t)(j - 1)] == doctest::Approx(1.0 / (g.delta * g.delta)));
  CHECK(dp.values[(std::size_t)j] == doctest::Approx(-1.0 / (g.delta * g.delta)));
}

TEST_CASE("finite difference converges to the derivative at first order") {
  // oracle: analytic derivative of a Gaussian bump, grid refinement study
  auto f = [](double x) { return std::exp(-8.0 * x * x); };
  auto df = [](double x) { return -16.0 * x * std::exp(-8.0 * x * x); };
  double errs[2];
  double deltas[2] = {0.02, 0.01};
  for (int r = 0; r < 2; ++r) {
    TickGrid g = TickGrid::make(deltas[r], 2.0);
    StepDensity d(g);
    for (int a = 0; a < g.n_cells; ++a) d.values[(std::size_t)a] = f(g.x_center(a));
    StepDensity dd = finite_diff(d, DiffSide::plus);
    double err = 0.0;
    for (int a = 1; a + 1 < g.n_cells; ++a) {
      double e = dd.values[(std::size_t)a] - df(g.x_center(a) + 0.5 * g.delta);
      err += e * e * g.delta;
    }
    errs[r] = std::sqrt(err);
  }
  // first-order decay: halving delta should at least halve the error up to slack
  CHECK(errs[1] < 0.75 * errs[0]);
}

TEST_CASE("inner products: unit mass, symmetry, and the box oracle") {
  TickGrid g = TickGrid::make(0.25, 2.0);
  // d = 1/delta on one cell, phi = 1 -> 1
  StepDensity d(g);
  d.values[5] = 1.0 / g.delta;
  CHECK(inner_product(d, fn([](double) { return 1.0; })) == doctest::Approx(1.0));

  // constant density against phi(x) = x -> 0 by symmetry
  StepDensity c(g);
  for (auto& v : c.values) v = 2.5;
  CHECK(inner_product(c, fn([](double x) { return x; })) == doctest::Approx(0.0).epsilon(1e-12));

  // box of height 2 on (0, 1], phi(x) = x -> integral of 2x over [0,1] = 1
  StepDensity box(g);
  for (int a = 0; a < g.n_cells; ++a) {
    double xc = g.x_center(a);
    if (xc > 0.0 && xc < 1.0) box.values[(std::size_t)a] = 2.0;
  }
  CHECK(inner_product(box, fn([](double x) { return x; })) == doctest::Approx(1.0));

  // cell indicator pairing is exactly values[j] * delta
  StepDensity r(g);
  r.values[3] = 1.7;
  double lo = g.x_left(3), hi = g.x_right(3);
  double ip = inner_product(r, fn([lo, hi](double x) { return (x > lo && x <= hi) ? 1.0 : 0.0; }));
  CHECK(ip == doctest::Approx(1.7 * g.delta));
}

TEST_CASE("cell_average stores per-cell integrals") {
  TickGrid g = TickGrid::make(0.5, 1.0);
  StepDensity avg = cell_average([](double) { return 3.0; }, g);
  for (double v : avg.values) CHECK(v == doctest::Approx(3.0 * g.delta));

  // phi(x) = x on the cell (0, delta]: integral = delta^2 / 2
  StepDensity lin = cell_average([](double x) { return x; }, g);
  int a0 = g.cell_index(0.25);  // cell (0, 0.5]
  CHECK(lin.values[(std::size_t)a0] == doctest::Approx(g.delta * g.delta / 2.0));
}

TEST_CASE("cell_average refinement: <g, phi*[phi]_n> approaches <g, phi^2>") {
  auto gfun = [](double x) { return std::exp(-x * x); };
  auto phi = [](double x) { return std::cos(1.3 * x); };
  double ref = 0.0;
  {  // high-order quadrature of <g, phi^2> over [-2, 2]
    TickGrid fine = TickGrid::make(0.001, 2.0);
    for (int a = 0; a < fine.n_cells; ++a) {
      ref += gauss_legendre([&](double x) { return gfun(x) * phi(x) * phi(x); },
                            fine.x_left(a), fine.x_right(a));
    }
  }
  double errs[2];
  double deltas[2] = {0.05, 0.025};
  for (int r = 0; r < 2; ++r) {
    TickGrid g = TickGrid::make(deltas[r], 2.0);
    StepDensity avg = cell_average(phi, g);
    double val = 0.0;
    for (int a = 0; a < g.n_cells; ++a) {
      val += gauss_legendre([&](double x) { return gfun(x) * phi(x); }, g.x_left(a), g.x_right(a)) *
             avg.values[(std::size_t)a] / g.delta;
    }
    errs[r] = std::abs(val - ref);
  }
  CHECK(errs[1] < 0.7 * errs[0]);
}

TEST_CASE("linearity of the grid operations on random inputs") {
  TickGrid g = TickGrid::make(0.1, 1.0);
  SplitMix64 rng(42);
  StepDensity a(g), b(g);
  for (int i = 0; i < g.n_cells; ++i) {
    a.values[(std::size_t)i] = rng.next_double() * 2.0 - 1.0;
    b.values[(std::size_t)i] = rng.next_double() * 2.0 - 1.0;
  }
  double alpha = 0.7, beta = -1.3;
  StepDensity combo(g);
  for (int i = 0; i < g.n_cells; ++i) {
    combo.values[(std::size_t)i] = alpha * a.values[(std::size_t)i] + beta * b.values[(std::size_t)i];
  }
  auto phi = fn([](double x) { return std::sin(2.0 * x) + 0.5; });

  StepDensity ta = translate(a, Shift::plus), tb = translate(b, Shift::plus),
              tc = translate(combo, Shift::plus);
  StepDensity da = finite_diff(a, DiffSide::minus), db = finite_diff(b, DiffSide::minus),
              dc = finite_diff(combo, DiffSide::minus);
  for (int i = 0; i < g.n_cells; ++i) {
    CHECK(tc.values[(std::size_t)i] ==
          doctest::Approx(alpha * ta.values[(std::size_t)i] + beta * tb.values[(std::size_t)i])
              .epsilon(1e-12));
    CHECK(dc.values[(std::size_t)i] ==
          doctest::Approx(alpha * da.values[(std::size_t)i] + beta * db.values[(std::size_t)i])
              .epsilon(1e-12));
  }
  CHECK(inner_product(combo, phi) ==
        doctest::Approx(alpha * inner_product(a, phi) + beta * inner_product(b, phi))
            .epsilon(1e-12));
}

TEST_CASE("mass bookkeeping under translation") {
  TickGrid g = TickGrid::make(0.2, 1.0);
  SplitMix64 rng(7);
  StepDensity d(g);
  for (auto& v : d.values) v = rng.next_double();
  double drop = 0.0;
  StepDensity t = translate(d, Shift::minus, &drop);
  CHECK(t.mass() + drop == doctest::Approx(d.mass()));
}

TEST_CASE("csv and json round trips") {
  TickGrid g = TickGrid::make(0.5, 1.0);
  StepDensity d = density_of(g, {1.0, -2.0, 0.25, 4.0});
  std::string csv = to_csv(d);
  CHECK(csv.rfind("x_left,value\n", 0) == 0);
  StepDensity back = density_from_json(to_json(d));
  CHECK(back.grid == d.grid);
  CHECK(back.values == d.values);
}
