#include <cmath>

#include "doctest.h"
#include "lobflux/second_order.hpp"

using namespace lobflux;

namespace {

SimplifiedModel constant_model(double P, double Q, double R, double fprime, double T) {
  SimplifiedModel m;
  m.T = T;
  m.Y = [](double) { return 0.0; };
  m.u_top = [](double) { return 0.0; };
  m.P = [P](double) { return P; };
  m.Q = [Q](double) { return Q; };
  m.R = [R](double) { return R; };
  m.Fprime = [fprime](double) { return fprime; };
  return m;
}

}  // namespace

TEST_CASE("constant coefficients, F' = 0: linear-in-t covariances") {
  SimplifiedModel m = constant_model(0.2, 0.05, 0.4, 0.0, 1.0);
  SimplifiedCovariance sc = simplified_covariance(m, 0.75, 400);
  CHECK(sc.var_ZB == doctest::Approx(0.2 * 0.75).epsilon(1e-10));
  CHECK(sc.var_ZY == doctest::Approx(0.4 * 0.75).epsilon(1e-10));
  CHECK(sc.cov == doctest::Approx(0.05 * 0.75).epsilon(1e-10));
  CHECK(sc.rho == doctest::Approx(0.05 / std::sqrt(0.2 * 0.4)).epsilon(1e-10));
}

TEST_CASE("constant coefficients, F' = lambda < 0: exponential closed form") {
  double lambda = -3.0, R = 0.8, t = 0.6;
  SimplifiedModel m = constant_model(0.2, 0.05, R, lambda, 1.0);
  SimplifiedCovariance sc = simplified_covariance(m, t, 10000);
  double expect_y = R * (std::exp(2 * lambda * t) - 1.0) / (2 * lambda);
  CHECK(sc.var_ZY == doctest::Approx(expect_y).epsilon(1e-8));
  double expect_c = 0.05 * (std::exp(lambda * t) - 1.0) / lambda;
  CHECK(sc.cov == doctest::Approx(expect_c).epsilon(1e-8));
}

TEST_CASE("literal and integral exponent readings agree for constant Y") {
  // F'(Y(t-s)) is constant here, but the literal reading drops the (t-s)
  // factor, so the two coincide only at F' = 0
  SimplifiedModel m0 = constant_model(0.2, 0.05, 0.4, 0.0, 1.0);
  SimplifiedCovariance a = simplified_covariance(m0, 0.5, 500, CovarianceExponent::integral);
  SimplifiedCovariance b = simplified_covariance(m0, 0.5, 500, CovarianceExponent::literal);
  CHECK(a.var_ZY == doctest::Approx(b.var_ZY).epsilon(1e-12));
  // with decay they differ, and the literal one is the constant-weight value
  SimplifiedModel m1 = constant_model(0.2, 0.05, 0.4, -2.0, 1.0);
  SimplifiedCovariance c = simplified_covariance(m1, 0.5, 500, CovarianceExponent::literal);
  CHECK(c.var_ZY == doctest::Approx(std::exp(-4.0) * 0.4 * 0.5).epsilon(1e-8));
}

TEST_CASE("coefficient-built model: paths and fixed point") {
  SimplifiedCoefficients coeffs;
  coeffs.p_c = 0.1;
  coeffs.p_y = 0.0;
  coeffs.F_c = 8.0;
  coeffs.F_y = -4.0;
  coeffs.f0_c = 2.0;
  coeffs.f0_y = 0.0;
  coeffs.G_c = 100.0;
  SimplifiedModel m = make_simplified_from_coeffs(coeffs, 0.5, 3.0, 1.0);
  double y_star = 2.0;
  CHECK(m.Y(50.0) == doctest::Approx(y_star).epsilon(1e-9));
  CHECK(m.Y(0.0) == doctest::Approx(0.5));
  // u_top integrates f0: constant f0 = 2 gives linear growth
  CHECK(m.u_top(0.5) == doctest::Approx(3.0 + 2.0 * 0.5).epsilon(1e-9));
  CHECK(m.P(0.1) == doctest::Approx(0.1));
  CHECK(m.Q(0.1) == doctest::Approx(0.1 * m.u_top(0.1)).epsilon(1e-9));
}

TEST_CASE("OU simulator: degenerate and Brownian sanity cases") {
  // sigma = 0: deterministic flow of the drift, Z stays at 0
  SimplifiedModel zero = constant_model(0.0, 0.0, 0.0, -1.0, 1.0);
  OUSimConfig cfg;
  cfg.T = 0.5;
  cfg.dt = 1e-3;
  cfg.n_paths = 50;
  cfg.seed = 4;
  GaussianEnsemble e0 = simulate_simplified_ou(zero, cfg);
  CHECK(std::abs(e0.var_ZB.back()) < 1e-20);
  CHECK(std::abs(e0.var_ZY.back()) < 1e-20);

  // D = 0, sigma = I: standard 2D Brownian motion, Var ~ t
  SimplifiedModel bm = constant_model(1.0, 0.0, 1.0, 0.0, 1.0);
  OUSimConfig cb;
  cb.T = 0.5;
  cb.dt = 1e-3;
  cb.n_paths = 4000;
  cb.seed = 10;
  cb.n_threads = 4;
  GaussianEnsemble eb = simulate_simplified_ou(bm, cb);
  CHECK(std::abs(eb.var_ZB.back() - 0.5) < 4.0 * eb.se_var_ZB.back());
  CHECK(std::abs(eb.var_ZY.back() - 0.5) < 4.0 * eb.se_var_ZY.back());
  CHECK(std::abs(eb.cov.back()) < 4.0 * eb.se_cov.back());
}

TEST_CASE("OU ensemble matches the covariance quadrature within 4 sigma") {
  SimplifiedModel m = constant_model(0.3, 0.12, 0.6, -2.5, 1.0);
  OUSimConfig cfg;
  cfg.T = 0.36;
  cfg.dt = 1e-3;
  cfg.n_paths = 4000;
  cfg.seed = 21;
  cfg.n_threads = 4;
  cfg.n_checkpoints = 4;
  GaussianEnsemble e = simulate_simplified_ou(m, cfg);
  for (std::size_t i = 0; i < e.checkpoint_t.size(); ++i) {
    SimplifiedCovariance sc = simplified_covariance(m, e.checkpoint_t[i], 4000);
    CHECK(std::abs(e.var_ZB[i] - sc.var_ZB) < 4.0 * e.se_var_ZB[i] + 2e-3 * sc.var_ZB);
    CHECK(std::abs(e.var_ZY[i] - sc.var_ZY) < 4.0 * e.se_var_ZY[i] + 2e-2 * sc.var_ZY);
    CHECK(std::abs(e.cov[i] - sc.cov) < 4.0 * e.se_cov[i] + 2e-2 * std::abs(sc.cov));
  }
}

TEST_CASE("PSD failure is reported with the offending time") {
  // Q too large relative to P and R
  SimplifiedModel bad = constant_model(0.01, 1.0, 0.5, 0.0, 1.0);
  OUSimConfig cfg;
  cfg.T = 0.1;
  cfg.dt = 1e-2;
  cfg.n_paths = 2;
  cfg.seed = 3;
  CHECK_THROWS_AS(simulate_simplified_ou(bad, cfg), Error);
}

TEST_CASE("independence ablation: zero Q kills the correlation") {
  SimplifiedModel m = constant_model(0.3, 0.15, 0.6, -1.0, 1.0);
  OUSimConfig cfg;
  cfg.T = 0.36;
  cfg.dt = 1e-3;
  cfg.n_paths = 4000;
  cfg.seed = 77;
  cfg.n_threads = 4;
  cfg.force_zero_Q = true;
  GaussianEnsemble e = simulate_simplified_ou(m, cfg);
  for (std::size_t i = 0; i < e.corr.size(); ++i) {
    CHECK(std::abs(e.corr[i]) < 2.0 / std::sqrt(static_cast<double>(cfg.n_paths)) * 2.0);
  }
}

// ---------------------------------------------------------------------------
// Spectral pieces

namespace {

struct GeneralSetup {
  TickGrid grid = TickGrid::make(0.01, 1.0);
  Model model;
  InitialState init;
  FirstOrderSolution sol;
};

GeneralSetup make_general(double p_base) {
  GeneralSetup s;
  StepDensity prof = make_profile(s.grid, -0.4, 0.0, ProfileShape::cosine);
  SimplifiedCoefficients coeffs;
  coeffs.p_c = 0.1;
  coeffs.p_y = 0.005;
  coeffs.F_c = 1.0;
  coeffs.F_y = -0.8;
  coeffs.G_c = 30.0;
  s.model = make_general_model(s.grid, coeffs, prof, VolumeIndicator::left_indicator(), 50.0,
                               p_base, 0.0, 0.0);
  s.init.b0 = 0.0;
  s.init.u0 = StepDensity(s.grid);
  // C^1 initial profile (raised cosine), per the standing regularity assumption
  for (int a = 0; a < s.grid.n_cells; ++a) {
    double x = s.grid.x_center(a);
    if (x > -0.4 && x <= 0.0) {
      s.init.u0.values[(std::size_t)a] = 1.0 + std::cos(3.14159265358979 * (x + 0.2) / 0.2);
    }
  }
  s.sol = solve_first_order(s.model, s.init, 0.01, 0.3, {}, 2, 2);
  return s;
}

}  // namespace

TEST_CASE("assembled covariance is PSD with a tight factorization") {
  GeneralSetup s = make_general(0.02);
  SpectralBasis basis = SpectralBasis::make(s.grid, 21);
  for (double t : {0.05, 0.15, 0.25}) {
    SpectralCovarianceSample c = assemble_sigma(s.model, s.sol, t, basis);
    CHECK(c.lambda_min >= -1e-12 * std::max(c.norm, 1e-30));
    double resid = (c.factor * c.factor.transpose() - c.sigma).norm();
    CHECK(resid <= 1e-10 * std::max(c.norm, 1e-30) + c.clip_magnitude * 1.0001);
    CHECK(c.sigma(0, 0) >= 0.0);
    // symmetric by construction
    CHECK((c.sigma - c.sigma.transpose()).norm() == doctest::Approx(0.0));
  }
}

TEST_CASE("zero density and zero f decouple price and volume noise") {
  TickGrid grid = TickGrid::make(0.01, 1.0);
  StepDensity prof = make_profile(grid, -0.4, 0.0, ProfileShape::box);
  Model model = make_constant_model(grid, 0.04, 0.06, 0.0, 5.0, prof,
                                    VolumeIndicator::left_indicator(), 50.0);
  InitialState init{0.0, StepDensity(grid)};  // u = 0: no d/dx coupling
  FirstOrderSolution sol = solve_first_order(model, init, 0.01, 0.1, {}, 1, 2);
  SpectralBasis basis = SpectralBasis::make(grid, 9);
  SpectralCovarianceSample c = assemble_sigma(model, sol, 0.0, basis);
  for (int k = 1; k <= basis.n_modes; ++k) CHECK(std::abs(c.sigma(0, k)) < 1e-14);
  // volume block equals the multiplication-by-g Gram, computed independently
  for (int j = 1; j <= 3; ++j) {
    for (int k = 1; k <= 3; ++k) {
      double gram = 0.0;
      StepDensity gf = model.moments.g.eval(0.0, 0.0);
      for (int a = 0; a < grid.n_cells; ++a) {
        if (gf.values[(std::size_t)a] == 0.0) continue;
        gram += gf.values[(std::size_t)a] *
                gauss_legendre(
                    [&](double x) { return basis.mode_value(j - 1, x) * basis.mode_value(k - 1, x); },
                    grid.x_left(a), grid.x_right(a));
      }
      CHECK(c.sigma(j, k) == doctest::Approx(gram).epsilon(1e-9));
    }
  }
}

TEST_CASE("hand-assembled 2x2 check with the constant mode") {
  GeneralSetup s = make_general(0.03);
  SpectralBasis basis = SpectralBasis::make(s.grid, 1);  // constant mode only
  double t = 0.1;
  SpectralCovarianceSample c = assemble_sigma(s.model, s.sol, t, basis);
  FirstOrderSample ref = evaluate(s.sol, t);
  EventProbs pr = s.model.probs.eval(ref.b, ref.y);
  double p = pr.b - pr.a;
  double sig0 = pr.a + pr.b - p * p;
  StepDensity du = finite_diff(ref.u, DiffSide::plus);
  double a0 = 0.0, f0 = 0.0, g00 = 0.0;
  StepDensity ff = s.model.moments.f.eval(ref.b, ref.y);
  StepDensity gg = s.model.moments.g.eval(ref.b, ref.y);
  double e0 = basis.mode_value(0, 0.0);  // constant
  for (int a = 0; a < s.grid.n_cells; ++a) {
    a0 += du.values[(std::size_t)a] * e0 * s.grid.delta;
    f0 += ff.values[(std::size_t)a] * e0 * s.grid.delta;
    g00 += gg.values[(std::size_t)a] * e0 * e0 * s.grid.delta;
  }
  CHECK(c.sigma(0, 0) == doctest::Approx(sig0).epsilon(1e-12));
  CHECK(c.sigma(0, 1) == doctest::Approx(sig0 * a0 - p * f0).epsilon(1e-9));
  CHECK(c.sigma(1, 1) ==
        doctest::Approx(sig0 * a0 * a0 - 2 * p * f0 * a0 + g00 - f0 * f0).epsilon(1e-9));
}

TEST_CASE("truncated trace: bounded in t; Parseval parts stabilize in K") {
  GeneralSetup s = make_general(0.02);
  SpectralBasis b32 = SpectralBasis::make(s.grid, 32);
  double max_trace = 0.0, min_trace = 1e300;
  for (double t : {0.02, 0.1, 0.18, 0.26}) {
    SpectralCovarianceSample c = assemble_sigma(s.model, s.sol, t, b32);
    max_trace = std::max(max_trace, c.trace);
    min_trace = std::min(min_trace, c.trace);
  }
  CHECK(max_trace < 3.0 * std::max(min_trace, 1e-12));

  // the d/dx and f parts converge (Parseval); the g-multiplication part
  // contributes a constant per mode, so compare traces net of it
  double t = 0.15;
  FirstOrderSample ref = evaluate(s.sol, t);
  StepDensity gg = s.model.moments.g.eval(ref.b, ref.y);
  double g_mean = gg.mass() / (2.0 * s.grid.half_width);
  double prev_net = -1.0;
  for (int K : {17, 33, 65, 129}) {
    SpectralBasis basis = SpectralBasis::make(s.grid, K);
    SpectralCovarianceSample c = assemble_sigma(s.model, s.sol, t, basis);
    // per-mode g contribution is exactly g_mean (complete cos/sin pairs); the
    // remaining Parseval parts converge once the profile frequencies resolve
    double net = c.trace - g_mean * basis.n_modes;
    if (prev_net > 0.0) {
      CHECK(std::abs(net - prev_net) < 0.1 * std::abs(prev_net) + 1e-9);
    }
    prev_net = net;
  }
}

TEST_CASE("spde: pure translation is exact in the mode coordinates") {
  GeneralSetup s = make_general(0.4);  // strong drift so the shift is visible
  SpdeSimConfig cfg;
  cfg.T = 0.2;
  cfg.dt = 0.01;
  cfg.n_modes = 15;
  cfg.n_paths = 1;
  cfg.seed = 5;
  cfg.drift_off = true;
  cfg.noise_off = true;
  SpectralBasis basis = SpectralBasis::make(s.grid, cfg.n_modes);
  // z0: a bump expressed in mode coordinates
  Eigen::VectorXd z0 = Eigen::VectorXd::Zero(basis.n_modes + 1);
  z0(0) = 1.0;
  auto bump = [](double x) { return std::exp(-30.0 * (x + 0.2) * (x + 0.2)); };
  for (int k = 0; k < basis.n_modes; ++k) {
    double c = 0.0;
    for (int a = 0; a < s.grid.n_cells; ++a) {
      c += gauss_legendre([&](double x) { return bump(x) * basis.mode_value(k, x); },
                          s.grid.x_left(a), s.grid.x_right(a));
    }
    z0(k + 1) = c;
  }
  TestFunction phi;
  phi.f = [](double x) { return std::exp(-20.0 * (x + 0.1) * (x + 0.1)); };
  phi.label = "probe";
  std::vector<TrackedFunctional> fns{TrackedFunctional::make("probe", phi, s.grid)};
  SpdeResult res = simulate_spde(s.model, s.sol, cfg, fns, &z0);

  // Z^B is untouched and <Z^u_t, phi> = <z0 translated by the accumulated
  // characteristic, phi>, evaluated in the truncated basis
  CHECK(res.stats.mean_ZB.back() == doctest::Approx(1.0));
  double shift = s.sol.characteristic.back() * (cfg.T / s.sol.T);
  // accumulate the exact shift over [0, cfg.T] from the solution
  {
    double c_T = 0.0;
    for (std::size_t i = 0; i + 1 < s.sol.t.size(); ++i) {
      if (s.sol.t[i + 1] <= cfg.T + 1e-12) c_T = s.sol.characteristic[i + 1];
    }
    shift = c_T;
  }
  double expect = 0.0, got = res.mean_Zu[0].back();
  for (int k = 0; k < basis.n_modes; ++k) {
    // translated mode coefficients pair against phi's mode coefficients
    double fk = 0.0;
    for (int a = 0; a < s.grid.n_cells; ++a) {
      fk += gauss_legendre([&](double x) { return phi.f(x) * basis.mode_value(k, x); },
                           s.grid.x_left(a), s.grid.x_right(a));
    }
    double ck = 0.0;
    for (int a = 0; a < s.grid.n_cells; ++a) {
      ck += gauss_legendre([&](double x) { return bump(x + shift) * basis.mode_value(k, x); },
                           s.grid.x_left(a), s.grid.x_right(a));
    }
    expect += ck * fk;
  }
  CHECK(got == doctest::Approx(expect).epsilon(5e-3));
}

TEST_CASE("spde reproduces the OU statistics for a martingale-price model") {
  // p identically zero: the h-projection follows the 2D OU dynamics
  TickGrid grid = TickGrid::make(0.01, 1.0);
  StepDensity prof = make_profile(grid, -0.4, 0.0, ProfileShape::cosine);
  SimplifiedCoefficients coeffs;
  coeffs.p_c = 0.12;
  coeffs.p_y = 0.0;
  coeffs.F_c = 1.0;
  coeffs.F_y = -0.8;
  coeffs.G_c = 25.0;
  // smooth volume indicator so the spectral pairing is well behaved
  TestFunction h;
  h.f = [](double x) {
    double t = (x + 0.5) / 0.45;
    if (std::abs(t) >= 1.0) return 0.0;
    return std::exp(1.0 - 1.0 / (1.0 - t * t));
  };
  h.label = "smooth_h";
  Model model = make_simplified_model(grid, coeffs, prof, VolumeIndicator::smooth(h), 50.0);
  InitialState init{0.0, StepDensity(grid)};
  for (int a = 0; a < grid.n_cells; ++a) {
    double x = grid.x_center(a);
    if (x > -0.4 && x <= 0.0) init.u0.values[(std::size_t)a] = 2.0;
  }
  std::vector<TrackedFunctional> hs{TrackedFunctional::make("h", h, grid)};
  FirstOrderSolution sol = solve_first_order(model, init, 0.01, 0.3, hs, 1, 2);

  SpdeSimConfig cfg;
  cfg.T = 0.3;
  cfg.dt = 0.005;
  cfg.n_modes = 33;
  cfg.n_paths = 2000;
  cfg.seed = 303;
  cfg.n_threads = 4;
  cfg.n_checkpoints = 3;
  SpdeResult spde = simulate_spde(model, sol, cfg);

  SimplifiedModel ou_model = make_simplified_from_solution(model, sol);
  OUSimConfig ou_cfg;
  ou_cfg.T = 0.3;
  ou_cfg.dt = 0.005;
  ou_cfg.n_paths = 2000;
  ou_cfg.seed = 404;
  ou_cfg.n_threads = 4;
  ou_cfg.n_checkpoints = 3;
  GaussianEnsemble ou = simulate_simplified_ou(ou_model, ou_cfg);

  for (std::size_t i = 0; i < ou.checkpoint_t.size(); ++i) {
    CHECK(std::abs(spde.stats.var_ZB[i] - ou.var_ZB[i]) <
          4.0 * (spde.stats.se_var_ZB[i] + ou.se_var_ZB[i]));
    CHECK(std::abs(spde.stats.var_ZY[i] - ou.var_ZY[i]) <
          4.0 * (spde.stats.se_var_ZY[i] + ou.se_var_ZY[i]) + 0.05 * ou.var_ZY[i]);
    CHECK(std::abs(spde.stats.cov[i] - ou.cov[i]) <
          4.0 * (spde.stats.se_cov[i] + ou.se_cov[i]) + 0.05 * std::abs(ou.cov[i]));
  }
}
