#include <cmath>
#include <sstream>

#include "doctest.h"
#include "lobflux/calibration.hpp"
#include "lobflux/rng.hpp"

using namespace lobflux;

namespace {

std::string well_formed_csv() {
  std::ostringstream os;
  os << "ts,bp1,bp2,bs1,bs2,ap1,ap2,as1,as2\n";
  os << "0,10.00,9.99,100,200,10.01,10.02,150,250\n";
  os << "1,10.00,9.99,110,200,10.01,10.02,150,250\n";
  os << "2,10.01,10.00,90,210,10.02,10.03,140,260\n";
  return os.str();
}

}  // namespace

TEST_CASE("ingest: well-formed rows parse, bad rows are rejected with reasons") {
  SnapshotSchema schema;
  schema.n_levels = 2;
  {
    std::istringstream in(well_formed_csv());
    IngestResult r = ingest_csv(in, schema);
    CHECK(r.snapshots.size() == 3);
    CHECK(r.rejects.empty());
    CHECK(r.snapshots[1].bid_sizes[0] == doctest::Approx(110));
  }
  {
    // crossed book
    std::string text = "ts,bp1,bp2,bs1,bs2,ap1,ap2,as1,as2\n"
                       "0,10.02,9.99,100,200,10.01,10.02,150,250\n";
    std::istringstream in(text);
    schema.max_reject_fraction = 1.0;
    IngestResult r = ingest_csv(in, schema);
    CHECK(r.snapshots.empty());
    REQUIRE(r.rejects.size() == 1);
    CHECK(r.rejects[0].reason == "crossed book");
    CHECK(r.rejects[0].line == 2);
  }
  {
    // unparseable field and non-monotone timestamps
    std::string text = "ts,bp1,bp2,bs1,bs2,ap1,ap2,as1,as2\n"
                       "0,10.00,9.99,abc,200,10.01,10.02,150,250\n"
                       "5,10.00,9.99,100,200,10.01,10.02,150,250\n"
                       "3,10.00,9.99,100,200,10.01,10.02,150,250\n"
                       "5,10.00,9.99,999,200,10.01,10.02,150,250\n";
    std::istringstream in(text);
    IngestResult r = ingest_csv(in, schema);
    REQUIRE(r.snapshots.size() == 1);
    // duplicate timestamp keeps the last row
    CHECK(r.snapshots[0].bid_sizes[0] == doctest::Approx(999));
    CHECK(r.rejects.size() == 2);
  }
  {
    // reject-fraction gate
    SnapshotSchema strict;
    strict.n_levels = 2;
    strict.max_reject_fraction = 0.01;
    std::string text = "ts,bp1,bp2,bs1,bs2,ap1,ap2,as1,as2\n"
                       "0,xx,9.99,100,200,10.01,10.02,150,250\n"
                       "1,10.00,9.99,100,200,10.01,10.02,150,250\n";
    std::istringstream in(text);
    CHECK_THROWS_AS(ingest_csv(in, strict), Error);
  }
}

TEST_CASE("features: constant book gives zero proxies, single move is excluded") {
  SnapshotSchema schema;
  schema.n_levels = 2;
  std::string text = "ts,bp1,bp2,bs1,bs2,ap1,ap2,as1,as2\n"
                     "0,10.00,9.99,100,200,10.01,10.02,1,1\n"
                     "1,10.00,9.99,100,200,10.01,10.02,1,1\n"
                     "2,10.01,10.00,100,200,10.02,10.03,1,1\n"
                     "3,10.01,10.00,100,200,10.02,10.03,1,1\n";
  std::istringstream in(text);
  IngestResult r = ingest_csv(in, schema);
  FeatureSeries f = build_features(r.snapshots, BookSide::bid, 0.01);
  REQUIRE(f.active.size() == 3);
  CHECK(f.active[0] == 0.0);
  CHECK(f.active[1] == 1.0);  // the move
  CHECK(f.active[2] == 0.0);
  CHECK(f.usable[0] == 1);
  CHECK(f.usable[1] == 0);
  CHECK(f.y[0] == doctest::Approx(300));
  CHECK(f.dy[0] == doctest::Approx(0.0));
}

TEST_CASE("ols recovers exact linear relations and flags rank deficiency") {
  std::vector<double> y, ones, x;
  for (int i = 0; i < 50; ++i) {
    double xv = 0.1 * i;
    ones.push_back(1.0);
    x.push_back(xv);
    y.push_back(2.0 + 3.0 * xv);
  }
  RegressionFit fit = ols(y, {ones, x}, {"c", "slope"}, "exact");
  CHECK(fit.coef[0] == doctest::Approx(2.0).epsilon(1e-10));
  CHECK(fit.coef[1] == doctest::Approx(3.0).epsilon(1e-10));
  CHECK(fit.r_squared == doctest::Approx(1.0).epsilon(1e-10));

  // normal equations: X'(y - X beta) = 0
  double g0 = 0.0, g1 = 0.0, scale = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    double resid = y[i] - fit.coef[0] - fit.coef[1] * x[i];
    g0 += resid;
    g1 += resid * x[i];
    scale += std::abs(y[i]);
  }
  CHECK(std::abs(g0) <= 1e-10 * scale);
  CHECK(std::abs(g1) <= 1e-10 * scale);

  std::vector<double> flat(50, 1.0);
  CHECK_THROWS_AS(ols(y, {ones, flat}, {"c", "dup"}, "deficient"), Error);
}

TEST_CASE("ols slope CI covers zero for pure-noise regressions") {
  SplitMix64 rng(8);
  int covered = 0;
  const int reps = 400;
  for (int r = 0; r < reps; ++r) {
    std::vector<double> y, ones, x;
    for (int i = 0; i < 60; ++i) {
      ones.push_back(1.0);
      x.push_back(rng.next_double());
      y.push_back(1.5 + rng.next_normal());
    }
    RegressionFit fit = ols(y, {ones, x}, {"c", "slope"}, "noise");
    if (std::abs(fit.t_stat[1]) < 1.96) ++covered;
  }
  // binomial(400, 0.95): 4 sigma is about 17
  CHECK(covered >= 362);
}

TEST_CASE("pretty table puts t-stats in parentheses beneath coefficients") {
  FeatureSeries f;
  f.tick = 0.01;
  f.delta = 0.01;
  SplitMix64 rng(9);
  for (int i = 0; i < 400; ++i) {
    double yv = 50.0 + 10.0 * rng.next_normal();
    f.active.push_back(rng.next_double() < 0.1 ? 1.0 : 0.0);
    f.y_prev.push_back(yv);
    f.dy.push_back(rng.next_normal());
    f.d_top.push_back(rng.next_normal() * 0.1);
    f.usable.push_back(f.active.back() == 0.0 ? 1 : 0);
  }
  FitSet fits = fit_models(f);
  std::string table = fits_pretty_table(fits);
  CHECK(table.find("p^{B+A}") != std::string::npos);
  CHECK(table.find("(") != std::string::npos);
  CHECK(table.find("c_yy") != std::string::npos);
  std::string js = fits_json(fits, BookSide::bid);
  CHECK(js.find("\"t_stat\"") != std::string::npos);
}

TEST_CASE("microsim book export round-trips and the fits recover the truth") {
  // generator: martingale-price lift with known p and F coefficients over a
  // 10-tick visible window, so the snapshot Y equals the model Y exactly
  TickGrid grid = TickGrid::make(0.002, 0.5);
  const int n_levels = 10;
  const double W = n_levels * grid.delta;
  StepDensity prof = make_profile(grid, -W, 0.0, ProfileShape::box);
  SimplifiedCoefficients coeffs;
  coeffs.p_c = 0.11;
  coeffs.p_y = 5e-5;   // Y-scale here is O(1000)
  coeffs.F_c = 3000.0;
  coeffs.F_y = -3.0;   // equilibrium Y* = 1000
  coeffs.G_c = 2.5e4;  // comfortably feasible; level masses stay positive
  coeffs.g_floor_abs = 1e3;
  Model model = make_simplified_model(grid, coeffs, prof, VolumeIndicator::window_indicator(W),
                                      2000.0);
  InitialState init{10.0, StepDensity(grid)};
  // deep + shadow book beyond the window: shifts exchange comparable masses
  for (int a = 0; a < grid.n_cells; ++a) {
    double x = grid.x_center(a);
    if (x > -0.3 && x <= 0.3) init.u0.values[(std::size_t)a] = 1000.0 / W;  // window mass 1000
  }
  std::vector<TrackedFunctional> levels = make_level_functionals(grid, n_levels);
  SimConfig cfg{grid.delta, 4000 * grid.delta, 1234, 0};
  LOBPath path = simulate_path(cfg, model, init, levels);

  std::ostringstream book;
  write_book_csv(book, path, n_levels, grid.delta);

  SnapshotSchema schema;
  schema.n_levels = n_levels;
  std::istringstream in(book.str());
  IngestResult ing = ingest_csv(in, schema);
  CHECK(ing.rejects.empty());
  REQUIRE(ing.snapshots.size() == path.B.size());

  // lossless round trip of the visible book
  for (std::size_t k = 0; k < ing.snapshots.size(); k += 97) {
    CHECK(ing.snapshots[k].bid_prices[0] == doctest::Approx(path.B[k]).epsilon(1e-9));
    double y_csv = 0.0;
    for (double v : ing.snapshots[k].bid_sizes) y_csv += v;
    CHECK(y_csv == doctest::Approx(path.Y[k]).epsilon(1e-9));
  }

  FeatureSeries feats = build_features(ing.snapshots, BookSide::bid, grid.delta);
  FitSet fits = fit_models(feats);
  // recovered coefficients within ~3 stderr of the generator truth
  CHECK(std::abs(fits.pAB.coef[0] - coeffs.p_c) < 3.5 * fits.pAB.se[0]);
  CHECK(std::abs(fits.pAB.coef[1] - coeffs.p_y) < 3.5 * fits.pAB.se[1]);
  CHECK(std::abs(fits.F.coef[0] - coeffs.F_c) < 3.5 * fits.F.se[0]);
  CHECK(std::abs(fits.F.coef[1] - coeffs.F_y) < 3.5 * fits.F.se[1]);
}

TEST_CASE("windowed correlation: known correlation is recovered, identity is one") {
  // synthetic windows of iid Gaussian pairs with correlation 0.5 around a
  // degenerate model path (coefficients all zero except noise entries)
  SplitMix64 rng(44);
  const int W = 60, n_win = 240;
  const double delta = 0.002, rho_true = 0.5;
  std::vector<double> price, yv, top;
  price.reserve((std::size_t)(W * n_win + 1));
  // build B and Y random walks whose increments have correlation rho_true
  double b = 0.0, y = 0.0;
  price.push_back(b);
  yv.push_back(y);
  top.push_back(1.0);
  for (int i = 0; i < W * n_win; ++i) {
    double x1 = rng.next_normal(), x2 = rng.next_normal();
    double db = x1;
    double dy = rho_true * x1 + std::sqrt(1 - rho_true * rho_true) * x2;
    b += std::sqrt(delta) * db * std::sqrt(delta);
    y += std::sqrt(delta) * dy * std::sqrt(delta);
    price.push_back(b);
    yv.push_back(y);
    top.push_back(1.0);
  }
  SimplifiedCoefficients coeffs;  // P = p_c, Q = p_c * u_top, R = p_c u^2 + G
  coeffs.p_c = 1.0;
  coeffs.F_c = 0.0;
  coeffs.F_y = -1e-9;
  coeffs.G_c = 0.0;
  // with u_top = 1: P = 1, Q = 1, R = 1: model rho -> 1; the data has 0.5,
  // so here only the sample side is under test
  CorrelationConfig cc;
  cc.window_samples = W;
  cc.burn_in = 0.0;
  CorrelationReport rep = windowed_correlation(price, yv, top, delta, delta, coeffs, cc);
  CHECK(rep.n_windows == n_win);
  double mean_rho = 0.0;
  for (double r : rep.sample_rho) mean_rho += r;
  mean_rho /= rep.sample_rho.size();
  CHECK(std::abs(mean_rho - rho_true) < 3.0 * rep.mean_stderr);

  // perfectly dependent series: correlation 1 at every step
  std::vector<double> y_same = price;
  CorrelationReport one = windowed_correlation(price, y_same, top, delta, delta, coeffs, cc);
  for (double r : one.sample_rho) CHECK(r == doctest::Approx(1.0).epsilon(1e-9));

  std::string csv = one.to_csv();
  CHECK(csv.rfind("t,sample_rho,model_rho,n_windows\n", 0) == 0);
}
