#include "lobflux/second_order.hpp"

#include <algorithm>
#include <cmath>

#include "lobflux/parallel.hpp"

namespace lobflux {

namespace {

constexpr double kPi = 3.14159265358979323846;

double lerp_series(const std::vector<double>& ts, const std::vector<double>& vs, double t) {
  if (ts.empty()) throw Error(ErrorKind::invalid_argument, "empty series");
  if (t <= ts.front()) return vs.front();
  if (t >= ts.back()) return vs.back();
  std::size_t hi = static_cast<std::size_t>(
      std::upper_bound(ts.begin(), ts.end(), t) - ts.begin());
  std::size_t lo = hi - 1;
  double w = (t - ts[lo]) / (ts[hi] - ts[lo]);
  return vs[lo] * (1.0 - w) + vs[hi] * w;
}

}  // namespace

SimplifiedModel make_simplified_from_coeffs(const SimplifiedCoefficients& coeffs, double y0,
                                            double u_top0, double T) {
  SimplifiedModel m;
  m.T = T;
  auto c = std::make_shared<SimplifiedCoefficients>(coeffs);
  const double fy = coeffs.F_y;
  const double y_star = (fy != 0.0) ? -coeffs.F_c / fy : 0.0;
  auto y_path = [c, fy, y_star, y0](double t) {
    if (fy == 0.0) return y0 + c->F_c * t;
    return y_star + (y0 - y_star) * std::exp(fy * t);
  };
  auto int_y = [c, fy, y_star, y0](double t) {
    if (fy == 0.0) return y0 * t + 0.5 * c->F_c * t * t;
    return y_star * t + (y0 - y_star) * (std::exp(fy * t) - 1.0) / fy;
  };
  m.Y = y_path;
  m.u_top = [c, y_path, int_y, u_top0](double t) {
    return u_top0 + c->f0_c * t + c->f0_y * int_y(t);
  };
  m.P = [c, y_path](double t) { return c->p_sum(y_path(t)); };
  m.Q = [m_P = m.P, m_u = m.u_top](double t) { return m_P(t) * m_u(t); };
  m.R = [c, y_path, m_P = m.P, m_u = m.u_top](double t) {
    double y = y_path(t);
    double u = m_u(t);
    double F = c->F_agg(y);
    return m_P(t) * u * u + c->G_agg_effective(y) - F * F;
  };
  m.Fprime = [fy](double) { return fy; };
  return m;
}

SimplifiedModel make_simplified_from_solution(const Model& model, const FirstOrderSolution& sol) {
  int hi = -1;
  for (std::size_t i = 0; i < sol.projections.size(); ++i) {
    if (sol.projections[i].id == "h") hi = static_cast<int>(i);
  }
  if (hi < 0) {
    throw Error(ErrorKind::invalid_argument,
                "simplified model: first-order solution must track the indicator under id 'h'");
  }
  const auto& proj = sol.projections[static_cast<std::size_t>(hi)];
  std::vector<double> h_cells = cell_integrals(model.indicator.h.f, sol.grid);
  std::vector<double> h_sq_cells = cell_integrals(
      [&](double x) { double v = model.indicator.h.f(x); return v * v; }, sol.grid);

  const std::size_t n = sol.t.size();
  std::vector<double> Pv(n), Qv(n), Rv(n), Fp(n), uv(n);
  for (std::size_t i = 0; i < n; ++i) {
    double b = sol.B[i], y = sol.Y[i];
    EventProbs pr = model.probs.eval(b, y);
    double p = pr.b - pr.a;
    double sig0 = pr.a + pr.b - p * p;
    double a = proj.grad_plus[i];
    double f_h = model.moments.f.empty() ? 0.0 : model.moments.f.pair(b, y, h_cells);
    double g_hh = model.moments.g.empty() ? 0.0 : model.moments.g.pair(b, y, h_sq_cells);
    Pv[i] = sig0;
    Qv[i] = sig0 * a - p * f_h;
    Rv[i] = sig0 * a * a - 2.0 * p * f_h * a + g_hh - f_h * f_h;
    Fp[i] = model.moments.f.empty()
                ? 0.0
                : [&] {
                    StepDensity fy = model.moments.f.partial_y(b, y);
                    double s = 0.0;
                    for (std::size_t c = 0; c < h_cells.size(); ++c) s += fy.values[c] * h_cells[c];
                    return s;
                  }();
    uv[i] = a;  // <grad+ u, h>: the top-of-book density for the indicator
  }
  SimplifiedModel m;
  m.T = sol.T;
  auto ts = std::make_shared<std::vector<double>>(sol.t);
  auto wrap = [ts](std::vector<double> v) {
    auto p = std::make_shared<std::vector<double>>(std::move(v));
    return [ts, p](double t) { return lerp_series(*ts, *p, t); };
  };
  m.Y = wrap(sol.Y);
  m.u_top = wrap(std::move(uv));
  m.P = wrap(std::move(Pv));
  m.Q = wrap(std::move(Qv));
  m.R = wrap(std::move(Rv));
  m.Fprime = wrap(std::move(Fp));
  return m;
}

SimplifiedCovariance simplified_covariance(const SimplifiedModel& model, double t, int quad_steps,
                                           CovarianceExponent mode) {
  if (!(t > 0.0)) throw Error(ErrorKind::invalid_argument, "covariance: t must be > 0");
  if (quad_steps < 2) throw Error(ErrorKind::invalid_argument, "covariance: quad_steps < 2");
  const int n = quad_steps;
  const double ds = t / n;

  // cumulative integral of F'(Y(s)) for the evolution-family weight
  std::vector<double> cumF(static_cast<std::size_t>(n) + 1, 0.0);
  for (int j = 1; j <= n; ++j) {
    double s0 = (j - 1) * ds, s1 = j * ds;
    cumF[static_cast<std::size_t>(j)] = cumF[static_cast<std::size_t>(j - 1)] +
                                        0.5 * ds * (model.Fprime(s0) + model.Fprime(s1));
  }
  const double cumF_t = cumF[static_cast<std::size_t>(n)];

  double var_b = 0.0, var_y = 0.0, cov = 0.0;
  for (int j = 0; j <= n; ++j) {
    double s = j * ds;
    double w_trap = (j == 0 || j == n) ? 0.5 : 1.0;
    double expo;
    if (mode == CovarianceExponent::integral) {
      expo = cumF_t - cumF[static_cast<std::size_t>(j)];
    } else {
      expo = model.Fprime(t - s);
    }
    var_b += w_trap * model.P(s);
    var_y += w_trap * std::exp(2.0 * expo) * model.R(s);
    cov += w_trap * std::exp(expo) * model.Q(s);
  }
  SimplifiedCovariance out;
  out.var_ZB = var_b * ds;
  out.var_ZY = var_y * ds;
  out.cov = cov * ds;
  double denom = out.var_ZB * out.var_ZY;
  if (!(denom > 0.0)) {
    throw Error(ErrorKind::numeric, "covariance: degenerate variance, rho undefined");
  }
  out.rho = out.cov / std::sqrt(denom);
  return out;
}

GaussianEnsemble simulate_simplified_ou(const SimplifiedModel& model, const OUSimConfig& cfg) {
  if (!(cfg.T > 0.0) || !(cfg.dt > 0.0)) {
    throw Error(ErrorKind::invalid_argument, "ou: T and dt must be > 0");
  }
  const int n_steps = static_cast<int>(std::lround(cfg.T / cfg.dt));
  const std::vector<int> ck = make_checkpoints(n_steps, cfg.n_checkpoints);
  const std::size_t n_ck = ck.size();

  // deterministic per-step coefficients with the PSD check up front
  std::vector<double> s11(static_cast<std::size_t>(n_steps)), s12(static_cast<std::size_t>(n_steps)),
      s22(static_cast<std::size_t>(n_steps)), drift(static_cast<std::size_t>(n_steps));
  for (int i = 0; i < n_steps; ++i) {
    double t = i * cfg.dt;
    double P = model.P(t);
    double Q = cfg.force_zero_Q ? 0.0 : model.Q(t);
    double R = model.R(t);
    double tol = 1e-12 * std::max({std::abs(P), std::abs(R), 1.0});
    if (P < -tol || R < -tol || (R > 0.0 && P - Q * Q / R < -tol) ||
        (R <= tol && std::abs(Q) > tol)) {
      throw Error(ErrorKind::numeric,
                  "ou: covariance not positive semidefinite at t = " + std::to_string(t));
    }
    P = std::max(P, 0.0);
    R = std::max(R, 0.0);
    if (R > 0.0) {
      s22[static_cast<std::size_t>(i)] = std::sqrt(R);
      s12[static_cast<std::size_t>(i)] = Q / std::sqrt(R);
      s11[static_cast<std::size_t>(i)] = std::sqrt(std::max(P - Q * Q / R, 0.0));
    } else {
      s22[static_cast<std::size_t>(i)] = 0.0;
      s12[static_cast<std::size_t>(i)] = 0.0;
      s11[static_cast<std::size_t>(i)] = std::sqrt(P);
    }
    drift[static_cast<std::size_t>(i)] = model.Fprime(t);
  }

  const double sqrt_dt = std::sqrt(cfg.dt);
  std::function<std::vector<double>(int)> one = [&](int ipath) {
    SplitMix64 rng = SplitMix64::stream(cfg.seed, static_cast<std::uint64_t>(ipath));
    std::vector<double> row(2 * n_ck);
    double zb = 0.0, zy = 0.0;
    std::size_t next_ck = 0;
    for (int i = 0; i < n_steps; ++i) {
      double x1 = rng.next_normal();
      double x2 = rng.next_normal();
      zy += cfg.dt * drift[static_cast<std::size_t>(i)] * zy;
      zb += sqrt_dt * (s11[static_cast<std::size_t>(i)] * x1 + s12[static_cast<std::size_t>(i)] * x2);
      zy += sqrt_dt * s22[static_cast<std::size_t>(i)] * x2;
      while (next_ck < n_ck && ck[next_ck] == i + 1) {
        row[next_ck] = zb;
        row[n_ck + next_ck] = zy;
        ++next_ck;
      }
    }
    return row;
  };
  std::vector<std::vector<double>> rows =
      parallel_rows<std::vector<double>>(cfg.n_paths, cfg.n_threads, one);

  GaussianEnsemble out;
  out.n_paths = cfg.n_paths;
  const std::size_t np = static_cast<std::size_t>(cfg.n_paths);
  std::vector<double> xb(np), xy(np);
  for (std::size_t c = 0; c < n_ck; ++c) {
    out.checkpoint_t.push_back(ck[c] * cfg.dt);
    for (std::size_t i = 0; i < np; ++i) {
      xb[i] = rows[i][c];
      xy[i] = rows[i][n_ck + c];
    }
    BivarStats s = bivar_stats(xb, xy);
    out.mean_ZB.push_back(s.mean_x);
    out.mean_ZY.push_back(s.mean_y);
    out.var_ZB.push_back(s.var_x);
    out.var_ZY.push_back(s.var_y);
    out.cov.push_back(s.cov);
    out.corr.push_back(s.corr);
    out.se_var_ZB.push_back(s.se_var_x);
    out.se_var_ZY.push_back(s.se_var_y);
    out.se_cov.push_back(s.se_cov);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Spectral basis and covariance assembly

SpectralBasis SpectralBasis::make(const TickGrid& grid, int n_modes) {
  if (n_modes < 1) throw Error(ErrorKind::invalid_argument, "basis: need at least one mode");
  // constant mode plus complete cos/sin pairs: translation stays an exact
  // rotation, so an even request is bumped by one
  if (n_modes % 2 == 0) ++n_modes;
  SpectralBasis b;
  b.grid = grid;
  b.n_modes = n_modes;
  b.mode_cells.reserve(static_cast<std::size_t>(n_modes));
  b.pair_freq.reserve(static_cast<std::size_t>(n_modes));
  for (int m = 0; m < n_modes; ++m) {
    int q = (m + 1) / 2;
    b.pair_freq.push_back(q);
    const double L = grid.half_width;
    std::function<double(double)> fn;
    if (m == 0) {
      double c = 1.0 / std::sqrt(2.0 * L);
      fn = [c](double) { return c; };
    } else if (m % 2 == 1) {
      double c = 1.0 / std::sqrt(L), w = q * kPi / L;
      fn = [c, w](double x) { return c * std::cos(w * x); };
    } else {
      double c = 1.0 / std::sqrt(L), w = q * kPi / L;
      fn = [c, w](double x) { return c * std::sin(w * x); };
    }
    b.mode_cells.push_back(cell_integrals(fn, grid));
  }
  return b;
}

double SpectralBasis::mode_value(int mode, double x) const {
  const double L = grid.half_width;
  if (mode == 0) return 1.0 / std::sqrt(2.0 * L);
  int q = pair_freq[static_cast<std::size_t>(mode)];
  double w = q * kPi / L;
  if (mode % 2 == 1) return std::cos(w * x) / std::sqrt(L);
  return std::sin(w * x) / std::sqrt(L);
}

SpectralCovarianceSample assemble_sigma(const Model& model, const FirstOrderSolution& sol,
                                        double t, const SpectralBasis& basis) {
  if (sol.snapshots.empty()) {
    throw Error(ErrorKind::invalid_argument,
                "sigma assembly: first-order solution has no density snapshots");
  }
  const int K = basis.n_modes;
  const TickGrid& grid = basis.grid;
  FirstOrderSample ref = evaluate(sol, t);
  const double b = ref.b, y = ref.y;
  EventProbs pr = model.probs.eval(b, y);
  const double p = pr.b - pr.a;
  const double sig0 = pr.a + pr.b - p * p;

  StepDensity du = finite_diff(ref.u, DiffSide::plus);
  Eigen::VectorXd a(K), f(K);
  StepDensity f_field = model.moments.f.empty() ? StepDensity(grid) : model.moments.f.eval(b, y);
  StepDensity g_field = model.moments.g.empty() ? StepDensity(grid) : model.moments.g.eval(b, y);
  for (int k = 0; k < K; ++k) {
    const auto& cells = basis.mode_cells[static_cast<std::size_t>(k)];
    double ak = 0.0, fk = 0.0;
    for (int c = 0; c < grid.n_cells; ++c) {
      ak += du.values[static_cast<std::size_t>(c)] * cells[static_cast<std::size_t>(c)];
      fk += f_field.values[static_cast<std::size_t>(c)] * cells[static_cast<std::size_t>(c)];
    }
    a(k) = ak;
    f(k) = fk;
  }

  // Gram of multiplication by g over the modes, cellwise 5-point quadrature.
  static constexpr double node[5] = {-0.9061798459386639928, -0.5384693101056830910, 0.0,
                                     0.5384693101056830910, 0.9061798459386639928};
  static constexpr double wq[5] = {0.2369268850561890875, 0.4786286704993664681,
                                   0.5688888888888888889, 0.4786286704993664681,
                                   0.2369268850561890875};
  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(K, K);
  std::vector<double> mode_at(static_cast<std::size_t>(K) * 5);
  const double hw = 0.5 * grid.delta;
  for (int c = 0; c < grid.n_cells; ++c) {
    double gv = g_field.values[static_cast<std::size_t>(c)];
    if (gv == 0.0) continue;
    double mid = grid.x_center(c);
    for (int k = 0; k < K; ++k)
      for (int i = 0; i < 5; ++i)
        mode_at[static_cast<std::size_t>(k) * 5 + i] = basis.mode_value(k, mid + hw * node[i]);
    for (int j = 0; j < K; ++j) {
      for (int k = j; k < K; ++k) {
        double s = 0.0;
        for (int i = 0; i < 5; ++i)
          s += wq[i] * mode_at[static_cast<std::size_t>(j) * 5 + i] *
               mode_at[static_cast<std::size_t>(k) * 5 + i];
        gram(j, k) += gv * s * hw;
      }
    }
  }
  for (int j = 0; j < K; ++j)
    for (int k = 0; k < j; ++k) gram(j, k) = gram(k, j);

  SpectralCovarianceSample out;
  out.t = t;
  out.sigma = Eigen::MatrixXd::Zero(K + 1, K + 1);
  out.sigma(0, 0) = sig0;
  for (int k = 0; k < K; ++k) {
    double q = sig0 * a(k) - p * f(k);
    out.sigma(0, k + 1) = q;
    out.sigma(k + 1, 0) = q;
  }
  for (int j = 0; j < K; ++j) {
    for (int k = 0; k < K; ++k) {
      out.sigma(j + 1, k + 1) = sig0 * a(j) * a(k) - p * f(j) * a(k) - p * a(j) * f(k) +
                                gram(j, k) - f(j) * f(k);
    }
  }
  out.sigma = 0.5 * (out.sigma + out.sigma.transpose()).eval();

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(out.sigma);
  const Eigen::VectorXd& lam = eig.eigenvalues();
  out.lambda_min = lam.minCoeff();
  out.norm = std::max(std::abs(lam.minCoeff()), std::abs(lam.maxCoeff()));
  out.trace = out.sigma.trace();
  Eigen::VectorXd lam_clip = lam;
  for (int i = 0; i < lam_clip.size(); ++i) {
    if (lam_clip(i) < 0.0) {
      out.clip_magnitude += -lam_clip(i);
      lam_clip(i) = 0.0;
    }
  }
  out.factor = eig.eigenvectors() * lam_clip.cwiseSqrt().asDiagonal();
  return out;
}

SpdeResult simulate_spde(const Model& model, const FirstOrderSolution& sol,
                         const SpdeSimConfig& cfg,
                         const std::vector<TrackedFunctional>& test_fns,
                         const Eigen::VectorXd* z0) {
  if (!(cfg.T > 0.0) || !(cfg.dt > 0.0)) {
    throw Error(ErrorKind::invalid_argument, "spde: T and dt must be > 0");
  }
  const int n_steps = static_cast<int>(std::lround(cfg.T / cfg.dt));
  SpectralBasis basis = SpectralBasis::make(model.grid, cfg.n_modes);
  const int K = basis.n_modes;
  const double L = model.grid.half_width;

  // Mode pairings with h and the output test functions.
  std::vector<double> h_k(static_cast<std::size_t>(K));
  for (int k = 0; k < K; ++k) {
    double s = 0.0;
    for (int c = 0; c < model.grid.n_cells; ++c) {
      s += gauss_legendre(
          [&](double x) { return basis.mode_value(k, x) * model.indicator.h.f(x); },
          model.grid.x_left(c), model.grid.x_right(c));
    }
    h_k[static_cast<std::size_t>(k)] = s;
  }
  std::vector<std::vector<double>> fn_k(test_fns.size(), std::vector<double>(static_cast<std::size_t>(K)));
  for (std::size_t f = 0; f < test_fns.size(); ++f) {
    for (int k = 0; k < K; ++k) {
      double s = 0.0;
      for (int c = 0; c < model.grid.n_cells; ++c) {
        s += gauss_legendre(
            [&](double x) { return basis.mode_value(k, x) * test_fns[f].phi.f(x); },
            model.grid.x_left(c), model.grid.x_right(c));
      }
      fn_k[f][static_cast<std::size_t>(k)] = s;
    }
  }

  // Per-step deterministic data: translation angle, drift ingredients, factor.
  struct StepData {
    double shift = 0.0;
    double p_b = 0.0, p_y = 0.0;
    Eigen::VectorXd d;   // <grad+ u, e_k>
    Eigen::VectorXd fb;  // <f_b, e_k>
    Eigen::VectorXd fy;  // <f_y, e_k>
    Eigen::MatrixXd factor;
  };
  std::vector<StepData> steps(static_cast<std::size_t>(n_steps));
  double total_clip = 0.0, min_ratio = 0.0;
  auto char_at = [&](double t) { return lerp_series(sol.t, sol.characteristic, t); };
  for (int i = 0; i < n_steps; ++i) {
    double t0 = i * cfg.dt, t1 = (i + 1) * cfg.dt;
    StepData& sd = steps[static_cast<std::size_t>(i)];
    sd.shift = char_at(t1) - char_at(t0);
    FirstOrderSample ref = evaluate(sol, t0);
    sd.p_b = model.probs.partial_b(ref.b, ref.y);
    sd.p_y = model.probs.partial_y(ref.b, ref.y);
    StepDensity du = finite_diff(ref.u, DiffSide::plus);
    StepDensity fb = model.moments.f.empty() ? StepDensity(model.grid)
                                             : model.moments.f.partial_b(ref.b, ref.y);
    StepDensity fy = model.moments.f.empty() ? StepDensity(model.grid)
                                             : model.moments.f.partial_y(ref.b, ref.y);
    sd.d.resize(K);
    sd.fb.resize(K);
    sd.fy.resize(K);
    for (int k = 0; k < K; ++k) {
      const auto& cells = basis.mode_cells[static_cast<std::size_t>(k)];
      double dk = 0.0, fbk = 0.0, fyk = 0.0;
      for (int c = 0; c < model.grid.n_cells; ++c) {
        dk += du.values[static_cast<std::size_t>(c)] * cells[static_cast<std::size_t>(c)];
        fbk += fb.values[static_cast<std::size_t>(c)] * cells[static_cast<std::size_t>(c)];
        fyk += fy.values[static_cast<std::size_t>(c)] * cells[static_cast<std::size_t>(c)];
      }
      sd.d(k) = dk;
      sd.fb(k) = fbk;
      sd.fy(k) = fyk;
    }
    if (cfg.noise_off) {
      sd.factor = Eigen::MatrixXd::Zero(K + 1, K + 1);
    } else {
      SpectralCovarianceSample cov = assemble_sigma(model, sol, t0, basis);
      if (cfg.force_zero_Q) {
        for (int k = 1; k <= K; ++k) {
          cov.sigma(0, k) = 0.0;
          cov.sigma(k, 0) = 0.0;
        }
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov.sigma);
        Eigen::VectorXd lam = eig.eigenvalues().cwiseMax(0.0);
        cov.factor = eig.eigenvectors() * lam.cwiseSqrt().asDiagonal();
      }
      sd.factor = cov.factor;
      total_clip += cov.clip_magnitude;
      if (cov.norm > 0.0) min_ratio = std::min(min_ratio, cov.lambda_min / cov.norm);
    }
  }

  const std::vector<int> ck = make_checkpoints(n_steps, cfg.n_checkpoints);
  const std::size_t n_ck = ck.size();
  const std::size_t F = test_fns.size();
  const double sqrt_dt = std::sqrt(cfg.dt);

  std::function<std::vector<double>(int)> one = [&](int ipath) {
    SplitMix64 rng = SplitMix64::stream(cfg.seed, static_cast<std::uint64_t>(ipath));
    Eigen::VectorXd z = z0 ? *z0 : Eigen::VectorXd::Zero(K + 1);
    Eigen::VectorXd xi(K + 1), fz(K + 1);
    std::vector<double> row((2 + F) * n_ck);
    std::size_t next_ck = 0;
    for (int i = 0; i < n_steps; ++i) {
      const StepData& sd = steps[static_cast<std::size_t>(i)];
      // exact translation: rotate each cos/sin pair by q*pi*shift/L
      for (int k = 1; k + 1 < basis.n_modes; k += 2) {
        double th = basis.pair_freq[static_cast<std::size_t>(k)] * kPi * sd.shift / L;
        double c = std::cos(th), s = std::sin(th);
        double zc = z(k + 1), zs = z(k + 2);
        z(k + 1) = c * zc + s * zs;
        z(k + 2) = -s * zc + c * zs;
      }
      if (!cfg.drift_off) {
        double zy = 0.0;
        for (int k = 0; k < K; ++k) zy += z(k + 1) * h_k[static_cast<std::size_t>(k)];
        double U = sd.p_b * z(0) + sd.p_y * zy;
        fz(0) = U;
        for (int k = 0; k < K; ++k) {
          fz(k + 1) = U * sd.d(k) + z(0) * sd.fb(k) + zy * sd.fy(k);
        }
        z += cfg.dt * fz;
      }
      if (!cfg.noise_off) {
        for (int k = 0; k <= K; ++k) xi(k) = rng.next_normal();
        z += sqrt_dt * (sd.factor * xi);
      }
      while (next_ck < n_ck && ck[next_ck] == i + 1) {
        row[next_ck] = z(0);
        double zy = 0.0;
        for (int k = 0; k < K; ++k) zy += z(k + 1) * h_k[static_cast<std::size_t>(k)];
        row[n_ck + next_ck] = zy;
        for (std::size_t f = 0; f < F; ++f) {
          double zf = 0.0;
          for (int k = 0; k < K; ++k) zf += z(k + 1) * fn_k[f][static_cast<std::size_t>(k)];
          row[(2 + f) * n_ck + next_ck] = zf;
        }
        ++next_ck;
      }
    }
    return row;
  };
  std::vector<std::vector<double>> rows =
      parallel_rows<std::vector<double>>(cfg.n_paths, cfg.n_threads, one);

  SpdeResult out;
  out.total_clip = total_clip;
  out.min_lambda_ratio = min_ratio;
  out.stats.n_paths = cfg.n_paths;
  const std::size_t np = static_cast<std::size_t>(cfg.n_paths);
  std::vector<double> xb(np), xy(np);
  out.mean_Zu.assign(F, {});
  out.var_Zu.assign(F, {});
  for (const auto& fn : test_fns) out.test_fn_ids.push_back(fn.id);
  for (std::size_t c = 0; c < n_ck; ++c) {
    out.stats.checkpoint_t.push_back(ck[c] * cfg.dt);
    for (std::size_t i = 0; i < np; ++i) {
      xb[i] = rows[i][c];
      xy[i] = rows[i][n_ck + c];
    }
    BivarStats s = bivar_stats(xb, xy);
    out.stats.mean_ZB.push_back(s.mean_x);
    out.stats.mean_ZY.push_back(s.mean_y);
    out.stats.var_ZB.push_back(s.var_x);
    out.stats.var_ZY.push_back(s.var_y);
    out.stats.cov.push_back(s.cov);
    out.stats.corr.push_back(s.corr);
    out.stats.se_var_ZB.push_back(s.se_var_x);
    out.stats.se_var_ZY.push_back(s.se_var_y);
    out.stats.se_cov.push_back(s.se_cov);
    for (std::size_t f = 0; f < F; ++f) {
      for (std::size_t i = 0; i < np; ++i) xb[i] = rows[i][(2 + f) * n_ck + c];
      MeanVar mv = pairwise_mean_var(xb);
      out.mean_Zu[f].push_back(mv.mean);
      out.var_Zu[f].push_back(mv.var);
    }
  }
  return out;
}

}  // namespace lobflux
