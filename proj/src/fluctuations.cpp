#include "lobflux/fluctuations.hpp"

#include <algorithm>
#include <cmath>

#include "lobflux/parallel.hpp"

namespace lobflux {

namespace {

void require_aligned(const LOBPath& path, const FirstOrderSolution& sol) {
  if (std::abs(path.config.delta - sol.dt) > 1e-12 * sol.dt) {
    throw Error(ErrorKind::invalid_argument, "fluctuations: path and first-order meshes differ");
  }
  if (sol.B.size() < path.B.size()) {
    throw Error(ErrorKind::invalid_argument, "fluctuations: first-order horizon shorter than the path");
  }
}

int find_series(const std::vector<ProjectionSeries>& v, const std::string& id) {
  for (std::size_t i = 0; i < v.size(); ++i)
    if (v[i].id == id) return static_cast<int>(i);
  return -1;
}

// Pairings of a moment field against phi needed by the compensators:
// <field(b,y), phi> and <field(b,y), phi*[phi]_n>/delta. On each cell,
// [phi]_n equals the constant Phi_a, so the second integrand reduces to
// field_a * Phi_a^2.
struct FieldPairing {
  bool present = false;
  bool separable = false;
  double prof_dot = 0.0;   // <profile, phi>
  double prof_quad = 0.0;  // sum_a profile_a * Phi_a^2 / delta
  const MomentField* field = nullptr;
  const std::vector<double>* phi_cells = nullptr;
  double delta = 0.0;

  double pair(double b, double y) const {
    if (!present) return 0.0;
    if (separable) return field->eval_scale(b, y) * prof_dot;
    StepDensity d = field->eval(b, y);
    double s = 0.0;
    for (std::size_t a = 0; a < d.values.size(); ++a) s += d.values[a] * (*phi_cells)[a];
    return s;
  }
  double quad(double b, double y) const {
    if (!present) return 0.0;
    if (separable) return field->eval_scale(b, y) * prof_quad;
    StepDensity d = field->eval(b, y);
    double s = 0.0;
    for (std::size_t a = 0; a < d.values.size(); ++a) {
      double c = (*phi_cells)[a];
      s += d.values[a] * c * c;
    }
    return s / delta;
  }
};

FieldPairing make_pairing(const MomentField& field, const std::vector<double>& phi_cells,
                          double delta) {
  FieldPairing fp;
  fp.field = &field;
  fp.phi_cells = &phi_cells;
  fp.delta = delta;
  if (field.empty()) return fp;
  fp.present = true;
  fp.separable = field.separable();
  if (fp.separable) {
    const auto& prof = field.profile.values;
    for (std::size_t a = 0; a < prof.size(); ++a) {
      double c = phi_cells[a];
      fp.prof_dot += prof[a] * c;
      fp.prof_quad += prof[a] * c * c;
    }
    fp.prof_quad /= delta;
  }
  return fp;
}

}  // namespace

FluctuationSeries compute_fluctuations(const LOBPath& path, const FirstOrderSolution& sol) {
  require_aligned(path, sol);
  const double delta = path.config.delta;
  const double inv_sqrt = 1.0 / std::sqrt(delta);
  const std::size_t n = path.B.size();

  FluctuationSeries out;
  out.delta = delta;
  out.normalization = std::sqrt(delta);
  out.t.resize(n);
  out.ZB.resize(n);
  out.ZY.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    out.t[k] = static_cast<double>(k) * delta;
    out.ZB[k] = (path.B[k] - sol.B[k]) * inv_sqrt;
    out.ZY[k] = (path.Y[k] - sol.Y[k]) * inv_sqrt;
  }
  for (const auto& proj : path.projections) {
    int si = find_series(sol.projections, proj.id);
    if (si < 0) {
      throw Error(ErrorKind::invalid_argument,
                  "fluctuations: first-order solution lacks projection '" + proj.id + "'");
    }
    const auto& ref = sol.projections[static_cast<std::size_t>(si)];
    std::vector<double> z(n);
    for (std::size_t k = 0; k < n; ++k) z[k] = (proj.u_phi[k] - ref.u_phi[k]) * inv_sqrt;
    out.ids.push_back(proj.id);
    out.Zu.push_back(std::move(z));
  }
  return out;
}

MartingaleDiagnostics martingale_diagnostics(const LOBPath& path, const FirstOrderSolution& sol,
                                             const Model& model,
                                             const std::vector<TrackedFunctional>& tracked) {
  require_aligned(path, sol);
  const double delta = path.config.delta;
  const double inv_sqrt = 1.0 / std::sqrt(delta);
  const std::size_t n = path.B.size();
  const std::size_t n_fn = tracked.size();

  MartingaleDiagnostics d;
  d.delta = delta;
  d.t.resize(n);
  d.MB.assign(n, 0.0);
  d.LB.assign(n, 0.0);
  d.Mu.assign(n_fn, std::vector<double>(n, 0.0));
  d.Lu.assign(n_fn, std::vector<double>(n, 0.0));
  d.N.assign(n_fn, std::vector<double>(n, 0.0));
  d.comp_R.assign(n_fn, std::vector<double>(n, 0.0));
  d.comp_Q.assign(n_fn, std::vector<double>(n, 0.0));

  struct FnCtx {
    const ProjectionSeries* micro;
    const ProjectionSeries* ref;
    FieldPairing f_pair;
    FieldPairing g_pair;
  };
  std::vector<FnCtx> ctx;
  ctx.reserve(n_fn);
  for (std::size_t i = 0; i < n_fn; ++i) {
    const auto& id = tracked[i].id;
    int pi = find_series(path.projections, id);
    int si = find_series(sol.projections, id);
    if (pi < 0 || si < 0) {
      throw Error(ErrorKind::invalid_argument,
                  "diagnostics: projection '" + id + "' missing from the path or the solution");
    }
    d.ids.push_back(id);
    ctx.push_back({&path.projections[static_cast<std::size_t>(pi)],
                   &sol.projections[static_cast<std::size_t>(si)],
                   make_pairing(model.moments.f, tracked[i].cells, delta),
                   make_pairing(model.moments.g, tracked[i].cells, delta)});
  }

  double comp_B = 0.0, comp_P = 0.0;
  std::vector<double> comp_U(n_fn, 0.0);

  for (std::size_t k = 0; k < n; ++k) d.t[k] = static_cast<double>(k) * delta;
  const double zb0 = (path.B[0] - sol.B[0]) * inv_sqrt;

  for (std::size_t k = 1; k < n; ++k) {
    const double b_prev = path.B[k - 1];
    const double y_prev = path.Y[k - 1];
    EventProbs pr = model.probs.eval(b_prev, y_prev);
    const double p_n = pr.b - pr.a;
    const double sig0 = pr.a + pr.b - p_n * p_n;

    // U^(n) integral with the solver's realized B increment.
    comp_B += (delta * p_n - (sol.B[k] - sol.B[k - 1])) * inv_sqrt;
    const double zb_k = (path.B[k] - sol.B[k]) * inv_sqrt;
    d.MB[k] = zb_k - zb0 - comp_B;
    comp_P += delta * sig0;
    d.LB[k] = d.MB[k] * d.MB[k] - comp_P;

    for (std::size_t i = 0; i < n_fn; ++i) {
      const auto& micro = *ctx[i].micro;
      const auto& ref = *ctx[i].ref;
      const double f_phi = ctx[i].f_pair.pair(b_prev, y_prev);

      // p^(n)<grad+ Z^u, phi> + V^(n)(phi), regrouped through the realized
      // density: delta*(p_B <grad+ u^(n), phi> - p_A <grad- u^(n), phi>
      // + <f^(n), phi>) minus the solver's u increment.
      double drift = delta * (pr.b * micro.grad_plus[k - 1] - pr.a * micro.grad_minus[k - 1] + f_phi) -
                     (ref.u_phi[k] - ref.u_phi[k - 1]);
      comp_U[i] += drift * inv_sqrt;
      const double zu_k = (micro.u_phi[k] - ref.u_phi[k]) * inv_sqrt;
      const double zu_0 = (micro.u_phi[0] - ref.u_phi[0]) * inv_sqrt;
      const double mu = zu_k - zu_0 - comp_U[i];
      d.Mu[i][k] = mu;

      const double a_ref = ref.grad_plus[k - 1];
      const double g_quad = ctx[i].g_pair.quad(b_prev, y_prev);
      const double R_n = sig0 * a_ref * a_ref - 2.0 * p_n * f_phi * a_ref + (g_quad - f_phi * f_phi);
      const double Q_n = sig0 * a_ref - p_n * f_phi;
      d.comp_R[i][k] = d.comp_R[i][k - 1] + delta * R_n;
      d.comp_Q[i][k] = d.comp_Q[i][k - 1] + delta * Q_n;
      d.Lu[i][k] = mu * mu - d.comp_R[i][k];
      d.N[i][k] = d.MB[k] * mu - d.comp_Q[i][k];
    }
  }
  return d;
}

bool MartingaleSuiteResult::all_pass() const {
  for (const auto& c : checks)
    if (!c.pass) return false;
  return true;
}

MartingaleSuiteResult run_martingale_suite(const SimConfig& sim, const Model& model,
                                           const InitialState& init,
                                           const std::vector<TrackedFunctional>& tracked,
                                           const FirstOrderSolution& sol,
                                           const MartingaleSuiteConfig& cfg) {
  const int t_n = sim.t_n();
  const std::vector<int> ks = make_checkpoints(t_n, cfg.n_checkpoints);
  const std::size_t n_ck = ks.size();
  const std::size_t F = tracked.size();
  // per checkpoint: MB, LB, comp_P, then per fn: Mu, Lu, N, comp_R, comp_Q,
  // then per fn: batched dMB*dMu and batched Q-compensator increments
  const std::size_t row_len = n_ck * (3 + F * 7);

  std::function<std::vector<double>(int)> one = [&](int ipath) {
    SimConfig c = sim;
    c.seed = SplitMix64::stream(cfg.base_seed, static_cast<std::uint64_t>(ipath)).state();
    LOBPath path = simulate_path(c, model, init, tracked);
    MartingaleDiagnostics d = martingale_diagnostics(path, sol, model, tracked);
    std::vector<double> row(row_len, 0.0);
    double comp_P_prev = 0.0;
    for (std::size_t cidx = 0; cidx < n_ck; ++cidx) {
      const std::size_t k = static_cast<std::size_t>(ks[cidx]);
      row[cidx] = d.MB[k];
      row[n_ck + cidx] = d.LB[k];
      double comp_P_k = d.MB[k] * d.MB[k] - d.LB[k];
      row[2 * n_ck + cidx] = comp_P_k;
      comp_P_prev = comp_P_k;
      for (std::size_t i = 0; i < F; ++i) {
        const std::size_t base = (3 + i * 7) * n_ck;
        row[base + cidx] = d.Mu[i][k];
        row[base + n_ck + cidx] = d.Lu[i][k];
        row[base + 2 * n_ck + cidx] = d.N[i][k];
        row[base + 3 * n_ck + cidx] = d.comp_R[i][k];
        row[base + 4 * n_ck + cidx] = d.comp_Q[i][k];
        // batched per-step orthogonality sums over (k_prev, k]
        std::size_t k_prev = cidx == 0 ? 0 : static_cast<std::size_t>(ks[cidx - 1]);
        double emp = 0.0;
        for (std::size_t j = k_prev + 1; j <= k; ++j) {
          emp += (d.MB[j] - d.MB[j - 1]) * (d.Mu[i][j] - d.Mu[i][j - 1]);
        }
        row[base + 5 * n_ck + cidx] = emp;
        row[base + 6 * n_ck + cidx] = d.comp_Q[i][k] - d.comp_Q[i][k_prev];
      }
    }
    (void)comp_P_prev;
    return row;
  };

  std::vector<std::vector<double>> rows =
      parallel_rows<std::vector<double>>(cfg.n_paths, cfg.n_threads, one);

  MartingaleSuiteResult res;
  res.n_paths = cfg.n_paths;
  res.checkpoint_k = ks;
  for (int k : ks) res.checkpoint_t.push_back(k * sim.delta);

  const double sqrt_delta = std::sqrt(sim.delta);
  std::vector<double> col(static_cast<std::size_t>(cfg.n_paths));
  auto col_stats = [&](std::size_t idx) {
    for (int i = 0; i < cfg.n_paths; ++i)
      col[static_cast<std::size_t>(i)] = rows[static_cast<std::size_t>(i)][idx];
    return pairwise_mean_var(col);
  };

  // comp scales for the remainder allowance
  std::vector<double> mean_comp_P(n_ck);
  for (std::size_t cidx = 0; cidx < n_ck; ++cidx) mean_comp_P[cidx] = col_stats(2 * n_ck + cidx).mean;

  auto check_series = [&](const std::string& name, std::size_t base,
                          const std::vector<double>& allowance) {
    SeriesCheck sc;
    sc.name = name;
    for (std::size_t cidx = 0; cidx < n_ck; ++cidx) {
      MeanVar mv = col_stats(base + cidx);
      double se = std::sqrt(std::max(mv.var, 0.0) / cfg.n_paths);
      double tol = 4.0 * se + (allowance.empty() ? 0.0 : allowance[cidx]);
      sc.mean.push_back(mv.mean);
      sc.stderr_.push_back(se);
      sc.tolerance.push_back(tol);
      double ratio = tol > 0.0 ? std::abs(mv.mean) / tol : (mv.mean == 0.0 ? 0.0 : 1e300);
      sc.worst_ratio = std::max(sc.worst_ratio, ratio);
      if (std::abs(mv.mean) > tol) sc.pass = false;
    }
    res.checks.push_back(std::move(sc));
  };

  check_series("M^B", 0, {});
  check_series("L^B", n_ck, {});
  for (std::size_t i = 0; i < F; ++i) {
    const std::size_t base = (3 + i * 7) * n_ck;
    std::vector<double> mean_comp_R(n_ck), mean_comp_Q(n_ck);
    for (std::size_t cidx = 0; cidx < n_ck; ++cidx) {
      mean_comp_R[cidx] = col_stats(base + 3 * n_ck + cidx).mean;
      mean_comp_Q[cidx] = col_stats(base + 4 * n_ck + cidx).mean;
    }
    check_series("M^u(" + tracked[i].id + ")", base, {});
    std::vector<double> allow_L(n_ck), allow_N(n_ck);
    for (std::size_t cidx = 0; cidx < n_ck; ++cidx) {
      allow_L[cidx] = cfg.remainder_allowance * sqrt_delta * std::abs(mean_comp_R[cidx]);
      allow_N[cidx] = cfg.remainder_allowance * sqrt_delta *
                      std::sqrt(std::max(mean_comp_P[cidx], 0.0) * std::max(mean_comp_R[cidx], 0.0));
    }
    check_series("L^u(" + tracked[i].id + ")", base + n_ck, allow_L);
    check_series("N(" + tracked[i].id + ")", base + 2 * n_ck, allow_N);

    // orthogonality: batched covariance of increments against Q^(n)
    res.ortho_ids.push_back(tracked[i].id);
    std::vector<double> emp(n_ck), mod(n_ck), se(n_ck);
    SeriesCheck sc;
    sc.name = "orthogonality(" + tracked[i].id + ")";
    for (std::size_t cidx = 0; cidx < n_ck; ++cidx) {
      MeanVar e = col_stats(base + 5 * n_ck + cidx);
      MeanVar m = col_stats(base + 6 * n_ck + cidx);
      emp[cidx] = e.mean;
      mod[cidx] = m.mean;
      se[cidx] = std::sqrt(std::max(e.var, 0.0) / cfg.n_paths);
      double gap = e.mean - m.mean;
      double tol = 4.0 * se[cidx] +
                   cfg.remainder_allowance * sqrt_delta * std::max(std::abs(m.mean), 1e-12);
      sc.mean.push_back(gap);
      sc.stderr_.push_back(se[cidx]);
      sc.tolerance.push_back(tol);
      sc.worst_ratio = std::max(sc.worst_ratio, tol > 0 ? std::abs(gap) / tol : 0.0);
      if (std::abs(gap) > tol) sc.pass = false;
    }
    res.ortho_emp.push_back(std::move(emp));
    res.ortho_model.push_back(std::move(mod));
    res.ortho_stderr.push_back(std::move(se));
    res.checks.push_back(std::move(sc));
  }
  return res;
}

FluctuationEnsemble fluctuation_ensemble(const SimConfig& sim, const Model& model,
                                         const InitialState& init, const FirstOrderSolution& sol,
                                         int n_paths, std::uint64_t base_seed, int n_threads,
                                         int n_checkpoints) {
  const int t_n = sim.t_n();
  const std::vector<int> ks = make_checkpoints(t_n, n_checkpoints);
  const std::size_t n_ck = ks.size();
  const double inv_sqrt = 1.0 / std::sqrt(sim.delta);

  std::function<std::vector<double>(int)> one = [&](int ipath) {
    SimConfig c = sim;
    c.seed = SplitMix64::stream(base_seed, static_cast<std::uint64_t>(ipath)).state();
    LOBPath p = simulate_path(c, model, init, {});
    std::vector<double> row(2 * n_ck);
    for (std::size_t cidx = 0; cidx < n_ck; ++cidx) {
      const std::size_t k = static_cast<std::size_t>(ks[cidx]);
      row[cidx] = (p.B[k] - sol.B[k]) * inv_sqrt;
      row[n_ck + cidx] = (p.Y[k] - sol.Y[k]) * inv_sqrt;
    }
    return row;
  };
  std::vector<std::vector<double>> rows =
      parallel_rows<std::vector<double>>(n_paths, n_threads, one);

  FluctuationEnsemble out;
  out.n_paths = n_paths;
  out.checkpoint_k = ks;
  for (int k : ks) out.checkpoint_t.push_back(k * sim.delta);

  const std::size_t np = static_cast<std::size_t>(n_paths);
  std::vector<double> xb(np), xy(np), tmp(np);
  for (std::size_t cidx = 0; cidx < n_ck; ++cidx) {
    for (std::size_t i = 0; i < np; ++i) {
      xb[i] = rows[i][cidx];
      xy[i] = rows[i][n_ck + cidx];
    }
    MeanVar mb = pairwise_mean_var(xb);
    MeanVar my = pairwise_mean_var(xy);
    double cov = pairwise_cov(xb, xy, mb.mean, my.mean);
    // MC standard errors from the fourth/mixed central moments
    for (std::size_t i = 0; i < np; ++i) {
      double db = xb[i] - mb.mean;
      tmp[i] = db * db * db * db;
    }
    double m4b = pairwise_sum(tmp) / static_cast<double>(np);
    for (std::size_t i = 0; i < np; ++i) {
      double dy = xy[i] - my.mean;
      tmp[i] = dy * dy * dy * dy;
    }
    double m4y = pairwise_sum(tmp) / static_cast<double>(np);
    for (std::size_t i = 0; i < np; ++i) {
      double db = xb[i] - mb.mean, dy = xy[i] - my.mean;
      tmp[i] = db * db * dy * dy;
    }
    double m22 = pairwise_sum(tmp) / static_cast<double>(np);

    out.mean_ZB.push_back(mb.mean);
    out.mean_ZY.push_back(my.mean);
    out.var_ZB.push_back(mb.var);
    out.var_ZY.push_back(my.var);
    out.cov.push_back(cov);
    out.se_var_ZB.push_back(std::sqrt(std::max(m4b - mb.var * mb.var, 0.0) / np));
    out.se_var_ZY.push_back(std::sqrt(std::max(m4y - my.var * my.var, 0.0) / np));
    out.se_cov.push_back(std::sqrt(std::max(m22 - cov * cov, 0.0) / np));
    double denom = std::sqrt(std::max(mb.var * my.var, 0.0));
    out.corr.push_back(denom > 0.0 ? cov / denom : 0.0);
  }
  return out;
}

double lln_sup_gap(const SimConfig& sim, const Model& model, const InitialState& init,
                   const FirstOrderSolution& sol, double zeta_b, const TrackedFunctional& zeta_u,
                   int n_paths, std::uint64_t base_seed, int n_threads) {
  std::vector<TrackedFunctional> tracked{zeta_u};
  std::function<double(int)> one = [&](int ipath) {
    SimConfig c = sim;
    c.seed = SplitMix64::stream(base_seed, static_cast<std::uint64_t>(ipath)).state();
    LOBPath p = simulate_path(c, model, init, tracked);
    int si = find_series(sol.projections, zeta_u.id);
    if (si < 0) throw Error(ErrorKind::invalid_argument, "lln: solution lacks zeta projection");
    const auto& ref = sol.projections[static_cast<std::size_t>(si)];
    double sup = 0.0;
    for (std::size_t k = 0; k < p.B.size(); ++k) {
      double gap = zeta_b * (p.B[k] - sol.B[k]) + (p.projections[0].u_phi[k] - ref.u_phi[k]);
      sup = std::max(sup, std::abs(gap));
    }
    return sup;
  };
  std::vector<double> sups = parallel_rows<double>(n_paths, n_threads, one);
  return pairwise_sum(sups) / static_cast<double>(n_paths);
}

}  // namespace lobflux
