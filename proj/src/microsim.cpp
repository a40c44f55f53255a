#include "lobflux/microsim.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "json.hpp"
#include "lobflux/parallel.hpp"

namespace lobflux {

TrackedFunctional TrackedFunctional::make(const std::string& id, TestFunction phi,
                                          const TickGrid& grid) {
  TrackedFunctional t;
  t.id = id;
  t.cells = cell_integrals(phi.f, grid);
  t.phi = std::move(phi);
  return t;
}

namespace {

// Simulation engine in absolute coordinates: the standing-volume array v is
// indexed by absolute cell, price moves only slide the relative window, so
// every event costs O(1) plus O(support) refreshes on the rare active events.
class Engine {
 public:
  Engine(const SimConfig& cfg, const Model& model, const InitialState& init,
         const std::vector<TrackedFunctional>& tracked)
      : cfg_(cfg), model_(model), grid_(model.grid), tracked_(tracked) {
    if (!(cfg.delta > 0.0) || !(cfg.horizon_T > 0.0)) {
      throw Error(ErrorKind::invalid_argument, "sim: delta and horizon_T must be > 0");
    }
    if (std::abs(grid_.delta - cfg.delta) > 1e-12 * cfg.delta) {
      throw Error(ErrorKind::invalid_argument, "sim: config delta must match the model grid delta");
    }
    if (init.u0.grid.n_cells != grid_.n_cells) {
      throw Error(ErrorKind::invalid_argument, "sim: initial density grid mismatch");
    }
    t_n_ = cfg.t_n();
    n_ = grid_.n_cells;
    n_half_ = n_ / 2;
    origin_ = t_n_ + 1;
    v_.assign(static_cast<std::size_t>(n_ + 2 * t_n_ + 2), 0.0);
    for (int a = 0; a < n_; ++a) v_[static_cast<std::size_t>(a + origin_)] = init.u0.values[a];
    b_ = init.b0;
    b0_ = init.b0;
    shift_ = 0;

    // Volume-indicator bookkeeping.
    switch (model_.indicator.kind) {
      case VolumeIndicator::Kind::left_indicator:
        y_window_ticks_ = n_half_;
        break;
      case VolumeIndicator::Kind::window_indicator: {
        double w = model_.indicator.window / grid_.delta;
        y_window_ticks_ = static_cast<int>(std::lround(w));
        if (std::abs(w - y_window_ticks_) > 1e-9 || y_window_ticks_ < 1 ||
            y_window_ticks_ > n_half_) {
          throw Error(ErrorKind::invalid_argument,
                      "sim: indicator window must be a whole number of ticks within the grid");
        }
        break;
      }
      case VolumeIndicator::Kind::smooth:
        h_cells_ = cell_integrals(model_.indicator.h.f, grid_);
        break;
    }
    y_ = recompute_y();

    l2_sq_ = 0.0;
    for (int a = 0; a < n_; ++a) l2_sq_ += init.u0.values[a] * init.u0.values[a];
    l2_sq_ *= grid_.delta;
    max_l2_sq_ = l2_sq_;

    // Separable fast path: fixed cell weights proportional to the g profile.
    if (!model_.moments.f.empty() && model_.moments.f.separable() &&
        model_.moments.g.separable()) {
      separable_ = true;
      const auto& gp = model_.moments.g.profile.values;
      double gm = 0.0;
      for (double gv : gp) {
        if (gv < 0.0) throw Error(ErrorKind::infeasible, "sim: negative g profile");
        gm += gv * grid_.delta;
      }
      if (gm > 0.0) {
        sep_cum_.reserve(gp.size());
        double cum = 0.0;
        for (int a = 0; a < n_; ++a) {
          if (gp[static_cast<std::size_t>(a)] == 0.0) continue;
          cum += gp[static_cast<std::size_t>(a)] * grid_.delta / gm;
          sep_cells_.push_back(a);
          sep_cum_.push_back(cum);
        }
        if (!sep_cum_.empty()) sep_cum_.back() = 1.0;
        sep_g_mass_ = gm;
      }
    }

    // Projection trackers.
    proj_.resize(tracked_.size());
    for (std::size_t i = 0; i < tracked_.size(); ++i) {
      auto& p = proj_[i];
      const auto& cells = tracked_[i].cells;
      int lo = -1, hi = -1;
      for (int a = 0; a < n_; ++a) {
        if (cells[static_cast<std::size_t>(a)] != 0.0) {
          if (lo < 0) lo = a;
          hi = a;
        }
      }
      p.lo = lo;
      p.hi = hi;
      for (int m = -1; m <= 1; ++m) p.d[m + 1] = fresh_dot(cells, m, lo, hi);
    }
  }

  LOBPath run() {
    LOBPath path;
    path.config = cfg_;
    path.B.reserve(static_cast<std::size_t>(t_n_) + 1);
    path.Y.reserve(static_cast<std::size_t>(t_n_) + 1);
    path.events.reserve(static_cast<std::size_t>(t_n_));
    path.projections.resize(tracked_.size());
    for (std::size_t i = 0; i < tracked_.size(); ++i) {
      path.projections[i].id = tracked_[i].id;
      path.projections[i].u_phi.reserve(static_cast<std::size_t>(t_n_) + 1);
      path.projections[i].grad_plus.reserve(static_cast<std::size_t>(t_n_) + 1);
      path.projections[i].grad_minus.reserve(static_cast<std::size_t>(t_n_) + 1);
    }

    SplitMix64 rng(cfg_.seed);
    record_state(path, 0);
    for (int k = 1; k <= t_n_; ++k) {
      path.events.push_back(advance(rng));
      record_state(path, k);
      if (cfg_.record_stride > 0 && (k % cfg_.record_stride == 0 || k == t_n_)) {
        double y_fresh = recompute_y();
        path.max_y_drift = std::max(path.max_y_drift,
                                    std::abs(y_fresh - y_) / std::max(1.0, std::abs(y_fresh)));
        y_ = y_fresh;
        path.Y.back() = y_;
        refresh_projections();
        path.snapshots.emplace(k, relative_density());
      }
    }
    path.dropped_mass = dropped_;
    path.max_l2_sq = max_l2_sq_;
    path.final_l2_sq = l2_sq_;
    if (cfg_.record_stride > 0 && !path.snapshots.count(0)) {
      // keep the initial state retrievable alongside the strided snapshots
      StepDensity u0(grid_);
      path.snapshots.emplace(0, u0);
      auto it = path.snapshots.find(0);
      it->second = initial_u_;
    }
    return path;
  }

  // Exposed for the single-step contract.
  EventRecord advance(SplitMix64& rng) {
    EventProbs pr = model_.probs.eval(b_, y_);
    double u = rng.next_double();
    EventRecord ev;
    if (u < pr.a) {
      do_shift(EventKind::A);
      ev.kind = EventKind::A;
    } else if (u < pr.a + pr.b) {
      do_shift(EventKind::B);
      ev.kind = EventKind::B;
    } else {
      ev = do_placement(pr, rng);
    }
    return ev;
  }

  double b() const { return b_; }
  double y() const { return y_; }
  StepDensity relative_density() const {
    StepDensity d(grid_);
    for (int a = 0; a < n_; ++a) d.values[a] = v_[static_cast<std::size_t>(a + shift_ + origin_)];
    return d;
  }
  void stash_initial(const StepDensity& u0) { initial_u_ = u0; }

 private:
  struct ProjState {
    // d[m+1] = <u, phi(. + m*delta)> for m in {-1, 0, 1}
    double d[3] = {0.0, 0.0, 0.0};
    int lo = -1, hi = -1;
  };

  double fresh_dot(const std::vector<double>& cells, int m, int lo, int hi) const {
    if (lo < 0) return 0.0;
    // sum_a u_rel[a] * cells[a + m]
    double s = 0.0;
    int a_lo = std::max(0, lo - 1), a_hi = std::min(n_ - 1, hi + 1);
    for (int a = a_lo; a <= a_hi; ++a) {
      int idx = a + m;
      if (idx < lo || idx > hi) continue;
      s += v_[static_cast<std::size_t>(a + shift_ + origin_)] * cells[static_cast<std::size_t>(idx)];
    }
    return s;
  }

  void refresh_projections() {
    for (std::size_t i = 0; i < tracked_.size(); ++i) {
      for (int m = -1; m <= 1; ++m) {
        proj_[i].d[m + 1] = fresh_dot(tracked_[i].cells, m, proj_[i].lo, proj_[i].hi);
      }
    }
  }

  int y_lo_abs() const { return shift_ + origin_ + n_half_ - y_window_ticks_; }
  int y_hi_abs() const { return shift_ + origin_ + n_half_ - 1; }

  double recompute_y() const {
    double s = 0.0;
    if (model_.indicator.kind == VolumeIndicator::Kind::smooth) {
      for (int a = 0; a < n_; ++a) {
        double hv = h_cells_[static_cast<std::size_t>(a)];
        if (hv != 0.0) s += v_[static_cast<std::size_t>(a + shift_ + origin_)] * hv;
      }
      return s;
    }
    for (int m = y_lo_abs(); m <= y_hi_abs(); ++m) s += v_[static_cast<std::size_t>(m)];
    return s * grid_.delta;
  }

  void do_shift(EventKind kind) {
    const bool down = (kind == EventKind::A);  // price down: relative graph moves right
    // Exit cell leaves the [-L, L] window and its content is dropped.
    int exit_abs = down ? (shift_ + origin_ + n_ - 1) : (shift_ + origin_);
    double exit_v = v_[static_cast<std::size_t>(exit_abs)];

    if (model_.indicator.kind == VolumeIndicator::Kind::smooth) {
      // window moved: re-pair against the h cell integrals afterwards
      shift_ += down ? -1 : +1;
      b_ += down ? -grid_.delta : grid_.delta;
      drop_cell(exit_abs, exit_v);
      y_ = recompute_y();
    } else {
      int old_lo = y_lo_abs(), old_hi = y_hi_abs();
      if (down) {
        // new window = [old_lo - 1, old_hi - 1]
        y_ += grid_.delta * (v_[static_cast<std::size_t>(old_lo - 1)] -
                             v_[static_cast<std::size_t>(old_hi)]);
        shift_ -= 1;
        b_ -= grid_.delta;
      } else {
        y_ += grid_.delta * (v_[static_cast<std::size_t>(old_hi + 1)] -
                             v_[static_cast<std::size_t>(old_lo)]);
        shift_ += 1;
        b_ += grid_.delta;
      }
      drop_cell(exit_abs, exit_v);
    }

    // Projection window re-index: one fresh dot per tracked functional.
    for (std::size_t i = 0; i < tracked_.size(); ++i) {
      auto& p = proj_[i];
      if (down) {
        // u' = T_- u: <u', phi_m> = <u, phi_{m+1}>
        p.d[0] = p.d[1];
        p.d[1] = p.d[2];
        p.d[2] = fresh_dot(tracked_[i].cells, +1, p.lo, p.hi);
      } else {
        p.d[2] = p.d[1];
        p.d[1] = p.d[0];
        p.d[0] = fresh_dot(tracked_[i].cells, -1, p.lo, p.hi);
      }
    }
  }

  void drop_cell(int abs_idx, double value) {
    if (value != 0.0) {
      dropped_ += std::abs(value) * grid_.delta;
      l2_sq_ -= value * value * grid_.delta;
      v_[static_cast<std::size_t>(abs_idx)] = 0.0;
    }
  }

  EventRecord do_placement(const EventProbs& pr, SplitMix64& rng) {
    EventRecord ev;
    ev.kind = EventKind::C;
    int cell = -1;
    double mu = 0.0, s2 = 0.0;
    if (separable_) {
      if (sep_cells_.empty()) return ev;  // g = 0 everywhere: no-op
      double sg = model_.moments.g.eval_scale(b_, y_);
      double sf = model_.moments.f.eval_scale(b_, y_);
      if (sg == 0.0) {
        if (sf != 0.0) {
          throw Error(ErrorKind::infeasible, "sim: f nonzero while g vanishes at current state");
        }
        return ev;
      }
      if (sg < 0.0) throw Error(ErrorKind::infeasible, "sim: negative g scale");
      if (pr.c <= 0.0) throw Error(ErrorKind::infeasible, "sim: p_C = 0 with nonzero placements");
      double u = rng.next_double();
      std::size_t idx = static_cast<std::size_t>(
          std::lower_bound(sep_cum_.begin(), sep_cum_.end(), u) - sep_cum_.begin());
      if (idx >= sep_cells_.size()) idx = sep_cells_.size() - 1;
      cell = sep_cells_[idx];
      const double gp = model_.moments.g.profile.values[static_cast<std::size_t>(cell)];
      const double fp = model_.moments.f.profile.values[static_cast<std::size_t>(cell)];
      const double w = gp * grid_.delta / sep_g_mass_;
      mu = grid_.delta * sf * fp / (pr.c * w);
      s2 = grid_.delta * sg * gp / (pr.c * w);
    } else if (!model_.moments.f.empty() || !model_.moments.g.empty()) {
      EventDistribution dist =
          sampler_ingredients(model_.probs, model_.moments, b_, y_, grid_.delta, model_.omega_bound);
      if (dist.noop_c || dist.laws.empty()) return ev;
      double u = rng.next_double();
      std::size_t idx = static_cast<std::size_t>(
          std::lower_bound(dist.cum_weight.begin(), dist.cum_weight.end(), u) -
          dist.cum_weight.begin());
      if (idx >= dist.laws.size()) idx = dist.laws.size() - 1;
      const CellLaw& law = dist.laws[idx];
      ev.cell = law.cell;
      ev.omega = (rng.next_double() < law.q_hi) ? law.hi : law.lo;
      apply_placement(ev.cell, ev.omega);
      return ev;
    } else {
      return ev;  // no moment fields configured: C is a no-op
    }

    CellLaw law;
    law.cell = cell;
    law.mu = mu;
    law.s = s2;
    // two-point law via the shared construction
    {
      double var = s2 - mu * mu;
      if (var < -1e-12 * std::max(1.0, s2)) {
        throw Error(ErrorKind::infeasible,
                    "sim: moment infeasibility at cell " + std::to_string(cell));
      }
      if (var <= 1e-12 * std::max(1.0, s2)) var = 0.0;
      double sd = std::sqrt(var);
      if (sd == 0.0) {
        law.lo = law.hi = mu;
        law.q_hi = 1.0;
      } else {
        double bound = model_.omega_bound;
        double r_max = (bound + mu) / sd;
        double r_min = (bound > mu) ? sd / (bound - mu) : 1e300;
        if (!(r_min <= r_max) || r_max <= 0.0) {
          throw Error(ErrorKind::infeasible,
                      "sim: |omega| <= M unattainable at cell " + std::to_string(cell));
        }
        double r = std::clamp(1.0, r_min, r_max);
        law.lo = mu - sd * r;
        law.hi = mu + sd / r;
        law.q_hi = r * r / (1.0 + r * r);
      }
    }
    ev.cell = cell;
    ev.omega = (rng.next_double() < law.q_hi) ? law.hi : law.lo;
    apply_placement(ev.cell, ev.omega);
    return ev;
  }

  void apply_placement(int rel_cell, double omega) {
    if (omega == 0.0) return;
    if (rel_cell < 0 || rel_cell >= n_) {
      throw Error(ErrorKind::invalid_argument, "sim: placement cell outside [-L, L]");
    }
    std::size_t m = static_cast<std::size_t>(rel_cell + shift_ + origin_);
    double old = v_[m];
    v_[m] = old + omega;  // density increment omega, mass increment delta*omega
    l2_sq_ += grid_.delta * (2.0 * old * omega + omega * omega);
    max_l2_sq_ = std::max(max_l2_sq_, l2_sq_);

    if (model_.indicator.kind == VolumeIndicator::Kind::smooth) {
      double hv = h_cells_[static_cast<std::size_t>(rel_cell)];
      if (hv != 0.0) y_ += omega * hv;
    } else {
      int abs_idx = rel_cell + shift_ + origin_;
      if (abs_idx >= y_lo_abs() && abs_idx <= y_hi_abs()) y_ += grid_.delta * omega;
    }
    for (std::size_t i = 0; i < tracked_.size(); ++i) {
      const auto& cells = tracked_[i].cells;
      for (int m2 = -1; m2 <= 1; ++m2) {
        int idx = rel_cell + m2;
        if (idx >= 0 && idx < n_) {
          proj_[i].d[m2 + 1] += omega * cells[static_cast<std::size_t>(idx)];
        }
      }
    }
  }

  void record_state(LOBPath& path, int) {
    path.B.push_back(b_);
    path.Y.push_back(y_);
    max_l2_sq_ = std::max(max_l2_sq_, l2_sq_);
    const double inv_delta = 1.0 / grid_.delta;
    for (std::size_t i = 0; i < tracked_.size(); ++i) {
      const auto& d = proj_[i].d;
      path.projections[i].u_phi.push_back(d[1]);
      path.projections[i].grad_plus.push_back((d[0] - d[1]) * inv_delta);
      path.projections[i].grad_minus.push_back((d[1] - d[2]) * inv_delta);
    }
  }

  SimConfig cfg_;
  const Model& model_;
  TickGrid grid_;
  const std::vector<TrackedFunctional>& tracked_;
  int t_n_ = 0, n_ = 0, n_half_ = 0, origin_ = 0;
  std::vector<double> v_;
  double b_ = 0.0, b0_ = 0.0, y_ = 0.0;
  int shift_ = 0;
  double dropped_ = 0.0;
  double l2_sq_ = 0.0, max_l2_sq_ = 0.0;
  int y_window_ticks_ = 0;
  std::vector<double> h_cells_;
  bool separable_ = false;
  std::vector<int> sep_cells_;
  std::vector<double> sep_cum_;
  double sep_g_mass_ = 0.0;
  std::vector<ProjState> proj_;
  StepDensity initial_u_;
};

}  // namespace

StepResult step(double b, const StepDensity& u, const Model& model, double delta,
                SplitMix64& rng) {
  SimConfig cfg;
  cfg.delta = delta;
  cfg.horizon_T = delta;  // single event
  cfg.seed = 0;
  Engine eng(cfg, model, {b, u}, {});
  StepResult res;
  res.event = eng.advance(rng);
  res.b = eng.b();
  res.y = eng.y();
  res.u = eng.relative_density();
  return res;
}

LOBPath simulate_path(const SimConfig& config, const Model& model, const InitialState& init,
                      const std::vector<TrackedFunctional>& tracked) {
  Engine eng(config, model, init, tracked);
  eng.stash_initial(init.u0);
  return eng.run();
}

std::vector<int> make_checkpoints(int t_n, int n_checkpoints) {
  std::vector<int> ks;
  int m = std::max(1, std::min(n_checkpoints, t_n));
  for (int i = 1; i <= m; ++i) {
    int k = static_cast<int>(std::lround(static_cast<double>(i) * t_n / m));
    if (ks.empty() || k > ks.back()) ks.push_back(k);
  }
  if (ks.empty() || ks.back() != t_n) ks.push_back(t_n);
  return ks;
}

EnsembleSummary simulate_ensemble(const SimConfig& config, const Model& model,
                                  const InitialState& init, const EnsembleConfig& ens,
                                  const std::vector<TrackedFunctional>& tracked) {
  if (ens.n_paths < 1) throw Error(ErrorKind::invalid_argument, "ensemble: n_paths must be >= 1");
  const int t_n = config.t_n();
  const std::vector<int> ks = make_checkpoints(t_n, ens.n_checkpoints);
  const std::size_t n_ck = ks.size();
  const std::size_t n_fn = tracked.size();
  const std::size_t row_len = n_ck * (2 + n_fn) + 2;  // B, Y, functionals + dropped, max_l2

  struct Row {
    std::vector<double> data;
  };
  std::function<Row(int)> run_one = [&](int i) {
    SimConfig cfg = config;
    cfg.seed = SplitMix64::stream(ens.base_seed, static_cast<std::uint64_t>(i)).state();
    LOBPath p = simulate_path(cfg, model, init, tracked);
    Row row;
    row.data.resize(row_len);
    for (std::size_t c = 0; c < n_ck; ++c) {
      int k = ks[c];
      row.data[c] = p.B[static_cast<std::size_t>(k)];
      row.data[n_ck + c] = p.Y[static_cast<std::size_t>(k)];
      for (std::size_t f = 0; f < n_fn; ++f) {
        row.data[(2 + f) * n_ck + c] = p.projections[f].u_phi[static_cast<std::size_t>(k)];
      }
    }
    row.data[row_len - 2] = p.dropped_mass;
    row.data[row_len - 1] = p.max_l2_sq;
    return row;
  };

  std::vector<Row> rows = parallel_rows<Row>(ens.n_paths, ens.n_threads, run_one);

  EnsembleSummary out;
  out.n_paths = ens.n_paths;
  out.checkpoint_k = ks;
  for (int k : ks) out.checkpoint_t.push_back(k * config.delta);
  for (const auto& t : tracked) out.functional_ids.push_back(t.id);
  out.mean_u_phi.resize(n_fn);
  out.var_u_phi.resize(n_fn);

  std::vector<double> col(static_cast<std::size_t>(ens.n_paths));
  auto column = [&](std::size_t idx) -> const std::vector<double>& {
    for (int i = 0; i < ens.n_paths; ++i) col[static_cast<std::size_t>(i)] = rows[static_cast<std::size_t>(i)].data[idx];
    return col;
  };

  std::vector<double> col_b(static_cast<std::size_t>(ens.n_paths)),
      col_y(static_cast<std::size_t>(ens.n_paths));
  for (std::size_t c = 0; c < n_ck; ++c) {
    for (int i = 0; i < ens.n_paths; ++i) {
      col_b[static_cast<std::size_t>(i)] = rows[static_cast<std::size_t>(i)].data[c];
      col_y[static_cast<std::size_t>(i)] = rows[static_cast<std::size_t>(i)].data[n_ck + c];
    }
    MeanVar mb = pairwise_mean_var(col_b);
    MeanVar my = pairwise_mean_var(col_y);
    out.mean_B.push_back(mb.mean);
    out.var_B.push_back(mb.var);
    out.mean_Y.push_back(my.mean);
    out.var_Y.push_back(my.var);
    out.cov_BY.push_back(pairwise_cov(col_b, col_y, mb.mean, my.mean));
    for (std::size_t f = 0; f < n_fn; ++f) {
      MeanVar mf = pairwise_mean_var(column((2 + f) * n_ck + c));
      out.mean_u_phi[f].push_back(mf.mean);
      out.var_u_phi[f].push_back(mf.var);
    }
  }
  out.total_dropped_mass = pairwise_sum(column(row_len - 2));
  double ml = 0.0;
  for (int i = 0; i < ens.n_paths; ++i) ml = std::max(ml, rows[static_cast<std::size_t>(i)].data[row_len - 1]);
  out.max_l2_sq = ml;
  return out;
}

std::string EnsembleSummary::to_json() const {
  nlohmann::json j;
  j["n_paths"] = n_paths;
  j["checkpoint_k"] = checkpoint_k;
  j["checkpoint_t"] = checkpoint_t;
  j["mean_B"] = mean_B;
  j["var_B"] = var_B;
  j["mean_Y"] = mean_Y;
  j["var_Y"] = var_Y;
  j["cov_BY"] = cov_BY;
  j["functional_ids"] = functional_ids;
  j["mean_u_phi"] = mean_u_phi;
  j["var_u_phi"] = var_u_phi;
  j["total_dropped_mass"] = total_dropped_mass;
  j["max_l2_sq"] = max_l2_sq;
  return j.dump(2);
}

}  // namespace lobflux
