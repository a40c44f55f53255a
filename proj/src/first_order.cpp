#include "lobflux/first_order.hpp"

#include <algorithm>
#include <cmath>

namespace lobflux {

namespace {

// Piecewise-linear interpolation of cell values read as point samples at cell
// centers; clamped to zero outside the sampled range so back-tracing never
// reads beyond [-L, L]. Linear interpolation between neighbours introduces no
// new extrema, which keeps the transported profile monotone.
double interp_at(const std::vector<double>& vals, const TickGrid& g, double x) {
  const int n = static_cast<int>(vals.size());
  double s = (x - g.x_center(0)) / g.delta;
  if (s <= -1.0 || s >= n) return 0.0;
  if (s < 0.0) return vals[0] * (1.0 + s);  // taper to zero toward the edge
  int a = static_cast<int>(s);
  if (a >= n - 1) return vals[static_cast<std::size_t>(n - 1)] * (1.0 - (s - (n - 1)));
  double w = s - a;
  return vals[static_cast<std::size_t>(a)] * (1.0 - w) + vals[static_cast<std::size_t>(a + 1)] * w;
}

double dot(const std::vector<double>& u, const std::vector<double>& cells, int offset = 0) {
  const int n = static_cast<int>(u.size());
  double s = 0.0;
  for (int a = 0; a < n; ++a) {
    int idx = a + offset;
    if (idx < 0 || idx >= n) continue;
    s += u[static_cast<std::size_t>(a)] * cells[static_cast<std::size_t>(idx)];
  }
  return s;
}

}  // namespace

int FirstOrderSolution::step_of(double time) const {
  if (time < -1e-12 || time > T + 1e-12) {
    throw Error(ErrorKind::invalid_argument, "first-order: time outside [0, T]");
  }
  int i = static_cast<int>(std::floor(time / dt + 1e-9));
  return std::clamp(i, 0, n_steps);
}

FirstOrderSolution solve_first_order(const Model& model, const InitialState& init,
                                     double dt, double T,
                                     const std::vector<TrackedFunctional>& tracked,
                                     int snapshot_stride, int fixed_point_iters) {
  if (!(dt > 0.0) || !(T > 0.0)) {
    throw Error(ErrorKind::invalid_argument, "first-order: dt and T must be > 0");
  }
  const TickGrid& grid = model.grid;
  if (init.u0.grid.n_cells != grid.n_cells) {
    throw Error(ErrorKind::invalid_argument, "first-order: initial density grid mismatch");
  }
  FirstOrderSolution sol;
  sol.grid = grid;
  sol.dt = dt;
  sol.n_steps = static_cast<int>(std::lround(T / dt));
  sol.T = sol.n_steps * dt;
  sol.snapshot_stride = snapshot_stride;
  if (dt > grid.delta * (1.0 + 1e-9)) {
    sol.warnings.push_back("dt exceeds the grid spacing; back-trace interpolation accuracy degrades");
  }

  std::vector<double> u = init.u0.values;
  std::vector<double> h_cells = cell_integrals(model.indicator.h.f, grid);
  const double delta = grid.delta;

  sol.projections.resize(tracked.size());
  for (std::size_t i = 0; i < tracked.size(); ++i) sol.projections[i].id = tracked[i].id;

  auto y_of = [&](const std::vector<double>& uu) { return dot(uu, h_cells); };
  // <h, du/dx> via the forward difference of the step values.
  auto y_slope = [&](const std::vector<double>& uu) {
    double s = 0.0;
    const int n = static_cast<int>(uu.size());
    for (int a = 0; a < n; ++a) {
      double up = a + 1 < n ? uu[static_cast<std::size_t>(a + 1)] : 0.0;
      s += (up - uu[static_cast<std::size_t>(a)]) / delta * h_cells[static_cast<std::size_t>(a)];
    }
    return s;
  };

  double b = init.b0;
  double c = 0.0;
  double y = y_of(u);

  auto record = [&](int i) {
    sol.t.push_back(i * dt);
    sol.B.push_back(b);
    sol.Y.push_back(y);
    sol.characteristic.push_back(c);
    double l2 = 0.0;
    for (double v : u) l2 += v * v;
    sol.sup_l2 = std::max(sol.sup_l2, std::sqrt(l2 * delta));
    for (std::size_t f = 0; f < tracked.size(); ++f) {
      const auto& cells = tracked[f].cells;
      double d0 = dot(u, cells, 0);
      double dm = dot(u, cells, -1);  // <u, phi(. - delta)> pairing via T_+ adjoint
      double dp = dot(u, cells, +1);
      sol.projections[f].u_phi.push_back(d0);
      sol.projections[f].grad_plus.push_back((dm - d0) / delta);
      sol.projections[f].grad_minus.push_back((d0 - dp) / delta);
    }
    if (snapshot_stride > 0 && (i % snapshot_stride == 0 || i == sol.n_steps)) {
      sol.snapshots.emplace(i, StepDensity(grid, u));
    }
  };
  record(0);

  std::vector<double> u_next(u.size());
  for (int i = 1; i <= sol.n_steps; ++i) {
    // Midpoint transport speed with a short fixed-point polish of (B, Y).
    double p0 = model.probs.imbalance(b, y);
    double ydot = p0 * y_slope(u) + (model.moments.f.empty()
                                         ? 0.0
                                         : model.moments.f.pair(b, y, h_cells));
    double p_mid = p0;
    for (int it = 0; it < std::max(1, fixed_point_iters); ++it) {
      double b_mid = b + 0.5 * dt * p_mid;
      double y_mid = y + 0.5 * dt * ydot;
      p_mid = model.probs.imbalance(b_mid, y_mid);
    }
    const double shift = p_mid * dt;

    const bool has_f = !model.moments.f.empty();
    StepDensity f_field;
    double f_scale = 0.0;
    const std::vector<double>* f_vals = nullptr;
    if (has_f) {
      if (model.moments.f.separable()) {
        f_scale = model.moments.f.eval_scale(b, y);
        f_vals = &model.moments.f.profile.values;
      } else {
        f_field = model.moments.f.eval(b, y);
        f_scale = 1.0;
        f_vals = &f_field.values;
      }
    }

    for (int a = 0; a < grid.n_cells; ++a) {
      double x_back = grid.x_center(a) + shift;
      double val = interp_at(u, grid, x_back);
      if (has_f && f_scale != 0.0) {
        val += dt * f_scale * interp_at(*f_vals, grid, grid.x_center(a) + 0.5 * shift);
      }
      u_next[static_cast<std::size_t>(a)] = val;
    }
    u.swap(u_next);
    b += dt * p_mid;
    c += shift;
    y = y_of(u);
    record(i);
  }
  return sol;
}

FirstOrderSample evaluate(const FirstOrderSolution& sol, double t) {
  if (t < -1e-12 || t > sol.T + 1e-12) {
    throw Error(ErrorKind::invalid_argument, "first-order: evaluate outside [0, T]");
  }
  t = std::clamp(t, 0.0, sol.T);
  double s = t / sol.dt;
  int i = std::min(static_cast<int>(s), sol.n_steps - 1);
  double w = s - i;
  FirstOrderSample out;
  out.b = sol.B[static_cast<std::size_t>(i)] * (1.0 - w) + sol.B[static_cast<std::size_t>(i + 1)] * w;
  out.y = sol.Y[static_cast<std::size_t>(i)] * (1.0 - w) + sol.Y[static_cast<std::size_t>(i + 1)] * w;

  if (!sol.snapshots.empty()) {
    // nearest stored snapshot, shifted by the characteristic difference
    auto it = sol.snapshots.lower_bound(static_cast<int>(std::lround(s)));
    if (it == sol.snapshots.end()) --it;
    if (it != sol.snapshots.begin()) {
      auto prev = std::prev(it);
      if (std::abs(prev->first - s) < std::abs(it->first - s)) it = prev;
    }
    double c_t = sol.characteristic[static_cast<std::size_t>(i)] * (1.0 - w) +
                 sol.characteristic[static_cast<std::size_t>(i + 1)] * w;
    double c_snap = sol.characteristic[static_cast<std::size_t>(it->first)];
    double shift = c_t - c_snap;
    const auto& vals = it->second.values;
    out.u = StepDensity(sol.grid);
    for (int a = 0; a < sol.grid.n_cells; ++a) {
      out.u.values[static_cast<std::size_t>(a)] =
          interp_at(vals, sol.grid, sol.grid.x_center(a) + shift);
    }
  } else {
    out.u = StepDensity(sol.grid);
  }
  return out;
}

}  // namespace lobflux
