#include "lobflux/params.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace lobflux {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

// ---------------------------------------------------------------------------
// EventProbabilityFns

EventProbs EventProbabilityFns::eval(double b, double y) const {
  double pa = p_a ? p_a(b, y) : 0.0;
  double pb = p_b ? p_b(b, y) : 0.0;
  bool clamped = false;
  if (pa < 0.0) { pa = 0.0; clamped = true; }
  if (pb < 0.0) { pb = 0.0; clamped = true; }
  double s = pa + pb;
  if (s > 1.0) {
    pa /= s;
    pb /= s;
    clamped = true;
  }
  if (clamped && stats) stats->prob_clamps.fetch_add(1, std::memory_order_relaxed);
  return {pa, pb, 1.0 - pa - pb, clamped};
}

double EventProbabilityFns::imbalance(double b, double y) const {
  EventProbs e = eval(b, y);
  return e.b - e.a;
}

double EventProbabilityFns::sum(double b, double y) const {
  EventProbs e = eval(b, y);
  return e.a + e.b;
}

double EventProbabilityFns::partial_b(double b, double y) const {
  if (p_db) return p_db(b, y);
  double h = 1e-5 * (1.0 + std::abs(b));
  return (imbalance(b + h, y) - imbalance(b - h, y)) / (2.0 * h);
}

double EventProbabilityFns::partial_y(double b, double y) const {
  if (p_dy) return p_dy(b, y);
  double h = 1e-5 * (1.0 + std::abs(y));
  return (imbalance(b, y + h) - imbalance(b, y - h)) / (2.0 * h);
}

double sigma0_sq(const EventProbabilityFns& probs, double b, double y) {
  EventProbs e = probs.eval(b, y);
  double p = e.b - e.a;
  return e.a + e.b - p * p;
}

// ---------------------------------------------------------------------------
// MomentField

StepDensity MomentField::eval(double b, double y) const {
  if (separable()) {
    StepDensity out = profile;
    double s = scale(b, y);
    for (double& v : out.values) v *= s;
    return out;
  }
  if (general) return general(b, y);
  throw Error(ErrorKind::invalid_argument, "moment field: neither separable nor general form set");
}

double MomentField::eval_scale(double b, double y) const {
  if (!separable()) throw Error(ErrorKind::invalid_argument, "moment field: not separable");
  return scale(b, y);
}

double MomentField::pair(double b, double y, const std::vector<double>& psi_cells) const {
  if (separable()) {
    double dot = 0.0;
    for (std::size_t a = 0; a < psi_cells.size(); ++a) dot += profile.values[a] * psi_cells[a];
    return scale(b, y) * dot;
  }
  StepDensity d = eval(b, y);
  double dot = 0.0;
  for (std::size_t a = 0; a < psi_cells.size(); ++a) dot += d.values[a] * psi_cells[a];
  return dot;
}

StepDensity MomentField::partial_b(double b, double y) const {
  if (separable()) {
    StepDensity out = profile;
    double s;
    if (scale_db) {
      s = scale_db(b, y);
    } else {
      double h = 1e-5 * (1.0 + std::abs(b));
      s = (scale(b + h, y) - scale(b - h, y)) / (2.0 * h);
    }
    for (double& v : out.values) v *= s;
    return out;
  }
  double h = 1e-5 * (1.0 + std::abs(b));
  StepDensity lo = general(b - h, y), hi = general(b + h, y);
  StepDensity out = hi;
  for (std::size_t a = 0; a < out.values.size(); ++a) out.values[a] = (hi.values[a] - lo.values[a]) / (2.0 * h);
  return out;
}

StepDensity MomentField::partial_y(double b, double y) const {
  if (separable()) {
    StepDensity out = profile;
    double s;
    if (scale_dy) {
      s = scale_dy(b, y);
    } else {
      double h = 1e-5 * (1.0 + std::abs(y));
      s = (scale(b, y + h) - scale(b, y - h)) / (2.0 * h);
    }
    for (double& v : out.values) v *= s;
    return out;
  }
  double h = 1e-5 * (1.0 + std::abs(y));
  StepDensity lo = general(b, y - h), hi = general(b, y + h);
  StepDensity out = hi;
  for (std::size_t a = 0; a < out.values.size(); ++a) out.values[a] = (hi.values[a] - lo.values[a]) / (2.0 * h);
  return out;
}

// ---------------------------------------------------------------------------
// VolumeIndicator

VolumeIndicator VolumeIndicator::left_indicator() {
  VolumeIndicator v;
  v.kind = Kind::left_indicator;
  v.h.f = [](double x) { return x <= 0.0 ? 1.0 : 0.0; };
  v.h.label = "1_(-inf,0]";
  return v;
}

VolumeIndicator VolumeIndicator::window_indicator(double width) {
  if (!(width > 0.0)) throw Error(ErrorKind::invalid_argument, "volume indicator: window width must be > 0");
  VolumeIndicator v;
  v.kind = Kind::window_indicator;
  v.window = width;
  v.h.f = [width](double x) { return (x <= 0.0 && x > -width) ? 1.0 : 0.0; };
  v.h.label = "1_(-W,0]";
  return v;
}

VolumeIndicator VolumeIndicator::smooth(TestFunction h) {
  VolumeIndicator v;
  v.kind = Kind::smooth;
  v.h = std::move(h);
  return v;
}

// ---------------------------------------------------------------------------
// SimplifiedCoefficients

double SimplifiedCoefficients::p_sum(double y) const {
  double p = p_sum_raw(y);
  if (p < 0.0 || p > 1.0) {
    if (stats) stats->prob_clamps.fetch_add(1, std::memory_order_relaxed);
    p = std::clamp(p, 0.0, 1.0);
  }
  return p;
}

double SimplifiedCoefficients::G_agg_effective(double y) const {
  double g = G_agg_raw(y);
  double p_sum_v = p_sum(y);
  double p_c = std::max(1.0 - p_sum_v, 1e-12);
  double feas = (1.0 + g_feas_margin) * F_agg(y) * F_agg(y) / p_c;
  double floor = std::max(g_floor_abs, feas);
  if (g < floor) {
    if (stats) stats->g_floor_clamps.fetch_add(1, std::memory_order_relaxed);
    return floor;
  }
  return g;
}

double SimplifiedCoefficients::equilibrium_y() const {
  if (F_y == 0.0) throw Error(ErrorKind::numeric, "coefficients: F_y = 0, no fixed point");
  return -F_c / F_y;
}

SimplifiedCoefficients preset_dte2022_bid() {
  SimplifiedCoefficients c;
  c.p_c = 1.1670e-1;
  c.p_y = 8.5861e-7;
  c.f0_c = 7.1715e5;
  c.f0_y = -1.1477e1;
  c.F_c = 2.7365e6;
  c.F_y = -4.3782e1;
  c.G_c = 1.7328e14;
  c.G_y = -5.8688e9;
  c.G_yy = 5.0276e4;
  return c;
}

SimplifiedCoefficients preset_dte2022_ask() {
  SimplifiedCoefficients c;
  c.p_c = 1.0601e-1;
  c.p_y = 9.7063e-7;
  c.f0_c = 5.5391e5;
  c.f0_y = -8.4154e0;
  c.F_c = 1.9873e6;
  c.F_y = -3.0186e1;
  c.G_c = 2.3727e13;
  c.G_y = -8.4335e8;
  c.G_yy = 8.2821e3;
  return c;
}

// ---------------------------------------------------------------------------
// Sampler ingredients

namespace {

// Two-point law on {lo, hi} with mean mu and second moment s. The spread
// ratio r starts symmetric and is pulled toward the admissible interval when
// the omega bound would be violated.
void two_point_law(double mu, double s, double bound, CellLaw& law) {
  double var = s - mu * mu;
  if (var < -1e-12 * std::max(1.0, s)) {
    throw Error(ErrorKind::infeasible,
                "sampler: cell " + std::to_string(law.cell) +
                    " second moment below squared mean (s=" + std::to_string(s) +
                    ", mu=" + std::to_string(mu) + ")");
  }
  if (var <= 1e-12 * std::max(1.0, s)) var = 0.0;  // roundoff-level spread is deterministic
  double sd = std::sqrt(var);
  if (sd == 0.0) {
    if (std::abs(mu) > bound) {
      throw Error(ErrorKind::infeasible, "sampler: deterministic omega exceeds bound M");
    }
    law.lo = law.hi = mu;
    law.q_hi = 1.0;
    return;
  }
  double r = 1.0;
  // Admissible r: mu - sd*r >= -bound and mu + sd/r <= bound.
  double r_max = (bound + mu) / sd;
  double r_min = (bound > mu) ? sd / (bound - mu) : std::numeric_limits<double>::infinity();
  if (!(r_min <= r_max) || r_max <= 0.0) {
    throw Error(ErrorKind::infeasible,
                "sampler: cell " + std::to_string(law.cell) +
                    " cannot satisfy |omega| <= M with required moments (need s <= M^2)");
  }
  r = std::clamp(r, r_min, r_max);
  law.lo = mu - sd * r;
  law.hi = mu + sd / r;
  law.q_hi = r * r / (1.0 + r * r);
}

}  // namespace

EventDistribution sampler_ingredients(const EventProbabilityFns& probs,
                                      const PlacementMomentFns& moments,
                                      double b, double y, double delta,
                                      double omega_bound) {
  EventDistribution dist;
  dist.probs = probs.eval(b, y);
  const double p_c = dist.probs.c;

  StepDensity f = moments.f.empty() ? StepDensity() : moments.f.eval(b, y);
  StepDensity g = moments.g.empty() ? StepDensity() : moments.g.eval(b, y);
  if (g.values.empty() && f.values.empty()) {
    dist.noop_c = true;
    return dist;
  }
  const std::size_t n = g.values.empty() ? f.values.size() : g.values.size();

  double g_mass = 0.0;
  for (std::size_t a = 0; a < n; ++a) {
    double gv = a < g.values.size() ? g.values[a] : 0.0;
    if (gv < 0.0) {
      throw Error(ErrorKind::infeasible, "sampler: negative second-moment density at cell " + std::to_string(a));
    }
    double fv = a < f.values.size() ? f.values[a] : 0.0;
    if (gv == 0.0 && fv != 0.0) {
      throw Error(ErrorKind::infeasible,
                  "sampler: cell " + std::to_string(a) + " has f != 0 but g = 0 (no weight assignable)");
    }
    g_mass += gv * delta;
  }
  if (g_mass <= 0.0) {
    dist.noop_c = true;  // both moments vanish: C event is a no-op
    return dist;
  }
  if (p_c <= 0.0) {
    throw Error(ErrorKind::infeasible, "sampler: p_C = 0 but placement moments are nonzero");
  }

  dist.laws.reserve(n);
  double cum = 0.0;
  for (std::size_t a = 0; a < n; ++a) {
    double gv = a < g.values.size() ? g.values[a] : 0.0;
    if (gv == 0.0) continue;
    double fv = a < f.values.size() ? f.values[a] : 0.0;
    CellLaw law;
    law.cell = static_cast<int>(a);
    law.weight = gv * delta / g_mass;  // w_j proportional to g_j
    law.mu = delta * fv / (p_c * law.weight);
    law.s = delta * gv / (p_c * law.weight);
    two_point_law(law.mu, law.s, omega_bound, law);
    cum += law.weight;
    dist.laws.push_back(law);
    dist.cum_weight.push_back(cum);
  }
  if (!dist.cum_weight.empty()) dist.cum_weight.back() = 1.0;  // absorb roundoff
  return dist;
}

// ---------------------------------------------------------------------------
// Assumption validation

namespace {

void add_check(ValidationReport& rep, const std::string& id, bool pass, const std::string& witness) {
  rep.checks.push_back({id, pass, witness});
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

}  // namespace

bool ValidationReport::all_pass() const {
  for (const auto& c : checks)
    if (!c.pass) return false;
  return true;
}

std::string ValidationReport::summary() const {
  std::ostringstream os;
  for (const auto& c : checks) {
    os << (c.pass ? "PASS " : "FAIL ") << c.id;
    if (!c.witness.empty()) os << " (" << c.witness << ")";
    os << "\n";
  }
  return os.str();
}

ValidationReport validate_assumptions(const EventProbabilityFns& probs,
                                      const PlacementMomentFns& moments,
                                      const StepDensity& init, double support_bound,
                                      const SampleBox& box) {
  ValidationReport rep;
  const TickGrid& grid = init.grid;
  const double M = support_bound;

  // Initial state: non-negative, supported in [-M, M], sup-bounded by M.
  {
    bool nonneg = true;
    int bad_cell = -1;
    for (int a = 0; a < grid.n_cells; ++a) {
      if (init.values[a] < 0.0) { nonneg = false; bad_cell = a; break; }
    }
    add_check(rep, "init.nonnegative", nonneg,
              nonneg ? "" : "cell " + std::to_string(bad_cell));
    auto [lo, hi] = init.support();
    bool in_support = true;
    std::string wit;
    if (lo >= 0) {
      double xl = grid.x_left(lo), xr = grid.x_right(hi);
      in_support = xl >= -M - 1e-12 && xr <= M + 1e-12;
      if (!in_support) wit = "support [" + fmt(xl) + ", " + fmt(xr) + "] exceeds [-M, M], cells " +
                             std::to_string(lo) + ".." + std::to_string(hi);
    }
    add_check(rep, "init.support_in_M", in_support, wit);
    double sup = init.sup_norm();
    add_check(rep, "init.sup_norm_le_M", sup <= M + 1e-12, "sup = " + fmt(sup));
  }

  // Lattice over the sample box for the state-dependent checks.
  std::vector<std::pair<double, double>> states;
  for (int ib = 0; ib < box.n_b; ++ib) {
    double bb = box.n_b == 1 ? box.b_lo : box.b_lo + (box.b_hi - box.b_lo) * ib / (box.n_b - 1);
    for (int iy = 0; iy < box.n_y; ++iy) {
      double yy = box.n_y == 1 ? box.y_lo : box.y_lo + (box.y_hi - box.y_lo) * iy / (box.n_y - 1);
      states.emplace_back(bb, yy);
    }
  }

  double sup_p = 0.0, sup_psum = 0.0, sup_f_l2 = 0.0, sup_g_l1 = 0.0;
  bool probs_valid = true;
  bool g_nonneg = true;
  bool supports_ok = true;
  bool feasible = true;
  std::string feas_witness, supp_witness;
  for (auto [bb, yy] : states) {
    EventProbs e = probs.eval(bb, yy);
    sup_p = std::max(sup_p, std::abs(e.b - e.a));
    sup_psum = std::max(sup_psum, e.a + e.b);
    if (!(e.a >= 0.0 && e.b >= 0.0 && e.a + e.b <= 1.0 + 1e-12)) probs_valid = false;

    if (!moments.f.empty()) {
      StepDensity f = moments.f.eval(bb, yy);
      sup_f_l2 = std::max(sup_f_l2, f.l2_norm());
      auto [lo, hi] = f.support();
      if (lo >= 0 && (grid.x_left(lo) < -M - 1e-12 || grid.x_right(hi) > M + 1e-12)) {
        supports_ok = false;
        supp_witness = "f support at (b,y)=(" + fmt(bb) + "," + fmt(yy) + ")";
      }
    }
    if (!moments.g.empty()) {
      StepDensity g = moments.g.eval(bb, yy);
      double l1 = 0.0;
      for (double v : g.values) {
        if (v < 0.0) g_nonneg = false;
        l1 += std::abs(v) * grid.delta;
      }
      sup_g_l1 = std::max(sup_g_l1, l1);
      auto [lo, hi] = g.support();
      if (lo >= 0 && (grid.x_left(lo) < -M - 1e-12 || grid.x_right(hi) > M + 1e-12)) {
        supports_ok = false;
        supp_witness = "g support at (b,y)=(" + fmt(bb) + "," + fmt(yy) + ")";
      }
    }
    if (feasible && (!moments.f.empty() || !moments.g.empty())) {
      try {
        (void)sampler_ingredients(probs, moments, bb, yy, grid.delta, M);
      } catch (const Error& err) {
        feasible = false;
        feas_witness = std::string(err.what()) + " at (b,y)=(" + fmt(bb) + "," + fmt(yy) + ")";
      }
    }
  }
  add_check(rep, "probs.valid", probs_valid,
            "sup|p| = " + fmt(sup_p) + ", sup p^{B+A} = " + fmt(sup_psum));
  add_check(rep, "moments.supports_in_M", supports_ok, supp_witness);
  add_check(rep, "moments.g_nonnegative", g_nonneg, "");
  add_check(rep, "moments.norms_finite",
            std::isfinite(sup_f_l2) && std::isfinite(sup_g_l1),
            "sup||f||_L2 = " + fmt(sup_f_l2) + ", sup||g||_L1 = " + fmt(sup_g_l1));
  add_check(rep, "sampler.two_point_feasible", feasible, feas_witness);
  return rep;
}

// ---------------------------------------------------------------------------
// Model lifts

StepDensity make_profile(const TickGrid& grid, double lo, double hi, ProfileShape shape) {
  if (!(hi > lo)) throw Error(ErrorKind::invalid_argument, "profile: hi must exceed lo");
  StepDensity prof(grid);
  std::function<double(double)> shape_fn;
  if (shape == ProfileShape::box) {
    shape_fn = [lo, hi](double x) { return (x > lo && x <= hi) ? 1.0 : 0.0; };
  } else {
    double mid = 0.5 * (lo + hi), hw = 0.5 * (hi - lo);
    shape_fn = [lo, hi, mid, hw](double x) {
      if (x <= lo || x > hi) return 0.0;
      double t = (x - mid) / hw;
      return 1.0 + std::cos(kPi * t);
    };
  }
  for (int a = 0; a < grid.n_cells; ++a) {
    prof.values[a] = gauss_legendre(shape_fn, grid.x_left(a), grid.x_right(a)) / grid.delta;
  }
  double m = prof.mass();
  if (!(m > 0.0)) throw Error(ErrorKind::invalid_argument, "profile: zero mass on grid");
  for (double& v : prof.values) v /= m;
  return prof;
}

Model make_constant_model(const TickGrid& grid, double p_a, double p_b,
                          double f_scale, double g_scale, const StepDensity& profile,
                          VolumeIndicator h, double omega_bound) {
  Model m;
  m.grid = grid;
  m.omega_bound = omega_bound;
  m.indicator = std::move(h);
  m.probs.p_a = [p_a](double, double) { return p_a; };
  m.probs.p_b = [p_b](double, double) { return p_b; };
  m.probs.p_db = [](double, double) { return 0.0; };
  m.probs.p_dy = [](double, double) { return 0.0; };
  if (f_scale != 0.0 || g_scale != 0.0) {
    m.moments.f.profile = profile;
    m.moments.f.scale = [f_scale](double, double) { return f_scale; };
    m.moments.f.scale_db = [](double, double) { return 0.0; };
    m.moments.f.scale_dy = [](double, double) { return 0.0; };
    m.moments.g.profile = profile;
    m.moments.g.scale = [g_scale](double, double) { return g_scale; };
  }
  return m;
}

namespace {

Model lifted_model(const TickGrid& grid, const SimplifiedCoefficients& coeffs,
                   const StepDensity& profile, VolumeIndicator h, double omega_bound,
                   double p_base, double p_slope_y, double y_ref) {
  auto c = std::make_shared<SimplifiedCoefficients>(coeffs);
  Model m;
  m.grid = grid;
  m.omega_bound = omega_bound;
  m.indicator = std::move(h);
  m.coeffs = coeffs;
  auto imb = [c, p_base, p_slope_y, y_ref](double, double y) {
    return p_base + p_slope_y * (y - y_ref);
  };
  m.probs.p_a = [c, imb](double b, double y) { return 0.5 * (c->p_sum(y) - imb(b, y)); };
  m.probs.p_b = [c, imb](double b, double y) { return 0.5 * (c->p_sum(y) + imb(b, y)); };
  m.probs.p_db = [](double, double) { return 0.0; };
  m.probs.p_dy = [p_slope_y](double, double) { return p_slope_y; };
  m.probs.stats = c->stats;

  m.moments.f.profile = profile;
  m.moments.f.scale = [c](double, double y) { return c->F_agg(y); };
  m.moments.f.scale_db = [](double, double) { return 0.0; };
  m.moments.f.scale_dy = [c](double, double) { return c->F_y; };
  m.moments.g.profile = profile;
  m.moments.g.scale = [c](double, double y) { return c->G_agg_effective(y); };
  return m;
}

}  // namespace

Model make_simplified_model(const TickGrid& grid, const SimplifiedCoefficients& coeffs,
                            const StepDensity& profile, VolumeIndicator h,
                            double omega_bound) {
  return lifted_model(grid, coeffs, profile, std::move(h), omega_bound, 0.0, 0.0, 0.0);
}

Model make_general_model(const TickGrid& grid, const SimplifiedCoefficients& coeffs,
                         const StepDensity& profile, VolumeIndicator h,
                         double omega_bound, double p_base, double p_slope_y, double y_ref) {
  return lifted_model(grid, coeffs, profile, std::move(h), omega_bound, p_base, p_slope_y, y_ref);
}

}  // namespace lobflux
