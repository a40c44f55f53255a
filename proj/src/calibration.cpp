#include "lobflux/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <Eigen/Dense>

#include "json.hpp"

namespace lobflux {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

bool parse_double(const std::string& s, double& out) {
  try {
    std::size_t pos;
    out = std::stod(s, &pos);
    while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
    return pos == s.size() && std::isfinite(out);
  } catch (...) {
    return false;
  }
}

}  // namespace

IngestResult ingest_csv(std::istream& in, const SnapshotSchema& schema) {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorKind::io, "ingest: empty input");
  std::vector<std::string> header = split_csv_line(line);
  const int n = schema.n_levels;

  auto col_of = [&](const std::string& name) {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return static_cast<int>(i);
    throw Error(ErrorKind::io, "ingest: missing column '" + name + "'");
  };
  int ts_col = col_of(schema.ts_col);
  std::vector<int> bp(n), bs(n), ap(n), as(n);
  for (int i = 0; i < n; ++i) {
    bp[i] = col_of(schema.bp_prefix + std::to_string(i + 1));
    bs[i] = col_of(schema.bs_prefix + std::to_string(i + 1));
    ap[i] = col_of(schema.ap_prefix + std::to_string(i + 1));
    as[i] = col_of(schema.as_prefix + std::to_string(i + 1));
  }

  IngestResult res;
  long line_no = 1;
  double last_ts = -std::numeric_limits<double>::infinity();
  while (std::getline(in, line)) {
    ++line_no;
    ++res.lines_read;
    if (line.empty()) continue;
    std::vector<std::string> cells = split_csv_line(line);
    auto reject = [&](const std::string& why) { res.rejects.push_back({line_no, why}); };
    if (cells.size() < header.size()) {
      reject("short row");
      continue;
    }
    BookSnapshot snap;
    bool ok = parse_double(cells[static_cast<std::size_t>(ts_col)], snap.timestamp);
    snap.bid_prices.resize(static_cast<std::size_t>(n));
    snap.bid_sizes.resize(static_cast<std::size_t>(n));
    snap.ask_prices.resize(static_cast<std::size_t>(n));
    snap.ask_sizes.resize(static_cast<std::size_t>(n));
    for (int i = 0; ok && i < n; ++i) {
      ok = parse_double(cells[static_cast<std::size_t>(bp[i])], snap.bid_prices[static_cast<std::size_t>(i)]) &&
           parse_double(cells[static_cast<std::size_t>(bs[i])], snap.bid_sizes[static_cast<std::size_t>(i)]) &&
           parse_double(cells[static_cast<std::size_t>(ap[i])], snap.ask_prices[static_cast<std::size_t>(i)]) &&
           parse_double(cells[static_cast<std::size_t>(as[i])], snap.ask_sizes[static_cast<std::size_t>(i)]);
    }
    if (!ok) {
      reject("unparseable field");
      continue;
    }
    bool shape_ok = true;
    for (int i = 0; i + 1 < n && shape_ok; ++i) {
      if (snap.bid_prices[static_cast<std::size_t>(i)] <= snap.bid_prices[static_cast<std::size_t>(i + 1)])
        shape_ok = false;
      if (snap.ask_prices[static_cast<std::size_t>(i)] >= snap.ask_prices[static_cast<std::size_t>(i + 1)])
        shape_ok = false;
    }
    if (!shape_ok) {
      reject("levels not strictly ordered");
      continue;
    }
    for (int i = 0; i < n; ++i) {
      if (snap.bid_sizes[static_cast<std::size_t>(i)] < 0.0 ||
          snap.ask_sizes[static_cast<std::size_t>(i)] < 0.0) {
        shape_ok = false;
      }
    }
    if (!shape_ok) {
      reject("negative size");
      continue;
    }
    if (snap.bid_prices[0] >= snap.ask_prices[0]) {
      reject("crossed book");
      continue;
    }
    if (snap.timestamp < last_ts) {
      reject("non-monotonic timestamp");
      continue;
    }
    if (!res.snapshots.empty() && snap.timestamp == last_ts) {
      res.snapshots.back() = snap;  // duplicate policy: keep last
      continue;
    }
    last_ts = snap.timestamp;
    res.snapshots.push_back(std::move(snap));
  }
  if (res.lines_read > 0 &&
      static_cast<double>(res.rejects.size()) > schema.max_reject_fraction * res.lines_read) {
    throw Error(ErrorKind::validation,
                "ingest: " + std::to_string(res.rejects.size()) + " of " +
                    std::to_string(res.lines_read) + " rows rejected (limit " +
                    std::to_string(schema.max_reject_fraction) + ")");
  }
  return res;
}

IngestResult ingest_csv_file(const std::string& path, const SnapshotSchema& schema) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io, "ingest: cannot open '" + path + "'");
  return ingest_csv(in, schema);
}

FeatureSeries build_features(const std::vector<BookSnapshot>& snapshots, BookSide side,
                             double tick) {
  if (snapshots.size() < 2) {
    throw Error(ErrorKind::invalid_argument, "features: need at least 2 snapshots");
  }
  std::vector<double> price, y, top, ts;
  price.reserve(snapshots.size());
  y.reserve(snapshots.size());
  top.reserve(snapshots.size());
  ts.reserve(snapshots.size());
  for (const auto& s : snapshots) {
    ts.push_back(s.timestamp);
    const auto& prices = side == BookSide::bid ? s.bid_prices : s.ask_prices;
    const auto& sizes = side == BookSide::bid ? s.bid_sizes : s.ask_sizes;
    price.push_back(prices.empty() ? 0.0 : prices[0]);
    double yv = 0.0;
    for (double v : sizes) yv += v;
    y.push_back(yv);
    top.push_back(sizes.empty() ? 0.0 : sizes[0]);
  }
  FeatureSeries f = features_from_series(price, y, top, tick);
  f.t = std::move(ts);
  int gaps = 0;
  for (std::size_t k = 0; k + 1 < f.t.size(); ++k) {
    if (f.t[k + 1] - f.t[k] > 1.5) ++gaps;
  }
  f.gaps = gaps;
  return f;
}

FeatureSeries features_from_series(const std::vector<double>& price,
                                   const std::vector<double>& y,
                                   const std::vector<double>& top_volume, double tick) {
  const std::size_t n = price.size();
  if (n < 2 || y.size() != n || top_volume.size() != n) {
    throw Error(ErrorKind::invalid_argument, "features: series length mismatch or too short");
  }
  FeatureSeries f;
  f.tick = tick;
  f.delta = tick;  // single scaling parameter: the tick is the time step
  f.price = price;
  f.y = y;
  f.top_volume = top_volume;
  f.t.resize(n);
  for (std::size_t k = 0; k < n; ++k) f.t[k] = static_cast<double>(k);
  for (std::size_t k = 0; k + 1 < n; ++k) {
    double dp = price[k + 1] - price[k];
    double ticks = dp / tick;
    double rounded = std::round(ticks);
    if (std::abs(ticks - rounded) > 1e-6) ++f.tick_rounding_warnings;
    bool moved = std::abs(rounded) >= 0.5;
    f.active.push_back(moved ? 1.0 : 0.0);
    f.y_prev.push_back(y[k]);
    f.dy.push_back(y[k + 1] - y[k]);
    f.d_top.push_back(top_volume[k + 1] - top_volume[k]);
    f.usable.push_back(moved ? 0 : 1);
  }
  return f;
}

RegressionFit ols(const std::vector<double>& y, const std::vector<std::vector<double>>& columns,
                  const std::vector<std::string>& terms, const std::string& model_id) {
  const std::size_t n = y.size();
  const std::size_t k = columns.size();
  if (k == 0 || n < k + 1) {
    throw Error(ErrorKind::invalid_argument, "ols: not enough observations for '" + model_id + "'");
  }
  Eigen::MatrixXd X(n, k);
  Eigen::VectorXd yv(n);
  for (std::size_t i = 0; i < n; ++i) {
    yv(static_cast<Eigen::Index>(i)) = y[i];
    for (std::size_t j = 0; j < k; ++j) X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = columns[j][i];
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
  if (qr.rank() < static_cast<Eigen::Index>(k)) {
    throw Error(ErrorKind::numeric, "ols: rank-deficient design in '" + model_id + "'");
  }
  Eigen::VectorXd beta = qr.solve(yv);
  Eigen::VectorXd resid = yv - X * beta;
  double rss = resid.squaredNorm();
  double mean_y = yv.mean();
  double tss = (yv.array() - mean_y).square().sum();
  double sigma2 = rss / static_cast<double>(n - k);
  Eigen::MatrixXd xtx_inv = (X.transpose() * X).inverse();

  RegressionFit fit;
  fit.model_id = model_id;
  fit.terms = terms;
  fit.n_obs = static_cast<long>(n);
  fit.sigma2 = sigma2;
  fit.r_squared = tss > 0.0 ? 1.0 - rss / tss : 0.0;
  for (std::size_t j = 0; j < k; ++j) {
    double se = std::sqrt(sigma2 * xtx_inv(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(j)));
    fit.coef.push_back(beta(static_cast<Eigen::Index>(j)));
    fit.se.push_back(se);
    fit.t_stat.push_back(se > 0.0 ? beta(static_cast<Eigen::Index>(j)) / se : 0.0);
  }
  return fit;
}

FitSet fit_models(const FeatureSeries& f) {
  const std::size_t n = f.active.size();
  std::vector<double> ones_all(n, 1.0);

  // stage 1: activity on [1, Y] over all transitions
  FitSet fits;
  {
    std::vector<std::vector<double>> X{ones_all, f.y_prev};
    fits.pAB = ols(f.active, X, {"p_c", "p_y"}, "pAB");
  }
  auto p_hat = [&](double yv) { return fits.pAB.coef[0] + fits.pAB.coef[1] * yv; };

  // stage 2: reweighted moment proxies on the stable transitions
  std::vector<double> yv, f0v, Fv, Gv, Ysq;
  std::vector<double> ones;
  const double d = f.delta;
  for (std::size_t i = 0; i < n; ++i) {
    if (!f.usable[i]) continue;
    double w = std::clamp(1.0 - p_hat(f.y_prev[i]), 0.0, 1.0);
    ones.push_back(1.0);
    yv.push_back(f.y_prev[i]);
    Ysq.push_back(0.5 * f.y_prev[i] * f.y_prev[i]);
    f0v.push_back(f.d_top[i] * w / (d * d));
    Fv.push_back(f.dy[i] * w / d);
    Gv.push_back(f.dy[i] * f.dy[i] * w / (d * d));
  }
  if (ones.size() < 30) {
    throw Error(ErrorKind::validation, "fit: fewer than 30 usable stable observations");
  }
  std::vector<std::vector<double>> X2{ones, yv};
  fits.f0 = ols(f0v, X2, {"f0_c", "f0_y"}, "f0");
  fits.F = ols(Fv, X2, {"F_c", "F_y"}, "F");
  std::vector<std::vector<double>> X3{ones, yv, Ysq};
  fits.G = ols(Gv, X3, {"G_c", "G_y", "G_yy"}, "G");
  return fits;
}

std::string fits_pretty_table(const FitSet& fits) {
  // coefficient rows with t-statistics parenthesized beneath
  const RegressionFit* models[4] = {&fits.pAB, &fits.f0, &fits.F, &fits.G};
  const char* headers[4] = {"p^{B+A}", "f0", "F", "G"};
  std::ostringstream os;
  char buf[64];
  os << "            ";
  for (int m = 0; m < 4; ++m) {
    std::snprintf(buf, sizeof(buf), "%16s", headers[m]);
    os << buf;
  }
  os << "\n";
  const char* rows[3] = {"c_c", "c_y", "c_yy"};
  for (int r = 0; r < 3; ++r) {
    os << rows[r] << std::string(12 - std::string(rows[r]).size(), ' ');
    for (int m = 0; m < 4; ++m) {
      if (r < static_cast<int>(models[m]->coef.size())) {
        std::snprintf(buf, sizeof(buf), "%16.4e", models[m]->coef[static_cast<std::size_t>(r)]);
      } else {
        std::snprintf(buf, sizeof(buf), "%16s", "-");
      }
      os << buf;
    }
    os << "\n" << std::string(12, ' ');
    for (int m = 0; m < 4; ++m) {
      if (r < static_cast<int>(models[m]->t_stat.size())) {
        std::snprintf(buf, sizeof(buf), "         (%5.2f)", models[m]->t_stat[static_cast<std::size_t>(r)]);
      } else {
        std::snprintf(buf, sizeof(buf), "%16s", " ");
      }
      os << buf;
    }
    os << "\n";
  }
  return os.str();
}

std::string fits_json(const FitSet& fits, BookSide side) {
  nlohmann::json j;
  j["side"] = side == BookSide::bid ? "bid" : "ask";
  auto one = [](const RegressionFit& f) {
    nlohmann::json o;
    o["model"] = f.model_id;
    o["terms"] = f.terms;
    o["coef"] = f.coef;
    o["stderr"] = f.se;
    o["t_stat"] = f.t_stat;
    o["r_squared"] = f.r_squared;
    o["n_obs"] = f.n_obs;
    return o;
  };
  j["pAB"] = one(fits.pAB);
  j["f0"] = one(fits.f0);
  j["F"] = one(fits.F);
  j["G"] = one(fits.G);
  return j.dump(2);
}

std::string CorrelationReport::to_csv() const {
  std::ostringstream os;
  os << "t,sample_rho,model_rho,n_windows\n";
  char buf[128];
  for (std::size_t i = 0; i < t.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.10g,%.10g,%.10g,%d\n", t[i], sample_rho[i], model_rho[i],
                  n_windows);
    os << buf;
  }
  return os.str();
}

CorrelationReport windowed_correlation(const std::vector<double>& price,
                                       const std::vector<double>& y_series,
                                       const std::vector<double>& top_volume, double delta,
                                       double tick, const SimplifiedCoefficients& coeffs,
                                       const CorrelationConfig& cfg) {
  const int W = cfg.window_samples;
  if (W < 2) throw Error(ErrorKind::invalid_argument, "correlation: window too short");
  const std::size_t n = price.size();
  const int n_windows = static_cast<int>((n - 1) / static_cast<std::size_t>(W));
  if (n_windows < 2) {
    throw Error(ErrorKind::validation, "correlation: series shorter than 2 windows");
  }
  const double sqrt_d = std::sqrt(delta);

  // Per-window anchored fluctuations and per-window model correlation.
  std::vector<std::vector<double>> zb(static_cast<std::size_t>(n_windows)),
      zy(static_cast<std::size_t>(n_windows));
  std::vector<std::vector<double>> model_rho_w(static_cast<std::size_t>(n_windows));
  for (int w = 0; w < n_windows; ++w) {
    const std::size_t base = static_cast<std::size_t>(w) * static_cast<std::size_t>(W);
    const double y0 = y_series[base];
    // top-of-book density estimated from the window mean: a single snapshot
    // carries the full placement noise of one cell
    double top_mean = 0.0;
    for (int j = 0; j <= W; ++j) top_mean += top_volume[base + static_cast<std::size_t>(j)];
    const double u_top0 = top_mean / (W + 1) / tick;
    SimplifiedModel model = make_simplified_from_coeffs(coeffs, y0, u_top0, W * delta);
    auto& zbw = zb[static_cast<std::size_t>(w)];
    auto& zyw = zy[static_cast<std::size_t>(w)];
    auto& mrw = model_rho_w[static_cast<std::size_t>(w)];
    zbw.resize(static_cast<std::size_t>(W));
    zyw.resize(static_cast<std::size_t>(W));
    mrw.resize(static_cast<std::size_t>(W));
    for (int j = 1; j <= W; ++j) {
      double t = j * delta;
      zbw[static_cast<std::size_t>(j - 1)] = (price[base + static_cast<std::size_t>(j)] - price[base]) / sqrt_d;
      zyw[static_cast<std::size_t>(j - 1)] =
          (y_series[base + static_cast<std::size_t>(j)] - model.Y(t)) / sqrt_d;
      SimplifiedCovariance sc =
          simplified_covariance(model, t, std::max(2, j * cfg.quad_steps_per_sample), cfg.exponent);
      mrw[static_cast<std::size_t>(j - 1)] = sc.rho;
    }
  }

  CorrelationReport rep;
  rep.n_windows = n_windows;
  rep.window_samples = W;
  rep.low_window_warning = n_windows < 8;
  double gap_sum = 0.0, se_sum = 0.0;
  int n_rep = 0;
  for (int j = 1; j <= W; ++j) {
    double t = j * delta;
    if (t < cfg.burn_in - 1e-12) continue;
    // across-window sample correlation at this timestep
    double sb = 0.0, sy = 0.0;
    for (int w = 0; w < n_windows; ++w) {
      sb += zb[static_cast<std::size_t>(w)][static_cast<std::size_t>(j - 1)];
      sy += zy[static_cast<std::size_t>(w)][static_cast<std::size_t>(j - 1)];
    }
    sb /= n_windows;
    sy /= n_windows;
    double vbb = 0.0, vyy = 0.0, vby = 0.0, mr = 0.0;
    for (int w = 0; w < n_windows; ++w) {
      double db = zb[static_cast<std::size_t>(w)][static_cast<std::size_t>(j - 1)] - sb;
      double dy = zy[static_cast<std::size_t>(w)][static_cast<std::size_t>(j - 1)] - sy;
      vbb += db * db;
      vyy += dy * dy;
      vby += db * dy;
      mr += model_rho_w[static_cast<std::size_t>(w)][static_cast<std::size_t>(j - 1)];
    }
    double denom = std::sqrt(vbb * vyy);
    double rho = denom > 0.0 ? vby / denom : 0.0;
    double se = n_windows > 3 ? (1.0 - rho * rho) / std::sqrt(static_cast<double>(n_windows - 3))
                              : 1.0;
    rep.t.push_back(t);
    rep.sample_rho.push_back(rho);
    rep.model_rho.push_back(mr / n_windows);
    rep.stderr_rho.push_back(se);
    gap_sum += std::abs(rho - mr / n_windows);
    se_sum += se;
    ++n_rep;
  }
  if (n_rep > 0) {
    rep.mean_abs_gap = gap_sum / n_rep;
    rep.mean_stderr = se_sum / n_rep;
  }
  return rep;
}

CorrelationReport windowed_correlation(const FeatureSeries& f,
                                       const SimplifiedCoefficients& coeffs,
                                       const CorrelationConfig& cfg) {
  return windowed_correlation(f.price, f.y, f.top_volume, f.delta, f.tick, coeffs, cfg);
}

std::vector<TrackedFunctional> make_level_functionals(const TickGrid& grid, int n_levels) {
  if (n_levels < 1 || n_levels > grid.n_cells / 2) {
    throw Error(ErrorKind::invalid_argument, "levels: n_levels outside the visible grid");
  }
  std::vector<TrackedFunctional> out;
  out.reserve(static_cast<std::size_t>(n_levels));
  for (int i = 1; i <= n_levels; ++i) {
    double lo = -i * grid.delta, hi = -(i - 1) * grid.delta;
    TestFunction phi;
    phi.f = [lo, hi](double x) { return (x > lo && x <= hi) ? 1.0 : 0.0; };
    phi.label = "lvl" + std::to_string(i);
    out.push_back(TrackedFunctional::make("lvl" + std::to_string(i), phi, grid));
  }
  return out;
}

void write_book_csv(std::ostream& out, const LOBPath& path, int n_levels, double tick) {
  if (static_cast<int>(path.projections.size()) < n_levels) {
    throw Error(ErrorKind::invalid_argument, "book writer: path lacks level projections");
  }
  out << "ts";
  for (int i = 1; i <= n_levels; ++i) out << ",bp" << i;
  for (int i = 1; i <= n_levels; ++i) out << ",bs" << i;
  for (int i = 1; i <= n_levels; ++i) out << ",ap" << i;
  for (int i = 1; i <= n_levels; ++i) out << ",as" << i;
  out << "\n";
  char buf[64];
  for (std::size_t k = 0; k < path.B.size(); ++k) {
    out << k;
    double b = path.B[k];
    for (int i = 1; i <= n_levels; ++i) {
      std::snprintf(buf, sizeof(buf), ",%.10g", b - (i - 1) * tick);
      out << buf;
    }
    for (int i = 1; i <= n_levels; ++i) {
      std::snprintf(buf, sizeof(buf), ",%.10g", path.projections[static_cast<std::size_t>(i - 1)].u_phi[k]);
      out << buf;
    }
    for (int i = 1; i <= n_levels; ++i) {
      std::snprintf(buf, sizeof(buf), ",%.10g", b + i * tick);
      out << buf;
    }
    for (int i = 1; i <= n_levels; ++i) out << ",1";
    out << "\n";
  }
}

}  // namespace lobflux
