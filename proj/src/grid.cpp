#include "lobflux/grid.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "json.hpp"

namespace lobflux {

namespace {

// 5-point Gauss-Legendre nodes/weights on [-1, 1]; exact through degree 9.
constexpr double kGlNode[5] = {
    -0.9061798459386639928, -0.5384693101056830910, 0.0,
    0.5384693101056830910, 0.9061798459386639928};
constexpr double kGlWeight[5] = {
    0.2369268850561890875, 0.4786286704993664681, 0.5688888888888888889,
    0.4786286704993664681, 0.2369268850561890875};

}  // namespace

TickGrid TickGrid::make(double delta, double half_width) {
  if (!(delta > 0.0)) throw Error(ErrorKind::invalid_argument, "grid: delta must be > 0");
  if (!(half_width > 0.0)) throw Error(ErrorKind::invalid_argument, "grid: half_width must be > 0");
  double ratio = half_width / delta;
  double rounded = std::round(ratio);
  if (std::abs(ratio - rounded) > 1e-9 * std::max(1.0, ratio) || rounded < 1.0) {
    throw Error(ErrorKind::invalid_argument,
                "grid: half_width must be an integer multiple of delta (0 must be a cell edge)");
  }
  TickGrid g;
  g.delta = delta;
  g.half_width = half_width;
  g.n_cells = 2 * static_cast<int>(rounded);
  return g;
}

int TickGrid::cell_index(double x) const {
  // Inputs within one relative ulp-scale of a lattice edge are snapped to it,
  // so both float spellings of an edge land in the same (left) cell.
  double q = (x + half_width) / delta;
  double r = std::round(q);
  int a;
  if (std::abs(q - r) <= 1e-9 * std::max(1.0, std::abs(q))) {
    a = static_cast<int>(r) - 1;
  } else {
    a = static_cast<int>(std::floor(q));
  }
  if (a < 0 || a >= n_cells) {
    throw Error(ErrorKind::invalid_argument,
                "grid: x outside (-L, L], x = " + std::to_string(x));
  }
  return a;
}

StepDensity::StepDensity(const TickGrid& g, std::vector<double> v) : grid(g), values(std::move(v)) {
  if (static_cast<int>(values.size()) != g.n_cells) {
    throw Error(ErrorKind::invalid_argument, "density: values length must equal n_cells");
  }
}

double StepDensity::mass() const {
  double s = 0.0;
  for (double v : values) s += v;
  return s * grid.delta;
}

double StepDensity::l2_norm_sq() const {
  double s = 0.0;
  for (double v : values) s += v * v;
  return s * grid.delta;
}

double StepDensity::l2_norm() const { return std::sqrt(l2_norm_sq()); }

double StepDensity::sup_norm() const {
  double s = 0.0;
  for (double v : values) s = std::max(s, std::abs(v));
  return s;
}

std::pair<int, int> StepDensity::support() const {
  int lo = -1, hi = -1;
  for (int a = 0; a < static_cast<int>(values.size()); ++a) {
    if (values[a] != 0.0) {
      if (lo < 0) lo = a;
      hi = a;
    }
  }
  return {lo, hi};
}

StepDensity translate(const StepDensity& d, Shift dir, double* dropped_mass) {
  const int n = d.grid.n_cells;
  StepDensity out(d.grid);
  double dropped = 0.0;
  if (dir == Shift::plus) {
    // T_+ d = d(. + delta): graph moves left, cell 0 content exits at -L.
    dropped = d.values[0] * d.grid.delta;
    for (int a = 0; a + 1 < n; ++a) out.values[a] = d.values[a + 1];
    out.values[n - 1] = 0.0;
  } else {
    // T_- d = d(. - delta): graph moves right, last cell content exits at +L.
    dropped = d.values[n - 1] * d.grid.delta;
    for (int a = n - 1; a >= 1; --a) out.values[a] = d.values[a - 1];
    out.values[0] = 0.0;
  }
  if (dropped_mass) *dropped_mass += dropped;
  return out;
}

StepDensity finite_diff(const StepDensity& d, DiffSide side) {
  const int n = d.grid.n_cells;
  const double inv = 1.0 / d.grid.delta;
  StepDensity out(d.grid);
  if (side == DiffSide::plus) {
    for (int a = 0; a < n; ++a) {
      double up = (a + 1 < n) ? d.values[a + 1] : 0.0;
      out.values[a] = (up - d.values[a]) * inv;
    }
  } else {
    for (int a = 0; a < n; ++a) {
      double dn = (a >= 1) ? d.values[a - 1] : 0.0;
      out.values[a] = (d.values[a] - dn) * inv;
    }
  }
  return out;
}

double gauss_legendre(const std::function<double(double)>& phi, double a, double b) {
  const double mid = 0.5 * (a + b);
  const double hw = 0.5 * (b - a);
  double s = 0.0;
  for (int i = 0; i < 5; ++i) s += kGlWeight[i] * phi(mid + hw * kGlNode[i]);
  return s * hw;
}

std::vector<double> cell_integrals(const std::function<double(double)>& phi, const TickGrid& grid) {
  std::vector<double> out(static_cast<std::size_t>(grid.n_cells));
  for (int a = 0; a < grid.n_cells; ++a) out[a] = gauss_legendre(phi, grid.x_left(a), grid.x_right(a));
  return out;
}

StepDensity cell_average(const std::function<double(double)>& phi, const TickGrid& grid) {
  return StepDensity(grid, cell_integrals(phi, grid));
}

double inner_product(const StepDensity& d, const std::function<double(double)>& phi) {
  double s = 0.0;
  for (int a = 0; a < d.grid.n_cells; ++a) {
    if (d.values[a] != 0.0) s += d.values[a] * gauss_legendre(phi, d.grid.x_left(a), d.grid.x_right(a));
  }
  return s;
}

double inner_product(const StepDensity& d, const TestFunction& phi) {
  return inner_product(d, phi.f);
}

std::string to_csv(const StepDensity& d) {
  std::ostringstream os;
  os << "x_left,value\n";
  char buf[64];
  for (int a = 0; a < d.grid.n_cells; ++a) {
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g\n", d.grid.x_left(a), d.values[a]);
    os << buf;
  }
  return os.str();
}

std::string to_json(const StepDensity& d) {
  nlohmann::json j;
  j["delta"] = d.grid.delta;
  j["half_width"] = d.grid.half_width;
  j["values"] = d.values;
  return j.dump();
}

StepDensity density_from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  TickGrid g = TickGrid::make(j.at("delta").get<double>(), j.at("half_width").get<double>());
  return StepDensity(g, j.at("values").get<std::vector<double>>());
}

}  // namespace lobflux
