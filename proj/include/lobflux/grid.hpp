#pragma once

#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace lobflux {

enum class ErrorKind { invalid_argument, validation, infeasible, io, numeric };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

// Real-valued test function with an optional analytic derivative. Smoothness
// is asserted by the caller, not checked.
struct TestFunction {
  std::function<double(double)> f;
  std::function<double(double)> deriv;  // may be empty
  std::string label;

  double operator()(double x) const { return f(x); }
};

// Uniform tick grid on [-L, L]. Cell with array index a covers
// (x_a, x_a + delta] with x_a = -L + a*delta; array index 0 starts at -L.
// Construction requires L to be an integer multiple of delta so that 0 is a
// cell edge (the lattice x_j = j*delta of the caglad convention).
struct TickGrid {
  double delta = 0.0;
  double half_width = 0.0;
  int n_cells = 0;

  static TickGrid make(double delta, double half_width);

  double x_left(int a) const { return -half_width + a * delta; }
  double x_right(int a) const { return -half_width + (a + 1) * delta; }
  double x_center(int a) const { return -half_width + (a + 0.5) * delta; }

  // Array index of the cell (x_a, x_a+delta] containing x; left-open,
  // right-closed. Throws on x <= -L or x > L.
  int cell_index(double x) const;

  // Paper-style lattice index j of array cell a: cell (j*delta, (j+1)*delta].
  int lattice_of(int a) const { return a - n_cells / 2; }
  int array_of_lattice(int j) const { return j + n_cells / 2; }

  bool operator==(const TickGrid& o) const {
    return delta == o.delta && half_width == o.half_width && n_cells == o.n_cells;
  }
};

// Caglad step density on a tick grid; values are densities (volume per price
// unit), one per cell. Values may be negative: cancellations and fluctuation
// profiles are signed. Non-negativity is only an assumption on initial book
// states and second-moment fields, checked where required.
struct StepDensity {
  TickGrid grid;
  std::vector<double> values;

  StepDensity() = default;
  explicit StepDensity(const TickGrid& g) : grid(g), values(static_cast<std::size_t>(g.n_cells), 0.0) {}
  StepDensity(const TickGrid& g, std::vector<double> v);

  double mass() const;                   // sum v_j * delta
  double l2_norm_sq() const;             // sum v_j^2 * delta
  double l2_norm() const;
  double sup_norm() const;
  // [lo, hi] array-index range of nonzero cells; {-1,-1} when identically 0.
  std::pair<int, int> support() const;
};

enum class Shift { plus, minus };   // T_+ f = f(. + delta), T_- f = f(. - delta)
enum class DiffSide { plus, minus };

// One-tick translation with zero-fill at the vacated boundary cell. Mass
// shifted past +-L is dropped and reported through `dropped_mass` when given.
StepDensity translate(const StepDensity& d, Shift dir, double* dropped_mass = nullptr);

// Forward/backward finite difference: plus -> (T_+ d - d)/delta,
// minus -> (d - T_- d)/delta, with zero beyond the boundary.
StepDensity finite_diff(const StepDensity& d, DiffSide side);

// <d, phi> = sum_j v_j * int_{cell j} phi, per-cell 5-point Gauss-Legendre.
double inner_product(const StepDensity& d, const TestFunction& phi);
double inner_product(const StepDensity& d, const std::function<double(double)>& phi);

// Step function of per-cell integrals of phi (integrals, not means): the
// discrete cell-average [phi]_n.
StepDensity cell_average(const std::function<double(double)>& phi, const TickGrid& grid);

// Per-cell integrals of phi as a plain vector (same numbers as cell_average).
std::vector<double> cell_integrals(const std::function<double(double)>& phi, const TickGrid& grid);

// 5-point Gauss-Legendre integral of phi over [a, b].
double gauss_legendre(const std::function<double(double)>& phi, double a, double b);

// Serialization per the external interface: CSV with header `x_left,value`,
// and JSON object {delta, half_width, values}.
std::string to_csv(const StepDensity& d);
std::string to_json(const StepDensity& d);
StepDensity density_from_json(const std::string& text);

}  // namespace lobflux
