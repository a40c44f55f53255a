#pragma once

#include <atomic>
#include <cmath>
#include <cstddef>
#include <functional>
#include <thread>
#include <vector>

namespace lobflux {

// Runs fn(i) for i in [0, n) on up to n_threads workers; results land in a
// vector indexed by i, so the outcome does not depend on scheduling.
template <typename Row>
std::vector<Row> parallel_rows(int n, int n_threads, const std::function<Row(int)>& fn) {
  std::vector<Row> rows(static_cast<std::size_t>(n));
  if (n_threads <= 1 || n <= 1) {
    for (int i = 0; i < n; ++i) rows[static_cast<std::size_t>(i)] = fn(i);
    return rows;
  }
  std::atomic<int> next{0};
  std::exception_ptr first_error = nullptr;
  std::atomic<bool> failed{false};
  auto worker = [&]() {
    for (;;) {
      int i = next.fetch_add(1, std::memory_order_relaxed);
      if (i >= n || failed.load(std::memory_order_relaxed)) return;
      try {
        rows[static_cast<std::size_t>(i)] = fn(i);
      } catch (...) {
        if (!failed.exchange(true)) first_error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  int workers = std::min(n_threads, n);
  pool.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
  return rows;
}

// Fixed-shape pairwise sum over rows[i][col]; deterministic and accurate.
inline double pairwise_sum(const std::vector<double>& x, std::size_t lo, std::size_t hi) {
  if (hi - lo <= 8) {
    double s = 0.0;
    for (std::size_t i = lo; i < hi; ++i) s += x[i];
    return s;
  }
  std::size_t mid = lo + (hi - lo) / 2;
  return pairwise_sum(x, lo, mid) + pairwise_sum(x, mid, hi);
}

inline double pairwise_sum(const std::vector<double>& x) { return pairwise_sum(x, 0, x.size()); }

struct MeanVar {
  double mean = 0.0;
  double var = 0.0;  // unbiased (n-1 denominator)
};

inline MeanVar pairwise_mean_var(const std::vector<double>& x) {
  const std::size_t n = x.size();
  if (n == 0) return {};
  double mean = pairwise_sum(x) / static_cast<double>(n);
  if (n == 1) return {mean, 0.0};
  std::vector<double> sq(n);
  for (std::size_t i = 0; i < n; ++i) {
    double d = x[i] - mean;
    sq[i] = d * d;
  }
  return {mean, pairwise_sum(sq) / static_cast<double>(n - 1)};
}

inline double pairwise_cov(const std::vector<double>& x, const std::vector<double>& y,
                           double mean_x, double mean_y) {
  const std::size_t n = x.size();
  if (n < 2) return 0.0;
  std::vector<double> p(n);
  for (std::size_t i = 0; i < n; ++i) p[i] = (x[i] - mean_x) * (y[i] - mean_y);
  return pairwise_sum(p) / static_cast<double>(n - 1);
}

// Bivariate sample moments with Monte Carlo standard errors for the variance
// and covariance estimates (fourth/mixed central moments).
struct BivarStats {
  double mean_x = 0.0, mean_y = 0.0;
  double var_x = 0.0, var_y = 0.0, cov = 0.0, corr = 0.0;
  double se_var_x = 0.0, se_var_y = 0.0, se_cov = 0.0;
};

inline BivarStats bivar_stats(const std::vector<double>& x, const std::vector<double>& y) {
  BivarStats s;
  const std::size_t n = x.size();
  if (n == 0) return s;
  MeanVar mx = pairwise_mean_var(x);
  MeanVar my = pairwise_mean_var(y);
  s.mean_x = mx.mean;
  s.mean_y = my.mean;
  s.var_x = mx.var;
  s.var_y = my.var;
  s.cov = pairwise_cov(x, y, mx.mean, my.mean);
  double denom = std::sqrt(s.var_x > 0 && s.var_y > 0 ? s.var_x * s.var_y : 0.0);
  s.corr = denom > 0.0 ? s.cov / denom : 0.0;
  std::vector<double> tmp(n);
  for (std::size_t i = 0; i < n; ++i) {
    double d = x[i] - mx.mean;
    tmp[i] = d * d * d * d;
  }
  double m4x = pairwise_sum(tmp) / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    double d = y[i] - my.mean;
    tmp[i] = d * d * d * d;
  }
  double m4y = pairwise_sum(tmp) / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    double dx = x[i] - mx.mean, dy = y[i] - my.mean;
    tmp[i] = dx * dx * dy * dy;
  }
  double m22 = pairwise_sum(tmp) / static_cast<double>(n);
  double dn = static_cast<double>(n);
  s.se_var_x = std::sqrt(std::max(m4x - s.var_x * s.var_x, 0.0) / dn);
  s.se_var_y = std::sqrt(std::max(m4y - s.var_y * s.var_y, 0.0) / dn);
  s.se_cov = std::sqrt(std::max(m22 - s.cov * s.cov, 0.0) / dn);
  return s;
}

}  // namespace lobflux
