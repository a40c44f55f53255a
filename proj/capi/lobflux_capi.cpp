#include "lobflux.h"

#include <cstdlib>
#include <cstring>
#include <string>

#include "lobflux/config.hpp"
#include "lobflux/grid.hpp"
#include "lobflux/pipelines.hpp"
#include "lobflux/second_order.hpp"
#include "lobflux/version.hpp"

namespace {

thread_local std::string g_last_error;

lf_status status_of(const lobflux::Error& e) {
  switch (e.kind()) {
    case lobflux::ErrorKind::invalid_argument: return LF_ERR_INVALID_ARGUMENT;
    case lobflux::ErrorKind::validation: return LF_ERR_VALIDATION;
    case lobflux::ErrorKind::infeasible: return LF_ERR_INFEASIBLE;
    case lobflux::ErrorKind::io: return LF_ERR_IO;
    case lobflux::ErrorKind::numeric: return LF_ERR_RUNTIME;
  }
  return LF_ERR_RUNTIME;
}

template <typename Fn>
lf_status guarded(Fn&& fn) {
  try {
    return fn();
  } catch (const lobflux::Error& e) {
    g_last_error = e.what();
    return status_of(e);
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return LF_ERR_RUNTIME;
  } catch (...) {
    g_last_error = "unknown error";
    return LF_ERR_RUNTIME;
  }
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out) std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

}  // namespace

struct lf_config {
  lobflux::Config cfg;
};

struct lf_density {
  lobflux::StepDensity d;
};

extern "C" {

const char* lf_version(void) { return lobflux::kVersion; }

const char* lf_last_error(void) { return g_last_error.c_str(); }

lf_status lf_config_load(const char* path, lf_config** out) {
  if (!path || !out) {
    g_last_error = "null argument";
    return LF_ERR_INVALID_ARGUMENT;
  }
  return guarded([&] {
    *out = new lf_config{lobflux::Config::parse_file(path)};
    return LF_OK;
  });
}

lf_status lf_config_parse(const char* text, lf_config** out) {
  if (!text || !out) {
    g_last_error = "null argument";
    return LF_ERR_INVALID_ARGUMENT;
  }
  return guarded([&] {
    *out = new lf_config{lobflux::Config::parse(text)};
    return LF_OK;
  });
}

lf_status lf_config_set(lf_config* cfg, const char* dotted_key, const char* value) {
  if (!cfg || !dotted_key || !value) {
    g_last_error = "null argument";
    return LF_ERR_INVALID_ARGUMENT;
  }
  return guarded([&] {
    cfg->cfg.set(dotted_key, value);
    return LF_OK;
  });
}

void lf_config_free(lf_config* cfg) { delete cfg; }

lf_status lf_run(const lf_config* cfg, const char* subcommand, const char* out_dir,
                 char** error_json_out) {
  if (!cfg || !subcommand || !out_dir) {
    g_last_error = "null argument";
    return LF_ERR_INVALID_ARGUMENT;
  }
  if (error_json_out) *error_json_out = nullptr;
  return guarded([&] {
    std::string err;
    int code = lobflux::run_subcommand(subcommand, cfg->cfg, out_dir, &err);
    if (code == 0) return LF_OK;
    g_last_error = err.empty() ? "run failed" : err;
    if (error_json_out && !err.empty()) *error_json_out = dup_string(err);
    return code == 1 ? LF_ERR_VALIDATION : LF_ERR_RUNTIME;
  });
}

void lf_string_free(char* s) { std::free(s); }

lf_status lf_density_create(double delta, double half_width, const double* values,
                            size_t n_values, lf_density** out) {
  if (!out || (!values && n_values > 0)) {
    g_last_error = "null argument";
    return LF_ERR_INVALID_ARGUMENT;
  }
  return guarded([&] {
    lobflux::TickGrid grid = lobflux::TickGrid::make(delta, half_width);
    if (n_values != static_cast<size_t>(grid.n_cells)) {
      throw lobflux::Error(lobflux::ErrorKind::invalid_argument,
                           "density: expected " + std::to_string(grid.n_cells) + " values");
    }
    std::vector<double> v(values, values + n_values);
    *out = new lf_density{lobflux::StepDensity(grid, std::move(v))};
    return LF_OK;
  });
}

size_t lf_density_size(const lf_density* d) {
  return d ? d->d.values.size() : 0;
}

lf_status lf_density_values(const lf_density* d, double* buffer, size_t n) {
  if (!d || !buffer) {
    g_last_error = "null argument";
    return LF_ERR_INVALID_ARGUMENT;
  }
  if (n < d->d.values.size()) {
    g_last_error = "buffer too small";
    return LF_ERR_INVALID_ARGUMENT;
  }
  std::memcpy(buffer, d->d.values.data(), d->d.values.size() * sizeof(double));
  return LF_OK;
}

lf_status lf_density_translate(const lf_density* d, int direction, lf_density** out,
                               double* dropped_mass) {
  if (!d || !out || (direction != 1 && direction != -1)) {
    g_last_error = "bad argument";
    return LF_ERR_INVALID_ARGUMENT;
  }
  return guarded([&] {
    double dropped = 0.0;
    lobflux::StepDensity r = lobflux::translate(
        d->d, direction == 1 ? lobflux::Shift::plus : lobflux::Shift::minus, &dropped);
    if (dropped_mass) *dropped_mass = dropped;
    *out = new lf_density{std::move(r)};
    return LF_OK;
  });
}

lf_status lf_density_finite_diff(const lf_density* d, int side, lf_density** out) {
  if (!d || !out || (side != 1 && side != -1)) {
    g_last_error = "bad argument";
    return LF_ERR_INVALID_ARGUMENT;
  }
  return guarded([&] {
    lobflux::StepDensity r = lobflux::finite_diff(
        d->d, side == 1 ? lobflux::DiffSide::plus : lobflux::DiffSide::minus);
    *out = new lf_density{std::move(r)};
    return LF_OK;
  });
}

lf_status lf_density_inner_product(const lf_density* d, lf_test_function phi, void* ctx,
                                   double* out) {
  if (!d || !phi || !out) {
    g_last_error = "null argument";
    return LF_ERR_INVALID_ARGUMENT;
  }
  return guarded([&] {
    *out = lobflux::inner_product(d->d, [phi, ctx](double x) { return phi(x, ctx); });
    return LF_OK;
  });
}

lf_status lf_density_mass(const lf_density* d, double* out) {
  if (!d || !out) {
    g_last_error = "null argument";
    return LF_ERR_INVALID_ARGUMENT;
  }
  *out = d->d.mass();
  return LF_OK;
}

void lf_density_free(lf_density* d) { delete d; }

lf_status lf_simplified_covariance(const lf_config* cfg, double t, double* var_zb,
                                   double* var_zy, double* cov, double* rho) {
  if (!cfg) {
    g_last_error = "null argument";
    return LF_ERR_INVALID_ARGUMENT;
  }
  return guarded([&] {
    lobflux::RunContext ctx = lobflux::build_context(cfg->cfg);
    if (!ctx.model.coeffs) {
      throw lobflux::Error(lobflux::ErrorKind::validation,
                           "simplified covariance requires a coefficient model");
    }
    double y0 = lobflux::inner_product(ctx.init.u0, ctx.model.indicator.h);
    int top_cell = ctx.grid.cell_index(-0.5 * ctx.grid.delta);
    double u_top0 = ctx.init.u0.values[static_cast<std::size_t>(top_cell)];
    lobflux::SimplifiedModel model =
        lobflux::make_simplified_from_coeffs(*ctx.model.coeffs, y0, u_top0, t);
    lobflux::SimplifiedCovariance sc = lobflux::simplified_covariance(model, t, 2000);
    if (var_zb) *var_zb = sc.var_ZB;
    if (var_zy) *var_zy = sc.var_ZY;
    if (cov) *cov = sc.cov;
    if (rho) *rho = sc.rho;
    return LF_OK;
  });
}

}  // extern "C"
