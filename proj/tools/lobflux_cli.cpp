// lobflux command-line interface; the binary links only the public C API.
#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "lobflux.h"

namespace {

struct ConfigDeleter {
  void operator()(lf_config* c) const { lf_config_free(c); }
};
using ConfigPtr = std::unique_ptr<lf_config, ConfigDeleter>;

int fail(lf_status st) {
  std::fprintf(stderr, "{\"error\": \"%s\", \"code\": %d}\n", lf_last_error(), static_cast<int>(st));
  return st == LF_ERR_VALIDATION ? 1 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"lobflux: limit order book scaling-limit toolkit"};
  app.set_version_flag("--version", std::string(lf_version()));
  app.require_subcommand(1);

  struct Common {
    std::string config;
    std::string out = "out";
    std::vector<std::string> sets;
  };

  struct SubSpec {
    const char* name;
    const char* desc;
  };
  const SubSpec subs[] = {
      {"simulate", "run the discrete order book simulator"},
      {"first-order", "solve the deterministic ODE-PDE limit"},
      {"fluctuations", "rescaled fluctuations and martingale diagnostics"},
      {"second-order", "Gaussian limit simulators (simplified or spectral)"},
      {"calibrate", "fit the aggregate regressions from snapshot data"},
      {"correlate", "windowed sample correlation against the model correlation"},
      {"convergence-study", "delta-ladder convergence checks"},
      {"validate", "run the model assumption validators"},
  };

  std::vector<std::shared_ptr<Common>> commons;
  std::vector<CLI::App*> apps;
  for (const auto& s : subs) {
    auto common = std::make_shared<Common>();
    CLI::App* sub = app.add_subcommand(s.name, s.desc);
    sub->add_option("--config", common->config, "run configuration file")->required();
    sub->add_option("--out", common->out, "output directory");
    sub->add_option("--set", common->sets, "override: section.key=value (repeatable)");
    if (std::string(s.name) == "fluctuations") {
      sub->add_option_function<std::string>(
          "--paths", [common](const std::string& v) { common->sets.push_back("fluctuations.paths_dir=" + v); },
          "directory of simulated paths");
      sub->add_option_function<std::string>(
          "--first-order", [common](const std::string& v) { common->sets.push_back("fluctuations.first_order_dir=" + v); },
          "directory of the first-order solution");
      sub->add_option_function<std::string>(
          "--test-fns", [common](const std::string& v) { common->sets.push_back("fluctuations.test_fns=" + v); },
          "test function spec, e.g. gauss:-0.3:0.1;cos:2");
    }
    if (std::string(s.name) == "second-order") {
      sub->add_option_function<std::string>(
          "--mode", [common](const std::string& v) { common->sets.push_back("second_order.mode=" + v); },
          "simplified | spectral");
      sub->add_option_function<std::string>(
          "--covariance-exponent",
          [common](const std::string& v) { common->sets.push_back("second_order.covariance_exponent=" + v); },
          "integral | literal");
    }
    commons.push_back(common);
    apps.push_back(sub);
  }

  CLI11_PARSE(app, argc, argv);

  for (std::size_t i = 0; i < apps.size(); ++i) {
    if (!apps[i]->parsed()) continue;
    const Common& c = *commons[i];
    lf_config* raw = nullptr;
    lf_status st = lf_config_load(c.config.c_str(), &raw);
    if (st != LF_OK) return fail(st);
    ConfigPtr cfg(raw);
    for (const auto& kv : c.sets) {
      std::size_t eq = kv.find('=');
      if (eq == std::string::npos) {
        std::fprintf(stderr, "{\"error\": \"--set expects section.key=value\", \"code\": 1}\n");
        return 1;
      }
      st = lf_config_set(cfg.get(), kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str());
      if (st != LF_OK) return fail(st);
    }
    char* err_json = nullptr;
    st = lf_run(cfg.get(), subs[i].name, c.out.c_str(), &err_json);
    if (st != LF_OK) {
      if (err_json) {
        std::fprintf(stderr, "%s\n", err_json);
        lf_string_free(err_json);
        return st == LF_ERR_VALIDATION ? 1 : 2;
      }
      return fail(st);
    }
    std::printf("%s: wrote %s\n", subs[i].name, c.out.c_str());
    return 0;
  }
  return 2;
}
