#pragma once

#include <string>

#include "lobflux/config.hpp"
#include "lobflux/first_order.hpp"
#include "lobflux/microsim.hpp"
#include "lobflux/params.hpp"

namespace lobflux {

// Grid, model, and initial state assembled from a run configuration.
struct RunContext {
  TickGrid grid;
  Model model;
  InitialState init;
};

RunContext build_context(const Config& cfg);

// Executes one CLI subcommand end to end: validates the config, runs the
// module pipeline, and writes the artifacts plus resolved_config.ini,
// versions.txt and report.json into out_dir.
// Exit status: 0 success, 1 validation failure, 2 runtime error.
int run_subcommand(const std::string& subcommand, Config cfg, const std::string& out_dir,
                   std::string* error_json = nullptr);

inline constexpr const char* kSubcommands[] = {
    "simulate", "first-order", "fluctuations", "second-order",
    "calibrate", "correlate", "convergence-study", "validate"};

}  // namespace lobflux
