#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hjlab/effective.hpp"
#include "hjlab/env.hpp"
#include "hjlab/gclass.hpp"
#include "hjlab/pde.hpp"

namespace hjlab::experiment {

struct TolerancePack {
    double solver_tol = 1e-6;
    double pin_tol = 1e-8;
    double cross_route_tol = 5e-2;
    double stderr_max = 1e-3;  // gate for accepting a ThetaSample into the curve
};

struct ExperimentConfig {
    env::EnvConfig environment;
    double domain_x0 = 0.0;
    double domain_x_end = 1.0;
    double env_dx = 1e-3;
    std::vector<std::uint64_t> seeds{1};

    gclass::NonlinearitySpec nonlinearity = gclass::NonlinearitySpec::power_plus_linear(2.0, 1.0, 1.0, 2.0);
    double beta = 0.0;
    std::vector<double> lambda_grid;
    std::vector<double> theta_grid;

    pde::SchemeConfig scheme;
    corrector::SolverOptions solver;
    TolerancePack tolerances;

    double hill_h = 0.5;
    double hill_y = 1.0;
    double glue_epsilon = 0.1;
    double glue_y0 = 2.0;

    std::string output_dir = "out";
    int parallelism = 0;  // 0: hardware concurrency
};

struct ReportRow {
    double theta = 0.0;
    double h_corrector = 0.0;
    double h_pde_fitted = 0.0;
    double h_pde_lower = 0.0;
    double h_pde_upper = 0.0;
    double abs_gap = 0.0;
    bool pass = false;
    std::string profile_path;  // provenance: nearest corrector artifacts
    std::string trace_path;
};

struct ComparisonReport {
    std::vector<ReportRow> rows;
    double max_gap = 0.0;
    double flat_lo = 0.0, flat_hi = 0.0;
    double sandwich_worst_margin = 0.0;
    bool sandwich_pass = true;
    bool hill_found = false;
    env::HillWitness hill;
    bool pass = true;
};

// JSON round trip for declarative configs (dotted-path overrides applied on top).
ExperimentConfig load_config(const std::string& path,
                             const std::vector<std::string>& overrides = {});
ExperimentConfig parse_config(const std::string& json_text,
                              const std::vector<std::string>& overrides = {});

// Runs the full pipeline (environments, corrector route over the lambda grid,
// curve, pde route over the theta grid, hill check, glue when beta > 0) into
// output_dir; every artifact gets a JSON sidecar and the manifest indexes them.
// Deterministic per config: reruns produce byte-identical files.
ComparisonReport run_experiment(const ExperimentConfig& config);

}  // namespace hjlab::experiment
