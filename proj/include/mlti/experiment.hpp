#pragma once

// Experiment driver shared by the command-line tool and the tests: builds a
// named problem from a config, runs one pipeline, and writes deterministic
// CSV/JSON artifacts. Given the same config and seed the bytes on disk are
// identical across runs (timings can be suppressed for that purpose).

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "mlti/system.hpp"
#include "mlti/tensor.hpp"

namespace mlti
{

struct ExperimentConfig
{
    // problem selection
    std::string problem = "spdiags"; // spdiags | heat2d | randsparse | identity-perturbed
    Index n1 = 32, n2 = 32;          // state extents
    Index k1 = 3, k2 = 5;            // input/output extents
    std::uint64_t seed = 1;

    // solver / reduction controls
    std::string method = "ext-global"; // classic-global | classic-block | ext-global | ext-block
    int m_max = 30;
    double eps = 1e-6;
    double dtol = -1.0;
    int reduce_order = 5;
    int grid_size = 200;

    // problem parameters
    double spectral_target = 0.9; // stable rescale target where applicable; <= 0 keeps raw values
    double density = 0.05;        // randsparse / identity perturbation density
    double perturb_scale = 0.1;   // identity-perturbed Gaussian scale
    double spdiags_diag = 1.0;    // banded operator diagonal values before scaling
    double spdiags_super1 = -0.5;
    double spdiags_super2 = 0.25;
    bool spdiags_alternating = false; // flip the main diagonal sign on every other index
    double heat_c = 1.0;
    double heat_dt = 1e-4;
    double heat_h = -1.0; // <= 0 selects 1/(n+1)
    bool heat_euler = true;
    std::string rhs_kind = "sparse"; // sparse | dense

    // balanced truncation
    int bt_order = -1; // < 1 selects the tolerance rule
    double bt_tol = 1e-8;

    // benchmarking
    std::vector<Index> bench_sizes = {32, 64, 128};
    int bench_repeats = 3;
    bool record_timing = true;
};

ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const ExperimentConfig& cfg);
ExperimentConfig load_config(const std::filesystem::path& path);

// FNV-1a 64-bit hash of the canonical JSON form, as 16 hex digits. Embedded
// in every artifact so outputs can be traced back to their exact config.
std::string config_hash(const ExperimentConfig& cfg);

struct Problem
{
    Tensor4d a, b, c;
};

// Instantiate the operator and right-hand sides named by the config.
Problem build_problem(const ExperimentConfig& cfg);

struct RunResult
{
    int exit_code = 0; // 0 success, 1 input error, 2 non-convergence
    nlohmann::json report;
    std::vector<std::string> files; // artifact paths written under out_dir
};

// Pipelines: gen, lyap, reduce, bt, freqresp, bench. Throws Error or
// std::invalid_argument on unusable input; the CLI maps that to exit 1.
RunResult run_experiment(const ExperimentConfig& cfg, const std::string& pipeline,
                         const std::filesystem::path& out_dir);

} // namespace mlti
