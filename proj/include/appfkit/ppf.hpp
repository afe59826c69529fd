#pragma once

#include <json.hpp>

#include "appfkit/npfs.hpp"
#include "appfkit/rom.hpp"
#include "appfkit/sampling.hpp"

namespace appfkit {

enum class SolvePath { rms_only, rms_then_npfs, npfs_only };

const char* to_string(SolvePath p);
SolvePath solve_path_from_string(const std::string& s);

/// Per-sample solve provenance.
struct RunRecord {
    int sample_index = 0;
    SolvePath path = SolvePath::npfs_only;
    int rms_iters = 0;
    int newton_iters = 0;
    bool expanded_basis = false;
    int q_after = 0;
    double wall_time_s = 0.0;  // excluded from determinism comparisons
    double final_residual_inf = 0.0;

    nlohmann::json to_json() const;
    static RunRecord from_json(const nlohmann::json& j);
    /// Equality over the deterministic fields (wall time excluded).
    bool same_outcome(const RunRecord& other) const;
};

struct PpfResult {
    Eigen::MatrixXd solutions;  // 2n x M, polar [V; theta] per sample column
    std::vector<RunRecord> records;
    nlohmann::json config_echo;
    int rom_final_q = 0;
    double setup_time_s = 0.0;
    double total_time_s = 0.0;
    /// Wall time split by phase (factorization / nominal solve / model init /
    /// reduced solves / full-order solves / expansions).
    nlohmann::json phase_times;
};

struct PpfOptions {
    NpfsConfig npfs;
    RomConfig rom;
    int workers = 1;  // baseline fan-out only; never affects solution values
    nlohmann::json config_echo;
};

/// Accelerated run: reduced solve first, full-order fallback, dynamic basis
/// expansion. Strictly sequential over samples (the model mutates).
/// A sample the full-order solver cannot converge aborts the run.
PpfResult appf_run(const NetworkModel& net, const std::vector<LoadProfile>& samples,
                   const PpfOptions& opt);

/// Variant that reuses a prepared model (e.g. restored from a checkpoint).
PpfResult appf_run(const NetworkModel& net, const std::vector<LoadProfile>& samples,
                   const PpfOptions& opt, ReducedModel& rm, const LdlFactors& factors);

/// Full Newton baseline with a direct sparse solve of the polar Jacobian at
/// every iteration; warm-starts each sample from the previous solution.
PpfResult traditional_ppf_run(const NetworkModel& net,
                              const std::vector<LoadProfile>& samples,
                              const PpfOptions& opt);

struct ComparisonReport {
    int samples = 0;
    double max_abs_dv = 0.0;               // over all samples and nodes
    std::vector<double> per_sample_max_dv;
    double residual_max_a = 0.0;
    double residual_max_b = 0.0;
    bool residuals_ok = false;             // both runs within eps everywhere
    double wall_ratio_total = 0.0;         // b.total / a.total
    double steady_state_ratio = 0.0;       // b mean per-sample / a mean over rms_only
    double a_rms_only_mean_s = 0.0;
    double b_mean_sample_s = 0.0;
    int a_rms_only_count = 0;
    int a_expansions = 0;

    nlohmann::json to_json() const;
};

/// Cross-checks two runs over the same samples; mismatched sample counts or
/// state dimensions are rejected.
ComparisonReport compare(const PpfResult& a, const PpfResult& b, double eps_newton);

/// Result bundle I/O: solutions.csv + records.jsonl + config.json in a directory.
void write_result(const PpfResult& result, const std::string& dir);
PpfResult read_result(const std::string& dir);

} // namespace appfkit
