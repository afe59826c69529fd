#pragma once

#include <limits>
#include <optional>
#include <utility>

#include "appfkit/pfcore.hpp"
#include "appfkit/sparla.hpp"

namespace appfkit {

/// Update policy for the perturbation diagonal across Newton iterations
/// (quasi-Newton knob: full, frozen, or periodic refresh).
enum class DUpdatePolicy { full, frozen, every_m };

struct NpfsConfig {
    double eps_newton = 1e-4;     // infinity-norm mismatch tolerance
    int k_neumann = 3;            // truncation order of the series
    int max_newton_iters = 30;
    DUpdatePolicy d_update_policy = DUpdatePolicy::full;
    int d_update_period = 2;      // used by every_m
    bool check_margin = false;
};

struct SolveStats {
    int newton_iters = 0;
    int neumann_terms_per_iter = 0;
    double final_residual_inf = std::numeric_limits<double>::infinity();
    double wall_time_s = 0.0;
    bool converged = false;
    std::optional<double> margin;  // filled when check_margin is set
    int guard_truncations = 0;     // series guard fallbacks taken
};

/// Per-call diagnostics of a truncated-series solve.
struct NeumannReport {
    int terms_used = 0;            // correction terms added beyond the base solve
    bool truncated = false;        // growth guard tripped
    std::vector<double> term_norms;
    Vector base_solution;          // the k = 0 solve, kept for guard fallback
};

/// Factor the constant real expansion of the reduced Y-bus once; the factors
/// are shared across all samples and all Newton steps.
LdlFactors prepare(const NetworkModel& net);

/// Truncated alternating series for (LU + D) y = b over pre-factored LU,
/// where D is the per-bus complex diagonal d_diag in real block form.
/// k = 0 returns the plain factored solve. If a term's norm stops
/// decreasing, the sum is truncated at the last good term and flagged.
Vector neumann_apply(const LdlFactors& f, const ComplexVector& d_diag,
                     const Vector& rhs, int k, NeumannReport* report = nullptr);

/// Full-order Newton solve with series-approximated inner systems.
/// Non-convergence is reported through the stats, not thrown.
std::pair<VoltageState, SolveStats> npfs_solve(const LdlFactors& f,
                                               const NetworkModel& net,
                                               const LoadProfile& s_spec,
                                               const VoltageState& x0,
                                               const NpfsConfig& cfg);

struct MarginReport {
    double ratio = std::numeric_limits<double>::infinity();
    double rho_estimate = 0.0;
    double max_scaled_current = 0.0;  // max_i |I_i| / |V_i|
    bool exact_line_matrix = false;   // true when the shunt diagonal was available
};

/// Series convergence margin at a state: spectral radius of the line-only
/// admittance over the largest voltage-scaled load current. Healthy feeders
/// sit several orders of magnitude above 1; below ~10 the series is at risk.
/// Returns +inf when all currents vanish.
MarginReport convergence_margin_report(const NetworkModel& net, const VoltageState& vs);
double convergence_margin(const NetworkModel& net, const VoltageState& vs);

} // namespace appfkit
