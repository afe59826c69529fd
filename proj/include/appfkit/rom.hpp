#pragma once

#include <Eigen/Cholesky>

#include "appfkit/pfcore.hpp"

namespace appfkit {

struct RomConfig {
    double eps_rms = 1e-5;    // reduced residual tolerance
    double eps_basis = 1e-4;  // expansion threshold on the residual direction
    int n_q = 37;             // quadratic curtailment bound
    int max_rms_iters = 50;
};

/// Reduced-order model of the power-flow residual around a nominal solution:
/// an orthonormal basis V (2n x q) with projected linear and quadratic
/// operators. Quadratic (Hessian) columns are kept only for the first
/// q_h = min(q, n_q) basis directions; later directions contribute linearly.
///
/// Kronecker column ordering is row-major over ordered pairs (i, j) in
/// {0..q_h-1}^2: column i*q_h + j holds the Hessian action on (V_i, V_j).
///
/// Single-owner mutable: rms_solve / dse_update calls must be serialized.
class ReducedModel {
public:
    int q() const { return static_cast<int>(basis_.cols()); }
    int q_h() const { return q_h_; }

    const Eigen::MatrixXd& basis() const { return basis_; }
    const Eigen::MatrixXd& j_hat() const { return j_hat_; }
    const Eigen::MatrixXd& g_hat() const { return g_hat_; }
    const Eigen::MatrixXd& h_v() const { return h_v_; }
    const Eigen::MatrixXd& h_hat() const { return h_hat_; }
    const Vector& s0_hat() const { return s0_hat_; }
    const Vector& delta_x_hat() const { return delta_x_hat_; }
    /// Reduced expansion point: (|x_c0|, 0, ..., 0).
    Vector x_c0_hat() const;

    const Vector& x_c0() const { return x_c0_; }
    const Vector& s0() const { return s0_; }
    const SparseReal& j_c0() const { return j_c0_; }
    const RomConfig& config() const { return cfg_; }

    /// S_hat = J_hat^T S for a stacked sample injection vector.
    Vector project_injections(const Vector& s_stacked) const;

private:
    friend ReducedModel rom_init(const NetworkModel&, const VoltageState&,
                                 const LoadProfile&, const RomConfig&);
    friend struct RmsAccess;

    Eigen::MatrixXd basis_;   // V, 2n x q, orthonormal
    Eigen::MatrixXd j_hat_;   // J_c0 V, 2n x q
    Eigen::MatrixXd g_hat_;   // J_hat^T J_hat, q x q
    Eigen::MatrixXd h_v_;     // Hessian action on basis pairs, 2n x q_h^2
    Eigen::MatrixXd h_hat_;   // J_hat^T h_v_, q x q_h^2
    Vector s0_hat_;           // J_hat^T s0
    Vector delta_x_hat_;      // warm-start reduced deviation
    Vector x_c0_;             // full Cartesian expansion point
    Vector s0_;               // injections at the expansion point
    SparseReal j_c0_;         // Cartesian Jacobian at the expansion point
    Eigen::LDLT<Eigen::MatrixXd> g_fact_;  // cached, refreshed on expansion
    int q_h_ = 0;
    RomConfig cfg_;
};

/// Build the q = 1 model from a converged nominal solution; s0 must be the
/// injection vector evaluated at x0.
ReducedModel rom_init(const NetworkModel& net, const VoltageState& x0,
                      const LoadProfile& s0, const RomConfig& cfg);

/// Reduced residual g_hat(delta) = s0_hat + G_hat delta
///   + 1/2 H_hat (delta_h (x) delta_h) - s_hat, where delta_h is the first
/// q_h components of delta.
Vector reduced_residual(const ReducedModel& rm, const Vector& delta, const Vector& s_hat);

struct RmsResult {
    Vector delta;
    VoltageState state;
    double full_residual_inf = 0.0;
    int iters = 0;
    bool reduced_converged = false;
};

/// Newton-like iteration on the reduced quadratic system with the recycled
/// G_hat; reconstructs the full state and reports the FULL-space mismatch
/// (driving the reduced residual to zero does not imply g = 0).
RmsResult rms_solve(ReducedModel& rm, const Vector& s_hat,
                    const NetworkModel& net, const LoadProfile& s_spec);

struct ExpansionReport {
    bool expanded = false;
    int q_after = 0;
    double residual_norm = 0.0;  // norm of the out-of-span component
};

/// Dynamic subspace expansion: append the normalized out-of-span component
/// of a full-order solution and border every projected operator.
ExpansionReport dse_update(ReducedModel& rm, const VoltageState& x_full,
                           const NetworkModel& net);

/// Checkpoint I/O (JSON container with dimensions + row-major arrays),
/// enabling warm restart across CLI invocations.
void save_rom_checkpoint(const ReducedModel& rm, const std::string& path);
ReducedModel load_rom_checkpoint(const std::string& path);

} // namespace appfkit
