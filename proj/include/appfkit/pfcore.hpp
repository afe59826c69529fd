#pragma once

#include "appfkit/netmodel.hpp"

namespace appfkit {

/// Network voltage profile over the reduced buses, kept simultaneously in
/// polar (V, theta) and Cartesian (Vr, Vi) views. One view is authoritative
/// at a time; the other is reconciled lazily. Accessors synchronize on
/// demand, which is an interior-mutability concern confined to a single
/// owner; states are not shared mutably across threads.
class VoltageState {
public:
    VoltageState() = default;

    static VoltageState from_polar(Vector mag, Vector ang);
    static VoltageState from_cartesian(Vector re, Vector im);
    /// V = 1 pu, angles matched to the substation phase pattern per slot.
    static VoltageState flat_start(const NetworkModel& net);

    int size() const { return static_cast<int>(mag_.size()); }

    const Vector& mag() const { sync_polar(); return mag_; }
    const Vector& ang() const { sync_polar(); return ang_; }
    const Vector& re() const { sync_cartesian(); return re_; }
    const Vector& im() const { sync_cartesian(); return im_; }

    ComplexVector phasor() const;

    /// Stacked [V; theta], length 2n.
    Vector polar_stacked() const;
    /// Stacked [Vr; Vi], length 2n.
    Vector cartesian_stacked() const;
    static VoltageState from_polar_stacked(const Vector& x);
    static VoltageState from_cartesian_stacked(const Vector& xc);

    /// x <- x + [dV; dtheta]. Magnitudes that cross zero are re-normalized
    /// to (|V|, theta+pi), keeping the phasor identical and V >= 0.
    void apply_polar_delta(const Vector& dx);

    bool synchronized() const { return view_ == View::both; }
    void sync() const { sync_polar(); sync_cartesian(); }

private:
    enum class View { polar, cartesian, both };

    void sync_polar() const;
    void sync_cartesian() const;

    mutable Vector mag_, ang_, re_, im_;
    mutable View view_ = View::both;
};

VoltageState polar_to_cartesian(const VoltageState& vs);
VoltageState cartesian_to_polar(const VoltageState& vs);

/// Sparse real 2n x 2n matrix in the 2x2 block layout used by the power-flow
/// derivative operators.
using RealBlockMatrix = SparseReal;

/// Real representation of elementwise multiplication by a complex vector:
/// blocks [[Re, -Im], [Im, Re]].
RealBlockMatrix real_block_diag(const ComplexVector& z);

/// Nodal currents at reduced buses: I = Y_reduced V + Y_coupling V_sub.
ComplexVector injected_currents(const NetworkModel& net, const VoltageState& vs);

/// s(x): per-bus complex power diag(V) conj(I), returned as a LoadProfile.
LoadProfile power_injections(const NetworkModel& net, const VoltageState& vs);

/// g(x) = s(x) - S, stacked [P; Q].
Vector mismatch(const NetworkModel& net, const VoltageState& vs, const LoadProfile& s_spec);

/// Constant real expansion of the reduced Y-bus: [[G, -B], [-B, -G]].
/// Symmetric for any symmetric Y_b.
RealBlockMatrix build_n_ybus(const NetworkModel& net);

/// Cartesian power-flow Jacobian ds/d[Vr; Vi]; linear in the voltage state.
RealBlockMatrix jacobian_cartesian(const NetworkModel& net, const VoltageState& vs);

/// Polar Jacobian ds/d[V; theta] = J_c * R.
RealBlockMatrix jacobian_polar(const NetworkModel& net, const VoltageState& vs);

/// Polar-to-Cartesian coordinate change as a sparse 2n x 2n matrix
/// (per-bus blocks [[cos t, -V sin t], [sin t, V cos t]]).
RealBlockMatrix r_matrix(const VoltageState& vs);

/// Matrix-free constant Hessian action: real stacking of
/// d(u~) conj(Y w~) + d(w~) conj(Y u~). Bilinear and symmetric in (u, w).
Vector hessian_apply(const NetworkModel& net, const Vector& u, const Vector& w);

/// Solve R(V) dx = y bus-by-bus in O(n). |V| below 1e-9 raises
/// SingularBlockError naming the bus.
Vector solve_r_block(const VoltageState& vs, const Vector& y);

} // namespace appfkit
