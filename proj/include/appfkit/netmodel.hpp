#pragma once

#include <complex>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include "appfkit/errors.hpp"

namespace appfkit {

using Complex = std::complex<double>;
using SparseComplex = Eigen::SparseMatrix<Complex>;
using SparseReal = Eigen::SparseMatrix<double>;
using Vector = Eigen::VectorXd;
using ComplexVector = Eigen::VectorXcd;

/// A node-phase slot. Single-phase buses occupy one slot; a three-phase bus
/// occupies up to three, each tagged with its phase label.
struct BusId {
    int index = -1;
    std::string phase_label; // "", "a", "b" or "c"
};

/// Single-phase series element between two slots.
struct LineRecord {
    int from = -1;
    int to = -1;
    Complex series_admittance{0.0, 0.0};
};

/// Multi-phase series element: a dense admittance block coupling two groups
/// of slots of equal size (diagonal = self, off-diagonal = mutual).
struct PhaseBlockRecord {
    std::vector<int> from_slots;
    std::vector<int> to_slots;
    Eigen::MatrixXcd block;
};

/// Per-unit nodal power injections over the reduced (non-substation) buses.
/// Sign convention: consumption is a NEGATIVE injection.
struct LoadProfile {
    Vector p;
    Vector q;

    int size() const { return static_cast<int>(p.size()); }
    ComplexVector phasor() const;
    /// Stacked [P; Q], length 2n.
    Vector stacked() const;
    static LoadProfile from_stacked(const Vector& s);
};

/// Immutable per-unit network. Built through reduce_network(); safe to share
/// across threads once constructed.
class NetworkModel {
public:
    int n_total() const { return n_total_; }
    int n() const { return n_; }
    int n_sub() const { return static_cast<int>(substation_slots_.size()); }

    const SparseComplex& ybus_full() const { return ybus_full_; }
    const SparseComplex& ybus_reduced() const { return ybus_reduced_; }
    /// n x n_sub column block linking kept slots to substation slots.
    const SparseComplex& sub_coupling() const { return sub_coupling_; }

    const std::optional<ComplexVector>& shunt_diag_full() const { return shunt_diag_; }
    /// Shunt diagonal restricted to kept slots (empty optional if not provided).
    std::optional<ComplexVector> shunt_diag_reduced() const;

    const std::vector<int>& substation_slots() const { return substation_slots_; }
    const ComplexVector& substation_voltage() const { return substation_voltage_; }

    double base_power_kw() const { return base_power_kw_; }
    const std::vector<double>& bus_base_kv() const { return bus_base_kv_; }
    const LoadProfile& nominal_loads() const { return nominal_loads_; }

    /// Reduced index -> original slot.
    int to_full(int reduced) const { return reduced_to_full_[reduced]; }
    /// Original slot -> reduced index, -1 for substation slots.
    int to_reduced(int full) const { return full_to_reduced_[full]; }
    BusId bus_at(int reduced) const;

    bool is_substation(int full_slot) const { return full_to_reduced_[full_slot] < 0; }

    /// Per-slot phase labels ("a"/"b"/"c"), empty when the file omits them.
    const std::vector<std::string>& phase_labels() const { return phase_labels_; }

    /// Plausibility warnings collected during ingestion.
    const std::vector<std::string>& warnings() const { return warnings_; }

private:
    friend NetworkModel reduce_network(struct NetworkBuilder builder);

    int n_total_ = 0;
    int n_ = 0;
    SparseComplex ybus_full_;
    SparseComplex ybus_reduced_;
    SparseComplex sub_coupling_;
    std::optional<ComplexVector> shunt_diag_;
    std::vector<int> substation_slots_;
    ComplexVector substation_voltage_;
    double base_power_kw_ = 0.0;
    std::vector<double> bus_base_kv_;
    LoadProfile nominal_loads_;
    std::vector<int> reduced_to_full_;
    std::vector<int> full_to_reduced_;
    std::vector<std::string> phase_labels_;
    std::vector<std::string> warnings_;
};

/// Mutable staging area for network construction; consumed by reduce_network.
struct NetworkBuilder {
    int n_total = 0;
    double base_power_kw = 100.0;
    SparseComplex ybus_full;
    std::optional<ComplexVector> shunt_diag;
    std::vector<int> substation_slots;
    ComplexVector substation_voltages;
    std::vector<double> bus_base_kv;
    std::vector<std::string> phase_labels;
    /// (original slot, p_pu, q_pu); slots must not be substation slots.
    std::vector<std::tuple<int, double, double>> loads;
};

/// Assemble the full Y-bus by per-edge stamping plus a shunt diagonal.
/// Rejects self-loops and non-finite admittances.
SparseComplex build_ybus(const std::vector<LineRecord>& lines,
                         const ComplexVector& shunt_diag, int n_total);
SparseComplex build_ybus(const std::vector<LineRecord>& lines,
                         const std::vector<PhaseBlockRecord>& blocks,
                         const ComplexVector& shunt_diag, int n_total);

/// Delete substation rows/columns, retaining the coupling block and index maps.
NetworkModel reduce_network(NetworkBuilder builder);

enum class NetworkFormat { json, ybus_csv };

NetworkModel load_network(const std::string& path, NetworkFormat format);
/// Canonical JSON writer; load(save(net)) reproduces the sparse triplets bitwise.
void save_network(const NetworkModel& net, const std::string& path);

} // namespace appfkit
