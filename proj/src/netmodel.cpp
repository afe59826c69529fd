#include "appfkit/netmodel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace appfkit {

using nlohmann::json;

ComplexVector LoadProfile::phasor() const {
    ComplexVector s(p.size());
    for (int i = 0; i < p.size(); ++i) s(i) = Complex(p(i), q(i));
    return s;
}

Vector LoadProfile::stacked() const {
    Vector s(2 * p.size());
    s.head(p.size()) = p;
    s.tail(q.size()) = q;
    return s;
}

LoadProfile LoadProfile::from_stacked(const Vector& s) {
    const auto n = s.size() / 2;
    LoadProfile lp;
    lp.p = s.head(n);
    lp.q = s.tail(n);
    return lp;
}

BusId NetworkModel::bus_at(int reduced) const {
    const int full = reduced_to_full_[reduced];
    BusId id;
    id.index = full;
    if (!phase_labels_.empty()) id.phase_label = phase_labels_[full];
    return id;
}

std::optional<ComplexVector> NetworkModel::shunt_diag_reduced() const {
    if (!shunt_diag_) return std::nullopt;
    ComplexVector r(n_);
    for (int i = 0; i < n_; ++i) r(i) = (*shunt_diag_)(reduced_to_full_[i]);
    return r;
}

namespace {

void check_slot(int slot, int n_total, const char* what) {
    if (slot < 0 || slot >= n_total)
        throw IndexError(std::string(what) + " index " + std::to_string(slot) +
                         " outside [0, " + std::to_string(n_total) + ")");
}

void stamp(std::vector<Eigen::Triplet<Complex>>& trips, int i, int j, Complex v) {
    trips.emplace_back(i, j, v);
}

} // namespace

SparseComplex build_ybus(const std::vector<LineRecord>& lines,
                         const ComplexVector& shunt_diag, int n_total) {
    return build_ybus(lines, {}, shunt_diag, n_total);
}

SparseComplex build_ybus(const std::vector<LineRecord>& lines,
                         const std::vector<PhaseBlockRecord>& blocks,
                         const ComplexVector& shunt_diag, int n_total) {
    if (shunt_diag.size() != 0 && shunt_diag.size() != n_total)
        throw ValidationError("shunt diagonal length does not match n_total");

    std::vector<Eigen::Triplet<Complex>> trips;
    trips.reserve(4 * lines.size() + n_total);

    for (const auto& ln : lines) {
        check_slot(ln.from, n_total, "line endpoint");
        check_slot(ln.to, n_total, "line endpoint");
        if (ln.from == ln.to)
            throw ValidationError("self-loop edge on slot " + std::to_string(ln.from));
        const Complex y = ln.series_admittance;
        if (!std::isfinite(y.real()) || !std::isfinite(y.imag()) || y == Complex(0.0, 0.0))
            throw ValidationError("non-finite or zero admittance on edge " +
                                  std::to_string(ln.from) + "-" + std::to_string(ln.to));
        stamp(trips, ln.from, ln.from, y);
        stamp(trips, ln.to, ln.to, y);
        stamp(trips, ln.from, ln.to, -y);
        stamp(trips, ln.to, ln.from, -y);
    }

    for (const auto& blk : blocks) {
        const int m = static_cast<int>(blk.from_slots.size());
        if (static_cast<int>(blk.to_slots.size()) != m ||
            blk.block.rows() != m || blk.block.cols() != m)
            throw ValidationError("phase block shape mismatch");
        for (int a = 0; a < m; ++a) {
            check_slot(blk.from_slots[a], n_total, "phase block endpoint");
            check_slot(blk.to_slots[a], n_total, "phase block endpoint");
            if (blk.from_slots[a] == blk.to_slots[a])
                throw ValidationError("self-loop in phase block");
        }
        for (int a = 0; a < m; ++a)
            for (int b = 0; b < m; ++b) {
                const Complex y = blk.block(a, b);
                if (!std::isfinite(y.real()) || !std::isfinite(y.imag()))
                    throw ValidationError("non-finite admittance in phase block");
                if (y == Complex(0.0, 0.0)) continue;
                stamp(trips, blk.from_slots[a], blk.from_slots[b], y);
                stamp(trips, blk.to_slots[a], blk.to_slots[b], y);
                stamp(trips, blk.from_slots[a], blk.to_slots[b], -y);
                stamp(trips, blk.to_slots[a], blk.from_slots[b], -y);
            }
    }

    for (int i = 0; i < shunt_diag.size(); ++i)
        if (shunt_diag(i) != Complex(0.0, 0.0)) stamp(trips, i, i, shunt_diag(i));

    SparseComplex y(n_total, n_total);
    y.setFromTriplets(trips.begin(), trips.end());
    y.makeCompressed();
    return y;
}

NetworkModel reduce_network(NetworkBuilder b) {
    if (b.n_total <= 0) throw ValidationError("n_total must be positive");
    if (b.substation_slots.empty())
        throw ValidationError("at least one substation slot is required");
    if (b.substation_voltages.size() != static_cast<Eigen::Index>(b.substation_slots.size()))
        throw ValidationError("every substation slot needs a fixed voltage phasor");
    if (b.ybus_full.rows() != b.n_total || b.ybus_full.cols() != b.n_total)
        throw ValidationError("ybus dimension does not match n_total");

    for (int s : b.substation_slots) check_slot(s, b.n_total, "substation slot");
    for (Eigen::Index i = 0; i < b.substation_voltages.size(); ++i) {
        const Complex v = b.substation_voltages(i);
        if (!std::isfinite(v.real()) || !std::isfinite(v.imag()) || std::abs(v) == 0.0)
            throw ValidationError("substation slot " +
                                  std::to_string(b.substation_slots[i]) +
                                  " has no usable fixed voltage");
    }

    NetworkModel net;
    net.n_total_ = b.n_total;
    net.ybus_full_ = b.ybus_full;
    net.ybus_full_.makeCompressed();
    net.shunt_diag_ = std::move(b.shunt_diag);
    net.substation_slots_ = b.substation_slots;
    std::sort(net.substation_slots_.begin(), net.substation_slots_.end());
    if (std::adjacent_find(net.substation_slots_.begin(), net.substation_slots_.end()) !=
        net.substation_slots_.end())
        throw ValidationError("duplicate substation slot");

    // keep voltages aligned with the sorted slot order
    net.substation_voltage_.resize(net.substation_slots_.size());
    for (size_t i = 0; i < net.substation_slots_.size(); ++i) {
        const int slot = net.substation_slots_[i];
        const auto it = std::find(b.substation_slots.begin(), b.substation_slots.end(), slot);
        net.substation_voltage_(static_cast<Eigen::Index>(i)) =
            b.substation_voltages(it - b.substation_slots.begin());
    }

    net.base_power_kw_ = b.base_power_kw;
    net.bus_base_kv_ = std::move(b.bus_base_kv);
    net.phase_labels_ = std::move(b.phase_labels);
    if (!net.phase_labels_.empty() &&
        static_cast<int>(net.phase_labels_.size()) != net.n_total_)
        throw ValidationError("phase label list length does not match n_total");

    net.full_to_reduced_.assign(net.n_total_, 0);
    for (int s : net.substation_slots_) net.full_to_reduced_[s] = -1;
    net.n_ = 0;
    for (int i = 0; i < net.n_total_; ++i) {
        if (net.full_to_reduced_[i] < 0) continue;
        net.full_to_reduced_[i] = net.n_;
        net.reduced_to_full_.push_back(i);
        ++net.n_;
    }
    if (net.n_ == 0) throw ValidationError("network has no non-substation slots");

    // split the full matrix into kept block + substation coupling
    const int n = net.n_;
    const int ns = net.n_sub();
    std::vector<Eigen::Triplet<Complex>> red, cpl;
    std::vector<int> sub_pos(net.n_total_, -1);
    for (int k = 0; k < ns; ++k) sub_pos[net.substation_slots_[k]] = k;

    for (int col = 0; col < net.ybus_full_.outerSize(); ++col)
        for (SparseComplex::InnerIterator it(net.ybus_full_, col); it; ++it) {
            const int r = static_cast<int>(it.row());
            const int c = static_cast<int>(it.col());
            const int rr = net.full_to_reduced_[r];
            if (rr < 0) continue;
            const int rc = net.full_to_reduced_[c];
            if (rc >= 0)
                red.emplace_back(rr, rc, it.value());
            else
                cpl.emplace_back(rr, sub_pos[c], it.value());
        }

    net.ybus_reduced_.resize(n, n);
    net.ybus_reduced_.setFromTriplets(red.begin(), red.end());
    net.ybus_reduced_.makeCompressed();
    net.sub_coupling_.resize(n, ns);
    net.sub_coupling_.setFromTriplets(cpl.begin(), cpl.end());
    net.sub_coupling_.makeCompressed();

    // every kept row must touch the network somewhere
    std::vector<bool> row_nonzero(n, false);
    for (int col = 0; col < net.ybus_reduced_.outerSize(); ++col)
        for (SparseComplex::InnerIterator it(net.ybus_reduced_, col); it; ++it)
            if (it.value() != Complex(0.0, 0.0)) row_nonzero[it.row()] = true;
    for (int i = 0; i < n; ++i)
        if (!row_nonzero[i])
            throw ValidationError("isolated bus: reduced row " + std::to_string(i) +
                                  " (slot " + std::to_string(net.reduced_to_full_[i]) +
                                  ") has no nonzero entries");

    net.nominal_loads_.p = Vector::Zero(n);
    net.nominal_loads_.q = Vector::Zero(n);
    for (const auto& [slot, p, q] : b.loads) {
        check_slot(slot, net.n_total_, "load bus");
        const int r = net.full_to_reduced_[slot];
        if (r < 0)
            throw ValidationError("load specified on substation slot " + std::to_string(slot));
        if (!std::isfinite(p) || !std::isfinite(q))
            throw ValidationError("non-finite load on slot " + std::to_string(slot));
        net.nominal_loads_.p(r) += p;
        net.nominal_loads_.q(r) += q;
    }

    for (Eigen::Index i = 0; i < net.substation_voltage_.size(); ++i) {
        const double vm = std::abs(net.substation_voltage_(i));
        if (vm < 0.8 || vm > 1.2)
            net.warnings_.push_back("substation slot " +
                                    std::to_string(net.substation_slots_[i]) +
                                    " voltage magnitude " + std::to_string(vm) +
                                    " pu is far from 1; check per-unitization");
    }

    return net;
}

namespace {

double relative_asymmetry(const SparseComplex& y) {
    SparseComplex yt = SparseComplex(y.transpose());
    SparseComplex diff = y - yt;
    double max_entry = 0.0, max_diff = 0.0;
    for (int c = 0; c < y.outerSize(); ++c)
        for (SparseComplex::InnerIterator it(y, c); it; ++it)
            max_entry = std::max(max_entry, std::abs(it.value()));
    for (int c = 0; c < diff.outerSize(); ++c)
        for (SparseComplex::InnerIterator it(diff, c); it; ++it)
            max_diff = std::max(max_diff, std::abs(it.value()));
    if (max_entry == 0.0) return 0.0;
    return max_diff / max_entry;
}

json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw SchemaError("invalid JSON in " + path + ": " + e.what());
    }
    return j;
}

NetworkModel load_network_json(const std::string& path) {
    const json j = load_json_file(path);
    NetworkBuilder b;
    try {
        b.n_total = j.at("n_total").get<int>();
        b.base_power_kw = j.at("base_power_kw").get<double>();

        const auto& sub = j.at("substation");
        b.substation_slots = sub.at("slots").get<std::vector<int>>();
        const auto& volts = sub.at("voltages");
        if (volts.size() != b.substation_slots.size())
            throw SchemaError("substation voltages/slots length mismatch");
        b.substation_voltages.resize(volts.size());
        for (size_t i = 0; i < volts.size(); ++i)
            b.substation_voltages(static_cast<Eigen::Index>(i)) =
                Complex(volts[i].at(0).get<double>(), volts[i].at(1).get<double>());

        std::vector<Eigen::Triplet<Complex>> trips;
        for (const auto& t : j.at("ybus").at("triplets")) {
            const int r = t.at(0).get<int>();
            const int c = t.at(1).get<int>();
            check_slot(r, b.n_total, "ybus row");
            check_slot(c, b.n_total, "ybus col");
            trips.emplace_back(r, c, Complex(t.at(2).get<double>(), t.at(3).get<double>()));
        }
        b.ybus_full.resize(b.n_total, b.n_total);
        b.ybus_full.setFromTriplets(trips.begin(), trips.end());

        if (j.contains("shunts")) {
            ComplexVector sh = ComplexVector::Zero(b.n_total);
            for (const auto& t : j.at("shunts").at("triplets")) {
                const int i = t.at(0).get<int>();
                check_slot(i, b.n_total, "shunt slot");
                sh(i) += Complex(t.at(1).get<double>(), t.at(2).get<double>());
            }
            b.shunt_diag = std::move(sh);
        }

        for (const auto& l : j.at("loads"))
            b.loads.emplace_back(l.at(0).get<int>(), l.at(1).get<double>(),
                                 l.at(2).get<double>());

        b.bus_base_kv = j.at("bus_base_kv").get<std::vector<double>>();
        if (static_cast<int>(b.bus_base_kv.size()) != b.n_total)
            throw SchemaError("bus_base_kv length mismatch");

        if (j.contains("phase_labels"))
            b.phase_labels = j.at("phase_labels").get<std::vector<std::string>>();
    } catch (const json::exception& e) {
        throw SchemaError("network schema violation in " + path + ": " + e.what());
    }

    const double asym = relative_asymmetry(b.ybus_full);
    if (asym > 1e-8)
        throw AsymmetryError("Y-bus asymmetry " + std::to_string(asym) +
                             " exceeds 1e-8 relative tolerance in " + path);

    return reduce_network(std::move(b));
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    return out;
}

// Triplet CSV with 1-based indices and both triangles stored. Substation
// defaults to bus 1 at 1+0j; loads come from a sibling <stem>_loads.csv.
NetworkModel load_network_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);

    std::string line;
    if (!std::getline(in, line)) throw SchemaError("empty ybus csv " + path);
    {
        auto hdr = split_csv_line(line);
        if (hdr.size() != 4 || hdr[0] != "row" || hdr[1] != "col" || hdr[2] != "G" ||
            hdr[3] != "B")
            throw SchemaError("ybus csv header must be row,col,G,B in " + path);
    }

    std::vector<Eigen::Triplet<Complex>> trips;
    int max_index = 0;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto cells = split_csv_line(line);
        if (cells.size() != 4)
            throw SchemaError("bad ybus csv row at line " + std::to_string(lineno));
        int r, c;
        double g, bv;
        try {
            r = std::stoi(cells[0]);
            c = std::stoi(cells[1]);
            g = std::stod(cells[2]);
            bv = std::stod(cells[3]);
        } catch (const std::exception&) {
            throw SchemaError("unparsable ybus csv row at line " + std::to_string(lineno));
        }
        if (r < 1 || c < 1)
            throw IndexError("ybus csv uses 1-based indices; got row " + std::to_string(r));
        max_index = std::max({max_index, r, c});
        trips.emplace_back(r - 1, c - 1, Complex(g, bv));
    }

    NetworkBuilder b;
    b.n_total = max_index;
    b.ybus_full.resize(b.n_total, b.n_total);
    b.ybus_full.setFromTriplets(trips.begin(), trips.end());
    b.substation_slots = {0};
    b.substation_voltages.resize(1);
    b.substation_voltages(0) = Complex(1.0, 0.0);
    b.bus_base_kv.assign(b.n_total, 1.0);

    // sibling loads file: <stem>_loads.csv, falling back to loads.csv alongside
    std::string loads_path = path;
    const auto dot = loads_path.rfind(".csv");
    if (dot != std::string::npos) loads_path = loads_path.substr(0, dot);
    loads_path += "_loads.csv";
    std::ifstream lin(loads_path);
    if (!lin) {
        const auto slash = path.rfind('/');
        loads_path = (slash == std::string::npos) ? "loads.csv"
                                                  : path.substr(0, slash + 1) + "loads.csv";
        lin.open(loads_path);
    }
    if (lin) {
        if (!std::getline(lin, line)) throw SchemaError("empty loads csv " + loads_path);
        auto hdr = split_csv_line(line);
        if (hdr.size() != 3 || hdr[0] != "bus" || hdr[1] != "P_pu" || hdr[2] != "Q_pu")
            throw SchemaError("loads csv header must be bus,P_pu,Q_pu in " + loads_path);
        lineno = 1;
        while (std::getline(lin, line)) {
            ++lineno;
            if (line.empty()) continue;
            auto cells = split_csv_line(line);
            if (cells.size() != 3)
                throw SchemaError("bad loads csv row at line " + std::to_string(lineno));
            try {
                const int bus = std::stoi(cells[0]);
                if (bus < 1) throw IndexError("loads csv uses 1-based indices");
                b.loads.emplace_back(bus - 1, std::stod(cells[1]), std::stod(cells[2]));
            } catch (const IndexError&) {
                throw;
            } catch (const std::exception&) {
                throw SchemaError("unparsable loads csv row at line " +
                                  std::to_string(lineno));
            }
        }
    }

    const double asym = relative_asymmetry(b.ybus_full);
    if (asym > 1e-8)
        throw AsymmetryError("Y-bus asymmetry " + std::to_string(asym) +
                             " exceeds 1e-8 relative tolerance in " + path);

    return reduce_network(std::move(b));
}

} // namespace

NetworkModel load_network(const std::string& path, NetworkFormat format) {
    switch (format) {
        case NetworkFormat::json: return load_network_json(path);
        case NetworkFormat::ybus_csv: return load_network_csv(path);
    }
    throw ValidationError("unknown network format");
}

void save_network(const NetworkModel& net, const std::string& path) {
    json j;
    j["n_total"] = net.n_total();
    j["base_power_kw"] = net.base_power_kw();

    json sub;
    sub["slots"] = net.substation_slots();
    json volts = json::array();
    for (Eigen::Index i = 0; i < net.substation_voltage().size(); ++i)
        volts.push_back({net.substation_voltage()(i).real(), net.substation_voltage()(i).imag()});
    sub["voltages"] = volts;
    j["substation"] = sub;

    // canonical ordering: (row, col) ascending
    std::vector<std::tuple<int, int, double, double>> trips;
    for (int c = 0; c < net.ybus_full().outerSize(); ++c)
        for (SparseComplex::InnerIterator it(net.ybus_full(), c); it; ++it)
            trips.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()),
                               it.value().real(), it.value().imag());
    std::sort(trips.begin(), trips.end());
    json yb = json::array();
    for (const auto& [r, c, g, bv] : trips) yb.push_back({r, c, g, bv});
    j["ybus"]["triplets"] = yb;

    if (net.shunt_diag_full()) {
        json sh = json::array();
        const auto& d = *net.shunt_diag_full();
        for (Eigen::Index i = 0; i < d.size(); ++i)
            if (d(i) != Complex(0.0, 0.0)) sh.push_back({static_cast<int>(i), d(i).real(), d(i).imag()});
        j["shunts"]["triplets"] = sh;
    }

    json loads = json::array();
    for (int i = 0; i < net.n(); ++i) {
        const double p = net.nominal_loads().p(i);
        const double q = net.nominal_loads().q(i);
        if (p != 0.0 || q != 0.0) loads.push_back({net.to_full(i), p, q});
    }
    j["loads"] = loads;
    j["bus_base_kv"] = net.bus_base_kv();
    if (!net.phase_labels().empty()) j["phase_labels"] = net.phase_labels();

    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << j.dump(2) << "\n";
}

} // namespace appfkit
