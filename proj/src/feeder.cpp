#include "appfkit/feeder.hpp"

#include <cmath>
#include <random>

namespace appfkit {

// Radial feeder with a stiff trunk near the substation and progressively
// weaker laterals; per-unit section impedances keep nominal voltage drops
// within a few percent so the network is healthy at nominal load.
NetworkBuilder generate_feeder(const FeederSpec& spec) {
    if (spec.buses < 2) throw ValidationError("feeder needs at least 2 buses");
    if (spec.phases != 1 && spec.phases != 3)
        throw ValidationError("feeder supports 1 or 3 phases");

    std::mt19937_64 rng(spec.seed);
    std::uniform_real_distribution<double> uni(0.0, 1.0);

    const int ph = spec.phases;
    const int n_total = spec.buses * ph;

    // tree topology: bus b >= 1 attaches to the chain tip or a random ancestor
    std::vector<int> parent(spec.buses, -1);
    std::vector<int> depth(spec.buses, 0);
    for (int b = 1; b < spec.buses; ++b) {
        int p = b - 1;
        if (b > 2 && uni(rng) < spec.branching)
            p = 1 + static_cast<int>(uni(rng) * (b - 1)) % (b - 1);
        parent[b] = p;
        depth[b] = depth[p] + 1;
    }

    std::vector<LineRecord> lines;
    std::vector<PhaseBlockRecord> blocks;
    auto slot = [&](int bus, int phase) { return bus * ph + phase; };

    for (int b = 1; b < spec.buses; ++b) {
        const int p = parent[b];
        // shallow sections carry aggregate flow; keep them stiff
        const double stiffness = 1.0 + 8.0 / (1.0 + depth[b]);
        const double scale = (0.7 + 0.6 * uni(rng)) / stiffness;
        const Complex z_self = Complex(0.0015, 0.0035) * scale;
        if (ph == 1) {
            lines.push_back({slot(p, 0), slot(b, 0), 1.0 / z_self});
        } else {
            const Complex z_mut = z_self * spec.mutual_ratio;
            Eigen::Matrix3cd z = Eigen::Matrix3cd::Constant(z_mut);
            z.diagonal().setConstant(z_self);
            PhaseBlockRecord blk;
            blk.from_slots = {slot(p, 0), slot(p, 1), slot(p, 2)};
            blk.to_slots = {slot(b, 0), slot(b, 1), slot(b, 2)};
            blk.block = z.inverse();
            blocks.push_back(std::move(blk));
        }
    }

    NetworkBuilder nb;
    nb.n_total = n_total;
    nb.base_power_kw = 100.0;
    nb.ybus_full = build_ybus(lines, blocks, ComplexVector(), n_total);
    nb.bus_base_kv.assign(n_total, 7.2);

    for (int k = 0; k < ph; ++k) nb.substation_slots.push_back(slot(0, k));
    nb.substation_voltages.resize(ph);
    const double angles[3] = {0.0, -2.0 * M_PI / 3.0, 2.0 * M_PI / 3.0};
    for (int k = 0; k < ph; ++k)
        nb.substation_voltages(k) = std::polar(1.0, ph == 1 ? 0.0 : angles[k]);

    if (ph == 3) {
        const char* lbl[3] = {"a", "b", "c"};
        nb.phase_labels.resize(n_total);
        for (int b = 0; b < spec.buses; ++b)
            for (int k = 0; k < 3; ++k) nb.phase_labels[slot(b, k)] = lbl[k];
    }

    // consumption (negative injection) with a handful of heavy customers
    for (int b = 1; b < spec.buses; ++b)
        for (int k = 0; k < ph; ++k) {
            double p = (0.001 + 0.009 * uni(rng)) * spec.load_scale;
            if (uni(rng) < 0.05) p *= 6.0;  // heavy tail so top-k is meaningful
            const double q = p * (0.25 + 0.25 * uni(rng));
            nb.loads.emplace_back(slot(b, k), -p, -q);
        }

    return nb;
}

NetworkModel generate_feeder_network(const FeederSpec& spec) {
    return reduce_network(generate_feeder(spec));
}

} // namespace appfkit
