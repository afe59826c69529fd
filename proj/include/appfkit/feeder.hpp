#pragma once

#include "appfkit/netmodel.hpp"

namespace appfkit {

/// Synthetic radial feeder generator for tests and benchmarks. Deterministic
/// given the seed. Buses count includes the substation bus; with phases = 3
/// the network has 3 * buses node-phase slots and a three-phase substation.
struct FeederSpec {
    int buses = 401;
    int phases = 3;            // 1 or 3
    std::uint64_t seed = 1;
    double load_scale = 1.0;
    double branching = 0.3;    // probability of attaching off the chain tip
    double mutual_ratio = 0.3; // 3-phase mutual impedance relative to self
};

NetworkBuilder generate_feeder(const FeederSpec& spec);
NetworkModel generate_feeder_network(const FeederSpec& spec);

} // namespace appfkit
