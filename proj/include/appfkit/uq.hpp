#pragma once

#include "appfkit/ppf.hpp"

namespace appfkit {

struct Histogram {
    Vector edges;               // bins + 1, equal width over the observed range
    std::vector<long> counts;   // counts sum to the number of observations

    nlohmann::json to_json() const;
    void write_csv(const std::string& path) const;
};

struct NodeStats {
    double min = 0.0, max = 0.0, mean = 0.0, std = 0.0;
};

struct UqSummary {
    std::vector<NodeStats> per_node;     // voltage magnitude, natural node order
    std::vector<int> order_by_mean;      // optional sorted view
    Histogram magnitude_histogram;       // over all node-sample magnitudes
    Vector singular_values;              // filled by singular_values(), descending

    nlohmann::json to_json() const;
};

/// Aggregate voltage-magnitude statistics from a stored run.
UqSummary summarize(const PpfResult& result, int bins);

/// Distribution of |I| on a series element identified by its endpoints
/// (original slot indices); the edge must be an off-diagonal nonzero.
Histogram branch_current_stats(const NetworkModel& net, const PpfResult& result,
                               int from_slot, int to_slot, int bins);

/// Top `count` singular values of the Cartesian solution matrix, via the
/// Gram-matrix eigenvalue route (log-scale spectrum shape is what matters).
Vector singular_values(const PpfResult& result, int count);

} // namespace appfkit
