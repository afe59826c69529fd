#pragma once

#include <cstdint>
#include <vector>

#include "appfkit/netmodel.hpp"

namespace appfkit {

/// Load-profile sampling specification. The uncertainty set is either an
/// explicit list of reduced bus indices or the top_k loads by |S|; every
/// load outside the set is multiplied by fixed_scale.
struct SamplingSpec {
    enum class Correlation { none, full, matrix };

    int num_samples = 1;
    double sigma = 1.0;            // relative standard deviation
    Correlation correlation = Correlation::none;
    Eigen::MatrixXd correlation_matrix;  // used when correlation == matrix
    std::vector<int> uncertain_set;      // reduced indices; empty -> use top_k
    int top_k = 0;
    double fixed_scale = 0.5;
    std::uint64_t seed = 0;
    /// One shared draw per load applied to both P and Q, instead of
    /// independent draws per quantity.
    bool shared_pq_draw = false;

    /// Pinned in every config echo for reproducibility.
    static constexpr const char* rng_name = "mt19937_64/box-muller";
};

/// Resolve the uncertainty set (explicit list validated, or top_k by |S|
/// with deterministic tie-breaking on index).
std::vector<int> select_uncertain(const SamplingSpec& spec, const LoadProfile& base);

/// Deterministic given (spec, base): same seed reproduces the list bitwise.
std::vector<LoadProfile> generate_samples(const SamplingSpec& spec, const LoadProfile& base);

/// CSV dump: sample,bus,P_pu,Q_pu.
void dump_samples_csv(const std::string& path, const std::vector<LoadProfile>& samples);

} // namespace appfkit
