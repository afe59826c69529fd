#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <fstream>

#include "appfkit/sampling.hpp"
#include "support/oracles.hpp"

using namespace appfkit;

namespace {

LoadProfile make_base(int n) {
    LoadProfile lp;
    lp.p.resize(n);
    lp.q.resize(n);
    for (int i = 0; i < n; ++i) {
        lp.p(i) = -0.01 * (i + 1);
        lp.q(i) = -0.004 * (i + 1);
    }
    return lp;
}

} // namespace

TEST_CASE("sigma zero yields the base with fixed_scale outside the set") {
    const auto base = make_base(6);
    SamplingSpec spec;
    spec.num_samples = 4;
    spec.sigma = 0.0;
    spec.top_k = 2;  // buses 4 and 5 carry the largest loads
    spec.fixed_scale = 0.5;
    const auto samples = generate_samples(spec, base);
    REQUIRE(samples.size() == 4);
    for (const auto& s : samples) {
        for (int i = 0; i < 4; ++i) CHECK(s.p(i) == base.p(i) * 0.5);
        CHECK(s.p(4) == base.p(4));
        CHECK(s.p(5) == base.p(5));
    }
}

TEST_CASE("same seed reproduces the sample list bitwise") {
    const auto base = make_base(10);
    SamplingSpec spec;
    spec.num_samples = 25;
    spec.sigma = 1.0;
    spec.top_k = 5;
    spec.seed = 77;
    const auto a = generate_samples(spec, base);
    const auto b = generate_samples(spec, base);
    for (size_t s = 0; s < a.size(); ++s) {
        CHECK((a[s].p - b[s].p).cwiseAbs().maxCoeff() == 0.0);
        CHECK((a[s].q - b[s].q).cwiseAbs().maxCoeff() == 0.0);
    }
    SamplingSpec other = spec;
    other.seed = 78;
    const auto c = generate_samples(other, base);
    CHECK((a[0].p - c[0].p).cwiseAbs().maxCoeff() != 0.0);
}

TEST_CASE("empirical moments of the scale factors") {
    LoadProfile base;
    base.p = Vector::Constant(1, -1.0);
    base.q = Vector::Constant(1, -1.0);
    SamplingSpec spec;
    spec.num_samples = 100000;
    spec.sigma = 0.5;
    spec.uncertain_set = {0};
    spec.fixed_scale = 1.0;
    spec.seed = 5;
    const auto samples = generate_samples(spec, base);

    double mean = 0.0, var = 0.0;
    for (const auto& s : samples) mean += -s.p(0);
    mean /= spec.num_samples;
    for (const auto& s : samples) var += std::pow(-s.p(0) - mean, 2);
    var /= spec.num_samples;

    // law of large numbers: mean within 1 +- 3 sigma / sqrt(M)
    CHECK(std::abs(mean - 1.0) < 3.0 * spec.sigma / std::sqrt(double(spec.num_samples)));
    CHECK(std::abs(var - spec.sigma * spec.sigma) < 0.05 * spec.sigma * spec.sigma);
}

TEST_CASE("sign flips occur at sigma = 1") {
    LoadProfile base;
    base.p = Vector::Constant(1, -1.0);
    base.q = Vector::Constant(1, -0.4);
    SamplingSpec spec;
    spec.num_samples = 200;
    spec.sigma = 1.0;
    spec.uncertain_set = {0};
    spec.seed = 9;
    const auto samples = generate_samples(spec, base);
    bool flipped = false;
    for (const auto& s : samples) flipped = flipped || s.p(0) > 0.0;
    CHECK(flipped);  // consumption can turn into injection
}

TEST_CASE("full correlation applies one factor to every uncertain load") {
    const auto base = make_base(8);
    SamplingSpec spec;
    spec.num_samples = 50;
    spec.sigma = 0.8;
    spec.correlation = SamplingSpec::Correlation::full;
    spec.top_k = 4;
    spec.seed = 12;
    const auto set = select_uncertain(spec, base);
    const auto samples = generate_samples(spec, base);
    for (const auto& s : samples) {
        const double f0 = s.p(set[0]) / base.p(set[0]);
        for (int i : set) {
            CHECK(s.p(i) / base.p(i) == doctest::Approx(f0).epsilon(1e-12));
            CHECK(s.q(i) / base.q(i) == doctest::Approx(f0).epsilon(1e-12));
        }
    }
}

TEST_CASE("independent draws for P and Q unless shared_pq_draw") {
    LoadProfile base;
    base.p = Vector::Constant(1, -1.0);
    base.q = Vector::Constant(1, -1.0);
    SamplingSpec spec;
    spec.num_samples = 10;
    spec.sigma = 1.0;
    spec.uncertain_set = {0};
    spec.seed = 3;

    const auto indep = generate_samples(spec, base);
    bool differs = false;
    for (const auto& s : indep) differs = differs || s.p(0) != s.q(0);
    CHECK(differs);

    spec.shared_pq_draw = true;
    const auto shared = generate_samples(spec, base);
    for (const auto& s : shared) CHECK(s.p(0) == s.q(0));
}

TEST_CASE("top_k selection is deterministic under ties") {
    LoadProfile base;
    base.p = Vector::Constant(5, -0.5);
    base.q = Vector::Constant(5, -0.2);
    SamplingSpec spec;
    spec.top_k = 3;
    const auto set = select_uncertain(spec, base);
    CHECK(set == std::vector<int>{0, 1, 2});
}

TEST_CASE("explicit uncertain set is validated") {
    const auto base = make_base(4);
    SamplingSpec spec;
    spec.uncertain_set = {0, 9};
    CHECK_THROWS_AS(select_uncertain(spec, base), IndexError);
    spec.uncertain_set.clear();
    spec.top_k = 0;
    CHECK_THROWS_AS(select_uncertain(spec, base), ValidationError);
}

TEST_CASE("correlation matrix mode validates positive semi-definiteness") {
    const auto base = make_base(4);
    SamplingSpec spec;
    spec.num_samples = 3;
    spec.correlation = SamplingSpec::Correlation::matrix;
    spec.uncertain_set = {0, 1};
    spec.correlation_matrix.resize(2, 2);
    spec.correlation_matrix << 1.0, 2.0, 2.0, 1.0;  // indefinite
    CHECK_THROWS_AS(generate_samples(spec, base), ValidationError);

    spec.correlation_matrix << 1.0, 0.9, 0.9, 1.0;
    CHECK_NOTHROW(generate_samples(spec, base));
}

TEST_CASE("correlation matrix shapes the empirical cross-correlation") {
    LoadProfile base;
    base.p = Vector::Constant(2, -1.0);
    base.q = Vector::Constant(2, -0.5);
    SamplingSpec spec;
    spec.num_samples = 40000;
    spec.sigma = 1.0;
    spec.correlation = SamplingSpec::Correlation::matrix;
    spec.uncertain_set = {0, 1};
    spec.correlation_matrix.resize(2, 2);
    spec.correlation_matrix << 1.0, 0.9, 0.9, 1.0;
    spec.seed = 31;
    const auto samples = generate_samples(spec, base);

    double m0 = 0, m1 = 0;
    for (const auto& s : samples) {
        m0 += s.p(0);
        m1 += s.p(1);
    }
    m0 /= samples.size();
    m1 /= samples.size();
    double c00 = 0, c11 = 0, c01 = 0;
    for (const auto& s : samples) {
        c00 += std::pow(s.p(0) - m0, 2);
        c11 += std::pow(s.p(1) - m1, 2);
        c01 += (s.p(0) - m0) * (s.p(1) - m1);
    }
    const double corr = c01 / std::sqrt(c00 * c11);
    CHECK(std::abs(corr - 0.9) < 0.02);
}

TEST_CASE("csv dump has the declared header and row count") {
    const auto base = make_base(3);
    SamplingSpec spec;
    spec.num_samples = 2;
    spec.top_k = 1;
    const auto samples = generate_samples(spec, base);
    const std::string path = "/tmp/appfkit_samples.csv";
    dump_samples_csv(path, samples);
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    CHECK(line == "sample,bus,P_pu,Q_pu");
    int rows = 0;
    while (std::getline(in, line))
        if (!line.empty()) ++rows;
    CHECK(rows == 6);
}
