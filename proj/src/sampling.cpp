#include "appfkit/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include <Eigen/Cholesky>

namespace appfkit {

namespace {

// explicit Box-Muller keeps draws identical across standard libraries
class NormalDraw {
public:
    explicit NormalDraw(std::uint64_t seed) : rng_(seed) {}

    double operator()() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        const double u1 = unit_open();
        const double u2 = unit_open();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * M_PI * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

private:
    double unit_open() {
        // uniform in (0, 1]; avoids log(0)
        return (static_cast<double>(rng_()) + 1.0) * (1.0 / 18446744073709551616.0);
    }

    std::mt19937_64 rng_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

} // namespace

std::vector<int> select_uncertain(const SamplingSpec& spec, const LoadProfile& base) {
    const int n = base.size();
    if (!spec.uncertain_set.empty()) {
        for (int i : spec.uncertain_set)
            if (i < 0 || i >= n)
                throw IndexError("uncertain load index " + std::to_string(i) +
                                 " outside [0, " + std::to_string(n) + ")");
        std::vector<int> set = spec.uncertain_set;
        std::sort(set.begin(), set.end());
        set.erase(std::unique(set.begin(), set.end()), set.end());
        return set;
    }
    if (spec.top_k < 1)
        throw ValidationError("sampling spec needs an explicit uncertain set or top_k >= 1");

    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        const double ma = std::hypot(base.p(a), base.q(a));
        const double mb = std::hypot(base.p(b), base.q(b));
        if (ma != mb) return ma > mb;
        return a < b;
    });
    order.resize(std::min(spec.top_k, n));
    std::sort(order.begin(), order.end());
    return order;
}

std::vector<LoadProfile> generate_samples(const SamplingSpec& spec, const LoadProfile& base) {
    if (spec.num_samples < 1) throw ValidationError("num_samples must be >= 1");
    if (spec.sigma < 0.0) throw ValidationError("sigma must be >= 0");

    const std::vector<int> set = select_uncertain(spec, base);
    const int t = static_cast<int>(set.size());
    std::vector<bool> in_set(base.size(), false);
    for (int i : set) in_set[i] = true;

    Eigen::MatrixXd chol;
    if (spec.correlation == SamplingSpec::Correlation::matrix) {
        if (spec.correlation_matrix.rows() != t || spec.correlation_matrix.cols() != t)
            throw ValidationError("correlation matrix must be t x t over the uncertainty set");
        Eigen::LLT<Eigen::MatrixXd> llt(spec.correlation_matrix);
        if (llt.info() != Eigen::Success)
            throw ValidationError("correlation matrix is not positive semi-definite");
        chol = llt.matrixL();
    }

    NormalDraw draw(spec.seed);
    std::vector<LoadProfile> samples;
    samples.reserve(spec.num_samples);

    for (int s = 0; s < spec.num_samples; ++s) {
        LoadProfile lp;
        lp.p = base.p;
        lp.q = base.q;
        for (int i = 0; i < base.size(); ++i)
            if (!in_set[i]) {
                lp.p(i) *= spec.fixed_scale;
                lp.q(i) *= spec.fixed_scale;
            }

        switch (spec.correlation) {
            case SamplingSpec::Correlation::none:
                for (int i : set) {
                    if (spec.shared_pq_draw) {
                        const double f = 1.0 + spec.sigma * draw();
                        lp.p(i) *= f;
                        lp.q(i) *= f;
                    } else {
                        lp.p(i) *= 1.0 + spec.sigma * draw();
                        lp.q(i) *= 1.0 + spec.sigma * draw();
                    }
                }
                break;
            case SamplingSpec::Correlation::full: {
                const double alpha = 1.0 + spec.sigma * draw();
                for (int i : set) {
                    lp.p(i) *= alpha;
                    lp.q(i) *= alpha;
                }
                break;
            }
            case SamplingSpec::Correlation::matrix: {
                Vector z(t);
                for (int k = 0; k < t; ++k) z(k) = draw();
                const Vector corr = chol * z;
                for (int k = 0; k < t; ++k) {
                    const double f = 1.0 + spec.sigma * corr(k);
                    lp.p(set[k]) *= f;
                    lp.q(set[k]) *= f;
                }
                break;
            }
        }
        samples.push_back(std::move(lp));
    }
    return samples;
}

void dump_samples_csv(const std::string& path, const std::vector<LoadProfile>& samples) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << "sample,bus,P_pu,Q_pu\n";
    out.precision(17);
    for (size_t s = 0; s < samples.size(); ++s)
        for (int i = 0; i < samples[s].size(); ++i)
            out << s << ',' << i << ',' << samples[s].p(i) << ',' << samples[s].q(i) << '\n';
}

} // namespace appfkit
