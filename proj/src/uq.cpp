#include "appfkit/uq.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <Eigen/Eigenvalues>

namespace appfkit {

using nlohmann::json;

namespace {

Histogram make_histogram(const std::vector<double>& values, int bins) {
    if (bins < 1) throw ValidationError("histogram needs at least one bin");
    Histogram h;
    h.counts.assign(bins, 0);
    h.edges.resize(bins + 1);
    if (values.empty()) {
        h.edges.setZero();
        return h;
    }
    auto [mn_it, mx_it] = std::minmax_element(values.begin(), values.end());
    double lo = *mn_it, hi = *mx_it;
    if (lo == hi) hi = lo + 1.0;  // degenerate range: single occupied bin
    for (int b = 0; b <= bins; ++b)
        h.edges(b) = lo + (hi - lo) * static_cast<double>(b) / bins;
    for (double v : values) {
        int b = static_cast<int>((v - lo) / (hi - lo) * bins);
        b = std::clamp(b, 0, bins - 1);  // max lands in the last bin
        ++h.counts[b];
    }
    return h;
}

} // namespace

json Histogram::to_json() const {
    json j;
    j["edges"] = std::vector<double>(edges.data(), edges.data() + edges.size());
    j["counts"] = counts;
    return j;
}

void Histogram::write_csv(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << "bin_lo,bin_hi,count\n";
    out.precision(17);
    for (size_t b = 0; b < counts.size(); ++b)
        out << edges(static_cast<Eigen::Index>(b)) << ','
            << edges(static_cast<Eigen::Index>(b) + 1) << ',' << counts[b] << '\n';
}

json UqSummary::to_json() const {
    json j;
    json nodes = json::array();
    for (const auto& s : per_node)
        nodes.push_back({{"min", s.min}, {"max", s.max}, {"mean", s.mean}, {"std", s.std}});
    j["per_node"] = nodes;
    j["order_by_mean"] = order_by_mean;
    j["magnitude_histogram"] = magnitude_histogram.to_json();
    if (singular_values.size() > 0)
        j["singular_values"] = std::vector<double>(
            singular_values.data(), singular_values.data() + singular_values.size());
    return j;
}

UqSummary summarize(const PpfResult& result, int bins) {
    const int n = static_cast<int>(result.solutions.rows()) / 2;
    const int m = static_cast<int>(result.solutions.cols());
    UqSummary s;
    s.per_node.resize(n);

    std::vector<double> all;
    all.reserve(static_cast<size_t>(n) * m);
    for (int i = 0; i < n; ++i) {
        double mn = std::numeric_limits<double>::infinity();
        double mx = -std::numeric_limits<double>::infinity();
        double sum = 0.0, sum2 = 0.0;
        for (int c = 0; c < m; ++c) {
            const double v = result.solutions(i, c);
            mn = std::min(mn, v);
            mx = std::max(mx, v);
            sum += v;
            all.push_back(v);
        }
        const double mean = sum / m;
        for (int c = 0; c < m; ++c) {
            const double d = result.solutions(i, c) - mean;
            sum2 += d * d;
        }
        s.per_node[i] = {mn, mx, mean, std::sqrt(sum2 / m)};
    }

    s.order_by_mean.resize(n);
    std::iota(s.order_by_mean.begin(), s.order_by_mean.end(), 0);
    std::stable_sort(s.order_by_mean.begin(), s.order_by_mean.end(),
                     [&](int a, int b) { return s.per_node[a].mean < s.per_node[b].mean; });

    s.magnitude_histogram = make_histogram(all, bins);
    return s;
}

Histogram branch_current_stats(const NetworkModel& net, const PpfResult& result,
                               int from_slot, int to_slot, int bins) {
    if (from_slot < 0 || from_slot >= net.n_total() || to_slot < 0 ||
        to_slot >= net.n_total())
        throw IndexError("branch endpoint outside the network");

    const Complex off = net.ybus_full().coeff(from_slot, to_slot);
    if (off == Complex(0.0, 0.0))
        throw ValidationError("no series element between slots " + std::to_string(from_slot) +
                              " and " + std::to_string(to_slot));
    const Complex y_edge = -off;

    const int n = static_cast<int>(result.solutions.rows()) / 2;
    const int m = static_cast<int>(result.solutions.cols());

    auto phasor_at = [&](int slot, int col) -> Complex {
        const int r = net.to_reduced(slot);
        if (r < 0) {
            for (size_t k = 0; k < net.substation_slots().size(); ++k)
                if (net.substation_slots()[k] == slot)
                    return net.substation_voltage()(static_cast<Eigen::Index>(k));
            return {0.0, 0.0};
        }
        const double v = result.solutions(r, col);
        const double t = result.solutions(n + r, col);
        return std::polar(v, t);
    };

    std::vector<double> currents(m);
    for (int c = 0; c < m; ++c)
        currents[c] = std::abs(y_edge * (phasor_at(from_slot, c) - phasor_at(to_slot, c)));
    return make_histogram(currents, bins);
}

Vector singular_values(const PpfResult& result, int count) {
    const int n = static_cast<int>(result.solutions.rows()) / 2;
    const int m = static_cast<int>(result.solutions.cols());

    // Cartesian snapshot matrix
    Eigen::MatrixXd w(2 * n, m);
    for (int c = 0; c < m; ++c) {
        for (int i = 0; i < n; ++i) {
            const double v = result.solutions(i, c);
            const double t = result.solutions(n + i, c);
            w(i, c) = v * std::cos(t);
            w(n + i, c) = v * std::sin(t);
        }
    }

    const Eigen::MatrixXd gram = w.transpose() * w;  // M x M
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram);
    Vector ev = es.eigenvalues();  // ascending

    const int avail = static_cast<int>(ev.size());
    const int keep = std::min(std::max(count, 0), avail);
    Vector sv(keep);
    for (int k = 0; k < keep; ++k) sv(k) = std::sqrt(std::max(0.0, ev(avail - 1 - k)));
    return sv;
}

} // namespace appfkit
