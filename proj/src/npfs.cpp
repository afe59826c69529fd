#include "appfkit/npfs.hpp"

#include <chrono>
#include <cmath>

namespace appfkit {

namespace {

// real block form of an elementwise complex multiply, applied in O(n)
Vector apply_complex_diag(const ComplexVector& d, const Vector& x) {
    const int n = static_cast<int>(d.size());
    Vector out(2 * n);
    for (int i = 0; i < n; ++i) {
        const Complex v = d(i) * Complex(x(i), x(n + i));
        out(i) = v.real();
        out(n + i) = v.imag();
    }
    return out;
}

Vector divide_by_voltage(const ComplexVector& v, const Vector& x) {
    const int n = static_cast<int>(v.size());
    Vector out(2 * n);
    for (int i = 0; i < n; ++i) {
        const Complex r = Complex(x(i), x(n + i)) / v(i);
        out(i) = r.real();
        out(n + i) = r.imag();
    }
    return out;
}

ComplexVector perturbation_diag(const ComplexVector& v, const ComplexVector& cur) {
    ComplexVector d(v.size());
    for (int i = 0; i < v.size(); ++i) d(i) = std::conj(cur(i)) / v(i);
    return d;
}

} // namespace

LdlFactors prepare(const NetworkModel& net) {
    try {
        return ldl_factorize(build_n_ybus(net));
    } catch (const SingularMatrixError& e) {
        throw SingularMatrixError(std::string("admittance expansion is singular "
                                              "(disconnected or degenerate network): ") +
                                      e.what(),
                                  e.pivot_index);
    }
}

Vector neumann_apply(const LdlFactors& f, const ComplexVector& d_diag,
                     const Vector& rhs, int k, NeumannReport* report) {
    Vector z = febs(f, rhs);
    Vector y = z;
    if (report) {
        report->terms_used = 0;
        report->truncated = false;
        report->term_norms.assign(1, z.norm());
        report->base_solution = z;
    }
    double prev_norm = z.norm();
    double sign = -1.0;
    for (int i = 1; i <= k; ++i) {
        z = febs(f, apply_complex_diag(d_diag, z));
        const double nz = z.norm();
        if (report) report->term_norms.push_back(nz);
        if (nz > prev_norm) {
            // growing terms mean the series is diverging; stop adding them
            if (report) report->truncated = true;
            break;
        }
        y += sign * z;
        sign = -sign;
        prev_norm = nz;
        if (report) report->terms_used = i;
    }
    return y;
}

std::pair<VoltageState, SolveStats> npfs_solve(const LdlFactors& f,
                                               const NetworkModel& net,
                                               const LoadProfile& s_spec,
                                               const VoltageState& x0,
                                               const NpfsConfig& cfg) {
    const auto t0 = std::chrono::steady_clock::now();
    VoltageState x = x0;
    x.sync();

    SolveStats stats;
    stats.neumann_terms_per_iter = cfg.k_neumann;
    if (cfg.check_margin) stats.margin = convergence_margin(net, x);

    Vector g = mismatch(net, x, s_spec);
    double res = g.lpNorm<Eigen::Infinity>();

    ComplexVector d_diag;
    bool d_ready = false;

    int iter = 0;
    while (res >= cfg.eps_newton && iter < cfg.max_newton_iters) {
        const ComplexVector v = x.phasor();
        const bool refresh = cfg.d_update_policy == DUpdatePolicy::full ||
                             !d_ready ||
                             (cfg.d_update_policy == DUpdatePolicy::every_m &&
                              iter % std::max(1, cfg.d_update_period) == 0);
        if (refresh) {
            d_diag = perturbation_diag(v, injected_currents(net, x));
            d_ready = true;
        }

        const Vector bb = divide_by_voltage(v, -g);
        NeumannReport rep;
        Vector y = neumann_apply(f, d_diag, bb, cfg.k_neumann, &rep);
        if (rep.truncated) {
            // series unusable at this state: take the constant-matrix step
            y = rep.base_solution;
            ++stats.guard_truncations;
        }

        try {
            x.apply_polar_delta(solve_r_block(x, y));
        } catch (const SingularBlockError&) {
            // a collapsed bus voltage ends the solve as a non-convergence
            ++iter;
            break;
        }

        g = mismatch(net, x, s_spec);
        res = g.lpNorm<Eigen::Infinity>();
        ++iter;
    }

    stats.newton_iters = iter;
    stats.final_residual_inf = res;
    stats.converged = res < cfg.eps_newton;
    stats.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return {std::move(x), stats};
}

MarginReport convergence_margin_report(const NetworkModel& net, const VoltageState& vs) {
    MarginReport rep;

    SparseComplex line_matrix = net.ybus_reduced();
    if (auto sh = net.shunt_diag_reduced()) {
        std::vector<Eigen::Triplet<Complex>> trips;
        for (int i = 0; i < sh->size(); ++i)
            if ((*sh)(i) != Complex(0.0, 0.0)) trips.emplace_back(i, i, -(*sh)(i));
        SparseComplex neg(line_matrix.rows(), line_matrix.cols());
        neg.setFromTriplets(trips.begin(), trips.end());
        line_matrix += neg;
        rep.exact_line_matrix = true;
    }

    const int n = static_cast<int>(line_matrix.rows());
    auto apply = [&](const Vector& in, Vector& out) {
        ComplexVector z(n);
        for (int i = 0; i < n; ++i) z(i) = Complex(in(i), in(n + i));
        const ComplexVector w = line_matrix * z;
        out.resize(2 * n);
        for (int i = 0; i < n; ++i) {
            out(i) = w(i).real();
            out(n + i) = w(i).imag();
        }
    };
    rep.rho_estimate = spectral_radius_estimate(apply, 2 * n, 200, 0x5eedULL);

    const ComplexVector v = vs.phasor();
    const ComplexVector cur = injected_currents(net, vs);
    double worst = 0.0;
    for (int i = 0; i < cur.size(); ++i) {
        const double vm = std::abs(v(i));
        if (vm == 0.0) continue;
        worst = std::max(worst, std::abs(cur(i)) / vm);
    }
    rep.max_scaled_current = worst;
    rep.ratio = (worst == 0.0) ? std::numeric_limits<double>::infinity()
                               : rep.rho_estimate / worst;
    return rep;
}

double convergence_margin(const NetworkModel& net, const VoltageState& vs) {
    return convergence_margin_report(net, vs).ratio;
}

} // namespace appfkit
