#pragma once

// Test-only reference implementations, kept independent of the library code
// paths they are used to check.

#include <cmath>
#include <complex>
#include <random>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "appfkit/netmodel.hpp"
#include "appfkit/pfcore.hpp"

namespace oracles {

using appfkit::Complex;
using appfkit::ComplexVector;
using appfkit::Vector;

inline std::string fixture(const std::string& name) {
    return std::string(FIXTURES_DIR) + "/" + name;
}

// dense Gaussian elimination with partial pivoting
inline Vector dense_solve(Eigen::MatrixXd a, Vector b) {
    const int n = static_cast<int>(a.rows());
    for (int k = 0; k < n; ++k) {
        int piv = k;
        for (int i = k + 1; i < n; ++i)
            if (std::abs(a(i, k)) > std::abs(a(piv, k))) piv = i;
        if (a(piv, k) == 0.0) throw std::runtime_error("oracle: singular matrix");
        if (piv != k) {
            a.row(piv).swap(a.row(k));
            std::swap(b(piv), b(k));
        }
        for (int i = k + 1; i < n; ++i) {
            const double f = a(i, k) / a(k, k);
            a.row(i).tail(n - k) -= f * a.row(k).tail(n - k);
            b(i) -= f * b(k);
        }
    }
    Vector x(n);
    for (int i = n - 1; i >= 0; --i) {
        double s = b(i);
        for (int j = i + 1; j < n; ++j) s -= a(i, j) * x(j);
        x(i) = s / a(i, i);
    }
    return x;
}

// classical Jacobi eigenvalue iteration for symmetric matrices; returns
// eigenvalues sorted descending
inline Vector jacobi_eigenvalues(Eigen::MatrixXd a, int sweeps = 100) {
    const int n = static_cast<int>(a.rows());
    for (int sweep = 0; sweep < sweeps; ++sweep) {
        double off = 0.0;
        for (int p = 0; p < n; ++p)
            for (int q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
        if (off < 1e-30) break;
        for (int p = 0; p < n; ++p)
            for (int q = p + 1; q < n; ++q) {
                if (a(p, q) == 0.0) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (int k = 0; k < n; ++k) {
                    const double akp = a(k, p), akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (int k = 0; k < n; ++k) {
                    const double apk = a(p, k), aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
            }
    }
    Vector ev = a.diagonal();
    std::sort(ev.data(), ev.data() + n, std::greater<double>());
    return ev;
}

// polar power-flow equations evaluated as the trigonometric double sum over
// the FULL network (substation phasors substituted for the fixed slots)
inline Vector trig_injections(const appfkit::NetworkModel& net,
                              const appfkit::VoltageState& vs) {
    const int nt = net.n_total();
    const int n = net.n();
    Eigen::MatrixXcd y = Eigen::MatrixXcd(net.ybus_full());

    Vector vm(nt), va(nt);
    for (int i = 0; i < nt; ++i) {
        const int r = net.to_reduced(i);
        if (r >= 0) {
            vm(i) = vs.mag()(r);
            va(i) = vs.ang()(r);
        } else {
            int k = 0;
            for (size_t s = 0; s < net.substation_slots().size(); ++s)
                if (net.substation_slots()[s] == i) k = static_cast<int>(s);
            vm(i) = std::abs(net.substation_voltage()(k));
            va(i) = std::arg(net.substation_voltage()(k));
        }
    }

    Vector out(2 * n);
    for (int r = 0; r < n; ++r) {
        const int i = net.to_full(r);
        double p = 0.0, q = 0.0;
        for (int k = 0; k < nt; ++k) {
            const double g = y(i, k).real(), b = y(i, k).imag();
            if (g == 0.0 && b == 0.0) continue;
            const double th = va(i) - va(k);
            p += vm(i) * vm(k) * (g * std::cos(th) + b * std::sin(th));
            q += vm(i) * vm(k) * (g * std::sin(th) - b * std::cos(th));
        }
        out(r) = p;
        out(n + r) = q;
    }
    return out;
}

// central finite differences of the stacked mismatch in polar coordinates
inline Eigen::MatrixXd fd_jacobian_polar(const appfkit::NetworkModel& net,
                                         const appfkit::VoltageState& vs,
                                         double h = 1e-6) {
    const int n = net.n();
    const Vector x0 = vs.polar_stacked();
    Eigen::MatrixXd j(2 * n, 2 * n);
    for (int c = 0; c < 2 * n; ++c) {
        Vector xp = x0, xm = x0;
        xp(c) += h;
        xm(c) -= h;
        const auto sp = appfkit::power_injections(net, appfkit::VoltageState::from_polar_stacked(xp));
        const auto sm = appfkit::power_injections(net, appfkit::VoltageState::from_polar_stacked(xm));
        j.col(c) = (sp.stacked() - sm.stacked()) / (2.0 * h);
    }
    return j;
}

inline Eigen::MatrixXd fd_jacobian_cartesian(const appfkit::NetworkModel& net,
                                             const appfkit::VoltageState& vs,
                                             double h = 1e-6) {
    const int n = net.n();
    const Vector x0 = vs.cartesian_stacked();
    Eigen::MatrixXd j(2 * n, 2 * n);
    for (int c = 0; c < 2 * n; ++c) {
        Vector xp = x0, xm = x0;
        xp(c) += h;
        xm(c) -= h;
        const auto sp =
            appfkit::power_injections(net, appfkit::VoltageState::from_cartesian_stacked(xp));
        const auto sm =
            appfkit::power_injections(net, appfkit::VoltageState::from_cartesian_stacked(xm));
        j.col(c) = (sp.stacked() - sm.stacked()) / (2.0 * h);
    }
    return j;
}

// full Newton with a finite-difference Jacobian and the trigonometric
// injection oracle: shares no derivative code with the library
inline appfkit::VoltageState dense_newton(const appfkit::NetworkModel& net,
                                          const appfkit::LoadProfile& s_spec,
                                          const appfkit::VoltageState& x0,
                                          double eps = 1e-10, int max_iters = 50) {
    appfkit::VoltageState x = x0;
    for (int it = 0; it < max_iters; ++it) {
        const Vector g = trig_injections(net, x) - s_spec.stacked();
        if (g.lpNorm<Eigen::Infinity>() < eps) break;
        const Eigen::MatrixXd j = fd_jacobian_polar(net, x);
        const Vector dx = dense_solve(j, -g);
        Vector xs = x.polar_stacked();
        xs += dx;
        x = appfkit::VoltageState::from_polar_stacked(xs);
    }
    return x;
}

// random symmetric diagonally-dominant sparse matrix
inline appfkit::SparseReal random_sdd(int n, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> uni(-1.0, 1.0);
    std::uniform_int_distribution<int> pick(0, n - 1);
    std::vector<Eigen::Triplet<double>> trips;
    Vector diag = Vector::Zero(n);
    const int extras = 3 * n;
    for (int e = 0; e < extras; ++e) {
        const int i = pick(rng);
        const int j = pick(rng);
        if (i == j) continue;
        const double v = uni(rng);
        trips.emplace_back(i, j, v);
        trips.emplace_back(j, i, v);
        diag(i) += std::abs(v);
        diag(j) += std::abs(v);
    }
    for (int i = 0; i < n; ++i) trips.emplace_back(i, i, diag(i) + 1.0 + std::abs(uni(rng)));
    appfkit::SparseReal a(n, n);
    a.setFromTriplets(trips.begin(), trips.end());
    a.makeCompressed();
    return a;
}

// small random radial network for property tests
inline appfkit::NetworkModel random_network(int buses, std::mt19937_64& rng,
                                            bool with_shunts = false) {
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    std::vector<appfkit::LineRecord> lines;
    for (int b = 1; b < buses; ++b) {
        const int p = (b == 1) ? 0 : static_cast<int>(uni(rng) * b) % b;
        const Complex z(0.002 + 0.006 * uni(rng), 0.005 + 0.012 * uni(rng));
        lines.push_back({p, b, 1.0 / z});
    }
    ComplexVector shunts = ComplexVector::Zero(buses);
    if (with_shunts)
        for (int b = 1; b < buses; ++b) shunts(b) = Complex(0.0, 0.001 * uni(rng));

    appfkit::NetworkBuilder nb;
    nb.n_total = buses;
    nb.ybus_full = appfkit::build_ybus(lines, shunts, buses);
    if (with_shunts) nb.shunt_diag = shunts;
    nb.substation_slots = {0};
    nb.substation_voltages.resize(1);
    nb.substation_voltages(0) = Complex(1.0, 0.0);
    nb.bus_base_kv.assign(buses, 7.2);
    for (int b = 1; b < buses; ++b)
        nb.loads.emplace_back(b, -0.02 * uni(rng), -0.008 * uni(rng));
    return appfkit::reduce_network(std::move(nb));
}

// random synchronized state near nominal
inline appfkit::VoltageState random_state(int n, std::mt19937_64& rng, double spread = 0.1) {
    std::uniform_real_distribution<double> uni(-1.0, 1.0);
    Vector vm(n), va(n);
    for (int i = 0; i < n; ++i) {
        vm(i) = 1.0 + spread * uni(rng);
        va(i) = 0.3 * spread * uni(rng);
    }
    return appfkit::VoltageState::from_polar(vm, va);
}

} // namespace oracles
