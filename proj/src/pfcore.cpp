#include "appfkit/pfcore.hpp"

#include <cmath>

namespace appfkit {

VoltageState VoltageState::from_polar(Vector mag, Vector ang) {
    if (mag.size() != ang.size())
        throw ValidationError("polar component length mismatch");
    for (int i = 0; i < mag.size(); ++i)
        if (mag(i) < 0.0)
            throw ValidationError("negative voltage magnitude at bus " + std::to_string(i));
    VoltageState vs;
    vs.mag_ = std::move(mag);
    vs.ang_ = std::move(ang);
    vs.view_ = View::polar;
    vs.sync_cartesian();
    return vs;
}

VoltageState VoltageState::from_cartesian(Vector re, Vector im) {
    if (re.size() != im.size())
        throw ValidationError("cartesian component length mismatch");
    VoltageState vs;
    vs.re_ = std::move(re);
    vs.im_ = std::move(im);
    vs.view_ = View::cartesian;
    vs.sync_polar();
    return vs;
}

VoltageState VoltageState::flat_start(const NetworkModel& net) {
    const int n = net.n();
    Vector mag = Vector::Ones(n);
    Vector ang = Vector::Zero(n);
    if (!net.phase_labels().empty()) {
        // phase slots start at the substation angle of the matching phase
        double phase_ang[3] = {0.0, -2.0 * M_PI / 3.0, 2.0 * M_PI / 3.0};
        for (size_t k = 0; k < net.substation_slots().size(); ++k) {
            const std::string& lbl = net.phase_labels()[net.substation_slots()[k]];
            const double a = std::arg(net.substation_voltage()(static_cast<Eigen::Index>(k)));
            if (lbl == "a") phase_ang[0] = a;
            else if (lbl == "b") phase_ang[1] = a;
            else if (lbl == "c") phase_ang[2] = a;
        }
        for (int i = 0; i < n; ++i) {
            const std::string& lbl = net.phase_labels()[net.to_full(i)];
            if (lbl == "a") ang(i) = phase_ang[0];
            else if (lbl == "b") ang(i) = phase_ang[1];
            else if (lbl == "c") ang(i) = phase_ang[2];
        }
    }
    return from_polar(std::move(mag), std::move(ang));
}

void VoltageState::sync_polar() const {
    if (view_ == View::polar || view_ == View::both) return;
    const int n = static_cast<int>(re_.size());
    mag_.resize(n);
    ang_.resize(n);
    for (int i = 0; i < n; ++i) {
        mag_(i) = std::hypot(re_(i), im_(i));
        ang_(i) = (mag_(i) == 0.0) ? 0.0 : std::atan2(im_(i), re_(i));
    }
    view_ = View::both;
}

void VoltageState::sync_cartesian() const {
    if (view_ == View::cartesian || view_ == View::both) return;
    const int n = static_cast<int>(mag_.size());
    re_.resize(n);
    im_.resize(n);
    for (int i = 0; i < n; ++i) {
        re_(i) = mag_(i) * std::cos(ang_(i));
        im_(i) = mag_(i) * std::sin(ang_(i));
    }
    view_ = View::both;
}

ComplexVector VoltageState::phasor() const {
    sync_cartesian();
    ComplexVector v(re_.size());
    for (int i = 0; i < re_.size(); ++i) v(i) = Complex(re_(i), im_(i));
    return v;
}

Vector VoltageState::polar_stacked() const {
    sync_polar();
    Vector x(2 * mag_.size());
    x.head(mag_.size()) = mag_;
    x.tail(ang_.size()) = ang_;
    return x;
}

Vector VoltageState::cartesian_stacked() const {
    sync_cartesian();
    Vector x(2 * re_.size());
    x.head(re_.size()) = re_;
    x.tail(im_.size()) = im_;
    return x;
}

VoltageState VoltageState::from_polar_stacked(const Vector& x) {
    const auto n = x.size() / 2;
    return from_polar(x.head(n), x.tail(n));
}

VoltageState VoltageState::from_cartesian_stacked(const Vector& xc) {
    const auto n = xc.size() / 2;
    return from_cartesian(xc.head(n), xc.tail(n));
}

void VoltageState::apply_polar_delta(const Vector& dx) {
    sync_polar();
    const int n = static_cast<int>(mag_.size());
    if (dx.size() != 2 * n) throw ValidationError("polar delta length mismatch");
    for (int i = 0; i < n; ++i) {
        double v = mag_(i) + dx(i);
        double t = ang_(i) + dx(n + i);
        if (v < 0.0) {  // same phasor, flipped representation
            v = -v;
            t += M_PI;
        }
        mag_(i) = v;
        ang_(i) = t;
    }
    view_ = View::polar;
    sync_cartesian();
}

VoltageState polar_to_cartesian(const VoltageState& vs) {
    return VoltageState::from_cartesian(vs.re(), vs.im());
}

VoltageState cartesian_to_polar(const VoltageState& vs) {
    return VoltageState::from_polar(vs.mag(), vs.ang());
}

RealBlockMatrix real_block_diag(const ComplexVector& z) {
    const int n = static_cast<int>(z.size());
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(4 * n);
    for (int i = 0; i < n; ++i) {
        trips.emplace_back(i, i, z(i).real());
        trips.emplace_back(i, n + i, -z(i).imag());
        trips.emplace_back(n + i, i, z(i).imag());
        trips.emplace_back(n + i, n + i, z(i).real());
    }
    RealBlockMatrix m(2 * n, 2 * n);
    m.setFromTriplets(trips.begin(), trips.end());
    m.makeCompressed();
    return m;
}

ComplexVector injected_currents(const NetworkModel& net, const VoltageState& vs) {
    const ComplexVector v = vs.phasor();
    ComplexVector i = net.ybus_reduced() * v;
    if (net.sub_coupling().cols() > 0)
        i += net.sub_coupling() * net.substation_voltage();
    return i;
}

LoadProfile power_injections(const NetworkModel& net, const VoltageState& vs) {
    const ComplexVector v = vs.phasor();
    const ComplexVector cur = injected_currents(net, vs);
    LoadProfile s;
    s.p.resize(v.size());
    s.q.resize(v.size());
    for (int k = 0; k < v.size(); ++k) {
        const Complex sk = v(k) * std::conj(cur(k));
        s.p(k) = sk.real();
        s.q(k) = sk.imag();
    }
    return s;
}

Vector mismatch(const NetworkModel& net, const VoltageState& vs, const LoadProfile& s_spec) {
    const LoadProfile s = power_injections(net, vs);
    Vector g(2 * s.size());
    g.head(s.size()) = s.p - s_spec.p;
    g.tail(s.size()) = s.q - s_spec.q;
    return g;
}

RealBlockMatrix build_n_ybus(const NetworkModel& net) {
    const auto& y = net.ybus_reduced();
    const int n = static_cast<int>(y.rows());
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(4 * y.nonZeros());
    for (int c = 0; c < y.outerSize(); ++c)
        for (SparseComplex::InnerIterator it(y, c); it; ++it) {
            const int i = static_cast<int>(it.row());
            const int j = static_cast<int>(it.col());
            const double g = it.value().real();
            const double b = it.value().imag();
            if (g != 0.0) {
                trips.emplace_back(i, j, g);
                trips.emplace_back(n + i, n + j, -g);
            }
            if (b != 0.0) {
                trips.emplace_back(i, n + j, -b);
                trips.emplace_back(n + i, j, -b);
            }
        }
    RealBlockMatrix m(2 * n, 2 * n);
    m.setFromTriplets(trips.begin(), trips.end());
    m.makeCompressed();
    return m;
}

RealBlockMatrix jacobian_cartesian(const NetworkModel& net, const VoltageState& vs) {
    const ComplexVector cur = injected_currents(net, vs);
    RealBlockMatrix j = real_block_diag(cur.conjugate());
    j += RealBlockMatrix(real_block_diag(vs.phasor()) * build_n_ybus(net));
    j.makeCompressed();
    return j;
}

RealBlockMatrix r_matrix(const VoltageState& vs) {
    const int n = vs.size();
    const Vector& v = vs.mag();
    const Vector& t = vs.ang();
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(4 * n);
    for (int i = 0; i < n; ++i) {
        const double c = std::cos(t(i)), s = std::sin(t(i));
        trips.emplace_back(i, i, c);
        trips.emplace_back(i, n + i, -v(i) * s);
        trips.emplace_back(n + i, i, s);
        trips.emplace_back(n + i, n + i, v(i) * c);
    }
    RealBlockMatrix r(2 * n, 2 * n);
    r.setFromTriplets(trips.begin(), trips.end());
    r.makeCompressed();
    return r;
}

RealBlockMatrix jacobian_polar(const NetworkModel& net, const VoltageState& vs) {
    RealBlockMatrix j(jacobian_cartesian(net, vs) * r_matrix(vs));
    j.makeCompressed();
    return j;
}

Vector hessian_apply(const NetworkModel& net, const Vector& u, const Vector& w) {
    const int n = net.n();
    if (u.size() != 2 * n || w.size() != 2 * n)
        throw ValidationError("hessian_apply operand length mismatch");
    ComplexVector uc(n), wc(n);
    for (int i = 0; i < n; ++i) {
        uc(i) = Complex(u(i), u(n + i));
        wc(i) = Complex(w(i), w(n + i));
    }
    const ComplexVector yu = net.ybus_reduced() * uc;
    const ComplexVector yw = net.ybus_reduced() * wc;
    Vector h(2 * n);
    for (int i = 0; i < n; ++i) {
        const Complex hk = uc(i) * std::conj(yw(i)) + wc(i) * std::conj(yu(i));
        h(i) = hk.real();
        h(n + i) = hk.imag();
    }
    return h;
}

Vector solve_r_block(const VoltageState& vs, const Vector& y) {
    const int n = vs.size();
    if (y.size() != 2 * n) throw ValidationError("solve_r_block rhs length mismatch");
    const Vector& v = vs.mag();
    const Vector& t = vs.ang();
    Vector dx(2 * n);
    for (int i = 0; i < n; ++i) {
        if (v(i) < 1e-9)
            throw SingularBlockError("coordinate block singular at bus " + std::to_string(i) +
                                         " (|V| ~ 0)",
                                     i);
        const double c = std::cos(t(i)), s = std::sin(t(i));
        // inverse of [[c, -V s], [s, V c]], det = V
        dx(i) = c * y(i) + s * y(n + i);
        dx(n + i) = (-s * y(i) + c * y(n + i)) / v(i);
    }
    return dx;
}

} // namespace appfkit
