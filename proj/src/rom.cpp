#include "appfkit/rom.hpp"

#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "appfkit/errors.hpp"

namespace appfkit {

using nlohmann::json;

Vector ReducedModel::x_c0_hat() const {
    Vector v = Vector::Zero(q());
    v(0) = x_c0_.norm();
    return v;
}

Vector ReducedModel::project_injections(const Vector& s_stacked) const {
    return j_hat_.transpose() * s_stacked;
}

ReducedModel rom_init(const NetworkModel& net, const VoltageState& x0,
                      const LoadProfile& s0, const RomConfig& cfg) {
    ReducedModel rm;
    rm.cfg_ = cfg;
    rm.x_c0_ = x0.cartesian_stacked();
    const double nrm = rm.x_c0_.norm();
    if (nrm == 0.0) throw ValidationError("nominal state is zero; cannot seed the basis");

    rm.s0_ = s0.stacked();
    rm.j_c0_ = jacobian_cartesian(net, x0);

    rm.basis_ = rm.x_c0_ / nrm;
    rm.j_hat_ = rm.j_c0_ * rm.basis_;
    rm.g_hat_ = rm.j_hat_.transpose() * rm.j_hat_;
    rm.h_v_ = hessian_apply(net, rm.basis_.col(0), rm.basis_.col(0));
    rm.h_hat_ = rm.j_hat_.transpose() * rm.h_v_;
    rm.s0_hat_ = rm.j_hat_.transpose() * rm.s0_;
    rm.delta_x_hat_ = Vector::Zero(1);
    rm.q_h_ = 1;
    rm.g_fact_.compute(rm.g_hat_);
    return rm;
}

Vector reduced_residual(const ReducedModel& rm, const Vector& delta, const Vector& s_hat) {
    if (delta.size() != rm.q() || s_hat.size() != rm.q())
        throw ValidationError("reduced vector length mismatch");
    Vector g = rm.s0_hat() + rm.g_hat() * delta - s_hat;
    const int qh = rm.q_h();
    if (qh > 0) {
        Vector kron(qh * qh);
        for (int i = 0; i < qh; ++i)
            for (int j = 0; j < qh; ++j) kron(i * qh + j) = delta(i) * delta(j);
        g += 0.5 * (rm.h_hat() * kron);
    }
    return g;
}

// Grants rms_solve/dse_update access to the model internals.
struct RmsAccess {
    static Eigen::MatrixXd& basis(ReducedModel& rm) { return rm.basis_; }
    static Eigen::MatrixXd& j_hat(ReducedModel& rm) { return rm.j_hat_; }
    static Eigen::MatrixXd& g_hat(ReducedModel& rm) { return rm.g_hat_; }
    static Eigen::MatrixXd& h_v(ReducedModel& rm) { return rm.h_v_; }
    static Eigen::MatrixXd& h_hat(ReducedModel& rm) { return rm.h_hat_; }
    static Vector& s0_hat(ReducedModel& rm) { return rm.s0_hat_; }
    static Vector& delta_x_hat(ReducedModel& rm) { return rm.delta_x_hat_; }
    static Vector& x_c0(ReducedModel& rm) { return rm.x_c0_; }
    static Vector& s0(ReducedModel& rm) { return rm.s0_; }
    static SparseReal& j_c0(ReducedModel& rm) { return rm.j_c0_; }
    static Eigen::LDLT<Eigen::MatrixXd>& g_fact(ReducedModel& rm) { return rm.g_fact_; }
    static int& q_h(ReducedModel& rm) { return rm.q_h_; }
    static RomConfig& cfg(ReducedModel& rm) { return rm.cfg_; }
};

RmsResult rms_solve(ReducedModel& rm, const Vector& s_hat,
                    const NetworkModel& net, const LoadProfile& s_spec) {
    RmsResult out;
    Vector delta = rm.delta_x_hat();
    Vector g = reduced_residual(rm, delta, s_hat);

    int it = 0;
    while (g.lpNorm<Eigen::Infinity>() >= rm.config().eps_rms &&
           it < rm.config().max_rms_iters) {
        delta -= RmsAccess::g_fact(rm).solve(g);
        g = reduced_residual(rm, delta, s_hat);
        ++it;
    }

    out.iters = it;
    out.reduced_converged = g.lpNorm<Eigen::Infinity>() < rm.config().eps_rms;
    out.delta = delta;

    const Vector xc = rm.x_c0() + rm.basis() * delta;
    out.state = VoltageState::from_cartesian_stacked(xc);
    out.full_residual_inf =
        mismatch(net, out.state, s_spec).lpNorm<Eigen::Infinity>();

    RmsAccess::delta_x_hat(rm) = std::move(delta);
    return out;
}

ExpansionReport dse_update(ReducedModel& rm, const VoltageState& x_full,
                           const NetworkModel& net) {
    ExpansionReport rep;
    rep.q_after = rm.q();

    const Vector xc = x_full.cartesian_stacked();
    const Eigen::MatrixXd& v = rm.basis();
    Vector r = xc - v * (v.transpose() * xc);
    rep.residual_norm = r.norm();
    if (rep.residual_norm <= rm.config().eps_basis) return rep;

    // second projection pass controls orthogonality drift
    r -= v * (v.transpose() * r);
    const double rn2 = r.norm();
    if (rn2 == 0.0) return rep;
    const Vector v_new = r / rn2;

    const int q_old = rm.q();
    const int q_new = q_old + 1;
    const Vector x_j = rm.j_c0() * v_new;

    // bordered Gram matrix of the new Jacobian block
    Eigen::MatrixXd g_new(q_new, q_new);
    g_new.topLeftCorner(q_old, q_old) = rm.g_hat();
    g_new.topRightCorner(q_old, 1) = rm.j_hat().transpose() * x_j;
    g_new.bottomLeftCorner(1, q_old) = g_new.topRightCorner(q_old, 1).transpose();
    g_new(q_old, q_old) = x_j.squaredNorm();

    Eigen::MatrixXd j_new(rm.j_hat().rows(), q_new);
    j_new.leftCols(q_old) = rm.j_hat();
    j_new.col(q_old) = x_j;

    const int qh_old = rm.q_h();
    if (q_new <= rm.config().n_q) {
        // grow the quadratic block: reindex old Kronecker columns and add the
        // pairs touching the new direction (Hessian symmetry halves the work)
        const int qh_new = q_new;
        const auto rows = rm.h_v().rows();
        Eigen::MatrixXd hv_new(rows, qh_new * qh_new);
        Eigen::MatrixXd hh_new(q_new, qh_new * qh_new);

        for (int i = 0; i < qh_old; ++i)
            for (int j = 0; j < qh_old; ++j) {
                const int src = i * qh_old + j;
                const int dst = i * qh_new + j;
                hv_new.col(dst) = rm.h_v().col(src);
                hh_new.col(dst).head(q_old) = rm.h_hat().col(src);
                hh_new.col(dst)(q_old) = x_j.dot(rm.h_v().col(src));
            }

        const int nw = qh_new - 1;
        for (int i = 0; i < nw; ++i) {
            const Vector col = hessian_apply(net, rm.basis().col(i), v_new);
            hv_new.col(i * qh_new + nw) = col;
            hv_new.col(nw * qh_new + i) = col;
            const Vector proj = j_new.transpose() * col;
            hh_new.col(i * qh_new + nw) = proj;
            hh_new.col(nw * qh_new + i) = proj;
        }
        const Vector diag_col = hessian_apply(net, v_new, v_new);
        hv_new.col(nw * qh_new + nw) = diag_col;
        hh_new.col(nw * qh_new + nw) = j_new.transpose() * diag_col;

        RmsAccess::h_v(rm) = std::move(hv_new);
        RmsAccess::h_hat(rm) = std::move(hh_new);
        RmsAccess::q_h(rm) = qh_new;
    } else {
        // curtailed: quadratic block frozen, the new coordinate enters linearly
        Eigen::MatrixXd hh_new(q_new, rm.h_hat().cols());
        hh_new.topRows(q_old) = rm.h_hat();
        hh_new.bottomRows(1) = x_j.transpose() * rm.h_v();
        RmsAccess::h_hat(rm) = std::move(hh_new);
    }

    Vector s0_new(q_new);
    s0_new.head(q_old) = rm.s0_hat();
    s0_new(q_old) = x_j.dot(rm.s0());
    RmsAccess::s0_hat(rm) = std::move(s0_new);

    Vector d_new(q_new);
    d_new.head(q_old) = rm.delta_x_hat();
    d_new(q_old) = rep.residual_norm;
    RmsAccess::delta_x_hat(rm) = std::move(d_new);

    Eigen::MatrixXd v_ext(rm.basis().rows(), q_new);
    v_ext.leftCols(q_old) = rm.basis();
    v_ext.col(q_old) = v_new;
    RmsAccess::basis(rm) = std::move(v_ext);

    RmsAccess::j_hat(rm) = std::move(j_new);
    RmsAccess::g_hat(rm) = std::move(g_new);
    RmsAccess::g_fact(rm).compute(rm.g_hat());

    rep.expanded = true;
    rep.q_after = q_new;
    return rep;
}

namespace {

json matrix_to_json(const Eigen::MatrixXd& m) {
    json j;
    j["rows"] = m.rows();
    j["cols"] = m.cols();
    std::vector<double> data;
    data.reserve(static_cast<size_t>(m.size()));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
    j["data"] = data;  // row-major
    return j;
}

Eigen::MatrixXd matrix_from_json(const json& j) {
    const auto rows = j.at("rows").get<Eigen::Index>();
    const auto cols = j.at("cols").get<Eigen::Index>();
    const auto data = j.at("data").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(data.size()) != rows * cols)
        throw SchemaError("checkpoint matrix size mismatch");
    Eigen::MatrixXd m(rows, cols);
    size_t k = 0;
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = data[k++];
    return m;
}

} // namespace

void save_rom_checkpoint(const ReducedModel& rm, const std::string& path) {
    json j;
    j["format"] = "appfkit-rom-checkpoint-v1";
    j["basis"] = matrix_to_json(rm.basis());
    j["j_hat"] = matrix_to_json(rm.j_hat());
    j["g_hat"] = matrix_to_json(rm.g_hat());
    j["h_v"] = matrix_to_json(rm.h_v());
    j["h_hat"] = matrix_to_json(rm.h_hat());
    j["s0_hat"] = matrix_to_json(rm.s0_hat());
    j["delta_x_hat"] = matrix_to_json(rm.delta_x_hat());
    j["x_c0"] = matrix_to_json(rm.x_c0());
    j["s0"] = matrix_to_json(rm.s0());
    j["q_h"] = rm.q_h();
    j["config"] = {{"eps_rms", rm.config().eps_rms},
                   {"eps_basis", rm.config().eps_basis},
                   {"n_q", rm.config().n_q},
                   {"max_rms_iters", rm.config().max_rms_iters}};
    json trips = json::array();
    const auto& jc = rm.j_c0();
    for (int c = 0; c < jc.outerSize(); ++c)
        for (SparseReal::InnerIterator it(jc, c); it; ++it)
            trips.push_back({it.row(), it.col(), it.value()});
    j["j_c0"] = {{"n", jc.rows()}, {"triplets", trips}};

    const auto parent = std::filesystem::path(path).parent_path();
    if (!parent.empty()) {
        std::error_code ec;
        std::filesystem::create_directories(parent, ec);
    }
    std::ofstream out(path);
    if (!out) throw IoError("cannot write checkpoint " + path);
    out << j.dump() << "\n";
}

ReducedModel load_rom_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open checkpoint " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw SchemaError(std::string("invalid checkpoint JSON: ") + e.what());
    }
    if (j.value("format", "") != std::string("appfkit-rom-checkpoint-v1"))
        throw SchemaError("unrecognized checkpoint format");

    ReducedModel rm;
    try {
        RmsAccess::basis(rm) = matrix_from_json(j.at("basis"));
        RmsAccess::j_hat(rm) = matrix_from_json(j.at("j_hat"));
        RmsAccess::g_hat(rm) = matrix_from_json(j.at("g_hat"));
        RmsAccess::h_v(rm) = matrix_from_json(j.at("h_v"));
        RmsAccess::h_hat(rm) = matrix_from_json(j.at("h_hat"));
        RmsAccess::s0_hat(rm) = matrix_from_json(j.at("s0_hat"));
        RmsAccess::delta_x_hat(rm) = matrix_from_json(j.at("delta_x_hat"));
        RmsAccess::x_c0(rm) = matrix_from_json(j.at("x_c0"));
        RmsAccess::s0(rm) = matrix_from_json(j.at("s0"));
        RmsAccess::q_h(rm) = j.at("q_h").get<int>();
        auto& cfg = RmsAccess::cfg(rm);
        cfg.eps_rms = j.at("config").at("eps_rms").get<double>();
        cfg.eps_basis = j.at("config").at("eps_basis").get<double>();
        cfg.n_q = j.at("config").at("n_q").get<int>();
        cfg.max_rms_iters = j.at("config").at("max_rms_iters").get<int>();

        const auto n = j.at("j_c0").at("n").get<Eigen::Index>();
        std::vector<Eigen::Triplet<double>> trips;
        for (const auto& t : j.at("j_c0").at("triplets"))
            trips.emplace_back(t.at(0).get<int>(), t.at(1).get<int>(),
                               t.at(2).get<double>());
        auto& jc = RmsAccess::j_c0(rm);
        jc.resize(n, n);
        jc.setFromTriplets(trips.begin(), trips.end());
        jc.makeCompressed();
    } catch (const json::exception& e) {
        throw SchemaError(std::string("checkpoint schema violation: ") + e.what());
    }
    RmsAccess::g_fact(rm).compute(rm.g_hat());
    return rm;
}

} // namespace appfkit
