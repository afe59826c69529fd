#include "appfkit/ppf.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <thread>

#include <Eigen/SparseLU>

namespace appfkit {

using nlohmann::json;
namespace fs = std::filesystem;

const char* to_string(SolvePath p) {
    switch (p) {
        case SolvePath::rms_only: return "rms_only";
        case SolvePath::rms_then_npfs: return "rms_then_npfs";
        case SolvePath::npfs_only: return "npfs_only";
    }
    return "unknown";
}

SolvePath solve_path_from_string(const std::string& s) {
    if (s == "rms_only") return SolvePath::rms_only;
    if (s == "rms_then_npfs") return SolvePath::rms_then_npfs;
    if (s == "npfs_only") return SolvePath::npfs_only;
    throw SchemaError("unknown solve path '" + s + "'");
}

json RunRecord::to_json() const {
    return json{{"sample", sample_index},
                {"path", to_string(path)},
                {"rms_iters", rms_iters},
                {"newton_iters", newton_iters},
                {"expanded_basis", expanded_basis},
                {"q_after", q_after},
                {"wall_time_s", wall_time_s},
                {"final_residual_inf", final_residual_inf}};
}

RunRecord RunRecord::from_json(const json& j) {
    RunRecord r;
    r.sample_index = j.at("sample").get<int>();
    r.path = solve_path_from_string(j.at("path").get<std::string>());
    r.rms_iters = j.at("rms_iters").get<int>();
    r.newton_iters = j.at("newton_iters").get<int>();
    r.expanded_basis = j.at("expanded_basis").get<bool>();
    r.q_after = j.at("q_after").get<int>();
    r.wall_time_s = j.at("wall_time_s").get<double>();
    r.final_residual_inf = j.at("final_residual_inf").get<double>();
    return r;
}

bool RunRecord::same_outcome(const RunRecord& other) const {
    return sample_index == other.sample_index && path == other.path &&
           rms_iters == other.rms_iters && newton_iters == other.newton_iters &&
           expanded_basis == other.expanded_basis && q_after == other.q_after &&
           final_residual_inf == other.final_residual_inf;
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

// Full Newton with a direct sparse solve of the polar Jacobian per iteration.
std::pair<VoltageState, SolveStats> newton_solve_direct(const NetworkModel& net,
                                                        const LoadProfile& s_spec,
                                                        const VoltageState& x0,
                                                        const NpfsConfig& cfg) {
    const auto t0 = Clock::now();
    VoltageState x = x0;
    x.sync();

    SolveStats stats;
    Vector g = mismatch(net, x, s_spec);
    double res = g.lpNorm<Eigen::Infinity>();

    int iter = 0;
    while (res >= cfg.eps_newton && iter < cfg.max_newton_iters) {
        RealBlockMatrix j = jacobian_polar(net, x);
        Eigen::SparseLU<RealBlockMatrix> lu;
        lu.compute(j);
        if (lu.info() != Eigen::Success)
            throw SingularMatrixError("polar Jacobian is singular", -1);
        const Vector dx = lu.solve(-g);
        x.apply_polar_delta(dx);
        g = mismatch(net, x, s_spec);
        res = g.lpNorm<Eigen::Infinity>();
        ++iter;
    }

    stats.newton_iters = iter;
    stats.final_residual_inf = res;
    stats.converged = res < cfg.eps_newton;
    stats.wall_time_s = seconds_since(t0);
    return {std::move(x), stats};
}

} // namespace

PpfResult appf_run(const NetworkModel& net, const std::vector<LoadProfile>& samples,
                   const PpfOptions& opt) {
    const auto t0 = Clock::now();
    const LdlFactors factors = prepare(net);
    const double t_factor = seconds_since(t0);

    auto [x_nom, nom_stats] = npfs_solve(factors, net, net.nominal_loads(),
                                         VoltageState::flat_start(net), opt.npfs);
    if (!nom_stats.converged)
        throw NonConvergenceError("nominal load did not converge from flat start", -1,
                                  nom_stats.newton_iters, nom_stats.final_residual_inf);
    const double t_nominal = seconds_since(t0) - t_factor;

    ReducedModel rm = rom_init(net, x_nom, power_injections(net, x_nom), opt.rom);
    const double t_init = seconds_since(t0) - t_factor - t_nominal;

    PpfResult result = appf_run(net, samples, opt, rm, factors);
    result.setup_time_s = result.setup_time_s + seconds_since(t0) - result.total_time_s;
    result.phase_times["factorization_s"] = t_factor;
    result.phase_times["nominal_solve_s"] = t_nominal;
    result.phase_times["model_init_s"] = t_init;
    return result;
}

PpfResult appf_run(const NetworkModel& net, const std::vector<LoadProfile>& samples,
                   const PpfOptions& opt, ReducedModel& rm, const LdlFactors& factors) {
    const auto t0 = Clock::now();
    const int m = static_cast<int>(samples.size());

    PpfResult result;
    result.solutions.resize(2 * net.n(), m);
    result.records.reserve(m);
    result.config_echo = opt.config_echo;

    double t_rms = 0.0, t_npfs = 0.0, t_dse = 0.0;
    for (int i = 0; i < m; ++i) {
        const auto ts = Clock::now();
        RunRecord rec;
        rec.sample_index = i;

        const Vector s_hat = rm.project_injections(samples[i].stacked());
        RmsResult rms = rms_solve(rm, s_hat, net, samples[i]);
        rec.rms_iters = rms.iters;
        t_rms += seconds_since(ts);

        if (rms.full_residual_inf < opt.npfs.eps_newton) {
            rec.path = SolvePath::rms_only;
            rec.final_residual_inf = rms.full_residual_inf;
            result.solutions.col(i) = rms.state.polar_stacked();
        } else {
            const auto tn = Clock::now();
            auto [x, stats] = npfs_solve(factors, net, samples[i], rms.state, opt.npfs);
            if (!stats.converged)
                throw NonConvergenceError("sample " + std::to_string(i) +
                                              " did not converge in the full-order solver",
                                          i, stats.newton_iters, stats.final_residual_inf);
            t_npfs += seconds_since(tn);
            const auto td = Clock::now();
            const ExpansionReport exp = dse_update(rm, x, net);
            t_dse += seconds_since(td);
            rec.path = SolvePath::rms_then_npfs;
            rec.newton_iters = stats.newton_iters;
            rec.expanded_basis = exp.expanded;
            rec.final_residual_inf = stats.final_residual_inf;
            result.solutions.col(i) = x.polar_stacked();
        }

        rec.q_after = rm.q();
        rec.wall_time_s = seconds_since(ts);
        result.records.push_back(rec);
    }

    result.rom_final_q = rm.q();
    result.total_time_s = seconds_since(t0);
    result.phase_times["reduced_solves_s"] = t_rms;
    result.phase_times["full_order_solves_s"] = t_npfs;
    result.phase_times["expansions_s"] = t_dse;
    return result;
}

PpfResult traditional_ppf_run(const NetworkModel& net,
                              const std::vector<LoadProfile>& samples,
                              const PpfOptions& opt) {
    const auto t0 = Clock::now();
    const int m = static_cast<int>(samples.size());

    const VoltageState flat = VoltageState::flat_start(net);
    NpfsConfig nom_cfg = opt.npfs;
    auto [x_nom, nom_stats] = newton_solve_direct(net, net.nominal_loads(), flat, nom_cfg);
    if (!nom_stats.converged)
        throw NonConvergenceError("nominal load did not converge from flat start", -1,
                                  nom_stats.newton_iters, nom_stats.final_residual_inf);

    PpfResult result;
    result.solutions.resize(2 * net.n(), m);
    result.records.resize(m);
    result.config_echo = opt.config_echo;
    result.setup_time_s = seconds_since(t0);

    const int workers = std::clamp(opt.workers, 1, 64);
    auto run_chunk = [&](int begin, int end) {
        VoltageState warm = x_nom;  // per-worker warm-start chain
        for (int i = begin; i < end; ++i) {
            const auto ts = Clock::now();
            auto [x, stats] = newton_solve_direct(net, samples[i], warm, opt.npfs);
            if (!stats.converged)
                throw NonConvergenceError("sample " + std::to_string(i) +
                                              " did not converge in the baseline solver",
                                          i, stats.newton_iters, stats.final_residual_inf);
            result.solutions.col(i) = x.polar_stacked();
            RunRecord rec;
            rec.sample_index = i;
            rec.path = SolvePath::npfs_only;
            rec.newton_iters = stats.newton_iters;
            rec.final_residual_inf = stats.final_residual_inf;
            rec.wall_time_s = seconds_since(ts);
            result.records[i] = rec;
            warm = std::move(x);
        }
    };

    if (workers == 1 || m < 2 * workers) {
        run_chunk(0, m);
    } else {
        std::vector<std::thread> pool;
        std::vector<std::exception_ptr> errors(workers);
        const int chunk = (m + workers - 1) / workers;
        for (int w = 0; w < workers; ++w) {
            const int begin = w * chunk;
            const int end = std::min(m, begin + chunk);
            if (begin >= end) break;
            pool.emplace_back([&, w, begin, end] {
                try {
                    run_chunk(begin, end);
                } catch (...) {
                    errors[w] = std::current_exception();
                }
            });
        }
        for (auto& th : pool) th.join();
        for (auto& e : errors)
            if (e) std::rethrow_exception(e);
    }

    result.total_time_s = seconds_since(t0);
    double solve_total = 0.0;
    for (const auto& r : result.records) solve_total += r.wall_time_s;
    result.phase_times["full_order_solves_s"] = solve_total;
    result.phase_times["nominal_solve_s"] = result.setup_time_s;
    return result;
}

json ComparisonReport::to_json() const {
    return json{{"samples", samples},
                {"max_abs_dv", max_abs_dv},
                {"per_sample_max_dv", per_sample_max_dv},
                {"residual_max_a", residual_max_a},
                {"residual_max_b", residual_max_b},
                {"residuals_ok", residuals_ok},
                {"wall_ratio_total", wall_ratio_total},
                {"steady_state_ratio", steady_state_ratio},
                {"a_rms_only_mean_s", a_rms_only_mean_s},
                {"b_mean_sample_s", b_mean_sample_s},
                {"a_rms_only_count", a_rms_only_count},
                {"a_expansions", a_expansions}};
}

ComparisonReport compare(const PpfResult& a, const PpfResult& b, double eps_newton) {
    if (a.solutions.cols() != b.solutions.cols())
        throw ValidationError("runs cover different sample counts");
    if (a.solutions.rows() != b.solutions.rows())
        throw ValidationError("runs cover different networks");

    ComparisonReport rep;
    rep.samples = static_cast<int>(a.solutions.cols());
    const int n = static_cast<int>(a.solutions.rows()) / 2;

    rep.per_sample_max_dv.resize(rep.samples);
    for (int c = 0; c < rep.samples; ++c) {
        const double dv = (a.solutions.col(c).head(n) - b.solutions.col(c).head(n))
                              .cwiseAbs()
                              .maxCoeff();
        rep.per_sample_max_dv[c] = dv;
        rep.max_abs_dv = std::max(rep.max_abs_dv, dv);
    }

    double b_total = 0.0;
    for (const auto& r : b.records) {
        rep.residual_max_b = std::max(rep.residual_max_b, r.final_residual_inf);
        b_total += r.wall_time_s;
    }
    double a_rms_total = 0.0;
    for (const auto& r : a.records) {
        rep.residual_max_a = std::max(rep.residual_max_a, r.final_residual_inf);
        if (r.path == SolvePath::rms_only) {
            a_rms_total += r.wall_time_s;
            ++rep.a_rms_only_count;
        }
        if (r.expanded_basis) ++rep.a_expansions;
    }
    rep.residuals_ok = rep.residual_max_a < eps_newton && rep.residual_max_b < eps_newton;

    rep.wall_ratio_total = (a.total_time_s > 0.0) ? b.total_time_s / a.total_time_s : 0.0;
    rep.b_mean_sample_s = b.records.empty() ? 0.0 : b_total / b.records.size();
    rep.a_rms_only_mean_s =
        (rep.a_rms_only_count > 0) ? a_rms_total / rep.a_rms_only_count : 0.0;
    rep.steady_state_ratio = (rep.a_rms_only_mean_s > 0.0)
                                 ? rep.b_mean_sample_s / rep.a_rms_only_mean_s
                                 : 0.0;
    return rep;
}

void write_result(const PpfResult& result, const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory " + dir);

    {
        std::ofstream out(dir + "/solutions.csv");
        if (!out) throw IoError("cannot write " + dir + "/solutions.csv");
        const int n = static_cast<int>(result.solutions.rows()) / 2;
        out << "sample";
        for (int i = 0; i < n; ++i) out << ",v" << i;
        for (int i = 0; i < n; ++i) out << ",th" << i;
        out << '\n';
        out.precision(17);
        for (int c = 0; c < result.solutions.cols(); ++c) {
            out << c;
            for (int r = 0; r < result.solutions.rows(); ++r)
                out << ',' << result.solutions(r, c);
            out << '\n';
        }
    }
    {
        std::ofstream out(dir + "/records.jsonl");
        if (!out) throw IoError("cannot write " + dir + "/records.jsonl");
        for (const auto& r : result.records) out << r.to_json().dump() << '\n';
    }
    {
        json meta;
        meta["config"] = result.config_echo;
        meta["rom_final_q"] = result.rom_final_q;
        meta["setup_time_s"] = result.setup_time_s;
        meta["total_time_s"] = result.total_time_s;
        meta["phase_times"] = result.phase_times;
        std::ofstream out(dir + "/config.json");
        if (!out) throw IoError("cannot write " + dir + "/config.json");
        out << meta.dump(2) << '\n';
    }
}

PpfResult read_result(const std::string& dir) {
    PpfResult result;

    std::ifstream meta_in(dir + "/config.json");
    if (!meta_in) throw IoError("cannot open " + dir + "/config.json");
    json meta;
    try {
        meta_in >> meta;
        result.config_echo = meta.at("config");
        result.rom_final_q = meta.at("rom_final_q").get<int>();
        result.setup_time_s = meta.at("setup_time_s").get<double>();
        result.total_time_s = meta.at("total_time_s").get<double>();
        if (meta.contains("phase_times")) result.phase_times = meta.at("phase_times");
    } catch (const json::exception& e) {
        throw SchemaError(std::string("result bundle config: ") + e.what());
    }

    std::ifstream rec_in(dir + "/records.jsonl");
    if (!rec_in) throw IoError("cannot open " + dir + "/records.jsonl");
    std::string line;
    while (std::getline(rec_in, line)) {
        if (line.empty()) continue;
        try {
            result.records.push_back(RunRecord::from_json(json::parse(line)));
        } catch (const json::exception& e) {
            throw SchemaError(std::string("result bundle records: ") + e.what());
        }
    }

    std::ifstream sol_in(dir + "/solutions.csv");
    if (!sol_in) throw IoError("cannot open " + dir + "/solutions.csv");
    if (!std::getline(sol_in, line)) throw SchemaError("empty solutions.csv");
    const auto cols = static_cast<int>(std::count(line.begin(), line.end(), ','));
    std::vector<std::vector<double>> rows;
    while (std::getline(sol_in, line)) {
        if (line.empty()) continue;
        std::vector<double> vals;
        vals.reserve(cols);
        size_t pos = line.find(',');  // skip the sample index
        try {
            while (pos != std::string::npos) {
                const size_t next = line.find(',', pos + 1);
                vals.push_back(std::stod(line.substr(pos + 1, next - pos - 1)));
                pos = next;
            }
        } catch (const std::exception&) {
            throw SchemaError("unparsable solutions.csv row");
        }
        if (static_cast<int>(vals.size()) != cols)
            throw SchemaError("ragged solutions.csv row");
        rows.push_back(std::move(vals));
    }
    result.solutions.resize(cols, static_cast<int>(rows.size()));
    for (size_t c = 0; c < rows.size(); ++c)
        for (int r = 0; r < cols; ++r)
            result.solutions(r, static_cast<int>(c)) = rows[c][r];
    return result;
}

} // namespace appfkit
