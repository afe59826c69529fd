#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "appfkit/feeder.hpp"
#include "appfkit/ppf.hpp"
#include "appfkit/uq.hpp"

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct RunConfig {
    std::string network;
    std::string format = "json";
    std::string out = "out";
    int workers = 1;

    appfkit::NpfsConfig solver;
    std::string d_update = "full";
    appfkit::RomConfig rom;

    appfkit::SamplingSpec sampling;
    std::string correlation = "none";
    std::string corr_file;

    std::string load_rom_path;
    std::string save_rom_path;
    bool dump_samples = false;

    json echo(const std::string& mode) const {
        json j;
        j["mode"] = mode;
        j["network"] = network;
        j["format"] = format;
        j["out"] = out;
        j["workers"] = workers;
        j["solver"] = {{"eps_newton", solver.eps_newton},
                       {"k_neumann", solver.k_neumann},
                       {"max_newton_iters", solver.max_newton_iters},
                       {"d_update_policy", d_update},
                       {"d_update_period", solver.d_update_period},
                       {"check_margin", solver.check_margin}};
        j["rom"] = {{"eps_rms", rom.eps_rms},
                    {"eps_basis", rom.eps_basis},
                    {"n_q", rom.n_q},
                    {"max_rms_iters", rom.max_rms_iters}};
        j["sampling"] = {{"num_samples", sampling.num_samples},
                         {"sigma", sampling.sigma},
                         {"correlation", correlation},
                         {"top_k", sampling.top_k},
                         {"uncertain_set", sampling.uncertain_set},
                         {"fixed_scale", sampling.fixed_scale},
                         {"seed", sampling.seed},
                         {"shared_pq_draw", sampling.shared_pq_draw},
                         {"rng", appfkit::SamplingSpec::rng_name}};
        return j;
    }
};

appfkit::NetworkFormat parse_format(const std::string& f) {
    if (f == "json") return appfkit::NetworkFormat::json;
    if (f == "ybus-csv") return appfkit::NetworkFormat::ybus_csv;
    throw CLI::ValidationError("--format", "must be json or ybus-csv");
}

void finalize(RunConfig& cfg) {
    if (!cfg.network.empty() && !fs::exists(cfg.network))
        throw CLI::ValidationError("--network", "file does not exist: " + cfg.network);
    if (!cfg.corr_file.empty() && !fs::exists(cfg.corr_file))
        throw CLI::ValidationError("--corr-file", "file does not exist: " + cfg.corr_file);
    if (cfg.solver.eps_newton <= 0.0 || cfg.rom.eps_rms <= 0.0 || cfg.rom.eps_basis <= 0.0)
        throw CLI::ValidationError("tolerances", "must be positive");
    if (cfg.solver.k_neumann < 0)
        throw CLI::ValidationError("--k-neumann", "must be >= 0");

    if (cfg.d_update == "full")
        cfg.solver.d_update_policy = appfkit::DUpdatePolicy::full;
    else if (cfg.d_update == "frozen")
        cfg.solver.d_update_policy = appfkit::DUpdatePolicy::frozen;
    else if (cfg.d_update == "every_m")
        cfg.solver.d_update_policy = appfkit::DUpdatePolicy::every_m;
    else
        throw CLI::ValidationError("--d-update", "must be full, frozen or every_m");

    if (cfg.correlation == "none")
        cfg.sampling.correlation = appfkit::SamplingSpec::Correlation::none;
    else if (cfg.correlation == "full")
        cfg.sampling.correlation = appfkit::SamplingSpec::Correlation::full;
    else if (cfg.correlation == "matrix")
        cfg.sampling.correlation = appfkit::SamplingSpec::Correlation::matrix;
    else
        throw CLI::ValidationError("--correlation", "must be none, full or matrix");

    if (cfg.sampling.correlation == appfkit::SamplingSpec::Correlation::matrix) {
        if (cfg.corr_file.empty())
            throw CLI::ValidationError("--corr-file", "required for correlation=matrix");
        std::ifstream in(cfg.corr_file);
        if (!in) throw appfkit::IoError("cannot open " + cfg.corr_file);
        json j;
        in >> j;
        const auto rows = j.size();
        Eigen::MatrixXd c(rows, rows);
        for (size_t r = 0; r < rows; ++r)
            for (size_t k = 0; k < rows; ++k) c(r, k) = j.at(r).at(k).get<double>();
        cfg.sampling.correlation_matrix = c;
    }
}

// file < flags: apply config-file values only for options the user left alone
void merge_config_file(CLI::App* cmd, RunConfig& cfg, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw appfkit::IoError("cannot open config " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw appfkit::SchemaError(std::string("config JSON: ") + e.what());
    }

    auto untouched = [&](const std::string& flag) {
        const CLI::Option* o = cmd->get_option_no_throw(flag);
        return o != nullptr && o->count() == 0;
    };
    auto set_if = [&](const json& obj, const char* key, const std::string& flag, auto& target) {
        if (obj.contains(key) && untouched(flag))
            target = obj.at(key).get<std::decay_t<decltype(target)>>();
    };

    set_if(j, "network", "--network", cfg.network);
    set_if(j, "format", "--format", cfg.format);
    set_if(j, "out", "--out", cfg.out);
    set_if(j, "workers", "--workers", cfg.workers);
    if (j.contains("solver")) {
        const auto& s = j["solver"];
        set_if(s, "eps_newton", "--eps-newton", cfg.solver.eps_newton);
        set_if(s, "k_neumann", "--k-neumann", cfg.solver.k_neumann);
        set_if(s, "max_newton_iters", "--max-newton-iters", cfg.solver.max_newton_iters);
        set_if(s, "d_update_policy", "--d-update", cfg.d_update);
        set_if(s, "d_update_period", "--d-update-period", cfg.solver.d_update_period);
        set_if(s, "check_margin", "--check-margin", cfg.solver.check_margin);
    }
    if (j.contains("rom")) {
        const auto& r = j["rom"];
        set_if(r, "eps_rms", "--eps-rms", cfg.rom.eps_rms);
        set_if(r, "eps_basis", "--eps-basis", cfg.rom.eps_basis);
        set_if(r, "n_q", "--n-q", cfg.rom.n_q);
        set_if(r, "max_rms_iters", "--max-rms-iters", cfg.rom.max_rms_iters);
    }
    if (j.contains("sampling")) {
        const auto& s = j["sampling"];
        set_if(s, "num_samples", "--samples", cfg.sampling.num_samples);
        set_if(s, "sigma", "--sigma", cfg.sampling.sigma);
        set_if(s, "correlation", "--correlation", cfg.correlation);
        set_if(s, "top_k", "--top-k", cfg.sampling.top_k);
        set_if(s, "uncertain_set", "--uncertain", cfg.sampling.uncertain_set);
        set_if(s, "fixed_scale", "--fixed-scale", cfg.sampling.fixed_scale);
        set_if(s, "seed", "--seed", cfg.sampling.seed);
        set_if(s, "shared_pq_draw", "--shared-pq-draw", cfg.sampling.shared_pq_draw);
    }
}

void add_network_options(CLI::App* cmd, RunConfig& cfg) {
    cmd->add_option("--network", cfg.network, "network file")->envname("APPF_NETWORK");
    cmd->add_option("--format", cfg.format, "json or ybus-csv")->envname("APPF_FORMAT");
}

void add_solver_options(CLI::App* cmd, RunConfig& cfg) {
    cmd->add_option("--eps-newton", cfg.solver.eps_newton, "mismatch tolerance")
        ->envname("APPF_EPS_NEWTON");
    cmd->add_option("--k-neumann", cfg.solver.k_neumann, "series truncation order")
        ->envname("APPF_K_NEUMANN");
    cmd->add_option("--max-newton-iters", cfg.solver.max_newton_iters, "iteration cap");
    cmd->add_option("--d-update", cfg.d_update, "full, frozen or every_m");
    cmd->add_option("--d-update-period", cfg.solver.d_update_period, "period for every_m");
    cmd->add_flag("--check-margin", cfg.solver.check_margin, "estimate the series margin");
}

void add_rom_options(CLI::App* cmd, RunConfig& cfg) {
    cmd->add_option("--eps-rms", cfg.rom.eps_rms, "reduced residual tolerance");
    cmd->add_option("--eps-basis", cfg.rom.eps_basis, "basis expansion threshold");
    cmd->add_option("--n-q", cfg.rom.n_q, "quadratic curtailment bound");
    cmd->add_option("--max-rms-iters", cfg.rom.max_rms_iters, "reduced iteration cap");
}

void add_sampling_options(CLI::App* cmd, RunConfig& cfg) {
    cmd->add_option("--samples", cfg.sampling.num_samples, "sample count")
        ->envname("APPF_SAMPLES");
    cmd->add_option("--sigma", cfg.sampling.sigma, "relative std dev")->envname("APPF_SIGMA");
    cmd->add_option("--correlation", cfg.correlation, "none, full or matrix");
    cmd->add_option("--corr-file", cfg.corr_file, "correlation matrix JSON (for matrix)");
    cmd->add_option("--top-k", cfg.sampling.top_k, "uncertainty set: k largest loads");
    cmd->add_option("--uncertain", cfg.sampling.uncertain_set,
                    "explicit uncertain load indices");
    cmd->add_option("--fixed-scale", cfg.sampling.fixed_scale,
                    "scale applied outside the uncertainty set");
    cmd->add_option("--seed", cfg.sampling.seed, "sampling seed")->envname("APPF_SEED");
    cmd->add_flag("--shared-pq-draw", cfg.sampling.shared_pq_draw,
                  "one draw per load for both P and Q");
    cmd->add_flag("--dump-samples", cfg.dump_samples, "write samples.csv to the output dir");
}

appfkit::PpfOptions make_options(const RunConfig& cfg, const std::string& mode) {
    appfkit::PpfOptions opt;
    opt.npfs = cfg.solver;
    opt.rom = cfg.rom;
    opt.workers = cfg.workers;
    opt.config_echo = cfg.echo(mode);
    return opt;
}

int cmd_solve(const RunConfig& cfg) {
    const auto net = appfkit::load_network(cfg.network, parse_format(cfg.format));
    for (const auto& w : net.warnings()) std::cerr << "warning: " << w << "\n";

    const auto factors = appfkit::prepare(net);
    auto [x, stats] = appfkit::npfs_solve(factors, net, net.nominal_loads(),
                                          appfkit::VoltageState::flat_start(net), cfg.solver);

    fs::create_directories(cfg.out);
    {
        std::ofstream out(cfg.out + "/solution.csv");
        out << "bus,V_pu,theta_rad\n";
        out.precision(17);
        for (int i = 0; i < net.n(); ++i)
            out << net.to_full(i) << ',' << x.mag()(i) << ',' << x.ang()(i) << '\n';
    }
    {
        json j;
        j["config"] = cfg.echo("solve");
        j["converged"] = stats.converged;
        j["newton_iters"] = stats.newton_iters;
        j["final_residual_inf"] = stats.final_residual_inf;
        j["wall_time_s"] = stats.wall_time_s;
        if (stats.margin) j["margin"] = *stats.margin;
        std::ofstream out(cfg.out + "/solve.json");
        out << j.dump(2) << '\n';
    }

    std::cout << (stats.converged ? "converged" : "DID NOT CONVERGE") << " in "
              << stats.newton_iters << " iterations, residual "
              << stats.final_residual_inf << "\n";
    return stats.converged ? 0 : 2;
}

int cmd_check(const RunConfig& cfg) {
    const auto net = appfkit::load_network(cfg.network, parse_format(cfg.format));
    for (const auto& w : net.warnings()) std::cerr << "warning: " << w << "\n";

    const auto factors = appfkit::prepare(net);
    auto [x, stats] = appfkit::npfs_solve(factors, net, net.nominal_loads(),
                                          appfkit::VoltageState::flat_start(net), cfg.solver);
    const appfkit::VoltageState& at = x;
    if (!stats.converged)
        std::cerr << "note: nominal solve did not converge; margin evaluated at the "
                     "final iterate\n";

    const auto rep = appfkit::convergence_margin_report(net, at);
    std::cout << "series margin: " << rep.ratio << "\n"
              << "  spectral radius estimate: " << rep.rho_estimate << "\n"
              << "  max voltage-scaled load current: " << rep.max_scaled_current << "\n"
              << "  line matrix: " << (rep.exact_line_matrix ? "exact (shunts given)"
                                                             : "approximate (no shunt data)")
              << "\n";
    if (rep.ratio < 10.0)
        std::cout << "WARNING: margin below 10; the truncated series may diverge\n";
    return 0;
}

int cmd_ppf(const RunConfig& cfg, bool accelerated) {
    const auto net = appfkit::load_network(cfg.network, parse_format(cfg.format));
    for (const auto& w : net.warnings()) std::cerr << "warning: " << w << "\n";

    const auto samples = appfkit::generate_samples(cfg.sampling, net.nominal_loads());
    const std::string mode = accelerated ? "appf" : "ppf";
    const auto opt = make_options(cfg, mode);

    appfkit::PpfResult result;
    if (!accelerated) {
        result = appfkit::traditional_ppf_run(net, samples, opt);
    } else if (!cfg.load_rom_path.empty()) {
        auto rm = appfkit::load_rom_checkpoint(cfg.load_rom_path);
        const auto factors = appfkit::prepare(net);
        result = appfkit::appf_run(net, samples, opt, rm, factors);
        if (!cfg.save_rom_path.empty()) appfkit::save_rom_checkpoint(rm, cfg.save_rom_path);
    } else if (!cfg.save_rom_path.empty()) {
        const auto factors = appfkit::prepare(net);
        auto [x0, st] = appfkit::npfs_solve(factors, net, net.nominal_loads(),
                                            appfkit::VoltageState::flat_start(net), cfg.solver);
        if (!st.converged)
            throw appfkit::NonConvergenceError("nominal solve failed", -1, st.newton_iters,
                                               st.final_residual_inf);
        auto rm = appfkit::rom_init(net, x0, appfkit::power_injections(net, x0), cfg.rom);
        result = appfkit::appf_run(net, samples, opt, rm, factors);
        appfkit::save_rom_checkpoint(rm, cfg.save_rom_path);
    } else {
        result = appfkit::appf_run(net, samples, opt);
    }

    appfkit::write_result(result, cfg.out);
    if (cfg.dump_samples) appfkit::dump_samples_csv(cfg.out + "/samples.csv", samples);

    std::cout << mode << ": " << samples.size() << " samples in " << result.total_time_s
              << " s (setup " << result.setup_time_s << " s)";
    if (accelerated) std::cout << ", final basis dimension " << result.rom_final_q;
    std::cout << "\nresults written to " << cfg.out << "\n";
    return 0;
}

int cmd_compare(const RunConfig& cfg) {
    const auto net = appfkit::load_network(cfg.network, parse_format(cfg.format));
    for (const auto& w : net.warnings()) std::cerr << "warning: " << w << "\n";

    const auto samples = appfkit::generate_samples(cfg.sampling, net.nominal_loads());
    const auto accel = appfkit::appf_run(net, samples, make_options(cfg, "appf"));
    const auto trad = appfkit::traditional_ppf_run(net, samples, make_options(cfg, "ppf"));

    const auto rep = appfkit::compare(accel, trad, cfg.solver.eps_newton);

    fs::create_directories(cfg.out);
    appfkit::write_result(accel, cfg.out + "/appf");
    appfkit::write_result(trad, cfg.out + "/traditional");
    {
        json j = rep.to_json();
        j["config"] = cfg.echo("compare");
        std::ofstream out(cfg.out + "/report.json");
        out << j.dump(2) << '\n';
    }
    if (cfg.dump_samples) appfkit::dump_samples_csv(cfg.out + "/samples.csv", samples);

    std::cout << "samples: " << rep.samples << "\n"
              << "max |dV|: " << rep.max_abs_dv << " pu\n"
              << "residuals ok: " << (rep.residuals_ok ? "yes" : "no") << "\n"
              << "total wall ratio (traditional/appf): " << rep.wall_ratio_total << "\n"
              << "steady-state per-sample ratio: " << rep.steady_state_ratio << "\n";
    return 0;
}

int cmd_stats(const RunConfig& cfg, const std::string& result_dir, int bins,
              const std::string& edge, int svd_count) {
    auto result = appfkit::read_result(result_dir);
    auto summary = appfkit::summarize(result, bins);
    if (svd_count > 0) summary.singular_values = appfkit::singular_values(result, svd_count);

    const std::string out_dir = cfg.out.empty() ? result_dir : cfg.out;
    fs::create_directories(out_dir);

    json j = summary.to_json();
    j["source"] = result_dir;
    j["config"] = cfg.echo("stats");
    if (!edge.empty()) {
        const auto comma = edge.find(',');
        if (comma == std::string::npos)
            throw CLI::ValidationError("--edge", "expected from,to slot pair");
        if (cfg.network.empty())
            throw CLI::ValidationError("--network", "required to evaluate branch currents");
        const auto net = appfkit::load_network(cfg.network, parse_format(cfg.format));
        const int from = std::stoi(edge.substr(0, comma));
        const int to = std::stoi(edge.substr(comma + 1));
        const auto hist = appfkit::branch_current_stats(net, result, from, to, bins);
        j["branch_current"] = {{"from", from}, {"to", to}, {"histogram", hist.to_json()}};
        hist.write_csv(out_dir + "/branch_current.csv");
    }
    {
        std::ofstream out(out_dir + "/summary.json");
        out << j.dump(2) << '\n';
    }
    summary.magnitude_histogram.write_csv(out_dir + "/magnitude_histogram.csv");

    std::cout << "summary written to " << out_dir << "/summary.json\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"probabilistic power flow toolkit"};
    app.require_subcommand(1);

    RunConfig cfg;
    std::string config_path;
    std::string result_dir;
    std::string edge;
    int bins = 100;
    int svd_count = 0;

    auto* solve = app.add_subcommand("solve", "one full-order solve from flat start");
    auto* ppf = app.add_subcommand("ppf", "traditional sampling run");
    auto* appf = app.add_subcommand("appf", "accelerated sampling run");
    auto* comp = app.add_subcommand("compare", "run both pipelines and cross-check");
    auto* check = app.add_subcommand("check", "print the series convergence margin");
    auto* stats = app.add_subcommand("stats", "summarize a stored result bundle");

    for (CLI::App* c : {solve, ppf, appf, comp, check}) {
        add_network_options(c, cfg);
        add_solver_options(c, cfg);
        c->add_option("--config", config_path, "run-config JSON")->envname("APPF_CONFIG");
    }
    for (CLI::App* c : {solve, ppf, appf, comp}) {
        c->add_option("--out", cfg.out, "output directory")->envname("APPF_OUT");
    }
    for (CLI::App* c : {ppf, appf, comp}) {
        add_sampling_options(c, cfg);
    }
    for (CLI::App* c : {appf, comp}) {
        add_rom_options(c, cfg);
    }
    ppf->add_option("--workers", cfg.workers, "baseline worker count")
        ->envname("APPF_WORKERS");
    comp->add_option("--workers", cfg.workers, "baseline worker count");
    appf->add_option("--save-rom", cfg.save_rom_path, "write a model checkpoint");
    appf->add_option("--load-rom", cfg.load_rom_path, "restore a model checkpoint");

    stats->add_option("--result", result_dir, "result bundle directory")->required();
    stats->add_option("--bins", bins, "histogram bin count");
    stats->add_option("--edge", edge, "branch endpoints as from,to original slots");
    stats->add_option("--svd-count", svd_count, "singular values to report");
    stats->add_option("--network", cfg.network, "network file (for branch currents)");
    stats->add_option("--format", cfg.format, "json or ybus-csv");
    stats->add_option("--out", cfg.out, "output directory (defaults to the bundle)");

    CLI11_PARSE(app, argc, argv);

    try {
        CLI::App* active = app.get_subcommands().front();
        if (!config_path.empty()) merge_config_file(active, cfg, config_path);
        finalize(cfg);

        if (active == solve) {
            if (cfg.network.empty()) throw CLI::ValidationError("--network", "required");
            return cmd_solve(cfg);
        }
        if (active == check) {
            if (cfg.network.empty()) throw CLI::ValidationError("--network", "required");
            return cmd_check(cfg);
        }
        if (active == ppf || active == appf) {
            if (cfg.network.empty()) throw CLI::ValidationError("--network", "required");
            return cmd_ppf(cfg, active == appf);
        }
        if (active == comp) {
            if (cfg.network.empty()) throw CLI::ValidationError("--network", "required");
            return cmd_compare(cfg);
        }
        if (active == stats) {
            cfg.out = (stats->get_option("--out")->count() > 0) ? cfg.out : "";
            return cmd_stats(cfg, result_dir, bins, edge, svd_count);
        }
    } catch (const CLI::Error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const appfkit::NonConvergenceError& e) {
        std::cerr << "solver error: " << e.what() << "\n";
        return 2;
    } catch (const appfkit::IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return 3;
    } catch (const appfkit::SchemaError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const appfkit::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "unexpected error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
