#include "rfslam/experiment/experiment.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <optional>

namespace {

using rfslam::experiment::ExperimentConfig;

struct Options {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> filter;
    bool known_pose = false;
    std::string out;
    std::optional<int> runs;
    std::optional<unsigned> threads;
};

ExperimentConfig load(const Options& o) {
    ExperimentConfig cfg = o.config.empty() ? rfslam::experiment::validate_config(rfslam::experiment::Json::object())
                                            : rfslam::experiment::load_config(o.config);
    if (o.seed) {
        cfg.base_seed = *o.seed;
        cfg.resolved["experiment"]["base_seed"] = *o.seed;
    }
    if (o.filter) {
        cfg.filter = rfslam::experiment::parse_filter(*o.filter, "--filter");
        cfg.resolved["filter"]["type"] = *o.filter;
    }
    if (o.known_pose) {
        cfg.known_pose = true;
        cfg.resolved["filter"]["known_pose"] = true;
    }
    if (o.runs) {
        if (*o.runs < 1) throw rfslam::ConfigError("--runs", "must be >= 1");
        cfg.n_mc_runs = *o.runs;
        cfg.resolved["experiment"]["n_mc_runs"] = *o.runs;
    }
    if (o.threads) {
        if (*o.threads < 1) throw rfslam::ConfigError("--threads", "must be >= 1");
        cfg.threads = *o.threads;
    }
    if (!o.out.empty()) cfg.out_dir = o.out;
    return cfg;
}

void add_common(CLI::App* app, Options& o, bool filter_flags) {
    app->add_option("--config", o.config, "JSON configuration file (built-in defaults when omitted)");
    app->add_option("--seed", o.seed, "base seed; run r uses seed + r");
    app->add_option("--out", o.out, "output directory");
    if (filter_flags) {
        app->add_option("--filter", o.filter, "map filter")->check(CLI::IsMember({"phd", "pmbm", "bp"}));
        app->add_flag("--known-pose", o.known_pose, "mapping with the true UE poses");
        app->add_option("--threads", o.threads, "worker threads for the particle updates");
    }
}

void report(const rfslam::experiment::ExperimentResult& res) {
    for (const auto& r : res.runs) {
        std::cout << "run " << r.run << " seed " << r.seed << ": rmse_pos " << r.rmse_pos << " m, mean ESS "
                  << r.mean_ess_pct << " %, final GOSPA VA " << r.steps.back().va.total << " SP "
                  << r.steps.back().sp.total << ", " << r.wall_seconds << " s\n";
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Bistatic radio SLAM simulator with PHD, PMBM and BP map filters"};
    app.require_subcommand(1);
    Options o;

    auto* simulate = app.add_subcommand("simulate", "write a simulated trajectory and its measurements");
    add_common(simulate, o, false);
    auto* run = app.add_subcommand("run", "simulate and filter one run");
    add_common(run, o, true);
    auto* mc = app.add_subcommand("mc", "Monte Carlo batch");
    add_common(mc, o, true);
    mc->add_option("--runs", o.runs, "number of Monte Carlo runs");
    auto* plot = app.add_subcommand("plot-data", "per-step means of an existing steps.csv for plotting");
    plot->add_option("--out", o.out, "directory holding steps.csv")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (plot->parsed()) {
            rfslam::experiment::write_plot_data(o.out);
            std::cout << "wrote plot_gospa_va.csv, plot_gospa_sp.csv, plot_ue.csv to " << o.out << "\n";
            return 0;
        }
        const ExperimentConfig cfg = load(o);
        if (simulate->parsed()) {
            rfslam::experiment::ensure_dir(cfg.out_dir);
            const auto gt = rfslam::experiment::make_truth(cfg, 0);
            const std::filesystem::path dir(cfg.out_dir);
            rfslam::experiment::write_file(dir / "trajectory.csv", rfslam::experiment::truth_csv(cfg, gt, 0));
            rfslam::experiment::write_file(dir / "measurements.csv", rfslam::experiment::measurements_csv(cfg, gt, 0));
            std::cout << "wrote trajectory.csv and measurements.csv to " << cfg.out_dir << "\n";
            return 0;
        }
        const int runs = run->parsed() ? 1 : cfg.n_mc_runs;
        const auto res = rfslam::experiment::run_experiment(cfg, cfg.out_dir, 0, runs);
        report(res);
        std::cout << "wrote steps.csv, summary.csv, timing.csv to " << cfg.out_dir << "\n";
    } catch (const rfslam::ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
