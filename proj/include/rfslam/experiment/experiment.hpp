#pragma once

#include "rfslam/bp/bp_slam.hpp"
#include "rfslam/experiment/config.hpp"
#include "rfslam/filters/gm_phd.hpp"
#include "rfslam/filters/pmbm.hpp"
#include "rfslam/metrics/gospa.hpp"
#include "rfslam/rbpf/rbpf.hpp"
#include "rfslam/sim/simulator.hpp"

#include <chrono>
#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#ifndef RFSLAM_VERSION
#define RFSLAM_VERSION "0.0.0"
#endif

namespace rfslam::experiment {

inline constexpr const char* kVersion = RFSLAM_VERSION;

struct StepRow {
    int run = 0;
    int step = 0;
    metrics::GospaResult va;
    metrics::GospaResult sp;
    double pos_err = 0.0;
    double heading_err = 0.0;
    double bias_err = 0.0;  ///< [s]
    double ess = 0.0;
    int n_measurements = 0;
    int n_est_va = 0;
    int n_est_sp = 0;
};

struct RunResult {
    int run = 0;
    std::uint64_t seed = 0;
    std::vector<StepRow> steps;
    std::vector<UEState> truth;
    std::vector<UEState> estimates;
    std::vector<filters::EstimatedLandmark> final_map;
    double rmse_pos = 0.0;
    double rmse_heading = 0.0;
    double rmse_bias = 0.0;
    double mean_ess = 0.0;
    double mean_ess_pct = 0.0;
    int diverged_steps = 0;
    double wall_seconds = 0.0;
};

struct ExperimentResult {
    std::vector<RunResult> runs;
};

[[nodiscard]] inline std::uint64_t run_seed(const ExperimentConfig& cfg, int run) {
    return cfg.base_seed + static_cast<std::uint64_t>(run);
}

namespace detail {

inline std::vector<Landmark> of_kind(const std::vector<Landmark>& lms, LandmarkKind k) {
    std::vector<Landmark> out;
    for (const auto& l : lms)
        if (l.kind() == k) out.push_back(l);
    return out;
}

template <typename StepFn>
RunResult drive(const ExperimentConfig& cfg, int run, const sim::GroundTruth& gt, std::size_t n_particles,
                StepFn&& step) {
    RunResult out;
    out.run = run;
    out.seed = run_seed(cfg, run);
    out.truth = gt.states;
    const auto truth_va = of_kind(cfg.sim.scenario.landmarks, LandmarkKind::VA);
    const auto truth_sp = of_kind(cfg.sim.scenario.landmarks, LandmarkKind::SP);
    double ess_sum = 0.0;
    for (std::size_t k = 0; k < gt.states.size(); ++k) {
        const rbpf::StepReport rep = step(k);
        std::vector<Landmark> est;
        for (const auto& e : rep.map) est.push_back(e.landmark);
        StepRow row;
        row.run = run;
        row.step = static_cast<int>(k);
        const auto est_va = of_kind(est, LandmarkKind::VA);
        const auto est_sp = of_kind(est, LandmarkKind::SP);
        row.va = metrics::gospa(est_va, truth_va, cfg.gospa);
        row.sp = metrics::gospa(est_sp, truth_sp, cfg.gospa);
        row.n_est_va = static_cast<int>(est_va.size());
        row.n_est_sp = static_cast<int>(est_sp.size());
        row.pos_err = metrics::field_error(rep.state.mean, gt.states[k], metrics::StateField::position);
        row.heading_err = metrics::field_error(rep.state.mean, gt.states[k], metrics::StateField::heading);
        row.bias_err = metrics::field_error(rep.state.mean, gt.states[k], metrics::StateField::clock_bias);
        row.ess = rep.ess;
        row.n_measurements = static_cast<int>(gt.measurement_sets[k].size());
        ess_sum += rep.ess;
        out.diverged_steps += rep.diverged ? 1 : 0;
        out.estimates.push_back(rep.state.mean);
        out.steps.push_back(row);
        if (k + 1 == gt.states.size()) out.final_map = rep.map;
    }
    out.rmse_pos = metrics::rmse(out.estimates, out.truth, metrics::StateField::position);
    out.rmse_heading = metrics::rmse(out.estimates, out.truth, metrics::StateField::heading);
    out.rmse_bias = metrics::rmse(out.estimates, out.truth, metrics::StateField::clock_bias);
    out.mean_ess = ess_sum / static_cast<double>(gt.states.size());
    out.mean_ess_pct = 100.0 * out.mean_ess / static_cast<double>(n_particles);
    return out;
}

template <typename Filter>
RunResult run_rbpf(const ExperimentConfig& cfg, int run, const sim::GroundTruth& gt, Filter filter, unsigned threads) {
    rbpf::RbpfConfig rc = cfg.rbpf;
    rc.seed = run_seed(cfg, run);
    rc.threads = threads;
    filters::SensorModel sensor(cfg.sim.scenario);
    auto pf = cfg.known_pose ? rbpf::Rbpf<Filter>::known_pose(std::move(filter), sensor, rc, gt.states.front())
                             : rbpf::Rbpf<Filter>(std::move(filter), sensor, rc, cfg.sim.initial_state);
    const std::size_t n = pf.particles().particles.size();
    return drive(cfg, run, gt, n, [&](std::size_t k) {
        return pf.step(gt.measurement_sets[k], k, cfg.known_pose ? &gt.states[k] : nullptr);
    });
}

inline RunResult run_bp(const ExperimentConfig& cfg, int run, const sim::GroundTruth& gt, unsigned threads) {
    bp::BpConfig bc;
    bc.birth = cfg.pmbm.birth;
    bc.n_particles = cfg.rbpf.n_particles;
    bc.prior_cov = cfg.rbpf.prior_cov;
    bc.control = cfg.sim.control;
    bc.motion_noise = cfg.sim.motion_noise;
    bc.max_iterations = cfg.bp_iterations;
    bc.tolerance = cfg.bp_tolerance;
    bc.r_prune = cfg.pmbm.r_prune;
    bc.extract_threshold = cfg.pmbm.extract_threshold;
    bc.threads = threads;
    bc.seed = run_seed(cfg, run);
    filters::SensorModel sensor(cfg.sim.scenario);
    auto f = cfg.known_pose ? bp::BpSlam::known_pose(sensor, bc, gt.states.front())
                            : bp::BpSlam(sensor, bc, cfg.sim.initial_state);
    const std::size_t n = cfg.known_pose ? 1 : bc.n_particles;
    return drive(cfg, run, gt, n, [&](std::size_t k) {
        return f.step(gt.measurement_sets[k], k, cfg.known_pose ? &gt.states[k] : nullptr);
    });
}

}  // namespace detail

[[nodiscard]] inline sim::GroundTruth make_truth(const ExperimentConfig& cfg, int run) {
    sim::SimConfig sc = cfg.sim;
    sc.seed = run_seed(cfg, run);
    return sim::generate_ground_truth(sc);
}

/// One Monte Carlo run: simulate, filter, score.
[[nodiscard]] inline RunResult run_single(const ExperimentConfig& cfg, int run, unsigned threads = 1) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto gt = make_truth(cfg, run);
    RunResult r;
    switch (cfg.filter) {
        case FilterKind::phd: r = detail::run_rbpf(cfg, run, gt, filters::PhdFilter{cfg.phd}, threads); break;
        case FilterKind::pmbm: r = detail::run_rbpf(cfg, run, gt, filters::PmbmFilter{cfg.pmbm}, threads); break;
        case FilterKind::bp: r = detail::run_bp(cfg, run, gt, threads); break;
    }
    r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return r;
}

// ---- CSV output ----

/// Shortest round-trip representation of a double.
[[nodiscard]] inline std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

/// FNV-1a 64-bit.
[[nodiscard]] inline std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

[[nodiscard]] inline std::string config_hash(const ExperimentConfig& cfg) {
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016" PRIx64, fnv1a(cfg.resolved.dump()));
    return buf;
}

/// '#'-prefixed metadata lines written before the CSV header row.
[[nodiscard]] inline std::string metadata_block(const ExperimentConfig& cfg, const std::string& content,
                                                const std::string& seeds) {
    std::ostringstream os;
    os << "# content: " << content << "\n";
    os << "# software_version: " << kVersion << "\n";
    os << "# config_hash: fnv1a64:" << config_hash(cfg) << "\n";
    os << "# seed: " << seeds << "\n";
    os << "# filter: " << to_string(cfg.filter) << (cfg.known_pose ? " (known pose)" : "") << "\n";
    os << "# gospa: cutoff=" << fmt(cfg.gospa.cutoff) << " p=" << fmt(cfg.gospa.p) << " alpha=" << fmt(cfg.gospa.alpha)
       << " per kind, kind mismatch unmatched\n";
    os << "# pmbm: gamma=" << cfg.pmbm.gamma << " hyp_threshold=" << fmt(cfg.pmbm.hyp_threshold)
       << " max_hyps=" << cfg.pmbm.max_hyps << " r_prune=" << fmt(cfg.pmbm.r_prune)
       << " recycle=" << (cfg.pmbm.recycle ? "true" : "false") << "\n";
    os << "# phd: prune=" << fmt(cfg.phd.prune_threshold) << " merge=" << fmt(cfg.phd.merge_threshold)
       << " cap=" << cfg.phd.cap << " extract=" << fmt(cfg.phd.extract_threshold) << "\n";
    os << "# birth: intensity=" << fmt(cfg.phd.birth.intensity) << " cov_scale=" << fmt(cfg.phd.birth.cov_scale)
       << " from current batch\n";
    os << "# particles: " << cfg.rbpf.n_particles << " resampling="
       << (cfg.rbpf.ess_triggered ? "ess-triggered" : "every step") << "\n";
    os << "# ess: per-step before resampling, mean over steps per run\n";
    os << "# units: positions m, angles rad, bias s\n";
    return os.str();
}

inline void ensure_dir(const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec || !std::filesystem::is_directory(dir)) throw Error("cannot create output directory " + dir.string());
    const auto probe = dir / ".rfslam_write_probe";
    {
        std::ofstream f(probe);
        if (!f) throw Error("output directory is not writable: " + dir.string());
    }
    std::filesystem::remove(probe, ec);
}

inline void write_file(const std::filesystem::path& p, const std::string& body) {
    std::ofstream f(p, std::ios::binary);
    if (!f) throw Error("cannot write " + p.string());
    f << body;
    if (!f) throw Error("write failed for " + p.string());
}

[[nodiscard]] inline std::string seeds_string(const ExperimentConfig& cfg, const std::vector<RunResult>& runs) {
    std::ostringstream os;
    os << "base_seed=" << cfg.base_seed << " runs=";
    for (std::size_t i = 0; i < runs.size(); ++i) os << (i ? "," : "") << runs[i].seed;
    return os.str();
}

[[nodiscard]] inline std::string steps_csv(const ExperimentConfig& cfg, const std::vector<RunResult>& runs) {
    std::ostringstream os;
    os << metadata_block(cfg, "per-step metrics", seeds_string(cfg, runs));
    os << "run,step,gospa_va_total,gospa_va_loc,gospa_va_miss,gospa_va_false,"
          "gospa_sp_total,gospa_sp_loc,gospa_sp_miss,gospa_sp_false,pos_err,heading_err,bias_err,ess,"
          "n_meas,n_est_va,n_est_sp\n";
    for (const auto& r : runs) {
        for (const auto& s : r.steps) {
            os << s.run << ',' << s.step << ',' << fmt(s.va.total) << ',' << fmt(s.va.localization) << ','
               << fmt(s.va.missed) << ',' << fmt(s.va.false_targets) << ',' << fmt(s.sp.total) << ','
               << fmt(s.sp.localization) << ',' << fmt(s.sp.missed) << ',' << fmt(s.sp.false_targets) << ','
               << fmt(s.pos_err) << ',' << fmt(s.heading_err) << ',' << fmt(s.bias_err) << ',' << fmt(s.ess) << ','
               << s.n_measurements << ',' << s.n_est_va << ',' << s.n_est_sp << '\n';
        }
    }
    return os.str();
}

[[nodiscard]] inline std::string summary_csv(const ExperimentConfig& cfg, const std::vector<RunResult>& runs) {
    std::ostringstream os;
    os << metadata_block(cfg, "per-run summary", seeds_string(cfg, runs));
    os << "run,seed,rmse_pos,rmse_heading,rmse_bias,mean_ess,mean_ess_pct,final_gospa_va,final_gospa_sp,"
          "diverged_steps\n";
    for (const auto& r : runs) {
        const auto& last = r.steps.back();
        os << r.run << ',' << r.seed << ',' << fmt(r.rmse_pos) << ',' << fmt(r.rmse_heading) << ','
           << fmt(r.rmse_bias) << ',' << fmt(r.mean_ess) << ',' << fmt(r.mean_ess_pct) << ',' << fmt(last.va.total)
           << ',' << fmt(last.sp.total) << ',' << r.diverged_steps << '\n';
    }
    return os.str();
}

[[nodiscard]] inline std::string timing_csv(const ExperimentConfig& cfg, const std::vector<RunResult>& runs) {
    std::ostringstream os;
    os << metadata_block(cfg, "wall-clock timing (not deterministic)", seeds_string(cfg, runs));
    os << "run,wall_seconds\n";
    for (const auto& r : runs) os << r.run << ',' << fmt(r.wall_seconds) << '\n';
    return os.str();
}

[[nodiscard]] inline std::string truth_csv(const ExperimentConfig& cfg, const sim::GroundTruth& gt, int run) {
    std::ostringstream os;
    os << metadata_block(cfg, "simulated trajectory", std::to_string(run_seed(cfg, run)));
    os << "step,x,y,heading,clock_bias\n";
    for (std::size_t k = 0; k < gt.states.size(); ++k) {
        const auto& s = gt.states[k];
        os << k << ',' << fmt(s.x) << ',' << fmt(s.y) << ',' << fmt(s.heading) << ',' << fmt(s.clock_bias) << '\n';
    }
    return os.str();
}

/// Origin: -1 clutter, 0 BS, i for scenario landmark i-1.
[[nodiscard]] inline std::string measurements_csv(const ExperimentConfig& cfg, const sim::GroundTruth& gt, int run) {
    std::ostringstream os;
    os << metadata_block(cfg, "simulated measurements", std::to_string(run_seed(cfg, run)));
    os << "step,toa,aoa_az,aoa_el,aod_az,aod_el,origin\n";
    for (std::size_t k = 0; k < gt.measurement_sets.size(); ++k) {
        for (std::size_t i = 0; i < gt.measurement_sets[k].size(); ++i) {
            const auto& z = gt.measurement_sets[k][i];
            os << k << ',' << fmt(z.toa) << ',' << fmt(z.aoa_az) << ',' << fmt(z.aoa_el) << ',' << fmt(z.aod_az)
               << ',' << fmt(z.aod_el) << ',' << gt.origin_labels[k][i] << '\n';
        }
    }
    return os.str();
}

/// Runs `runs` Monte Carlo repetitions starting at index `first_run`; writes steps.csv, summary.csv and
/// timing.csv into `out_dir` when it is non-empty. The directory is checked before any computation.
[[nodiscard]] inline ExperimentResult run_experiment(const ExperimentConfig& cfg, const std::string& out_dir,
                                                     int first_run = 0, int runs = -1) {
    if (runs < 0) runs = cfg.n_mc_runs;
    if (!out_dir.empty()) ensure_dir(out_dir);
    ExperimentResult res;
    for (int r = first_run; r < first_run + runs; ++r) res.runs.push_back(run_single(cfg, r, cfg.threads));
    if (!out_dir.empty()) {
        const std::filesystem::path dir(out_dir);
        write_file(dir / "steps.csv", steps_csv(cfg, res.runs));
        write_file(dir / "summary.csv", summary_csv(cfg, res.runs));
        write_file(dir / "timing.csv", timing_csv(cfg, res.runs));
    }
    return res;
}

// ---- Plot data ----

/// Rows of a CSV written by this module: metadata lines skipped, header mapped to column indices.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    [[nodiscard]] std::size_t column(const std::string& name) const {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return i;
        throw Error("csv: missing column " + name);
    }
};

[[nodiscard]] inline CsvTable read_csv(const std::filesystem::path& p) {
    std::ifstream in(p);
    if (!in) throw Error("cannot read " + p.string());
    CsvTable t;
    std::string line;
    auto split = [](const std::string& s) {
        std::vector<std::string> out;
        std::stringstream ss(s);
        std::string cell;
        while (std::getline(ss, cell, ',')) out.push_back(cell);
        return out;
    };
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        if (t.header.empty()) {
            t.header = split(line);
        } else {
            t.rows.push_back(split(line));
        }
    }
    return t;
}

/// Per-step means over runs of the GOSPA curves and UE errors, one file per figure.
inline void write_plot_data(const std::filesystem::path& dir) {
    const CsvTable t = read_csv(dir / "steps.csv");
    const std::vector<std::string> va{"gospa_va_total", "gospa_va_loc", "gospa_va_miss", "gospa_va_false"};
    const std::vector<std::string> sp{"gospa_sp_total", "gospa_sp_loc", "gospa_sp_miss", "gospa_sp_false"};
    const std::vector<std::string> ue{"pos_err", "heading_err", "bias_err", "ess"};
    const std::size_t step_col = t.column("step");
    auto emit = [&](const std::string& file, const std::vector<std::string>& cols) {
        std::map<int, std::vector<double>> sums;
        std::map<int, int> counts;
        std::vector<std::size_t> idx;
        for (const auto& c : cols) idx.push_back(t.column(c));
        for (const auto& row : t.rows) {
            const int k = std::stoi(row.at(step_col));
            auto& s = sums[k];
            s.resize(cols.size(), 0.0);
            for (std::size_t i = 0; i < cols.size(); ++i) {
                const double v = std::stod(row.at(idx[i]));
                s[i] += cols[i] == "pos_err" || cols[i] == "heading_err" || cols[i] == "bias_err" ? v * v : v;
            }
            ++counts[k];
        }
        std::ostringstream os;
        os << "# content: per-step mean over runs of " << file << "; UE errors as RMSE over runs\n";
        os << "step";
        for (const auto& c : cols) os << ',' << c;
        os << ",n_runs\n";
        for (const auto& [k, s] : sums) {
            os << k;
            for (std::size_t i = 0; i < cols.size(); ++i) {
                const double mean = s[i] / counts[k];
                const bool squared = cols[i] == "pos_err" || cols[i] == "heading_err" || cols[i] == "bias_err";
                os << ',' << fmt(squared ? std::sqrt(mean) : mean);
            }
            os << ',' << counts[k] << '\n';
        }
        write_file(dir / file, os.str());
    };
    emit("plot_gospa_va.csv", va);
    emit("plot_gospa_sp.csv", sp);
    emit("plot_ue.csv", ue);
}

}  // namespace rfslam::experiment
