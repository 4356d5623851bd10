#pragma once

#include "rfslam/bp/bp_slam.hpp"
#include "rfslam/filters/gm_phd.hpp"
#include "rfslam/filters/pmbm.hpp"
#include "rfslam/metrics/gospa.hpp"
#include "rfslam/rbpf/rbpf.hpp"
#include "rfslam/sim/simulator.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <fstream>
#include <initializer_list>
#include <set>
#include <sstream>
#include <string>

namespace rfslam::experiment {

using Json = nlohmann::json;

enum class FilterKind { phd, pmbm, bp };

[[nodiscard]] inline std::string to_string(FilterKind f) {
    switch (f) {
        case FilterKind::phd: return "phd";
        case FilterKind::pmbm: return "pmbm";
        case FilterKind::bp: return "bp";
    }
    return "?";
}

[[nodiscard]] inline FilterKind parse_filter(const std::string& s, const std::string& path = "filter.type") {
    if (s == "phd") return FilterKind::phd;
    if (s == "pmbm") return FilterKind::pmbm;
    if (s == "bp") return FilterKind::bp;
    throw ConfigError(path, "expected one of phd, pmbm, bp, got '" + s + "'");
}

/// Symmetric default layout: four walls at 100 m from the BS and four scatterers on the diagonals.
[[nodiscard]] inline std::vector<Landmark> default_landmarks(const Vec3& bs) {
    std::vector<Landmark> out;
    for (const Vec2 d : {Vec2(200, 0), Vec2(-200, 0), Vec2(0, 200), Vec2(0, -200)})
        out.emplace_back(Vec3(bs.x() + d.x(), bs.y() + d.y(), bs.z()), LandmarkKind::VA);
    for (const Vec2 d : {Vec2(65, 65), Vec2(-65, 65), Vec2(-65, -65), Vec2(65, -65)})
        out.emplace_back(Vec3(d.x(), d.y(), 10.0), LandmarkKind::SP);
    return out;
}

struct ExperimentConfig {
    sim::SimConfig sim;
    FilterKind filter = FilterKind::pmbm;
    bool known_pose = false;
    rbpf::RbpfConfig rbpf;
    filters::PhdConfig phd;
    filters::PmbmConfig pmbm;
    int bp_iterations = 20;
    double bp_tolerance = 1e-6;
    metrics::GospaParams gospa;
    int n_mc_runs = 10;
    std::uint64_t base_seed = 1;
    unsigned threads = 1;
    std::string out_dir = "out";
    Json resolved;  ///< effective configuration, used for hashing and the metadata block
};

namespace detail {

class Reader {
public:
    Reader(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(path_.empty() ? "/" : path_, "expected an object");
    }

    void allow(std::initializer_list<const char*> keys) const {
        std::set<std::string> ok(keys.begin(), keys.end());
        for (const auto& [k, v] : j_.items())
            if (!ok.count(k)) throw ConfigError(path_ + "/" + k, "unknown key");
    }

    [[nodiscard]] bool has(const char* k) const { return j_.contains(k); }
    [[nodiscard]] std::string at(const char* k) const { return path_ + "/" + k; }

    [[nodiscard]] Reader object(const char* k) const {
        static const Json empty = Json::object();
        return has(k) ? Reader(j_.at(k), at(k)) : Reader(empty, at(k));
    }

    [[nodiscard]] double number(const char* k, double def) const {
        if (!has(k)) return def;
        const auto& v = j_.at(k);
        if (!v.is_number()) throw ConfigError(at(k), "expected a number");
        const double x = v.get<double>();
        if (!std::isfinite(x)) throw ConfigError(at(k), "must be finite");
        return x;
    }

    [[nodiscard]] double positive(const char* k, double def) const {
        const double x = number(k, def);
        if (!(x > 0.0)) throw ConfigError(at(k), "must be positive");
        return x;
    }

    [[nodiscard]] double non_negative(const char* k, double def) const {
        const double x = number(k, def);
        if (!(x >= 0.0)) throw ConfigError(at(k), "must be non-negative");
        return x;
    }

    [[nodiscard]] std::int64_t integer(const char* k, std::int64_t def, std::int64_t min) const {
        if (!has(k)) return def;
        const auto& v = j_.at(k);
        if (!v.is_number_integer()) throw ConfigError(at(k), "expected an integer");
        const auto x = v.get<std::int64_t>();
        if (x < min) throw ConfigError(at(k), "must be >= " + std::to_string(min));
        return x;
    }

    [[nodiscard]] std::uint64_t unsigned64(const char* k, std::uint64_t def) const {
        if (!has(k)) return def;
        const auto& v = j_.at(k);
        if (!v.is_number_unsigned()) throw ConfigError(at(k), "expected a non-negative integer");
        return v.get<std::uint64_t>();
    }

    [[nodiscard]] bool boolean(const char* k, bool def) const {
        if (!has(k)) return def;
        const auto& v = j_.at(k);
        if (!v.is_boolean()) throw ConfigError(at(k), "expected true or false");
        return v.get<bool>();
    }

    [[nodiscard]] std::string string(const char* k, const std::string& def) const {
        if (!has(k)) return def;
        const auto& v = j_.at(k);
        if (!v.is_string()) throw ConfigError(at(k), "expected a string");
        return v.get<std::string>();
    }

    [[nodiscard]] Vec3 vec3(const char* k, const Vec3& def) const {
        if (!has(k)) return def;
        return to_vec3(j_.at(k), at(k));
    }

    [[nodiscard]] const Json& raw(const char* k) const { return j_.at(k); }

    static Vec3 to_vec3(const Json& v, const std::string& path) {
        if (!v.is_array() || v.size() != 3) throw ConfigError(path, "expected an array of 3 numbers");
        Vec3 out;
        for (int i = 0; i < 3; ++i) {
            if (!v[static_cast<std::size_t>(i)].is_number())
                throw ConfigError(path + "/" + std::to_string(i), "expected a number");
            out(i) = v[static_cast<std::size_t>(i)].get<double>();
        }
        if (!out.allFinite()) throw ConfigError(path, "must be finite");
        return out;
    }

private:
    const Json& j_;
    std::string path_;
};

}  // namespace detail

/// Builds a validated configuration. Missing keys take the built-in defaults; unknown keys are rejected.
/// Errors are ConfigError with a JSON-pointer style path to the offending field.
[[nodiscard]] inline ExperimentConfig validate_config(const Json& doc) {
    using detail::Reader;
    const Json root_doc = doc.is_null() ? Json::object() : doc;
    const Reader root(root_doc, "");
    root.allow({"scenario", "control", "motion", "sim", "filter", "gospa", "experiment"});
    ExperimentConfig cfg;
    Json& res = cfg.resolved;

    // Scenario.
    const Reader sc = root.object("scenario");
    sc.allow({"bs", "landmarks", "ue_height", "fov_radius_sp", "p_detect", "clutter_mean", "max_range",
              "meas_noise_std"});
    Scenario& scen = cfg.sim.scenario;
    const Vec3 bs = sc.vec3("bs", Vec3(0.0, 0.0, 40.0));
    scen.bs = Landmark(bs, LandmarkKind::BS);
    if (sc.has("landmarks")) {
        const Json& arr = sc.raw("landmarks");
        if (!arr.is_array()) throw ConfigError(sc.at("landmarks"), "expected an array");
        for (std::size_t i = 0; i < arr.size(); ++i) {
            const Reader lm(arr[i], sc.at("landmarks") + "/" + std::to_string(i));
            lm.allow({"kind", "position"});
            if (!lm.has("kind") || !lm.has("position")) throw ConfigError(lm.at(""), "needs kind and position");
            LandmarkKind kind;
            try {
                kind = parse_kind(lm.string("kind", ""));
            } catch (const Error& e) {
                throw ConfigError(lm.at("kind"), e.what());
            }
            if (kind == LandmarkKind::BS) throw ConfigError(lm.at("kind"), "the BS is given by scenario/bs");
            scen.landmarks.emplace_back(lm.vec3("position", Vec3::Zero()), kind);
        }
    } else {
        scen.landmarks = default_landmarks(bs);
    }
    scen.ue_height = sc.number("ue_height", 0.0);
    scen.fov_radius_sp = sc.positive("fov_radius_sp", 50.0);
    scen.p_detect = sc.non_negative("p_detect", 0.9);
    if (scen.p_detect > 1.0) throw ConfigError(sc.at("p_detect"), "must be <= 1");
    scen.clutter_mean = sc.non_negative("clutter_mean", 1.0);
    scen.max_range = sc.positive("max_range", 200.0);
    {
        const Reader ns = sc.object("meas_noise_std");
        ns.allow({"toa_m", "aoa_az", "aoa_el", "aod_az", "aod_el"});
        const Vec5 std_dev(ns.positive("toa_m", 0.1) / kSpeedOfLight, ns.positive("aoa_az", 0.01),
                           ns.positive("aoa_el", 0.01), ns.positive("aod_az", 0.01), ns.positive("aod_el", 0.01));
        try {
            scen.meas_noise = MeasNoise::from_std(std_dev);
        } catch (const Error& e) {
            throw ConfigError(sc.at("meas_noise_std"), e.what());
        }
        res["scenario"]["meas_noise_std"] = {{"toa_m", std_dev(0) * kSpeedOfLight}, {"aoa_az", std_dev(1)},
                                             {"aoa_el", std_dev(2)}, {"aod_az", std_dev(3)}, {"aod_el", std_dev(4)}};
    }
    try {
        scen.validate();
    } catch (const Error& e) {
        throw ConfigError("/scenario", e.what());
    }
    res["scenario"]["bs"] = {bs.x(), bs.y(), bs.z()};
    res["scenario"]["landmarks"] = Json::array();
    for (const auto& lm : scen.landmarks)
        res["scenario"]["landmarks"].push_back(
            {{"kind", std::string(to_string(lm.kind()))},
             {"position", {lm.position().x(), lm.position().y(), lm.position().z()}}});
    res["scenario"]["ue_height"] = scen.ue_height;
    res["scenario"]["fov_radius_sp"] = scen.fov_radius_sp;
    res["scenario"]["p_detect"] = scen.p_detect;
    res["scenario"]["clutter_mean"] = scen.clutter_mean;
    res["scenario"]["max_range"] = scen.max_range;

    // Control and motion.
    const Reader ctl = root.object("control");
    ctl.allow({"speed", "turn_rate"});
    cfg.sim.control.speed = ctl.non_negative("speed", 22.22);
    cfg.sim.control.turn_rate = ctl.number("turn_rate", kPi / 10.0);
    res["control"] = {{"speed", cfg.sim.control.speed}, {"turn_rate", cfg.sim.control.turn_rate}};

    const Reader mo = root.object("motion");
    mo.allow({"dt", "q_std"});
    const double dt = mo.positive("dt", 0.5);
    const Reader q = mo.object("q_std");
    q.allow({"x", "y", "heading", "clock_bias_m"});
    const Vec4 q_std(q.non_negative("x", 0.2), q.non_negative("y", 0.2), q.non_negative("heading", 0.0035),
                     q.non_negative("clock_bias_m", 0.2) / kSpeedOfLight);
    cfg.sim.motion_noise = motion::MotionNoise(Mat4(q_std.cwiseProduct(q_std).asDiagonal()), dt);
    res["motion"] = {{"dt", dt},
                     {"q_std", {{"x", q_std(0)}, {"y", q_std(1)}, {"heading", q_std(2)},
                                {"clock_bias_m", q_std(3) * kSpeedOfLight}}}};

    // Simulation.
    const Reader sm = root.object("sim");
    sm.allow({"n_steps", "noisy_trajectory", "initial_state"});
    cfg.sim.n_steps = static_cast<int>(sm.integer("n_steps", 40, 1));
    cfg.sim.noisy_trajectory = sm.boolean("noisy_trajectory", true);
    const Reader is = sm.object("initial_state");
    is.allow({"x", "y", "heading", "clock_bias_m"});
    const double radius = std::abs(cfg.sim.control.turn_rate) > motion::kStraightLineTurnRate
                              ? cfg.sim.control.speed / cfg.sim.control.turn_rate
                              : 0.0;
    cfg.sim.initial_state = {is.number("x", radius), is.number("y", 0.0), wrap_angle(is.number("heading", kPi / 2.0)),
                             is.number("clock_bias_m", 300.0) / kSpeedOfLight};
    res["sim"] = {{"n_steps", cfg.sim.n_steps},
                  {"noisy_trajectory", cfg.sim.noisy_trajectory},
                  {"initial_state",
                   {{"x", cfg.sim.initial_state.x},
                    {"y", cfg.sim.initial_state.y},
                    {"heading", cfg.sim.initial_state.heading},
                    {"clock_bias_m", cfg.sim.initial_state.clock_bias * kSpeedOfLight}}}};

    // Filter.
    const Reader fl = root.object("filter");
    fl.allow({"type", "known_pose", "n_particles", "prior_std", "ess_triggered", "ess_threshold", "birth_intensity",
              "birth_cov_scale", "prune_threshold", "merge_threshold", "cap", "extract_threshold", "phd_extract_threshold", "gamma",
              "hyp_threshold", "max_hyps", "r_prune", "recycle", "ppp_prune_threshold", "bp_iterations",
              "bp_tolerance"});
    cfg.filter = parse_filter(fl.string("type", "pmbm"), fl.at("type"));
    cfg.known_pose = fl.boolean("known_pose", false);
    cfg.rbpf.n_particles = static_cast<std::size_t>(fl.integer("n_particles", 2000, 1));
    const Reader ps = fl.object("prior_std");
    ps.allow({"x", "y", "heading", "clock_bias_m"});
    const Vec4 p_std(ps.non_negative("x", 0.3), ps.non_negative("y", 0.3), ps.non_negative("heading", 0.0052),
                     ps.non_negative("clock_bias_m", 0.3) / kSpeedOfLight);
    cfg.rbpf.prior_cov = Mat4(p_std.cwiseProduct(p_std).asDiagonal());
    cfg.rbpf.ess_triggered = fl.boolean("ess_triggered", false);
    cfg.rbpf.ess_threshold = fl.positive("ess_threshold", 0.5);
    cfg.rbpf.control = cfg.sim.control;
    cfg.rbpf.motion_noise = cfg.sim.motion_noise;

    filters::BirthConfig birth;
    birth.intensity = fl.non_negative("birth_intensity", 1.5e-5);
    birth.cov_scale = fl.positive("birth_cov_scale", 10.0);
    cfg.phd.birth = birth;
    cfg.pmbm.birth = birth;
    cfg.phd.prune_threshold = fl.non_negative("prune_threshold", 1e-4);
    cfg.phd.merge_threshold = fl.non_negative("merge_threshold", 50.0);
    cfg.phd.cap = static_cast<std::size_t>(fl.integer("cap", 100, 1));
    const double extract = fl.non_negative("extract_threshold", 0.5);
    cfg.phd.extract_threshold = fl.non_negative("phd_extract_threshold", 0.08);
    cfg.pmbm.extract_threshold = extract;
    cfg.pmbm.gamma = static_cast<std::size_t>(fl.integer("gamma", 10, 1));
    cfg.pmbm.hyp_threshold = fl.non_negative("hyp_threshold", 1e-4);
    cfg.pmbm.max_hyps = static_cast<std::size_t>(fl.integer("max_hyps", 20, 1));
    cfg.pmbm.r_prune = fl.non_negative("r_prune", 1e-3);
    cfg.pmbm.recycle = fl.boolean("recycle", true);
    cfg.pmbm.ppp_prune_threshold = fl.non_negative("ppp_prune_threshold", 1e-7);
    cfg.bp_iterations = static_cast<int>(fl.integer("bp_iterations", 20, 1));
    cfg.bp_tolerance = fl.positive("bp_tolerance", 1e-6);
    res["filter"] = {{"type", to_string(cfg.filter)},
                     {"known_pose", cfg.known_pose},
                     {"n_particles", cfg.rbpf.n_particles},
                     {"prior_std", {{"x", p_std(0)}, {"y", p_std(1)}, {"heading", p_std(2)},
                                    {"clock_bias_m", p_std(3) * kSpeedOfLight}}},
                     {"ess_triggered", cfg.rbpf.ess_triggered},
                     {"ess_threshold", cfg.rbpf.ess_threshold},
                     {"birth_intensity", birth.intensity},
                     {"birth_cov_scale", birth.cov_scale},
                     {"prune_threshold", cfg.phd.prune_threshold},
                     {"merge_threshold", cfg.phd.merge_threshold},
                     {"cap", cfg.phd.cap},
                     {"extract_threshold", extract},
                     {"phd_extract_threshold", cfg.phd.extract_threshold},
                     {"gamma", cfg.pmbm.gamma},
                     {"hyp_threshold", cfg.pmbm.hyp_threshold},
                     {"max_hyps", cfg.pmbm.max_hyps},
                     {"r_prune", cfg.pmbm.r_prune},
                     {"recycle", cfg.pmbm.recycle},
                     {"ppp_prune_threshold", cfg.pmbm.ppp_prune_threshold},
                     {"bp_iterations", cfg.bp_iterations},
                     {"bp_tolerance", cfg.bp_tolerance}};

    // Metric.
    const Reader gp = root.object("gospa");
    gp.allow({"cutoff", "p", "alpha"});
    cfg.gospa.cutoff = gp.positive("cutoff", 20.0);
    cfg.gospa.p = gp.number("p", 2.0);
    cfg.gospa.alpha = gp.number("alpha", 2.0);
    try {
        cfg.gospa.validate();
    } catch (const ConfigError& e) {
        throw ConfigError("/gospa/" + e.path().substr(e.path().find('.') + 1), e.what());
    }
    res["gospa"] = {{"cutoff", cfg.gospa.cutoff}, {"p", cfg.gospa.p}, {"alpha", cfg.gospa.alpha}};

    // Experiment.
    const Reader ex = root.object("experiment");
    ex.allow({"n_mc_runs", "base_seed", "threads", "out_dir"});
    cfg.n_mc_runs = static_cast<int>(ex.integer("n_mc_runs", 10, 1));
    cfg.base_seed = ex.unsigned64("base_seed", 1);
    cfg.threads = static_cast<unsigned>(ex.integer("threads", 1, 1));
    cfg.out_dir = ex.string("out_dir", "out");
    res["experiment"] = {{"n_mc_runs", cfg.n_mc_runs}, {"base_seed", cfg.base_seed}};
    return cfg;
}

/// Parses JSON text; syntax errors name the line and column.
[[nodiscard]] inline ExperimentConfig parse_config(const std::string& text, const std::string& source = "<config>") {
    Json doc;
    try {
        doc = text.find_first_not_of(" \t\r\n") == std::string::npos ? Json::object() : Json::parse(text);
    } catch (const Json::parse_error& e) {
        std::size_t line = 1, col = 1;
        for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
            if (text[i] == '\n') {
                ++line;
                col = 1;
            } else {
                ++col;
            }
        }
        throw ConfigError(source + ":" + std::to_string(line) + ":" + std::to_string(col), "invalid JSON");
    }
    return validate_config(doc);
}

[[nodiscard]] inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(path, "cannot open configuration file");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), path);
}

}  // namespace rfslam::experiment
