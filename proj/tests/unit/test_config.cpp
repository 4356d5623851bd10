#include "rfslam/experiment/config.hpp"
#include "rfslam/experiment/experiment.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace rfslam;
using namespace rfslam::experiment;

namespace {

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

ExperimentConfig tiny(FilterKind f) {
    auto cfg = parse_config(R"({"sim": {"n_steps": 4}, "filter": {"n_particles": 20}, "experiment": {"n_mc_runs": 2}})");
    cfg.filter = f;
    return cfg;
}

std::filesystem::path scratch(const std::string& name) {
    const auto p = std::filesystem::temp_directory_path() / ("rfslam_test_" + name);
    std::filesystem::remove_all(p);
    return p;
}

}  // namespace

TEST(Config, EmptyDocumentGivesDefaults) {
    const auto cfg = parse_config("{}");
    EXPECT_EQ(cfg.sim.n_steps, 40);
    EXPECT_EQ(cfg.rbpf.n_particles, 2000u);
    EXPECT_EQ(cfg.filter, FilterKind::pmbm);
    EXPECT_EQ(cfg.sim.scenario.landmarks.size(), 8u);
    EXPECT_EQ(cfg.gospa.cutoff, 20.0);
    EXPECT_EQ(cfg.phd.extract_threshold, 0.08);
    EXPECT_EQ(parse_config("").sim.n_steps, 40);
}

TEST(Config, UnknownKeyIsRejected) {
    try {
        (void)parse_config(R"({"filter": {"n_partciles": 5}})");
        FAIL() << "expected ConfigError";
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("n_partciles"), std::string::npos) << e.what();
    }
}

TEST(Config, InvalidValueNamesTheField) {
    try {
        (void)parse_config(R"({"filter": {"n_particles": -3}})");
        FAIL() << "expected ConfigError";
    } catch (const ConfigError& e) {
        EXPECT_NE(e.path().find("n_particles"), std::string::npos) << e.what();
    }
    EXPECT_THROW((void)parse_config(R"({"sim": {"n_steps": 0}})"), ConfigError);
    EXPECT_THROW((void)parse_config(R"({"filter": {"type": "ekf"}})"), ConfigError);
    EXPECT_THROW((void)parse_config(R"({"scenario": {"p_detect": 1.5}})"), ConfigError);
}

TEST(Config, SyntaxErrorReportsLocation) {
    try {
        (void)parse_config("{\n  \"sim\": {,}\n}", "bad.json");
        FAIL() << "expected ConfigError";
    } catch (const ConfigError& e) {
        EXPECT_EQ(e.path().rfind("bad.json:2:", 0), 0u) << e.what();
    }
}

TEST(Config, OverridesAreApplied) {
    const auto cfg = parse_config(R"({"filter": {"type": "phd", "phd_extract_threshold": 0.3, "n_particles": 7},
                                      "experiment": {"base_seed": 99}})");
    EXPECT_EQ(cfg.filter, FilterKind::phd);
    EXPECT_EQ(cfg.phd.extract_threshold, 0.3);
    EXPECT_EQ(cfg.rbpf.n_particles, 7u);
    EXPECT_EQ(cfg.base_seed, 99u);
}

TEST(Config, ShippedConfigsLoad) {
    const std::filesystem::path dir(RFSLAM_SOURCE_DIR "/configs");
    const auto def = load_config((dir / "default.json").string());
    const auto base = parse_config("{}");
    EXPECT_EQ(config_hash(def), config_hash(base));
    const auto quick = load_config((dir / "quick.json").string());
    EXPECT_EQ(quick.rbpf.n_particles, 200u);
    EXPECT_THROW((void)load_config((dir / "missing.json").string()), ConfigError);
}

TEST(Experiment, CsvIsDeterministicAndCarriesMetadata) {
    for (const auto f : {FilterKind::phd, FilterKind::pmbm, FilterKind::bp}) {
        const auto cfg = tiny(f);
        const auto a = scratch("a"), b = scratch("b");
        (void)run_experiment(cfg, a.string());
        (void)run_experiment(cfg, b.string());
        const std::string steps = slurp(a / "steps.csv");
        EXPECT_EQ(steps, slurp(b / "steps.csv"));
        EXPECT_EQ(slurp(a / "summary.csv"), slurp(b / "summary.csv"));
        EXPECT_EQ(steps.rfind("# content: ", 0), 0u);
        EXPECT_NE(steps.find("# config_hash: fnv1a64:"), std::string::npos);
        EXPECT_NE(steps.find("# seed: base_seed=1"), std::string::npos);
        const auto table = read_csv(a / "steps.csv");
        EXPECT_EQ(table.rows.size(), 8u);
        EXPECT_EQ(table.header.front(), "run");
        std::filesystem::remove_all(a);
        std::filesystem::remove_all(b);
    }
}

TEST(Experiment, FullPrecisionRoundTrip) {
    for (const double v : {0.1, 1.0 / 3.0, 3.0e-7, -2.5e300, 0.0}) EXPECT_EQ(std::stod(fmt(v)), v);
}

TEST(Experiment, PlotDataAveragesOverRuns) {
    const auto cfg = tiny(FilterKind::phd);
    const auto dir = scratch("plot");
    const auto res = run_experiment(cfg, dir.string());
    write_plot_data(dir);
    const auto va = read_csv(dir / "plot_gospa_va.csv");
    ASSERT_EQ(va.rows.size(), 4u);
    const double expected = 0.5 * (res.runs[0].steps[1].va.total + res.runs[1].steps[1].va.total);
    EXPECT_NEAR(std::stod(va.rows[1][va.column("gospa_va_total")]), expected, 1e-12 * std::max(1.0, expected));
    std::filesystem::remove_all(dir);
}

TEST(Experiment, UnwritableOutputFailsBeforeRunning) {
    const auto file = scratch("file");
    {
        std::ofstream f(file);
        f << "x";
    }
    EXPECT_THROW((void)run_experiment(tiny(FilterKind::phd), (file / "sub").string()), Error);
    std::filesystem::remove_all(file);
}
