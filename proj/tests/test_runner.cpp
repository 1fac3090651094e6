#include <gtest/gtest.h>

#include "oio/oio.hpp"

#include <cstdlib>
#include <sys/wait.h>
#include <fstream>
#include <sstream>

using namespace oio;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("oio_test_runner_" + name);
    fs::remove_all(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::set<std::string> listing(const fs::path& dir) {
    std::set<std::string> out;
    for (const auto& e : fs::directory_iterator(dir)) out.insert(e.path().filename().string());
    return out;
}

ScenarioConfig small(std::vector<std::uint64_t> seeds) {
    ScenarioConfig c;
    c.seeds = std::move(seeds);
    c.navigation.steps = 60;
    return c;
}

} // namespace

TEST(Summary, Quantiles) {
    const Summary s = summarize({4.0, 1.0, 3.0, 2.0});
    EXPECT_DOUBLE_EQ(s.median, 2.5);
    EXPECT_DOUBLE_EQ(s.q25, 1.75);
    EXPECT_DOUBLE_EQ(s.p90, 3.7);
    EXPECT_TRUE(std::isnan(summarize({}).median));
}

TEST(Runner, OutputsAreDeterministicAcrossJobCounts) {
    const ScenarioConfig c = small({0, 1, 2});
    const fs::path a = scratch("det_a"), b = scratch("det_b");
    write_outputs(run(c, ExperimentMode::Compare, 1), a);
    write_outputs(run(c, ExperimentMode::Compare, 3), b);
    const auto files = listing(a);
    ASSERT_EQ(files, listing(b));
    for (const auto& f : files) {
        if (f == "report.json") continue; // carries wall-clock timings
        EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
    }
    fs::remove_all(a);
    fs::remove_all(b);
}

TEST(Runner, CompareFileInventory) {
    const ScenarioConfig c = small({4, 7});
    const fs::path dir = scratch("inventory");
    const RunReport r = run(c, ExperimentMode::Compare, 2);
    write_outputs(r, dir);
    const auto files = listing(dir);
    for (const std::string s : {"4", "7"}) {
        for (const std::string e : {"calibration", "cold", "calibrated"}) {
            EXPECT_TRUE(files.contains("run_seed" + s + "_" + e + ".csv")) << s << e;
            EXPECT_TRUE(files.contains("sensors_seed" + s + "_" + e + ".csv")) << s << e;
        }
        EXPECT_TRUE(files.contains("calibration_seed" + s + ".json"));
        EXPECT_TRUE(files.contains("trajectory_seed" + s + "_cold.csv"));
        EXPECT_TRUE(files.contains("trajectory_seed" + s + "_calibrated.csv"));
    }
    const auto trajectories = std::count_if(files.begin(), files.end(), [](const std::string& f) {
        return f.rfind("trajectory", 0) == 0;
    });
    EXPECT_EQ(trajectories, 4);
    EXPECT_TRUE(files.contains("per_seed.csv"));
    EXPECT_TRUE(files.contains("report.json"));
    EXPECT_TRUE(files.contains("config.resolved.json"));

    const auto report = nlohmann::json::parse(slurp(dir / "report.json"));
    EXPECT_EQ(report["mode"], "compare");
    EXPECT_EQ(report["seeds"].size(), 2u);
    EXPECT_EQ(report["config"], to_json(c));
    fs::remove_all(dir);
}

TEST(Runner, EnsembleWithoutNavigationWritesHeaderOnlyTrajectory) {
    const fs::path dir = scratch("empty");
    RunReport empty;
    const auto written = emit_plot_data(empty, dir);
    ASSERT_EQ(written.size(), 1u);
    EXPECT_EQ(slurp(written[0]), "t,source_x,source_y,source_z,est_x,est_y,est_z,tip_x,tip_y,tip_z,error\n");

    const RunReport cal = run(small({1}), ExperimentMode::Calibrate);
    EXPECT_EQ(emit_plot_data(cal, dir / "cal").front().filename(), "trajectory.csv");
    fs::remove_all(dir);
}

TEST(Runner, SeedsAreIsolated) {
    const RunReport alone = run(small({2}), ExperimentMode::NavigateCalibrated);
    const RunReport ensemble = run(small({0, 1, 2}), ExperimentMode::NavigateCalibrated, 3);
    const Episode* a = alone.seeds[0].find("calibrated");
    const Episode* b = ensemble.seeds[2].find("calibrated");
    ASSERT_TRUE(a && b && a->ok && b->ok);
    EXPECT_EQ(a->navigation->final_error, b->navigation->final_error);
    EXPECT_EQ(a->log.size(), b->log.size());
}

TEST(Runner, FailuresAreRecordedNotThrown) {
    ScenarioConfig c = small({0});
    c.protocol.stage_move_budget = 1;
    const RunReport r = run(c, ExperimentMode::Compare);
    EXPECT_EQ(r.failures(), 1u);
    EXPECT_FALSE(r.seeds[0].find("calibration")->ok);
    EXPECT_NE(r.seeds[0].find("calibration")->error.find("budget"), std::string::npos);
    EXPECT_TRUE(r.seeds[0].find("cold")->ok);
    EXPECT_FALSE(r.seeds[0].find("calibrated")->ok);
}

TEST(Config, RoundTrip) {
    ScenarioConfig c;
    c.sensor_kind = SensorKind::MOX_MQ;
    c.seeds = {3, 9};
    c.navigation.steps = 77;
    c.protocol.schedule = {DofMode::DOF2, DofMode::DOF5};
    const nlohmann::json j = to_json(c);
    EXPECT_EQ(to_json(scenario_from_json(j)), j);
    EXPECT_EQ(to_json(scenario_from_json(nlohmann::json::object())), to_json(ScenarioConfig{}));
}

TEST(Config, Errors) {
    using nlohmann::json;
    auto bad = [](const char* text) { return scenario_from_json(json::parse(text)); };
    EXPECT_THROW(bad(R"({"plume": {"amplitud": 5}})"), ConfigError);
    EXPECT_THROW(bad(R"({"extra": 1})"), ConfigError);
    EXPECT_THROW(bad(R"({"sensor": {"kind": "PID"}})"), ConfigError);
    EXPECT_THROW(bad(R"({"navigation": {"steps": "many"}})"), ConfigError);
    EXPECT_THROW(bad(R"({"navigation": {"steps": 0}})"), ConfigError);
    EXPECT_THROW(bad(R"({"seeds": []})"), ConfigError);
    EXPECT_THROW(bad(R"({"seeds": [-1]})"), ConfigError);
    EXPECT_THROW(bad(R"({"arm": {"encoder_drift_rate": 0.01}})"), ConfigError);
    EXPECT_THROW(bad(R"({"protocol": {"dof_schedule": ["DOF5", "DOF1"]}})"), ConfigError);
    EXPECT_THROW(bad(R"({"belief": {"min_improvement": 1.0}})"), ConfigError);
    EXPECT_THROW(bad(R"([1, 2])"), ConfigError);
    try {
        bad(R"({"belief": {"path_loss": {"exponent": 2}}})");
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("belief.path_loss.exponent"), std::string::npos);
    }
}

#ifdef OIO_CLI_PATH
namespace {

int cli(const std::string& args) {
    const std::string cmd = std::string("OIO_LOG_LEVEL=off ") + OIO_CLI_PATH + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

} // namespace

TEST(Cli, ExitCodes) {
    const fs::path dir = scratch("cli");
    fs::create_directories(dir);
    std::ofstream(dir / "ok.json") << R"({"navigation": {"steps": 40}})";
    std::ofstream(dir / "unknown.json") << R"({"navigation": {"stepz": 40}})";
    std::ofstream(dir / "broken.json") << R"({"navigation": )";
    std::ofstream(dir / "failing.json") << R"({"navigation": {"steps": 40}, "protocol": {"stage_move_budget": 1}})";
    const std::string out = " --out " + (dir / "out").string();

    EXPECT_EQ(cli("compare --config " + (dir / "ok.json").string() + " --seeds 2 --jobs 2" + out), 0);
    EXPECT_TRUE(fs::exists(dir / "out" / "per_seed.csv"));
    EXPECT_EQ(cli("navigate --cold --config " + (dir / "ok.json").string() + " --seeds 1,4" + out), 0);
    EXPECT_EQ(cli("compare --config " + (dir / "unknown.json").string() + out), 2);
    EXPECT_EQ(cli("compare --config " + (dir / "broken.json").string() + out), 2);
    EXPECT_EQ(cli("compare --config " + (dir / "missing.json").string() + out), 2);
    EXPECT_EQ(cli("compare --seeds x" + out), 2);
    EXPECT_EQ(cli("fly" + out), 2);
    EXPECT_EQ(cli("calibrate --config " + (dir / "failing.json").string() + " --seeds 1" + out), 0);
    EXPECT_EQ(cli("calibrate --strict --config " + (dir / "failing.json").string() + " --seeds 1" + out), 3);
    fs::remove_all(dir);
}
#endif
