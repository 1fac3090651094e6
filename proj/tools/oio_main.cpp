// oio calibrate|navigate|compare --config <file> --seeds <n|list> --jobs <k> --out <dir> [--strict]
#include "oio/oio.hpp"

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

void configure_logging() {
    const char* env = std::getenv("OIO_LOG_LEVEL");
    spdlog::set_level(env ? spdlog::level::from_str(env) : spdlog::level::info);
    spdlog::set_pattern("[%l] %v");
}

// "7" means seeds 0..6; "3,5,11" is an explicit list.
std::vector<std::uint64_t> parse_seeds(const std::string& text) {
    std::vector<std::uint64_t> out;
    auto to_u64 = [&](const std::string& tok) {
        if (tok.empty() || tok.find_first_not_of("0123456789") != std::string::npos) {
            throw oio::ConfigError("--seeds: '" + text + "' is neither a count nor a comma-separated list");
        }
        return std::stoull(tok);
    };
    if (text.find(',') == std::string::npos) {
        const auto n = to_u64(text);
        if (n == 0) throw oio::ConfigError("--seeds: count must be > 0");
        for (std::uint64_t i = 0; i < n; ++i) out.push_back(i);
        return out;
    }
    std::stringstream ss(text);
    for (std::string tok; std::getline(ss, tok, ',');) out.push_back(to_u64(tok));
    return out;
}

oio::ScenarioConfig load_config(const std::string& path) {
    if (path.empty()) return {};
    std::ifstream in(path);
    if (!in) throw oio::ConfigError("--config: cannot open '" + path + "'");
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw oio::ConfigError(path + ": " + e.what());
    }
    return oio::scenario_from_json(j);
}

} // namespace

int main(int argc, char** argv) {
    configure_logging();

    CLI::App app{"olfactory-inertial odometry calibration and navigation experiments"};
    app.require_subcommand(1, 1);

    std::string config_path;
    std::string seeds_text;
    std::string out_dir;
    int jobs = 1;
    bool strict = false;
    bool cold = false;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "scenario JSON file (defaults apply when omitted)");
        sub->add_option("--seeds", seeds_text, "seed count n (0..n-1) or comma-separated list");
        sub->add_option("--jobs", jobs, "seeds run in parallel")->check(CLI::PositiveNumber);
        sub->add_option("--out", out_dir, "output directory (overrides output_dir)");
        sub->add_flag("--strict", strict, "exit 3 if any seed fails");
    };
    auto* calibrate = app.add_subcommand("calibrate", "run the calibration protocol per seed");
    auto* navigate = app.add_subcommand("navigate", "navigate with a calibrated filter (or --cold)");
    auto* compare = app.add_subcommand("compare", "cold and calibrated navigation on paired seeds");
    for (auto* sub : {calibrate, navigate, compare}) add_common(sub);
    navigate->add_flag("--cold", cold, "skip calibration and use the cold-start filter");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfig;
    }

    oio::ScenarioConfig config;
    try {
        config = load_config(config_path);
        if (!seeds_text.empty()) config.seeds = parse_seeds(seeds_text);
        if (!out_dir.empty()) config.output_dir = out_dir;
        if (calibrate->parsed()) {
            config.mode = oio::ExperimentMode::Calibrate;
        } else if (navigate->parsed()) {
            config.mode = cold ? oio::ExperimentMode::NavigateCold : oio::ExperimentMode::NavigateCalibrated;
        } else {
            config.mode = oio::ExperimentMode::Compare;
        }
        config.validate();
    } catch (const oio::ConfigError& e) {
        spdlog::error("config error: {}", e.what());
        return kExitConfig;
    }

    spdlog::info("{} on {} seed(s), sensor {}, {} job(s)", oio::to_string(config.mode), config.seeds.size(),
                 oio::to_string(config.sensor_kind), jobs);
    oio::RunReport report;
    try {
        report = oio::run(config, config.mode, jobs, [](const oio::SeedResult& s) {
            for (const auto& e : s.episodes) {
                if (!e.ok) {
                    spdlog::warn("seed {} {}: {}", s.seed, e.name, e.error);
                } else if (e.navigation) {
                    spdlog::debug("seed {} {}: final error {:.3f} mm", s.seed, e.name, e.navigation->final_error);
                } else {
                    spdlog::debug("seed {} {}: done at t = {:.1f} s", s.seed, e.name, e.sim_time);
                }
            }
        });
        oio::write_outputs(report, config.output_dir);
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return kExitRuntime;
    }

    for (const char* name : {"cold", "calibrated"}) {
        const auto errs = report.final_errors(name);
        if (errs.empty()) continue;
        const auto s = oio::summarize(errs);
        std::cout << name << ": median " << s.median << " mm, IQR " << (s.q75 - s.q25) << " mm, p90 " << s.p90
                  << " mm over " << s.count << " seeds\n";
    }
    const auto failures = report.failures();
    std::cout << "outputs in " << config.output_dir << ", " << failures << " failed seed(s)\n";
    if (failures > 0 && strict) return kExitRuntime;
    return kExitOk;
}
