// csas: run the survey gateway or the simulation studies from the command line.
//
//   csas serve [--port 8080] [--store survey.db] [--config config.json]
//   csas simulate --scenario s.json --out results/
//   csas compare --scenario s.json [--batch 50]
//   csas late-arrival --scenario s.json [--out results/]
//   csas scenario            print the default scenario
//
// Exit status: 0 on success, 2 for a bad scenario, 1 for any other error.

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>

#include <CLI11.hpp>

#include "csas/gateway/http.hpp"
#include "csas/sim/simulator.hpp"

namespace fs = std::filesystem;
using namespace csas;

namespace {

httplib::Server* g_server = nullptr;

void on_signal(int) {
    if (g_server) g_server->stop();
}

std::ofstream open_out(const fs::path& path) {
    std::ofstream os(path);
    if (!os) throw StorageError("cannot write " + path.string());
    return os;
}

void write_report(const fs::path& dir, const sim::Scenario& s, const sim::SimulationReport& r) {
    fs::create_directories(dir);
    {
        auto os = open_out(dir / "arms.csv");
        sim::write_arms_csv(os, r);
    }
    {
        auto os = open_out(dir / "replications.csv");
        sim::write_replications_csv(os, s, r);
    }
    {
        auto os = open_out(dir / "regret.csv");
        sim::write_regret_csv(os, r);
    }
    auto os = open_out(dir / "report.ndjson");
    sim::write_ndjson(os, r);
}

std::string fmt(const std::optional<double>& v, int precision = 3) {
    if (!v) return "-";
    std::ostringstream os;
    os << std::fixed << std::setprecision(precision) << *v;
    return os.str();
}

void print_summary(const sim::SimulationReport& r) {
    std::cout << std::left << std::setw(12) << "arm" << std::right << std::setw(8) << "latent" << std::setw(9)
              << "arrival" << std::setw(9) << "share" << std::setw(9) << "ratings" << std::setw(10) << "estimate"
              << std::setw(8) << "bias" << std::setw(8) << "se" << '\n';
    for (const auto& a : r.arms) {
        std::cout << std::left << std::setw(12) << a.label << std::right << std::setw(8) << fmt(a.latent_mean, 2)
                  << std::setw(9) << a.arrival << std::setw(9) << fmt(a.mean_share) << std::setw(9)
                  << fmt(a.mean_ratings, 1) << std::setw(10) << fmt(a.mean_estimate) << std::setw(8) << fmt(a.bias)
                  << std::setw(8) << fmt(a.empirical_se) << '\n';
    }
    std::cout << "identification rate " << fmt(r.identification_rate, 2) << ", concentration rate "
              << fmt(r.concentration_rate, 2) << ", mean final regret "
              << fmt(r.mean_cumulative_regret.empty() ? std::nullopt
                                                      : std::optional<double>(r.mean_cumulative_regret.back()),
                     2)
              << '\n';
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Adaptive survey engine: gateway and simulator"};
    app.require_subcommand(1);

    std::string scenario_path, out_dir;
    unsigned threads = 0;

    auto* simulate = app.add_subcommand("simulate", "run a scenario and write CSV and NDJSON results");
    simulate->add_option("--scenario", scenario_path, "scenario JSON file")->required();
    simulate->add_option("--out", out_dir, "output directory")->required();
    simulate->add_option("--threads", threads, "worker threads (0: all cores)");

    std::int64_t batch = 0;
    auto* compare = app.add_subcommand("compare", "respondent-level versus batch updating on the same seeds");
    compare->add_option("--scenario", scenario_path, "scenario JSON file")->required();
    compare->add_option("--batch", batch, "batch size (default: the scenario's, else 50)");
    compare->add_option("--out", out_dir, "also write both reports under this directory");
    compare->add_option("--threads", threads, "worker threads (0: all cores)");

    auto* late = app.add_subcommand("late-arrival", "exposure of late items against an all-seeded counterfactual");
    late->add_option("--scenario", scenario_path, "scenario JSON file")->required();
    late->add_option("--out", out_dir, "also write both reports under this directory");
    late->add_option("--threads", threads, "worker threads (0: all cores)");

    app.add_subcommand("scenario", "print the default scenario as JSON");

    auto options = gateway::ServerOptions::from_env();
    std::string config_path;
    auto* serve = app.add_subcommand("serve", "run the survey gateway");
    serve->add_option("--host", options.host, "bind address (CSAS_HOST)");
    serve->add_option("--port", options.port, "port (CSAS_PORT)");
    serve->add_option("--store", options.store_path, "SQLite file; empty keeps everything in memory (CSAS_STORE)");
    serve->add_option("--ui", options.ui_dir, "static dashboard directory mounted at /ui (CSAS_UI_DIR)");
    serve->add_option("--config", config_path, "initial survey config JSON; ignored when the store has one");

    CLI11_PARSE(app, argc, argv);

    try {
        if (app.got_subcommand("scenario")) {
            std::cout << sim::to_json(sim::default_scenario()).dump(2) << '\n';
            return 0;
        }
        if (simulate->parsed()) {
            const auto s = sim::load_scenario(scenario_path);
            const auto r = sim::run(s, {threads});
            write_report(out_dir, s, r);
            print_summary(r);
            std::cout << "wrote " << out_dir << "/{arms.csv,replications.csv,regret.csv,report.ndjson}\n";
            return 0;
        }
        if (compare->parsed()) {
            const auto s = sim::load_scenario(scenario_path);
            if (batch == 0) batch = s.respondent_level() ? 50 : s.batch_size;
            const auto c = sim::compare_update_modes(s, batch, {threads});
            std::cout << "respondent-level updating\n";
            print_summary(c.respondent_level);
            std::cout << "\nbatch updating, " << batch << " respondents per batch\n";
            print_summary(c.batch);
            std::cout << "\nmedian final regret, batch minus respondent-level: " << fmt(c.median_regret_difference, 2)
                      << "\nidentification rate, batch minus respondent-level: "
                      << fmt(c.identification_rate_difference, 2) << '\n';
            if (!out_dir.empty()) {
                auto b = s;
                b.batch_size = batch;
                write_report(fs::path(out_dir) / "respondent_level", s, c.respondent_level);
                write_report(fs::path(out_dir) / "batch", b, c.batch);
            }
            return 0;
        }
        if (late->parsed()) {
            const auto s = sim::load_scenario(scenario_path);
            const auto study = sim::late_arrival_study(s, {threads});
            std::cout << std::left << std::setw(12) << "arm" << std::right << std::setw(9) << "arrival"
                      << std::setw(12) << "late/rep" << std::setw(12) << "early/rep" << std::setw(10) << "deficit"
                      << '\n';
            for (const auto& row : study.exposure) {
                std::cout << std::left << std::setw(12) << row.label << std::right << std::setw(9) << row.arrival
                          << std::setw(12) << fmt(row.late_assignments, 1) << std::setw(12)
                          << fmt(row.early_assignments, 1) << std::setw(10) << fmt(row.assignment_deficit, 1) << '\n';
            }
            if (!out_dir.empty()) {
                write_report(fs::path(out_dir) / "late", s, study.late);
                auto e = s;
                for (auto& a : e.arms) a.arrival = 0;
                write_report(fs::path(out_dir) / "early", e, study.early);
            }
            return 0;
        }
        if (serve->parsed()) {
            gateway::SurveyConfig config;
            if (!config_path.empty()) {
                std::ifstream is(config_path);
                if (!is) throw ConfigError("cannot read " + config_path);
                try {
                    config = gateway::SurveyConfig::from_json(nlohmann::json::parse(is));
                } catch (const nlohmann::json::parse_error& e) {
                    throw ConfigError(config_path + ": " + e.what());
                }
            }
            gateway::SurveyService service(config, nullptr, options.store_path);
            httplib::Server server;
            gateway::bind_routes(server, service, options);
            g_server = &server;
            std::signal(SIGINT, on_signal);
            std::signal(SIGTERM, on_signal);
            std::cerr << "listening on " << options.host << ":" << options.port
                      << (options.store_path.empty() ? " (in-memory store)" : " store " + options.store_path) << '\n';
            if (!server.listen(options.host, options.port)) {
                throw ConfigError("cannot listen on " + options.host + ":" + std::to_string(options.port));
            }
            return 0;
        }
    } catch (const ScenarioError& e) {
        std::cerr << "scenario error: " << e.what() << '\n';
        return 2;
    } catch (const Error& e) {
        std::cerr << to_string(e.code()) << ": " << e.what() << '\n';
        return 1;
    }
    return 0;
}
