#pragma once

// Synthetic field-period description, read from JSON (schema in
// docs/scenario_schema.md).

#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "csas/bandit.hpp"
#include "csas/error.hpp"
#include "csas/types.hpp"

namespace csas::sim {

struct ArmSpec {
    std::string label;
    double latent_mean = 0.0;
    // 0: seeded before fielding. i > 0: submitted by respondent i, who
    // self-rates it. n_respondents: never enters.
    std::int64_t arrival = 0;

    bool operator==(const ArmSpec&) const = default;
};

struct Scenario {
    std::string name = "scenario";
    std::vector<ArmSpec> arms;
    double noise_sd = 0.75;
    std::int64_t n_respondents = 500;
    std::size_t k = 4;
    Scale scale{1.0, 4.0};
    std::int64_t batch_size = 1;  // 1 means respondent-level updating
    std::int64_t replications = 20;
    std::uint64_t master_seed = 1;
    std::int64_t monte_carlo_draws = bandit::kDefaultMonteCarloDraws;
    double floor = bandit::kDefaultFloor;

    bool respondent_level() const { return batch_size == 1; }

    void validate() const {
        const auto fail = [](const std::string& msg) { throw ScenarioError(msg); };
        if (arms.empty()) fail("scenario has no arms");
        if (!(scale.min < scale.max)) fail("scale minimum must be below its maximum");
        if (!(noise_sd >= 0.0) || !std::isfinite(noise_sd)) fail("noise_sd must be a non-negative number");
        if (n_respondents < 1) fail("n_respondents must be at least 1");
        if (k < 1) fail("k must be at least 1");
        if (batch_size < 1) fail("batch size must be at least 1");
        if (replications < 1) fail("replications must be at least 1");
        if (monte_carlo_draws < 1) fail("monte_carlo_draws must be at least 1");
        if (!(floor >= 0.0 && floor < 1.0)) fail("floor must lie in [0, 1)");
        std::set<std::string> labels;
        std::map<std::int64_t, std::string> submitted_at;
        for (const auto& a : arms) {
            if (a.label.empty()) fail("arm labels must not be empty");
            if (!labels.insert(a.label).second) fail("duplicate arm label '" + a.label + "'");
            if (!std::isfinite(a.latent_mean) || !scale.contains(a.latent_mean)) {
                fail("arm '" + a.label + "' latent mean lies outside the scale");
            }
            if (a.arrival < 0 || a.arrival > n_respondents) {
                fail("arm '" + a.label + "' arrival must lie in [0, n_respondents]");
            }
            if (a.arrival > 0 && a.arrival < n_respondents) {
                auto [it, inserted] = submitted_at.emplace(a.arrival, a.label);
                if (!inserted) {
                    fail("arms '" + it->second + "' and '" + a.label + "' both arrive at respondent " +
                         std::to_string(a.arrival) + "; each respondent submits at most one item");
                }
            }
        }
    }
};

// Five arms 1.5..3.5 on a 1-4 scale, k = 4, 500 respondents, 20 replications.
inline Scenario default_scenario() {
    Scenario s;
    s.name = "default-5-arm";
    for (int i = 0; i < 5; ++i) s.arms.push_back({"arm" + std::to_string(i + 1), 1.5 + 0.5 * i, 0});
    return s;
}

inline Scenario scenario_from_json(const nlohmann::json& j) {
    Scenario s;
    try {
        if (!j.is_object()) throw ScenarioError("scenario must be a JSON object");
        static const std::set<std::string> known{"name",         "arms",  "noise_sd",     "n_respondents",
                                                 "k",            "scale", "update_mode",  "replications",
                                                 "master_seed",  "monte_carlo_draws", "floor"};
        for (const auto& [key, value] : j.items()) {
            if (!known.contains(key)) throw ScenarioError("unknown scenario field '" + key + "'");
        }
        s.name = j.value("name", s.name);
        for (const auto& a : j.at("arms")) {
            s.arms.push_back({a.at("label").get<std::string>(), a.at("latent_mean").get<double>(),
                              a.value("arrival", std::int64_t{0})});
        }
        s.noise_sd = j.value("noise_sd", s.noise_sd);
        s.n_respondents = j.value("n_respondents", s.n_respondents);
        const auto k = j.value("k", static_cast<std::int64_t>(s.k));
        if (k < 1) throw ScenarioError("k must be at least 1");
        s.k = static_cast<std::size_t>(k);
        if (j.contains("scale")) s.scale = {j["scale"].at("min").get<double>(), j["scale"].at("max").get<double>()};
        if (j.contains("update_mode")) {
            const auto& m = j["update_mode"];
            if (m.is_string() && m.get<std::string>() == "respondent_level") {
                s.batch_size = 1;
            } else if (m.is_object() && m.contains("batch")) {
                s.batch_size = m["batch"].get<std::int64_t>();
            } else {
                throw ScenarioError("update_mode must be \"respondent_level\" or {\"batch\": size}");
            }
        }
        s.replications = j.value("replications", s.replications);
        s.master_seed = j.value("master_seed", s.master_seed);
        s.monte_carlo_draws = j.value("monte_carlo_draws", s.monte_carlo_draws);
        s.floor = j.value("floor", s.floor);
    } catch (const nlohmann::json::exception& e) {
        throw ScenarioError(std::string("malformed scenario: ") + e.what());
    }
    s.validate();
    return s;
}

inline nlohmann::json to_json(const Scenario& s) {
    nlohmann::json arms = nlohmann::json::array();
    for (const auto& a : s.arms) arms.push_back({{"label", a.label}, {"latent_mean", a.latent_mean}, {"arrival", a.arrival}});
    return {{"name", s.name},
            {"arms", arms},
            {"noise_sd", s.noise_sd},
            {"n_respondents", s.n_respondents},
            {"k", s.k},
            {"scale", {{"min", s.scale.min}, {"max", s.scale.max}}},
            {"update_mode", s.respondent_level() ? nlohmann::json("respondent_level")
                                                 : nlohmann::json{{"batch", s.batch_size}}},
            {"replications", s.replications},
            {"master_seed", s.master_seed},
            {"monte_carlo_draws", s.monte_carlo_draws},
            {"floor", s.floor}};
}

inline Scenario load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ScenarioError("cannot read scenario file '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(buf.str());
    } catch (const nlohmann::json::parse_error& e) {
        throw ScenarioError("scenario file '" + path + "' is not valid JSON: " + e.what());
    }
    return scenario_from_json(j);
}

}  // namespace csas::sim
