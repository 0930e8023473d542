#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "csas/bandit.hpp"
#include "csas/csv.hpp"
#include "csas/error.hpp"
#include "csas/filter/pipeline.hpp"
#include "csas/types.hpp"

namespace csas::gateway {

enum class Moderation { automatic, human_queue };

inline std::string to_string(Moderation m) { return m == Moderation::automatic ? "auto" : "human_queue"; }

inline Moderation parse_moderation(const std::string& s) {
    if (s == "auto") return Moderation::automatic;
    if (s == "human_queue") return Moderation::human_queue;
    throw ConfigError("unknown moderation mode '" + s + "' (expected auto or human_queue)");
}

struct SurveyConfig {
    Scale scale{1.0, 4.0};
    std::size_t k_dynamic = 4;
    std::int64_t monte_carlo_draws = bandit::kDefaultMonteCarloDraws;
    double floor = bandit::kDefaultFloor;
    double similarity_threshold = filter::kDefaultSimilarityThreshold;
    std::size_t neighbor_count = filter::kDefaultNeighborCount;
    filter::SurveyMode mode = filter::SurveyMode::claims;
    Moderation moderation = Moderation::automatic;
    std::string backend_id = "mock";
    std::string topic = "politics";
    // Prompt bodies; empty means the shipped template.
    std::string claim_filter_prompt;
    std::string claim_summary_prompt;
    std::string issue_summary_prompt;
    std::vector<std::string> subgroup_tags;  // update parameters copied onto rating events
    std::size_t min_ratings = 1;             // estimates below this count are suppressed
    std::size_t max_input_chars = 2000;
    std::uint64_t sampling_seed = 1;
    // The floor is checked against this bank size at load: floor * size <= 1.
    // Larger banks still work; every item then sits at the floor.
    std::size_t plausible_bank_size = 100;

    void validate() const {
        scale.validate();
        if (k_dynamic < 1) throw ConfigError("k_dynamic must be at least 1");
        if (monte_carlo_draws < 1) throw ConfigError("monte_carlo_draws must be at least 1");
        if (!(floor > 0.0 && floor < 1.0)) throw ConfigError("floor must lie in (0, 1)");
        if (plausible_bank_size < 1) throw ConfigError("plausible_bank_size must be at least 1");
        if (floor * static_cast<double>(plausible_bank_size) > 1.0) {
            throw ConfigError("floor " + csv::format_double(floor) + " cannot hold for a bank of " +
                              std::to_string(plausible_bank_size) + " items");
        }
        if (!(similarity_threshold > 0.0 && similarity_threshold <= 1.0)) {
            throw ConfigError("similarity_threshold must lie in (0, 1]");
        }
        if (neighbor_count < 1) throw ConfigError("neighbor_count must be at least 1");
        if (backend_id != "mock" && backend_id != "http") throw ConfigError("backend_id must be mock or http");
        if (max_input_chars < 1) throw ConfigError("max_input_chars must be at least 1");
        const auto check_prompt = [](const std::string& name, const std::string& body,
                                     const std::set<std::string>& allowed) {
            if (body.empty()) return;
            for (const auto& p : filter::placeholders({name, body, 0.0})) {
                if (!allowed.contains(p)) throw ConfigError(name + " prompt uses unknown placeholder {" + p + "}");
            }
        };
        check_prompt("claim_filter", claim_filter_prompt, {"text"});
        check_prompt("claim_summary", claim_summary_prompt, {"text", "party"});
        check_prompt("issue_summary", issue_summary_prompt, {"text", "matches"});
        std::set<std::string> seen;
        for (const auto& t : subgroup_tags) {
            if (t.empty() || !seen.insert(t).second) throw ConfigError("subgroup tags must be distinct and non-empty");
            if (t == "respondent" || t == "self_id" || t == "self_r" || t.starts_with("q_") || t.starts_with("r_") ||
                t.starts_with("p_") || t.starts_with("id_")) {
                throw ConfigError("subgroup tag '" + t + "' collides with a protocol parameter");
            }
        }
    }

    filter::PipelineConfig pipeline() const {
        filter::PipelineConfig p;
        p.mode = mode;
        p.similarity_threshold = similarity_threshold;
        p.neighbor_count = neighbor_count;
        p.topic = topic;
        p.max_input_chars = max_input_chars;
        if (!claim_filter_prompt.empty()) p.claim_filter.body = claim_filter_prompt;
        if (!claim_summary_prompt.empty()) p.claim_summary.body = claim_summary_prompt;
        if (!issue_summary_prompt.empty()) p.issue_summary.body = issue_summary_prompt;
        return p;
    }

    std::set<std::string> tag_set() const { return {subgroup_tags.begin(), subgroup_tags.end()}; }

    // Fields a running survey may still change.
    bool differs_only_in_mutable_fields(const SurveyConfig& other) const {
        SurveyConfig a = *this, b = other;
        for (auto* c : {&a, &b}) {
            c->moderation = Moderation::automatic;
            c->claim_filter_prompt.clear();
            c->claim_summary_prompt.clear();
            c->issue_summary_prompt.clear();
        }
        return to_json(a) == to_json(b);
    }

    static nlohmann::json to_json(const SurveyConfig& c) {
        return {{"scale_min", c.scale.min},
                {"scale_max", c.scale.max},
                {"k_dynamic", c.k_dynamic},
                {"monte_carlo_draws", c.monte_carlo_draws},
                {"floor", c.floor},
                {"similarity_threshold", c.similarity_threshold},
                {"neighbor_count", c.neighbor_count},
                {"mode", filter::to_string(c.mode)},
                {"moderation", to_string(c.moderation)},
                {"backend_id", c.backend_id},
                {"topic", c.topic},
                {"prompts",
                 {{"claim_filter", c.claim_filter_prompt},
                  {"claim_summary", c.claim_summary_prompt},
                  {"issue_summary", c.issue_summary_prompt}}},
                {"subgroup_tags", c.subgroup_tags},
                {"min_ratings", c.min_ratings},
                {"max_input_chars", c.max_input_chars},
                {"sampling_seed", c.sampling_seed},
                {"plausible_bank_size", c.plausible_bank_size}};
    }

    // Missing fields keep the values of `base`.
    static SurveyConfig from_json(const nlohmann::json& j) { return from_json(j, SurveyConfig{}); }

    static SurveyConfig from_json(const nlohmann::json& j, SurveyConfig base) {
        if (!j.is_object()) throw ConfigError("config must be a JSON object");
        static const std::set<std::string> known{
            "scale_min", "scale_max", "k_dynamic", "monte_carlo_draws", "floor", "similarity_threshold",
            "neighbor_count", "mode", "moderation", "backend_id", "topic", "prompts", "subgroup_tags", "min_ratings",
            "max_input_chars", "sampling_seed", "plausible_bank_size"};
        for (const auto& [key, value] : j.items()) {
            if (!known.contains(key)) throw ConfigError("unknown config field '" + key + "'");
        }
        SurveyConfig c = std::move(base);
        try {
            c.scale.min = j.value("scale_min", c.scale.min);
            c.scale.max = j.value("scale_max", c.scale.max);
            const auto k = j.value("k_dynamic", static_cast<std::int64_t>(c.k_dynamic));
            if (k < 1) throw ConfigError("k_dynamic must be at least 1");
            c.k_dynamic = static_cast<std::size_t>(k);
            c.monte_carlo_draws = j.value("monte_carlo_draws", c.monte_carlo_draws);
            c.floor = j.value("floor", c.floor);
            c.similarity_threshold = j.value("similarity_threshold", c.similarity_threshold);
            const auto nc = j.value("neighbor_count", static_cast<std::int64_t>(c.neighbor_count));
            if (nc < 1) throw ConfigError("neighbor_count must be at least 1");
            c.neighbor_count = static_cast<std::size_t>(nc);
            if (j.contains("mode")) c.mode = filter::parse_mode(j["mode"].get<std::string>());
            if (j.contains("moderation")) c.moderation = parse_moderation(j["moderation"].get<std::string>());
            c.backend_id = j.value("backend_id", c.backend_id);
            c.topic = j.value("topic", c.topic);
            if (j.contains("prompts")) {
                const auto& p = j["prompts"];
                c.claim_filter_prompt = p.value("claim_filter", c.claim_filter_prompt);
                c.claim_summary_prompt = p.value("claim_summary", c.claim_summary_prompt);
                c.issue_summary_prompt = p.value("issue_summary", c.issue_summary_prompt);
            }
            if (j.contains("subgroup_tags")) c.subgroup_tags = j["subgroup_tags"].get<std::vector<std::string>>();
            const auto mr = j.value("min_ratings", static_cast<std::int64_t>(c.min_ratings));
            if (mr < 0) throw ConfigError("min_ratings must be non-negative");
            c.min_ratings = static_cast<std::size_t>(mr);
            const auto mx = j.value("max_input_chars", static_cast<std::int64_t>(c.max_input_chars));
            if (mx < 1) throw ConfigError("max_input_chars must be at least 1");
            c.max_input_chars = static_cast<std::size_t>(mx);
            c.sampling_seed = j.value("sampling_seed", c.sampling_seed);
            const auto pb = j.value("plausible_bank_size", static_cast<std::int64_t>(c.plausible_bank_size));
            if (pb < 1) throw ConfigError("plausible_bank_size must be at least 1");
            c.plausible_bank_size = static_cast<std::size_t>(pb);
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(std::string("malformed config: ") + e.what());
        }
        c.validate();
        return c;
    }
};

}  // namespace csas::gateway
