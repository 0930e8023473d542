#pragma once

// Submission gate: structure -> relevance -> toxicity -> redundancy.
// The first failing stage decides the outcome; later stages do not run.
// A backend failure parks the submission instead of rejecting it.

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "csas/bank/question_bank.hpp"
#include "csas/csv.hpp"
#include "csas/error.hpp"
#include "csas/filter/backend.hpp"
#include "csas/filter/mock_backend.hpp"
#include "csas/filter/prompt.hpp"
#include "csas/filter/similarity.hpp"

namespace csas::filter {

enum class SurveyMode { claims, issues };

enum class Decision { accepted, rejected_irrelevant, rejected_toxic, rejected_redundant, parked };

inline std::string to_string(SurveyMode m) { return m == SurveyMode::claims ? "claims" : "issues"; }

inline SurveyMode parse_mode(const std::string& s) {
    if (s == "claims") return SurveyMode::claims;
    if (s == "issues") return SurveyMode::issues;
    throw ConfigError("unknown survey mode '" + s + "' (expected claims or issues)");
}

inline std::string to_string(Decision d) {
    switch (d) {
        case Decision::accepted: return "accepted";
        case Decision::rejected_irrelevant: return "rejected_irrelevant";
        case Decision::rejected_toxic: return "rejected_toxic";
        case Decision::rejected_redundant: return "rejected_redundant";
        case Decision::parked: return "parked";
    }
    return "unknown";
}

struct StageRecord {
    std::string stage;    // structure, relevance, toxicity, redundancy
    std::string verdict;  // pass, fail, error
    std::string detail;

    bool operator==(const StageRecord&) const = default;
};

struct PipelineOutcome {
    Decision decision = Decision::parked;
    std::optional<std::string> structured_text;
    std::vector<Neighbor> nearest;
    std::vector<StageRecord> stage_log;
    std::vector<std::string> categories;  // moderation categories when flagged
    std::optional<Embedding> embedding;   // of structured_text, once computed
    std::string error;                    // backend failure message when parked

    bool accepted() const { return decision == Decision::accepted; }
};

struct PipelineConfig {
    SurveyMode mode = SurveyMode::claims;
    double similarity_threshold = kDefaultSimilarityThreshold;
    std::size_t neighbor_count = kDefaultNeighborCount;
    std::string topic = "politics";  // bound to {party} in the claim summary
    PromptTemplate claim_filter = templates::claim_filter();
    PromptTemplate claim_summary = templates::claim_summary();
    PromptTemplate issue_summary = templates::issue_summary();
    std::size_t max_input_chars = 2000;

    void validate() const {
        if (!(similarity_threshold > 0.0) || similarity_threshold > 1.0) {
            throw ConfigError("similarity threshold must lie in (0, 1]");
        }
        if (neighbor_count == 0) throw ConfigError("neighbor count must be at least 1");
    }
};

inline bool is_irrelevant_sentinel(std::string_view structured) {
    std::string t = text::trim(structured);
    while (!t.empty() && (t.back() == '.' || t.back() == '"')) t.pop_back();
    if (!t.empty() && t.front() == '"') t.erase(0, 1);
    return text::iequals(t, kIrrelevantSentinel);
}

// First line of a completion, trimmed.
inline std::string single_line(std::string_view completion) {
    auto s = text::trim(completion);
    if (auto nl = s.find_first_of("\r\n"); nl != std::string::npos) s = text::trim(std::string_view(s).substr(0, nl));
    return s;
}

inline std::string structure_text(const std::string& raw, SurveyMode mode, const std::string& topic,
                                  const std::vector<std::string>& match_texts, Backend& backend,
                                  const PipelineConfig& config = {}) {
    const auto trimmed = text::trim(raw);
    if (trimmed.empty()) throw ValidationError("submission text is empty");
    if (mode == SurveyMode::claims) {
        return single_line(backend.complete(config.claim_summary, {{"text", trimmed}, {"party", topic}}));
    }
    std::string matches;
    for (const auto& m : match_texts) {
        if (!matches.empty()) matches += ", ";
        matches += m;
    }
    return single_line(backend.complete(config.issue_summary, {{"text", trimmed}, {"matches", matches}}));
}

inline bool classify_claim(const std::string& input, Backend& backend, const PipelineConfig& config = {}) {
    const auto trimmed = text::trim(input);
    if (trimmed.empty()) throw ValidationError("claim text is empty");
    const auto answer = single_line(backend.complete(config.claim_filter, {{"text", trimmed}}));
    return !answer.empty() && answer.front() == '1';
}

struct ToxicityResult {
    bool passed = true;
    std::vector<std::string> categories;
};

inline ToxicityResult toxicity_check(const std::string& input, Backend& backend) {
    if (text::trim(input).empty()) throw ValidationError("text for moderation is empty");
    const auto m = backend.moderate(input);
    return {!m.flagged, m.categories};
}

namespace detail {

inline std::string join(const std::vector<std::string>& parts) {
    std::string out;
    for (const auto& p : parts) {
        if (!out.empty()) out += ',';
        out += p;
    }
    return out;
}

inline std::string describe(const std::vector<Neighbor>& nearest) {
    if (nearest.empty()) return "no neighbors";
    return "max similarity " + csv::format_double(nearest.front().similarity) + " with item " +
           to_string(nearest.front().item_id);
}

}  // namespace detail

// Runs every stage against the current bank without writing to it.
inline PipelineOutcome process_submission(const std::string& raw, const bank::QuestionBank& bank,
                                          const PipelineConfig& config, Backend& backend) {
    config.validate();
    const auto trimmed = text::trim(raw);
    if (trimmed.empty()) throw ValidationError("submission text is empty");
    if (raw.size() > config.max_input_chars) {
        throw ValidationError("submission exceeds " + std::to_string(config.max_input_chars) + " characters");
    }

    PipelineOutcome out;
    std::string stage = "structure";
    try {
        std::vector<std::string> match_texts;
        if (config.mode == SurveyMode::issues) {
            // existing themes close to the raw text go into the prompt
            const auto query = backend.embed(trimmed);
            for (const auto& n : bank.nearest(query, config.neighbor_count)) {
                if (auto item = bank.item(n.item_id)) match_texts.push_back(item->text);
            }
        }
        auto structured = structure_text(trimmed, config.mode, config.topic, match_texts, backend, config);
        if (structured.empty()) {
            out.stage_log.push_back({stage, "fail", "empty completion"});
            out.decision = Decision::rejected_irrelevant;
            return out;
        }
        out.stage_log.push_back({stage, "pass", structured});

        stage = "relevance";
        if (config.mode == SurveyMode::claims) {
            const bool claim = classify_claim(structured, backend, config);
            out.structured_text = structured;
            out.stage_log.push_back({stage, claim ? "pass" : "fail", claim ? "verifiable claim" : "not a claim"});
            if (!claim) {
                out.decision = Decision::rejected_irrelevant;
                return out;
            }
        } else {
            if (is_irrelevant_sentinel(structured)) {
                out.stage_log.push_back({stage, "fail", "sentinel"});
                out.decision = Decision::rejected_irrelevant;
                return out;
            }
            out.structured_text = structured;
            out.stage_log.push_back({stage, "pass", "relevant"});
        }

        stage = "toxicity";
        auto tox = toxicity_check(trimmed, backend);
        if (tox.passed && structured != trimmed) tox = toxicity_check(structured, backend);
        if (!tox.passed) {
            out.categories = tox.categories;
            out.stage_log.push_back({stage, "fail", detail::join(tox.categories)});
            out.decision = Decision::rejected_toxic;
            return out;
        }
        out.stage_log.push_back({stage, "pass", ""});

        stage = "redundancy";
        out.embedding = backend.embed(structured);
        auto red = bank.check_redundancy(*out.embedding, config.similarity_threshold, config.neighbor_count);
        out.nearest = std::move(red.nearest);
        out.stage_log.push_back({stage, red.passed ? "pass" : "fail", detail::describe(out.nearest)});
        out.decision = red.passed ? Decision::accepted : Decision::rejected_redundant;
        return out;
    } catch (const BackendError& e) {
        out.stage_log.push_back({stage, "error", e.what()});
        out.decision = Decision::parked;
        out.error = e.what();
        return out;
    }
}

inline nlohmann::json to_json(const PipelineOutcome& o) {
    nlohmann::json j;
    j["decision"] = to_string(o.decision);
    j["structured_text"] = o.structured_text ? nlohmann::json(*o.structured_text) : nlohmann::json(nullptr);
    j["nearest"] = nlohmann::json::array();
    for (const auto& n : o.nearest) j["nearest"].push_back({{"item_id", n.item_id.value}, {"similarity", n.similarity}});
    j["stage_log"] = nlohmann::json::array();
    for (const auto& s : o.stage_log) {
        j["stage_log"].push_back({{"stage", s.stage}, {"verdict", s.verdict}, {"detail", s.detail}});
    }
    j["categories"] = o.categories;
    if (!o.error.empty()) j["error"] = o.error;
    return j;
}

struct AuditEntry {
    std::int64_t timestamp_ms = 0;
    std::string respondent_id;
    std::string raw;
    PipelineOutcome outcome;
};

inline void write_audit_csv(std::ostream& os, const std::vector<AuditEntry>& entries) {
    csv::write_row(os, {"timestamp", "respondent_id", "raw", "decision", "structured_text", "categories", "nearest",
                        "stage_log"});
    for (const auto& e : entries) {
        const auto j = to_json(e.outcome);
        csv::write_row(os, {iso8601(e.timestamp_ms), e.respondent_id, e.raw, to_string(e.outcome.decision),
                            e.outcome.structured_text.value_or(""), detail::join(e.outcome.categories),
                            j["nearest"].dump(), j["stage_log"].dump()});
    }
}

}  // namespace csas::filter
