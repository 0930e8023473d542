#pragma once

// The survey protocol independent of HTTP. Three respondent-facing calls:
//
//   input   open-ended text -> structured item (or rejection), recorded once
//   sample  k dynamic items with their selection probabilities, recorded once
//   update  ratings for the served items plus the respondent's own item
//
// plus the researcher-facing configuration, seeding, moderation and
// reporting calls. Everything /update needs to validate is stored at /sample
// time, so callers carry no state beyond the respondent id.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "csas/bandit.hpp"
#include "csas/bank/question_bank.hpp"
#include "csas/csv.hpp"
#include "csas/error.hpp"
#include "csas/estimator.hpp"
#include "csas/filter/backend.hpp"
#include "csas/filter/http_backend.hpp"
#include "csas/filter/mock_backend.hpp"
#include "csas/filter/pipeline.hpp"
#include "csas/gateway/config.hpp"
#include "csas/random.hpp"
#include "csas/version.hpp"

namespace csas::gateway {

using Params = std::map<std::string, std::string>;
using nlohmann::json;

// An error with a fixed HTTP status and a structured detail payload.
class ProtocolError : public Error {
public:
    ProtocolError(ErrorCode code, int status, const std::string& message, json detail = json::object())
        : Error(code, message), status_(status), detail_(std::move(detail)) {}

    int status() const noexcept { return status_; }
    const json& detail() const noexcept { return detail_; }

private:
    int status_;
    json detail_;
};

inline int http_status(ErrorCode code) {
    switch (code) {
        case ErrorCode::SeedCountError:
        case ErrorCode::InsufficientItems:
        case ErrorCode::EmptyBank:
        case ErrorCode::InvalidTransition:
        case ErrorCode::DuplicateSeed: return 409;
        case ErrorCode::ValidationError:
        case ErrorCode::ConfigError:
        case ErrorCode::ScenarioError: return 400;
        case ErrorCode::NotFound:
        case ErrorCode::EmptyExport: return 404;
        case ErrorCode::DegenerateVector: return 422;
        case ErrorCode::BackendError: return 503;
        case ErrorCode::StorageError:
        case ErrorCode::DataIntegrityError: return 500;
    }
    return 500;
}

inline json error_body(const Error& e) {
    json body{{"error", std::string(to_string(e.code()))}, {"message", e.what()}};
    if (const auto* p = dynamic_cast<const ProtocolError*>(&e)) {
        for (const auto& [k, v] : p->detail().items()) body[k] = v;
    }
    return body;
}

// A non-JSON document (CSV export, NDJSON plot data).
struct Document {
    std::string content_type;
    std::string body;
};

struct InputResult {
    json body;
    bool parked = false;  // a backend failed; the submission waits in the moderation queue
};

inline void validate_respondent(const std::string& r) {
    const auto ok = [](char c) {
        return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.' || c == ':' || c == '@';
    };
    if (r.empty() || r.size() > 128 || !std::all_of(r.begin(), r.end(), ok)) {
        throw ValidationError("respondent must be 1-128 characters from [A-Za-z0-9_.:@-]");
    }
}

class SurveyService {
public:
    // `backend` may be null, in which case one is built from config.backend_id.
    // A stored configuration takes precedence over `config`.
    SurveyService(SurveyConfig config, std::shared_ptr<filter::Backend> backend = nullptr,
                  const std::string& store_path = {})
        : bank_(config.scale, store_path), backend_(std::move(backend)) {
        if (auto stored = bank_.get_meta(kConfigKey)) {
            config = SurveyConfig::from_json(json::parse(*stored));
        } else {
            config.validate();
            bank_.put_meta(kConfigKey, SurveyConfig::to_json(config).dump());
        }
        if (bank_.scale() != config.scale) bank_.set_scale(config.scale);
        config_ = std::move(config);
        if (!backend_) backend_ = filter::make_backend(config_.backend_id);
    }

    SurveyConfig config() const {
        std::shared_lock lock(config_mutex_);
        return config_;
    }

    const bank::QuestionBank& bank() const { return bank_; }

    bool fielding() const { return bank_.any_served() || bank_.event_count() > 0; }

    // -- configuration ------------------------------------------------------

    json get_config() const {
        json j = SurveyConfig::to_json(config());
        j["frozen"] = fielding();
        return j;
    }

    // Before fielding anything may change; afterwards only the moderation
    // mode and prompt bodies.
    json put_config(const json& patch) {
        std::unique_lock lock(config_mutex_);
        const auto next = SurveyConfig::from_json(patch, config_);
        if (fielding() && !next.differs_only_in_mutable_fields(config_)) {
            throw ProtocolError(ErrorCode::InvalidTransition, 409,
                                "survey is in the field: only moderation and prompts may change");
        }
        if (next.scale != bank_.scale()) bank_.set_scale(next.scale);
        if (next.backend_id != config_.backend_id) backend_ = filter::make_backend(next.backend_id);
        bank_.put_meta(kConfigKey, SurveyConfig::to_json(next).dump());
        config_ = next;
        json j = SurveyConfig::to_json(config_);
        j["frozen"] = fielding();
        return j;
    }

    // -- seeding ------------------------------------------------------------

    json seed(const std::vector<std::string>& texts) {
        const auto cfg = config();
        if (fielding()) throw ProtocolError(ErrorCode::InvalidTransition, 409, "survey is already in the field");
        if (bank_.item_count() > 0) throw ProtocolError(ErrorCode::InvalidTransition, 409, "bank is already seeded");
        auto backend = current_backend();
        std::vector<ItemId> ids;
        try {
            ids = bank_.seed(texts, cfg.k_dynamic, [&](const std::string& t) { return backend->embed(t); });
        } catch (const SeedCountError& e) {
            throw ProtocolError(ErrorCode::SeedCountError, 409, e.what(),
                                {{"minimum", cfg.k_dynamic}, {"given", texts.size()}});
        }
        json out{{"ids", json::array()}, {"sequence", bank_.sequence()}};
        for (auto id : ids) out["ids"].push_back(id.value);
        return out;
    }

    // -- /sample --------------------------------------------------------------

    json sample(const std::string& respondent) {
        validate_respondent(respondent);
        const auto cfg = config();
        if (auto existing = bank_.served(respondent)) return sample_body(respondent, *existing);

        const auto snap = bank_.snapshot_active();
        std::unordered_set<ItemId> exclude;
        if (auto sub = bank_.submission(respondent); sub && sub->self_item) exclude.insert(*sub->self_item);
        std::size_t available = 0;
        for (const auto& item : snap.items) available += !exclude.contains(item.id);
        if (available < cfg.k_dynamic) {
            throw ProtocolError(ErrorCode::SeedCountError, 409,
                                "the number of seed items must be equal to or greater than the number of dynamic "
                                "items: " + std::to_string(available) + " available, " +
                                    std::to_string(cfg.k_dynamic) + " needed",
                                {{"available", available}, {"k_dynamic", cfg.k_dynamic}});
        }
        const auto stream = filter::text::fnv1a(respondent, cfg.sampling_seed);
        const auto arms = snap.arms();
        const auto dist = bandit::respondent_distribution(arms, cfg.monte_carlo_draws, cfg.floor,
                                                          derive_seed(stream, static_cast<std::uint64_t>(snap.sequence)));
        const auto items = bandit::assign_items(dist, cfg.k_dynamic, exclude, derive_seed(stream, 0x5a));
        const auto stored = bank_.record_served({respondent, snap.sequence, items, false});
        return sample_body(respondent, stored);
    }

    // -- /input ---------------------------------------------------------------

    InputResult input(const std::string& respondent, const std::string& raw, bool dry_run = false) {
        if (!dry_run) validate_respondent(respondent);
        const auto cfg = config();
        if (raw.size() > cfg.max_input_chars) {
            throw ProtocolError(ErrorCode::ValidationError, 413,
                                "input exceeds " + std::to_string(cfg.max_input_chars) + " characters");
        }
        const auto trimmed = filter::text::trim(raw);
        if (trimmed.empty()) throw ValidationError("input text is empty");

        const auto key = respondent + ":" + std::to_string(filter::text::fnv1a(trimmed, 0));
        if (!dry_run) {
            if (auto existing = bank_.submission(respondent)) return replay(*existing, key);
        }

        auto backend = current_backend();
        const auto outcome = filter::process_submission(trimmed, bank_, cfg.pipeline(), *backend);
        record_audit(respondent, trimmed, outcome);

        json body = filter::to_json(outcome);
        body["respondent"] = respondent;
        body["status"] = filter::to_string(outcome.decision);
        body["completion"] = nullptr;
        body["self_id"] = nullptr;
        for (auto& n : body["nearest"]) {
            if (auto item = bank_.item(ItemId{n["item_id"].get<std::int64_t>()})) n["text"] = item->text;
        }
        const bool parked = outcome.decision == filter::Decision::parked;

        if (dry_run) {
            body["dry_run"] = true;
            if (outcome.structured_text && outcome.decision == filter::Decision::accepted) {
                body["completion"] = *outcome.structured_text;
            }
            return {body, parked};
        }

        bank::NewItem item;
        item.source = bank::Source::participant;
        item.submitter = respondent;
        item.text = outcome.structured_text.value_or(trimmed);
        std::optional<ItemId> matched;
        switch (outcome.decision) {
            case filter::Decision::accepted:
                item.status = cfg.moderation == Moderation::human_queue ? bank::Status::pending : bank::Status::active;
                item.embedding = outcome.embedding;
                if (item.status == bank::Status::pending) body["status"] = "pending";
                body["completion"] = *outcome.structured_text;
                break;
            case filter::Decision::parked:
                item.status = bank::Status::pending;
                item.reason = "parked: " + outcome.error;
                break;
            case filter::Decision::rejected_redundant:
                item.status = bank::Status::rejected_redundant;
                if (cfg.mode == filter::SurveyMode::issues && !outcome.nearest.empty()) {
                    // the respondent rates the theme their text merged into
                    if (auto m = bank_.item(outcome.nearest.front().item_id)) {
                        matched = m->id;
                        body["completion"] = m->text;
                    }
                }
                if (!outcome.nearest.empty()) item.reason = "similar to item " + to_string(outcome.nearest.front().item_id);
                break;
            case filter::Decision::rejected_toxic:
                item.status = bank::Status::rejected_toxic;
                item.reason = filter::detail::join(outcome.categories);
                break;
            case filter::Decision::rejected_irrelevant:
                item.status = bank::Status::rejected_irrelevant;
                break;
        }

        bank::SubmissionRecord record{respondent, key, matched, json::object()};
        const bool self_item_is_new = item.status == bank::Status::active || item.status == bank::Status::pending;
        // the outcome body needs the id the write assigns, so it is stored
        // separately once known
        auto [id, stored] = bank_.add_submitted_item(std::move(item), record, self_item_is_new);
        if (stored.idempotency_key != key) return replay(stored, key);
        if (stored.self_item) body["self_id"] = stored.self_item->value;
        (void)id;
        outcomes_store(respondent, body);
        return {body, parked};
    }

    // -- /update --------------------------------------------------------------

    json update(const std::string& respondent, const Params& params) {
        validate_respondent(respondent);
        const auto cfg = config();
        const auto served = bank_.served(respondent);
        if (!served) {
            throw ProtocolError(ErrorCode::NotFound, 422, "respondent has no served items",
                                {{"offenders", json::array({"respondent"})}});
        }
        if (served->updated) {
            throw ProtocolError(ErrorCode::InvalidTransition, 409, "ratings for this respondent were already recorded");
        }

        std::vector<std::string> offenders;
        std::vector<bank::RatingEvent> events;
        std::unordered_set<ItemId> used;
        const auto rating_of = [&](const std::string& name) -> std::optional<double> {
            auto it = params.find(name);
            if (it == params.end()) {
                offenders.push_back(name + " missing");
                return std::nullopt;
            }
            try {
                const double r = csv::parse_double(it->second);
                if (!std::isfinite(r) || !cfg.scale.contains(r)) {
                    offenders.push_back(name + "=" + it->second + " outside [" + csv::format_double(cfg.scale.min) +
                                        ", " + csv::format_double(cfg.scale.max) + "]");
                    return std::nullopt;
                }
                return r;
            } catch (const ValidationError&) {
                offenders.push_back(name + "=" + it->second + " is not a number");
                return std::nullopt;
            }
        };
        const auto id_of = [&](const std::string& name, const std::string& text) -> std::optional<ItemId> {
            try {
                return ItemId{csv::parse_int(text)};
            } catch (const ValidationError&) {
                offenders.push_back(name + "=" + text + " is not an item id");
                return std::nullopt;
            }
        };

        bank::Tags tags;
        for (const auto& t : cfg.subgroup_tags) {
            if (auto it = params.find(t); it != params.end() && !it->second.empty()) tags[t] = it->second;
        }

        for (const auto& [name, value] : params) {
            if (!name.starts_with("q_")) {
                if (name.starts_with("r_") && !params.contains("q_" + name.substr(2))) {
                    offenders.push_back(name + " has no matching q_" + name.substr(2));
                }
                continue;
            }
            const auto slot = name.substr(2);
            const auto id = id_of(name, value);
            const auto r = rating_of("r_" + slot);
            if (!id) continue;
            const auto it = std::find_if(served->items.begin(), served->items.end(),
                                         [&](const bandit::Assignment& a) { return a.item_id == *id; });
            if (it == served->items.end()) {
                offenders.push_back(name + "=" + value + " was not served to this respondent");
                continue;
            }
            if (!used.insert(*id).second) {
                offenders.push_back(name + "=" + value + " is rated twice");
                continue;
            }
            if (!r) continue;
            bank::RatingEvent e;
            e.respondent_id = respondent;
            e.item_id = *id;
            e.rating = *r;
            e.selection_prob = it->probability;
            e.subgroup_tags = tags;
            events.push_back(std::move(e));
        }

        const bool has_self_id = params.contains("self_id"), has_self_r = params.contains("self_r");
        if (has_self_id || has_self_r) {
            const auto sub = bank_.submission(respondent);
            std::optional<ItemId> id;
            if (!has_self_id) {
                offenders.push_back("self_id missing");
            } else {
                id = id_of("self_id", params.at("self_id"));
            }
            const auto r = rating_of("self_r");
            if (id && (!sub || !sub->self_item || *sub->self_item != *id)) {
                offenders.push_back("self_id=" + params.at("self_id") + " is not this respondent's item");
                id.reset();
            }
            if (id && used.contains(*id)) {
                offenders.push_back("self_id=" + params.at("self_id") + " is also a served item");
                id.reset();
            }
            if (id && r) {
                bank::RatingEvent e;
                e.respondent_id = respondent;
                e.item_id = *id;
                e.rating = *r;
                e.selection_prob = 1.0;
                e.self_submitted = true;
                e.subgroup_tags = tags;
                events.push_back(std::move(e));
            }
        }

        if (offenders.empty() && events.empty()) offenders.push_back("no ratings supplied");
        if (!offenders.empty()) {
            throw ProtocolError(ErrorCode::ValidationError, 422, "update rejected", {{"offenders", offenders}});
        }
        try {
            bank_.record_ratings(events, respondent);
        } catch (const InvalidTransitionError& e) {
            throw ProtocolError(ErrorCode::InvalidTransition, 409, e.what());
        } catch (const ValidationError& e) {
            throw ProtocolError(ErrorCode::ValidationError, 422, e.what(), {{"offenders", json::array({e.what()})}});
        }
        return {{"status", "ok"}, {"respondent", respondent}, {"events", events.size()}, {"sequence", bank_.sequence()}};
    }

    // -- researcher views -------------------------------------------------------

    json bank_view() const {
        const auto cfg = config();
        const auto snap = bank_.snapshot_active();
        std::map<ItemId, double> eq;
        if (!snap.items.empty()) {
            const auto arms = snap.arms();
            const auto dist = bandit::respondent_distribution(arms, cfg.monte_carlo_draws, cfg.floor,
                                                              derive_seed(cfg.sampling_seed, static_cast<std::uint64_t>(snap.sequence)));
            for (const auto& e : dist.entries) eq[e.item_id] = e.probability;
        }
        json items = json::array();
        for (const auto& item : bank_.items()) {
            json j = item_json(item);
            if (auto it = eq.find(item.id); it != eq.end()) j["e_q"] = it->second;
            items.push_back(std::move(j));
        }
        return {{"sequence", snap.sequence}, {"items", items}, {"events", bank_.event_count()}};
    }

    json pending() const {
        json out = json::array();
        for (const auto& item : bank_.pending()) out.push_back(item_json(item));
        return out;
    }

    json moderate(std::int64_t id, const std::string& decision, const std::string& reason) {
        bank::ModerationDecision d;
        if (decision == "approve") {
            d = bank::ModerationDecision::approve;
        } else if (decision == "reject") {
            d = bank::ModerationDecision::reject;
        } else {
            throw ValidationError("decision must be approve or reject");
        }
        const auto status = bank_.moderate(ItemId{id}, d, reason);
        return {{"id", id}, {"status", bank::to_string(status)}};
    }

    // tag / rule (categorical|median) / weight_mode / min_ratings /
    // group_a + group_b (contrasts) / ordering (mean|delta) / format (json|csv|plotdata)
    std::variant<json, Document> estimates(const Params& q) const {
        const auto cfg = config();
        const auto get = [&](const std::string& k, const std::string& fallback) {
            auto it = q.find(k);
            return it == q.end() || it->second.empty() ? fallback : it->second;
        };
        const auto mode = estimate::parse_weight_mode(get("weight_mode", "exclude_self"));
        std::size_t min_ratings = cfg.min_ratings;
        if (q.contains("min_ratings")) min_ratings = static_cast<std::size_t>(std::max<std::int64_t>(0, csv::parse_int(q.at("min_ratings"))));
        const auto format = get("format", "json");
        const auto ordering = estimate::parse_ordering(get("ordering", "mean"));
        const auto events = bank_.events();

        estimate::ItemTexts texts;
        for (const auto& item : bank_.items()) texts[item.id] = item.text;

        json out{{"weight_mode", estimate::to_string(mode)}, {"min_ratings", min_ratings}, {"sequence", bank_.sequence()}};
        std::vector<estimate::ExportRow> rows;
        if (q.contains("tag")) {
            estimate::Bucketing rule = estimate::Categorical{};
            const auto rule_name = get("rule", "categorical");
            if (rule_name == "median") {
                rule = estimate::MedianSplit{};
            } else if (rule_name != "categorical") {
                throw ValidationError("rule must be categorical or median");
            }
            const auto result = estimate::subgroup_estimates(events, q.at("tag"), rule, cfg.tag_set(), mode, min_ratings);
            out["tag"] = q.at("tag");
            out["dropped"] = result.dropped;
            if (result.median) out["median"] = *result.median;
            if (q.contains("group_a") && q.contains("group_b")) {
                const auto cs = estimate::contrasts(result.estimates, q.at("group_a"), q.at("group_b"));
                json arr = json::array();
                for (const auto& c : cs) {
                    arr.push_back({{"item_id", c.a.item_id.value},
                                   {"item_text", texts[c.a.item_id]},
                                   {"a", estimate::to_json(c.a)},
                                   {"b", estimate::to_json(c.b)},
                                   {"delta", c.test.delta},
                                   {"z", std::isfinite(c.test.z) ? json(c.test.z) : json(nullptr)},
                                   {"significant", c.test.significant},
                                   {"degenerate", c.test.degenerate}});
                }
                out["contrasts"] = arr;
                rows = estimate::rows_from(cs, texts);
            } else {
                rows = estimate::rows_from(result.estimates, texts);
            }
            json arr = json::array();
            for (const auto& e : result.estimates) arr.push_back(estimate::to_json(e));
            out["estimates"] = arr;
        } else {
            const auto ests = estimate::item_estimates(events, mode, min_ratings);
            json arr = json::array();
            for (const auto& e : ests) {
                auto j = estimate::to_json(e);
                j["item_text"] = texts[e.item_id];
                arr.push_back(j);
            }
            out["estimates"] = arr;
            rows = estimate::rows_from(ests, texts);
        }

        if (format == "json") return out;
        std::ostringstream os;
        if (format == "csv") {
            estimate::export_csv(os, rows, ordering);
            return Document{"text/csv", os.str()};
        }
        if (format == "plotdata") {
            estimate::export_plotdata(os, rows, ordering, mode);
            return Document{"application/x-ndjson", os.str()};
        }
        throw ValidationError("format must be json, csv or plotdata");
    }

    json healthz() const {
        return {{"status", "ok"},
                {"build", std::string(kVersion)},
                {"sequence", bank_.sequence()},
                {"items", bank_.item_count()},
                {"events", bank_.event_count()},
                {"backend", current_backend()->id()}};
    }

    Document audit_csv() const {
        std::lock_guard lock(audit_mutex_);
        std::ostringstream os;
        filter::write_audit_csv(os, audit_);
        return {"text/csv", os.str()};
    }

    Document events_csv() const {
        std::ostringstream os;
        bank_.export_events_csv(os);
        return {"text/csv", os.str()};
    }

private:
    static constexpr const char* kConfigKey = "survey_config";
    static constexpr const char* kOutcomePrefix = "input_outcome:";

    std::shared_ptr<filter::Backend> current_backend() const {
        std::shared_lock lock(config_mutex_);
        return backend_;
    }

    json sample_body(const std::string& respondent, const bank::ServedRecord& r) const {
        json body{{"respondent", respondent}, {"served_seq", r.served_seq}, {"k", r.items.size()}};
        for (std::size_t i = 0; i < r.items.size(); ++i) {
            const auto slot = std::to_string(i + 1);
            const auto item = bank_.item(r.items[i].item_id);
            body["q_" + slot] = item ? item->text : std::string{};
            body["id_" + slot] = r.items[i].item_id.value;
            body["p_" + slot] = r.items[i].probability;
        }
        return body;
    }

    static json item_json(const bank::QuestionItem& item) {
        return {{"id", item.id.value},
                {"text", item.text},
                {"source", bank::to_string(item.source)},
                {"status", bank::to_string(item.status)},
                {"n", item.stats.n},
                {"mean", item.stats.mean},
                {"created_seq", item.created_seq},
                {"submitter", item.submitter ? json(*item.submitter) : json(nullptr)},
                {"reason", item.reason}};
    }

    InputResult replay(const bank::SubmissionRecord& existing, const std::string& key) const {
        if (existing.idempotency_key != key) {
            throw ProtocolError(ErrorCode::InvalidTransition, 409, "respondent already submitted a different text");
        }
        json body;
        if (auto stored = bank_.get_meta(kOutcomePrefix + existing.respondent_id)) {
            body = json::parse(*stored);
        } else {
            body = existing.outcome;
        }
        body["replayed"] = true;
        return {body, body.value("status", "") == "parked"};
    }

    void outcomes_store(const std::string& respondent, const json& body) {
        bank_.put_meta(kOutcomePrefix + respondent, body.dump());
    }

    void record_audit(const std::string& respondent, const std::string& raw, const filter::PipelineOutcome& o) {
        std::lock_guard lock(audit_mutex_);
        audit_.push_back({now_millis(), respondent, raw, o});
    }

    bank::QuestionBank bank_;
    mutable std::shared_mutex config_mutex_;
    SurveyConfig config_;
    std::shared_ptr<filter::Backend> backend_;
    mutable std::mutex audit_mutex_;
    std::vector<filter::AuditEntry> audit_;
};

}  // namespace csas::gateway
