#pragma once

// The question bank: items, their sufficient statistics and embeddings, the
// append-only rating log, and per-respondent protocol records.
//
// All mutations go through one writer (an exclusive lock) and, when a store
// path is given, are committed to SQLite in a transaction before the in-memory
// state changes. Readers take a shared lock and always observe a committed
// state, so a snapshot never pairs n and mean from different updates.

#include <algorithm>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <shared_mutex>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "csas/bandit.hpp"
#include "csas/bank/sqlite.hpp"
#include "csas/csv.hpp"
#include "csas/error.hpp"
#include "csas/filter/similarity.hpp"
#include "csas/types.hpp"

namespace csas::bank {

using bandit::SufficientStats;

enum class Source { seed, participant };

enum class Status {
    active,
    pending,
    rejected_redundant,
    rejected_toxic,
    rejected_irrelevant,
    rejected_moderation,
};

inline std::string to_string(Source s) { return s == Source::seed ? "seed" : "participant"; }

inline std::string to_string(Status s) {
    switch (s) {
        case Status::active: return "active";
        case Status::pending: return "pending";
        case Status::rejected_redundant: return "rejected_redundant";
        case Status::rejected_toxic: return "rejected_toxic";
        case Status::rejected_irrelevant: return "rejected_irrelevant";
        case Status::rejected_moderation: return "rejected_moderation";
    }
    return "unknown";
}

inline Source parse_source(const std::string& s) {
    if (s == "seed") return Source::seed;
    if (s == "participant") return Source::participant;
    throw ValidationError("unknown item source '" + s + "'");
}

inline Status parse_status(const std::string& s) {
    for (auto st : {Status::active, Status::pending, Status::rejected_redundant, Status::rejected_toxic,
                    Status::rejected_irrelevant, Status::rejected_moderation}) {
        if (to_string(st) == s) return st;
    }
    throw ValidationError("unknown item status '" + s + "'");
}

inline bool is_rejected(Status s) { return s != Status::active && s != Status::pending; }

struct QuestionItem {
    ItemId id;
    std::string text;
    Source source = Source::participant;
    Status status = Status::active;
    SufficientStats stats;
    std::optional<filter::Embedding> embedding;
    std::int64_t created_seq = 0;
    std::optional<std::string> submitter;
    std::string reason;  // rejection or moderation note
};

struct NewItem {
    std::string text;
    Source source = Source::participant;
    std::optional<std::string> submitter;
    Status status = Status::active;
    std::optional<filter::Embedding> embedding;
    std::string reason;
};

using Tags = std::map<std::string, std::string>;

struct RatingEvent {
    std::int64_t event_id = 0;  // assigned by the bank
    std::string respondent_id;
    ItemId item_id;
    double rating = 0.0;
    double selection_prob = 1.0;
    bool self_submitted = false;
    Tags subgroup_tags;
    std::int64_t timestamp_ms = 0;  // assigned by the bank when zero
};

struct ActiveItem {
    ItemId id;
    std::string text;
    SufficientStats stats;
};

struct Snapshot {
    std::int64_t sequence = 0;
    std::vector<ActiveItem> items;

    std::vector<bandit::ArmState> arms() const {
        std::vector<bandit::ArmState> out;
        out.reserve(items.size());
        for (const auto& item : items) out.push_back({item.id, item.stats});
        return out;
    }
};

// Items and probabilities served to one respondent by the sampling route.
struct ServedRecord {
    std::string respondent_id;
    std::int64_t served_seq = 0;
    std::vector<bandit::Assignment> items;
    bool updated = false;
};

// One respondent's open-ended submission and where its self-rating goes.
struct SubmissionRecord {
    std::string respondent_id;
    std::string idempotency_key;
    std::optional<ItemId> self_item;
    nlohmann::json outcome;
};

enum class ModerationDecision { approve, reject };

// Rebuilds every item's statistics from the rating log alone.
inline std::map<ItemId, SufficientStats> replay_stats(std::span<const RatingEvent> events, const Scale& scale) {
    std::map<ItemId, SufficientStats> stats;
    for (const auto& e : events) {
        auto [it, inserted] = stats.try_emplace(e.item_id, SufficientStats::prior(scale));
        it->second = bandit::update_stats(it->second, e.rating, scale);
    }
    return stats;
}

class QuestionBank {
public:
    explicit QuestionBank(Scale scale, const std::string& store_path = {}) : scale_(scale) {
        scale_.validate();
        if (!store_path.empty()) {
            db_.emplace(store_path);
            init_schema();
            load();
            if (!meta_.contains("scale")) write_scale(scale_);
        }
    }

    QuestionBank(const QuestionBank&) = delete;
    QuestionBank& operator=(const QuestionBank&) = delete;

    Scale scale() const {
        std::shared_lock lock(mutex_);
        return scale_;
    }

    // Scale bounds may only change while no rating has been recorded.
    void set_scale(Scale scale) {
        scale.validate();
        std::unique_lock lock(mutex_);
        if (scale == scale_) return;
        if (!events_.empty()) throw InvalidTransitionError("scale bounds are frozen once ratings exist");
        if (db_) {
            sqlite::Transaction tx(*db_);
            for (const auto& item : items_) {
                if (item.stats.n == 0) write_stats(item.id, SufficientStats::prior(scale));
            }
            write_scale(scale);
            tx.commit();
        }
        scale_ = scale;
        for (auto& item : items_) {
            if (item.stats.n == 0) item.stats = SufficientStats::prior(scale_);
        }
    }

    std::int64_t sequence() const {
        std::shared_lock lock(mutex_);
        return sequence_;
    }

    ItemId add_item(NewItem item) {
        if (item.text.empty()) throw ValidationError("item text must not be empty");
        if (item.source == Source::seed && item.submitter) {
            throw ValidationError("seed items carry no submitter");
        }
        std::unique_lock lock(mutex_);
        return add_item_locked(std::move(item));
    }

    // Inserts one active seed item per text, embedding each with `embed`.
    // Seeds must number at least k_dynamic and be verbatim distinct.
    std::vector<ItemId> seed(const std::vector<std::string>& texts, std::size_t k_dynamic,
                             const std::function<filter::Embedding(const std::string&)>& embed) {
        if (texts.size() < k_dynamic) {
            throw SeedCountError("the number of seed items must be equal to or greater than the number of "
                                 "dynamic items: got " + std::to_string(texts.size()) + ", need at least " +
                                 std::to_string(k_dynamic));
        }
        std::unordered_set<std::string> distinct;
        for (const auto& t : texts) {
            if (t.empty()) throw ValidationError("seed text must not be empty");
            if (!distinct.insert(t).second) throw DuplicateSeedError("duplicate seed text: '" + t + "'");
        }
        std::vector<filter::Embedding> embeddings;
        embeddings.reserve(texts.size());
        for (const auto& t : texts) embeddings.push_back(embed(t));

        std::unique_lock lock(mutex_);
        std::optional<sqlite::Transaction> tx;
        if (db_) tx.emplace(*db_);
        const auto saved_sequence = sequence_;
        const auto saved_next_id = next_item_id_;
        const auto saved_count = items_.size();
        std::vector<ItemId> ids;
        try {
            for (std::size_t i = 0; i < texts.size(); ++i) {
                ids.push_back(add_item_locked(
                    {texts[i], Source::seed, std::nullopt, Status::active, std::move(embeddings[i]), {}}, false));
            }
            if (tx) tx->commit();
        } catch (...) {
            for (std::size_t i = saved_count; i < items_.size(); ++i) {
                index_.erase(items_[i].id);
                by_id_.erase(items_[i].id);
            }
            items_.resize(saved_count);
            sequence_ = saved_sequence;
            next_item_id_ = saved_next_id;
            throw;
        }
        return ids;
    }

    SufficientStats record_rating(RatingEvent event) {
        std::vector<RatingEvent> batch{std::move(event)};
        return record_ratings(batch).front();
    }

    // Validates every event first, then appends all of them atomically.
    // When `completes` names a respondent, their served record is marked
    // updated in the same transaction; a second completion is rejected.
    std::vector<SufficientStats> record_ratings(std::vector<RatingEvent> events,
                                                const std::optional<std::string>& completes = std::nullopt) {
        std::unique_lock lock(mutex_);
        ServedRecord* served = nullptr;
        if (completes) {
            auto it = served_.find(*completes);
            if (it == served_.end()) throw NotFoundError("no served record for respondent '" + *completes + "'");
            if (it->second.updated) {
                throw InvalidTransitionError("respondent '" + *completes + "' has already been updated");
            }
            served = &it->second;
        }

        std::unordered_map<ItemId, SufficientStats> staged;
        const auto now = now_millis();
        for (auto& e : events) {
            validate_event(e);
            auto pos = by_id_.find(e.item_id);
            auto& stats = staged.try_emplace(e.item_id, items_[pos->second].stats).first->second;
            stats = bandit::update_stats(stats, e.rating, scale_);
            if (e.timestamp_ms == 0) e.timestamp_ms = now;
        }

        if (db_) {
            sqlite::Transaction tx(*db_);
            std::int64_t next_id = static_cast<std::int64_t>(events_.size()) + 1;
            for (const auto& e : events) write_event(e, next_id++);
            for (const auto& [id, stats] : staged) write_stats(id, stats);
            if (served) write_served(*served, true);
            tx.commit();
        }

        std::vector<SufficientStats> out;
        out.reserve(events.size());
        for (auto& e : events) {
            e.event_id = static_cast<std::int64_t>(events_.size()) + 1;
            auto& item = items_[by_id_.at(e.item_id)];
            item.stats = bandit::update_stats(item.stats, e.rating, scale_);
            out.push_back(item.stats);
            events_.push_back(std::move(e));
        }
        if (served) served->updated = true;
        ++sequence_;
        return out;
    }

    Snapshot snapshot_active() const {
        std::shared_lock lock(mutex_);
        Snapshot snap;
        snap.sequence = sequence_;
        for (const auto& item : items_) {
            if (item.status == Status::active) snap.items.push_back({item.id, item.text, item.stats});
        }
        return snap;
    }

    Status moderate(ItemId id, ModerationDecision decision, const std::string& reason = {}) {
        std::unique_lock lock(mutex_);
        auto pos = by_id_.find(id);
        if (pos == by_id_.end()) throw NotFoundError("unknown item " + to_string(id));
        auto& item = items_[pos->second];
        if (item.status != Status::pending) {
            throw InvalidTransitionError("item " + csas::to_string(id) + " is " + bank::to_string(item.status) +
                                         ", only pending items can be moderated");
        }
        const Status next = decision == ModerationDecision::approve ? Status::active : Status::rejected_moderation;
        if (db_) {
            sqlite::Transaction tx(*db_);
            auto stmt = db_->prepare("UPDATE items SET status = ?1, reason = ?2 WHERE item_id = ?3");
            stmt.bind(1, to_string(next)).bind(2, reason).bind(3, id.value).run();
            tx.commit();
        }
        item.status = next;
        item.reason = reason;
        if (next != Status::active) index_.erase(id);
        ++sequence_;
        return next;
    }

    std::optional<QuestionItem> item(ItemId id) const {
        std::shared_lock lock(mutex_);
        auto pos = by_id_.find(id);
        if (pos == by_id_.end()) return std::nullopt;
        return items_[pos->second];
    }

    std::vector<QuestionItem> items() const {
        std::shared_lock lock(mutex_);
        return items_;
    }

    std::vector<QuestionItem> pending() const {
        std::shared_lock lock(mutex_);
        std::vector<QuestionItem> out;
        for (const auto& item : items_) {
            if (item.status == Status::pending) out.push_back(item);
        }
        return out;
    }

    std::vector<RatingEvent> events() const {
        std::shared_lock lock(mutex_);
        return events_;
    }

    std::size_t event_count() const {
        std::shared_lock lock(mutex_);
        return events_.size();
    }

    std::size_t item_count() const {
        std::shared_lock lock(mutex_);
        return items_.size();
    }

    // Nearest active or pending items to `query`.
    std::vector<filter::Neighbor> nearest(std::span<const double> query,
                                          std::size_t count = filter::kDefaultNeighborCount) const {
        std::shared_lock lock(mutex_);
        return filter::nearest_neighbors(index_, query, count);
    }

    filter::RedundancyResult check_redundancy(std::span<const double> candidate, double threshold,
                                              std::size_t count = filter::kDefaultNeighborCount) const {
        std::shared_lock lock(mutex_);
        return filter::redundancy_check(index_, candidate, threshold, count);
    }

    // -- respondent protocol records --------------------------------------

    std::optional<ServedRecord> served(const std::string& respondent) const {
        std::shared_lock lock(mutex_);
        auto it = served_.find(respondent);
        if (it == served_.end()) return std::nullopt;
        return it->second;
    }

    bool any_served() const {
        std::shared_lock lock(mutex_);
        return !served_.empty();
    }

    // Stores the record unless one exists; returns whichever is stored.
    ServedRecord record_served(ServedRecord record) {
        std::unique_lock lock(mutex_);
        if (auto it = served_.find(record.respondent_id); it != served_.end()) return it->second;
        record.updated = false;
        if (db_) {
            sqlite::Transaction tx(*db_);
            write_served(record, false);
            tx.commit();
        }
        return served_.emplace(record.respondent_id, record).first->second;
    }

    std::optional<SubmissionRecord> submission(const std::string& respondent) const {
        std::shared_lock lock(mutex_);
        auto it = submissions_.find(respondent);
        if (it == submissions_.end()) return std::nullopt;
        return it->second;
    }

    // Stores the record unless one exists; returns whichever is stored.
    SubmissionRecord record_submission(SubmissionRecord record) {
        std::unique_lock lock(mutex_);
        if (auto it = submissions_.find(record.respondent_id); it != submissions_.end()) return it->second;
        if (db_) {
            sqlite::Transaction tx(*db_);
            auto stmt = db_->prepare(
                "INSERT INTO submissions (respondent_id, idem_key, self_item, outcome) VALUES (?1, ?2, ?3, ?4)");
            stmt.bind(1, record.respondent_id).bind(2, record.idempotency_key);
            stmt.bind(3, record.self_item ? std::optional<std::string>(std::to_string(record.self_item->value))
                                          : std::nullopt);
            stmt.bind(4, record.outcome.dump()).run();
            tx.commit();
        }
        return submissions_.emplace(record.respondent_id, record).first->second;
    }

    // Item plus submission record in one write: the item becomes visible to
    // other writers only together with the record that owns it.
    std::pair<ItemId, SubmissionRecord> add_submitted_item(NewItem item, SubmissionRecord record,
                                                           bool self_item_is_new) {
        std::unique_lock lock(mutex_);
        if (auto it = submissions_.find(record.respondent_id); it != submissions_.end()) {
            return {it->second.self_item.value_or(ItemId{}), it->second};
        }
        std::optional<sqlite::Transaction> tx;
        if (db_) tx.emplace(*db_);
        const ItemId id = add_item_locked(std::move(item), false);
        if (self_item_is_new) record.self_item = id;
        try {
            if (db_) {
                auto stmt = db_->prepare(
                    "INSERT INTO submissions (respondent_id, idem_key, self_item, outcome) VALUES (?1, ?2, ?3, ?4)");
                stmt.bind(1, record.respondent_id).bind(2, record.idempotency_key);
                stmt.bind(3, record.self_item ? std::optional<std::string>(std::to_string(record.self_item->value))
                                              : std::nullopt);
                stmt.bind(4, record.outcome.dump()).run();
                tx->commit();
            }
        } catch (...) {
            index_.erase(id);
            by_id_.erase(id);
            items_.pop_back();
            --sequence_;
            --next_item_id_;
            throw;
        }
        return {id, submissions_.emplace(record.respondent_id, record).first->second};
    }

    // -- key/value metadata (configuration) -------------------------------

    std::optional<std::string> get_meta(const std::string& key) const {
        std::shared_lock lock(mutex_);
        auto it = meta_.find(key);
        if (it == meta_.end()) return std::nullopt;
        return it->second;
    }

    void put_meta(const std::string& key, const std::string& value) {
        std::unique_lock lock(mutex_);
        if (db_) {
            sqlite::Transaction tx(*db_);
            auto stmt = db_->prepare("INSERT OR REPLACE INTO config (key, value) VALUES (?1, ?2)");
            stmt.bind(1, key).bind(2, value).run();
            tx.commit();
        }
        meta_[key] = value;
    }

    // -- exports ------------------------------------------------------------

    void export_events_csv(std::ostream& os) const {
        std::shared_lock lock(mutex_);
        csv::write_row(os, {"event_id", "respondent_id", "item_id", "rating", "selection_prob", "self_submitted",
                            "tags", "timestamp"});
        for (const auto& e : events_) {
            csv::write_row(os, {std::to_string(e.event_id), e.respondent_id, csas::to_string(e.item_id),
                                csv::format_double(e.rating), csv::format_double(e.selection_prob),
                                e.self_submitted ? "true" : "false", nlohmann::json(e.subgroup_tags).dump(),
                                iso8601(e.timestamp_ms)});
        }
    }

    void export_items_csv(std::ostream& os) const {
        std::shared_lock lock(mutex_);
        csv::write_row(os, {"item_id", "text", "source", "status", "n", "mean", "created_seq", "submitter",
                            "reason"});
        for (const auto& item : items_) {
            csv::write_row(os, {csas::to_string(item.id), item.text, to_string(item.source),
                                to_string(item.status), std::to_string(item.stats.n),
                                csv::format_double(item.stats.mean), std::to_string(item.created_seq),
                                item.submitter.value_or(""), item.reason});
        }
    }

private:
    void validate_event(const RatingEvent& e) const {
        if (e.respondent_id.empty()) throw ValidationError("respondent id must not be empty");
        auto pos = by_id_.find(e.item_id);
        if (pos == by_id_.end()) throw NotFoundError("unknown item " + csas::to_string(e.item_id));
        const auto& item = items_[pos->second];
        const bool rateable = item.status == Status::active || (item.status == Status::pending && e.self_submitted);
        if (!rateable) {
            throw ValidationError("item " + csas::to_string(e.item_id) + " is " + to_string(item.status) +
                                  " and cannot be rated");
        }
        if (!std::isfinite(e.rating) || !scale_.contains(e.rating)) {
            throw ValidationError("rating " + csv::format_double(e.rating) + " outside scale [" +
                                  csv::format_double(scale_.min) + ", " + csv::format_double(scale_.max) + "]");
        }
        if (!(e.selection_prob > 0.0) || e.selection_prob > 1.0) {
            throw ValidationError("selection probability must lie in (0, 1]");
        }
        if (e.self_submitted && e.selection_prob != 1.0) {
            throw ValidationError("self-submitted ratings carry selection probability 1");
        }
    }

    ItemId add_item_locked(NewItem item, bool own_transaction = true) {
        const ItemId id{next_item_id_};
        QuestionItem stored{id,
                            std::move(item.text),
                            item.source,
                            item.status,
                            SufficientStats::prior(scale_),
                            std::move(item.embedding),
                            sequence_ + 1,
                            std::move(item.submitter),
                            std::move(item.reason)};
        if (db_) {
            std::optional<sqlite::Transaction> tx;
            if (own_transaction) tx.emplace(*db_);
            write_item(stored);
            if (tx) tx->commit();
        }
        if (stored.embedding && !is_rejected(stored.status)) index_.insert(id, stored.created_seq, *stored.embedding);
        by_id_[id] = items_.size();
        items_.push_back(std::move(stored));
        ++next_item_id_;
        ++sequence_;
        return id;
    }

    void init_schema() {
        db_->exec("PRAGMA journal_mode=WAL");
        db_->exec("PRAGMA synchronous=FULL");
        db_->exec(
            "CREATE TABLE IF NOT EXISTS config (key TEXT PRIMARY KEY, value TEXT NOT NULL);"
            "CREATE TABLE IF NOT EXISTS items ("
            "  item_id INTEGER PRIMARY KEY, text TEXT NOT NULL, source TEXT NOT NULL, status TEXT NOT NULL,"
            "  n INTEGER NOT NULL, mean REAL NOT NULL, embedding BLOB, created_seq INTEGER NOT NULL UNIQUE,"
            "  submitter TEXT, reason TEXT NOT NULL DEFAULT '');"
            "CREATE TABLE IF NOT EXISTS events ("
            "  event_id INTEGER PRIMARY KEY, respondent_id TEXT NOT NULL, item_id INTEGER NOT NULL,"
            "  rating REAL NOT NULL, selection_prob REAL NOT NULL, self_submitted INTEGER NOT NULL,"
            "  tags TEXT NOT NULL, timestamp_ms INTEGER NOT NULL);"
            "CREATE TABLE IF NOT EXISTS served ("
            "  respondent_id TEXT PRIMARY KEY, served_seq INTEGER NOT NULL, assignments TEXT NOT NULL,"
            "  updated INTEGER NOT NULL);"
            "CREATE TABLE IF NOT EXISTS submissions ("
            "  respondent_id TEXT PRIMARY KEY, idem_key TEXT NOT NULL, self_item TEXT, outcome TEXT NOT NULL);");
    }

    void load() {
        {
            auto stmt = db_->prepare("SELECT key, value FROM config");
            while (stmt.step()) meta_[stmt.text(0)] = stmt.text(1);
        }
        {
            auto stmt = db_->prepare(
                "SELECT item_id, text, source, status, n, mean, embedding, created_seq, submitter, reason "
                "FROM items ORDER BY created_seq");
            while (stmt.step()) {
                QuestionItem item;
                item.id = ItemId{stmt.int64(0)};
                item.text = stmt.text(1);
                item.source = parse_source(stmt.text(2));
                item.status = parse_status(stmt.text(3));
                item.stats = {stmt.int64(4), stmt.real(5)};
                if (!stmt.is_null(6)) item.embedding = stmt.doubles(6);
                item.created_seq = stmt.int64(7);
                item.submitter = stmt.optional_text(8);
                item.reason = stmt.text(9);
                if (item.embedding && !is_rejected(item.status)) {
                    index_.insert(item.id, item.created_seq, *item.embedding);
                }
                next_item_id_ = std::max(next_item_id_, item.id.value + 1);
                sequence_ = std::max(sequence_, item.created_seq);
                by_id_[item.id] = items_.size();
                items_.push_back(std::move(item));
            }
        }
        {
            auto stmt = db_->prepare(
                "SELECT event_id, respondent_id, item_id, rating, selection_prob, self_submitted, tags, "
                "timestamp_ms FROM events ORDER BY event_id");
            while (stmt.step()) {
                RatingEvent e;
                e.event_id = stmt.int64(0);
                e.respondent_id = stmt.text(1);
                e.item_id = ItemId{stmt.int64(2)};
                e.rating = stmt.real(3);
                e.selection_prob = stmt.real(4);
                e.self_submitted = stmt.int64(5) != 0;
                e.subgroup_tags = nlohmann::json::parse(stmt.text(6)).get<Tags>();
                e.timestamp_ms = stmt.int64(7);
                events_.push_back(std::move(e));
            }
        }
        {
            auto stmt = db_->prepare("SELECT respondent_id, served_seq, assignments, updated FROM served");
            while (stmt.step()) {
                ServedRecord r;
                r.respondent_id = stmt.text(0);
                r.served_seq = stmt.int64(1);
                for (const auto& a : nlohmann::json::parse(stmt.text(2))) {
                    r.items.push_back({ItemId{a.at("id").get<std::int64_t>()}, a.at("p").get<double>()});
                }
                r.updated = stmt.int64(3) != 0;
                served_.emplace(r.respondent_id, std::move(r));
            }
        }
        {
            auto stmt = db_->prepare("SELECT respondent_id, idem_key, self_item, outcome FROM submissions");
            while (stmt.step()) {
                SubmissionRecord r;
                r.respondent_id = stmt.text(0);
                r.idempotency_key = stmt.text(1);
                if (auto s = stmt.optional_text(2)) r.self_item = ItemId{std::stoll(*s)};
                r.outcome = nlohmann::json::parse(stmt.text(3));
                submissions_.emplace(r.respondent_id, std::move(r));
            }
        }
        sequence_ += static_cast<std::int64_t>(events_.size());
        if (auto s = meta_.find("scale"); s != meta_.end()) {
            auto j = nlohmann::json::parse(s->second);
            scale_ = Scale{j.at("min").get<double>(), j.at("max").get<double>()};
        }
    }

    void write_item(const QuestionItem& item) {
        auto stmt = db_->prepare(
            "INSERT INTO items (item_id, text, source, status, n, mean, embedding, created_seq, submitter, reason) "
            "VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7, ?8, ?9, ?10)");
        stmt.bind(1, item.id.value).bind(2, item.text).bind(3, to_string(item.source)).bind(4, to_string(item.status));
        stmt.bind(5, item.stats.n).bind(6, item.stats.mean);
        if (item.embedding) {
            stmt.bind_blob(7, item.embedding->data(), item.embedding->size() * sizeof(double));
        } else {
            stmt.bind_blob(7, nullptr, 0);
        }
        stmt.bind(8, item.created_seq).bind(9, item.submitter).bind(10, item.reason).run();
    }

    void write_scale(const Scale& scale) {
        const std::string value = nlohmann::json{{"min", scale.min}, {"max", scale.max}}.dump();
        auto stmt = db_->prepare("INSERT OR REPLACE INTO config (key, value) VALUES ('scale', ?1)");
        stmt.bind(1, value).run();
        meta_["scale"] = value;
    }

    void write_stats(ItemId id, const SufficientStats& stats) {
        auto stmt = db_->prepare("UPDATE items SET n = ?1, mean = ?2 WHERE item_id = ?3");
        stmt.bind(1, stats.n).bind(2, stats.mean).bind(3, id.value).run();
    }

    void write_event(const RatingEvent& e, std::int64_t event_id) {
        auto stmt = db_->prepare(
            "INSERT INTO events (event_id, respondent_id, item_id, rating, selection_prob, self_submitted, tags, "
            "timestamp_ms) VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7, ?8)");
        stmt.bind(1, event_id).bind(2, e.respondent_id).bind(3, e.item_id.value).bind(4, e.rating);
        stmt.bind(5, e.selection_prob).bind(6, std::int64_t{e.self_submitted ? 1 : 0});
        stmt.bind(7, nlohmann::json(e.subgroup_tags).dump()).bind(8, e.timestamp_ms).run();
    }

    void write_served(const ServedRecord& r, bool updated) {
        nlohmann::json assignments = nlohmann::json::array();
        for (const auto& a : r.items) assignments.push_back({{"id", a.item_id.value}, {"p", a.probability}});
        auto stmt = db_->prepare(
            "INSERT OR REPLACE INTO served (respondent_id, served_seq, assignments, updated) VALUES (?1, ?2, ?3, ?4)");
        stmt.bind(1, r.respondent_id).bind(2, r.served_seq).bind(3, assignments.dump());
        stmt.bind(4, std::int64_t{updated ? 1 : 0}).run();
    }

    mutable std::shared_mutex mutex_;
    Scale scale_;
    std::optional<sqlite::Database> db_;
    std::vector<QuestionItem> items_;
    std::unordered_map<ItemId, std::size_t> by_id_;
    std::vector<RatingEvent> events_;
    filter::EmbeddingIndex index_;
    std::unordered_map<std::string, ServedRecord> served_;
    std::unordered_map<std::string, SubmissionRecord> submissions_;
    std::map<std::string, std::string> meta_;
    std::int64_t next_item_id_ = 1;
    std::int64_t sequence_ = 0;
};

}  // namespace csas::bank
