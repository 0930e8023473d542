#pragma once

// Inverse-probability-weighted (self-normalized) prevalence estimates, per
// item and per subgroup, two-group z tests, and CSV / NDJSON export.

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <boost/math/distributions/normal.hpp>
#include <nlohmann/json.hpp>

#include "csas/bank/question_bank.hpp"
#include "csas/csv.hpp"
#include "csas/error.hpp"
#include "csas/types.hpp"

namespace csas::estimate {

using bank::RatingEvent;

// Which ratings enter an estimate. Self-ratings are served with probability
// one to their author, a different design stratum from bandit draws.
enum class WeightMode { exclude_self, include_self, self_only };

inline std::string to_string(WeightMode m) {
    switch (m) {
        case WeightMode::exclude_self: return "exclude_self";
        case WeightMode::include_self: return "include_self";
        case WeightMode::self_only: return "self_only";
    }
    return "unknown";
}

inline WeightMode parse_weight_mode(const std::string& s) {
    for (auto m : {WeightMode::exclude_self, WeightMode::include_self, WeightMode::self_only}) {
        if (to_string(m) == s) return m;
    }
    throw ConfigError("unknown weight mode '" + s + "'");
}

inline bool admits(WeightMode mode, const RatingEvent& e) {
    switch (mode) {
        case WeightMode::exclude_self: return !e.self_submitted;
        case WeightMode::include_self: return true;
        case WeightMode::self_only: return e.self_submitted;
    }
    return false;
}

struct PrevalenceEstimate {
    ItemId item_id;
    std::optional<std::string> subgroup;
    double ipw_mean = 0.0;
    double std_error = 0.0;
    std::size_t n_ratings = 0;
    std::size_t min_rating_filter = 1;

    bool operator==(const PrevalenceEstimate&) const = default;
};

inline constexpr std::size_t kClaimMinRatings = 10;
inline constexpr std::size_t kIssueMinRatings = 50;

// Hajek mean sum(w y)/sum(w), w = 1/p, with SE sqrt(sum w^2 (y - mean)^2)/sum(w).
// All events are assumed to belong to one item; filtering is the caller's.
inline PrevalenceEstimate ipw_mean(std::span<const RatingEvent> events) {
    if (events.empty()) throw ValidationError("an estimate needs at least one rating");
    double sw = 0.0, swy = 0.0;
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& e : events) {
        if (!(e.selection_prob > 0.0) || e.selection_prob > 1.0) {
            throw DataIntegrityError("event " + std::to_string(e.event_id) + " has selection probability " +
                                     csv::format_double(e.selection_prob));
        }
        const double w = 1.0 / e.selection_prob;
        sw += w;
        swy += w * e.rating;
        lo = std::min(lo, e.rating);
        hi = std::max(hi, e.rating);
    }
    // rounding can push a convex combination a hair outside its range
    const double mean = std::clamp(swy / sw, lo, hi);
    double ss = 0.0;
    for (const auto& e : events) {
        const double w = 1.0 / e.selection_prob;
        const double r = e.rating - mean;
        ss += w * w * r * r;
    }
    PrevalenceEstimate est;
    est.item_id = events.front().item_id;
    est.ipw_mean = mean;
    est.std_error = std::sqrt(ss) / sw;
    est.n_ratings = events.size();
    return est;
}

// One estimate per item with at least `min_ratings` admitted ratings, by item id.
inline std::vector<PrevalenceEstimate> item_estimates(std::span<const RatingEvent> events,
                                                      WeightMode mode = WeightMode::exclude_self,
                                                      std::size_t min_ratings = 1) {
    std::map<ItemId, std::vector<RatingEvent>> by_item;
    for (const auto& e : events) {
        if (admits(mode, e)) by_item[e.item_id].push_back(e);
    }
    std::vector<PrevalenceEstimate> out;
    for (const auto& [id, evs] : by_item) {
        if (evs.size() < std::max<std::size_t>(min_ratings, 1)) continue;
        auto est = ipw_mean(evs);
        est.min_rating_filter = min_ratings;
        out.push_back(est);
    }
    return out;
}

// -- subgroups ------------------------------------------------------------

// Each distinct tag value is its own bucket.
struct Categorical {};

// Numeric tag; respondents at or below the median of respondent values form
// the "low" bucket, the rest "high".
struct MedianSplit {};

using Bucketing = std::variant<Categorical, MedianSplit>;

struct SubgroupResult {
    std::vector<PrevalenceEstimate> estimates;  // ordered by item id, then subgroup label
    std::size_t dropped = 0;                    // admitted events lacking a usable tag
    std::optional<double> median;               // set for MedianSplit
};

inline SubgroupResult subgroup_estimates(std::span<const RatingEvent> events, const std::string& tag_key,
                                         const Bucketing& rule, const std::set<std::string>& known_tags,
                                         WeightMode mode = WeightMode::exclude_self, std::size_t min_ratings = 1) {
    if (!known_tags.contains(tag_key)) throw ConfigError("unknown subgroup tag '" + tag_key + "'");
    SubgroupResult result;
    std::vector<std::pair<const RatingEvent*, std::string>> tagged;
    for (const auto& e : events) {
        if (!admits(mode, e)) continue;
        auto it = e.subgroup_tags.find(tag_key);
        if (it == e.subgroup_tags.end() || it->second.empty()) {
            ++result.dropped;
            continue;
        }
        tagged.emplace_back(&e, it->second);
    }

    std::map<std::pair<ItemId, std::string>, std::vector<RatingEvent>> buckets;
    if (std::holds_alternative<Categorical>(rule)) {
        for (const auto& [e, value] : tagged) buckets[{e->item_id, value}].push_back(*e);
    } else {
        std::map<std::string, double> by_respondent;
        std::vector<std::pair<const RatingEvent*, double>> numeric;
        for (const auto& [e, value] : tagged) {
            double v = 0.0;
            try {
                v = csv::parse_double(value);
            } catch (const ValidationError&) {
                ++result.dropped;
                continue;
            }
            by_respondent.emplace(e->respondent_id, v);
            numeric.emplace_back(e, v);
        }
        if (!by_respondent.empty()) {
            std::vector<double> values;
            for (const auto& [r, v] : by_respondent) values.push_back(v);
            std::sort(values.begin(), values.end());
            const auto m = values.size();
            const double median = m % 2 ? values[m / 2] : 0.5 * (values[m / 2 - 1] + values[m / 2]);
            result.median = median;
            for (const auto& [e, v] : numeric) {
                buckets[{e->item_id, v <= median ? "low" : "high"}].push_back(*e);
            }
        }
    }

    for (const auto& [key, evs] : buckets) {
        if (evs.size() < std::max<std::size_t>(min_ratings, 1)) continue;
        auto est = ipw_mean(evs);
        est.subgroup = key.second;
        est.min_rating_filter = min_ratings;
        result.estimates.push_back(est);
    }
    return result;
}

// -- difference tests -------------------------------------------------------

struct DifferenceTest {
    double delta = 0.0;
    double z = 0.0;
    bool significant = false;
    bool degenerate = false;  // zero combined SE with nonzero delta
};

inline double critical_value(double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
    return boost::math::quantile(boost::math::normal(), 1.0 - alpha / 2.0);
}

inline DifferenceTest difference_test(const PrevalenceEstimate& a, const PrevalenceEstimate& b, double alpha = 0.05) {
    DifferenceTest t;
    t.delta = a.ipw_mean - b.ipw_mean;
    const double se = std::sqrt(a.std_error * a.std_error + b.std_error * b.std_error);
    if (se == 0.0) {
        if (t.delta != 0.0) {
            t.degenerate = true;
            t.significant = true;
            t.z = std::copysign(std::numeric_limits<double>::infinity(), t.delta);
        }
        return t;
    }
    t.z = t.delta / se;
    t.significant = std::abs(t.z) > critical_value(alpha);
    return t;
}

// Per-item contrast between two subgroups (e.g. the partisan gap).
struct Contrast {
    PrevalenceEstimate a;
    PrevalenceEstimate b;
    DifferenceTest test;
};

// Items reportable in both groups, by item id.
inline std::vector<Contrast> contrasts(std::span<const PrevalenceEstimate> estimates, const std::string& group_a,
                                       const std::string& group_b, double alpha = 0.05) {
    std::map<ItemId, const PrevalenceEstimate*> in_a, in_b;
    for (const auto& e : estimates) {
        if (e.subgroup == group_a) in_a[e.item_id] = &e;
        if (e.subgroup == group_b) in_b[e.item_id] = &e;
    }
    std::vector<Contrast> out;
    for (const auto& [id, ea] : in_a) {
        auto it = in_b.find(id);
        if (it == in_b.end()) continue;
        out.push_back({*ea, *it->second, difference_test(*ea, *it->second, alpha)});
    }
    return out;
}

// -- export -------------------------------------------------------------------

enum class Ordering { by_mean, by_abs_delta };

inline Ordering parse_ordering(const std::string& s) {
    if (s == "mean") return Ordering::by_mean;
    if (s == "delta") return Ordering::by_abs_delta;
    throw ConfigError("unknown ordering '" + s + "' (expected mean or delta)");
}

struct ExportRow {
    PrevalenceEstimate estimate;
    std::string item_text;
    std::optional<bool> significant;  // of the contrast this row belongs to
    std::optional<double> delta;

    double ci_low(double z = 1.959963984540054) const { return estimate.ipw_mean - z * estimate.std_error; }
    double ci_high(double z = 1.959963984540054) const { return estimate.ipw_mean + z * estimate.std_error; }

    bool operator==(const ExportRow&) const = default;
};

using ItemTexts = std::map<ItemId, std::string>;

inline std::vector<ExportRow> rows_from(std::span<const PrevalenceEstimate> estimates, const ItemTexts& texts = {}) {
    std::vector<ExportRow> rows;
    for (const auto& e : estimates) {
        auto it = texts.find(e.item_id);
        rows.push_back({e, it == texts.end() ? std::string{} : it->second, std::nullopt, std::nullopt});
    }
    return rows;
}

// Two rows per contrast, both carrying the gap and its significance.
inline std::vector<ExportRow> rows_from(std::span<const Contrast> contrasts, const ItemTexts& texts = {}) {
    std::vector<ExportRow> rows;
    for (const auto& c : contrasts) {
        auto it = texts.find(c.a.item_id);
        const std::string text = it == texts.end() ? std::string{} : it->second;
        rows.push_back({c.a, text, c.test.significant, c.test.delta});
        rows.push_back({c.b, text, c.test.significant, c.test.delta});
    }
    return rows;
}

inline void order_rows(std::vector<ExportRow>& rows, Ordering ordering) {
    if (ordering == Ordering::by_abs_delta) {
        for (const auto& r : rows) {
            if (!r.delta) throw ConfigError("ordering by gap needs contrast rows");
        }
    }
    std::stable_sort(rows.begin(), rows.end(), [ordering](const ExportRow& x, const ExportRow& y) {
        if (ordering == Ordering::by_abs_delta) {
            const double dx = std::abs(*x.delta), dy = std::abs(*y.delta);
            if (dx != dy) return dx > dy;
        } else if (x.estimate.ipw_mean != y.estimate.ipw_mean) {
            return x.estimate.ipw_mean > y.estimate.ipw_mean;
        }
        if (x.estimate.item_id != y.estimate.item_id) return x.estimate.item_id < y.estimate.item_id;
        return x.estimate.subgroup.value_or("") < y.estimate.subgroup.value_or("");
    });
}

inline const std::vector<std::string>& csv_header() {
    static const std::vector<std::string> h{"item_id", "item_text", "subgroup", "ipw_mean", "std_error",
                                            "n",       "ci_low",    "ci_high",  "significant"};
    return h;
}

inline void export_csv(std::ostream& os, std::vector<ExportRow> rows, Ordering ordering = Ordering::by_mean) {
    if (rows.empty()) throw EmptyExportError("nothing to export");
    order_rows(rows, ordering);
    csv::write_row(os, csv_header());
    for (const auto& r : rows) {
        const auto& e = r.estimate;
        csv::write_row(os, {std::to_string(e.item_id.value), r.item_text, e.subgroup.value_or(""),
                            csv::format_double(e.ipw_mean), csv::format_double(e.std_error),
                            std::to_string(e.n_ratings), csv::format_double(r.ci_low()),
                            csv::format_double(r.ci_high()),
                            r.significant ? (*r.significant ? "true" : "false") : ""});
    }
}

// Reads what export_csv wrote. Gap values are not part of the schema, so
// re-imported rows carry no delta.
inline std::vector<ExportRow> import_csv(std::istream& is) {
    std::vector<std::string> fields;
    if (!csv::read_row(is, fields) || fields != csv_header()) {
        throw ValidationError("not an estimates CSV: header mismatch");
    }
    std::vector<ExportRow> rows;
    while (csv::read_row(is, fields)) {
        if (fields.size() == 1 && fields[0].empty()) continue;
        if (fields.size() != csv_header().size()) throw ValidationError("estimates CSV row has wrong field count");
        ExportRow r;
        r.estimate.item_id = ItemId{csv::parse_int(fields[0])};
        r.item_text = fields[1];
        if (!fields[2].empty()) r.estimate.subgroup = fields[2];
        r.estimate.ipw_mean = csv::parse_double(fields[3]);
        r.estimate.std_error = csv::parse_double(fields[4]);
        r.estimate.n_ratings = static_cast<std::size_t>(csv::parse_int(fields[5]));
        if (fields[8] == "true") r.significant = true;
        if (fields[8] == "false") r.significant = false;
        rows.push_back(std::move(r));
    }
    return rows;
}

// Newline-delimited JSON, one record per row.
inline void export_plotdata(std::ostream& os, std::vector<ExportRow> rows, Ordering ordering = Ordering::by_mean,
                            WeightMode mode = WeightMode::exclude_self) {
    if (rows.empty()) throw EmptyExportError("nothing to export");
    order_rows(rows, ordering);
    for (const auto& r : rows) {
        const auto& e = r.estimate;
        nlohmann::json j{{"item_id", e.item_id.value},
                         {"item_text", r.item_text},
                         {"subgroup", e.subgroup ? nlohmann::json(*e.subgroup) : nlohmann::json(nullptr)},
                         {"mean", e.ipw_mean},
                         {"std_error", e.std_error},
                         {"n", e.n_ratings},
                         {"ci_low", r.ci_low()},
                         {"ci_high", r.ci_high()},
                         {"significant", r.significant ? nlohmann::json(*r.significant) : nlohmann::json(nullptr)},
                         {"delta", r.delta ? nlohmann::json(*r.delta) : nlohmann::json(nullptr)},
                         {"weight_mode", to_string(mode)}};
        os << j.dump() << '\n';
    }
}

inline nlohmann::json to_json(const PrevalenceEstimate& e) {
    return {{"item_id", e.item_id.value},
            {"subgroup", e.subgroup ? nlohmann::json(*e.subgroup) : nlohmann::json(nullptr)},
            {"ipw_mean", e.ipw_mean},
            {"std_error", e.std_error},
            {"n_ratings", e.n_ratings},
            {"min_rating_filter", e.min_rating_filter}};
}

}  // namespace csas::estimate
