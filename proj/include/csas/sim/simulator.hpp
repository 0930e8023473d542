#pragma once

// Synthetic field periods driven through the production bank and bandit code.
//
// Each replication fields n_respondents one after another. Respondent i:
//   1. submits the arm scheduled to arrive at i, if any (added as active);
//   2. is served k items drawn from the current selection distribution,
//      never their own item (the distribution is recomputed every
//      batch_size respondents);
//   3. rates each served item clamp(round(N(latent, noise_sd))), plus their
//      own item at probability 1, all in one atomic update.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "csas/bandit.hpp"
#include "csas/bank/question_bank.hpp"
#include "csas/csv.hpp"
#include "csas/error.hpp"
#include "csas/estimator.hpp"
#include "csas/random.hpp"
#include "csas/sim/scenario.hpp"

namespace csas::sim {

struct ReplicationReport {
    std::int64_t index = 0;
    std::uint64_t seed = 0;
    std::vector<std::int64_t> assignments;          // dynamic slots per arm
    std::vector<double> shares;                     // assignments / total slots
    std::vector<std::int64_t> ratings;              // all ratings per arm, self included
    std::vector<std::optional<double>> estimates;   // IPW mean, self-ratings excluded
    std::vector<double> min_floored_probability;    // per arm, over every recomputation (NaN if never in a pool)
    std::vector<double> cumulative_regret;          // after each respondent
    bool top_most_assigned = false;
    bool top_highest_estimate = false;
};

struct ArmReport {
    std::string label;
    double latent_mean = 0.0;
    std::int64_t arrival = 0;
    double mean_assignments = 0.0;
    double mean_share = 0.0;
    double mean_ratings = 0.0;
    std::int64_t replications_with_estimate = 0;
    std::optional<double> mean_estimate;
    std::optional<double> bias;
    std::optional<double> rmse;
    std::optional<double> empirical_se;  // SD of the estimate across replications
    bool saturated = false;              // latent mean within one noise SD of a scale bound
    std::optional<bool> calibrated;      // |bias| <= 3 empirical SE; unset when saturated or undefined
};

struct SimulationReport {
    std::vector<ArmReport> arms;
    std::vector<ReplicationReport> replications;
    std::vector<double> mean_cumulative_regret;
    double identification_rate = 0.0;  // top arm has the highest estimate
    double concentration_rate = 0.0;   // ... and the most assignments
};

struct RunOptions {
    unsigned threads = 0;  // 0: hardware concurrency
};

// One fielded replication with its bank kept for inspection.
struct Replication {
    ReplicationReport report;
    std::unique_ptr<bank::QuestionBank> bank;
    std::vector<std::optional<ItemId>> arm_items;  // unset for arms that never arrived
};

inline std::size_t top_arm(const Scenario& s) {
    std::size_t top = 0;
    for (std::size_t a = 1; a < s.arms.size(); ++a) {
        if (s.arms[a].latent_mean > s.arms[top].latent_mean) top = a;
    }
    return top;
}

inline double draw_rating(Rng& rng, double latent, double sd, const Scale& scale) {
    return std::clamp(std::round(rng.normal(latent, sd)), scale.min, scale.max);
}

inline Replication run_replication(const Scenario& s, std::int64_t index) {
    s.validate();
    Replication rep;
    auto& r = rep.report;
    r.index = index;
    r.seed = derive_seed(s.master_seed, static_cast<std::uint64_t>(index));
    rep.bank = std::make_unique<bank::QuestionBank>(s.scale);
    auto& bank = *rep.bank;

    const std::size_t arms = s.arms.size();
    rep.arm_items.assign(arms, std::nullopt);
    std::unordered_map<ItemId, std::size_t> arm_of;
    r.assignments.assign(arms, 0);
    r.ratings.assign(arms, 0);
    r.min_floored_probability.assign(arms, std::numeric_limits<double>::quiet_NaN());

    for (std::size_t a = 0; a < arms; ++a) {
        if (s.arms[a].arrival != 0) continue;
        const auto id = bank.add_item({s.arms[a].label, bank::Source::seed, std::nullopt, bank::Status::active,
                                       std::nullopt, {}});
        rep.arm_items[a] = id;
        arm_of[id] = a;
    }

    Rng ratings(derive_seed(r.seed, 1));
    const auto dist_stream = derive_seed(r.seed, 2);
    const auto assign_stream = derive_seed(r.seed, 3);

    bandit::SelectionDistribution dist;
    double regret = 0.0;
    r.cumulative_regret.reserve(static_cast<std::size_t>(s.n_respondents));
    for (std::int64_t i = 0; i < s.n_respondents; ++i) {
        const std::string respondent = "r" + std::to_string(i);
        const auto step = static_cast<std::uint64_t>(i);

        std::optional<std::size_t> own;
        if (i > 0) {
            for (std::size_t a = 0; a < arms; ++a) {
                if (s.arms[a].arrival != i) continue;
                const auto id = bank.add_item({s.arms[a].label, bank::Source::participant, respondent,
                                               bank::Status::active, std::nullopt, {}});
                rep.arm_items[a] = id;
                arm_of[id] = a;
                own = a;
            }
        }

        if (i % s.batch_size == 0) {
            const auto snap = bank.snapshot_active();
            if (snap.items.empty()) {
                throw ScenarioError("respondent " + std::to_string(i) + ": the bank has no active items");
            }
            const auto pool = snap.arms();
            dist = bandit::respondent_distribution(pool, s.monte_carlo_draws, s.floor, derive_seed(dist_stream, step));
            for (const auto& e : dist.entries) {
                auto& m = r.min_floored_probability[arm_of.at(e.item_id)];
                if (std::isnan(m) || e.floored < m) m = e.floored;
            }
        }

        std::unordered_set<ItemId> exclude;
        if (own) exclude.insert(*rep.arm_items[*own]);
        std::vector<bandit::Assignment> served;
        try {
            served = bandit::assign_items(dist, s.k, exclude, derive_seed(assign_stream, step));
        } catch (const InsufficientItemsError& e) {
            throw ScenarioError("respondent " + std::to_string(i) + ": k = " + std::to_string(s.k) +
                                " exceeds the items available to them (" + e.what() + ")");
        }
        bank.record_served({respondent, bank.sequence(), served, false});

        double best = -std::numeric_limits<double>::infinity();
        for (const auto& e : dist.entries) {
            if (!exclude.contains(e.item_id)) best = std::max(best, s.arms[arm_of.at(e.item_id)].latent_mean);
        }

        std::vector<bank::RatingEvent> events;
        events.reserve(served.size() + 1);
        for (const auto& a : served) {
            const auto arm = arm_of.at(a.item_id);
            bank::RatingEvent e;
            e.respondent_id = respondent;
            e.item_id = a.item_id;
            e.rating = draw_rating(ratings, s.arms[arm].latent_mean, s.noise_sd, s.scale);
            e.selection_prob = a.probability;
            e.timestamp_ms = i + 1;  // synthetic clock keeps banks reproducible
            events.push_back(std::move(e));
            ++r.assignments[arm];
            ++r.ratings[arm];
            regret += best - s.arms[arm].latent_mean;
        }
        if (own) {
            bank::RatingEvent e;
            e.respondent_id = respondent;
            e.item_id = *rep.arm_items[*own];
            e.rating = draw_rating(ratings, s.arms[*own].latent_mean, s.noise_sd, s.scale);
            e.selection_prob = 1.0;
            e.self_submitted = true;
            e.timestamp_ms = i + 1;
            events.push_back(std::move(e));
            ++r.ratings[*own];
        }
        bank.record_ratings(std::move(events), respondent);
        r.cumulative_regret.push_back(regret);
    }

    const double slots = static_cast<double>(s.n_respondents) * static_cast<double>(s.k);
    r.shares.resize(arms);
    for (std::size_t a = 0; a < arms; ++a) r.shares[a] = static_cast<double>(r.assignments[a]) / slots;

    r.estimates.assign(arms, std::nullopt);
    const auto events = bank.events();
    for (const auto& est : estimate::item_estimates(events)) r.estimates[arm_of.at(est.item_id)] = est.ipw_mean;

    const auto top = top_arm(s);
    r.top_most_assigned = true;
    r.top_highest_estimate = r.estimates[top].has_value();
    for (std::size_t a = 0; a < arms; ++a) {
        if (a == top) continue;
        if (r.assignments[a] >= r.assignments[top]) r.top_most_assigned = false;
        if (r.estimates[a] && r.estimates[top] && *r.estimates[a] >= *r.estimates[top]) r.top_highest_estimate = false;
    }
    return rep;
}

inline SimulationReport aggregate(const Scenario& s, std::vector<ReplicationReport> reps) {
    SimulationReport out;
    const auto n_reps = static_cast<double>(reps.size());
    for (std::size_t a = 0; a < s.arms.size(); ++a) {
        ArmReport arm;
        arm.label = s.arms[a].label;
        arm.latent_mean = s.arms[a].latent_mean;
        arm.arrival = s.arms[a].arrival;
        std::vector<double> ests;
        for (const auto& r : reps) {
            arm.mean_assignments += static_cast<double>(r.assignments[a]) / n_reps;
            arm.mean_share += r.shares[a] / n_reps;
            arm.mean_ratings += static_cast<double>(r.ratings[a]) / n_reps;
            if (r.estimates[a]) ests.push_back(*r.estimates[a]);
        }
        arm.replications_with_estimate = static_cast<std::int64_t>(ests.size());
        arm.saturated = arm.latent_mean - s.scale.min < s.noise_sd || s.scale.max - arm.latent_mean < s.noise_sd;
        if (!ests.empty()) {
            double sum = 0.0, sq = 0.0;
            for (double e : ests) {
                sum += e;
                sq += (e - arm.latent_mean) * (e - arm.latent_mean);
            }
            const double m = sum / static_cast<double>(ests.size());
            arm.mean_estimate = m;
            arm.bias = m - arm.latent_mean;
            arm.rmse = std::sqrt(sq / static_cast<double>(ests.size()));
            if (ests.size() >= 2) {
                double var = 0.0;
                for (double e : ests) var += (e - m) * (e - m);
                arm.empirical_se = std::sqrt(var / static_cast<double>(ests.size() - 1));
                if (!arm.saturated) arm.calibrated = std::abs(*arm.bias) <= 3.0 * *arm.empirical_se;
            }
        }
        out.arms.push_back(std::move(arm));
    }
    out.mean_cumulative_regret.assign(static_cast<std::size_t>(s.n_respondents), 0.0);
    double identified = 0, concentrated = 0;
    for (const auto& r : reps) {
        for (std::size_t i = 0; i < r.cumulative_regret.size(); ++i) out.mean_cumulative_regret[i] += r.cumulative_regret[i] / n_reps;
        identified += r.top_highest_estimate;
        concentrated += r.top_highest_estimate && r.top_most_assigned;
    }
    out.identification_rate = identified / n_reps;
    out.concentration_rate = concentrated / n_reps;
    out.replications = std::move(reps);
    return out;
}

// Replications run on worker threads; each is sequential and seeded from
// (master_seed, index), so the result does not depend on scheduling.
inline SimulationReport run(const Scenario& s, RunOptions options = {}) {
    s.validate();
    const auto n = static_cast<std::size_t>(s.replications);
    std::vector<ReplicationReport> reps(n);
    std::vector<std::exception_ptr> errors(n);
    unsigned threads = options.threads ? options.threads : std::max(1u, std::thread::hardware_concurrency());
    threads = static_cast<unsigned>(std::min<std::size_t>(threads, n));

    std::atomic<std::size_t> next{0};
    const auto work = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                reps[i] = run_replication(s, static_cast<std::int64_t>(i)).report;
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    if (threads <= 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (unsigned t = 0; t < threads; ++t) pool.emplace_back(work);
        for (auto& t : pool) t.join();
    }
    for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
    return aggregate(s, std::move(reps));
}

// -- paired designs -------------------------------------------------------

struct ModeComparison {
    std::int64_t batch_size = 0;
    SimulationReport respondent_level;
    SimulationReport batch;
    std::vector<double> regret_difference;  // batch minus respondent-level, per replication
    double median_regret_difference = 0.0;
    double identification_rate_difference = 0.0;  // batch minus respondent-level
};

inline double median(std::vector<double> v) {
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(v.begin(), v.end());
    const auto m = v.size();
    return m % 2 ? v[m / 2] : 0.5 * (v[m / 2 - 1] + v[m / 2]);
}

// Same scenario and seeds under respondent-level and batch updating.
inline ModeComparison compare_update_modes(Scenario s, std::int64_t batch_size, RunOptions options = {}) {
    if (batch_size < 1) throw ScenarioError("batch size must be at least 1");
    ModeComparison c;
    c.batch_size = batch_size;
    s.batch_size = 1;
    c.respondent_level = run(s, options);
    s.batch_size = batch_size;
    c.batch = run(s, options);
    for (std::size_t i = 0; i < c.batch.replications.size(); ++i) {
        c.regret_difference.push_back(c.batch.replications[i].cumulative_regret.back() -
                                      c.respondent_level.replications[i].cumulative_regret.back());
    }
    c.median_regret_difference = median(c.regret_difference);
    c.identification_rate_difference = c.batch.identification_rate - c.respondent_level.identification_rate;
    return c;
}

struct ExposureRow {
    std::string label;
    std::int64_t arrival = 0;
    double late_assignments = 0.0;   // mean per replication, scheduled arrivals
    double early_assignments = 0.0;  // mean per replication, everything seeded
    double late_ratings = 0.0;
    double early_ratings = 0.0;
    double assignment_deficit = 0.0;  // early minus late
};

struct LateArrivalStudy {
    SimulationReport late;
    SimulationReport early;  // counterfactual: every arm arrives at respondent 0
    std::vector<ExposureRow> exposure;
};

inline LateArrivalStudy late_arrival_study(const Scenario& s, RunOptions options = {}) {
    s.validate();
    if (std::none_of(s.arms.begin(), s.arms.end(), [](const ArmSpec& a) { return a.arrival > 0; })) {
        throw ScenarioError("late-arrival study needs at least one arm arriving after respondent 0");
    }
    LateArrivalStudy study;
    study.late = run(s, options);
    Scenario early = s;
    for (auto& a : early.arms) a.arrival = 0;
    study.early = run(early, options);
    for (std::size_t a = 0; a < s.arms.size(); ++a) {
        const auto& l = study.late.arms[a];
        const auto& e = study.early.arms[a];
        study.exposure.push_back({l.label, l.arrival, l.mean_assignments, e.mean_assignments, l.mean_ratings,
                                  e.mean_ratings, e.mean_assignments - l.mean_assignments});
    }
    return study;
}

// -- serialization ----------------------------------------------------------

namespace detail {

inline nlohmann::json opt(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }
inline std::string opt_csv(const std::optional<double>& v) { return v ? csv::format_double(*v) : std::string{}; }

}  // namespace detail

// One JSON record per line: arms, then replications, then a summary.
inline void write_ndjson(std::ostream& os, const SimulationReport& r) {
    for (const auto& a : r.arms) {
        nlohmann::json j{{"record", "arm"},
                         {"label", a.label},
                         {"latent_mean", a.latent_mean},
                         {"arrival", a.arrival},
                         {"mean_assignments", a.mean_assignments},
                         {"mean_share", a.mean_share},
                         {"mean_ratings", a.mean_ratings},
                         {"replications_with_estimate", a.replications_with_estimate},
                         {"mean_estimate", detail::opt(a.mean_estimate)},
                         {"bias", detail::opt(a.bias)},
                         {"rmse", detail::opt(a.rmse)},
                         {"empirical_se", detail::opt(a.empirical_se)},
                         {"saturated", a.saturated},
                         {"calibrated", a.calibrated ? nlohmann::json(*a.calibrated) : nlohmann::json(nullptr)}};
        os << j.dump() << '\n';
    }
    for (const auto& rep : r.replications) {
        nlohmann::json ests = nlohmann::json::array();
        for (const auto& e : rep.estimates) ests.push_back(detail::opt(e));
        nlohmann::json floors = nlohmann::json::array();
        for (double f : rep.min_floored_probability) floors.push_back(std::isnan(f) ? nlohmann::json(nullptr) : nlohmann::json(f));
        nlohmann::json j{{"record", "replication"},
                         {"index", rep.index},
                         {"seed", rep.seed},
                         {"assignments", rep.assignments},
                         {"shares", rep.shares},
                         {"ratings", rep.ratings},
                         {"estimates", ests},
                         {"min_floored_probability", floors},
                         {"total_regret", rep.cumulative_regret.empty() ? 0.0 : rep.cumulative_regret.back()},
                         {"top_most_assigned", rep.top_most_assigned},
                         {"top_highest_estimate", rep.top_highest_estimate}};
        os << j.dump() << '\n';
    }
    os << nlohmann::json{{"record", "summary"},
                         {"identification_rate", r.identification_rate},
                         {"concentration_rate", r.concentration_rate},
                         {"mean_cumulative_regret", r.mean_cumulative_regret}}
              .dump()
       << '\n';
}

inline void write_arms_csv(std::ostream& os, const SimulationReport& r) {
    csv::write_row(os, {"label", "latent_mean", "arrival", "mean_assignments", "mean_share", "mean_ratings",
                        "replications_with_estimate", "mean_estimate", "bias", "rmse", "empirical_se", "saturated",
                        "calibrated"});
    for (const auto& a : r.arms) {
        csv::write_row(os, {a.label, csv::format_double(a.latent_mean), std::to_string(a.arrival),
                            csv::format_double(a.mean_assignments), csv::format_double(a.mean_share),
                            csv::format_double(a.mean_ratings), std::to_string(a.replications_with_estimate),
                            detail::opt_csv(a.mean_estimate), detail::opt_csv(a.bias), detail::opt_csv(a.rmse),
                            detail::opt_csv(a.empirical_se), a.saturated ? "true" : "false",
                            a.calibrated ? (*a.calibrated ? "true" : "false") : ""});
    }
}

inline void write_replications_csv(std::ostream& os, const Scenario& s, const SimulationReport& r) {
    csv::write_row(os, {"replication", "label", "assignments", "share", "ratings", "ipw_estimate",
                        "min_floored_probability"});
    for (const auto& rep : r.replications) {
        for (std::size_t a = 0; a < s.arms.size(); ++a) {
            const double f = rep.min_floored_probability[a];
            csv::write_row(os, {std::to_string(rep.index), s.arms[a].label, std::to_string(rep.assignments[a]),
                                csv::format_double(rep.shares[a]), std::to_string(rep.ratings[a]),
                                detail::opt_csv(rep.estimates[a]), std::isnan(f) ? "" : csv::format_double(f)});
        }
    }
}

inline void write_regret_csv(std::ostream& os, const SimulationReport& r) {
    csv::write_row(os, {"respondent", "mean_cumulative_regret"});
    for (std::size_t i = 0; i < r.mean_cumulative_regret.size(); ++i) {
        csv::write_row(os, {std::to_string(i), csv::format_double(r.mean_cumulative_regret[i])});
    }
}

inline std::string to_ndjson(const SimulationReport& r) {
    std::ostringstream os;
    write_ndjson(os, r);
    return os.str();
}

}  // namespace csas::sim
