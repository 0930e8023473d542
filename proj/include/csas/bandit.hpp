#pragma once

// Gaussian Thompson sampling over a variable-size item pool.
//
// Each item's posterior is Normal(mean rating, 1 / (n + 1)). Selection
// probabilities are the Monte Carlo frequency with which an item's draw is the
// largest, floored and rescaled to sum to one. Respondents then receive k
// distinct items drawn sequentially from that distribution.
//
// Every function here is pure: randomness enters only through explicit seeds.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "csas/error.hpp"
#include "csas/random.hpp"
#include "csas/types.hpp"

namespace csas::bandit {

inline constexpr std::int64_t kDefaultMonteCarloDraws = 10'000;
inline constexpr double kDefaultFloor = 0.01;

// Rating count and running mean; the whole per-item bandit state.
struct SufficientStats {
    std::int64_t n = 0;
    double mean = 0.0;

    // State of an unrated item: the scale midpoint stands in for the mean.
    static SufficientStats prior(const Scale& scale) noexcept { return {0, scale.midpoint()}; }

    friend bool operator==(const SufficientStats&, const SufficientStats&) = default;
};

struct ArmState {
    ItemId id;
    SufficientStats stats;
};

struct PosteriorDraw {
    ItemId item_id;
    double theta = 0.0;
};

struct SelectionEntry {
    ItemId item_id;
    double raw_frequency = 0.0;  // argmax share over the Monte Carlo draws
    double floored = 0.0;        // max(raw_frequency, floor), before rescaling
    double probability = 0.0;    // floored / sum(floored)
};

struct SelectionDistribution {
    std::vector<SelectionEntry> entries;
    double floor = 0.0;
    std::int64_t monte_carlo_draws = 0;

    std::optional<double> probability_of(ItemId id) const {
        for (const auto& e : entries) {
            if (e.item_id == id) return e.probability;
        }
        return std::nullopt;
    }
};

struct Assignment {
    ItemId item_id;
    double probability = 0.0;  // e_q from the full distribution

    friend bool operator==(const Assignment&, const Assignment&) = default;
};

inline double posterior_variance(const SufficientStats& stats) noexcept {
    return 1.0 / (static_cast<double>(stats.n) + 1.0);
}

inline double normal_cdf(double z) noexcept { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

namespace detail {

inline void validate_arms(std::span<const ArmState> arms) {
    if (arms.empty()) throw EmptyBankError("item pool is empty");
    std::unordered_set<ItemId> seen;
    for (const auto& arm : arms) {
        if (arm.stats.n < 0 || !std::isfinite(arm.stats.mean)) {
            throw ValidationError("invalid sufficient statistics for item " + to_string(arm.id));
        }
        if (!seen.insert(arm.id).second) {
            throw ValidationError("duplicate item " + to_string(arm.id) + " in item pool");
        }
    }
}

inline void validate_floor(double floor) {
    if (!std::isfinite(floor) || floor < 0.0 || floor >= 1.0) {
        throw ConfigError("probability floor must lie in [0, 1), got " + std::to_string(floor));
    }
}

}  // namespace detail

inline std::vector<PosteriorDraw> draw_posteriors(std::span<const ArmState> arms, std::uint64_t seed) {
    detail::validate_arms(arms);
    Rng rng(seed);
    std::vector<PosteriorDraw> draws;
    draws.reserve(arms.size());
    for (const auto& arm : arms) {
        draws.push_back({arm.id, rng.normal(arm.stats.mean, std::sqrt(posterior_variance(arm.stats)))});
    }
    return draws;
}

// Floors each raw frequency and rescales the result to sum to one.
inline SelectionDistribution apply_floor_and_rescale(std::span<const ItemId> ids,
                                                     std::span<const double> raw, double floor,
                                                     std::int64_t monte_carlo_draws = 0) {
    detail::validate_floor(floor);
    if (ids.size() != raw.size()) throw ValidationError("ids and frequencies differ in length");
    if (ids.empty()) throw EmptyBankError("item pool is empty");

    SelectionDistribution dist;
    dist.floor = floor;
    dist.monte_carlo_draws = monte_carlo_draws;
    dist.entries.reserve(ids.size());
    double total = 0.0;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        const double floored = std::max(raw[i], floor);
        dist.entries.push_back({ids[i], raw[i], floored, 0.0});
        total += floored;
    }
    if (!(total > 0.0)) throw ValidationError("frequencies sum to zero");
    for (auto& e : dist.entries) e.probability = e.floored / total;
    return dist;
}

inline SelectionDistribution selection_probabilities(std::span<const ArmState> arms,
                                                     std::int64_t monte_carlo_draws, double floor,
                                                     std::uint64_t seed) {
    detail::validate_arms(arms);
    detail::validate_floor(floor);
    if (monte_carlo_draws < 1) throw ConfigError("Monte Carlo draw count must be at least 1");

    const std::size_t count = arms.size();
    std::vector<double> means(count);
    std::vector<double> sds(count);
    std::vector<ItemId> ids(count);
    for (std::size_t j = 0; j < count; ++j) {
        ids[j] = arms[j].id;
        means[j] = arms[j].stats.mean;
        sds[j] = std::sqrt(posterior_variance(arms[j].stats));
    }

    std::vector<std::int64_t> wins(count, 0);
    Rng rng(seed);
    for (std::int64_t m = 0; m < monte_carlo_draws; ++m) {
        std::size_t best = 0;
        double best_theta = means[0] + sds[0] * rng.normal();
        for (std::size_t j = 1; j < count; ++j) {
            const double theta = means[j] + sds[j] * rng.normal();
            // strict comparison: ties go to the lowest index
            if (theta > best_theta) {
                best_theta = theta;
                best = j;
            }
        }
        ++wins[best];
    }

    std::vector<double> raw(count);
    for (std::size_t j = 0; j < count; ++j) {
        raw[j] = static_cast<double>(wins[j]) / static_cast<double>(monte_carlo_draws);
    }
    return apply_floor_and_rescale(ids, raw, floor, monte_carlo_draws);
}

// Exact uniform distribution; used before any item in the pool has a rating.
inline SelectionDistribution uniform_distribution(std::span<const ArmState> arms, double floor = 0.0) {
    detail::validate_arms(arms);
    std::vector<ItemId> ids;
    ids.reserve(arms.size());
    for (const auto& arm : arms) ids.push_back(arm.id);
    const std::vector<double> raw(arms.size(), 1.0 / static_cast<double>(arms.size()));
    return apply_floor_and_rescale(ids, raw, floor, 0);
}

// The distribution a respondent's dynamic slots are drawn from: uniform while
// the pool has no ratings at all, Thompson sampling afterwards.
inline SelectionDistribution respondent_distribution(std::span<const ArmState> arms,
                                                     std::int64_t monte_carlo_draws, double floor,
                                                     std::uint64_t seed) {
    const bool unrated = std::all_of(arms.begin(), arms.end(),
                                     [](const ArmState& a) { return a.stats.n == 0; });
    if (unrated) return uniform_distribution(arms, floor);
    return selection_probabilities(arms, monte_carlo_draws, floor, seed);
}

// Draws k distinct items, renormalizing over the remaining items after each
// draw. The probability recorded with each item is its marginal e_q.
inline std::vector<Assignment> assign_items(const SelectionDistribution& dist, std::size_t k,
                                            const std::unordered_set<ItemId>& exclude,
                                            std::uint64_t seed) {
    std::vector<SelectionEntry> remaining;
    remaining.reserve(dist.entries.size());
    for (const auto& e : dist.entries) {
        if (!exclude.contains(e.item_id)) remaining.push_back(e);
    }
    if (k > remaining.size()) {
        throw InsufficientItemsError("requested " + std::to_string(k) + " items but only " +
                                     std::to_string(remaining.size()) + " are available");
    }

    Rng rng(seed);
    std::vector<Assignment> out;
    out.reserve(k);
    for (std::size_t draw = 0; draw < k; ++draw) {
        double total = 0.0;
        for (const auto& e : remaining) total += e.probability;

        std::size_t chosen = remaining.size() - 1;
        if (total > 0.0) {
            const double target = rng.uniform() * total;
            double cumulative = 0.0;
            for (std::size_t j = 0; j < remaining.size(); ++j) {
                cumulative += remaining[j].probability;
                if (target < cumulative) {
                    chosen = j;
                    break;
                }
            }
            // rounding can leave target past the last bucket; fall back to
            // the last item with positive mass
            while (remaining[chosen].probability <= 0.0 && chosen > 0) --chosen;
        } else {
            chosen = static_cast<std::size_t>(rng.uniform() * static_cast<double>(remaining.size()));
            chosen = std::min(chosen, remaining.size() - 1);
        }
        out.push_back({remaining[chosen].item_id, remaining[chosen].probability});
        remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(chosen));
    }
    return out;
}

inline SufficientStats update_stats(const SufficientStats& stats, double rating, const Scale& scale) {
    if (!std::isfinite(rating) || !scale.contains(rating)) {
        throw ValidationError("rating " + std::to_string(rating) + " outside scale [" +
                              std::to_string(scale.min) + ", " + std::to_string(scale.max) + "]");
    }
    const double n = static_cast<double>(stats.n);
    return {stats.n + 1, (stats.mean * n + rating) / (n + 1.0)};
}

// P(theta_A > theta_B) under the two posteriors, in closed form.
inline double two_arm_analytic(double mean_a, std::int64_t n_a, double mean_b, std::int64_t n_b) {
    const double var = posterior_variance({n_a, mean_a}) + posterior_variance({n_b, mean_b});
    return normal_cdf((mean_a - mean_b) / std::sqrt(var));
}

}  // namespace csas::bandit
