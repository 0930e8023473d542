#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <vector>

#include "csas/bandit.hpp"

using namespace csas;
using namespace csas::bandit;

namespace {

ArmState arm(std::int64_t id, double mean, std::int64_t n) { return {ItemId{id}, {n, mean}}; }

SelectionDistribution fixed_distribution(const std::vector<double>& probs) {
    std::vector<ItemId> ids;
    for (std::size_t i = 0; i < probs.size(); ++i) ids.push_back(ItemId{static_cast<std::int64_t>(i)});
    return apply_floor_and_rescale(ids, probs, 0.0);
}

// Exact inclusion probabilities of the sequential (renormalized) multinomial
// draw of k items, by enumerating every ordered draw sequence.
std::vector<double> enumerate_inclusion(const std::vector<double>& probs, std::size_t k) {
    std::vector<double> inclusion(probs.size(), 0.0);
    std::vector<std::size_t> path;
    std::vector<bool> used(probs.size(), false);
    auto recurse = [&](auto&& self, double path_prob) -> void {
        if (path.size() == k) {
            for (auto i : path) inclusion[i] += path_prob;
            return;
        }
        double remaining = 0.0;
        for (std::size_t i = 0; i < probs.size(); ++i) {
            if (!used[i]) remaining += probs[i];
        }
        for (std::size_t i = 0; i < probs.size(); ++i) {
            if (used[i]) continue;
            used[i] = true;
            path.push_back(i);
            self(self, path_prob * probs[i] / remaining);
            path.pop_back();
            used[i] = false;
        }
    };
    recurse(recurse, 1.0);
    return inclusion;
}

}  // namespace

TEST(DrawPosteriors, OneDrawPerItem) {
    const std::vector<ArmState> arms{arm(7, 3.0, 4)};
    const auto draws = draw_posteriors(arms, 11);
    ASSERT_EQ(draws.size(), 1u);
    EXPECT_EQ(draws[0].item_id, ItemId{7});
    EXPECT_DOUBLE_EQ(posterior_variance(arms[0].stats), 0.2);
}

TEST(DrawPosteriors, UnratedItemUsesPriorWithUnitVariance) {
    const Scale scale{1.0, 4.0};
    const auto prior = SufficientStats::prior(scale);
    EXPECT_EQ(prior.n, 0);
    EXPECT_DOUBLE_EQ(prior.mean, 2.5);
    EXPECT_DOUBLE_EQ(posterior_variance(prior), 1.0);
}

TEST(DrawPosteriors, LawOfLargeNumbers) {
    const std::vector<ArmState> arms{arm(1, 3.0, 9)};
    std::vector<double> thetas;
    for (std::uint64_t seed = 0; seed < 10'000; ++seed) thetas.push_back(draw_posteriors(arms, seed)[0].theta);
    const double mean = std::accumulate(thetas.begin(), thetas.end(), 0.0) / thetas.size();
    double ss = 0.0;
    for (double t : thetas) ss += (t - mean) * (t - mean);
    const double var = ss / (thetas.size() - 1);
    EXPECT_NEAR(mean, 3.0, 0.02);
    EXPECT_NEAR(var, 0.1, 0.01);
}

TEST(DrawPosteriors, EmptyPoolIsAnError) {
    EXPECT_THROW(draw_posteriors({}, 1), EmptyBankError);
}

TEST(SelectionProbabilities, TwoArmWorkedCaseMatchesAnalytic) {
    const std::vector<ArmState> arms{arm(1, 3.0, 9), arm(2, 2.5, 9)};
    const auto dist = selection_probabilities(arms, 100'000, 0.0, 2024);
    EXPECT_NEAR(dist.entries[0].probability, 0.8682, 0.01);
    EXPECT_NEAR(dist.entries[0].probability + dist.entries[1].probability, 1.0, 1e-12);
}

TEST(SelectionProbabilities, LoneItemGetsProbabilityOne) {
    const std::vector<ArmState> arms{arm(1, 1.7, 3)};
    const auto dist = selection_probabilities(arms, 1000, 0.01, 5);
    ASSERT_EQ(dist.entries.size(), 1u);
    EXPECT_EQ(dist.entries[0].probability, 1.0);
}

TEST(SelectionProbabilities, FloorThenRescaleArithmetic) {
    const std::vector<ItemId> ids{ItemId{1}, ItemId{2}, ItemId{3}};
    const std::vector<double> raw{0.995, 0.003, 0.002};
    const auto dist = apply_floor_and_rescale(ids, raw, 0.01);
    EXPECT_DOUBLE_EQ(dist.entries[0].floored, 0.995);
    EXPECT_DOUBLE_EQ(dist.entries[1].floored, 0.01);
    EXPECT_DOUBLE_EQ(dist.entries[2].floored, 0.01);
    EXPECT_NEAR(dist.entries[0].probability, 0.98030, 5e-6);
    EXPECT_NEAR(dist.entries[1].probability, 0.00985, 5e-6);
    EXPECT_NEAR(dist.entries[2].probability, 0.00985, 5e-6);
    // rescaling pushes the floored entries marginally below the floor
    EXPECT_LT(dist.entries[1].probability, 0.01);
}

TEST(SelectionProbabilities, RejectsInvalidConfiguration) {
    const std::vector<ArmState> arms{arm(1, 3.0, 1), arm(2, 2.0, 1)};
    EXPECT_THROW(selection_probabilities(arms, 100, 1.0, 1), ConfigError);
    EXPECT_THROW(selection_probabilities(arms, 100, -0.1, 1), ConfigError);
    EXPECT_THROW(selection_probabilities(arms, 0, 0.01, 1), ConfigError);
    EXPECT_THROW(selection_probabilities({}, 100, 0.01, 1), EmptyBankError);
}

TEST(SelectionProbabilities, DeterministicForSeed) {
    const std::vector<ArmState> arms{arm(1, 3.0, 4), arm(2, 2.8, 2), arm(3, 3.3, 7)};
    const auto a = selection_probabilities(arms, 5000, 0.01, 99);
    const auto b = selection_probabilities(arms, 5000, 0.01, 99);
    ASSERT_EQ(a.entries.size(), b.entries.size());
    for (std::size_t i = 0; i < a.entries.size(); ++i) {
        EXPECT_EQ(a.entries[i].probability, b.entries[i].probability);
    }
}

TEST(SelectionProbabilities, MonotoneInMean) {
    for (double bump : {0.1, 0.3, 0.6}) {
        const std::vector<ArmState> base{arm(1, 2.5, 5), arm(2, 2.7, 5), arm(3, 2.9, 5)};
        auto raised = base;
        raised[0].stats.mean += bump;
        const auto p0 = selection_probabilities(base, 100'000, 0.01, 3).entries[0].probability;
        const auto p1 = selection_probabilities(raised, 100'000, 0.01, 4).entries[0].probability;
        EXPECT_GE(p1, p0 - 0.01) << "bump " << bump;
    }
}

TEST(SelectionProbabilities, StrictlyPositiveWithFloor) {
    const std::vector<ArmState> arms{arm(1, 4.0, 500), arm(2, 1.0, 500), arm(3, 1.0, 500)};
    const auto dist = selection_probabilities(arms, 2000, 0.01, 8);
    for (const auto& e : dist.entries) {
        EXPECT_GT(e.probability, 0.0);
        EXPECT_GE(e.floored, 0.01);
    }
}

TEST(RespondentDistribution, UniformBeforeAnyRating) {
    const std::vector<ArmState> arms{arm(1, 2.5, 0), arm(2, 2.5, 0), arm(3, 2.5, 0), arm(4, 2.5, 0)};
    const auto dist = respondent_distribution(arms, 10'000, 0.01, 1);
    for (const auto& e : dist.entries) EXPECT_DOUBLE_EQ(e.probability, 0.25);
}

TEST(TwoArmAnalytic, Examples) {
    EXPECT_DOUBLE_EQ(two_arm_analytic(3.0, 9, 3.0, 9), 0.5);
    EXPECT_NEAR(two_arm_analytic(3.0, 9, 2.5, 9), 0.8682, 5e-5);
    EXPECT_GT(two_arm_analytic(4.0, 99, 1.0, 99), 0.9999);
}

TEST(TwoArmAnalytic, VarianceShrinkageMovesTowardCertainty) {
    double previous = 0.5;
    for (std::int64_t n : {0, 1, 4, 9, 49, 199}) {
        const double p = two_arm_analytic(3.0, n, 2.8, n);
        EXPECT_GT(p, previous);
        previous = p;
    }
    previous = 0.5;
    for (std::int64_t n : {0, 1, 4, 9, 49, 199}) {
        const double p = two_arm_analytic(2.8, n, 3.0, n);
        EXPECT_LT(p, previous);
        previous = p;
    }
}

TEST(AssignItems, SingleCertainItem) {
    const auto dist = fixed_distribution({1.0});
    const auto out = assign_items(dist, 1, {}, 3);
    ASSERT_EQ(out.size(), 1u);
    EXPECT_EQ(out[0].item_id, ItemId{0});
    EXPECT_EQ(out[0].probability, 1.0);
}

TEST(AssignItems, ExhaustiveDrawReturnsAll) {
    const auto dist = fixed_distribution({0.5, 0.3, 0.2});
    const auto out = assign_items(dist, 3, {}, 17);
    std::set<std::int64_t> ids;
    for (const auto& a : out) ids.insert(a.item_id.value);
    EXPECT_EQ(ids, (std::set<std::int64_t>{0, 1, 2}));
}

TEST(AssignItems, InclusionFrequencyMatchesEnumeration) {
    const std::vector<double> probs{0.5, 0.3, 0.2};
    const auto exact = enumerate_inclusion(probs, 2);
    EXPECT_NEAR(exact[0], 0.8392857142857143, 1e-12);

    const auto dist = fixed_distribution(probs);
    std::vector<int> hits(3, 0);
    constexpr int trials = 100'000;
    for (int t = 0; t < trials; ++t) {
        for (const auto& a : assign_items(dist, 2, {}, derive_seed(42, t))) ++hits[a.item_id.value];
    }
    for (std::size_t i = 0; i < probs.size(); ++i) {
        EXPECT_NEAR(static_cast<double>(hits[i]) / trials, exact[i], 0.01) << "item " << i;
    }
}

TEST(AssignItems, RecordsMarginalProbability) {
    const auto dist = fixed_distribution({0.5, 0.3, 0.2});
    for (const auto& a : assign_items(dist, 2, {}, 8)) {
        EXPECT_EQ(a.probability, *dist.probability_of(a.item_id));
    }
}

TEST(AssignItems, NoDuplicatesNoExcluded) {
    Rng gen(123);
    for (int trial = 0; trial < 500; ++trial) {
        const std::size_t count = 2 + gen() % 30;
        std::vector<double> probs(count);
        for (auto& p : probs) p = gen.uniform() + 1e-3;
        const auto dist = fixed_distribution(probs);
        std::unordered_set<ItemId> exclude;
        for (std::size_t i = 0; i < count; ++i) {
            if (gen.uniform() < 0.2) exclude.insert(ItemId{static_cast<std::int64_t>(i)});
        }
        const std::size_t available = count - exclude.size();
        const std::size_t k = available == 0 ? 0 : gen() % (available + 1);
        const auto out = assign_items(dist, k, exclude, gen());
        ASSERT_EQ(out.size(), k);
        std::set<ItemId> seen;
        for (const auto& a : out) {
            EXPECT_FALSE(exclude.contains(a.item_id));
            EXPECT_TRUE(seen.insert(a.item_id).second);
        }
    }
}

TEST(AssignItems, InsufficientItems) {
    const auto dist = fixed_distribution({0.5, 0.5});
    EXPECT_THROW(assign_items(dist, 3, {}, 1), InsufficientItemsError);
    EXPECT_THROW(assign_items(dist, 2, {ItemId{0}}, 1), InsufficientItemsError);
}

TEST(UpdateStats, Examples) {
    const Scale scale{1.0, 4.0};
    auto s = update_stats({4, 3.0}, 4.0, scale);
    EXPECT_EQ(s.n, 5);
    EXPECT_DOUBLE_EQ(s.mean, 3.2);

    s = update_stats(SufficientStats::prior(scale), 1.0, scale);
    EXPECT_EQ(s, (SufficientStats{1, 1.0}));

    s = SufficientStats::prior(scale);
    for (int i = 0; i < 3; ++i) s = update_stats(s, 3.0, scale);
    EXPECT_EQ(s, (SufficientStats{3, 3.0}));
}

TEST(UpdateStats, RejectsOutOfScale) {
    const Scale scale{1.0, 4.0};
    EXPECT_THROW(update_stats({}, 5.0, scale), ValidationError);
    EXPECT_THROW(update_stats({}, 0.0, scale), ValidationError);
    EXPECT_THROW(update_stats({}, std::nan(""), scale), ValidationError);
}

TEST(UpdateStats, MatchesLogRecomputationForEveryPrefix) {
    const Scale scale{1.0, 5.0};
    Rng gen(77);
    for (int trial = 0; trial < 200; ++trial) {
        auto stats = SufficientStats::prior(scale);
        double sum = 0.0;
        const int length = 1 + static_cast<int>(gen() % 300);
        for (int i = 0; i < length; ++i) {
            const double rating = 1.0 + static_cast<double>(gen() % 5);
            stats = update_stats(stats, rating, scale);
            sum += rating;
            ASSERT_EQ(stats.n, i + 1);
            ASSERT_NEAR(stats.mean, sum / (i + 1), 1e-12);
        }
    }
}
