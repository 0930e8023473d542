#include <gtest/gtest.h>

#include <numeric>
#include <sstream>

#include "csas/estimator.hpp"
#include "csas/random.hpp"

using namespace csas;
using namespace csas::estimate;

namespace {

RatingEvent ev(std::int64_t item, double rating, double p, const std::string& who = "r", bool self = false,
               bank::Tags tags = {}) {
    RatingEvent e;
    e.item_id = ItemId{item};
    e.rating = rating;
    e.selection_prob = p;
    e.respondent_id = who;
    e.self_submitted = self;
    e.subgroup_tags = std::move(tags);
    return e;
}

PrevalenceEstimate est(std::int64_t item, double mean, double se, std::optional<std::string> group = {}) {
    PrevalenceEstimate e;
    e.item_id = ItemId{item};
    e.ipw_mean = mean;
    e.std_error = se;
    e.n_ratings = 20;
    e.subgroup = std::move(group);
    return e;
}

}  // namespace

TEST(IpwMean, HajekWorkedExample) {
    const std::vector<RatingEvent> events{ev(1, 4, 0.5), ev(1, 2, 0.25)};
    const auto e = ipw_mean(events);
    EXPECT_NEAR(e.ipw_mean, 2.6666666666666665, 1e-12);
    // sqrt(2^2 (4/3)^2 + 4^2 (2/3)^2) / 6, computed offline
    EXPECT_NEAR(e.std_error, 0.628539361054709, 1e-12);
    EXPECT_EQ(e.n_ratings, 2u);
}

TEST(IpwMean, SingleEvent) {
    const std::vector<RatingEvent> events{ev(1, 3, 0.2)};
    const auto e = ipw_mean(events);
    EXPECT_EQ(e.ipw_mean, 3.0);
    EXPECT_EQ(e.std_error, 0.0);
}

TEST(IpwMean, BadProbabilities) {
    for (double p : {0.0, -0.1, 1.5, std::nan("")}) {
        const std::vector<RatingEvent> events{ev(1, 3, 0.5), ev(1, 2, p)};
        EXPECT_THROW(ipw_mean(events), DataIntegrityError) << p;
    }
    EXPECT_THROW(ipw_mean(std::vector<RatingEvent>{}), ValidationError);
}

TEST(IpwMean, UniformProbabilitiesGiveArithmeticMean) {
    Rng rng(3);
    for (int trial = 0; trial < 1000; ++trial) {
        const auto n = 1 + static_cast<std::size_t>(rng.uniform() * 50);
        const double p = 0.01 + 0.99 * rng.uniform();
        std::vector<RatingEvent> events;
        double sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double y = 1.0 + std::floor(rng.uniform() * 4.0);
            sum += y;
            events.push_back(ev(1, y, p));
        }
        EXPECT_NEAR(ipw_mean(events).ipw_mean, sum / static_cast<double>(n), 1e-12);
    }
}

TEST(IpwMean, WithinObservedRangeAndEquivariant) {
    Rng rng(5);
    for (int trial = 0; trial < 500; ++trial) {
        std::vector<RatingEvent> events, shifted;
        double lo = 10, hi = -10;
        for (int i = 0; i < 12; ++i) {
            const double y = 1.0 + std::floor(rng.uniform() * 5.0);
            const double p = 0.01 + 0.99 * rng.uniform();
            lo = std::min(lo, y);
            hi = std::max(hi, y);
            events.push_back(ev(1, y, p));
            shifted.push_back(ev(1, 2.5 * y - 1.0, p));
        }
        const auto a = ipw_mean(events), b = ipw_mean(shifted);
        EXPECT_GE(a.ipw_mean, lo);
        EXPECT_LE(a.ipw_mean, hi);
        EXPECT_NEAR(b.ipw_mean, 2.5 * a.ipw_mean - 1.0, 1e-12);
        EXPECT_NEAR(b.std_error, 2.5 * a.std_error, 1e-12);
    }
}

TEST(ItemEstimates, SelfRatingsAndSuppression) {
    std::vector<RatingEvent> events;
    for (int i = 0; i < 9; ++i) events.push_back(ev(1, 2, 0.5));
    for (int i = 0; i < 10; ++i) events.push_back(ev(2, 3, 0.5));
    events.push_back(ev(2, 5, 1.0, "author", true));

    const auto def = item_estimates(events, WeightMode::exclude_self, kClaimMinRatings);
    ASSERT_EQ(def.size(), 1u);
    EXPECT_EQ(def[0].item_id, ItemId{2});
    EXPECT_EQ(def[0].ipw_mean, 3.0);
    EXPECT_EQ(def[0].min_rating_filter, 10u);

    const auto self = item_estimates(events, WeightMode::self_only);
    ASSERT_EQ(self.size(), 1u);
    EXPECT_EQ(self[0].ipw_mean, 5.0);

    const auto all = item_estimates(events, WeightMode::include_self, 10);
    ASSERT_EQ(all.size(), 1u);
    EXPECT_EQ(all[0].n_ratings, 11u);
}

TEST(Subgroups, MedianSplitOnTrust) {
    std::vector<RatingEvent> events;
    // five-point trust tag, respondent i has value (i % 5) + 1
    for (int i = 0; i < 100; ++i) {
        const std::string trust = std::to_string(i % 5 + 1);
        events.push_back(ev(1, i % 5 < 2 ? 4 : 2, 0.5, "r" + std::to_string(i), false, {{"trust", trust}}));
    }
    const auto r = subgroup_estimates(events, "trust", MedianSplit{}, {"trust", "party"});
    ASSERT_TRUE(r.median);
    EXPECT_EQ(*r.median, 3.0);
    ASSERT_EQ(r.estimates.size(), 2u);
    EXPECT_EQ(r.estimates[0].subgroup, "high");
    EXPECT_EQ(r.estimates[0].n_ratings, 40u);
    EXPECT_EQ(r.estimates[0].ipw_mean, 2.0);
    EXPECT_EQ(r.estimates[1].subgroup, "low");
    EXPECT_EQ(r.estimates[1].n_ratings, 60u);
    EXPECT_EQ(r.dropped, 0u);
}

TEST(Subgroups, SuppressionAndDrops) {
    std::vector<RatingEvent> events;
    for (int i = 0; i < 9; ++i) events.push_back(ev(1, 3, 0.5, "d" + std::to_string(i), false, {{"party", "D"}}));
    for (int i = 0; i < 10; ++i) events.push_back(ev(1, 2, 0.5, "r" + std::to_string(i), false, {{"party", "R"}}));
    events.push_back(ev(1, 2, 0.5, "x"));
    const auto r = subgroup_estimates(events, "party", Categorical{}, {"party"}, WeightMode::exclude_self, 10);
    ASSERT_EQ(r.estimates.size(), 1u);
    EXPECT_EQ(r.estimates[0].subgroup, "R");
    EXPECT_EQ(r.dropped, 1u);
}

TEST(Subgroups, AllUntaggedAndUnknownKey) {
    const std::vector<RatingEvent> events{ev(1, 3, 0.5), ev(2, 2, 0.5), ev(2, 4, 0.5)};
    const auto r = subgroup_estimates(events, "party", Categorical{}, {"party"});
    EXPECT_TRUE(r.estimates.empty());
    EXPECT_EQ(r.dropped, 3u);
    EXPECT_THROW(subgroup_estimates(events, "zodiac", Categorical{}, {"party"}), ConfigError);
}

TEST(DifferenceTest, Examples) {
    const auto same = difference_test(est(1, 3.2, 0.1), est(1, 3.2, 0.1));
    EXPECT_EQ(same.delta, 0.0);
    EXPECT_FALSE(same.significant);

    const auto t = difference_test(est(1, 3.5, 0.1), est(1, 3.0, 0.1));
    EXPECT_NEAR(t.delta, 0.5, 1e-15);
    EXPECT_NEAR(t.z, 3.5355339059327378, 1e-9);
    EXPECT_TRUE(t.significant);

    EXPECT_FALSE(difference_test(est(1, 3.5, 1.0), est(1, 3.0, 1.0)).significant);
    EXPECT_NEAR(critical_value(0.05), 1.959963984540054, 1e-12);
}

TEST(DifferenceTest, ZeroSe) {
    const auto d = difference_test(est(1, 3.5, 0.0), est(1, 3.0, 0.0));
    EXPECT_TRUE(d.degenerate);
    EXPECT_TRUE(d.significant);
    const auto z = difference_test(est(1, 3.0, 0.0), est(1, 3.0, 0.0));
    EXPECT_FALSE(z.degenerate);
    EXPECT_FALSE(z.significant);
}

TEST(Export, OrderByGapLargestFirst) {
    const std::vector<PrevalenceEstimate> ests{est(1, 3.0, 0.1, "D"), est(1, 2.9, 0.1, "R"), est(2, 3.8, 0.1, "D"),
                                               est(2, 1.9, 0.1, "R"), est(3, 2.0, 0.1, "D")};
    const auto cs = contrasts(ests, "D", "R");
    ASSERT_EQ(cs.size(), 2u);
    std::ostringstream os;
    export_csv(os, rows_from(cs, {{ItemId{1}, "one"}, {ItemId{2}, "two"}}), Ordering::by_abs_delta);
    std::istringstream is(os.str());
    const auto rows = import_csv(is);
    ASSERT_EQ(rows.size(), 4u);
    EXPECT_EQ(rows[0].estimate.item_id, ItemId{2});
    EXPECT_EQ(rows[0].item_text, "two");
    EXPECT_EQ(rows[0].significant, true);
    EXPECT_EQ(rows[2].estimate.item_id, ItemId{1});
    EXPECT_EQ(rows[2].significant, false);
}

TEST(Export, CsvRoundTripsBitIdentically) {
    Rng rng(9);
    std::vector<PrevalenceEstimate> ests;
    for (int i = 0; i < 50; ++i) {
        auto e = est(i, 1.0 + 3.0 * rng.uniform(), rng.uniform() / 3.0, i % 3 ? std::optional<std::string>("g, \"x\"") : std::nullopt);
        e.n_ratings = static_cast<std::size_t>(i + 1);
        ests.push_back(e);
    }
    auto rows = rows_from(ests, {{ItemId{4}, "multi\nline, \"quoted\""}});
    std::ostringstream os;
    export_csv(os, rows, Ordering::by_mean);
    std::istringstream is(os.str());
    const auto back = import_csv(is);
    order_rows(rows, Ordering::by_mean);
    ASSERT_EQ(back.size(), rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        EXPECT_EQ(back[i].estimate.ipw_mean, rows[i].estimate.ipw_mean);
        EXPECT_EQ(back[i].estimate.std_error, rows[i].estimate.std_error);
        EXPECT_EQ(back[i].estimate.subgroup, rows[i].estimate.subgroup);
        EXPECT_EQ(back[i].item_text, rows[i].item_text);
        EXPECT_EQ(back[i].estimate.n_ratings, rows[i].estimate.n_ratings);
        if (i) {
            EXPECT_GE(back[i - 1].estimate.ipw_mean, back[i].estimate.ipw_mean);
        }
    }
    // writing the re-imported rows reproduces the file byte for byte
    std::ostringstream again;
    export_csv(again, back, Ordering::by_mean);
    EXPECT_EQ(again.str(), os.str());
}

TEST(Export, PlotdataCiSymmetric) {
    const std::vector<PrevalenceEstimate> ests{est(1, 3.0, 0.2), est(2, 2.0, 0.05)};
    std::ostringstream os;
    export_plotdata(os, rows_from(ests), Ordering::by_mean, WeightMode::include_self);
    std::istringstream is(os.str());
    std::string line;
    int count = 0;
    while (std::getline(is, line)) {
        const auto j = nlohmann::json::parse(line);
        EXPECT_NEAR(j["mean"].get<double>() - j["ci_low"].get<double>(),
                    j["ci_high"].get<double>() - j["mean"].get<double>(), 1e-12);
        EXPECT_NEAR(j["ci_high"].get<double>() - j["mean"].get<double>(), 1.959963984540054 * j["std_error"].get<double>(),
                    1e-12);
        EXPECT_EQ(j["weight_mode"], "include_self");
        ++count;
    }
    EXPECT_EQ(count, 2);
}

TEST(Export, Errors) {
    std::ostringstream os;
    EXPECT_THROW(export_csv(os, {}), EmptyExportError);
    EXPECT_THROW(export_plotdata(os, {}), EmptyExportError);
    const std::vector<PrevalenceEstimate> ests{est(1, 3.0, 0.2)};
    EXPECT_THROW(export_csv(os, rows_from(ests), Ordering::by_abs_delta), ConfigError);
}
