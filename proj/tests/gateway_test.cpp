#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <thread>

#include "csas/gateway/http.hpp"

using namespace csas;
using namespace csas::gateway;

namespace {

const std::vector<std::string> kSeeds{
    "Trump kept classified documents in his home.",
    "George Soros funded the Black Lives Matter protests.",
    "Vaccines cause autism in young children.",
    "The moon landing was staged in a film studio.",
    "Climate change is caused by human activity.",
};

struct Harness {
    std::shared_ptr<filter::MockBackend> backend = std::make_shared<filter::MockBackend>();
    std::unique_ptr<SurveyService> service;

    explicit Harness(SurveyConfig config = {}, const std::string& store = {}) {
        config.monte_carlo_draws = 2000;
        service = std::make_unique<SurveyService>(config, backend, store);
    }

    SurveyService* operator->() { return service.get(); }
};

Params ratings_for(const json& sample, double rating) {
    Params p{{"respondent", sample["respondent"].get<std::string>()}};
    for (std::size_t i = 1; i <= sample["k"].get<std::size_t>(); ++i) {
        const auto s = std::to_string(i);
        p["q_" + s] = std::to_string(sample["id_" + s].get<std::int64_t>());
        p["r_" + s] = csv::format_double(rating);
    }
    return p;
}

int status_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const ProtocolError& e) {
        return e.status();
    } catch (const Error& e) {
        return http_status(e.code());
    }
    return 200;
}

std::filesystem::path temp_store(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("csas_gateway_" + name + ".db");
    std::filesystem::remove(p);
    std::filesystem::remove(p.string() + "-wal");
    std::filesystem::remove(p.string() + "-shm");
    return p;
}

}  // namespace

TEST(Service, SeedBelowKIsConflict) {
    Harness h;
    EXPECT_EQ(status_of([&] { h->seed({kSeeds[0], kSeeds[1]}); }), 409);
    EXPECT_EQ(status_of([&] { h->sample("r1"); }), 409);
    h->seed(kSeeds);
    EXPECT_EQ(status_of([&] { h->seed(kSeeds); }), 409);
}

TEST(Service, SampleIsFlatAndStable) {
    Harness h;
    h->seed(kSeeds);
    const auto s = h->sample("r1");
    EXPECT_EQ(s["k"], 4);
    for (int i = 1; i <= 4; ++i) {
        const auto slot = std::to_string(i);
        EXPECT_TRUE(s["q_" + slot].is_string());
        EXPECT_EQ(s["p_" + slot], 0.2);  // nothing rated yet
    }
    EXPECT_EQ(h->sample("r1"), s);
    EXPECT_EQ(status_of([&] { h->sample("bad id!"); }), 400);
}

TEST(Service, UpdateRoundTrip) {
    Harness h;
    h->seed(kSeeds);
    const auto s = h->sample("r1");
    auto params = ratings_for(s, 3);
    params["age"] = "40";
    const auto out = h->update("r1", params);
    EXPECT_EQ(out["events"], 4);
    const auto events = h->bank().events();
    ASSERT_EQ(events.size(), 4u);
    for (const auto& e : events) {
        EXPECT_EQ(e.selection_prob, 0.2);
        EXPECT_FALSE(e.self_submitted);
        EXPECT_TRUE(e.subgroup_tags.empty());  // age is not a configured tag
    }
    EXPECT_EQ(status_of([&] { h->update("r1", params); }), 409);
    // the next respondent sees rated arms, so probabilities leave uniform
    const auto view = h->bank_view();
    double total = 0;
    bool uniform = true;
    for (const auto& item : view["items"]) {
        total += item.value("e_q", 0.0);
        uniform = uniform && item["e_q"] == 0.2;
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
    EXPECT_FALSE(uniform);
}

TEST(Service, UpdateNamesOffenders) {
    Harness h;
    h->seed(kSeeds);
    EXPECT_EQ(status_of([&] { h->update("r1", {{"q_1", "1"}, {"r_1", "2"}}); }), 422);
    const auto s = h->sample("r1");
    auto params = ratings_for(s, 2);
    params["q_1"] = "999";
    params["r_2"] = "7";
    params.erase("r_3");
    params["r_9"] = "1";
    try {
        h->update("r1", params);
        FAIL();
    } catch (const ProtocolError& e) {
        EXPECT_EQ(e.status(), 422);
        const auto offenders = e.detail()["offenders"].dump();
        EXPECT_NE(offenders.find("q_1=999"), std::string::npos);
        EXPECT_NE(offenders.find("r_2=7"), std::string::npos);
        EXPECT_NE(offenders.find("r_3 missing"), std::string::npos);
        EXPECT_NE(offenders.find("r_9"), std::string::npos);
    }
    EXPECT_EQ(h->bank().event_count(), 0u);
    // nothing was recorded, so a corrected update still goes through
    EXPECT_EQ(h->update("r1", ratings_for(s, 2))["events"], 4);
}

TEST(Service, SubmissionSelfRatingAndExclusion) {
    SurveyConfig c;
    c.subgroup_tags = {"party"};
    Harness h(c);
    h->seed(kSeeds);
    const auto in = h->input("r1", "The 2020 election was stolen by the Democrats.");
    EXPECT_FALSE(in.parked);
    EXPECT_EQ(in.body["status"], "accepted");
    EXPECT_EQ(in.body["completion"], "The 2020 election was stolen by the Democrats.");
    const auto self_id = in.body["self_id"].get<std::int64_t>();

    // own item is never served back
    const auto s = h->sample("r1");
    for (int i = 1; i <= 4; ++i) EXPECT_NE(s["id_" + std::to_string(i)], self_id);

    auto params = ratings_for(s, 1);
    params["self_id"] = std::to_string(self_id);
    params["self_r"] = "4";
    params["party"] = "D";
    h->update("r1", params);
    const auto events = h->bank().events();
    ASSERT_EQ(events.size(), 5u);
    EXPECT_TRUE(events.back().self_submitted);
    EXPECT_EQ(events.back().selection_prob, 1.0);
    EXPECT_EQ(events.back().subgroup_tags.at("party"), "D");

    // someone else's item is not a valid self_id
    const auto s2 = h->sample("r2");
    auto p2 = ratings_for(s2, 1);
    p2["self_id"] = "1";
    p2["self_r"] = "4";
    EXPECT_EQ(status_of([&] { h->update("r2", p2); }), 422);
}

TEST(Service, InputIsIdempotentPerRespondent) {
    Harness h;
    h->seed(kSeeds);
    const auto a = h->input("r1", "The 2020 election was stolen by the Democrats.");
    const auto b = h->input("r1", "  The 2020 election was stolen by the Democrats. ");
    EXPECT_EQ(b.body["self_id"], a.body["self_id"]);
    EXPECT_TRUE(b.body.value("replayed", false));
    EXPECT_EQ(h->bank().item_count(), 6u);
    EXPECT_EQ(status_of([&] { h->input("r1", "Something else entirely happened in Ohio."); }), 409);
}

TEST(Service, RejectionsStayOutOfTheBank) {
    Harness h;
    h->seed(kSeeds);
    const auto toxic = h->input("r1", "Ted Cruz is the Zodiac killer");
    EXPECT_EQ(toxic.body["status"], "rejected_toxic");
    EXPECT_TRUE(toxic.body["completion"].is_null());
    EXPECT_TRUE(toxic.body["self_id"].is_null());
    const auto dup = h->input("r2", kSeeds[2]);
    EXPECT_EQ(dup.body["status"], "rejected_redundant");
    EXPECT_EQ(dup.body["nearest"][0]["item_id"], 3);
    EXPECT_EQ(dup.body["nearest"][0]["text"], kSeeds[2]);
    const auto junk = h->input("r3", "Democrats lie.");
    EXPECT_EQ(junk.body["status"], "rejected_irrelevant");
    EXPECT_EQ(h->bank().snapshot_active().items.size(), 5u);
}

TEST(Service, OversizeInputIs413) {
    Harness h;
    h->seed(kSeeds);
    EXPECT_EQ(status_of([&] { h->input("r1", std::string(2001, 'a')); }), 413);
    EXPECT_EQ(status_of([&] { h->input("r1", "   "); }), 400);
}

TEST(Service, DryRunWritesNothing) {
    Harness h;
    h->seed(kSeeds);
    const auto r = h->input("", "The 2020 election was stolen by the Democrats.", true);
    EXPECT_EQ(r.body["status"], "accepted");
    EXPECT_TRUE(r.body["dry_run"]);
    EXPECT_EQ(h->bank().item_count(), 5u);
    EXPECT_FALSE(h->bank().submission(""));
    EXPECT_EQ(h->bank().sequence(), 5);
}

TEST(Service, HumanQueueHoldsUntilApproved) {
    SurveyConfig c;
    c.moderation = Moderation::human_queue;
    c.k_dynamic = 5;
    Harness h(c);
    h->seed(kSeeds);
    const auto in = h->input("r1", "The 2020 election was stolen by the Democrats.");
    EXPECT_EQ(in.body["status"], "pending");
    const auto id = in.body["self_id"].get<std::int64_t>();
    ASSERT_EQ(h->pending().size(), 1u);
    // five active items, own pending item excluded: only r1's own rating of it is allowed
    const auto s = h->sample("r2");
    for (int i = 1; i <= 5; ++i) EXPECT_NE(s["id_" + std::to_string(i)], id);
    EXPECT_EQ(h->moderate(id, "approve", "")["status"], "active");
    EXPECT_TRUE(h->pending().empty());
    EXPECT_EQ(h->bank().snapshot_active().items.size(), 6u);
    EXPECT_EQ(status_of([&] { h->moderate(id, "maybe", ""); }), 400);
}

TEST(Service, OutageParksSubmission) {
    Harness h;
    h->seed(kSeeds);
    h.backend->set_outage("moderate", true);
    const auto r = h->input("r1", "The 2020 election was stolen by the Democrats.");
    EXPECT_TRUE(r.parked);
    EXPECT_EQ(r.body["status"], "parked");
    ASSERT_EQ(h->pending().size(), 1u);
    EXPECT_EQ(h->pending()[0]["reason"].get<std::string>().rfind("parked", 0), 0u);
    // the respondent can still be sampled and rate
    const auto s = h->sample("r1");
    EXPECT_EQ(h->update("r1", ratings_for(s, 2))["events"], 4);
}

TEST(Service, IssuesModeRedundantRatesTheMatchedTheme) {
    SurveyConfig c;
    c.mode = filter::SurveyMode::issues;
    c.k_dynamic = 2;
    Harness h(c);
    h->seed({"Inflation", "Immigration", "Taxation"});
    const auto r = h->input("r1", "My taxes are too high.");
    EXPECT_EQ(r.body["status"], "rejected_redundant");
    EXPECT_EQ(r.body["completion"], "Taxation");
    EXPECT_EQ(r.body["self_id"], 3);
    for (int n = 0; n < 5; ++n) {
        // k = 2 from the two remaining themes, always
        const auto s = h->sample("r1");
        EXPECT_NE(s["id_1"], 3);
        EXPECT_NE(s["id_2"], 3);
    }
    auto p = ratings_for(h->sample("r1"), 2);
    p["self_id"] = "3";
    p["self_r"] = "4";
    h->update("r1", p);
    EXPECT_EQ(h->bank().item(ItemId{3})->stats.n, 1);
}

TEST(Service, ConfigFreezesOnceFielding) {
    Harness h;
    EXPECT_EQ(h->put_config({{"k_dynamic", 3}})["k_dynamic"], 3);
    EXPECT_EQ(status_of([&] { h->put_config({{"bogus", 1}}); }), 400);
    EXPECT_EQ(status_of([&] { h->put_config({{"floor", 0.5}}); }), 400);
    h->seed(kSeeds);
    h->sample("r1");
    EXPECT_TRUE(h->get_config()["frozen"]);
    EXPECT_EQ(status_of([&] { h->put_config({{"k_dynamic", 2}}); }), 409);
    EXPECT_EQ(h->put_config({{"moderation", "human_queue"}})["moderation"], "human_queue");
    EXPECT_EQ(h->put_config({{"prompts", {{"claim_filter", "Is this a claim? {text}"}}}})["prompts"]["claim_filter"],
              "Is this a claim? {text}");
    EXPECT_EQ(status_of([&] { h->put_config({{"prompts", {{"claim_filter", "Claim? {input}"}}}}); }), 400);
}

TEST(Service, EstimatesMatchTheEstimator) {
    SurveyConfig c;
    c.subgroup_tags = {"party"};
    Harness h(c);
    h->seed(kSeeds);
    for (int i = 0; i < 30; ++i) {
        const auto r = "r" + std::to_string(i);
        auto p = ratings_for(h->sample(r), 1 + i % 4);
        p["party"] = i % 2 ? "R" : "D";
        h->update(r, p);
    }
    const auto direct = estimate::item_estimates(h->bank().events(), estimate::WeightMode::exclude_self, 1);
    const auto out = std::get<json>(h->estimates({}));
    ASSERT_EQ(out["estimates"].size(), direct.size());
    for (std::size_t i = 0; i < direct.size(); ++i) {
        EXPECT_EQ(out["estimates"][i]["ipw_mean"].get<double>(), direct[i].ipw_mean);
    }
    const auto groups = std::get<json>(h->estimates({{"tag", "party"}, {"group_a", "D"}, {"group_b", "R"}}));
    EXPECT_EQ(groups["contrasts"].size(), 5u);
    EXPECT_EQ(status_of([&] { h->estimates({{"tag", "age"}}); }), 400);
    const auto doc = std::get<Document>(h->estimates({{"format", "csv"}}));
    EXPECT_EQ(doc.body.rfind("item_id,item_text,subgroup", 0), 0u);
}

TEST(Service, StatePersistsAcrossRestarts) {
    const auto store = temp_store("persist");
    json first;
    {
        SurveyConfig c;
        c.k_dynamic = 3;
        Harness h(c, store.string());
        h->seed(kSeeds);
        first = h->sample("r1");
        h->input("r2", "The 2020 election was stolen by the Democrats.");
    }
    Harness h(SurveyConfig{}, store.string());  // stored config wins
    EXPECT_EQ(h->config().k_dynamic, 3u);
    EXPECT_EQ(h->sample("r1"), first);
    EXPECT_EQ(h->input("r2", "The 2020 election was stolen by the Democrats.").body["self_id"], 6);
    EXPECT_EQ(h->update("r1", ratings_for(first, 3))["events"], 3);
}

TEST(Service, ConcurrentRespondents) {
    Harness h;
    h->seed(kSeeds);
    std::vector<std::thread> threads;
    for (int t = 0; t < 4; ++t) {
        threads.emplace_back([&, t] {
            for (int i = 0; i < 10; ++i) {
                const auto r = "t" + std::to_string(t) + "_" + std::to_string(i);
                h->update(r, ratings_for(h->sample(r), 1 + (i % 4)));
            }
        });
    }
    for (auto& t : threads) t.join();
    EXPECT_EQ(h->bank().event_count(), 160u);
    const auto replayed = bank::replay_stats(h->bank().events(), h->config().scale);
    for (const auto& item : h->bank().items()) EXPECT_EQ(replayed.at(item.id), item.stats);
}

// -- over HTTP ---------------------------------------------------------------

namespace {

struct Server {
    Harness harness;
    httplib::Server server;
    std::thread thread;
    int port = 0;

    explicit Server(ServerOptions options = {}, SurveyConfig config = {}) : harness(config) {
        bind_routes(server, *harness.service, options);
        port = server.bind_to_any_port("127.0.0.1");
        thread = std::thread([this] { server.listen_after_bind(); });
        server.wait_until_ready();
    }
    ~Server() {
        server.stop();
        thread.join();
    }
    httplib::Client client() const { return httplib::Client("127.0.0.1", port); }
};

}  // namespace

TEST(Http, ProtocolOverQueryStrings) {
    Server s;
    auto c = s.client();
    auto res = c.Post("/seed", json{{"items", kSeeds}}.dump(), "application/json");
    ASSERT_TRUE(res);
    EXPECT_EQ(res->status, 201);

    res = c.Get("/sample?respondent=r1");
    ASSERT_TRUE(res);
    ASSERT_EQ(res->status, 200);
    const auto sample = json::parse(res->body);

    httplib::Params form;
    for (const auto& [k, v] : ratings_for(sample, 3)) form.emplace(k, v);
    res = c.Post("/update", form);
    ASSERT_TRUE(res);
    EXPECT_EQ(res->status, 200);
    res = c.Post("/update", form);
    EXPECT_EQ(res->status, 409);
    EXPECT_EQ(json::parse(res->body)["error"], "InvalidTransition");

    res = c.Get("/update?respondent=r1&q_1=x");
    EXPECT_EQ(res->status, 409);  // already updated wins over malformed
    res = c.Get("/update?respondent=r2&q_1=1&r_1=2");
    EXPECT_EQ(res->status, 422);

    res = c.Get("/input?respondent=r3&text=" + httplib::detail::encode_url(std::string(2001, 'a')));
    EXPECT_EQ(res->status, 413);
    res = c.Get("/healthz");
    EXPECT_EQ(json::parse(res->body)["status"], "ok");
    EXPECT_EQ(json::parse(res->body)["events"], 4);
}

TEST(Http, ParkedInputIs503) {
    Server s;
    s.harness->seed(kSeeds);
    s.harness.backend->set_outage("complete", true);
    auto res = s.client().Post("/input", httplib::Params{{"respondent", "r1"}, {"text", "Something about Ohio happened."}});
    ASSERT_TRUE(res);
    EXPECT_EQ(res->status, 503);
    EXPECT_EQ(json::parse(res->body)["status"], "parked");
}

TEST(Http, DashboardTokenGuardsResearcherEndpoints) {
    ServerOptions o;
    o.dashboard_token = "s3cret";
    const auto ui = std::filesystem::temp_directory_path() / "csas_gateway_ui";
    std::filesystem::create_directories(ui);
    std::ofstream(ui / "index.html") << "<html>dashboard</html>";
    o.ui_dir = ui.string();
    Server s(o);
    auto c = s.client();
    EXPECT_EQ(c.Get("/config")->status, 401);
    EXPECT_EQ(c.Get("/bank")->status, 401);
    EXPECT_EQ(c.Get("/input?text=hello&dry_run=1")->status, 401);
    EXPECT_EQ(c.Get("/healthz")->status, 200);
    httplib::Headers auth{{"X-CSAS-Token", "s3cret"}};
    EXPECT_EQ(c.Get("/config", auth)->status, 200);
    auto res = c.Put("/config", auth, R"({"k_dynamic": 2})", "application/json");
    EXPECT_EQ(res->status, 200);
    res = c.Put("/config", auth, "{not json", "application/json");
    EXPECT_EQ(res->status, 400);
    res = c.Get("/ui/index.html");
    ASSERT_TRUE(res);
    EXPECT_EQ(res->status, 200);
    EXPECT_EQ(res->body, "<html>dashboard</html>");
    res = c.Get("/estimates?format=plotdata", auth);
    EXPECT_EQ(res->status, 404);  // nothing rated yet: empty export
}
