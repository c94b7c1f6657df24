#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "sentrygate/bot_detector.hpp"

using namespace sentrygate;
using namespace sentrygate::testing;

TEST(ClientHistory, WindowCountersMatchLinearRecount) {
    std::mt19937_64 rng(99);
    const TimestampMs window = 60 * kSecondMs;
    ClientHistory h(window);
    std::vector<BotEvent> all;
    TimestampMs ts = 0;
    for (int i = 0; i < 10000; ++i) {
        ts += static_cast<TimestampMs>(rng() % 3000);
        BotEvent e{ts, "/p" + std::to_string(rng() % 12), 0};
        h.record(e);
        all.push_back(e);
        int status = rng() % 5 == 0 ? 404 : 200;
        h.complete(status);
        all.back().status = status;
        auto want = oracle_recount(all, ts, window);
        ASSERT_EQ(h.total_in_window(), want.total) << i;
        ASSERT_EQ(h.error_404_in_window(), want.errors) << i;
        ASSERT_EQ(h.distinct_templates_in_window(), want.templates) << i;
    }
}

TEST(ClientHistory, CompleteFillsMostRecentPending) {
    ClientHistory h;
    h.record({1, "/a", 0});
    h.record({2, "/b", 0});
    h.complete(404);
    EXPECT_EQ(h.events().back().status, 404);
    EXPECT_EQ(h.events().front().status, 0);
    h.complete(200);
    EXPECT_EQ(h.events().front().status, 200);
    EXPECT_EQ(h.error_404_in_window(), 1u);
}

TEST(Stage3, InsufficientHistoryNeverFlags) {
    BotBaseline b;
    b.rate_mean = 0.0;
    b.rate_std = 0.001;
    ClientHistory h;
    for (int i = 0; i < 4; ++i) h.record({i, "/", 200});
    auto s = stage3_behavior(h, b, 4);
    EXPECT_TRUE(s.insufficient_history);
    EXPECT_FALSE(s.is_bot);
}

TEST(Stage3, ConditionsAndConfidence) {
    BotBaseline b;
    b.rate_mean = 0.1;
    b.rate_std = 0.05;  // rate threshold 0.25/s = 15 per minute
    b.max_burst = 30;
    ClientHistory h;
    for (int i = 0; i < 10; ++i) h.record({i * 1000, "/", 200});
    EXPECT_FALSE(stage3_behavior(h, b, 9000).is_bot);

    for (int i = 10; i < 20; ++i) h.record({i * 1000, "/", 200});
    auto rate_only = stage3_behavior(h, b, 19000);
    EXPECT_TRUE(rate_only.is_bot);
    EXPECT_EQ(rate_only.conditions, 1);
    EXPECT_EQ(rate_only.confidence, Tier::low);

    for (int i = 20; i < 40; ++i) h.record({i * 1000, "/missing", 404});
    auto both = stage3_behavior(h, b, 39000);
    // Rate and burst hold; an error ratio of exactly 0.5 does not exceed the threshold.
    EXPECT_EQ(both.conditions, 2);
    EXPECT_EQ(both.confidence, Tier::high);

    h.record({39500, "/missing", 404});
    h.complete(404);
    EXPECT_EQ(stage3_behavior(h, b, 39500).conditions, 3);
}

TEST(Stage3, ErrorRatioNeedsMinimumEvents) {
    BotBaseline b;
    b.rate_mean = 10;
    b.rate_std = 1;
    b.max_burst = 1000;
    ClientHistory h;
    for (int i = 0; i < 19; ++i) h.record({i, "/x", 404});
    EXPECT_FALSE(stage3_behavior(h, b, 19).is_bot);
    h.record({19, "/x", 404});
    auto s = stage3_behavior(h, b, 19);
    EXPECT_TRUE(s.is_bot);
    EXPECT_EQ(s.conditions, 1);
}

TEST(Training, BaselineFromPerIpCounts) {
    std::vector<BotTrainingEvent> ev;
    for (int i = 0; i < 6; ++i) ev.push_back({"a", i * 10 * kSecondMs, 200});
    ev.push_back({"b", 0, 200});
    auto b = train_bot_baseline(ev);
    // Running counts: a -> 1..6, b -> 1.
    std::vector<double> counts = {1, 2, 3, 4, 5, 6, 1};
    double mean = 0;
    for (double c : counts) mean += c / 60.0;
    mean /= counts.size();
    double var = 0;
    for (double c : counts) var += (c / 60.0 - mean) * (c / 60.0 - mean);
    var /= counts.size();
    EXPECT_NEAR(b.rate_mean, mean, 1e-12);
    EXPECT_NEAR(b.rate_std, std::sqrt(var), 1e-12);
    EXPECT_DOUBLE_EQ(b.max_burst, 9.0);
    EXPECT_EQ(b.training_samples, 7u);

    auto empty = train_bot_baseline({});
    EXPECT_EQ(empty.training_samples, 0u);
    EXPECT_DOUBLE_EQ(empty.rate_mean, BotBaseline{}.rate_mean);
}

TEST(Lists, GoodBadAndOverlap) {
    std::vector<std::string> good = {"66.249.66.", "", "8.8.8.8"};
    std::vector<std::string> bad = {"198.51.100.66", ""};
    std::vector<std::string> agents = {"SQLMap", ""};
    auto lists = BotLists::from_lines(good, bad, agents);
    EXPECT_EQ(lists.bad_agents.size(), 1u);
    EXPECT_TRUE(stage1_good_bot({"66.249.66.10", {}, {}, {}}, lists));
    EXPECT_TRUE(stage1_good_bot({"8.8.8.8", {}, {}, {}}, lists));
    EXPECT_FALSE(stage1_good_bot({"8.8.8.9", {}, {}, {}}, lists));
    EXPECT_TRUE(stage2_bad_bot({"198.51.100.66", {}, {}, {}}, lists));
    EXPECT_TRUE(stage2_bad_bot({"1.1.1.1", std::string("sqlmap/1.7"), {}, {}}, lists));
    EXPECT_FALSE(stage2_bad_bot({"1.1.1.1", std::string("Mozilla/5.0"), {}, {}}, lists));

    std::vector<std::string> overlap = {"66.249.66.1"};
    EXPECT_THROW(BotLists::from_lines(good, overlap, agents), ConfigError);
}

TEST(Lists, ReadLinesStripsComments) {
    auto lines = read_list_lines("# header\n 1.2.3.4 \n\n5.6.7.8 # trailing\n");
    EXPECT_EQ(lines, (std::vector<std::string>{"1.2.3.4", "5.6.7.8"}));
}

TEST(HistoryStore, SweepDropsIdleClients) {
    HistoryStore store;
    store.record("a", {0, "/", 0});
    store.record("b", {50 * kSecondMs, "/", 0});
    store.complete("a", 200);
    store.sweep(100 * kSecondMs);
    EXPECT_EQ(store.size(), 1u);
    store.sweep(200 * kSecondMs);
    EXPECT_EQ(store.size(), 0u);
}
