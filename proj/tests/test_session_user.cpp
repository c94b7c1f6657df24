#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "sentrygate/session.hpp"
#include "sentrygate/user_verifier.hpp"
#include "test_util.hpp"

using namespace sentrygate;
using namespace sentrygate::testing;

namespace {

const SeverityTable kSev = SeverityTable::defaults();
const SessionLimits kLimits;
constexpr TimestampMs kNow = 10 * kMinuteMs;

SessionRecord session() {
    SessionRecord s;
    s.session_id = "sid";
    s.bound_ip = "192.0.2.1";
    s.bound_user_agent = "UA";
    s.created_at = 0;
    s.last_seen = kNow - kMinuteMs;
    s.csrf_token = "0123456789abcdef0123456789abcdef";
    return s;
}

CanonicalRequest req(std::string method, std::string target, std::string body = {}, std::string ip = "192.0.2.1",
                     std::string ua = "UA") {
    HeaderList h = {{"User-Agent", ua}, {"Cookie", "SESSIONID=sid"}};
    if (!body.empty()) h.emplace_back("Content-Type", "application/x-www-form-urlencoded");
    return canonical(std::move(method), std::move(target), h, std::move(body), std::move(ip));
}

std::optional<AttackClass> stage1(const CanonicalRequest& r, const SessionRecord& s, TimestampMs now = kNow) {
    auto a = verify_stage1(r, s, now, kLimits, kSev);
    if (!a) return std::nullopt;
    return a->attack_class;
}

}  // namespace

TEST(Stage1, PassAndEachRule) {
    auto s = session();
    EXPECT_FALSE(stage1(req("GET", "/"), s));
    EXPECT_FALSE(stage1(req("POST", "/cart/add", "__ips_token=" + s.csrf_token), s));
    EXPECT_EQ(stage1(req("POST", "/cart/add", "item=1"), s), AttackClass::csrf);
    EXPECT_EQ(stage1(req("POST", "/cart/add", "__ips_token=ffffffffffffffffffffffffffffffff"), s), AttackClass::csrf);
    EXPECT_EQ(stage1(req("GET", "/", {}, "198.18.0.77", "curl/8.5.0"), s), AttackClass::session_hijack);
    EXPECT_EQ(stage1(req("GET", "/"), s, s.last_seen + kLimits.idle_timeout + 1), AttackClass::session_expired);
    EXPECT_FALSE(stage1(req("GET", "/"), s, s.last_seen + kLimits.idle_timeout));
    EXPECT_FALSE(verify_stage1(req("POST", "/x", "a=1"), std::nullopt, kNow, kLimits, kSev));
}

TEST(Stage1, HijackConfidenceTracksChangedAttributes) {
    auto s = session();
    auto both = verify_stage1(req("GET", "/", {}, "198.18.0.77", "curl"), s, kNow, kLimits, kSev);
    auto ip_only = verify_stage1(req("GET", "/", {}, "198.18.0.77"), s, kNow, kLimits, kSev);
    auto ua_only = verify_stage1(req("GET", "/", {}, "192.0.2.1", "curl"), s, kNow, kLimits, kSev);
    ASSERT_TRUE(both && ip_only && ua_only);
    EXPECT_EQ(both->confidence, Tier::high);
    EXPECT_EQ(ip_only->confidence, Tier::low);
    EXPECT_EQ(ua_only->confidence, Tier::low);
    EXPECT_EQ(both->severity, Tier::high);
}

TEST(Stage1, RuleOrderBruteForceFirstThenBindingThenIdleThenToken) {
    auto s = session();
    for (int i = 0; i < 6; ++i) s.failed_logins.push_back(kNow - i * kSecondMs);
    auto everything = req("POST", "/login", "u=a", "198.18.0.77", "curl");
    TimestampMs late = s.last_seen + kLimits.idle_timeout + 1;
    EXPECT_EQ(stage1(everything, s, kNow), AttackClass::brute_force);
    s.failed_logins.clear();
    EXPECT_EQ(stage1(everything, s, late), AttackClass::session_hijack);
    EXPECT_EQ(stage1(req("POST", "/login", "u=a"), s, late), AttackClass::session_expired);
    EXPECT_EQ(stage1(req("POST", "/login", "u=a"), s, kNow), AttackClass::csrf);
}

TEST(Stage1, BruteForceWindowAndThreshold) {
    auto s = session();
    for (int i = 0; i < 5; ++i) s.failed_logins.push_back(kNow - i * kSecondMs);
    EXPECT_FALSE(stage1(req("GET", "/"), s));  // 5 is the limit, not above it
    s.failed_logins.push_back(kNow - 11 * kMinuteMs);
    EXPECT_FALSE(stage1(req("GET", "/"), s));  // outside the 10 minute window
    s.failed_logins.push_back(kNow);
    EXPECT_EQ(stage1(req("GET", "/"), s), AttackClass::brute_force);
}

TEST(Stage1, UnknownSessionIsHijackSuspect) {
    auto a = unknown_session_alert(req("GET", "/"), kSev);
    EXPECT_EQ(a.attack_class, AttackClass::session_hijack);
    EXPECT_EQ(a.confidence, Tier::low);
}

TEST(SessionStore, LifecycleAndRevocation) {
    SessionStore store;
    DeterministicRandom rng(test_key(2));
    auto a = store.create("1.1.1.1", "ua", 100, rng);
    auto b = store.create("1.1.1.2", "ua", 100, rng);
    EXPECT_EQ(store.lookup(a.session_id).state, SessionState::active);
    EXPECT_EQ(store.lookup(std::nullopt).state, SessionState::absent);
    EXPECT_EQ(store.lookup(std::string("nope")).state, SessionState::unknown);
    EXPECT_TRUE(store.update(a.session_id, [](SessionRecord& r) { r.username = "alice"; }));
    EXPECT_TRUE(store.update(b.session_id, [](SessionRecord& r) { r.username = "alice"; }));
    auto revoked = store.revoke_user("alice");
    EXPECT_EQ(revoked.size(), 2u);
    EXPECT_EQ(store.lookup(a.session_id).state, SessionState::revoked);
    EXPECT_FALSE(store.update(a.session_id, [](SessionRecord&) {}));
    EXPECT_EQ(store.live_count(), 0u);
}

// Oracle: Laplace-smoothed bigram/unigram probabilities computed by hand.
TEST(UserProfile, SmoothedProbabilitiesByHand) {
    UserProfile p;
    p.observe(std::nullopt, "A", 0);
    p.observe(std::string("A"), "B", 0);
    p.observe(std::string("B"), "A", 0);
    p.observe(std::string("A"), "B", 0);
    p.observe(std::string("B"), "C", 0);
    // Vocabulary {A, B, C} plus one unseen slot: 4 outcomes.
    EXPECT_DOUBLE_EQ(p.probability(std::string("A"), "B"), (2.0 + 1) / (2 + 4));
    EXPECT_DOUBLE_EQ(p.probability(std::string("A"), "C"), 1.0 / 6);
    EXPECT_DOUBLE_EQ(p.probability(std::string("B"), "C"), 2.0 / 6);
    EXPECT_DOUBLE_EQ(p.probability(std::string("C"), "A"), (2.0 + 1) / (5 + 4));  // no outgoing: unigram
    EXPECT_DOUBLE_EQ(p.probability(std::nullopt, "Z"), 1.0 / 9);
    for (auto prev : {std::optional<std::string>{}, std::optional<std::string>{"A"}, std::optional<std::string>{"Q"}}) {
        for (auto a : {"A", "B", "C", "Z"}) EXPECT_GT(p.probability(prev, a), 0.0);
    }

    std::vector<std::pair<std::optional<std::string>, std::string>> train = {
        {std::nullopt, "A"}, {"A", "B"}, {"B", "A"}, {"A", "B"}, {"B", "C"}};
    p.finalize(train);
    double h = 0;
    for (double c : {2.0, 2.0, 1.0, 0.0}) {
        double q = (c + 1) / 9;
        h -= q * std::log(q);
    }
    EXPECT_NEAR(p.entropy(), h, 1e-12);
    double worst = 0;
    for (auto& [prev, a] : train) worst = std::max(worst, -std::log(p.probability(prev, a)) / h);
    EXPECT_NEAR(p.anomaly_threshold(), worst + std::log(2.0) / h, 1e-12);
    EXPECT_NEAR(p.score(std::nullopt, "Z"), -std::log(1.0 / 9) / h, 1e-12);
}

TEST(UserProfile, JsonRoundTrip) {
    std::vector<UserActionEvent> ev = {{"u", "s", "GET /", 0}, {"u", "s", "GET /x", 3600 * 1000}};
    auto p = train_user_profiles(ev).at("u");
    auto q = UserProfile::from_json(p.to_json());
    EXPECT_EQ(q.to_json(), p.to_json());
    EXPECT_EQ(q.hour_histogram()[1], 1u);
    EXPECT_THROW(UserProfile::from_json("{}"), ConfigError);
}

TEST(Training, PairsWithinSessionOnlyAndOnlineMatchesBatch) {
    std::mt19937_64 rng(7);
    const std::vector<std::string> actions = {"GET /", "GET /products", "GET /product/{id}", "POST /cart/add"};
    std::vector<UserActionEvent> ev;
    for (int i = 0; i < 300; ++i) {
        ev.push_back({"u" + std::to_string(rng() % 2), "s" + std::to_string(rng() % 5),
                      actions[rng() % actions.size()], i * 1000});
    }
    auto batch = train_user_profiles(ev);

    std::map<std::string, UserProfile> online;
    std::map<std::string, std::string> last;
    for (const auto& e : ev) {
        std::optional<std::string> prev;
        if (last.contains(e.session_id)) prev = last[e.session_id];
        online[e.username].observe(prev, e.action, e.ts);
        last[e.session_id] = e.action;
    }
    for (auto& [user, p] : batch) {
        EXPECT_EQ(p.action_freq(), online[user].action_freq());
        EXPECT_EQ(p.total_actions(), online[user].total_actions());
        for (auto& a : actions) {
            for (auto& b : actions) EXPECT_EQ(p.transition_count(a, b), online[user].transition_count(a, b));
        }
    }
    std::vector<UserActionEvent> two_sessions = {{"u", "s1", "A", 0}, {"u", "s2", "B", 1}, {"u", "s1", "C", 2}};
    auto p = train_user_profiles(two_sessions).at("u");
    EXPECT_EQ(p.transition_count("A", "B"), 0u);
    EXPECT_EQ(p.transition_count("A", "C"), 1u);
    EXPECT_TRUE(train_user_profiles({}).empty());
}

TEST(Stage2, TrainingActionsPassAndForeignActionsAlert) {
    std::vector<UserActionEvent> ev;
    const std::vector<std::string> shopper = {"GET /", "GET /products", "GET /product/{id}", "POST /cart/add"};
    const std::vector<std::string> admin = {"GET /admin/users", "POST /admin/users", "GET /reports"};
    for (int s = 0; s < 40; ++s) {
        for (std::size_t i = 0; i < shopper.size(); ++i) ev.push_back({"alice", "a" + std::to_string(s), shopper[i], 0});
        for (std::size_t i = 0; i < admin.size(); ++i) ev.push_back({"olivia", "o" + std::to_string(s), admin[i], 0});
    }
    auto profiles = train_user_profiles(ev);
    const auto& alice = profiles.at("alice");
    const auto& olivia = profiles.at("olivia");

    // Every training observation scores at or under its own threshold.
    std::map<std::string, std::string> last;
    for (const auto& e : ev) {
        std::optional<std::string> prev;
        if (last.contains(e.session_id)) prev = last[e.session_id];
        const auto& p = profiles.at(e.username);
        EXPECT_LE(p.score(prev, e.action), p.anomaly_threshold());
        last[e.session_id] = e.action;
    }

    auto r = verify_stage2(canonical("GET", "/products"), &alice, std::string("GET /"), kSev);
    EXPECT_FALSE(r.alert);
    auto cross = verify_stage2(canonical("GET", "/admin/users"), &alice, std::string("GET /products"), kSev);
    ASSERT_TRUE(cross.alert);
    EXPECT_EQ(cross.alert->attack_class, AttackClass::behavior_anomaly);
    EXPECT_NEAR(cross.score, -std::log(1.0 / (40 + 5)) / alice.entropy(), 1e-12);
    EXPECT_TRUE(verify_stage2(canonical("GET", "/product/3"), &olivia, std::string("GET /admin/users"), kSev).alert);

    auto untrained = verify_stage2(canonical("GET", "/"), nullptr, std::nullopt, kSev);
    EXPECT_TRUE(untrained.untrained);
    EXPECT_FALSE(untrained.alert);
}
