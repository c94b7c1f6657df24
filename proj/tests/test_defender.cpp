#include <gtest/gtest.h>

#include "sentrygate/defender.hpp"
#include "sentrygate/logger.hpp"
#include "test_util.hpp"

using namespace sentrygate;
using namespace sentrygate::testing;

namespace {

Alert alert(AttackClass c, Tier sev, Tier conf, std::optional<std::string> user = std::nullopt,
            std::optional<std::string> session = std::nullopt, std::string ip = "203.0.113.9") {
    return make_alert(c, sev, conf, 1.0, "test", "scope", "x", ClientIdentity{ip, {}, session, user});
}

CanonicalRequest next_request(const std::string& ip, const std::string& target = "/",
                              std::optional<std::string> session = std::nullopt,
                              std::optional<std::string> user = std::nullopt) {
    HeaderList h;
    if (session) h.emplace_back("Cookie", "SESSIONID=" + *session);
    auto r = canonical("GET", target, h, {}, ip);
    r.identity.username = user;
    return r;
}

}  // namespace

TEST(Select, ShippedExamples) {
    auto p = ResponsePolicy::defaults();
    EXPECT_EQ(select_response(alert(AttackClass::sqli, Tier::high, Tier::high, "alice"), p).kind, ActionKind::block_user);
    EXPECT_EQ(select_response(alert(AttackClass::sqli, Tier::high, Tier::high), p).kind, ActionKind::block_ip);
    auto fmt = select_response(alert(AttackClass::format_violation, Tier::low, Tier::low), p);
    EXPECT_EQ(fmt.kind, ActionKind::log_only);
    EXPECT_FALSE(rejects(fmt.kind));
    auto hijack = select_response(alert(AttackClass::session_hijack, Tier::high, Tier::high, "a", "s"), p);
    EXPECT_EQ(hijack.kind, ActionKind::force_logout);
    EXPECT_TRUE(hijack.notify);
    EXPECT_EQ(select_response(alert(AttackClass::type_violation, Tier::low, Tier::high), p).kind,
              ActionKind::reject_request);
    auto hl = select_response(alert(AttackClass::xss, Tier::high, Tier::low), p);
    EXPECT_EQ(hl.describe(), "reject_request+monitor");
    EXPECT_EQ(select_response(alert(AttackClass::behavior_anomaly, Tier::low, Tier::low), p).kind, ActionKind::monitor);
    EXPECT_EQ(select_response(alert(AttackClass::csrf, Tier::high, Tier::high, "a"), p).kind,
              ActionKind::reject_request);
    EXPECT_EQ(select_response(alert(AttackClass::session_expired, Tier::high, Tier::high), p).kind,
              ActionKind::force_logout);
}

TEST(Select, ExhaustiveOverEveryAlertShape) {
    auto p = ResponsePolicy::defaults();
    std::size_t cases = 0;
    for (auto c : kAllAttackClasses) {
        for (auto sev : {Tier::low, Tier::high}) {
            for (auto conf : {Tier::low, Tier::high}) {
                for (bool authed : {false, true}) {
                    auto a = select_response(alert(c, sev, conf, authed ? std::optional<std::string>("u") : std::nullopt), p);
                    ++cases;
                    EXPECT_TRUE(parse_action_kind(to_string(a.kind)));
                    if (rejects(a.kind)) {
                        EXPECT_GT(a.http_status, 0);
                    } else {
                        EXPECT_EQ(a.http_status, 0);
                    }
                    bool suspension = a.kind == ActionKind::suspend_ip || a.kind == ActionKind::suspend_session ||
                                      a.kind == ActionKind::suspend_service;
                    EXPECT_EQ(a.ttl.has_value(), suspension);
                    if (a.kind == ActionKind::block_user) EXPECT_TRUE(authed);
                }
            }
        }
    }
    EXPECT_EQ(cases, std::size(kAllAttackClasses) * 8);
}

TEST(Select, ConfidenceEscalationIsMonotone) {
    auto p = ResponsePolicy::defaults();
    for (auto c : kAllAttackClasses) {
        for (auto sev : {Tier::low, Tier::high}) {
            for (bool authed : {false, true}) {
                std::optional<std::string> u = authed ? std::optional<std::string>("u") : std::nullopt;
                auto lo = select_response(alert(c, sev, Tier::low, u), p);
                auto hi = select_response(alert(c, sev, Tier::high, u), p);
                EXPECT_GE(hi.strength(), lo.strength()) << to_string(c) << " sev=" << to_string(sev);
            }
        }
    }
}

TEST(Policy, ParseAndConfigErrors) {
    EXPECT_EQ(ActionSpec::parse("suspend_ip:600").ttl, std::optional<TimestampMs>(600 * kSecondMs));
    EXPECT_EQ(ActionSpec::parse("block+notify").describe(), "block+notify");
    EXPECT_THROW(ActionSpec::parse("reject_request:5"), ConfigError);
    EXPECT_THROW(ActionSpec::parse("monitor+block_ip+block_user"), ConfigError);
    EXPECT_THROW(ActionSpec::parse("dance"), ConfigError);
    auto p = ResponsePolicy::from_json(R"({"matrix":{"low/low":"monitor"},"overrides":{"bot":"suspend_ip:60"}})");
    EXPECT_EQ(select_response(alert(AttackClass::xss, Tier::low, Tier::low), p).kind, ActionKind::monitor);
    auto bot = select_response(alert(AttackClass::bot, Tier::low, Tier::low), p);
    EXPECT_EQ(bot.kind, ActionKind::suspend_ip);
    EXPECT_EQ(bot.ttl, std::optional<TimestampMs>(60 * kSecondMs));
    EXPECT_THROW(ResponsePolicy::from_json(R"({"overrides":{"nope":"block"}})"), ConfigError);
    EXPECT_THROW(ResponsePolicy::from_json(R"({"matrix":{"mid/low":"block"}})"), ConfigError);
}

// Every block or suspension is visible to the connection verifier on the
// request that follows it.
TEST(Execute, FeedbackClosure) {
    const TimestampMs now = 1000;
    for (auto kind : kAllActionKinds) {
        BlockList blocks;
        SessionStore sessions;
        DeterministicRandom rng(test_key(1));
        auto s = sessions.create("203.0.113.9", "", 0, rng);
        sessions.update(s.session_id, [](SessionRecord& r) { r.username = "mallory"; });
        Defender d(ResponsePolicy::defaults(), blocks, sessions, nullptr);
        ResponseAction action{kind};
        if (kind == ActionKind::suspend_ip || kind == ActionKind::suspend_session ||
            kind == ActionKind::suspend_service) {
            action.ttl = 600 * kSecondMs;
        }
        auto a = alert(AttackClass::sqli, Tier::high, Tier::high, "mallory", s.session_id);
        auto rec = d.execute(action, a, now, "/admin/7", "/admin/{id}");
        EXPECT_EQ(rec.forwarded, !rejects(kind));

        const TimestampMs next = now + 1;
        switch (kind) {
            case ActionKind::block_ip:
            case ActionKind::suspend_ip:
                EXPECT_TRUE(check_connection(next_request("203.0.113.9"), blocks, next).blocked);
                break;
            case ActionKind::block_user:
                // Same user from a new address and a new session.
                EXPECT_TRUE(check_connection(next_request("198.51.100.1", "/", "fresh", "mallory"), blocks, next).blocked);
                EXPECT_EQ(sessions.lookup(s.session_id).state, SessionState::revoked);
                break;
            case ActionKind::suspend_session:
                EXPECT_TRUE(check_connection(next_request("198.51.100.1", "/", s.session_id), blocks, next).blocked);
                break;
            case ActionKind::suspend_service:
                EXPECT_TRUE(check_connection(next_request("198.51.100.1", "/admin/8"), blocks, next).blocked);
                EXPECT_FALSE(check_connection(next_request("198.51.100.1", "/"), blocks, next).blocked);
                break;
            case ActionKind::force_logout:
                EXPECT_EQ(sessions.lookup(s.session_id).state, SessionState::revoked);
                EXPECT_FALSE(check_connection(next_request("203.0.113.9"), blocks, next).blocked);
                break;
            default:
                EXPECT_EQ(blocks.size(), 0u) << to_string(kind);
        }
        if (kind == ActionKind::suspend_ip) {
            EXPECT_FALSE(check_connection(next_request("203.0.113.9"), blocks, now + 600 * kSecondMs).blocked);
        }
    }
}

TEST(Execute, MonitorEscalatesNextSameClassAlert) {
    BlockList blocks;
    SessionStore sessions;
    DeterministicRandom rng(test_key(2));
    auto s = sessions.create("10.0.0.1", "", 0, rng);
    Defender d(ResponsePolicy::defaults(), blocks, sessions, nullptr);
    auto first = d.respond(alert(AttackClass::behavior_anomaly, Tier::low, Tier::low, "u", s.session_id, "10.0.0.1"),
                           1, "/x", "/x");
    EXPECT_EQ(first.action.kind, ActionKind::monitor);
    EXPECT_TRUE(first.forwarded);
    auto second = d.respond(alert(AttackClass::behavior_anomaly, Tier::low, Tier::low, "u", s.session_id, "10.0.0.1"),
                            2, "/x", "/x");
    ASSERT_TRUE(second.alert);
    EXPECT_EQ(second.alert->confidence, Tier::high);
    EXPECT_EQ(second.action.kind, ActionKind::reject_request);
    // A different class is not escalated.
    auto other = d.respond(alert(AttackClass::format_violation, Tier::low, Tier::low, "u", s.session_id, "10.0.0.1"),
                           3, "/x", "/x");
    EXPECT_EQ(other.action.kind, ActionKind::log_only);
}

TEST(Execute, OneLogRecordPerActionPlusNotify) {
    BlockList blocks;
    SessionStore sessions;
    Logger logger({}, true);
    Defender d(ResponsePolicy::defaults(), blocks, sessions, &logger);
    d.respond(alert(AttackClass::xss, Tier::high, Tier::high), 1, "/s?q=<script>", "/s");
    d.respond(alert(AttackClass::session_hijack, Tier::high, Tier::high), 2, "/", "/");
    d.reject_blocked({"203.0.113.9", {}, {}, {}}, "ip-blocked", 3, "/");
    d.challenge({"203.0.113.9", {}, {}, {}}, 4, "/checkout");
    auto recs = logger.defender_records();
    ASSERT_EQ(recs.size(), 5u);
    EXPECT_EQ(recs[0].requested_url, "/s?q=%3Cscript%3E");
    EXPECT_EQ(recs[2].kind, "notify");
    EXPECT_FALSE(recs[3].attack_class);
    EXPECT_EQ(recs[4].action_kind, "challenge_2f");
}
