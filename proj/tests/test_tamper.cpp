#include <gtest/gtest.h>

#include <random>

#include "ct_checklist.hpp"
#include "sentrygate/data_validator.hpp"
#include "sentrygate/mark_ledger.hpp"
#include "sentrygate/response_controller.hpp"
#include "test_util.hpp"

using namespace sentrygate;
using namespace sentrygate::testing;

namespace {
const SeverityTable kSev = SeverityTable::defaults();
const ClientIdentity kWho{"192.0.2.1", {}, {}, {}};
}  // namespace

TEST(Tamper, RandomMutationsAlwaysAlertRoundTripsNever) {
    std::mt19937_64 rng(4242);
    MarkLedger ledger(test_key(9));
    int false_negatives = 0;
    int false_positives = 0;
    for (int i = 0; i < 1000; ++i) {
        std::string session = "s" + std::to_string(rng() % 50);
        std::string name = "p" + std::to_string(rng() % 7);
        std::string value = random_bytes(rng, 40);
        if (value.empty()) value = "0";
        ledger.mark(session, name, value);

        if (validate_application(value, name, ledger, session, name, kWho, kSev)) ++false_positives;

        std::string mutated = value;
        auto pos = rng() % mutated.size();
        mutated[pos] = static_cast<char>(mutated[pos] ^ static_cast<char>(1 + rng() % 255));
        if (!validate_application(mutated, name, ledger, session, name, kWho, kSev)) ++false_negatives;
    }
    EXPECT_EQ(false_negatives, 0);
    EXPECT_EQ(false_positives, 0);
}

TEST(Tamper, LatestMarkWins) {
    MarkLedger ledger(test_key(1));
    ledger.mark("s", "order", "100");
    ledger.mark("s", "order", "200");
    EXPECT_EQ(ledger.verify("s", "order", "200"), MarkLedger::Check::match);
    EXPECT_EQ(ledger.verify("s", "order", "100"), MarkLedger::Check::mismatch);
    EXPECT_EQ(ledger.size(), 1u);
    ledger.drop_session("s");
    EXPECT_EQ(ledger.verify("s", "order", "200"), MarkLedger::Check::no_entry);
}

TEST(Tamper, DigestKeyedBySessionNameAndSecret) {
    MarkLedger a(test_key(1));
    MarkLedger b(test_key(2));
    EXPECT_NE(a.digest("s", "n", "v"), b.digest("s", "n", "v"));
    EXPECT_NE(a.digest("s", "n", "v"), a.digest("t", "n", "v"));
    EXPECT_NE(a.digest("s", "n", "v"), a.digest("s", "m", "v"));
    // Field boundaries are unambiguous.
    EXPECT_NE(a.digest("ab", "c", "v"), a.digest("a", "bc", "v"));
}

TEST(Tamper, MarkFromResponseThenValidate) {
    HttpResponse resp;
    resp.headers = {{"Content-Type", "text/html"}};
    resp.body = R"(<form method="post" action="/cart/add"><input type="hidden" name="Price" value="12.3">)"
                R"(<input type="hidden" name="item" value="4"><input name="qty" value="1"></form>)";
    MarkLedger ledger(test_key(5));
    auto names = mark(collect_server_values(resp), {"Price"}, ledger, "sess");
    EXPECT_EQ(names, std::vector<std::string>{"Price"});
    std::optional<std::string> sess = "sess";
    EXPECT_FALSE(validate_application("12.3", "Price", ledger, sess, "Price", kWho, kSev));
    EXPECT_TRUE(validate_application("0.1", "Price", ledger, sess, "Price", kWho, kSev));
    EXPECT_EQ(ledger.verify("sess", "item", "4"), MarkLedger::Check::no_entry);
}

TEST(Sealing, RoundTripAndTamper) {
    DeterministicRandom rng(test_key(3));
    auto key = test_key(4);
    auto sealed = seal_value("theme-light", "prefs", key, rng);
    EXPECT_TRUE(sealed.starts_with("s1."));
    EXPECT_EQ(unseal_value(sealed, "prefs", key), std::optional<std::string>("theme-light"));
    EXPECT_FALSE(unseal_value(sealed, "other", key));
    EXPECT_FALSE(unseal_value(sealed, "prefs", test_key(5)));
    EXPECT_NE(seal_value("theme-light", "prefs", key, rng), sealed);  // fresh nonce

    for (std::size_t i = 3; i < sealed.size(); ++i) {
        std::string bad = sealed;
        bad[i] = bad[i] == 'A' ? 'B' : 'A';
        EXPECT_FALSE(unseal_value(bad, "prefs", key)) << i;
    }
    EXPECT_FALSE(unseal_value("theme-light", "prefs", key));
}

TEST(Sealing, CookiesInResponseAndRequest) {
    DeterministicRandom rng(test_key(6));
    auto key = test_key(7);
    HttpResponse resp;
    resp.headers = {{"Set-Cookie", "prefs=dark; Path=/"}, {"Set-Cookie", "other=plain"}};
    auto sealed = seal_cookies(resp, {"prefs"}, key, rng);
    EXPECT_EQ(sealed, std::vector<std::string>{"prefs"});
    auto cookies = find_headers(resp.headers, "set-cookie");
    auto prefs = parse_set_cookie(cookies[0]);
    ASSERT_TRUE(prefs);
    EXPECT_NE(prefs->value, "dark");
    EXPECT_EQ(prefs->attributes.find("Path=/") != std::string::npos, true);
    EXPECT_EQ(cookies[1], "other=plain");

    RawRequest req = raw_request("GET", "/", {{"Cookie", "prefs=" + prefs->value + "; other=plain"}});
    EXPECT_TRUE(unseal_cookies(req, {"prefs"}, key).empty());
    auto restored = parse_cookie_header(*find_header(req.headers, "cookie"));
    EXPECT_EQ(restored, (std::vector<std::pair<std::string, std::string>>{{"prefs", "dark"}, {"other", "plain"}}));

    RawRequest forged = raw_request("GET", "/", {{"Cookie", "prefs=dark"}});
    EXPECT_EQ(unseal_cookies(forged, {"prefs"}, key), std::vector<std::string>{"prefs"});
    EXPECT_EQ(*find_header(forged.headers, "cookie"), "prefs=dark");
}

TEST(ConstantTime, PrimitiveSemantics) {
    std::array<std::uint8_t, 4> a{1, 2, 3, 4};
    std::array<std::uint8_t, 4> b{1, 2, 3, 5};
    std::array<std::uint8_t, 3> c{1, 2, 3};
    EXPECT_TRUE(constant_time_equal(a, a));
    EXPECT_FALSE(constant_time_equal(a, b));
    EXPECT_FALSE(constant_time_equal(a, c));
}

TEST(ConstantTime, CodeInspectionChecklist) {
    for (const auto& f : run_ct_checklist()) EXPECT_TRUE(f.ok) << f.item << ": " << f.detail;
}
