#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "sentrygate/data_validator.hpp"
#include "sentrygate/mark_ledger.hpp"
#include "test_util.hpp"

using namespace sentrygate;
using namespace sentrygate::testing;

namespace {

const SeverityTable kSev = SeverityTable::defaults();
const ClientIdentity kWho{"192.0.2.1", {}, {}, {}};

ParamValue pv(std::string_view s) { return canonicalize(s); }

std::string random_date(std::mt19937_64& rng) {
    static const char* months[] = {"Jan", "Feb", "Mar", "Apr", "May", "Jun",
                                   "Jul", "Aug", "Sep", "Oct", "Nov", "Dec"};
    return std::string(months[rng() % 12]) + " " + std::to_string(1 + rng() % 28) + ", " +
           std::to_string(1990 + rng() % 35) + " " + std::to_string(1 + rng() % 12) + ":" +
           (rng() % 2 ? "1" : "4") + std::to_string(rng() % 10) + (rng() % 2 ? " PM" : " AM");
}

std::string random_timestamp(std::mt19937_64& rng) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02dZ", static_cast<int>(2000 + rng() % 30),
                  static_cast<int>(1 + rng() % 12), static_cast<int>(1 + rng() % 28),
                  static_cast<int>(rng() % 24), static_cast<int>(rng() % 60), static_cast<int>(rng() % 60));
    return buf;
}

}  // namespace

TEST(Signatures, StarterPackExamples) {
    auto sigs = SignatureSet::starter();
    EXPECT_FALSE(validate_text(pv("John Smith"), sigs, "q", kWho));
    auto a = validate_text(pv("' OR '1'='1"), sigs, "q", kWho);
    ASSERT_TRUE(a);
    EXPECT_EQ(a->attack_class, AttackClass::sqli);
    EXPECT_EQ(a->confidence, Tier::high);
    auto b = validate_text(pv("%27%20OR%20%271%27=%271"), sigs, "q", kWho);
    ASSERT_TRUE(b);
    EXPECT_EQ(b->attack_class, AttackClass::sqli);
    auto x = validate_text(pv("%253Cscript%253Ealert(1)%253C/script%253E"), sigs, "q", kWho);
    ASSERT_TRUE(x);
    EXPECT_EQ(x->attack_class, AttackClass::xss);
    auto t = validate_text(pv("../../etc/passwd"), sigs, "f", kWho);
    ASSERT_TRUE(t);
    EXPECT_EQ(t->attack_class, AttackClass::injection_other);
    EXPECT_FALSE(validate_text(pv("O'Brien and sons"), sigs, "q", kWho));
}

TEST(Signatures, VerdictStableUnderRecanonicalization) {
    auto sigs = SignatureSet::starter();
    std::mt19937_64 rng(3);
    for (int i = 0; i < 3000; ++i) {
        auto s = random_escapey(rng, 30);
        auto once = canonicalize(s);
        if (canonicalize(s, kDefaultDecodeCap + 1).decode_rounds > kDefaultDecodeCap) continue;
        auto again = canonicalize(once.canonical);
        EXPECT_EQ(validate_text(once, sigs, "q", kWho).has_value(), validate_text(again, sigs, "q", kWho).has_value())
            << s;
    }
}

TEST(Signatures, DuplicateIdOrBadPatternRejected) {
    SignatureSet s;
    s.add("a", "x", AttackClass::sqli, Tier::high);
    EXPECT_THROW(s.add("a", "y", AttackClass::sqli, Tier::high), ConfigError);
    EXPECT_THROW(s.add("b", "(", AttackClass::sqli, Tier::high), ConfigError);
    EXPECT_THROW(SignatureSet::from_json("{"), ConfigError);
    auto j = SignatureSet::from_json(R"([{"id":"r","pattern":"evil","class":"xss","severity":"low"}])");
    ASSERT_EQ(j.rules().size(), 1u);
    EXPECT_EQ(j.rules()[0].severity, Tier::low);
}

TEST(Numeric, Examples) {
    EXPECT_FALSE(validate_numeric(pv("1254"), "id", kWho, kSev));
    EXPECT_FALSE(validate_numeric(pv("-3.25"), "id", kWho, kSev));
    auto a = validate_numeric(pv("12x4"), "id", kWho, kSev);
    ASSERT_TRUE(a);
    EXPECT_EQ(a->attack_class, AttackClass::type_violation);
    EXPECT_TRUE(validate_numeric(pv(""), "id", kWho, kSev));
    EXPECT_TRUE(validate_numeric(pv("1."), "id", kWho, kSev));
    EXPECT_TRUE(validate_numeric(pv(".5"), "id", kWho, kSev));
    EXPECT_TRUE(validate_numeric(pv("1 OR 1=1"), "id", kWho, kSev));
}

TEST(Enumerated, MembershipExamples) {
    EnumModel m{{"male", "female", "other"}, 100};
    EXPECT_FALSE(validate_enumerated(pv("other"), m, "g", kWho, kSev));
    auto a = validate_enumerated(pv("admin'--"), m, "g", kWho, kSev);
    ASSERT_TRUE(a);
    EXPECT_EQ(a->attack_class, AttackClass::enum_violation);
    EXPECT_TRUE(validate_enumerated(pv(""), m, "g", kWho, kSev));
}

TEST(Enumerated, TrainingExamples) {
    std::vector<std::string> few;
    for (int i = 0; i < 600; ++i) few.push_back(std::vector<std::string>{"a", "b", "c"}[i % 3]);
    auto m = train_enumerated(few);
    ASSERT_TRUE(m);
    EXPECT_EQ(m->allowed.size(), 3u);

    std::vector<std::string> many;
    for (int i = 0; i < 600; ++i) many.push_back(std::to_string(i % 580));
    EXPECT_FALSE(train_enumerated(many));

    auto late = few;
    late[590] = "late";
    EXPECT_FALSE(train_enumerated(late));

    EXPECT_THROW(train_enumerated(std::vector<std::string>{"x"}), InsufficientSamples);
}

// Oracle: one distinct scan plus the index at which each value first appears.
TEST(Enumerated, DecisionsMatchDistinctScan) {
    std::mt19937_64 rng(17);
    int enumerated = 0;
    for (int scope = 0; scope < 100; ++scope) {
        std::size_t n = 50 + rng() % 950;
        std::size_t alphabet = 1 + rng() % (scope % 2 ? 15 : 200);
        std::size_t late_start = rng() % 3 == 0 ? n - rng() % (n / 2) : n;
        std::vector<std::string> samples;
        for (std::size_t i = 0; i < n; ++i) {
            std::size_t k = rng() % alphabet;
            if (i >= late_start && rng() % 10 == 0) k += alphabet;
            samples.push_back("v" + std::to_string(k));
        }
        std::size_t distinct = 0;
        bool want = oracle_enumerated(samples, &distinct);
        auto got = train_enumerated(samples);
        ASSERT_EQ(got.has_value(), want) << "scope " << scope;
        if (got) {
            ++enumerated;
            EXPECT_EQ(got->allowed.size(), distinct);
            for (const auto& s : samples) EXPECT_FALSE(validate_enumerated(pv(s), *got, "s", kWho, kSev));
        }
    }
    EXPECT_GT(enumerated, 10);
    EXPECT_LT(enumerated, 90);
}

TEST(Format, Chi2MatchesIndependentOracle) {
    std::mt19937_64 rng(1234);
    for (int i = 0; i < 1000; ++i) {
        std::string s = random_bytes(rng, 120);
        if (s.empty()) s = "a";
        CharDist ideal{};
        double total = 0;
        for (auto& x : ideal) {
            x = rng() % 4 == 0 ? 0.0 : static_cast<double>(rng() % 1000);
            total += x;
        }
        if (total == 0) ideal[0] = total = 1;
        for (auto& x : ideal) x /= total;
        double got = char_dist_chi2(s, ideal);
        double want = oracle_chi2(s, ideal);
        ASSERT_LE(std::abs(got - want), 1e-9 * std::max(1.0, std::abs(want))) << i;
    }
}

TEST(Format, BinnedDistributionSumsToOne) {
    auto d = binned_char_distribution("hello world");
    double sum = 0;
    for (double x : d) sum += x;
    EXPECT_NEAR(sum, 1.0, 1e-12);
    EXPECT_NEAR(d[0], 3.0 / 11.0, 1e-12);  // 'l'
}

TEST(Format, TrainingDegenerateAndThreshold) {
    std::vector<std::string> same(60, "abc123");
    auto m = train_format(same);
    EXPECT_DOUBLE_EQ(m.chi2_threshold, kChi2Floor);
    // Each empty bin contributes its floored expectation (1e-6).
    EXPECT_NEAR(char_dist_chi2("abc123", m.idealized), 3 * kMinExpected, 1e-12);
    EXPECT_THROW(train_format(std::vector<std::string>{"x"}), InsufficientSamples);
    double sum = 0;
    for (double x : m.idealized) sum += x;
    EXPECT_NEAR(sum, 1.0, 1e-9);
}

TEST(Format, DatesAcceptedAndFloodRejected) {
    std::mt19937_64 rng(8);
    std::vector<std::string> train;
    for (int i = 0; i < 400; ++i) train.push_back(random_date(rng));
    auto m = train_format(train);
    EXPECT_FALSE(validate_format(pv("Nov 4, 2003 8:14 PM"), m, "d", kWho, kSev));
    auto a = validate_format(pv(std::string(64, 'A')), m, "d", kWho, kSev);
    ASSERT_TRUE(a);
    EXPECT_EQ(a->attack_class, AttackClass::format_violation);
    EXPECT_NEAR(a->score, oracle_chi2(std::string(64, 'A'), m.idealized), 1e-9 * a->score);
    EXPECT_EQ(a->confidence, a->score > 2 * m.chi2_threshold ? Tier::high : Tier::low);
    EXPECT_TRUE(validate_format(pv(""), m, "d", kWho, kSev));
}

TEST(Format, HeldOutTimestampsMostlyAccepted) {
    std::mt19937_64 rng(21);
    std::vector<std::string> all;
    for (int i = 0; i < 1000; ++i) all.push_back(random_timestamp(rng));
    std::vector<std::string> train(all.begin(), all.begin() + 500);
    auto m = train_format(train);
    int below = 0;
    for (std::size_t i = 500; i < all.size(); ++i) below += oracle_chi2(all[i], m.idealized) <= m.chi2_threshold;
    EXPECT_GE(below, 475);
}

TEST(Url, WhitelistExamples) {
    UrlWhitelist w;
    w.trusted.push_back(UrlWhitelist::parse_entry("www.partnersite.com"));
    w.trusted.push_back(UrlWhitelist::parse_entry("https://pay.example/checkout"));
    EXPECT_FALSE(validate_url(pv("www.partnersite.com"), w, "t", kWho, kSev));
    EXPECT_FALSE(validate_url(pv("http://www.partnersite.com/deal"), w, "t", kWho, kSev));
    EXPECT_FALSE(validate_url(pv("appadmin.jsp"), w, "t", kWho, kSev));
    EXPECT_FALSE(validate_url(pv("https://pay.example/checkout/1"), w, "t", kWho, kSev));
    auto a = validate_url(pv("http://evil.example/phish"), w, "t", kWho, kSev);
    ASSERT_TRUE(a);
    EXPECT_EQ(a->attack_class, AttackClass::open_redirect);
    EXPECT_TRUE(validate_url(pv("//evil.example"), w, "t", kWho, kSev));
    EXPECT_TRUE(validate_url(pv("http://pay.example/other"), w, "t", kWho, kSev));
    EXPECT_TRUE(validate_url(pv("http://www.partnersite.com@evil.example/"), w, "t", kWho, kSev));
    EXPECT_TRUE(validate_url(pv("javascript:alert(1)"), w, "t", kWho, kSev));
    w.allow_relative_same_site = false;
    EXPECT_TRUE(validate_url(pv("appadmin.jsp"), w, "t", kWho, kSev));
}

TEST(Application, LedgerChecks) {
    MarkLedger ledger(test_key(3));
    ledger.mark("s1", "Price", "12.3");
    std::optional<std::string> s1 = "s1";
    std::optional<std::string> s2 = "s2";
    EXPECT_FALSE(validate_application("12.3", "Price", ledger, s1, "Price", kWho, kSev));
    auto a = validate_application("0.1", "Price", ledger, s1, "Price", kWho, kSev);
    ASSERT_TRUE(a);
    EXPECT_EQ(a->attack_class, AttackClass::tampering);
    EXPECT_EQ(a->severity, Tier::high);
    EXPECT_TRUE(validate_application("12.3", "Price", ledger, s2, "Price", kWho, kSev));
    EXPECT_TRUE(validate_application("12.3", "Price", ledger, std::nullopt, "Price", kWho, kSev));
}

TEST(ValidateRequest, EveryParameterCheckedOnce) {
    ValidatorModels models;
    ParamScope gender{"/form", ParamLocation::query, "gender"};
    models.specs[gender] = {gender, ParamCategory::enumerated, true, 100};
    models.enums[gender] = {{"male", "female", "other"}, 100};
    ParamScope id{"/form", ParamLocation::query, "id"};
    models.specs[id] = {id, ParamCategory::numeric, true, 100};
    auto sigs = SignatureSet::starter();
    UrlWhitelist urls;
    ValidatorContext ctx{sigs, models, urls, nullptr, kSev};

    auto req = canonical("POST", "/form?gender=male&id=1254&x=1&x=2", {{"Cookie", "prefs=a"}, {"Accept", "*/*"}},
                         "comment=hello");
    std::vector<ParamCheck> checked;
    EXPECT_TRUE(validate_request(req, ctx, &checked).empty());
    std::size_t params = 0;
    for (auto& [_, v] : req.query_params) params += v.size();
    for (auto& [_, v] : req.body_params) params += v.size();
    params += req.cookies.size();
    for (auto& [name, v] : req.headers) params += name == "cookie" ? 0 : v.size();
    EXPECT_EQ(checked.size(), params);

    auto bad = canonical("GET", "/form?gender=admin&id=12x4&q=%27%20or%20%271%27%3D%271");
    auto alerts = validate_request(bad, ctx);
    std::multiset<AttackClass> classes;
    for (auto& a : alerts) classes.insert(a.attack_class);
    EXPECT_EQ(classes, (std::multiset<AttackClass>{AttackClass::sqli, AttackClass::type_violation,
                                                   AttackClass::enum_violation}));
}

TEST(ValidatorModels, ResolveFallsBackToAnyPathThenText) {
    ValidatorModels m;
    ParamScope any{std::string(kAnyPath), ParamLocation::header, "accept-language"};
    m.specs[any] = {any, ParamCategory::enumerated, true, 60};
    EXPECT_EQ(m.resolve({"/x", ParamLocation::header, "accept-language"}).category, ParamCategory::enumerated);
    EXPECT_EQ(m.resolve({"/x", ParamLocation::query, "unknown"}).category, ParamCategory::text);
}
