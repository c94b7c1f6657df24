#include <gtest/gtest.h>

#include <random>

#include "sentrygate/preprocessor.hpp"
#include "test_util.hpp"

using namespace sentrygate;
using namespace sentrygate::testing;

TEST(Parse, MinimalRequest) {
    auto r = parse_request("GET /a?x=1 HTTP/1.1\r\nHost: h\r\n\r\n");
    EXPECT_EQ(r.method, "GET");
    EXPECT_EQ(r.target, "/a?x=1");
    EXPECT_EQ(r.version, "HTTP/1.1");
    ASSERT_EQ(r.headers.size(), 1u);
    EXPECT_EQ(r.headers[0].first, "Host");
}

TEST(Parse, ContentLengthContradiction) {
    EXPECT_THROW(parse_request("POST /a HTTP/1.1\r\nContent-Length: 5\r\n\r\nabc"), MalformedRequest);
}

TEST(Parse, RejectsNonOriginFormAndBadHeaders) {
    EXPECT_THROW(parse_request("GET http://x/ HTTP/1.1\r\n\r\n"), MalformedRequest);
    EXPECT_THROW(parse_request("GET /a HTTP/1.1\r\n: v\r\n\r\n"), MalformedRequest);
    EXPECT_THROW(parse_request("GET /a HTTP/1.1\r\nHost: h\r\n"), MalformedRequest);
}

// Oracle: a byte scan of the request line for C0 controls and DEL.
TEST(Parse, ControlBytesInRequestLineMatchByteScan) {
    std::mt19937_64 rng(11);
    const std::string printable = "abcXYZ019/._-~%?=&";
    int rejected = 0;
    for (int i = 0; i < 2000; ++i) {
        std::string path = "/";
        for (std::size_t n = rng() % 20; n > 0; --n) {
            if (rng() % 8 == 0) {
                unsigned char c = static_cast<unsigned char>(rng() % 33);
                if (c == 32) c = 0x7f;
                if (c == '\r') c = 0;
                path += static_cast<char>(c);
            } else {
                path += printable[rng() % printable.size()];
            }
        }
        bool has_control = std::any_of(path.begin(), path.end(), [](char ch) {
            auto c = static_cast<unsigned char>(ch);
            return c < 0x20 || c == 0x7f;
        });
        std::string wire = "GET " + path + " HTTP/1.1\r\nHost: h\r\n\r\n";
        if (has_control) {
            ++rejected;
            EXPECT_THROW(parse_request(wire), MalformedRequest) << i;
        } else {
            EXPECT_EQ(parse_request(wire).target, path);
        }
    }
    EXPECT_GT(rejected, 100);
}

TEST(Parse, SerializeRoundTrip) {
    auto r = raw_request("POST", "/login", {{"Host", "h"}}, "a=1&b=2");
    auto back = parse_request(serialize_request(r));
    EXPECT_EQ(back.method, r.method);
    EXPECT_EQ(back.target, r.target);
    EXPECT_EQ(back.body, r.body);
    EXPECT_EQ(back.headers, r.headers);
}

TEST(Canonicalize, Examples) {
    auto plain = canonicalize("abc");
    EXPECT_EQ(plain.canonical, "abc");
    EXPECT_EQ(plain.decode_rounds, 0);

    auto nested = canonicalize("%253Cscript%253E");
    EXPECT_EQ(nested.canonical, "<script>");
    EXPECT_EQ(nested.decode_rounds, 2);
    EXPECT_TRUE(nested.double_encoded);

    EXPECT_EQ(canonicalize("a    b\t c").canonical, "a b c");
    EXPECT_EQ(canonicalize("a+b").canonical, "a b");
    EXPECT_EQ(canonicalize("&lt;b&gt;").canonical, "<b>");
    EXPECT_EQ(canonicalize("%zz%4").canonical, "%zz%4");
    EXPECT_EQ(canonicalize("MiXeD").match, "mixed");
    EXPECT_EQ(canonicalize("MiXeD").canonical, "MiXeD");
}

TEST(Canonicalize, CapLimitsRounds) {
    auto v = canonicalize("%25253C", 1);
    EXPECT_EQ(v.canonical, "%253C");
    EXPECT_EQ(v.decode_rounds, 1);
    auto w = canonicalize("%25253C", 3);
    EXPECT_EQ(w.canonical, "<");
    EXPECT_LE(w.decode_rounds, 3);
}

TEST(Canonicalize, IdempotentOnRandomBytes) {
    std::mt19937_64 rng(2024);
    for (int i = 0; i < 10000; ++i) {
        auto s = random_bytes(rng, 64);
        auto once = canonicalize(s);
        auto twice = canonicalize(once.canonical);
        ASSERT_EQ(twice.canonical, once.canonical) << "input #" << i;
        ASSERT_EQ(once.original, s);
        ASSERT_LE(once.decode_rounds, kDefaultDecodeCap);
    }
}

TEST(Canonicalize, IdempotentOnEscapeDenseStringsWithinCap) {
    // Strings built only from escapes and entities do exceed the cap now and
    // then; idempotence is only promised when the fixpoint was reached.
    std::mt19937_64 rng(77);
    int checked = 0;
    for (int i = 0; i < 10000; ++i) {
        auto s = random_escapey(rng, 40);
        auto once = canonicalize(s);
        auto deeper = canonicalize(s, kDefaultDecodeCap + 1);
        if (deeper.decode_rounds > kDefaultDecodeCap) continue;
        ++checked;
        ASSERT_EQ(canonicalize(once.canonical).canonical, once.canonical) << s;
    }
    EXPECT_GT(checked, 9000);
}

TEST(Canonicalize, NestingBeyondCapLeavesResidue) {
    // Four layers of percent-encoding: the cap stops after three.
    auto v = canonicalize("%2525253C");
    EXPECT_EQ(v.canonical, "%3C");
    EXPECT_TRUE(v.double_encoded);
    EXPECT_NE(canonicalize(v.canonical).canonical, v.canonical);
}

TEST(PathTemplate, NumericSegmentsAndDeterminism) {
    EXPECT_EQ(path_template("/product/42/review"), "/product/{id}/review");
    EXPECT_EQ(path_template("/v2/items"), "/v2/items");
    EXPECT_EQ(path_template("/a/123"), path_template("/a/123"));
    EXPECT_EQ(path_extension("/static/Logo.PNG"), "png");
    EXPECT_EQ(path_extension("/dir.d/file"), "");
}

TEST(CanonicalRequest, ParamsCookiesAndSession) {
    auto req = canonical("POST", "/p/7?x=%2541&x=2",
                         {{"Cookie", "SESSIONID=abc; prefs=dark"}, {"User-Agent", "UA"},
                          {"Content-Type", "application/x-www-form-urlencoded"}},
                         "name=a+b&c=%3Cd%3E");
    EXPECT_EQ(req.path_template, "/p/{id}");
    ASSERT_EQ(req.query_params.at("x").size(), 2u);
    EXPECT_EQ(req.query_params.at("x")[0].original, "%2541");
    EXPECT_EQ(req.query_params.at("x")[0].form_value, "%41");
    EXPECT_EQ(req.query_params.at("x")[0].canonical, "A");
    EXPECT_EQ(req.body_params.at("name")[0].canonical, "a b");
    EXPECT_EQ(req.body_params.at("c")[0].canonical, "<d>");
    EXPECT_EQ(req.session_id, std::optional<std::string>("abc"));
    EXPECT_EQ(req.identity.user_agent, std::optional<std::string>("UA"));
    EXPECT_EQ(req.cookies.at("prefs").original, "dark");
}

TEST(RequestFilter, DefaultsAndMonitoring) {
    PreprocessorConfig cfg;
    auto model = StaticAssetModel::defaults(cfg);
    EXPECT_FALSE(model.extension_set.empty());
    EXPECT_FALSE(should_monitor(canonical("GET", "/static/logo.png"), model));
    EXPECT_TRUE(should_monitor(canonical("POST", "/login"), model));
}

TEST(RequestFilter, LearnsAssetOnlyTemplates) {
    PreprocessorConfig cfg;
    std::vector<LabeledRequest> trace;
    for (int i = 0; i < 40; ++i) trace.push_back({raw_request("GET", "/img/" + std::to_string(i)), true});
    trace.push_back({raw_request("GET", "/report.pdf"), true});
    trace.push_back({raw_request("GET", "/report.pdf"), false});
    trace.push_back({raw_request("GET", "/assets/app.v2.js"), true});
    trace.push_back({raw_request("GET", "/fonts/x.woff3"), true});
    auto model = train_request_filter(trace, cfg);

    // Oracle: label partition of the templates.
    std::set<std::string> asset_only;
    std::set<std::string> nav;
    for (const auto& t : trace) (t.asset ? asset_only : nav).insert(path_template(t.request.target));
    for (const auto& n : nav) asset_only.erase(n);
    EXPECT_EQ(model.learned_paths, asset_only);
    EXPECT_TRUE(model.learned_paths.contains("/img/{id}"));
    EXPECT_FALSE(model.learned_paths.contains("/report.pdf"));
    EXPECT_TRUE(model.extension_set.contains("woff3"));
    EXPECT_FALSE(model.extension_set.contains("pdf"));
    EXPECT_FALSE(should_monitor(canonical("GET", "/assets/app.v2.js"), model));
    EXPECT_FALSE(should_monitor(canonical("GET", "/img/999"), model));
}

TEST(RequestFilter, EmptyTraceFallsBackToDefaults) {
    PreprocessorConfig cfg;
    auto model = train_request_filter({}, cfg);
    EXPECT_EQ(model.extension_set, cfg.static_extensions);
    EXPECT_TRUE(model.learned_paths.empty());
}
