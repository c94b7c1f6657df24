#include "sentrygate/replay.hpp"

#include <fstream>
#include <regex>

#include "json.hpp"

namespace sentrygate {

using nlohmann::json;

namespace {

bool printable_ascii(std::string_view s) {
    for (unsigned char c : s) {
        if ((c < 0x20 && c != '\r' && c != '\n' && c != '\t') || c >= 0x7f) return false;
    }
    return true;
}

void replace_all(std::string& s, std::string_view from, std::string_view to) {
    for (auto pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size())) {
        s.replace(pos, from.size(), to);
    }
}

TraceRecord record_from_json(const json& j) {
    TraceRecord r;
    r.ts = j.at("ts").get<TimestampMs>();
    r.ip = j.at("ip").get<std::string>();
    r.method = j.value("method", std::string("GET"));
    r.target = j.value("target", std::string("/"));
    if (j.contains("headers")) {
        const auto& h = j.at("headers");
        if (h.is_object()) {
            for (const auto& [k, v] : h.items()) r.headers.emplace_back(k, v.get<std::string>());
        } else {
            for (const auto& pair : h) r.headers.emplace_back(pair.at(0).get<std::string>(), pair.at(1).get<std::string>());
        }
    }
    if (j.contains("body_b64")) {
        auto decoded = base64_decode(j.at("body_b64").get<std::string>());
        if (!decoded) throw TraceParseError("body_b64 is not valid base64");
        r.body = *decoded;
    } else {
        r.body = j.value("body", std::string());
    }
    auto label = j.value("label", std::string("nav"));
    if (label != "nav" && label != "asset") throw TraceParseError("label must be nav or asset");
    r.asset = label == "asset";
    r.client = j.value("client", std::string());
    r.expect = j.value("expect", std::string("benign"));
    if (r.expect != "benign" && !parse_attack_class(r.expect)) throw TraceParseError("unknown expect class " + r.expect);
    r.scenario = j.value("scenario", std::string());
    return r;
}

}  // namespace

std::string TraceRecord::to_json_line() const {
    json headers_json = json::array();
    for (const auto& [k, v] : headers) headers_json.push_back({k, v});
    json j{{"ts", ts}, {"ip", ip}, {"method", method}, {"target", target}, {"headers", headers_json}};
    if (printable_ascii(body)) {
        j["body"] = body;
    } else {
        j["body_b64"] = base64_encode(body);
    }
    j["label"] = asset ? "asset" : "nav";
    if (!client.empty()) j["client"] = client;
    j["expect"] = expect;
    if (!scenario.empty()) j["scenario"] = scenario;
    return j.dump();
}

std::vector<TraceRecord> parse_trace(const std::string& text) {
    std::vector<TraceRecord> out;
    std::size_t line_no = 0;
    std::size_t start = 0;
    while (start < text.size()) {
        auto end = text.find('\n', start);
        if (end == std::string::npos) end = text.size();
        ++line_no;
        std::string_view line(text.data() + start, end - start);
        start = end + 1;
        if (trim(line).empty()) continue;
        try {
            out.push_back(record_from_json(json::parse(line)));
        } catch (const json::exception& e) {
            throw TraceParseError("trace line " + std::to_string(line_no) + ": " + e.what());
        } catch (const TraceParseError& e) {
            throw TraceParseError("trace line " + std::to_string(line_no) + ": " + e.what());
        }
        if (out.size() > 1 && out.back().ts < out[out.size() - 2].ts) {
            throw TraceParseError("trace line " + std::to_string(line_no) + ": timestamps must not decrease");
        }
    }
    return out;
}

std::vector<TraceRecord> read_trace(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw TraceParseError("cannot read trace " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_trace(text);
}

void write_trace(const std::string& path, std::span<const TraceRecord> trace) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw TraceParseError("cannot write trace " + path);
    for (const auto& r : trace) out << r.to_json_line() << '\n';
}

// ---------------------------------------------------------------------------

std::string ReplayDriver::render(const TraceRecord& rec) {
    RawRequest raw;
    raw.method = rec.method;
    raw.target = rec.target;
    raw.headers = rec.headers;
    raw.body = rec.body;

    Jar* jar = rec.client.empty() ? nullptr : &jars_[rec.client];
    if (!find_header(raw.headers, "host")) raw.headers.insert(raw.headers.begin(), {"Host", runtime_.settings().own_host});
    if (jar) {
        std::string otp;
        const auto& cookie_name = runtime_.settings().preprocessor.session_cookie_name;
        if (auto it = jar->cookies.find(cookie_name); it != jar->cookies.end()) otp = runtime_.otp_for(it->second, rec.ts);
        for (auto* field : {&raw.target, &raw.body}) {
            replace_all(*field, "{{csrf}}", jar->csrf);
            replace_all(*field, "{{otp}}", otp);
        }
        if (!jar->cookies.empty()) {
            std::map<std::string, std::string> merged = jar->cookies;
            for (const auto& c : find_headers(raw.headers, "cookie")) {
                for (const auto& [n, v] : parse_cookie_header(c)) merged[n] = v;
            }
            std::string value;
            for (const auto& [n, v] : merged) {
                if (!value.empty()) value += "; ";
                value += n + "=" + v;
            }
            remove_header(raw.headers, "cookie");
            raw.headers.emplace_back("Cookie", value);
        }
    }
    bool has_body_method = raw.method == "POST" || raw.method == "PUT" || raw.method == "PATCH";
    if (!find_header(raw.headers, "content-length") && (!raw.body.empty() || has_body_method)) {
        raw.headers.emplace_back("Content-Length", std::to_string(raw.body.size()));
    }
    return serialize_request(raw);
}

HandleResult ReplayDriver::step(const TraceRecord& rec) {
    static const std::regex token_re(R"re(__ips_token(?:" value="|=)([0-9a-f]{32}))re");
    auto result = runtime_.handle_bytes(render(rec), rec.ip, rec.ts);
    if (rec.client.empty()) return result;
    auto& jar = jars_[rec.client];
    for (const auto& raw : find_headers(result.response.headers, "set-cookie")) {
        auto c = parse_set_cookie(raw);
        if (!c) continue;
        bool expired = to_lower(c->attributes).find("max-age=0") != std::string::npos;
        if (expired || c->value.empty()) {
            jar.cookies.erase(c->name);
        } else {
            jar.cookies[c->name] = c->value;
        }
    }
    std::smatch m;
    if (std::regex_search(result.response.body, m, token_re)) jar.csrf = m[1].str();
    return result;
}

std::vector<Verdict> replay(std::span<const TraceRecord> trace, Runtime& runtime) {
    ReplayDriver driver(runtime);
    std::vector<Verdict> verdicts;
    verdicts.reserve(trace.size());
    for (const auto& rec : trace) verdicts.push_back(driver.step(rec).verdict);
    return verdicts;
}

Key256 replay_seed(const Secret& secret) { return secret.derive("replay-rng"); }

// ---------------------------------------------------------------------------

ModelBundle train_all(std::span<const TraceRecord> trace, const RuntimeSettings& settings, Upstream& upstream) {
    ModelBundle bundle = ModelBundle::defaults(settings.preprocessor);

    std::vector<LabeledRequest> labeled;
    labeled.reserve(trace.size());
    for (const auto& rec : trace) {
        RawRequest raw;
        raw.source_ip = rec.ip;
        raw.received_at = rec.ts;
        raw.method = rec.method;
        raw.target = rec.target;
        raw.headers = rec.headers;
        raw.body = rec.body;
        labeled.push_back({std::move(raw), rec.asset});
    }
    bundle.request_filter = train_request_filter(labeled, settings.preprocessor);
    if (trace.empty()) bundle.warnings.push_back("request_filter: empty trace, using default extensions");

    DeterministicRandom rng(replay_seed(settings.secret));
    RuntimeSettings learn_settings = settings;
    learn_settings.gap_report_path.clear();
    Runtime runtime(learn_settings, bundle, upstream, rng, nullptr, RuntimeOptions{true, "/login"});
    replay(trace, runtime);
    auto obs = runtime.take_observations();

    const std::set<std::string> excluded = {std::string(kCsrfParam), std::string(kOtpParam),
                                            settings.preprocessor.session_cookie_name};
    bundle.watched = learn_watched(obs.watch, excluded);
    if (bundle.watched.empty()) bundle.warnings.push_back("watched_params: none learned, tampering detection inactive");

    std::size_t short_scopes = 0;
    std::size_t numeric_scopes = 0;
    std::size_t enum_scopes = 0;
    const SeverityTable sev = SeverityTable::defaults();
    for (const auto& [scope, values] : obs.samples) {
        ParamSpec spec{scope, ParamCategory::text, true, values.size()};
        const bool enough = values.size() >= kMinTrainingSamples;
        auto try_enum = [&] {
            if (auto m = train_enumerated(values)) {
                bundle.validator.enums[scope] = *m;
                spec.category = ParamCategory::enumerated;
                ++enum_scopes;
            }
        };
        if (scope.location == ParamLocation::header) {
            if (settings.enumerated_headers.contains(scope.name)) {
                if (enough) {
                    try_enum();
                } else {
                    ++short_scopes;
                }
            }
        } else if (bundle.watched.contains(scope.name)) {
            spec.category = ParamCategory::application;
        } else if (!enough) {
            ++short_scopes;
        } else {
            bool numeric = std::all_of(values.begin(), values.end(), [&](const std::string& v) {
                ParamValue pv;
                pv.canonical = v;
                return !validate_numeric(pv, "", {}, sev);
            });
            if (numeric) {
                spec.category = ParamCategory::numeric;
                ++numeric_scopes;
            } else {
                try_enum();
            }
        }
        if (enough) bundle.validator.formats[scope] = train_format(values);
        bundle.validator.specs[scope] = spec;
    }
    if (short_scopes > 0) {
        bundle.warnings.push_back("parameters: " + std::to_string(short_scopes) + " scopes below " +
                                  std::to_string(kMinTrainingSamples) + " samples kept as text");
    }
    if (obs.samples.empty()) bundle.warnings.push_back("enumerated/format: no parameters observed");

    bundle.bot = train_bot_baseline(obs.bot_events);
    if (obs.bot_events.empty()) bundle.warnings.push_back("bot_baseline: no traffic, using default baseline");

    bundle.users = train_user_profiles(obs.user_actions);
    if (bundle.users.empty()) bundle.warnings.push_back("user_profiles: no authenticated traffic");

    bundle.roles = train_role_profiles(obs.roles, settings.min_role_support);
    if (obs.roles.empty()) bundle.warnings.push_back("role_profiles: no traffic");
    return bundle;
}

}  // namespace sentrygate
