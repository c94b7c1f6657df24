#include "sentrygate/runtime.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "json.hpp"

namespace sentrygate {

using nlohmann::json;

namespace {

constexpr std::string_view kRejectBody =
    "<!DOCTYPE html><html><head><title>Request rejected</title></head>"
    "<body><h1>Request rejected</h1><p>The request could not be processed.</p></body></html>";

constexpr std::string_view kBadGatewayBody =
    "<!DOCTYPE html><html><head><title>Bad gateway</title></head>"
    "<body><h1>Bad gateway</h1></body></html>";

std::string challenge_body() {
    return "<!DOCTYPE html><html><head><title>Verification required</title></head><body>"
           "<h1>Verification required</h1><p>Enter the code sent to you and resubmit.</p>"
           "<form method=\"post\"><input type=\"text\" name=\"" +
           std::string(kOtpParam) + "\"><button type=\"submit\">Verify</button></form></body></html>";
}

HttpResponse page(int status, std::string body) {
    HttpResponse r;
    r.status = status;
    r.headers = {{"Content-Type", "text/html; charset=utf-8"}, {"Cache-Control", "no-store"}};
    r.body = std::move(body);
    r.headers.emplace_back("Content-Length", std::to_string(r.body.size()));
    return r;
}

/// Times one pipeline stage into the verdict.
class StageTimer {
  public:
    StageTimer(Verdict& v, std::string_view name) : v_(v), start_(std::chrono::steady_clock::now()) {
        v_.stages.emplace_back(name);
    }
    ~StageTimer() {
        auto d = std::chrono::steady_clock::now() - start_;
        v_.stage_micros.push_back(std::chrono::duration<double, std::micro>(d).count());
    }
    StageTimer(const StageTimer&) = delete;
    StageTimer& operator=(const StageTimer&) = delete;

  private:
    Verdict& v_;
    std::chrono::steady_clock::time_point start_;
};

bool is_reserved(const std::string& name) { return name == kCsrfParam || name == kOtpParam; }

/// The alert that represents a stage: highest severity, then confidence,
/// first one on ties.
std::optional<Alert> strongest(std::vector<Alert> alerts) {
    if (alerts.empty()) return std::nullopt;
    auto rank = [](const Alert& a) { return static_cast<int>(a.severity) * 2 + static_cast<int>(a.confidence); };
    auto best = alerts.begin();
    for (auto it = alerts.begin(); it != alerts.end(); ++it) {
        if (rank(*it) > rank(*best)) best = it;
    }
    return *best;
}

json alert_json(const Alert& a) {
    return {{"class", to_string(a.attack_class)},
            {"severity", to_string(a.severity)},
            {"confidence", to_string(a.confidence)},
            {"score", std::isfinite(a.score) ? json(a.score) : json("inf")},
            {"module", a.module},
            {"scope", a.evidence.scope}};
}

}  // namespace

std::string_view to_string(Outcome o) {
    switch (o) {
        case Outcome::forwarded: return "forwarded";
        case Outcome::rejected: return "rejected";
        case Outcome::challenged: return "challenged";
        case Outcome::upstream_error: return "upstream_error";
    }
    return "forwarded";
}

std::optional<Outcome> parse_outcome(std::string_view s) {
    for (auto o : {Outcome::forwarded, Outcome::rejected, Outcome::challenged, Outcome::upstream_error}) {
        if (to_string(o) == s) return o;
    }
    return std::nullopt;
}

std::string Verdict::to_json_line() const {
    json j{{"seq", seq},
           {"outcome", to_string(outcome)},
           {"status", status},
           {"monitored", monitored},
           {"alert", alert ? alert_json(*alert) : json(nullptr)},
           {"action", action ? json(action->describe()) : json(nullptr)},
           {"stages", stages}};
    return j.dump();
}

Verdict Verdict::from_json_line(const std::string& line) {
    Verdict v;
    try {
        auto j = json::parse(line);
        v.seq = j.at("seq").get<std::uint64_t>();
        auto outcome = parse_outcome(j.at("outcome").get<std::string>());
        if (!outcome) throw TraceParseError("verdict: unknown outcome");
        v.outcome = *outcome;
        v.status = j.at("status").get<int>();
        v.monitored = j.value("monitored", true);
        if (!j.at("alert").is_null()) {
            const auto& a = j.at("alert");
            auto cls = parse_attack_class(a.at("class").get<std::string>());
            auto sev = parse_tier(a.at("severity").get<std::string>());
            auto conf = parse_tier(a.at("confidence").get<std::string>());
            if (!cls || !sev || !conf) throw TraceParseError("verdict: bad alert");
            Alert alert;
            alert.attack_class = *cls;
            alert.severity = *sev;
            alert.confidence = *conf;
            alert.score = a.at("score").is_number() ? a.at("score").get<double>() : INFINITY;
            alert.module = a.at("module").get<std::string>();
            alert.evidence.scope = a.at("scope").get<std::string>();
            v.alert = alert;
        }
        if (!j.at("action").is_null()) {
            auto text = j.at("action").get<std::string>();
            ResponseAction act;
            auto parts = split(text, '+');
            auto kind = parse_action_kind(parts.front());
            if (!kind) throw TraceParseError("verdict: bad action");
            act.kind = *kind;
            for (std::size_t i = 1; i < parts.size(); ++i) {
                if (parts[i] == "monitor") act.monitor = true;
                if (parts[i] == "notify") act.notify = true;
            }
            v.action = act;
        }
        v.stages = j.at("stages").get<std::vector<std::string>>();
    } catch (const json::exception& e) {
        throw TraceParseError(std::string("verdict line: ") + e.what());
    }
    return v;
}

void apply_overrides(ValidatorModels& models, const std::vector<ParamOverride>& overrides) {
    for (const auto& o : overrides) {
        if (o.scope.path_template == kAnyPath) {
            for (auto& [scope, spec] : models.specs) {
                if (scope.location == o.scope.location && scope.name == o.scope.name) {
                    spec.category = o.category;
                    spec.learned = false;
                }
            }
        }
        auto& spec = models.specs[o.scope];
        spec.scope = o.scope;
        spec.category = o.category;
        spec.learned = false;
    }
}

// ---------------------------------------------------------------------------

Runtime::Runtime(const RuntimeSettings& settings, ModelBundle models, Upstream& upstream, RandomSource& rng,
                 Logger* logger, RuntimeOptions options)
    : settings_(settings),
      models_(std::move(models)),
      upstream_(upstream),
      rng_(rng),
      logger_(logger),
      options_(std::move(options)),
      seal_key_(settings.secret.derive("seal")),
      otp_key_(settings.secret.derive("otp")),
      histories_(models_.bot.window_ms),
      ledger_(settings.secret.derive("mark")),
      gaps_(settings.gap_report_path),
      defender_(settings.response, blocks_, sessions_, logger) {
    apply_overrides(models_.validator, settings_.overrides);
    for (const auto& op : settings_.policy.sensitive_ops) {
        if (op.first == "GET") sensitive_gets_.insert(op);
    }
    for (const auto& entry : settings_.initial_blocks) blocks_.upsert(entry);
    models_.roles.min_support = settings_.min_role_support;
}

std::string Runtime::otp_for(const std::string& session_id, TimestampMs ts) const {
    return otp_code(otp_key_, session_id, ts);
}

void Runtime::sweep(TimestampMs now) {
    blocks_.purge_expired(now);
    histories_.sweep(now);
}

TrainingObservations Runtime::take_observations() {
    std::lock_guard lock(observations_mutex_);
    return std::exchange(observations_, {});
}

void Runtime::log_controller(TimestampMs ts, const std::optional<std::string>& session, ControllerOp op,
                             std::string detail) {
    if (logger_ == nullptr) return;
    try {
        logger_->append(ControllerLogRecord{0, ts, session, op, std::move(detail)});
    } catch (const SchemaError&) {
        // A name outside the log grammar is not worth failing the response.
    }
}

HandleResult Runtime::handle_bytes(std::string_view bytes, const std::string& source_ip, TimestampMs now) {
    RawRequest raw;
    try {
        raw = parse_request(bytes, source_ip, now);
    } catch (const MalformedRequest& e) {
        Verdict v;
        v.seq = ++seq_;
        StageTimer t(v, "preprocessor");
        auto line_end = bytes.find('\n');
        return protocol_error(v, e.what(), source_ip, std::nullopt, now,
                              std::string(bytes.substr(0, std::min<std::size_t>(line_end, kMaxExcerpt))));
    }
    return handle(std::move(raw));
}

HandleResult Runtime::protocol_error(Verdict& v, const std::string& what, const std::string& ip,
                                     std::optional<std::string> ua, TimestampMs now, const std::string& url) {
    ClientIdentity who{ip, std::move(ua), std::nullopt, std::nullopt};
    auto alert = make_alert(AttackClass::protocol, settings_.severity.of(AttackClass::protocol), Tier::high, 1.0,
                            "preprocessor", "request", what, who);
    auto exec = defender_.respond(alert, now, url, "");
    v.alert = exec.alert;
    v.action = exec.action;
    // An unparseable request cannot be forwarded whatever the policy says.
    v.outcome = Outcome::rejected;
    v.status = 400;
    return {page(400, std::string(kRejectBody)), v};
}

std::optional<HandleResult> Runtime::conclude(Verdict& v, Alert alert, const CanonicalRequest& req,
                                              TimestampMs now) {
    auto exec = defender_.respond(std::move(alert), now, req.target, req.path_template);
    v.alert = exec.alert;
    v.action = exec.action;
    if (exec.forwarded) return std::nullopt;
    v.outcome = Outcome::rejected;
    v.status = exec.status;
    return HandleResult{page(exec.status, std::string(kRejectBody)), v};
}

std::optional<HandleResult> Runtime::detect(Verdict& v, const CanonicalRequest& req, const SessionLookup& lookup,
                                            const std::vector<std::string>& unseal_failures, TimestampMs now) {
    const auto& session = lookup.record;
    std::optional<Alert> alert;

    {
        StageTimer t(v, "connection_verifier");
        auto cv = check_connection(req, blocks_, now);
        if (cv.blocked) {
            auto exec = defender_.reject_blocked(req.identity, cv.reason, now, req.target);
            v.action = exec.action;
            v.outcome = Outcome::rejected;
            v.status = exec.status;
            return HandleResult{page(exec.status, std::string(kRejectBody)), v};
        }
    }

    {
        StageTimer t(v, "bot_detector");
        const auto& who = req.identity;
        if (!stage1_good_bot(who, settings_.bots)) {
            auto bot_alert = [&](Tier conf, double score, std::string scope, std::string excerpt) {
                return make_alert(AttackClass::bot, settings_.severity.of(AttackClass::bot), conf, score,
                                  "bot_detector", std::move(scope), excerpt, who);
            };
            if (stage2_bad_bot(who, settings_.bots)) {
                alert = bot_alert(Tier::high, 1.0, "signature", who.user_agent.value_or(who.ip));
            } else {
                auto history = histories_.record(who.ip, {now, req.path_template, 0});
                auto score = stage3_behavior(std::move(history), models_.bot, now);
                if (score.is_bot) {
                    alert = bot_alert(score.confidence, score.rate_z, "behavior",
                                      "window_count=" + std::to_string(score.window_count) +
                                          " conditions=" + std::to_string(score.conditions));
                }
            }
        }
    }
    if (alert) return conclude(v, std::move(*alert), req, now);

    {
        StageTimer t(v, "data_validator");
        if (!unseal_failures.empty()) {
            alert = make_alert(AttackClass::tampering, settings_.severity.of(AttackClass::tampering), Tier::high, 1.0,
                               std::string(kResponseControllerModule), "cookie:" + unseal_failures.front(),
                               "sealed value failed authentication", req.identity);
        } else {
            ValidatorContext ctx{settings_.signatures, models_.validator, settings_.urls, &ledger_,
                                 settings_.severity};
            ctx.decode_cap = settings_.preprocessor.decode_cap;
            alert = strongest(validate_request(req, ctx));
        }
    }
    if (alert) return conclude(v, std::move(*alert), req, now);

    {
        StageTimer t(v, "user_verifier");
        if (lookup.state == SessionState::unknown) {
            alert = unknown_session_alert(req, settings_.severity);
        } else if (session) {
            alert = verify_stage1(req, session, now, settings_.limits, settings_.severity);
            if (!alert) {
                sessions_.update(session->session_id,
                                 [now](SessionRecord& s) { s.last_seen = std::max(s.last_seen, now); });
                if (session->username) {
                    std::lock_guard lock(profiles_mutex_);
                    auto it = models_.users.find(*session->username);
                    UserProfile* profile = it == models_.users.end() ? nullptr : &it->second;
                    auto r = verify_stage2(req, profile, session->last_action, settings_.severity);
                    if (r.untrained) {
                        sessions_.update(session->session_id, [](SessionRecord& s) { s.watch_flag = true; });
                    } else if (r.alert) {
                        alert = r.alert;
                    } else {
                        profile->observe(session->last_action, action_key(req.method, req.path_template), now);
                    }
                }
            }
        }
    }
    if (alert) return conclude(v, std::move(*alert), req, now);

    {
        StageTimer t(v, "access_controller");
        auto fresh = session ? sessions_.get(session->session_id) : std::nullopt;
        AccessContext actx{settings_.policy, models_.roles, otp_key_, settings_.severity, &gaps_};
        auto result = check_access(req, fresh, actx, now);
        if (result.challenge) {
            auto exec = defender_.challenge(req.identity, now, req.target);
            v.action = exec.action;
            v.outcome = Outcome::challenged;
            v.status = exec.status;
            return HandleResult{page(exec.status, challenge_body()), v};
        }
        if (result.otp_accepted && fresh) {
            sessions_.update(fresh->session_id, [now](SessionRecord& s) { s.second_factor_at = now; });
        }
        alert = result.alert;
    }
    if (alert) return conclude(v, std::move(*alert), req, now);
    return std::nullopt;
}

void Runtime::observe_request(const CanonicalRequest& req, const std::optional<SessionRecord>& session) {
    std::lock_guard lock(observations_mutex_);
    auto& obs = observations_;
    const auto& cookie_name = settings_.preprocessor.session_cookie_name;
    WatchObservation submitted{session ? session->session_id : std::string(), false, {}};
    for (const auto& [name, values] : req.query_params) {
        if (is_reserved(name)) continue;
        for (const auto& v : values) {
            obs.samples[{req.path_template, ParamLocation::query, name}].push_back(v.canonical);
            submitted.values.emplace_back(name, v.form_value);
        }
    }
    for (const auto& [name, values] : req.body_params) {
        if (is_reserved(name)) continue;
        for (const auto& v : values) {
            obs.samples[{req.path_template, ParamLocation::body, name}].push_back(v.canonical);
            submitted.values.emplace_back(name, v.form_value);
        }
    }
    for (const auto& [name, v] : req.cookies) {
        if (name == cookie_name) continue;
        obs.samples[{std::string(kAnyPath), ParamLocation::cookie, name}].push_back(v.canonical);
        submitted.values.emplace_back(name, v.original);
    }
    for (const auto& [name, values] : req.headers) {
        if (name == "cookie") continue;
        for (const auto& raw : values) {
            obs.samples[{std::string(kAnyPath), ParamLocation::header, name}].push_back(
                canonicalize(raw, settings_.preprocessor.decode_cap, false).canonical);
        }
    }
    if (!submitted.values.empty()) obs.watch.push_back(std::move(submitted));

    std::string role = session ? session->role : std::string(kAnonymousRole);
    obs.roles.push_back({role, {req.method, req.path_template}});
    if (session && session->username) {
        obs.user_actions.push_back(
            {*session->username, session->session_id, action_key(req.method, req.path_template), req.received_at});
    }
}

HandleResult Runtime::handle(RawRequest raw) {
    const TimestampMs now = raw.received_at;
    Verdict v;
    v.seq = ++seq_;

    // --- preprocessor
    CanonicalRequest req;
    SessionLookup lookup;
    std::vector<std::string> unseal_failures;
    bool monitored = true;
    {
        StageTimer t(v, "preprocessor");
        unseal_failures = unseal_cookies(raw, settings_.sealed_cookies, seal_key_);
        try {
            req = canonicalize_request(raw, settings_.preprocessor);
        } catch (const MalformedRequest& e) {
            return protocol_error(v, e.what(), raw.source_ip, find_header(raw.headers, "user-agent"), now,
                                  raw.target);
        }
        lookup = sessions_.lookup(req.session_id);
        if (lookup.state == SessionState::revoked) req.session_id.reset();
        req.identity.session_id = req.session_id;
        if (lookup.record) req.identity.username = lookup.record->username;
        monitored = should_monitor(req, models_.request_filter);
    }
    v.monitored = monitored;
    const auto& session = lookup.record;
    const bool learning = options_.learning;

    if (monitored && !learning) {
        if (auto stopped = detect(v, req, lookup, unseal_failures, now)) {
            histories_.complete(req.identity.ip, stopped->verdict.status);
            return std::move(*stopped);
        }
    } else if (monitored && learning) {
        observe_request(req, session);
    }

    HttpResponse resp;
    {
        StageTimer t(v, "upstream");
        try {
            resp = upstream_.forward(raw);
        } catch (const UpstreamUnreachable&) {
            v.outcome = Outcome::upstream_error;
            v.status = 502;
            if (monitored && !learning) histories_.complete(req.identity.ip, 502);
            return {page(502, std::string(kBadGatewayBody)), v};
        }
    }
    {
        StageTimer t(v, "response_controller");
        process_response(resp, req, session, monitored, now);
    }
    {
        StageTimer t(v, "logger");
        if (monitored && !learning) histories_.complete(req.identity.ip, resp.status);
        if (monitored && learning && !settings_.bots.is_good_ip(req.identity.ip)) {
            std::lock_guard lock(observations_mutex_);
            observations_.bot_events.push_back({req.identity.ip, now, resp.status});
        }
    }
    v.outcome = Outcome::forwarded;
    v.status = resp.status;
    return {std::move(resp), v};
}

void Runtime::process_response(HttpResponse& resp, const CanonicalRequest& req,
                               const std::optional<SessionRecord>& session, bool monitored, TimestampMs now) {
    for (const auto& s : scrub(resp, settings_.leaks)) {
        log_controller(now, req.session_id, ControllerOp::scrub,
                       "label=" + s.label + " count=" + std::to_string(s.count));
    }
    if (!monitored) {
        for (auto name : {kUserSignalHeader, kRoleSignalHeader, kLogoutSignalHeader}) remove_header(resp.headers, name);
        return;
    }

    // Session bookkeeping. A request without a live session gets a new one.
    std::string sid;
    bool issued = false;
    if (session && sessions_.get(session->session_id)) {
        sid = session->session_id;
    } else {
        auto rec = sessions_.create(req.identity.ip, req.identity.user_agent.value_or(""), now, rng_);
        sid = rec.session_id;
        issued = true;
    }
    const auto action = action_key(req.method, req.path_template);
    bool authenticated = session && session->username;
    auto user = find_header(resp.headers, kUserSignalHeader);
    auto role = find_header(resp.headers, kRoleSignalHeader);
    bool logout = find_header(resp.headers, kLogoutSignalHeader).has_value();
    bool failed_login = req.method == "POST" && req.path_template == options_.login_path && resp.status == 401;
    sessions_.update(sid, [&](SessionRecord& s) {
        if (authenticated) s.last_action = action;
        s.last_seen = std::max(s.last_seen, now);
        if (failed_login) {
            s.failed_logins.push_back(now);
            while (!s.failed_logins.empty() && s.failed_logins.front() < now - settings_.limits.login_window) {
                s.failed_logins.pop_front();
            }
        }
        if (user) {
            s.username = *user;
            s.role = role.value_or("member");
        }
        if (logout) {
            s.username.reset();
            s.role = std::string(kAnonymousRole);
        }
    });
    for (auto name : {kUserSignalHeader, kRoleSignalHeader, kLogoutSignalHeader}) remove_header(resp.headers, name);

    // Server-set values: learned in training, marked otherwise.
    auto values = collect_server_values(resp);
    if (options_.learning) {
        WatchObservation obs{sid, true, {}};
        for (const auto& sv : values) obs.values.emplace_back(sv.name, sv.value);
        std::lock_guard lock(observations_mutex_);
        observations_.watch.push_back(std::move(obs));
    } else {
        std::set<std::string> logged;
        for (const auto& name : mark(values, models_.watched, ledger_, sid)) {
            if (logged.insert(name).second) log_controller(now, sid, ControllerOp::mark, "param=" + name);
        }
    }

    for (const auto& name : seal_cookies(resp, settings_.sealed_cookies, seal_key_, rng_)) {
        log_controller(now, sid, ControllerOp::seal, "param=" + name);
    }

    if (is_html(resp)) {
        if (auto rec = sessions_.get(sid)) {
            auto injected = inject_csrf(resp.body, rec->csrf_token, sensitive_gets_, settings_.own_host);
            if (injected.forms + injected.links > 0) {
                log_controller(now, sid, ControllerOp::inject,
                               "forms=" + std::to_string(injected.forms) + " links=" + std::to_string(injected.links));
            }
        }
    }
    if (issued) {
        resp.headers.emplace_back("Set-Cookie", settings_.preprocessor.session_cookie_name + "=" + sid +
                                                    "; Path=/; HttpOnly; SameSite=Lax");
    }
    set_header(resp.headers, "Content-Length", std::to_string(resp.body.size()));
}

}  // namespace sentrygate
