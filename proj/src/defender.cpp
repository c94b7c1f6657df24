#include "sentrygate/defender.hpp"

#include <array>
#include <charconv>

#include "json.hpp"

namespace sentrygate {

using nlohmann::json;

namespace {

constexpr std::array<std::pair<ActionKind, std::string_view>, 10> kKindNames{{
    {ActionKind::log_only, "log_only"},
    {ActionKind::monitor, "monitor"},
    {ActionKind::reject_request, "reject_request"},
    {ActionKind::challenge_2f, "challenge_2f"},
    {ActionKind::force_logout, "force_logout"},
    {ActionKind::suspend_session, "suspend_session"},
    {ActionKind::suspend_ip, "suspend_ip"},
    {ActionKind::suspend_service, "suspend_service"},
    {ActionKind::block_ip, "block_ip"},
    {ActionKind::block_user, "block_user"},
}};

bool is_suspension(ActionKind k) {
    return k == ActionKind::suspend_session || k == ActionKind::suspend_ip || k == ActionKind::suspend_service;
}

std::size_t tier_index(Tier t) { return t == Tier::high ? 1 : 0; }

std::pair<AttackClass, std::optional<Tier>> parse_override_key(const std::string& key) {
    auto slash = key.find('/');
    auto cls = parse_attack_class(key.substr(0, slash));
    if (!cls) throw ConfigError("response_policy override for unknown class: " + key);
    std::optional<Tier> conf;
    if (slash != std::string::npos) {
        conf = parse_tier(key.substr(slash + 1));
        if (!conf) throw ConfigError("response_policy override with bad confidence: " + key);
    }
    return {*cls, conf};
}

}  // namespace

std::string_view to_string(ActionKind k) {
    for (const auto& [kind, name] : kKindNames) {
        if (kind == k) return name;
    }
    return "log_only";
}

std::optional<ActionKind> parse_action_kind(std::string_view s) {
    for (const auto& [kind, name] : kKindNames) {
        if (name == s) return kind;
    }
    return std::nullopt;
}

int strength(ActionKind k) {
    switch (k) {
        case ActionKind::log_only: return 0;
        case ActionKind::monitor: return 1;
        case ActionKind::reject_request:
        case ActionKind::challenge_2f: return 2;
        case ActionKind::force_logout:
        case ActionKind::suspend_session:
        case ActionKind::suspend_ip:
        case ActionKind::suspend_service: return 3;
        case ActionKind::block_ip:
        case ActionKind::block_user: return 4;
    }
    return 0;
}

bool rejects(ActionKind k) { return strength(k) >= 2; }

int ResponseAction::strength() const { return std::max(sentrygate::strength(kind), monitor ? 1 : 0); }

std::string ResponseAction::describe() const {
    std::string s(to_string(kind));
    if (monitor) s += "+monitor";
    if (notify) s += "+notify";
    return s;
}

ActionSpec ActionSpec::parse(std::string_view text) {
    ActionSpec spec;
    bool have_kind = false;
    for (auto token : split(text, '+')) {
        token = trim(token);
        std::optional<TimestampMs> ttl;
        if (auto colon = token.find(':'); colon != std::string_view::npos) {
            long long secs = 0;
            auto digits = token.substr(colon + 1);
            auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), secs);
            if (ec != std::errc{} || ptr != digits.data() + digits.size() || secs <= 0) {
                throw ConfigError("bad ttl in action: " + std::string(text));
            }
            ttl = secs * kSecondMs;
            token = token.substr(0, colon);
        }
        if (token == "monitor" && have_kind) {
            spec.monitor = true;
        } else if (token == "notify") {
            spec.notify = true;
        } else if (token == "block" && !have_kind) {
            have_kind = true;
        } else if (auto k = parse_action_kind(token); k && !have_kind) {
            spec.kind = *k;
            have_kind = true;
        } else {
            throw ConfigError("bad action: " + std::string(text));
        }
        if (ttl) spec.ttl = ttl;
    }
    if (!have_kind) throw ConfigError("action without a primary kind: " + std::string(text));
    if (spec.ttl && !(spec.kind && is_suspension(*spec.kind))) {
        throw ConfigError("ttl only applies to suspensions: " + std::string(text));
    }
    return spec;
}

std::string ActionSpec::describe() const {
    std::string s = kind ? std::string(to_string(*kind)) : "block";
    if (ttl) s += ":" + std::to_string(*ttl / kSecondMs);
    if (monitor) s += "+monitor";
    if (notify) s += "+notify";
    return s;
}

ResponsePolicy ResponsePolicy::defaults() {
    ResponsePolicy p;
    auto at = [&](Tier sev, Tier conf) -> ActionSpec& { return p.matrix[tier_index(sev)][tier_index(conf)]; };
    at(Tier::high, Tier::high) = ActionSpec::parse("block");
    at(Tier::low, Tier::high) = ActionSpec::parse("reject_request");
    at(Tier::low, Tier::low) = ActionSpec::parse("log_only");
    at(Tier::high, Tier::low) = ActionSpec::parse("reject_request+monitor");
    p.overrides[{AttackClass::session_hijack, std::nullopt}] = ActionSpec::parse("force_logout+notify");
    p.overrides[{AttackClass::session_expired, std::nullopt}] = ActionSpec::parse("force_logout");
    p.overrides[{AttackClass::csrf, std::nullopt}] = ActionSpec::parse("reject_request");
    p.overrides[{AttackClass::behavior_anomaly, Tier::low}] = ActionSpec::parse("monitor");
    return p;
}

ResponsePolicy ResponsePolicy::from_json(const std::string& text) {
    ResponsePolicy p = defaults();
    try {
        auto doc = json::parse(text);
        if (doc.contains("matrix")) {
            for (const auto& [cell, action] : doc.at("matrix").items()) {
                auto slash = cell.find('/');
                auto sev = parse_tier(cell.substr(0, slash));
                auto conf = slash == std::string::npos ? std::nullopt : parse_tier(cell.substr(slash + 1));
                if (!sev || !conf) throw ConfigError("response_policy matrix cell: " + cell);
                p.matrix[tier_index(*sev)][tier_index(*conf)] = ActionSpec::parse(action.get<std::string>());
            }
        }
        if (doc.contains("overrides")) {
            p.overrides.clear();
            for (const auto& [key, action] : doc.at("overrides").items()) {
                p.overrides[parse_override_key(key)] = ActionSpec::parse(action.get<std::string>());
            }
        }
        if (doc.contains("suspend_ttl_s")) {
            auto secs = doc.at("suspend_ttl_s").get<long long>();
            if (secs <= 0) throw ConfigError("suspend_ttl_s must be positive");
            p.default_suspend_ttl = secs * kSecondMs;
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("response_policy: ") + e.what());
    }
    return p;
}

ResponseAction select_response(const Alert& alert, const ResponsePolicy& policy) {
    const ActionSpec* spec = nullptr;
    if (auto it = policy.overrides.find({alert.attack_class, alert.confidence}); it != policy.overrides.end()) {
        spec = &it->second;
    } else if (auto any = policy.overrides.find({alert.attack_class, std::nullopt}); any != policy.overrides.end()) {
        spec = &any->second;
    } else {
        spec = &policy.matrix[tier_index(alert.severity)][tier_index(alert.confidence)];
    }

    ResponseAction a;
    a.kind = spec->kind.value_or(alert.identity.username ? ActionKind::block_user : ActionKind::block_ip);
    if (a.kind == ActionKind::block_user && !alert.identity.username) a.kind = ActionKind::block_ip;
    a.monitor = spec->monitor;
    a.notify = spec->notify;
    if (is_suspension(a.kind)) a.ttl = spec->ttl.value_or(policy.default_suspend_ttl);
    if (a.kind == ActionKind::challenge_2f) {
        a.http_status = kChallengeStatus;
    } else if (rejects(a.kind)) {
        a.http_status = kRejectStatus;
    }
    return a;
}

// ---------------------------------------------------------------------------

Defender::Defender(ResponsePolicy policy, BlockList& blocks, SessionStore& sessions, Logger* logger)
    : policy_(std::move(policy)), blocks_(blocks), sessions_(sessions), logger_(logger) {}

bool Defender::watched(const Alert& alert) const {
    if (alert.identity.session_id) {
        if (auto s = sessions_.get(*alert.identity.session_id)) {
            return s->watch_flag && s->watch_class == alert.attack_class;
        }
    }
    std::lock_guard lock(mutex_);
    auto it = ip_watch_.find(alert.identity.ip);
    return it != ip_watch_.end() && it->second.contains(alert.attack_class);
}

void Defender::watch(const Alert& alert) {
    if (alert.identity.session_id) {
        bool live = sessions_.update(*alert.identity.session_id, [&](SessionRecord& s) {
            s.watch_flag = true;
            s.watch_class = alert.attack_class;
        });
        if (live) return;
    }
    std::lock_guard lock(mutex_);
    ip_watch_[alert.identity.ip].insert(alert.attack_class);
}

ExecutionRecord Defender::respond(Alert alert, TimestampMs now, const std::string& requested_url,
                                  const std::string& path_template) {
    if (alert.confidence == Tier::low && watched(alert)) alert.confidence = Tier::high;
    return execute(select_response(alert, policy_), alert, now, requested_url, path_template);
}

ExecutionRecord Defender::execute(const ResponseAction& action, const Alert& alert, TimestampMs now,
                                  const std::string& requested_url, const std::string& path_template) {
    ExecutionRecord rec;
    rec.action = action;
    rec.alert = alert;
    const auto& who = alert.identity;
    auto reason = std::string(to_string(alert.attack_class));

    try {
        auto suspend_until = [&]() -> std::optional<TimestampMs> {
            return action.ttl ? std::optional<TimestampMs>(now + *action.ttl) : std::nullopt;
        };
        switch (action.kind) {
            case ActionKind::log_only:
            case ActionKind::monitor:
            case ActionKind::reject_request:
            case ActionKind::challenge_2f:
                break;
            case ActionKind::force_logout:
                if (who.session_id) {
                    sessions_.revoke(*who.session_id);
                    rec.effects.push_back("session-revoked");
                }
                break;
            case ActionKind::suspend_session:
                if (who.session_id) {
                    blocks_.upsert({BlockKind::source_session, *who.session_id, suspend_until(), reason});
                    rec.effects.push_back("session-suspended");
                }
                break;
            case ActionKind::suspend_ip:
                blocks_.upsert({BlockKind::source_ip, who.ip, suspend_until(), reason});
                rec.effects.push_back("ip-suspended");
                break;
            case ActionKind::suspend_service:
                blocks_.upsert({BlockKind::target_path, path_template, suspend_until(), reason});
                rec.effects.push_back("service-suspended");
                break;
            case ActionKind::block_ip:
                blocks_.upsert({BlockKind::source_ip, who.ip, std::nullopt, reason});
                rec.effects.push_back("ip-blocked");
                break;
            case ActionKind::block_user:
                if (who.username) {
                    blocks_.upsert({BlockKind::source_user, *who.username, std::nullopt, reason});
                    sessions_.revoke_user(*who.username);
                    rec.effects.push_back("user-blocked");
                } else {
                    blocks_.upsert({BlockKind::source_ip, who.ip, std::nullopt, reason});
                    rec.effects.push_back("ip-blocked");
                }
                break;
        }
        if (action.monitor || action.kind == ActionKind::monitor) {
            watch(alert);
            rec.effects.push_back("watching");
        }
    } catch (const std::exception&) {
        // Fail closed.
        rec.action = ResponseAction{ActionKind::reject_request, false, false, std::nullopt, kRejectStatus};
        rec.effects.push_back("store-unavailable");
    }

    rec.forwarded = !rejects(rec.action.kind);
    rec.status = rec.forwarded ? 0 : rec.action.http_status;
    log(rec.action, alert, who, now, requested_url, "action", alert.module, alert.evidence.scope,
        alert.evidence.excerpt);
    if (rec.action.notify) {
        log(rec.action, alert, who, now, requested_url, "notify", alert.module, alert.evidence.scope,
            alert.evidence.excerpt);
    }
    return rec;
}

ExecutionRecord Defender::reject_blocked(const ClientIdentity& who, const std::string& reason, TimestampMs now,
                                         const std::string& requested_url) {
    ExecutionRecord rec;
    rec.action = ResponseAction{ActionKind::reject_request, false, false, std::nullopt, kRejectStatus};
    rec.status = kRejectStatus;
    log(rec.action, std::nullopt, who, now, requested_url, "action", "connection_verifier", "block-list", reason);
    return rec;
}

ExecutionRecord Defender::challenge(const ClientIdentity& who, TimestampMs now, const std::string& requested_url) {
    ExecutionRecord rec;
    rec.action = ResponseAction{ActionKind::challenge_2f, false, false, std::nullopt, kChallengeStatus};
    rec.status = kChallengeStatus;
    log(rec.action, std::nullopt, who, now, requested_url, "action", "access_controller", "second-factor",
        "challenge");
    return rec;
}

void Defender::log(const ResponseAction& action, const std::optional<Alert>& alert, const ClientIdentity& who,
                   TimestampMs now, const std::string& url, const std::string& kind, const std::string& module,
                   const std::string& scope, const std::string& excerpt) {
    if (logger_ == nullptr) return;
    DefenderLogRecord r;
    r.ts = now;
    r.kind = kind;
    r.username = who.username;
    r.ip = who.ip;
    r.session_id = who.session_id;
    if (alert) {
        r.attack_class = alert->attack_class;
        r.severity = alert->severity;
        r.confidence = alert->confidence;
        r.score = alert->score;
    }
    r.requested_url = escape_excerpt(url);
    r.module = module;
    r.action_kind = action.describe();
    r.evidence_scope = escape_excerpt(scope);
    r.evidence_excerpt = escape_excerpt(excerpt);
    logger_->append(std::move(r));
}

}  // namespace sentrygate
