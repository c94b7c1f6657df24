#include "sentrygate/access_controller.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "json.hpp"

namespace sentrygate {

using nlohmann::json;

Operation parse_operation(std::string_view text) {
    auto t = trim(text);
    auto space = t.find(' ');
    if (space == std::string_view::npos || space == 0) {
        throw ConfigError("operation must look like 'METHOD /path': " + std::string(text));
    }
    auto path = trim(t.substr(space + 1));
    if (path.empty() || path.front() != '/') throw ConfigError("operation path must start with '/': " + std::string(text));
    return {std::string(t.substr(0, space)), std::string(path)};
}

std::string format_operation(const Operation& op) { return op.first + " " + op.second; }

RbacPolicy RbacPolicy::from_json(const std::string& text) {
    RbacPolicy p;
    try {
        auto doc = json::parse(text);
        for (const auto& r : doc.at("roles")) p.roles.insert(r.get<std::string>());
        if (doc.contains("grants")) {
            for (const auto& [role, ops] : doc.at("grants").items()) {
                if (!p.roles.contains(role)) throw ConfigError("rbac grant for undeclared role: " + role);
                auto& set = p.grants[role];
                for (const auto& op : ops) set.insert(parse_operation(op.get<std::string>()));
            }
        }
        if (doc.contains("sensitive")) {
            for (const auto& op : doc.at("sensitive")) p.sensitive_ops.insert(parse_operation(op.get<std::string>()));
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("rbac policy: ") + e.what());
    }
    return p;
}

bool RbacPolicy::listed(const Operation& op) const {
    for (const auto& [role, ops] : grants) {
        if (ops.contains(op)) return true;
    }
    return false;
}

GateDecision gate_sensitive(const Operation& op, const std::optional<SessionRecord>& session,
                            const RbacPolicy& policy, TimestampMs now) {
    if (!policy.is_sensitive(op)) return GateDecision::proceed;
    if (session && session->second_factor_at && now - *session->second_factor_at <= kSecondFactorValidity &&
        now >= *session->second_factor_at) {
        return GateDecision::proceed;
    }
    return GateDecision::challenge_required;
}

std::string otp_code(const Key256& otp_key, std::string_view session_id, TimestampMs ts) {
    auto minute = ts / kMinuteMs;
    std::string msg(session_id);
    msg += '|';
    msg += std::to_string(minute);
    auto d = hmac_sha256(otp_key, msg);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v = (v << 8) | d[static_cast<std::size_t>(i)];
    char buf[8];
    std::snprintf(buf, sizeof buf, "%06llu", static_cast<unsigned long long>(v % 1000000));
    return buf;
}

bool verify_otp(const Key256& otp_key, std::string_view session_id, std::string_view code, TimestampMs now) {
    if (code.size() != 6) return false;
    bool ok = false;
    for (TimestampMs skew : {-kMinuteMs, TimestampMs{0}, kMinuteMs}) {
        auto expected = otp_code(otp_key, session_id, now + skew);
        ok |= constant_time_equal({reinterpret_cast<const std::uint8_t*>(expected.data()), expected.size()},
                                  {reinterpret_cast<const std::uint8_t*>(code.data()), code.size()});
    }
    return ok;
}

std::string_view to_string(RbacDecision d) {
    switch (d) {
        case RbacDecision::allowed: return "allowed";
        case RbacDecision::denied: return "denied";
        case RbacDecision::unlisted: return "unlisted";
    }
    return "unlisted";
}

RbacDecision rbac_check(const Operation& op, std::string_view role, const RbacPolicy& policy) {
    if (!policy.listed(op)) return RbacDecision::unlisted;
    auto it = policy.grants.find(std::string(role));
    if (it != policy.grants.end() && it->second.contains(op)) return RbacDecision::allowed;
    return RbacDecision::denied;
}

std::size_t RoleProfile::count(const std::string& role, const Operation& op) const {
    auto r = counts.find(role);
    if (r == counts.end()) return 0;
    auto it = r->second.find(op);
    return it == r->second.end() ? 0 : it->second;
}

std::string RoleProfile::to_json() const {
    json doc;
    doc["min_support"] = min_support;
    json roles = json::object();
    for (const auto& [role, ops] : counts) {
        json m = json::object();
        for (const auto& [op, n] : ops) m[format_operation(op)] = n;
        roles[role] = m;
    }
    doc["counts"] = roles;
    return doc.dump();
}

RoleProfile RoleProfile::from_json(const std::string& text) {
    RoleProfile p;
    try {
        auto doc = json::parse(text);
        p.min_support = doc.value("min_support", std::size_t{5});
        for (const auto& [role, ops] : doc.at("counts").items()) {
            for (const auto& [op, n] : ops.items()) p.counts[role][parse_operation(op)] = n.get<std::size_t>();
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("role profiles: ") + e.what());
    }
    return p;
}

RoleProfile train_role_profiles(std::span<const RoleObservation> trace, std::size_t min_support) {
    RoleProfile p;
    p.min_support = min_support;
    for (const auto& obs : trace) ++p.counts[obs.role][obs.op];
    return p;
}

std::string GapRecord::to_json_line() const {
    json doc{{"ts", ts},
             {"role", role},
             {"method", op.first},
             {"path_template", op.second},
             {"support", support},
             {"decision", passed ? "pass" : "alert"}};
    return doc.dump();
}

void GapReport::append(const GapRecord& rec) {
    std::lock_guard lock(mutex_);
    records_.push_back(rec);
    if (!path_.empty()) {
        std::error_code ec;
        auto dir = std::filesystem::path(path_).parent_path();
        if (!dir.empty()) std::filesystem::create_directories(dir, ec);
        std::ofstream out(path_, std::ios::app);
        out << rec.to_json_line() << '\n';
    }
}

std::vector<GapRecord> GapReport::records() const {
    std::lock_guard lock(mutex_);
    return records_;
}

std::set<Operation> GapReport::operations() const {
    std::lock_guard lock(mutex_);
    std::set<Operation> ops;
    for (const auto& r : records_) ops.insert(r.op);
    return ops;
}

std::string summarize_gap_report(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open gap report: " + path);
    struct Tally {
        std::set<std::string> roles;
        std::size_t passed = 0;
        std::size_t alerted = 0;
    };
    std::map<Operation, Tally> tallies;
    std::string line;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        json rec;
        try {
            rec = json::parse(line);
            Operation op{rec.at("method").get<std::string>(), rec.at("path_template").get<std::string>()};
            auto& t = tallies[op];
            t.roles.insert(rec.at("role").get<std::string>());
            (rec.at("decision") == "pass" ? t.passed : t.alerted) += 1;
        } catch (const json::exception& e) {
            throw TraceParseError(std::string("gap report line: ") + e.what());
        }
    }
    json out = json::array();
    for (const auto& [op, t] : tallies) {
        out.push_back({{"method", op.first},
                       {"path_template", op.second},
                       {"roles", t.roles},
                       {"passed", t.passed},
                       {"alerted", t.alerted}});
    }
    return out.dump(2);
}

AccessResult check_access(const CanonicalRequest& req, const std::optional<SessionRecord>& session,
                          const AccessContext& ctx, TimestampMs now) {
    AccessResult r;
    Operation op{req.method, req.path_template};
    std::string role = session ? session->role : std::string(kAnonymousRole);
    auto alert = [&](Tier confidence, double score, std::string scope, std::string excerpt) {
        return make_alert(AttackClass::unauthorized_access, ctx.severity.of(AttackClass::unauthorized_access),
                          confidence, score, std::string(kAccessControllerModule), std::move(scope), excerpt,
                          req.identity);
    };

    if (gate_sensitive(op, session, ctx.policy, now) == GateDecision::challenge_required) {
        const ParamValue* otp = req.param(kOtpParam);
        if (otp == nullptr) {
            r.challenge = true;
            return r;
        }
        if (!session || !verify_otp(ctx.otp_key, session->session_id, otp->form_value, now)) {
            r.alert = alert(Tier::low, 0.0, "second-factor", "otp=invalid op=" + format_operation(op));
            return r;
        }
        r.otp_accepted = true;
    }

    r.decision = rbac_check(op, role, ctx.policy);
    switch (*r.decision) {
        case RbacDecision::allowed:
            break;
        case RbacDecision::denied:
            r.alert = alert(Tier::high, 1.0, "rbac", "role=" + role + " op=" + format_operation(op));
            break;
        case RbacDecision::unlisted: {
            auto support = ctx.roles.count(role, op);
            bool passed = support >= ctx.roles.min_support;
            if (ctx.gaps) ctx.gaps->append({now, role, op, support, passed});
            if (!passed) {
                r.alert = alert(Tier::low, static_cast<double>(support), "rbac-unlisted",
                                "role=" + role + " op=" + format_operation(op) + " support=" + std::to_string(support));
            }
            break;
        }
    }
    return r;
}

}  // namespace sentrygate
