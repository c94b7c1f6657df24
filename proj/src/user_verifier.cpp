#include "sentrygate/user_verifier.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "json.hpp"
#include "sentrygate/crypto.hpp"

namespace sentrygate {

namespace {

bool token_equal(std::string_view a, std::string_view b) {
    if (a.size() != b.size()) return false;
    return constant_time_equal({reinterpret_cast<const std::uint8_t*>(a.data()), a.size()},
                               {reinterpret_cast<const std::uint8_t*>(b.data()), b.size()});
}

Alert session_alert(AttackClass c, Tier confidence, double score, const CanonicalRequest& req,
                    std::string_view excerpt, const SeverityTable& sev) {
    return make_alert(c, sev.of(c), confidence, score, std::string(kUserVerifierModule), "session", excerpt,
                      req.identity);
}

int hour_of(TimestampMs ts) {
    auto h = (ts / (60 * kMinuteMs)) % 24;
    return static_cast<int>(h < 0 ? h + 24 : h);
}

}  // namespace

bool is_state_changing(std::string_view method) {
    return method != "GET" && method != "HEAD" && method != "OPTIONS";
}

std::optional<Alert> verify_stage1(const CanonicalRequest& req, const std::optional<SessionRecord>& session,
                                   TimestampMs now, const SessionLimits& limits, const SeverityTable& sev) {
    if (!session) return std::nullopt;
    const auto& s = *session;

    auto failures = s.failed_logins_since(now - limits.login_window);
    if (failures > limits.login_threshold) {
        return session_alert(AttackClass::brute_force, Tier::high, static_cast<double>(failures), req,
                             "failed_logins=" + std::to_string(failures), sev);
    }

    std::string ua = req.identity.user_agent.value_or("");
    bool ip_changed = req.identity.ip != s.bound_ip;
    bool ua_changed = ua != s.bound_user_agent;
    if (ip_changed || ua_changed) {
        std::string what = ip_changed && ua_changed ? "ip+user_agent" : (ip_changed ? "ip" : "user_agent");
        return session_alert(AttackClass::session_hijack, ip_changed && ua_changed ? Tier::high : Tier::low,
                             ip_changed && ua_changed ? 2.0 : 1.0, req, "changed=" + what, sev);
    }

    if (now - s.last_seen > limits.idle_timeout) {
        return session_alert(AttackClass::session_expired, Tier::high,
                             static_cast<double>(now - s.last_seen) / kSecondMs, req,
                             "idle_ms=" + std::to_string(now - s.last_seen), sev);
    }

    if (is_state_changing(req.method)) {
        const ParamValue* token = req.param(kCsrfParam);
        if (token == nullptr || !token_equal(token->form_value, s.csrf_token)) {
            return session_alert(AttackClass::csrf, Tier::high, 1.0, req,
                                 token == nullptr ? "token=missing" : "token=mismatch", sev);
        }
    }
    return std::nullopt;
}

Alert unknown_session_alert(const CanonicalRequest& req, const SeverityTable& sev) {
    return session_alert(AttackClass::session_hijack, Tier::low, 0.0, req, "hijack-suspect unknown-session-id", sev);
}

std::string action_key(std::string_view method, std::string_view path_template) {
    std::string key(method);
    key += ' ';
    key += path_template;
    return key;
}

// ---------------------------------------------------------------------------

void UserProfile::observe(const std::optional<std::string>& prev, const std::string& action, TimestampMs ts) {
    ++freq_[action];
    ++total_;
    ++hours_[static_cast<std::size_t>(hour_of(ts))];
    if (prev) {
        ++transitions_[{*prev, action}];
        ++outgoing_[*prev];
    }
}

std::size_t UserProfile::transition_count(const std::string& prev, const std::string& action) const {
    auto it = transitions_.find({prev, action});
    return it == transitions_.end() ? 0 : it->second;
}

double UserProfile::probability(const std::optional<std::string>& prev, const std::string& action) const {
    // One extra slot for every unseen action.
    double outcomes = static_cast<double>(freq_.size() + 1);
    if (prev) {
        auto ctx = outgoing_.find(*prev);
        if (ctx != outgoing_.end() && ctx->second > 0) {
            return (static_cast<double>(transition_count(*prev, action)) + kAlpha) /
                   (static_cast<double>(ctx->second) + kAlpha * outcomes);
        }
    }
    auto it = freq_.find(action);
    double count = it == freq_.end() ? 0.0 : static_cast<double>(it->second);
    return (count + kAlpha) / (static_cast<double>(total_) + kAlpha * outcomes);
}

double UserProfile::score(const std::optional<std::string>& prev, const std::string& action) const {
    return -std::log(probability(prev, action)) / entropy_;
}

void UserProfile::finalize(std::span<const std::pair<std::optional<std::string>, std::string>> training) {
    // Entropy of the smoothed unigram, including the unseen slot.
    double outcomes = static_cast<double>(freq_.size() + 1);
    double denom = static_cast<double>(total_) + kAlpha * outcomes;
    double h = 0.0;
    for (const auto& [action, count] : freq_) {
        double p = (static_cast<double>(count) + kAlpha) / denom;
        h -= p * std::log(p);
    }
    double p_unseen = kAlpha / denom;
    h -= p_unseen * std::log(p_unseen);
    entropy_ = h > 1e-9 ? h : 1.0;

    // The threshold sits one bit above the worst training score, so every
    // training observation passes and small online drift does not flip it.
    double worst = 0.0;
    for (const auto& [prev, action] : training) worst = std::max(worst, score(prev, action));
    threshold_ = worst + std::log(2.0) / entropy_;
    trained_ = !training.empty();
}

std::string UserProfile::to_json() const {
    nlohmann::json doc;
    doc["action_freq"] = freq_;
    nlohmann::json trans = nlohmann::json::array();
    for (const auto& [key, count] : transitions_) trans.push_back({key.first, key.second, count});
    doc["transitions"] = trans;
    doc["hour_histogram"] = hours_;
    doc["total_actions"] = total_;
    doc["entropy"] = entropy_;
    doc["anomaly_threshold"] = threshold_;
    doc["trained"] = trained_;
    return doc.dump();
}

UserProfile UserProfile::from_json(const std::string& text) {
    UserProfile p;
    try {
        auto doc = nlohmann::json::parse(text);
        p.freq_ = doc.at("action_freq").get<std::map<std::string, std::size_t>>();
        for (const auto& t : doc.at("transitions")) {
            auto prev = t.at(0).get<std::string>();
            auto count = t.at(2).get<std::size_t>();
            p.transitions_[{prev, t.at(1).get<std::string>()}] = count;
            p.outgoing_[prev] += count;
        }
        p.hours_ = doc.at("hour_histogram").get<std::array<std::size_t, 24>>();
        p.total_ = doc.at("total_actions").get<std::size_t>();
        p.entropy_ = doc.at("entropy").get<double>();
        p.threshold_ = doc.at("anomaly_threshold").get<double>();
        p.trained_ = doc.at("trained").get<bool>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("user profile: ") + e.what());
    }
    if (!std::isfinite(p.threshold_) || p.entropy_ <= 0.0) throw ConfigError("user profile: bad threshold");
    return p;
}

std::map<std::string, UserProfile> train_user_profiles(std::span<const UserActionEvent> trace) {
    std::map<std::string, UserProfile> profiles;
    std::map<std::string, std::vector<std::pair<std::optional<std::string>, std::string>>> pairs;
    std::map<std::string, std::string> last_in_session;
    for (const auto& ev : trace) {
        std::optional<std::string> prev;
        if (auto it = last_in_session.find(ev.session_id); it != last_in_session.end()) prev = it->second;
        profiles[ev.username].observe(prev, ev.action, ev.ts);
        pairs[ev.username].emplace_back(prev, ev.action);
        last_in_session[ev.session_id] = ev.action;
    }
    for (auto& [user, profile] : profiles) profile.finalize(pairs[user]);
    return profiles;
}

Stage2Result verify_stage2(const CanonicalRequest& req, const UserProfile* profile,
                           const std::optional<std::string>& prev_action, const SeverityTable& sev) {
    Stage2Result r;
    if (profile == nullptr || !profile->trained()) {
        r.untrained = true;
        return r;
    }
    auto action = action_key(req.method, req.path_template);
    r.score = profile->score(prev_action, action);
    double threshold = profile->anomaly_threshold();
    if (r.score > threshold) {
        Tier conf = r.score > 2.0 * threshold ? Tier::high : Tier::low;
        r.alert = make_alert(AttackClass::behavior_anomaly, sev.of(AttackClass::behavior_anomaly), conf, r.score,
                             std::string(kUserVerifierModule), "action", action, req.identity);
    }
    return r;
}

}  // namespace sentrygate
