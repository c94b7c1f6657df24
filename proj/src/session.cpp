#include "sentrygate/session.hpp"

#include <algorithm>

#include "json.hpp"

namespace sentrygate {

std::size_t SessionRecord::failed_logins_since(TimestampMs since) const {
    return static_cast<std::size_t>(
        std::count_if(failed_logins.begin(), failed_logins.end(), [since](TimestampMs t) { return t >= since; }));
}

SessionRecord SessionStore::create(const std::string& ip, const std::string& user_agent, TimestampMs now,
                                   RandomSource& rng) {
    SessionRecord rec;
    rec.bound_ip = ip;
    rec.bound_user_agent = user_agent;
    rec.created_at = now;
    rec.last_seen = now;
    rec.csrf_token = rng.hex_token(16);
    std::lock_guard lock(mutex_);
    do {
        rec.session_id = rng.hex_token(16);
    } while (live_.contains(rec.session_id) || revoked_.contains(rec.session_id));
    live_.emplace(rec.session_id, rec);
    return rec;
}

SessionLookup SessionStore::lookup(const std::optional<std::string>& session_id) const {
    if (!session_id) return {SessionState::absent, std::nullopt};
    std::lock_guard lock(mutex_);
    if (auto it = live_.find(*session_id); it != live_.end()) return {SessionState::active, it->second};
    if (revoked_.contains(*session_id)) return {SessionState::revoked, std::nullopt};
    return {SessionState::unknown, std::nullopt};
}

std::optional<SessionRecord> SessionStore::get(const std::string& session_id) const {
    std::lock_guard lock(mutex_);
    auto it = live_.find(session_id);
    if (it == live_.end()) return std::nullopt;
    return it->second;
}

bool SessionStore::update(const std::string& session_id, const std::function<void(SessionRecord&)>& fn) {
    std::lock_guard lock(mutex_);
    auto it = live_.find(session_id);
    if (it == live_.end()) return false;
    fn(it->second);
    return true;
}

void SessionStore::revoke(const std::string& session_id) {
    std::lock_guard lock(mutex_);
    live_.erase(session_id);
    revoked_.insert(session_id);
}

std::vector<std::string> SessionStore::revoke_user(const std::string& username) {
    std::lock_guard lock(mutex_);
    std::vector<std::string> ids;
    for (const auto& [id, rec] : live_) {
        if (rec.username == username) ids.push_back(id);
    }
    for (const auto& id : ids) {
        live_.erase(id);
        revoked_.insert(id);
    }
    return ids;
}

std::size_t SessionStore::live_count() const {
    std::lock_guard lock(mutex_);
    return live_.size();
}

std::string SessionStore::snapshot_json() const {
    std::lock_guard lock(mutex_);
    nlohmann::json doc = nlohmann::json::array();
    for (const auto& [id, rec] : live_) {
        nlohmann::json item{{"session_id", id},
                            {"role", rec.role},
                            {"created_at", rec.created_at},
                            {"last_seen", rec.last_seen},
                            {"bound_ip", rec.bound_ip},
                            {"bound_user_agent", rec.bound_user_agent},
                            {"watch_flag", rec.watch_flag}};
        item["username"] = rec.username ? nlohmann::json(*rec.username) : nlohmann::json(nullptr);
        doc.push_back(std::move(item));
    }
    return doc.dump(2);
}

}  // namespace sentrygate
