#pragma once

#include <deque>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "sentrygate/common.hpp"
#include "sentrygate/crypto.hpp"

namespace sentrygate {

inline constexpr std::string_view kAnonymousRole = "visitor";

/// Per-session state owned by the proxy. The proxy issues both the session
/// id and the anti-CSRF token.
struct SessionRecord {
    std::string session_id;
    std::optional<std::string> username;
    std::string role = std::string(kAnonymousRole);
    TimestampMs created_at = 0;
    TimestampMs last_seen = 0;
    std::string bound_ip;
    std::string bound_user_agent;
    std::string csrf_token;  // 128-bit hex
    std::deque<TimestampMs> failed_logins;
    bool watch_flag = false;
    std::optional<AttackClass> watch_class;
    std::optional<TimestampMs> second_factor_at;
    std::optional<std::string> last_action;

    std::size_t failed_logins_since(TimestampMs since) const;
};

enum class SessionState { absent, active, revoked, unknown };

struct SessionLookup {
    SessionState state = SessionState::absent;
    std::optional<SessionRecord> record;
};

/// In-memory session store. Mutations are serialized per store; callers get
/// copies, never references into the map.
class SessionStore {
  public:
    SessionRecord create(const std::string& ip, const std::string& user_agent, TimestampMs now,
                         RandomSource& rng);
    SessionLookup lookup(const std::optional<std::string>& session_id) const;
    std::optional<SessionRecord> get(const std::string& session_id) const;

    /// Applies `fn` to a live session; returns false when it does not exist.
    bool update(const std::string& session_id, const std::function<void(SessionRecord&)>& fn);
    void revoke(const std::string& session_id);
    /// Revokes every live session of `username`.
    std::vector<std::string> revoke_user(const std::string& username);

    std::size_t live_count() const;
    std::string snapshot_json() const;

  private:
    mutable std::mutex mutex_;
    std::map<std::string, SessionRecord> live_;
    std::set<std::string> revoked_;
};

}  // namespace sentrygate
