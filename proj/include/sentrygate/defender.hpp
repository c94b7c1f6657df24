#pragma once

#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "sentrygate/common.hpp"
#include "sentrygate/connection_verifier.hpp"
#include "sentrygate/logger.hpp"
#include "sentrygate/session.hpp"

namespace sentrygate {

enum class ActionKind {
    log_only,
    monitor,
    reject_request,
    challenge_2f,
    force_logout,
    suspend_session,
    suspend_ip,
    suspend_service,
    block_ip,
    block_user,
};

inline constexpr ActionKind kAllActionKinds[] = {
    ActionKind::log_only,       ActionKind::monitor,    ActionKind::reject_request, ActionKind::challenge_2f,
    ActionKind::force_logout,   ActionKind::suspend_session, ActionKind::suspend_ip, ActionKind::suspend_service,
    ActionKind::block_ip,       ActionKind::block_user,
};

std::string_view to_string(ActionKind k);
std::optional<ActionKind> parse_action_kind(std::string_view s);

/// log_only < monitor < reject/challenge < force_logout/suspend < block
int strength(ActionKind k);
/// True when the current request must not reach the application.
bool rejects(ActionKind k);

struct ResponseAction {
    ActionKind kind = ActionKind::log_only;
    bool monitor = false;  // also watch the offender
    bool notify = false;   // also emit a notify record
    std::optional<TimestampMs> ttl;
    int http_status = 0;

    /// Strength of the primary kind, counting the monitor flag as monitor.
    int strength() const;
    std::string describe() const;  // "reject_request+monitor"
};

/// Matrix entry before the principal is known. "block" becomes block_user
/// for authenticated sessions and block_ip otherwise.
struct ActionSpec {
    std::optional<ActionKind> kind;  // nullopt = block principal
    bool monitor = false;
    bool notify = false;
    std::optional<TimestampMs> ttl;

    /// "reject_request+monitor", "force_logout+notify", "suspend_ip:600", "block"
    static ActionSpec parse(std::string_view text);
    std::string describe() const;
};

struct ResponsePolicy {
    /// Indexed by [severity][confidence].
    ActionSpec matrix[2][2];
    /// Keyed by class and an optional confidence ("csrf", "behavior_anomaly/low").
    std::map<std::pair<AttackClass, std::optional<Tier>>, ActionSpec> overrides;
    TimestampMs default_suspend_ttl = 600 * kSecondMs;

    static ResponsePolicy defaults();
    /// {"matrix": {"high/high": "block", ...}, "overrides": {...}, "suspend_ttl_s": 600}
    static ResponsePolicy from_json(const std::string& text);
};

constexpr int kRejectStatus = 403;
constexpr int kChallengeStatus = 401;

/// Pure: per-class override first, then the matrix cell.
ResponseAction select_response(const Alert& alert, const ResponsePolicy& policy);

struct ExecutionRecord {
    ResponseAction action;
    std::optional<Alert> alert;
    bool forwarded = false;
    int status = 0;  // client status when not forwarded
    std::vector<std::string> effects;
};

/// Escalation state and side effects of responses.
class Defender {
  public:
    Defender(ResponsePolicy policy, BlockList& blocks, SessionStore& sessions, Logger* logger);

    /// Applies watch escalation, then selects and executes the action.
    ExecutionRecord respond(Alert alert, TimestampMs now, const std::string& requested_url,
                            const std::string& path_template);

    /// Applies a selected action. Store failures fail closed.
    ExecutionRecord execute(const ResponseAction& action, const Alert& alert, TimestampMs now,
                            const std::string& requested_url, const std::string& path_template);

    /// A request stopped by the block list: reject without an alert.
    ExecutionRecord reject_blocked(const ClientIdentity& who, const std::string& reason, TimestampMs now,
                                   const std::string& requested_url);

    /// Second-factor challenge for a sensitive operation.
    ExecutionRecord challenge(const ClientIdentity& who, TimestampMs now, const std::string& requested_url);

    const ResponsePolicy& policy() const { return policy_; }

  private:
    bool watched(const Alert& alert) const;
    void watch(const Alert& alert);
    void log(const ResponseAction& action, const std::optional<Alert>& alert, const ClientIdentity& who,
             TimestampMs now, const std::string& url, const std::string& kind, const std::string& module,
             const std::string& scope, const std::string& excerpt);

    ResponsePolicy policy_;
    BlockList& blocks_;
    SessionStore& sessions_;
    Logger* logger_;
    mutable std::mutex mutex_;
    std::map<std::string, std::set<AttackClass>> ip_watch_;
};

}  // namespace sentrygate
