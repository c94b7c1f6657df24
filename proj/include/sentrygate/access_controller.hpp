#pragma once

#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sentrygate/common.hpp"
#include "sentrygate/crypto.hpp"
#include "sentrygate/preprocessor.hpp"
#include "sentrygate/session.hpp"

namespace sentrygate {

constexpr std::string_view kAccessControllerModule = "access_controller";
inline constexpr std::string_view kOtpParam = "__ips_otp";

/// (method, path_template)
using Operation = std::pair<std::string, std::string>;

struct RbacPolicy {
    std::set<std::string> roles;
    std::map<std::string, std::set<Operation>> grants;
    std::set<Operation> sensitive_ops;

    /// {"roles": [...], "grants": {role: ["GET /x", ...]}, "sensitive": ["POST /y"]}.
    /// Throws ConfigError when a grant names an undeclared role.
    static RbacPolicy from_json(const std::string& text);
    bool listed(const Operation& op) const;
    bool is_sensitive(const Operation& op) const { return sensitive_ops.contains(op); }
};

Operation parse_operation(std::string_view text);
std::string format_operation(const Operation& op);

constexpr TimestampMs kSecondFactorValidity = 5 * kMinuteMs;

enum class GateDecision { proceed, challenge_required };

GateDecision gate_sensitive(const Operation& op, const std::optional<SessionRecord>& session,
                            const RbacPolicy& policy, TimestampMs now);

/// Six-digit code for a session and minute. The harness identity stub hands
/// the same code to legitimate users.
std::string otp_code(const Key256& otp_key, std::string_view session_id, TimestampMs ts);
/// Accepts the codes for the current minute and its neighbours.
bool verify_otp(const Key256& otp_key, std::string_view session_id, std::string_view code, TimestampMs now);

enum class RbacDecision { allowed, denied, unlisted };
std::string_view to_string(RbacDecision d);

RbacDecision rbac_check(const Operation& op, std::string_view role, const RbacPolicy& policy);

struct RoleProfile {
    std::map<std::string, std::map<Operation, std::size_t>> counts;
    std::size_t min_support = 5;

    std::size_t count(const std::string& role, const Operation& op) const;
    std::string to_json() const;
    static RoleProfile from_json(const std::string& text);
};

struct RoleObservation {
    std::string role;
    Operation op;
};

RoleProfile train_role_profiles(std::span<const RoleObservation> trace, std::size_t min_support = 5);

struct GapRecord {
    TimestampMs ts = 0;
    std::string role;
    Operation op;
    std::size_t support = 0;
    bool passed = false;

    std::string to_json_line() const;
};

/// Collects rbac-gap decisions; optionally appends each as a JSON line.
class GapReport {
  public:
    explicit GapReport(std::string path = {}) : path_(std::move(path)) {}
    void append(const GapRecord& rec);
    std::vector<GapRecord> records() const;
    std::set<Operation> operations() const;

  private:
    std::string path_;
    mutable std::mutex mutex_;
    std::vector<GapRecord> records_;
};

/// Reads a gap report file and groups it by operation.
std::string summarize_gap_report(const std::string& path);

struct AccessResult {
    std::optional<Alert> alert;
    bool challenge = false;  // second factor required before forwarding
    bool otp_accepted = false;
    std::optional<RbacDecision> decision;
};

struct AccessContext {
    const RbacPolicy& policy;
    const RoleProfile& roles;
    const Key256& otp_key;
    const SeverityTable& severity;
    GapReport* gaps = nullptr;
};

/// Gate, then RBAC, then the unlisted-operation analyzer. A valid OTP on a
/// sensitive request is reported through `otp_accepted` so the caller can
/// record the grant.
AccessResult check_access(const CanonicalRequest& req, const std::optional<SessionRecord>& session,
                          const AccessContext& ctx, TimestampMs now);

}  // namespace sentrygate
