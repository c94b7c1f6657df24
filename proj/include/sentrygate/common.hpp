#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace sentrygate {

/// Milliseconds since the Unix epoch. Every time-dependent component takes
/// the current time as an argument; nothing reads the wall clock directly.
using TimestampMs = std::int64_t;

constexpr TimestampMs kSecondMs = 1000;
constexpr TimestampMs kMinuteMs = 60 * kSecondMs;

enum class AttackClass {
    sqli,
    xss,
    injection_other,
    type_violation,
    enum_violation,
    format_violation,
    open_redirect,
    tampering,
    protocol,
    bot,
    brute_force,
    session_hijack,
    session_expired,
    csrf,
    behavior_anomaly,
    unauthorized_access,
};

inline constexpr AttackClass kAllAttackClasses[] = {
    AttackClass::sqli,           AttackClass::xss,
    AttackClass::injection_other, AttackClass::type_violation,
    AttackClass::enum_violation, AttackClass::format_violation,
    AttackClass::open_redirect,  AttackClass::tampering,
    AttackClass::protocol,       AttackClass::bot,
    AttackClass::brute_force,    AttackClass::session_hijack,
    AttackClass::session_expired, AttackClass::csrf,
    AttackClass::behavior_anomaly, AttackClass::unauthorized_access,
};

enum class Tier { low, high };

std::string_view to_string(AttackClass c);
std::string_view to_string(Tier t);
std::optional<AttackClass> parse_attack_class(std::string_view s);
std::optional<Tier> parse_tier(std::string_view s);

struct ClientIdentity {
    std::string ip;
    std::optional<std::string> user_agent;
    std::optional<std::string> session_id;
    std::optional<std::string> username;
};

struct Evidence {
    std::string scope;    // e.g. "query:q" or "session"
    std::string excerpt;  // at most kMaxExcerpt bytes
};

constexpr std::size_t kMaxExcerpt = 256;

/// A detector finding.
struct Alert {
    AttackClass attack_class = AttackClass::protocol;
    Tier severity = Tier::low;
    Tier confidence = Tier::low;
    double score = 0.0;
    std::string module;
    Evidence evidence;
    ClientIdentity identity;
};

/// Builds an alert, truncating the excerpt to kMaxExcerpt bytes.
Alert make_alert(AttackClass c, Tier severity, Tier confidence, double score,
                 std::string module, std::string scope, std::string_view excerpt,
                 ClientIdentity identity);

/// Per-class severity used by detectors when raising alerts.
struct SeverityTable {
    std::map<AttackClass, Tier> tiers;

    Tier of(AttackClass c) const;
    static SeverityTable defaults();
};

// Errors surfaced through exceptions at component boundaries.

class MalformedRequest : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class TraceParseError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class InsufficientSamples : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// Small string helpers shared across modules.
std::string to_lower(std::string_view s);
bool iequals(std::string_view a, std::string_view b);
std::string_view trim(std::string_view s);
std::vector<std::string_view> split(std::string_view s, char sep);
bool starts_with_icase(std::string_view s, std::string_view prefix);

}  // namespace sentrygate
