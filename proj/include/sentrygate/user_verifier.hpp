#pragma once

#include <array>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>

#include "sentrygate/common.hpp"
#include "sentrygate/preprocessor.hpp"
#include "sentrygate/session.hpp"

namespace sentrygate {

constexpr std::string_view kUserVerifierModule = "user_verifier";
inline constexpr std::string_view kCsrfParam = "__ips_token";

struct SessionLimits {
    TimestampMs idle_timeout = 30 * kMinuteMs;
    TimestampMs login_window = 10 * kMinuteMs;
    std::size_t login_threshold = 5;
};

bool is_state_changing(std::string_view method);

/// Deterministic session rules. `session` is nullopt for anonymous requests.
/// Check order: failed logins, identity binding, idle period, anti-CSRF token.
std::optional<Alert> verify_stage1(const CanonicalRequest& req, const std::optional<SessionRecord>& session,
                                   TimestampMs now, const SessionLimits& limits, const SeverityTable& sev);

/// Alert for a session id the proxy never issued.
Alert unknown_session_alert(const CanonicalRequest& req, const SeverityTable& sev);

/// "GET /product/{id}"
std::string action_key(std::string_view method, std::string_view path_template);

/// Smoothed bigram model over action keys. Unseen actions share one extra
/// vocabulary slot so every probability stays positive.
class UserProfile {
  public:
    static constexpr double kAlpha = 1.0;

    void observe(const std::optional<std::string>& prev, const std::string& action, TimestampMs ts);

    double probability(const std::optional<std::string>& prev, const std::string& action) const;
    /// -log P normalized by the entropy fixed at finalize().
    double score(const std::optional<std::string>& prev, const std::string& action) const;

    /// Freezes the normalizer and sets the threshold from training scores.
    void finalize(std::span<const std::pair<std::optional<std::string>, std::string>> training);

    bool trained() const { return trained_; }
    double anomaly_threshold() const { return threshold_; }
    double entropy() const { return entropy_; }
    std::size_t total_actions() const { return total_; }
    const std::map<std::string, std::size_t>& action_freq() const { return freq_; }
    const std::array<std::size_t, 24>& hour_histogram() const { return hours_; }
    std::size_t transition_count(const std::string& prev, const std::string& action) const;

    std::string to_json() const;
    static UserProfile from_json(const std::string& text);

  private:
    std::map<std::string, std::size_t> freq_;
    std::map<std::pair<std::string, std::string>, std::size_t> transitions_;
    std::map<std::string, std::size_t> outgoing_;
    std::array<std::size_t, 24> hours_{};
    std::size_t total_ = 0;
    double entropy_ = 1.0;
    double threshold_ = 0.0;
    bool trained_ = false;
};

struct UserActionEvent {
    std::string username;
    std::string session_id;
    std::string action;
    TimestampMs ts = 0;
};

/// Consecutive actions are paired within a session only.
std::map<std::string, UserProfile> train_user_profiles(std::span<const UserActionEvent> trace);

struct Stage2Result {
    std::optional<Alert> alert;
    double score = 0.0;
    bool untrained = false;
};

Stage2Result verify_stage2(const CanonicalRequest& req, const UserProfile* profile,
                           const std::optional<std::string>& prev_action, const SeverityTable& sev);

}  // namespace sentrygate
