#pragma once

#include <atomic>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "sentrygate/access_controller.hpp"
#include "sentrygate/bot_detector.hpp"
#include "sentrygate/config.hpp"
#include "sentrygate/connection_verifier.hpp"
#include "sentrygate/defender.hpp"
#include "sentrygate/http.hpp"
#include "sentrygate/logger.hpp"
#include "sentrygate/mark_ledger.hpp"
#include "sentrygate/models.hpp"
#include "sentrygate/response_controller.hpp"
#include "sentrygate/session.hpp"

namespace sentrygate {

class UpstreamUnreachable : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// The protected application.
class Upstream {
  public:
    virtual ~Upstream() = default;
    /// Throws UpstreamUnreachable when no response can be obtained.
    virtual HttpResponse forward(const RawRequest& req) = 0;
};

enum class Outcome { forwarded, rejected, challenged, upstream_error };
std::string_view to_string(Outcome o);
std::optional<Outcome> parse_outcome(std::string_view s);

/// Pipeline stage names in execution order.
inline constexpr std::string_view kStageOrder[] = {
    "preprocessor",    "connection_verifier", "bot_detector",        "data_validator",
    "user_verifier",   "access_controller",   "upstream",            "response_controller",
    "logger",
};

struct Verdict {
    std::uint64_t seq = 0;
    Outcome outcome = Outcome::forwarded;
    int status = 0;
    bool monitored = true;
    std::optional<Alert> alert;
    std::optional<ResponseAction> action;
    std::vector<std::string> stages;
    std::vector<double> stage_micros;  // parallel to stages; never serialized

    /// Stable JSON line without timings, so replays compare byte for byte.
    std::string to_json_line() const;
    static Verdict from_json_line(const std::string& line);
};

struct HandleResult {
    HttpResponse response;
    Verdict verdict;
};

/// What the learning mode gathers for the trainers.
struct TrainingObservations {
    std::map<ParamScope, std::vector<std::string>> samples;
    std::vector<BotTrainingEvent> bot_events;
    std::vector<UserActionEvent> user_actions;
    std::vector<RoleObservation> roles;
    std::vector<WatchObservation> watch;
};

inline constexpr std::string_view kUserSignalHeader = "X-Ips-User";
inline constexpr std::string_view kRoleSignalHeader = "X-Ips-Role";
inline constexpr std::string_view kLogoutSignalHeader = "X-Ips-Logout";

struct RuntimeOptions {
    bool learning = false;
    std::string login_path = "/login";
};

/// The serial detection pipeline plus response processing.
class Runtime {
  public:
    Runtime(const RuntimeSettings& settings, ModelBundle models, Upstream& upstream, RandomSource& rng,
            Logger* logger, RuntimeOptions options = {});

    /// Parses wire bytes first; framing errors become protocol alerts.
    HandleResult handle_bytes(std::string_view bytes, const std::string& source_ip, TimestampMs now);
    /// `raw.received_at` is the clock for every time-dependent decision.
    HandleResult handle(RawRequest raw);

    /// Drops expired block entries and idle bot histories.
    void sweep(TimestampMs now);

    /// Second-factor code a legitimate user would receive out of band.
    std::string otp_for(const std::string& session_id, TimestampMs ts) const;

    BlockList& blocks() { return blocks_; }
    SessionStore& sessions() { return sessions_; }
    MarkLedger& ledger() { return ledger_; }
    GapReport& gaps() { return gaps_; }
    const ModelBundle& models() const { return models_; }
    const RuntimeSettings& settings() const { return settings_; }
    TrainingObservations take_observations();

  private:
    /// Runs the detection stages; a value means the request stops here.
    std::optional<HandleResult> detect(Verdict& v, const CanonicalRequest& req, const SessionLookup& lookup,
                                       const std::vector<std::string>& unseal_failures, TimestampMs now);
    /// Hands an alert to the defender; nullopt when the request may proceed.
    std::optional<HandleResult> conclude(Verdict& v, Alert alert, const CanonicalRequest& req, TimestampMs now);
    HandleResult protocol_error(Verdict& v, const std::string& what, const std::string& ip,
                                std::optional<std::string> ua, TimestampMs now, const std::string& url);
    void process_response(HttpResponse& resp, const CanonicalRequest& req,
                          const std::optional<SessionRecord>& session, bool monitored, TimestampMs now);
    void log_controller(TimestampMs ts, const std::optional<std::string>& session, ControllerOp op,
                        std::string detail);
    void observe_request(const CanonicalRequest& req, const std::optional<SessionRecord>& session);

    RuntimeSettings settings_;
    ModelBundle models_;
    Upstream& upstream_;
    RandomSource& rng_;
    Logger* logger_;
    RuntimeOptions options_;

    Key256 seal_key_;
    Key256 otp_key_;
    std::set<Operation> sensitive_gets_;

    BlockList blocks_;
    SessionStore sessions_;
    HistoryStore histories_;
    MarkLedger ledger_;
    GapReport gaps_;
    Defender defender_;

    std::mutex profiles_mutex_;
    std::mutex observations_mutex_;
    TrainingObservations observations_;
    std::atomic<std::uint64_t> seq_{0};
};

/// Applies administrator overrides on top of learned categories.
void apply_overrides(ValidatorModels& models, const std::vector<ParamOverride>& overrides);

}  // namespace sentrygate
