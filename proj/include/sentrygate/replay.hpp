#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "sentrygate/runtime.hpp"

namespace sentrygate {

/// One line of a traffic trace.
///
/// `client` names a cookie jar shared by the records of one browser;
/// `{{csrf}}` and `{{otp}}` placeholders in the target or body are filled
/// from that jar at replay time.
struct TraceRecord {
    TimestampMs ts = 0;
    std::string ip;
    std::string method = "GET";
    std::string target = "/";
    HeaderList headers;
    std::string body;
    bool asset = false;
    std::string client;
    std::string expect = "benign";  // attack class name or "benign"
    std::string scenario;

    std::string to_json_line() const;
};

/// Throws TraceParseError with the offending line number.
std::vector<TraceRecord> parse_trace(const std::string& text);
std::vector<TraceRecord> read_trace(const std::string& path);
void write_trace(const std::string& path, std::span<const TraceRecord> trace);

/// Plays trace records through a runtime the way a browser would: keeps
/// cookies per client and picks up the anti-CSRF token from pages.
class ReplayDriver {
  public:
    explicit ReplayDriver(Runtime& runtime) : runtime_(runtime) {}
    HandleResult step(const TraceRecord& rec);
    /// Serialized request bytes for a record with the jar applied.
    std::string render(const TraceRecord& rec);

  private:
    struct Jar {
        std::map<std::string, std::string> cookies;
        std::string csrf;
    };
    Runtime& runtime_;
    std::map<std::string, Jar> jars_;
};

std::vector<Verdict> replay(std::span<const TraceRecord> trace, Runtime& runtime);

/// Trains every model from a benign trace replayed against `upstream` in
/// learning mode. Trainers short of samples fall back to defaults and leave
/// a warning in the bundle.
ModelBundle train_all(std::span<const TraceRecord> trace, const RuntimeSettings& settings, Upstream& upstream);

/// Replay randomness derived from the deployment secret.
Key256 replay_seed(const Secret& secret);

}  // namespace sentrygate
