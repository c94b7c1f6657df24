#pragma once

#include <deque>
#include <map>
#include <mutex>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "sentrygate/common.hpp"

namespace sentrygate {

/// Good-bot whitelist and bad-bot signatures. Good and bad IP sets are
/// disjoint; construction through from_lines rejects overlap.
struct BotLists {
    std::set<std::string> good_ips;
    std::vector<std::string> good_prefixes;  // entries ending in '.' or ':'
    std::set<std::string> bad_ips;
    std::vector<std::string> bad_agents;     // lowercase substrings

    bool is_good_ip(const std::string& ip) const;

    static BotLists from_lines(std::span<const std::string> good_ip_lines,
                               std::span<const std::string> bad_ip_lines,
                               std::span<const std::string> bad_agent_lines);
};

/// Reads a plaintext list: one entry per line, '#' starts a comment.
std::vector<std::string> read_list_lines(const std::string& text);

bool stage1_good_bot(const ClientIdentity& id, const BotLists& lists);
bool stage2_bad_bot(const ClientIdentity& id, const BotLists& lists);

struct BotEvent {
    TimestampMs ts = 0;
    std::string path_template;
    int status = 0;  // 0 while the response is pending
};

/// Sliding-window event history for one client IP.
class ClientHistory {
  public:
    explicit ClientHistory(TimestampMs window_ms = 60 * kSecondMs) : window_ms_(window_ms) {}

    /// Appends an event (timestamps must be non-decreasing) and prunes
    /// everything older than event.ts - window.
    void record(BotEvent event);
    /// Sets the status of the most recent pending event.
    void complete(int status);
    void prune(TimestampMs now);

    std::size_t total_in_window() const { return events_.size(); }
    std::size_t error_404_in_window() const { return errors_404_; }
    std::size_t distinct_templates_in_window() const { return templates_.size(); }
    const std::deque<BotEvent>& events() const { return events_; }
    TimestampMs window_ms() const { return window_ms_; }

  private:
    void drop_front();

    TimestampMs window_ms_;
    std::deque<BotEvent> events_;
    std::size_t errors_404_ = 0;
    std::map<std::string, std::size_t> templates_;
};

struct BotBaseline {
    double rate_mean = 0.2;  // requests per second over the window
    double rate_std = 0.1;
    double max_burst = 90.0;
    double error_ratio_threshold = 0.5;
    double k = 3.0;
    TimestampMs window_ms = 60 * kSecondMs;
    std::size_t min_events = 5;
    std::size_t min_events_for_error_ratio = 20;
    std::size_t training_samples = 0;
};

struct BotScore {
    double rate = 0.0;
    double rate_z = 0.0;
    std::size_t window_count = 0;
    double error_ratio = 0.0;
    bool insufficient_history = false;
    bool is_bot = false;
    int conditions = 0;
    Tier confidence = Tier::low;
};

/// Behavioral stage; the history must already contain the current request.
BotScore stage3_behavior(ClientHistory history, const BotBaseline& baseline, TimestampMs now);

struct BotTrainingEvent {
    std::string ip;
    TimestampMs ts = 0;
    int status = 200;
};

/// Learns rate statistics and the burst ceiling from per-IP window counts.
BotBaseline train_bot_baseline(std::span<const BotTrainingEvent> events, BotBaseline defaults = {});

/// Per-IP histories behind a single lock.
class HistoryStore {
  public:
    explicit HistoryStore(TimestampMs window_ms = 60 * kSecondMs) : window_ms_(window_ms) {}

    /// Records a pending event and returns a copy of the updated history.
    ClientHistory record(const std::string& ip, BotEvent event);
    void complete(const std::string& ip, int status);
    void sweep(TimestampMs now);
    std::size_t size() const;

  private:
    TimestampMs window_ms_;
    mutable std::mutex mutex_;
    std::map<std::string, ClientHistory> histories_;
};

}  // namespace sentrygate
