#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <map>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "sentrygate/common.hpp"

namespace sentrygate {

class SchemaError : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

struct DefenderLogRecord {
    std::uint64_t seq = 0;
    TimestampMs ts = 0;
    std::string kind = "action";  // "action" or "notify"
    std::optional<std::string> username;
    std::string ip;
    std::optional<std::string> session_id;
    std::optional<AttackClass> attack_class;  // absent for blocked-source rejections
    std::optional<Tier> severity;
    std::optional<Tier> confidence;
    double score = 0.0;
    std::string requested_url;
    std::string module;
    std::string action_kind;
    std::string evidence_scope;
    std::string evidence_excerpt;

    std::string to_json_line() const;
    static DefenderLogRecord from_json_line(const std::string& line);
};

enum class ControllerOp { scrub, mark, seal, inject };
std::string_view to_string(ControllerOp op);

struct ControllerLogRecord {
    std::uint64_t seq = 0;
    TimestampMs ts = 0;
    std::optional<std::string> session_id;
    ControllerOp op = ControllerOp::scrub;
    /// "label=<label> count=<n>", "param=<name>" or "forms=<n> links=<m>".
    std::string detail;

    std::string to_json_line() const;
};

/// Throws SchemaError when the record could leak values or is incomplete.
void validate_schema(const DefenderLogRecord& r);
void validate_schema(const ControllerLogRecord& r);

/// Percent-escapes every unsafe byte and caps
/// the result at kMaxExcerpt bytes without splitting an escape.
std::string escape_excerpt(std::string_view raw);

/// "defender-20240131.jsonl"
std::string log_file_name(std::string_view kind, TimestampMs ts);

/// Asynchronous JSON Lines writer. Appends are validated and numbered on the
/// caller's thread and written by one background thread, so callers never
/// wait on disk. An empty directory keeps records in memory only.
class Logger {
  public:
    explicit Logger(std::string directory = {}, bool keep_in_memory = false);
    ~Logger();
    Logger(const Logger&) = delete;
    Logger& operator=(const Logger&) = delete;

    std::uint64_t append(DefenderLogRecord r);
    std::uint64_t append(ControllerLogRecord r);

    /// Blocks until the queue is drained.
    void flush();
    std::uint64_t io_failures() const { return failures_.load(); }
    std::uint64_t defender_count() const { return defender_count_.load(); }

    std::vector<DefenderLogRecord> defender_records() const;
    std::vector<ControllerLogRecord> controller_records() const;

  private:
    std::uint64_t next_seq(const std::string& file);
    void enqueue(std::string file, std::string line);
    void run();

    std::string dir_;
    bool keep_;
    mutable std::mutex mutex_;
    std::condition_variable cv_;
    std::condition_variable drained_;
    std::deque<std::pair<std::string, std::string>> queue_;
    std::map<std::string, std::uint64_t> last_seq_;
    std::vector<DefenderLogRecord> defender_mem_;
    std::vector<ControllerLogRecord> controller_mem_;
    bool stop_ = false;
    bool busy_ = false;
    std::atomic<std::uint64_t> failures_{0};
    std::atomic<std::uint64_t> defender_count_{0};
    std::thread writer_;
};

struct LogQuery {
    TimestampMs from = 0;
    TimestampMs to = 0;  // inclusive
    std::optional<AttackClass> attack_class;
    std::optional<std::string> ip;
};

/// Scans every defender log in `directory`. Unparseable lines are skipped.
std::vector<DefenderLogRecord> query_defender_log(const std::string& directory, const LogQuery& q);

}  // namespace sentrygate
