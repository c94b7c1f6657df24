#include "sentrygate/logger.hpp"

#include <algorithm>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <limits>
#include <regex>

#include "json.hpp"

namespace sentrygate {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json opt(const std::optional<std::string>& v) { return v ? json(*v) : json(nullptr); }

std::optional<std::string> opt_string(const json& j, const char* key) {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    return j.at(key).get<std::string>();
}

bool needs_escape(unsigned char c) {
    return c < 0x20 || c >= 0x7f || c == '%' || c == '<' || c == '>' || c == '"' || c == '\'' || c == '\\' ||
           c == '`';
}

bool is_upper_hex(char c) { return (c >= '0' && c <= '9') || (c >= 'A' && c <= 'F'); }

// Output of escape_excerpt: raw bytes are all safe and every '%' starts an escape.
bool well_escaped(std::string_view s) {
    for (std::size_t i = 0; i < s.size(); ++i) {
        auto c = static_cast<unsigned char>(s[i]);
        if (c != '%') {
            if (needs_escape(c)) return false;
            continue;
        }
        if (i + 2 >= s.size() || !is_upper_hex(s[i + 1]) || !is_upper_hex(s[i + 2])) return false;
        i += 2;
    }
    return true;
}

}  // namespace

std::string_view to_string(ControllerOp op) {
    switch (op) {
        case ControllerOp::scrub: return "scrub";
        case ControllerOp::mark: return "mark";
        case ControllerOp::seal: return "seal";
        case ControllerOp::inject: return "inject";
    }
    return "scrub";
}

std::string escape_excerpt(std::string_view raw) {
    static constexpr char kHex[] = "0123456789ABCDEF";
    std::string out;
    for (unsigned char c : raw) {
        std::size_t need = needs_escape(c) ? 3 : 1;
        if (out.size() + need > kMaxExcerpt) break;
        if (need == 3) {
            out.push_back('%');
            out.push_back(kHex[c >> 4]);
            out.push_back(kHex[c & 0xf]);
        } else {
            out.push_back(static_cast<char>(c));
        }
    }
    return out;
}

std::string log_file_name(std::string_view kind, TimestampMs ts) {
    std::time_t secs = static_cast<std::time_t>(ts / kSecondMs);
    std::tm tm{};
    gmtime_r(&secs, &tm);
    char buf[16];
    std::strftime(buf, sizeof buf, "%Y%m%d", &tm);
    return std::string(kind) + "-" + buf + ".jsonl";
}

std::string DefenderLogRecord::to_json_line() const {
    json j{{"seq", seq},
           {"ts", ts},
           {"kind", kind},
           {"username", opt(username)},
           {"ip", ip},
           {"session_id", opt(session_id)},
           {"attack_class", attack_class ? json(to_string(*attack_class)) : json(nullptr)},
           {"severity", severity ? json(to_string(*severity)) : json(nullptr)},
           {"confidence", confidence ? json(to_string(*confidence)) : json(nullptr)},
           {"score", std::isfinite(score) ? json(score) : json("inf")},
           {"requested_url", requested_url},
           {"module", module},
           {"action", action_kind},
           {"evidence", {{"scope", evidence_scope}, {"excerpt", evidence_excerpt}}}};
    return j.dump();
}

DefenderLogRecord DefenderLogRecord::from_json_line(const std::string& line) {
    auto j = json::parse(line);
    DefenderLogRecord r;
    r.seq = j.at("seq").get<std::uint64_t>();
    r.ts = j.at("ts").get<TimestampMs>();
    r.kind = j.at("kind").get<std::string>();
    r.username = opt_string(j, "username");
    r.ip = j.at("ip").get<std::string>();
    r.session_id = opt_string(j, "session_id");
    if (auto c = opt_string(j, "attack_class")) r.attack_class = parse_attack_class(*c);
    if (auto s = opt_string(j, "severity")) r.severity = parse_tier(*s);
    if (auto c = opt_string(j, "confidence")) r.confidence = parse_tier(*c);
    const auto& score = j.at("score");
    r.score = score.is_number() ? score.get<double>() : std::numeric_limits<double>::infinity();
    r.requested_url = j.at("requested_url").get<std::string>();
    r.module = j.at("module").get<std::string>();
    r.action_kind = j.at("action").get<std::string>();
    r.evidence_scope = j.at("evidence").at("scope").get<std::string>();
    r.evidence_excerpt = j.at("evidence").at("excerpt").get<std::string>();
    return r;
}

std::string ControllerLogRecord::to_json_line() const {
    json j{{"seq", seq}, {"ts", ts}, {"session_id", opt(session_id)}, {"op", to_string(op)}, {"detail", detail}};
    return j.dump();
}

void validate_schema(const DefenderLogRecord& r) {
    if (r.kind != "action" && r.kind != "notify") throw SchemaError("defender record kind");
    if (r.ip.empty()) throw SchemaError("defender record without ip");
    if (r.module.empty()) throw SchemaError("defender record without module");
    if (r.action_kind.empty()) throw SchemaError("defender record without action");
    if (r.evidence_excerpt.size() > kMaxExcerpt) throw SchemaError("excerpt longer than cap");
    if (!well_escaped(r.evidence_excerpt) || !well_escaped(r.evidence_scope)) throw SchemaError("excerpt not escaped");
    if (r.attack_class.has_value() != r.severity.has_value() || r.severity.has_value() != r.confidence.has_value()) {
        throw SchemaError("attack class and tiers must come together");
    }
}

void validate_schema(const ControllerLogRecord& r) {
    static const std::regex kScrub(R"(label=[A-Za-z0-9_.-]+ count=[0-9]+)");
    static const std::regex kParam(R"(param=[A-Za-z0-9_.\-\[\]]+)");
    static const std::regex kInject(R"(forms=[0-9]+ links=[0-9]+)");
    bool ok = false;
    switch (r.op) {
        case ControllerOp::scrub: ok = std::regex_match(r.detail, kScrub); break;
        case ControllerOp::mark:
        case ControllerOp::seal: ok = std::regex_match(r.detail, kParam); break;
        case ControllerOp::inject: ok = std::regex_match(r.detail, kInject); break;
    }
    if (!ok) throw SchemaError("controller detail does not match its grammar: " + std::string(to_string(r.op)));
}

// ---------------------------------------------------------------------------

Logger::Logger(std::string directory, bool keep_in_memory) : dir_(std::move(directory)), keep_(keep_in_memory) {
    if (!dir_.empty()) {
        std::error_code ec;
        fs::create_directories(dir_, ec);
        for (const auto& entry : fs::directory_iterator(dir_, ec)) {
            if (entry.path().extension() != ".jsonl") continue;
            std::ifstream in(entry.path());
            std::string line;
            std::uint64_t last = 0;
            while (std::getline(in, line)) {
                try {
                    last = std::max(last, json::parse(line).at("seq").get<std::uint64_t>());
                } catch (const json::exception&) {
                    // A torn final line does not affect the records before it.
                }
            }
            last_seq_[entry.path().filename().string()] = last;
        }
    }
    writer_ = std::thread([this] { run(); });
}

Logger::~Logger() {
    {
        std::lock_guard lock(mutex_);
        stop_ = true;
    }
    cv_.notify_all();
    writer_.join();
}

std::uint64_t Logger::next_seq(const std::string& file) { return ++last_seq_[file]; }

std::uint64_t Logger::append(DefenderLogRecord r) {
    validate_schema(r);
    auto file = log_file_name("defender", r.ts);
    std::unique_lock lock(mutex_);
    r.seq = next_seq(file);
    if (keep_) defender_mem_.push_back(r);
    ++defender_count_;
    if (!dir_.empty()) queue_.emplace_back(std::move(file), r.to_json_line());
    lock.unlock();
    cv_.notify_one();
    return r.seq;
}

std::uint64_t Logger::append(ControllerLogRecord r) {
    validate_schema(r);
    auto file = log_file_name("controller", r.ts);
    std::unique_lock lock(mutex_);
    r.seq = next_seq(file);
    if (keep_) controller_mem_.push_back(r);
    if (!dir_.empty()) queue_.emplace_back(std::move(file), r.to_json_line());
    lock.unlock();
    cv_.notify_one();
    return r.seq;
}

void Logger::flush() {
    std::unique_lock lock(mutex_);
    drained_.wait(lock, [this] { return queue_.empty() && !busy_; });
}

std::vector<DefenderLogRecord> Logger::defender_records() const {
    std::lock_guard lock(mutex_);
    return defender_mem_;
}

std::vector<ControllerLogRecord> Logger::controller_records() const {
    std::lock_guard lock(mutex_);
    return controller_mem_;
}

void Logger::run() {
    std::map<std::string, std::ofstream> files;
    std::unique_lock lock(mutex_);
    while (true) {
        cv_.wait(lock, [this] { return stop_ || !queue_.empty(); });
        if (queue_.empty() && stop_) break;
        auto batch = std::move(queue_);
        queue_.clear();
        busy_ = true;
        lock.unlock();
        for (auto& [name, line] : batch) {
            auto& out = files[name];
            if (!out.is_open()) out.open(fs::path(dir_) / name, std::ios::app);
            out << line << '\n';
            out.flush();
            if (!out) {
                ++failures_;
                out.close();
                files.erase(name);
            }
        }
        lock.lock();
        busy_ = false;
        drained_.notify_all();
    }
    busy_ = false;
    drained_.notify_all();
}

std::vector<DefenderLogRecord> query_defender_log(const std::string& directory, const LogQuery& q) {
    std::vector<DefenderLogRecord> out;
    if (q.from > q.to) return out;
    std::error_code ec;
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(directory, ec)) {
        auto name = entry.path().filename().string();
        if (name.starts_with("defender-") && entry.path().extension() == ".jsonl") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& path : files) {
        std::ifstream in(path);
        std::string line;
        while (std::getline(in, line)) {
            DefenderLogRecord r;
            try {
                r = DefenderLogRecord::from_json_line(line);
            } catch (const json::exception&) {
                continue;
            }
            if (r.ts < q.from || r.ts > q.to) continue;
            if (q.attack_class && r.attack_class != q.attack_class) continue;
            if (q.ip && r.ip != *q.ip) continue;
            out.push_back(std::move(r));
        }
    }
    return out;
}

}  // namespace sentrygate
