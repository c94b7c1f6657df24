#include "sentrygate/bot_detector.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace sentrygate {

bool BotLists::is_good_ip(const std::string& ip) const {
    if (good_ips.contains(ip)) return true;
    return std::any_of(good_prefixes.begin(), good_prefixes.end(),
                       [&](const std::string& p) { return ip.starts_with(p); });
}

BotLists BotLists::from_lines(std::span<const std::string> good_ip_lines,
                              std::span<const std::string> bad_ip_lines,
                              std::span<const std::string> bad_agent_lines) {
    BotLists lists;
    for (const auto& line : good_ip_lines) {
        if (line.empty()) continue;
        if (line.back() == '.' || line.back() == ':') {
            lists.good_prefixes.push_back(line);
        } else {
            lists.good_ips.insert(line);
        }
    }
    for (const auto& line : bad_ip_lines) {
        if (line.empty()) continue;
        if (lists.is_good_ip(line)) {
            throw ConfigError("bot lists overlap: " + line + " is both good and bad");
        }
        lists.bad_ips.insert(line);
    }
    for (const auto& line : bad_agent_lines) {
        if (!line.empty()) lists.bad_agents.push_back(to_lower(line));
    }
    return lists;
}

std::vector<std::string> read_list_lines(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        auto t = trim(line);
        if (!t.empty()) out.emplace_back(t);
    }
    return out;
}

bool stage1_good_bot(const ClientIdentity& id, const BotLists& lists) {
    return lists.is_good_ip(id.ip);
}

bool stage2_bad_bot(const ClientIdentity& id, const BotLists& lists) {
    if (lists.bad_ips.contains(id.ip)) return true;
    if (!id.user_agent || id.user_agent->empty()) return false;
    auto ua = to_lower(*id.user_agent);
    return std::any_of(lists.bad_agents.begin(), lists.bad_agents.end(),
                       [&](const std::string& needle) { return ua.find(needle) != std::string::npos; });
}

void ClientHistory::drop_front() {
    const auto& ev = events_.front();
    if (ev.status == 404) --errors_404_;
    auto it = templates_.find(ev.path_template);
    if (it != templates_.end() && --it->second == 0) templates_.erase(it);
    events_.pop_front();
}

void ClientHistory::record(BotEvent event) {
    prune(event.ts);
    if (event.status == 404) ++errors_404_;
    ++templates_[event.path_template];
    events_.push_back(std::move(event));
}

void ClientHistory::complete(int status) {
    for (auto it = events_.rbegin(); it != events_.rend(); ++it) {
        if (it->status == 0) {
            it->status = status;
            if (status == 404) ++errors_404_;
            return;
        }
    }
}

void ClientHistory::prune(TimestampMs now) {
    while (!events_.empty() && events_.front().ts < now - window_ms_) drop_front();
}

BotScore stage3_behavior(ClientHistory history, const BotBaseline& baseline, TimestampMs now) {
    history.prune(now);
    BotScore score;
    score.window_count = history.total_in_window();
    double window_s = static_cast<double>(baseline.window_ms) / 1000.0;
    score.rate = static_cast<double>(score.window_count) / window_s;
    if (baseline.rate_std > 0) {
        score.rate_z = (score.rate - baseline.rate_mean) / baseline.rate_std;
    } else {
        score.rate_z = score.rate > baseline.rate_mean ? std::numeric_limits<double>::infinity() : 0.0;
    }
    score.error_ratio = score.window_count == 0
                            ? 0.0
                            : static_cast<double>(history.error_404_in_window()) /
                                  static_cast<double>(score.window_count);

    if (score.window_count < baseline.min_events) {
        score.insufficient_history = true;
        return score;
    }

    if (score.rate > baseline.rate_mean + baseline.k * baseline.rate_std) ++score.conditions;
    if (static_cast<double>(score.window_count) > baseline.max_burst) ++score.conditions;
    if (score.window_count >= baseline.min_events_for_error_ratio &&
        score.error_ratio > baseline.error_ratio_threshold) {
        ++score.conditions;
    }
    score.is_bot = score.conditions > 0;
    score.confidence = score.conditions >= 2 ? Tier::high : Tier::low;
    return score;
}

BotBaseline train_bot_baseline(std::span<const BotTrainingEvent> events, BotBaseline defaults) {
    std::map<std::string, ClientHistory> histories;
    std::vector<double> counts;
    counts.reserve(events.size());
    for (const auto& ev : events) {
        auto [it, _] = histories.try_emplace(ev.ip, defaults.window_ms);
        it->second.record({ev.ts, {}, ev.status});
        counts.push_back(static_cast<double>(it->second.total_in_window()));
    }
    if (counts.empty()) return defaults;

    BotBaseline baseline = defaults;
    double window_s = static_cast<double>(defaults.window_ms) / 1000.0;
    double sum = 0.0;
    for (double c : counts) sum += c / window_s;
    double mean = sum / static_cast<double>(counts.size());
    double var = 0.0;
    for (double c : counts) var += (c / window_s - mean) * (c / window_s - mean);
    var /= static_cast<double>(counts.size());

    baseline.rate_mean = mean;
    baseline.rate_std = std::sqrt(var);
    baseline.max_burst = *std::max_element(counts.begin(), counts.end()) * 1.5;
    baseline.training_samples = counts.size();
    return baseline;
}

ClientHistory HistoryStore::record(const std::string& ip, BotEvent event) {
    std::lock_guard lock(mutex_);
    auto [it, _] = histories_.try_emplace(ip, window_ms_);
    it->second.record(std::move(event));
    return it->second;
}

void HistoryStore::complete(const std::string& ip, int status) {
    std::lock_guard lock(mutex_);
    if (auto it = histories_.find(ip); it != histories_.end()) it->second.complete(status);
}

void HistoryStore::sweep(TimestampMs now) {
    std::lock_guard lock(mutex_);
    for (auto it = histories_.begin(); it != histories_.end();) {
        it->second.prune(now);
        if (it->second.total_in_window() == 0) {
            it = histories_.erase(it);
        } else {
            ++it;
        }
    }
}

std::size_t HistoryStore::size() const {
    std::lock_guard lock(mutex_);
    return histories_.size();
}

}  // namespace sentrygate
