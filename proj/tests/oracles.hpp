#pragma once

// Independent reference implementations that the library is checked against.
// Each one takes the slowest obvious route to the answer.

#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "sentrygate/bot_detector.hpp"
#include "sentrygate/data_validator.hpp"

namespace sentrygate::testing {

// Chi-square: byte counts in a map, ranks assigned by explicit bin ranges,
// expected counts floored.
inline double oracle_chi2(const std::string& s, const CharDist& ideal) {
    std::map<unsigned char, long> freq;
    for (unsigned char c : s) freq[c]++;
    std::vector<long> counts;
    for (auto& [_, n] : freq) counts.push_back(n);
    counts.resize(256, 0);
    std::sort(counts.rbegin(), counts.rend());
    const std::pair<int, int> ranges[6] = {{1, 1}, {2, 4}, {5, 7}, {8, 12}, {13, 16}, {17, 256}};
    double chi2 = 0;
    for (int b = 0; b < 6; ++b) {
        long obs = 0;
        for (int r = ranges[b].first; r <= ranges[b].second; ++r) obs += counts[r - 1];
        double e = std::max(ideal[b] * static_cast<double>(s.size()), 1e-6);
        chi2 += (obs - e) * (obs - e) / e;
    }
    return chi2;
}

// Enumerated decision from one distinct scan plus the index at which each
// value first appears: few distinct values, none new in the final third.
inline bool oracle_enumerated(const std::vector<std::string>& samples, std::size_t* distinct = nullptr) {
    const std::size_t n = samples.size();
    std::map<std::string, std::size_t> first_seen;
    for (std::size_t i = 0; i < n; ++i) first_seen.try_emplace(samples[i], i);
    std::size_t last_new = 0;
    for (auto& [_, idx] : first_seen) last_new = std::max(last_new, idx);
    if (distinct) *distinct = first_seen.size();
    return static_cast<double>(first_seen.size()) <= std::max(10.0, 0.05 * static_cast<double>(n)) &&
           3 * last_new < 2 * n;
}

struct Recount {
    std::size_t total = 0;
    std::size_t errors = 0;
    std::size_t templates = 0;
};

// Linear scan of every event ever recorded, keeping those inside
// [now - window, now].
inline Recount oracle_recount(const std::vector<BotEvent>& all, TimestampMs now, TimestampMs window) {
    Recount r;
    std::set<std::string> t;
    for (const auto& e : all) {
        if (e.ts < now - window || e.ts > now) continue;
        ++r.total;
        if (e.status == 404) ++r.errors;
        t.insert(e.path_template);
    }
    r.templates = t.size();
    return r;
}

}  // namespace sentrygate::testing
