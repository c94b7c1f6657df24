#include "sentrygate/common.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <utility>

namespace sentrygate {

namespace {

struct ClassName {
    AttackClass value;
    std::string_view name;
};

constexpr std::array<ClassName, 16> kClassNames{{
    {AttackClass::sqli, "sqli"},
    {AttackClass::xss, "xss"},
    {AttackClass::injection_other, "injection_other"},
    {AttackClass::type_violation, "type_violation"},
    {AttackClass::enum_violation, "enum_violation"},
    {AttackClass::format_violation, "format_violation"},
    {AttackClass::open_redirect, "open_redirect"},
    {AttackClass::tampering, "tampering"},
    {AttackClass::protocol, "protocol"},
    {AttackClass::bot, "bot"},
    {AttackClass::brute_force, "brute_force"},
    {AttackClass::session_hijack, "session_hijack"},
    {AttackClass::session_expired, "session_expired"},
    {AttackClass::csrf, "csrf"},
    {AttackClass::behavior_anomaly, "behavior_anomaly"},
    {AttackClass::unauthorized_access, "unauthorized_access"},
}};

}  // namespace

std::string_view to_string(AttackClass c) {
    for (const auto& entry : kClassNames) {
        if (entry.value == c) return entry.name;
    }
    return "unknown";
}

std::string_view to_string(Tier t) { return t == Tier::high ? "high" : "low"; }

std::optional<AttackClass> parse_attack_class(std::string_view s) {
    for (const auto& entry : kClassNames) {
        if (entry.name == s) return entry.value;
    }
    return std::nullopt;
}

std::optional<Tier> parse_tier(std::string_view s) {
    if (s == "high") return Tier::high;
    if (s == "low") return Tier::low;
    return std::nullopt;
}

Alert make_alert(AttackClass c, Tier severity, Tier confidence, double score,
                 std::string module, std::string scope, std::string_view excerpt,
                 ClientIdentity identity) {
    Alert a;
    a.attack_class = c;
    a.severity = severity;
    a.confidence = confidence;
    a.score = score;
    a.module = std::move(module);
    a.evidence.scope = std::move(scope);
    a.evidence.excerpt = std::string(excerpt.substr(0, kMaxExcerpt));
    a.identity = std::move(identity);
    return a;
}

Tier SeverityTable::of(AttackClass c) const {
    auto it = tiers.find(c);
    return it == tiers.end() ? Tier::low : it->second;
}

SeverityTable SeverityTable::defaults() {
    SeverityTable t;
    for (auto c : kAllAttackClasses) t.tiers[c] = Tier::low;
    for (auto c : {AttackClass::sqli, AttackClass::xss, AttackClass::injection_other,
                   AttackClass::tampering, AttackClass::unauthorized_access, AttackClass::open_redirect,
                   AttackClass::session_hijack, AttackClass::csrf, AttackClass::brute_force}) {
        t.tiers[c] = Tier::high;
    }
    return t;
}

std::string to_lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
    return out;
}

bool iequals(std::string_view a, std::string_view b) {
    return a.size() == b.size() &&
           std::equal(a.begin(), a.end(), b.begin(), [](unsigned char x, unsigned char y) {
               return std::tolower(x) == std::tolower(y);
           });
}

bool starts_with_icase(std::string_view s, std::string_view prefix) {
    return s.size() >= prefix.size() && iequals(s.substr(0, prefix.size()), prefix);
}

std::string_view trim(std::string_view s) {
    auto is_space = [](unsigned char ch) { return std::isspace(ch) != 0; };
    while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
    while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
    return s;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
    std::vector<std::string_view> parts;
    std::size_t start = 0;
    while (true) {
        auto pos = s.find(sep, start);
        if (pos == std::string_view::npos) {
            parts.push_back(s.substr(start));
            break;
        }
        parts.push_back(s.substr(start, pos - start));
        start = pos + 1;
    }
    return parts;
}

}  // namespace sentrygate
