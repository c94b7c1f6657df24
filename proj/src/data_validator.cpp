#include "sentrygate/data_validator.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>

#include "json.hpp"

namespace sentrygate {

using nlohmann::json;

std::string_view to_string(ParamLocation l) {
    switch (l) {
        case ParamLocation::query: return "query";
        case ParamLocation::body: return "body";
        case ParamLocation::header: return "header";
        case ParamLocation::cookie: return "cookie";
    }
    return "unknown";
}

std::string_view to_string(ParamCategory c) {
    switch (c) {
        case ParamCategory::text: return "text";
        case ParamCategory::numeric: return "numeric";
        case ParamCategory::enumerated: return "enumerated";
        case ParamCategory::format_specific: return "format_specific";
        case ParamCategory::web_address: return "web_address";
        case ParamCategory::application: return "application";
    }
    return "unknown";
}

std::optional<ParamLocation> parse_param_location(std::string_view s) {
    for (auto l : {ParamLocation::query, ParamLocation::body, ParamLocation::header, ParamLocation::cookie}) {
        if (to_string(l) == s) return l;
    }
    return std::nullopt;
}

std::optional<ParamCategory> parse_param_category(std::string_view s) {
    for (auto c : {ParamCategory::text, ParamCategory::numeric, ParamCategory::enumerated,
                   ParamCategory::format_specific, ParamCategory::web_address, ParamCategory::application}) {
        if (to_string(c) == s) return c;
    }
    return std::nullopt;
}

std::string ParamScope::describe() const {
    return std::string(to_string(location)) + ":" + name;
}

// ---------------------------------------------------------------------------

void SignatureSet::add(std::string id, std::string pattern, AttackClass cls, Tier severity) {
    if (std::any_of(rules_.begin(), rules_.end(), [&](const SignatureRule& r) { return r.id == id; })) {
        throw ConfigError("duplicate signature id: " + id);
    }
    SignatureRule rule;
    try {
        rule.compiled = std::regex(pattern, std::regex::ECMAScript | std::regex::icase | std::regex::optimize);
    } catch (const std::regex_error& e) {
        throw ConfigError("signature " + id + " does not compile: " + e.what());
    }
    rule.id = std::move(id);
    rule.pattern = std::move(pattern);
    rule.attack_class = cls;
    rule.severity = severity;
    rules_.push_back(std::move(rule));
}

const SignatureRule* SignatureSet::first_match(std::string_view lowered) const {
    for (const auto& rule : rules_) {
        if (std::regex_search(lowered.begin(), lowered.end(), rule.compiled)) return &rule;
    }
    return nullptr;
}

SignatureSet SignatureSet::starter() {
    SignatureSet s;
    s.add("sqli-tautology", R"(['"]\s*(or|and)\s+['"]?[a-z0-9_]+['"]?\s*(=|<|>|like)\s*['"]?[a-z0-9_]+)",
          AttackClass::sqli, Tier::high);
    s.add("sqli-numeric-tautology", R"(\b(or|and)\s+(\d+)\s*=\s*\2\b)", AttackClass::sqli, Tier::high);
    s.add("sqli-union-select", R"(\bunion\b(\s|/\*.*?\*/)+(all\s+)?select\b)", AttackClass::sqli, Tier::high);
    s.add("sqli-comment-terminator", R"(['"]\s*(--|#|/\*))", AttackClass::sqli, Tier::high);
    s.add("sqli-stacked-query", R"(;\s*(drop|delete|insert|update|alter|shutdown|exec)\b)", AttackClass::sqli,
          Tier::high);
    s.add("sqli-time-function", R"(\b(sleep|benchmark|pg_sleep)\s*\(|\bwaitfor\s+delay\b)", AttackClass::sqli,
          Tier::high);
    s.add("xss-script-tag", R"(<\s*/?\s*script\b)", AttackClass::xss, Tier::high);
    s.add("xss-event-handler", R"(<[^>]*\bon[a-z]+\s*=)", AttackClass::xss, Tier::high);
    s.add("xss-script-uri", R"(\b(javascript|vbscript)\s*:)", AttackClass::xss, Tier::high);
    s.add("xss-active-tag", R"(<\s*(iframe|object|embed|svg|math|base|meta)\b)", AttackClass::xss, Tier::high);
    s.add("path-traversal", R"((\.\.[/\\]))", AttackClass::injection_other, Tier::high);
    s.add("sensitive-file", R"(/etc/(passwd|shadow)\b|\bwin\.ini\b|\bboot\.ini\b)", AttackClass::injection_other,
          Tier::high);
    s.add("command-injection", R"([;|`]\s*(cat|ls|id|whoami|uname|wget|curl|nc|bash)\b)",
          AttackClass::injection_other, Tier::high);
    return s;
}

SignatureSet SignatureSet::from_json(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("signature file: ") + e.what());
    }
    if (!doc.is_array()) throw ConfigError("signature file must be a JSON array");
    SignatureSet s;
    for (const auto& item : doc) {
        auto cls = parse_attack_class(item.value("class", ""));
        auto sev = parse_tier(item.value("severity", "high"));
        if (!cls || !sev) throw ConfigError("signature entry has invalid class or severity");
        s.add(item.value("id", ""), item.value("pattern", ""), *cls, *sev);
    }
    return s;
}

// ---------------------------------------------------------------------------

std::optional<EnumModel> train_enumerated(std::span<const std::string> samples, std::size_t min_samples) {
    if (samples.size() < min_samples || samples.empty()) {
        throw InsufficientSamples("enumerated training needs at least " + std::to_string(min_samples) +
                                  " samples");
    }
    std::set<std::string> distinct;
    std::size_t last_new_index = 0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (distinct.insert(samples[i]).second) last_new_index = i;
    }
    const double n = static_cast<double>(samples.size());
    const double bound = std::max(10.0, 0.05 * n);
    const std::size_t final_third_start = samples.size() - samples.size() / 3;
    if (static_cast<double>(distinct.size()) > bound || last_new_index >= final_third_start) {
        return std::nullopt;
    }
    return EnumModel{std::move(distinct), samples.size()};
}

// ---------------------------------------------------------------------------

CharDist binned_char_distribution(std::string_view value) {
    CharDist bins{};
    if (value.empty()) return bins;
    std::array<std::size_t, 256> counts{};
    for (unsigned char c : value) ++counts[c];
    std::sort(counts.begin(), counts.end(), std::greater<>());
    const double total = static_cast<double>(value.size());
    std::size_t bin = 0;
    for (std::size_t rank = 1; rank <= counts.size(); ++rank) {
        while (rank > kRankBinUpper[bin]) ++bin;
        bins[bin] += static_cast<double>(counts[rank - 1]) / total;
    }
    return bins;
}

double char_dist_chi2(std::string_view value, const CharDist& idealized) {
    const auto observed = binned_char_distribution(value);
    const double len = static_cast<double>(value.size());
    double chi2 = 0.0;
    for (std::size_t i = 0; i < kCharDistBins; ++i) {
        double expected = std::max(idealized[i] * len, kMinExpected);
        double diff = observed[i] * len - expected;
        chi2 += diff * diff / expected;
    }
    return chi2;
}

CharDistModel train_format(std::span<const std::string> samples, std::size_t min_samples) {
    if (samples.size() < min_samples || samples.empty()) {
        throw InsufficientSamples("format training needs at least " + std::to_string(min_samples) + " samples");
    }
    CharDistModel model;
    for (const auto& s : samples) {
        auto d = binned_char_distribution(s);
        for (std::size_t i = 0; i < kCharDistBins; ++i) model.idealized[i] += d[i];
    }
    for (auto& x : model.idealized) x /= static_cast<double>(samples.size());

    std::vector<double> scores;
    scores.reserve(samples.size());
    for (const auto& s : samples) scores.push_back(char_dist_chi2(s, model.idealized));
    std::sort(scores.begin(), scores.end());
    // Nearest-rank 95th percentile.
    auto rank = static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(scores.size())));
    double p95 = scores[std::max<std::size_t>(rank, 1) - 1];
    model.chi2_threshold = std::max(p95, kChi2Floor);
    model.samples = samples.size();
    return model;
}

// ---------------------------------------------------------------------------

UrlWhitelist::Entry UrlWhitelist::parse_entry(std::string_view text) {
    Entry e;
    auto t = trim(text);
    if (auto pos = t.find("://"); pos != std::string_view::npos) {
        e.scheme = to_lower(t.substr(0, pos));
        t.remove_prefix(pos + 3);
    }
    auto slash = t.find('/');
    e.host = to_lower(t.substr(0, slash));
    e.path_prefix = slash == std::string_view::npos ? "/" : std::string(t.substr(slash));
    if (e.host.empty()) throw ConfigError("url whitelist entry without host: " + std::string(text));
    return e;
}

namespace {

struct ParsedUrl {
    std::optional<std::string> scheme;
    std::string host;
    std::string path;
};

bool host_matches(const UrlWhitelist& w, const ParsedUrl& u) {
    return std::any_of(w.trusted.begin(), w.trusted.end(), [&](const UrlWhitelist::Entry& e) {
        if (e.scheme && u.scheme && *e.scheme != *u.scheme) return false;
        if (e.host != u.host) return false;
        auto path = u.path.empty() ? std::string("/") : u.path;
        return path.starts_with(e.path_prefix);
    });
}

// Splits "host[:port][/path]" after any userinfo; the host is what a browser
// would connect to.
ParsedUrl split_authority(std::string_view rest, std::optional<std::string> scheme) {
    ParsedUrl u;
    u.scheme = std::move(scheme);
    auto end = rest.find_first_of("/?#\\");
    auto authority = rest.substr(0, end);
    if (auto at = authority.rfind('@'); at != std::string_view::npos) authority.remove_prefix(at + 1);
    if (auto colon = authority.find(':'); colon != std::string_view::npos) authority = authority.substr(0, colon);
    u.host = to_lower(authority);
    u.path = end == std::string_view::npos ? "/" : std::string(rest.substr(end));
    return u;
}

}  // namespace

std::optional<Alert> validate_url(const ParamValue& v, const UrlWhitelist& w, const std::string& scope,
                                  const ClientIdentity& who, const SeverityTable& sev) {
    std::string_view value = v.canonical;
    auto reject = [&] {
        return make_alert(AttackClass::open_redirect, sev.of(AttackClass::open_redirect), Tier::high, 1.0,
                          std::string(kValidatorModule), scope, v.original, who);
    };

    // scheme ":" per RFC 3986
    std::size_t i = 0;
    if (!value.empty() && std::isalpha(static_cast<unsigned char>(value[0]))) {
        while (i < value.size() && (std::isalnum(static_cast<unsigned char>(value[i])) || value[i] == '+' ||
                                    value[i] == '-' || value[i] == '.')) {
            ++i;
        }
    }
    if (i > 0 && i < value.size() && value[i] == ':') {
        auto scheme = to_lower(value.substr(0, i));
        auto rest = value.substr(i + 1);
        if (!rest.starts_with("//")) return reject();
        if (host_matches(w, split_authority(rest.substr(2), scheme))) return std::nullopt;
        return reject();
    }
    if (value.starts_with("//") || value.starts_with("\\\\") || value.starts_with("/\\") ||
        value.starts_with("\\/")) {
        if (host_matches(w, split_authority(value.substr(2), std::nullopt))) return std::nullopt;
        return reject();
    }
    // No scheme: a trusted bare host ("www.partner.com/x") or a site-relative reference.
    if (host_matches(w, split_authority(value, std::nullopt))) return std::nullopt;
    if (w.allow_relative_same_site) return std::nullopt;
    return reject();
}

// ---------------------------------------------------------------------------

std::optional<Alert> validate_text(const ParamValue& v, const SignatureSet& sigs, const std::string& scope,
                                   const ClientIdentity& who) {
    const auto* rule = sigs.first_match(v.match);
    if (!rule) return std::nullopt;
    auto a = make_alert(rule->attack_class, rule->severity, Tier::high, 1.0, std::string(kValidatorModule),
                        scope, v.original, who);
    a.evidence.scope += " rule=" + rule->id;
    return a;
}

std::optional<Alert> validate_numeric(const ParamValue& v, const std::string& scope, const ClientIdentity& who,
                                      const SeverityTable& sev) {
    std::string_view s = v.canonical;
    if (!s.empty() && (s.front() == '-' || s.front() == '+')) s.remove_prefix(1);
    bool ok = !s.empty();
    bool seen_dot = false;
    bool digit_before = false;
    for (std::size_t i = 0; ok && i < s.size(); ++i) {
        char c = s[i];
        if (std::isdigit(static_cast<unsigned char>(c))) {
            digit_before = true;
        } else if (c == '.' && !seen_dot && digit_before && i + 1 < s.size()) {
            seen_dot = true;
        } else {
            ok = false;
        }
    }
    if (ok) return std::nullopt;
    return make_alert(AttackClass::type_violation, sev.of(AttackClass::type_violation), Tier::high, 1.0,
                      std::string(kValidatorModule), scope, v.original, who);
}

std::optional<Alert> validate_enumerated(const ParamValue& v, const EnumModel& m, const std::string& scope,
                                         const ClientIdentity& who, const SeverityTable& sev) {
    if (m.allowed.contains(v.canonical)) return std::nullopt;
    return make_alert(AttackClass::enum_violation, sev.of(AttackClass::enum_violation), Tier::high, 1.0,
                      std::string(kValidatorModule), scope, v.original, who);
}

std::optional<Alert> validate_format(const ParamValue& v, const CharDistModel& m, const std::string& scope,
                                     const ClientIdentity& who, const SeverityTable& sev) {
    if (v.canonical.empty()) {
        return make_alert(AttackClass::format_violation, sev.of(AttackClass::format_violation), Tier::high,
                          std::numeric_limits<double>::infinity(), std::string(kValidatorModule), scope,
                          v.original, who);
    }
    double chi2 = char_dist_chi2(v.canonical, m.idealized);
    if (chi2 <= m.chi2_threshold) return std::nullopt;
    Tier confidence = chi2 > 2.0 * m.chi2_threshold ? Tier::high : Tier::low;
    return make_alert(AttackClass::format_violation, sev.of(AttackClass::format_violation), confidence, chi2,
                      std::string(kValidatorModule), scope, v.original, who);
}

std::optional<Alert> validate_application(std::string_view value, const std::string& name,
                                          const MarkLedger& ledger, const std::optional<std::string>& session_id,
                                          const std::string& scope, const ClientIdentity& who,
                                          const SeverityTable& sev) {
    auto check = session_id ? ledger.verify(*session_id, name, value) : MarkLedger::Check::no_entry;
    if (check == MarkLedger::Check::match) return std::nullopt;
    auto a = make_alert(AttackClass::tampering, sev.of(AttackClass::tampering), Tier::high, 1.0,
                        std::string(kValidatorModule), scope, value, who);
    if (check == MarkLedger::Check::no_entry) a.evidence.scope += " no-ledger-entry";
    return a;
}

// ---------------------------------------------------------------------------

ParamSpec ValidatorModels::resolve(const ParamScope& scope) const {
    if (auto it = specs.find(scope); it != specs.end()) return it->second;
    ParamScope wildcard{std::string(kAnyPath), scope.location, scope.name};
    if (auto it = specs.find(wildcard); it != specs.end()) {
        auto spec = it->second;
        spec.scope = scope;
        return spec;
    }
    return ParamSpec{scope, ParamCategory::text, false, 0};
}

namespace {

std::optional<Alert> validate_one(const ParamValue& v, const ParamScope& scope, ParamCategory category,
                                  const CanonicalRequest& req, const ValidatorContext& ctx) {
    const auto where = scope.describe();
    const auto& who = req.identity;
    auto lookup = [&](const auto& map) -> decltype(&map.begin()->second) {
        auto it = map.find(scope);
        if (it == map.end()) it = map.find(ParamScope{std::string(kAnyPath), scope.location, scope.name});
        return it == map.end() ? nullptr : &it->second;
    };

    switch (category) {
        case ParamCategory::text:
            return validate_text(v, ctx.signatures, where, who);
        case ParamCategory::numeric:
            return validate_numeric(v, where, who, ctx.severity);
        case ParamCategory::enumerated:
            if (const auto* m = lookup(ctx.models.enums)) return validate_enumerated(v, *m, where, who, ctx.severity);
            return validate_text(v, ctx.signatures, where, who);
        case ParamCategory::format_specific:
            if (const auto* m = lookup(ctx.models.formats)) return validate_format(v, *m, where, who, ctx.severity);
            return validate_text(v, ctx.signatures, where, who);
        case ParamCategory::web_address:
            return validate_url(v, ctx.urls, where, who, ctx.severity);
        case ParamCategory::application: {
            if (!ctx.ledger) return validate_text(v, ctx.signatures, where, who);
            std::string_view received = scope.location == ParamLocation::cookie ? v.original : v.form_value;
            return validate_application(received, scope.name, *ctx.ledger, req.session_id, where, who,
                                        ctx.severity);
        }
    }
    return std::nullopt;
}

// The effective scheme: a model-backed category without its model falls back
// to text screening.
ParamCategory effective_category(const ParamSpec& spec, const ValidatorContext& ctx) {
    auto has = [&](const auto& map) {
        return map.contains(spec.scope) ||
               map.contains(ParamScope{std::string(kAnyPath), spec.scope.location, spec.scope.name});
    };
    switch (spec.category) {
        case ParamCategory::enumerated: return has(ctx.models.enums) ? spec.category : ParamCategory::text;
        case ParamCategory::format_specific: return has(ctx.models.formats) ? spec.category : ParamCategory::text;
        case ParamCategory::application: return ctx.ledger ? spec.category : ParamCategory::text;
        default: return spec.category;
    }
}

}  // namespace

std::vector<Alert> validate_request(const CanonicalRequest& req, const ValidatorContext& ctx,
                                    std::vector<ParamCheck>* checked) {
    std::vector<Alert> alerts;
    auto run = [&](const ParamValue& v, ParamScope scope) {
        auto spec = ctx.models.resolve(scope);
        auto category = effective_category(spec, ctx);
        if (checked) checked->push_back({scope, category});
        if (auto a = validate_one(v, scope, category, req, ctx)) alerts.push_back(std::move(*a));
    };

    for (const auto& [name, values] : req.query_params) {
        for (const auto& v : values) run(v, {req.path_template, ParamLocation::query, name});
    }
    for (const auto& [name, values] : req.body_params) {
        for (const auto& v : values) run(v, {req.path_template, ParamLocation::body, name});
    }
    for (const auto& [name, v] : req.cookies) {
        run(v, {std::string(kAnyPath), ParamLocation::cookie, name});
    }
    for (const auto& [name, values] : req.headers) {
        if (ctx.skipped_headers.contains(name)) continue;
        for (const auto& raw : values) {
            run(canonicalize(raw, ctx.decode_cap, false), {std::string(kAnyPath), ParamLocation::header, name});
        }
    }
    return alerts;
}

}  // namespace sentrygate
