#include "sentrygate/response_controller.hpp"

#include "json.hpp"
#include "sentrygate/preprocessor.hpp"
#include "sentrygate/user_verifier.hpp"

namespace sentrygate {

namespace {

constexpr auto kIcase = std::regex::ECMAScript | std::regex::icase;

const std::regex& form_tag_re() {
    static const std::regex re(R"(<form\b[^>]*>)", kIcase);
    return re;
}

const std::regex& anchor_href_re() {
    static const std::regex re(R"re((<a\b[^>]*?\bhref\s*=\s*)(["'])([^"']*)\2)re", kIcase);
    return re;
}

const std::regex& input_tag_re() {
    static const std::regex re(R"(<input\b[^>]*>)", kIcase);
    return re;
}

std::map<std::string, std::string> tag_attributes(const std::string& tag) {
    static const std::regex attr(R"re(([a-zA-Z_:][-a-zA-Z0-9_:.]*)\s*=\s*(?:"([^"]*)"|'([^']*)'|([^\s"'=<>`]+)))re");
    std::map<std::string, std::string> out;
    for (auto it = std::sregex_iterator(tag.begin(), tag.end(), attr); it != std::sregex_iterator(); ++it) {
        const auto& m = *it;
        std::string value = m[2].matched ? m[2].str() : m[3].matched ? m[3].str() : m[4].str();
        out.emplace(to_lower(m[1].str()), value);
    }
    return out;
}

std::size_t count_and_replace(std::string& text, const LeakRule& rule) {
    auto begin = std::sregex_iterator(text.begin(), text.end(), rule.compiled);
    auto n = static_cast<std::size_t>(std::distance(begin, std::sregex_iterator()));
    if (n > 0) text = std::regex_replace(text, rule.compiled, rule.replacement);
    return n;
}

std::string host_of(std::string_view authority) {
    auto at = authority.rfind('@');
    if (at != std::string_view::npos) authority.remove_prefix(at + 1);
    auto colon = authority.find(':');
    return to_lower(authority.substr(0, colon));
}

/// Path of a same-origin href, or nullopt for other origins and schemes.
std::optional<std::string> same_origin_path(std::string_view href, std::string_view own_host) {
    auto cut = href.find_first_of("?#");
    std::string_view before = href.substr(0, cut);
    if (before.starts_with("//")) {
        auto rest = before.substr(2);
        auto slash = rest.find('/');
        if (host_of(rest.substr(0, slash)) != host_of(own_host)) return std::nullopt;
        return slash == std::string_view::npos ? std::string("/") : std::string(rest.substr(slash));
    }
    auto scheme_end = before.find("://");
    if (scheme_end != std::string_view::npos) {
        auto scheme = to_lower(before.substr(0, scheme_end));
        if (scheme != "http" && scheme != "https") return std::nullopt;
        auto rest = before.substr(scheme_end + 3);
        auto slash = rest.find('/');
        if (host_of(rest.substr(0, slash)) != host_of(own_host)) return std::nullopt;
        return slash == std::string_view::npos ? std::string("/") : std::string(rest.substr(slash));
    }
    if (before.starts_with("/")) return std::string(before);
    return std::nullopt;
}

}  // namespace

void LeakRuleSet::add(std::string label, std::string pattern, std::string replacement) {
    static const std::regex label_re(R"([A-Za-z0-9_.-]+)");
    if (!std::regex_match(label, label_re)) throw ConfigError("leak rule label must be a simple token: " + label);
    LeakRule rule;
    try {
        rule.compiled = std::regex(pattern, kIcase);
    } catch (const std::regex_error& e) {
        throw ConfigError("leak rule " + label + ": " + e.what());
    }
    if (replacement.find('$') != std::string::npos) {
        throw ConfigError("leak rule " + label + ": replacement may not reference the match");
    }
    if (std::regex_search(replacement, rule.compiled)) {
        throw ConfigError("leak rule " + label + ": replacement matches its own pattern");
    }
    rule.label = std::move(label);
    rule.pattern = std::move(pattern);
    rule.replacement = std::move(replacement);
    rules_.push_back(std::move(rule));
}

LeakRuleSet LeakRuleSet::starter() {
    LeakRuleSet s;
    s.add("db-error",
          R"((ODBC [A-Za-z ]*Driver[^<\r\n]*|You have an error in your SQL syntax[^<\r\n]*|ORA-[0-9]{5}[^<\r\n]*|Unclosed quotation mark[^<\r\n]*))",
          "An internal error occurred.");
    s.add("server-banner", R"((apache|nginx|microsoft-iis|lighttpd)/[0-9][0-9.]*( \([^)]*\))?)", "server");
    s.add("runtime-version", R"(php/[0-9][0-9.]*)", "runtime");
    s.add("stack-trace", R"(at [A-Za-z0-9_.$]+\([A-Za-z0-9_]+\.java:[0-9]+\))", "");
    return s;
}

LeakRuleSet LeakRuleSet::from_json(const std::string& text) {
    LeakRuleSet s;
    try {
        for (const auto& r : nlohmann::json::parse(text)) {
            s.add(r.at("label").get<std::string>(), r.at("pattern").get<std::string>(),
                  r.at("replacement").get<std::string>());
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("leak rules: ") + e.what());
    }
    return s;
}

std::vector<ScrubEntry> scrub(HttpResponse& resp, const LeakRuleSet& rules) {
    std::vector<ScrubEntry> log;
    bool body_changed = false;
    for (const auto& rule : rules.rules()) {
        std::size_t n = 0;
        for (auto& [name, value] : resp.headers) {
            if (iequals(name, "content-length")) continue;
            n += count_and_replace(value, rule);
        }
        auto in_body = count_and_replace(resp.body, rule);
        body_changed |= in_body > 0;
        n += in_body;
        if (n > 0) log.push_back({rule.label, n});
    }
    if (body_changed && find_header(resp.headers, "content-length")) {
        set_header(resp.headers, "Content-Length", std::to_string(resp.body.size()));
    }
    return log;
}

bool is_html(const HttpResponse& resp) {
    auto ct = find_header(resp.headers, "content-type");
    return ct && starts_with_icase(trim(*ct), "text/html");
}

InjectResult inject_csrf(std::string& html, const std::string& token, const std::set<Operation>& sensitive_ops,
                         std::string_view own_host) {
    static const std::regex method_re(R"re(\bmethod\s*=\s*["']?([a-z]+))re", kIcase);
    InjectResult result;
    const std::string hidden = "<input type=\"hidden\" name=\"" + std::string(kCsrfParam) + "\" value=\"" + token + "\">";

    std::string out;
    std::size_t last = 0;
    for (auto it = std::sregex_iterator(html.begin(), html.end(), form_tag_re()); it != std::sregex_iterator(); ++it) {
        const auto& m = *it;
        auto end = static_cast<std::size_t>(m.position(0) + m.length(0));
        out.append(html, last, end - last);
        last = end;
        std::smatch method;
        std::string tag = m.str(0);
        if (!std::regex_search(tag, method, method_re)) continue;
        auto verb = to_lower(method[1].str());
        if (verb == "post" || verb == "put" || verb == "delete" || verb == "patch") {
            out += hidden;
            ++result.forms;
        }
    }
    out.append(html, last);
    html.swap(out);

    if (sensitive_ops.empty()) return result;
    out.clear();
    last = 0;
    for (auto it = std::sregex_iterator(html.begin(), html.end(), anchor_href_re()); it != std::sregex_iterator(); ++it) {
        const auto& m = *it;
        std::string href = m.str(3);
        auto path = same_origin_path(html_entity_decode(href), own_host);
        if (!path || !sensitive_ops.contains({"GET", path_template(percent_decode(*path, false))})) continue;
        auto href_begin = static_cast<std::size_t>(m.position(3));
        out.append(html, last, href_begin - last);
        auto hash = href.find('#');
        std::string base = href.substr(0, hash);
        base += (base.find('?') == std::string::npos ? "?" : "&amp;");
        base += std::string(kCsrfParam) + "=" + token;
        if (hash != std::string::npos) base += href.substr(hash);
        out += base;
        last = href_begin + href.size();
        ++result.links;
    }
    out.append(html, last);
    html.swap(out);
    return result;
}

std::vector<ServerValue> collect_server_values(const HttpResponse& resp) {
    std::vector<ServerValue> values;
    if (is_html(resp)) {
        const auto& body = resp.body;
        for (auto it = std::sregex_iterator(body.begin(), body.end(), input_tag_re()); it != std::sregex_iterator();
             ++it) {
            auto attrs = tag_attributes(it->str(0));
            auto type = attrs.find("type");
            auto name = attrs.find("name");
            if (type == attrs.end() || name == attrs.end() || to_lower(type->second) != "hidden") continue;
            auto value = attrs.find("value");
            values.push_back({ServerValueSource::hidden_field, html_entity_decode(name->second),
                              value == attrs.end() ? std::string() : html_entity_decode(value->second)});
        }
        for (auto it = std::sregex_iterator(body.begin(), body.end(), anchor_href_re()); it != std::sregex_iterator();
             ++it) {
            auto href = html_entity_decode(it->str(3));
            if (href.starts_with("//") || href.find("://") != std::string::npos) continue;
            auto q = href.find('?');
            if (q == std::string::npos) continue;
            auto query = std::string_view(href).substr(q + 1);
            query = query.substr(0, query.find('#'));
            for (const auto& [n, v] : split_form(query)) {
                values.push_back({ServerValueSource::link_query, percent_decode(n, true), percent_decode(v, true)});
            }
        }
    }
    for (const auto& raw : find_headers(resp.headers, "set-cookie")) {
        if (auto c = parse_set_cookie(raw)) values.push_back({ServerValueSource::set_cookie, c->name, c->value});
    }
    return values;
}

std::vector<std::string> mark(const std::vector<ServerValue>& values, const std::set<std::string>& watched,
                              MarkLedger& ledger, const std::string& session_id) {
    std::vector<std::string> names;
    for (const auto& v : values) {
        if (!watched.contains(v.name)) continue;
        ledger.mark(session_id, v.name, v.value);
        names.push_back(v.name);
    }
    return names;
}

std::set<std::string> learn_watched(std::span<const WatchObservation> trace, const std::set<std::string>& excluded) {
    std::map<std::string, std::map<std::string, std::set<std::string>>> seen;  // session -> name -> values
    std::map<std::string, bool> verdict;
    for (const auto& obs : trace) {
        auto& session_seen = seen[obs.session_id];
        for (const auto& [name, value] : obs.values) {
            if (excluded.contains(name)) continue;
            if (obs.from_server) {
                session_seen[name].insert(value);
                continue;
            }
            auto it = session_seen.find(name);
            bool echoed = it != session_seen.end() && it->second.contains(value);
            auto [v, inserted] = verdict.emplace(name, echoed);
            if (!inserted) v->second = v->second && echoed;
        }
    }
    std::set<std::string> watched;
    for (const auto& [name, ok] : verdict) {
        if (ok) watched.insert(name);
    }
    return watched;
}

std::vector<std::string> seal_cookies(HttpResponse& resp, const std::set<std::string>& sealed_names,
                                      const Key256& key, RandomSource& rng) {
    std::vector<std::string> sealed;
    if (sealed_names.empty()) return sealed;
    for (auto& [name, value] : resp.headers) {
        if (!iequals(name, "set-cookie")) continue;
        auto c = parse_set_cookie(value);
        if (!c || !sealed_names.contains(c->name)) continue;
        c->value = seal_value(c->value, c->name, key, rng);
        value = format_set_cookie(*c);
        sealed.push_back(c->name);
    }
    return sealed;
}

std::vector<std::string> unseal_cookies(RawRequest& req, const std::set<std::string>& sealed_names,
                                        const Key256& key) {
    std::vector<std::string> failed;
    if (sealed_names.empty()) return failed;
    for (auto& [name, value] : req.headers) {
        if (!iequals(name, "cookie")) continue;
        auto pairs = parse_cookie_header(value);
        bool changed = false;
        for (auto& [n, v] : pairs) {
            if (!sealed_names.contains(n)) continue;
            if (auto plain = unseal_value(v, n, key)) {
                v = *plain;
                changed = true;
            } else {
                failed.push_back(n);
            }
        }
        if (!changed) continue;
        std::string rebuilt;
        for (const auto& [n, v] : pairs) {
            if (!rebuilt.empty()) rebuilt += "; ";
            rebuilt += n + "=" + v;
        }
        value = rebuilt;
    }
    return failed;
}

}  // namespace sentrygate
