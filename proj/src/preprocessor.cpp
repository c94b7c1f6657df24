#include "sentrygate/preprocessor.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>

namespace sentrygate {

namespace {

void append_utf8(std::string& out, std::uint32_t cp) {
    if (cp < 0x80) {
        out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
        out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
        out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
        out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
}

struct NamedEntity {
    std::string_view name;
    char value;
};

constexpr NamedEntity kNamedEntities[] = {
    {"lt", '<'}, {"gt", '>'}, {"amp", '&'}, {"quot", '"'},
    {"apos", '\''}, {"nbsp", ' '}, {"sol", '/'}, {"colon", ':'},
    {"lpar", '('}, {"rpar", ')'}, {"equals", '='}, {"tab", '\t'},
    {"newline", '\n'},
};

bool is_ws(unsigned char c) {
    return c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '\f' || c == '\v';
}

std::string collapse_whitespace(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    bool pending_space = false;
    for (unsigned char c : s) {
        if (is_ws(c)) {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) out.push_back(' ');
        pending_space = false;
        out.push_back(static_cast<char>(c));
    }
    return out;
}

std::string decode_round(std::string_view s, bool plus_as_space) {
    return html_entity_decode(percent_decode(s, plus_as_space));
}

// RFC 3986 dot-segment removal over an absolute path.
std::string remove_dot_segments(std::string_view path, bool& changed) {
    std::vector<std::string_view> out;
    auto segments = split(path, '/');
    changed = false;
    for (std::size_t i = 1; i < segments.size(); ++i) {
        auto seg = segments[i];
        if (seg == ".") {
            changed = true;
            if (i + 1 == segments.size()) out.emplace_back();
            continue;
        }
        if (seg == "..") {
            changed = true;
            if (!out.empty()) out.pop_back();
            if (i + 1 == segments.size()) out.emplace_back();
            continue;
        }
        out.push_back(seg);
    }
    std::string result;
    for (auto seg : out) {
        result.push_back('/');
        result.append(seg);
    }
    if (result.empty()) result = "/";
    return result;
}

}  // namespace

std::string html_entity_decode(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    std::size_t i = 0;
    while (i < s.size()) {
        if (s[i] != '&') {
            out.push_back(s[i++]);
            continue;
        }
        // Numeric reference; the trailing ';' is optional as in browsers.
        if (i + 2 < s.size() && s[i + 1] == '#') {
            bool hex = (s[i + 2] == 'x' || s[i + 2] == 'X');
            std::size_t start = i + (hex ? 3 : 2);
            std::size_t end = start;
            while (end < s.size() && end - start < 8 &&
                   (hex ? std::isxdigit(static_cast<unsigned char>(s[end]))
                        : std::isdigit(static_cast<unsigned char>(s[end])))) {
                ++end;
            }
            std::uint32_t cp = 0;
            if (end > start) {
                auto [ptr, ec] = std::from_chars(s.data() + start, s.data() + end, cp, hex ? 16 : 10);
                if (ec == std::errc{} && cp > 0 && cp <= 0x10FFFF && !(cp >= 0xD800 && cp <= 0xDFFF)) {
                    append_utf8(out, cp);
                    i = end;
                    if (i < s.size() && s[i] == ';') ++i;
                    continue;
                }
            }
            out.push_back(s[i++]);
            continue;
        }
        bool matched = false;
        for (const auto& entity : kNamedEntities) {
            auto len = entity.name.size();
            if (i + 1 + len < s.size() && s.substr(i + 1, len) == entity.name && s[i + 1 + len] == ';') {
                out.push_back(entity.value);
                i += len + 2;
                matched = true;
                break;
            }
        }
        if (!matched) out.push_back(s[i++]);
    }
    return out;
}

ParamValue canonicalize(std::string_view value, int decode_cap, bool plus_as_space) {
    ParamValue pv;
    pv.original = std::string(value);
    pv.form_value = percent_decode(value, plus_as_space);

    std::string current(value);
    for (int round = 1; round <= decode_cap; ++round) {
        std::string next = decode_round(current, plus_as_space);
        if (next == current) break;
        pv.decode_rounds = round;
        if (round == 2) pv.double_encoded = true;
        current = std::move(next);
    }
    // Residue left by the cap counts as nested encoding too.
    if (pv.decode_rounds == decode_cap && decode_round(current, plus_as_space) != current) {
        pv.double_encoded = true;
    }
    pv.canonical = collapse_whitespace(current);
    pv.match = to_lower(pv.canonical);
    return pv;
}

std::string path_template(std::string_view path) {
    std::string out;
    auto segments = split(path, '/');
    for (std::size_t i = 0; i < segments.size(); ++i) {
        if (i > 0) out.push_back('/');
        auto seg = segments[i];
        bool numeric = !seg.empty() && std::all_of(seg.begin(), seg.end(), [](unsigned char c) {
            return std::isdigit(c) != 0;
        });
        if (numeric) {
            out += "{id}";
        } else {
            out.append(seg);
        }
    }
    return out;
}

std::string path_extension(std::string_view path) {
    auto slash = path.rfind('/');
    auto last = slash == std::string_view::npos ? path : path.substr(slash + 1);
    auto dot = last.rfind('.');
    if (dot == std::string_view::npos || dot == 0 || dot + 1 == last.size()) return {};
    return to_lower(last.substr(dot + 1));
}

std::string_view to_string(EvasionFlag f) {
    switch (f) {
        case EvasionFlag::double_encoded: return "DOUBLE_ENCODED";
        case EvasionFlag::dot_segments: return "DOT_SEGMENTS";
    }
    return "UNKNOWN";
}

std::set<std::string> PreprocessorConfig::default_static_extensions() {
    return {"css", "js", "png", "jpg", "jpeg", "gif", "ico", "svg", "woff",
            "woff2", "ttf", "eot", "map", "webp", "bmp"};
}

std::optional<std::string> CanonicalRequest::header(std::string_view lower_name) const {
    auto it = headers.find(std::string(lower_name));
    if (it == headers.end() || it->second.empty()) return std::nullopt;
    return it->second.front();
}

const ParamValue* CanonicalRequest::param(std::string_view name) const {
    std::string key(name);
    if (auto it = body_params.find(key); it != body_params.end() && !it->second.empty()) {
        return &it->second.front();
    }
    if (auto it = query_params.find(key); it != query_params.end() && !it->second.empty()) {
        return &it->second.front();
    }
    return nullptr;
}

CanonicalRequest canonicalize_request(const RawRequest& raw, const PreprocessorConfig& config) {
    CanonicalRequest req;
    req.received_at = raw.received_at;
    req.method = raw.method;
    req.target = raw.target;
    req.identity.ip = raw.source_ip;

    for (const auto& [name, value] : raw.headers) {
        req.headers[to_lower(name)].push_back(value);
    }
    if (auto ua = find_header(raw.headers, "User-Agent")) req.identity.user_agent = *ua;

    auto qpos = raw.target.find('?');
    std::string_view raw_path = std::string_view(raw.target).substr(0, qpos);
    std::string_view raw_query =
        qpos == std::string::npos ? std::string_view{} : std::string_view(raw.target).substr(qpos + 1);

    // The path is decoded like a value (no '+' rule) and then dot-normalized.
    auto decoded_path = canonicalize(raw_path, config.decode_cap, false);
    if (decoded_path.double_encoded) req.evasion_flags.insert(EvasionFlag::double_encoded);
    std::string path = decoded_path.canonical;
    if (path.empty() || path.front() != '/') path.insert(path.begin(), '/');
    bool dots = false;
    req.path = remove_dot_segments(path, dots);
    if (dots) req.evasion_flags.insert(EvasionFlag::dot_segments);
    req.path_template = path_template(req.path);

    auto add_params = [&](std::string_view encoded,
                          std::map<std::string, std::vector<ParamValue>>& into) {
        for (auto& [name, value] : split_form(encoded)) {
            auto pv = canonicalize(value, config.decode_cap, true);
            if (pv.double_encoded) req.evasion_flags.insert(EvasionFlag::double_encoded);
            into[percent_decode(name, true)].push_back(std::move(pv));
        }
    };
    add_params(raw_query, req.query_params);

    auto content_type = find_header(raw.headers, "Content-Type");
    if (content_type && starts_with_icase(*content_type, "application/x-www-form-urlencoded")) {
        add_params(raw.body, req.body_params);
    }

    for (const auto& cookie_header : find_headers(raw.headers, "Cookie")) {
        for (auto& [name, value] : parse_cookie_header(cookie_header)) {
            auto pv = canonicalize(value, config.decode_cap, false);
            if (pv.double_encoded) req.evasion_flags.insert(EvasionFlag::double_encoded);
            req.cookies.insert_or_assign(name, std::move(pv));
        }
    }
    if (auto it = req.cookies.find(config.session_cookie_name); it != req.cookies.end()) {
        req.session_id = it->second.original;
        req.identity.session_id = req.session_id;
    }
    return req;
}

StaticAssetModel StaticAssetModel::defaults(const PreprocessorConfig& config) {
    StaticAssetModel model;
    model.extension_set = config.static_extensions;
    if (model.extension_set.empty()) model.extension_set = PreprocessorConfig::default_static_extensions();
    return model;
}

bool should_monitor(const CanonicalRequest& req, const StaticAssetModel& model) {
    auto ext = path_extension(req.path);
    if (!ext.empty() && model.extension_set.contains(ext)) return false;
    return !model.learned_paths.contains(req.path_template);
}

StaticAssetModel train_request_filter(std::span<const LabeledRequest> trace,
                                      const PreprocessorConfig& config) {
    StaticAssetModel model = StaticAssetModel::defaults(config);
    std::set<std::string> nav_templates, asset_templates, nav_exts, asset_exts;
    for (const auto& entry : trace) {
        auto canon = canonicalize_request(entry.request, config);
        auto ext = path_extension(canon.path);
        auto& templates = entry.asset ? asset_templates : nav_templates;
        auto& exts = entry.asset ? asset_exts : nav_exts;
        templates.insert(canon.path_template);
        if (!ext.empty()) exts.insert(ext);
    }
    for (const auto& t : asset_templates) {
        if (!nav_templates.contains(t)) model.learned_paths.insert(t);
    }
    for (const auto& e : asset_exts) {
        if (!nav_exts.contains(e)) model.extension_set.insert(e);
    }
    return model;
}

}  // namespace sentrygate
