#include "sentrygate/config.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace sentrygate {

namespace fs = std::filesystem;
using nlohmann::json;

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

namespace {

std::pair<std::string, int> parse_address(const std::string& text, const char* what) {
    auto colon = text.rfind(':');
    if (colon == std::string::npos || colon == 0) throw ConfigError(std::string(what) + " must be host:port");
    try {
        int port = std::stoi(text.substr(colon + 1));
        if (port <= 0 || port > 65535) throw std::out_of_range("port");
        return {text.substr(0, colon), port};
    } catch (const std::logic_error&) {
        throw ConfigError(std::string(what) + " has a bad port: " + text);
    }
}

std::vector<std::string> list_file(const json& doc, const char* key, const fs::path& base) {
    if (!doc.contains(key)) return {};
    return read_list_lines(read_file((base / doc.at(key).get<std::string>()).string()));
}

}  // namespace

Config parse_config(const std::string& text, const std::string& base_dir) {
    Config cfg;
    auto& s = cfg.settings;
    fs::path base(base_dir);
    auto resolve = [&](const json& v) { return (base / v.get<std::string>()).lexically_normal().string(); };

    try {
        auto doc = json::parse(text);
        if (doc.contains("listen")) std::tie(cfg.listen_host, cfg.listen_port) = parse_address(doc.at("listen"), "listen");
        if (doc.contains("upstream")) {
            std::tie(cfg.upstream_host, cfg.upstream_port) = parse_address(doc.at("upstream"), "upstream");
        }
        if (doc.contains("models")) {
            cfg.models_path = resolve(doc.at("models"));
            if (!fs::exists(cfg.models_path)) throw ConfigError("model bundle not found: " + cfg.models_path);
        }
        if (doc.contains("log_dir")) cfg.log_dir = resolve(doc.at("log_dir"));
        cfg.learning = doc.value("learning", false);

        if (doc.contains("policy")) {
            s.policy = RbacPolicy::from_json(read_file(resolve(doc.at("policy"))));
        } else {
            cfg.warnings.push_back("no rbac policy configured; every operation is unlisted");
        }
        if (doc.contains("signatures")) s.signatures = SignatureSet::from_json(read_file(resolve(doc.at("signatures"))));
        if (doc.contains("leak_rules")) s.leaks = LeakRuleSet::from_json(read_file(resolve(doc.at("leak_rules"))));
        if (doc.contains("bot_lists")) {
            const auto& b = doc.at("bot_lists");
            auto good = list_file(b, "good_ips", base);
            auto bad = list_file(b, "bad_ips", base);
            auto agents = list_file(b, "bad_agents", base);
            s.bots = BotLists::from_lines(good, bad, agents);
        }
        if (doc.contains("block_list")) {
            cfg.block_list_path = resolve(doc.at("block_list"));
            // A block list that does not exist yet is created by the first `block` command.
            if (fs::exists(cfg.block_list_path)) s.initial_blocks = load_block_entries(read_file(cfg.block_list_path));
        }
        for (const auto& p : doc.value("protected_paths", json::array())) {
            s.initial_blocks.push_back({BlockKind::protected_prefix, p.get<std::string>(), std::nullopt, "protected"});
        }
        if (doc.contains("secret")) {
            s.secret = Secret::from_file(resolve(doc.at("secret")));
        } else {
            cfg.warnings.push_back("no secret configured; using the fixed development key");
        }

        s.preprocessor.session_cookie_name = doc.value("session_cookie_name", s.preprocessor.session_cookie_name);
        s.own_host = doc.value("own_host", s.own_host);
        if (doc.contains("gap_report")) s.gap_report_path = resolve(doc.at("gap_report"));

        if (doc.contains("limits")) {
            const auto& l = doc.at("limits");
            s.limits.idle_timeout = l.value("idle_timeout_s", s.limits.idle_timeout / kSecondMs) * kSecondMs;
            s.limits.login_window = l.value("login_window_s", s.limits.login_window / kSecondMs) * kSecondMs;
            s.limits.login_threshold = l.value("login_threshold", s.limits.login_threshold);
            s.preprocessor.decode_cap = l.value("decode_cap", s.preprocessor.decode_cap);
            s.min_role_support = l.value("min_role_support", s.min_role_support);
            if (s.limits.idle_timeout <= 0 || s.limits.login_window <= 0 || s.preprocessor.decode_cap < 1) {
                throw ConfigError("limits must be positive");
            }
        }
        if (doc.contains("response_policy")) s.response = ResponsePolicy::from_json(doc.at("response_policy").dump());
        if (doc.contains("severity")) {
            for (const auto& [cls, tier] : doc.at("severity").items()) {
                auto c = parse_attack_class(cls);
                auto t = parse_tier(tier.get<std::string>());
                if (!c || !t) throw ConfigError("bad severity entry: " + cls);
                s.severity.tiers[*c] = *t;
            }
        }
        for (const auto& p : doc.value("parameters", json::array())) {
            auto loc = parse_param_location(p.at("location").get<std::string>());
            auto cat = parse_param_category(p.at("category").get<std::string>());
            if (!loc || !cat) throw ConfigError("bad parameter override: " + p.dump());
            std::string path = p.value("path", std::string(kAnyPath));
            if (*loc == ParamLocation::header || *loc == ParamLocation::cookie) path = std::string(kAnyPath);
            std::string name = p.at("name").get<std::string>();
            if (*loc == ParamLocation::header) name = to_lower(name);
            s.overrides.push_back({{path, *loc, name}, *cat});
        }
        for (const auto& h : doc.value("enumerated_headers", json::array())) {
            s.enumerated_headers.insert(to_lower(h.get<std::string>()));
        }
        if (doc.contains("url_whitelist")) {
            const auto& u = doc.at("url_whitelist");
            for (const auto& e : u.value("trusted", json::array())) {
                s.urls.trusted.push_back(UrlWhitelist::parse_entry(e.get<std::string>()));
            }
            s.urls.allow_relative_same_site = u.value("allow_relative", true);
        }
        for (const auto& c : doc.value("sealed_cookies", json::array())) s.sealed_cookies.insert(c.get<std::string>());
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    return cfg;
}

Config load_config(const std::string& path) {
    auto base = fs::path(path).parent_path().string();
    return parse_config(read_file(path), base.empty() ? "." : base);
}

}  // namespace sentrygate
