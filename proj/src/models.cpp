#include "sentrygate/models.hpp"

#include "json.hpp"

namespace sentrygate {

using nlohmann::json;

namespace {

json scope_json(const ParamScope& s) {
    return {{"path", s.path_template}, {"location", to_string(s.location)}, {"name", s.name}};
}

ParamScope scope_from(const json& j) {
    auto loc = parse_param_location(j.at("location").get<std::string>());
    if (!loc) throw ConfigError("model bundle: bad location");
    return {j.at("path").get<std::string>(), *loc, j.at("name").get<std::string>()};
}

}  // namespace

ModelBundle ModelBundle::defaults(const PreprocessorConfig& config) {
    ModelBundle b;
    b.request_filter = StaticAssetModel::defaults(config);
    return b;
}

std::string ModelBundle::to_json() const {
    json doc;
    doc["version"] = 1;
    doc["request_filter"] = {{"extensions", request_filter.extension_set}, {"paths", request_filter.learned_paths}};

    json params = json::array();
    for (const auto& [scope, spec] : validator.specs) {
        auto j = scope_json(scope);
        j["category"] = to_string(spec.category);
        j["learned"] = spec.learned;
        j["samples"] = spec.samples;
        params.push_back(j);
    }
    doc["parameters"] = params;

    json enums = json::array();
    for (const auto& [scope, m] : validator.enums) {
        auto j = scope_json(scope);
        j["values"] = m.allowed;
        j["samples"] = m.samples_seen;
        enums.push_back(j);
    }
    doc["enumerated"] = enums;

    json formats = json::array();
    for (const auto& [scope, m] : validator.formats) {
        auto j = scope_json(scope);
        j["idealized"] = m.idealized;
        j["threshold"] = m.chi2_threshold;
        j["samples"] = m.samples;
        formats.push_back(j);
    }
    doc["format"] = formats;

    doc["bot_baseline"] = {{"rate_mean", bot.rate_mean},
                           {"rate_std", bot.rate_std},
                           {"max_burst", bot.max_burst},
                           {"error_ratio_threshold", bot.error_ratio_threshold},
                           {"k", bot.k},
                           {"window_ms", bot.window_ms},
                           {"min_events", bot.min_events},
                           {"min_events_for_error_ratio", bot.min_events_for_error_ratio},
                           {"training_samples", bot.training_samples}};

    json users_json = json::object();
    for (const auto& [user, profile] : users) users_json[user] = json::parse(profile.to_json());
    doc["user_profiles"] = users_json;
    doc["role_profiles"] = json::parse(roles.to_json());
    doc["watched_params"] = watched;
    doc["warnings"] = warnings;
    return doc.dump(1);
}

ModelBundle ModelBundle::from_json(const std::string& text) {
    ModelBundle b;
    try {
        auto doc = json::parse(text);
        for (const char* section : {"request_filter", "enumerated", "format", "bot_baseline", "user_profiles",
                                    "role_profiles", "watched_params"}) {
            if (!doc.contains(section)) throw ConfigError(std::string("model bundle lacks section ") + section);
        }
        const auto& rf = doc.at("request_filter");
        b.request_filter.extension_set = rf.at("extensions").get<std::set<std::string>>();
        b.request_filter.learned_paths = rf.at("paths").get<std::set<std::string>>();

        for (const auto& j : doc.value("parameters", json::array())) {
            auto cat = parse_param_category(j.at("category").get<std::string>());
            if (!cat) throw ConfigError("model bundle: bad category");
            auto scope = scope_from(j);
            b.validator.specs[scope] = {scope, *cat, j.value("learned", true), j.value("samples", std::size_t{0})};
        }
        for (const auto& j : doc.at("enumerated")) {
            b.validator.enums[scope_from(j)] = {j.at("values").get<std::set<std::string>>(),
                                                j.at("samples").get<std::size_t>()};
        }
        for (const auto& j : doc.at("format")) {
            CharDistModel m;
            m.idealized = j.at("idealized").get<CharDist>();
            m.chi2_threshold = j.at("threshold").get<double>();
            m.samples = j.at("samples").get<std::size_t>();
            b.validator.formats[scope_from(j)] = m;
        }
        const auto& bb = doc.at("bot_baseline");
        b.bot.rate_mean = bb.at("rate_mean").get<double>();
        b.bot.rate_std = bb.at("rate_std").get<double>();
        b.bot.max_burst = bb.at("max_burst").get<double>();
        b.bot.error_ratio_threshold = bb.at("error_ratio_threshold").get<double>();
        b.bot.k = bb.at("k").get<double>();
        b.bot.window_ms = bb.at("window_ms").get<TimestampMs>();
        b.bot.min_events = bb.at("min_events").get<std::size_t>();
        b.bot.min_events_for_error_ratio = bb.at("min_events_for_error_ratio").get<std::size_t>();
        b.bot.training_samples = bb.at("training_samples").get<std::size_t>();

        for (const auto& [user, p] : doc.at("user_profiles").items()) b.users[user] = UserProfile::from_json(p.dump());
        b.roles = RoleProfile::from_json(doc.at("role_profiles").dump());
        b.watched = doc.at("watched_params").get<std::set<std::string>>();
        b.warnings = doc.value("warnings", std::vector<std::string>{});
    } catch (const json::exception& e) {
        throw ConfigError(std::string("model bundle: ") + e.what());
    }
    return b;
}

}  // namespace sentrygate
