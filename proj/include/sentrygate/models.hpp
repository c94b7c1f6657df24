#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "sentrygate/access_controller.hpp"
#include "sentrygate/bot_detector.hpp"
#include "sentrygate/data_validator.hpp"
#include "sentrygate/preprocessor.hpp"
#include "sentrygate/user_verifier.hpp"

namespace sentrygate {

/// All trained state, serialized as one JSON document.
struct ModelBundle {
    StaticAssetModel request_filter;
    ValidatorModels validator;
    BotBaseline bot;
    std::map<std::string, UserProfile> users;
    RoleProfile roles;
    std::set<std::string> watched;
    std::vector<std::string> warnings;

    static ModelBundle defaults(const PreprocessorConfig& config);
    std::string to_json() const;
    /// Throws ConfigError on malformed bundles.
    static ModelBundle from_json(const std::string& text);
};

}  // namespace sentrygate
