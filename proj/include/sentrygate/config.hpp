#pragma once

#include <optional>
#include <set>
#include <string>
#include <vector>

#include "sentrygate/access_controller.hpp"
#include "sentrygate/bot_detector.hpp"
#include "sentrygate/connection_verifier.hpp"
#include "sentrygate/crypto.hpp"
#include "sentrygate/data_validator.hpp"
#include "sentrygate/defender.hpp"
#include "sentrygate/preprocessor.hpp"
#include "sentrygate/response_controller.hpp"
#include "sentrygate/user_verifier.hpp"

namespace sentrygate {

/// Administrator-assigned category for a parameter; wins over learning.
struct ParamOverride {
    ParamScope scope;
    ParamCategory category = ParamCategory::text;
};

/// Everything the pipeline needs besides trained models.
struct RuntimeSettings {
    PreprocessorConfig preprocessor;
    SessionLimits limits;
    SeverityTable severity = SeverityTable::defaults();
    SignatureSet signatures = SignatureSet::starter();
    UrlWhitelist urls;
    LeakRuleSet leaks = LeakRuleSet::starter();
    BotLists bots;
    RbacPolicy policy;
    ResponsePolicy response = ResponsePolicy::defaults();
    std::vector<ParamOverride> overrides;
    std::set<std::string> enumerated_headers;
    std::set<std::string> sealed_cookies;
    std::vector<BlockEntry> initial_blocks;
    Secret secret = Secret::development();
    std::string own_host = "localhost";
    std::size_t min_role_support = 5;
    std::string gap_report_path;
};

struct Config {
    std::string listen_host = "127.0.0.1";
    int listen_port = 8080;
    std::string upstream_host = "127.0.0.1";
    int upstream_port = 9000;
    std::string models_path;  // empty = untrained defaults
    std::string log_dir;
    std::string block_list_path;  // admin blocks; re-read while serving
    bool learning = false;
    std::vector<std::string> warnings;
    RuntimeSettings settings;
};

/// Loads the main JSON config. Relative paths resolve against the config
/// file's directory; every referenced file must exist and parse.
Config load_config(const std::string& path);
Config parse_config(const std::string& text, const std::string& base_dir);

std::string read_file(const std::string& path);

}  // namespace sentrygate
