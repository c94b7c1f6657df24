#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "sentrygate/config.hpp"
#include "sentrygate/replay.hpp"
#include "sentrygate/runtime.hpp"

namespace sentrygate {

/// A small shop used as the protected application in tests and replays:
/// login, browsing, a product page with a hidden Price field, a sensitive
/// checkout and an admin page.
class ShopStub : public Upstream {
  public:
    HttpResponse forward(const RawRequest& req) override;

    struct Product {
        int id;
        std::string name;
        std::string price;
    };
    static const std::vector<Product>& catalog();
    /// username -> (password, role)
    static const std::map<std::string, std::pair<std::string, std::string>>& accounts();
};

/// Upstream that always fails, for the 502 path.
class DeadUpstream : public Upstream {
  public:
    HttpResponse forward(const RawRequest&) override { throw UpstreamUnreachable("upstream down"); }
};

struct ScenarioInfo {
    std::string name;
    std::string expected;  // attack class name
};

/// Every attack scenario the generator can emit, in emission order.
const std::vector<ScenarioInfo>& scenario_catalog();

/// Classes judged per scenario rather than per request.
bool is_stateful_class(AttackClass c);

struct GenerateOptions {
    std::uint64_t seed = 1;
    std::size_t benign_sessions = 60;
    std::size_t crawler_requests = 30;
    bool attacks = true;
};

/// Deterministic labeled trace: benign sessions first, then one block per
/// attack scenario, each from its own address.
std::vector<TraceRecord> generate(const GenerateOptions& options);

/// Settings for protecting the shop. The same values are written out by
/// write_shop_config so the CLI and the tests agree.
RuntimeSettings shop_settings();
/// Writes sentrygate.json, policy.json and the bot lists into `dir`.
/// `models_path` is stored in the config when non-empty.
void write_shop_config(const std::string& dir, const std::string& models_path = {});

class LabelMismatch : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

struct ClassMetrics {
    std::size_t expected = 0;
    std::size_t detected = 0;
    double rate() const { return expected == 0 ? 0.0 : static_cast<double>(detected) / expected; }
};

struct ScenarioResult {
    std::string name;
    std::string expected;
    bool detected = false;
};

struct MetricsReport {
    std::size_t requests = 0;
    std::size_t benign = 0;
    std::size_t false_positives = 0;
    std::size_t benign_alerts = 0;  // any alert, including log-only ones
    std::map<std::string, ClassMetrics> classes;
    std::vector<ScenarioResult> scenarios;
    std::map<std::string, std::map<std::string, std::size_t>> actions;    // class -> action -> n
    std::map<std::string, std::map<std::string, std::size_t>> confusion;  // expected -> reported -> n

    double fp_rate() const { return benign == 0 ? 0.0 : static_cast<double>(false_positives) / benign; }
    std::string to_json() const;
};

/// Joins verdicts and trace records by index. Throws LabelMismatch when the
/// lengths differ.
MetricsReport evaluate(std::span<const Verdict> verdicts, std::span<const TraceRecord> trace);

}  // namespace sentrygate
