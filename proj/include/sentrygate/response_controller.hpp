#pragma once

#include <map>
#include <optional>
#include <regex>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sentrygate/access_controller.hpp"
#include "sentrygate/crypto.hpp"
#include "sentrygate/http.hpp"
#include "sentrygate/mark_ledger.hpp"

namespace sentrygate {

constexpr std::string_view kResponseControllerModule = "response_controller";

struct LeakRule {
    std::string label;
    std::string pattern;
    std::string replacement;
    std::regex compiled;
};

/// Patterns for information the application should not disclose.
class LeakRuleSet {
  public:
    /// Throws ConfigError for bad regexes, capture references in the
    /// replacement, or a replacement the pattern itself would match.
    void add(std::string label, std::string pattern, std::string replacement);
    const std::vector<LeakRule>& rules() const { return rules_; }
    bool empty() const { return rules_.empty(); }

    /// Database error text, server banners, framework version headers.
    static LeakRuleSet starter();
    /// [{"label", "pattern", "replacement"}]
    static LeakRuleSet from_json(const std::string& text);

  private:
    std::vector<LeakRule> rules_;
};

struct ScrubEntry {
    std::string label;
    std::size_t count = 0;
};

/// Applies every rule to header values and the body. Content-Length is
/// recomputed when the body changes. Returns one entry per rule that fired.
std::vector<ScrubEntry> scrub(HttpResponse& resp, const LeakRuleSet& rules);

bool is_html(const HttpResponse& resp);

struct InjectResult {
    std::size_t forms = 0;
    std::size_t links = 0;
};

/// Adds the token to state-changing forms and to same-origin anchors whose
/// GET target is a sensitive operation. `own_host` is the proxy's host name.
InjectResult inject_csrf(std::string& html, const std::string& token, const std::set<Operation>& sensitive_ops,
                         std::string_view own_host);

enum class ServerValueSource { hidden_field, set_cookie, link_query };

/// A value the application hands to the client and expects back verbatim,
/// in the form the application will later receive it.
struct ServerValue {
    ServerValueSource source;
    std::string name;
    std::string value;
};

std::vector<ServerValue> collect_server_values(const HttpResponse& resp);

/// Marks every watched server value for the session; returns the names marked.
std::vector<std::string> mark(const std::vector<ServerValue>& values, const std::set<std::string>& watched,
                              MarkLedger& ledger, const std::string& session_id);

/// One step of a training session: either values the server handed out or
/// values the client submitted.
struct WatchObservation {
    std::string session_id;
    bool from_server = false;
    std::vector<std::pair<std::string, std::string>> values;
};

/// A name is watched iff it was submitted at least once and every submitted
/// value had appeared under that name in an earlier response of the session.
std::set<std::string> learn_watched(std::span<const WatchObservation> trace,
                                    const std::set<std::string>& excluded = {});

/// Replaces designated Set-Cookie values with sealed ciphertext. Returns the
/// names sealed.
std::vector<std::string> seal_cookies(HttpResponse& resp, const std::set<std::string>& sealed_names,
                                      const Key256& key, RandomSource& rng);

/// Restores sealed cookie values in the request's Cookie headers. Returns the
/// names whose ciphertext failed authentication; those are left untouched.
std::vector<std::string> unseal_cookies(RawRequest& req, const std::set<std::string>& sealed_names,
                                        const Key256& key);

}  // namespace sentrygate
