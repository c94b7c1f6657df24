#pragma once

#include <array>
#include <compare>
#include <map>
#include <optional>
#include <regex>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "sentrygate/common.hpp"
#include "sentrygate/mark_ledger.hpp"
#include "sentrygate/preprocessor.hpp"

namespace sentrygate {

enum class ParamLocation { query, body, header, cookie };
enum class ParamCategory { text, numeric, enumerated, format_specific, web_address, application };

std::string_view to_string(ParamLocation l);
std::string_view to_string(ParamCategory c);
std::optional<ParamLocation> parse_param_location(std::string_view s);
std::optional<ParamCategory> parse_param_category(std::string_view s);

/// Headers and cookies are scoped globally under this template.
inline constexpr std::string_view kAnyPath = "*";

struct ParamScope {
    std::string path_template;
    ParamLocation location = ParamLocation::query;
    std::string name;

    auto operator<=>(const ParamScope&) const = default;
    std::string describe() const;
};

struct ParamSpec {
    ParamScope scope;
    ParamCategory category = ParamCategory::text;
    bool learned = false;
    std::size_t samples = 0;
};

// ---------------------------------------------------------------------------
// Signatures (text category)

struct SignatureRule {
    std::string id;
    std::string pattern;
    AttackClass attack_class = AttackClass::injection_other;
    Tier severity = Tier::high;
    std::regex compiled;
};

/// Manually curated blacklist. Patterns run over the lowercase canonical form.
class SignatureSet {
  public:
    /// Throws ConfigError on duplicate ids or patterns that do not compile.
    void add(std::string id, std::string pattern, AttackClass cls, Tier severity);
    const SignatureRule* first_match(std::string_view lowered) const;
    const std::vector<SignatureRule>& rules() const { return rules_; }

    /// Non-exhaustive starter pack: SQL tautologies and friends, script tags
    /// and event handlers, path traversal.
    static SignatureSet starter();
    static SignatureSet from_json(const std::string& text);

  private:
    std::vector<SignatureRule> rules_;
};

// ---------------------------------------------------------------------------
// Enumerated category

constexpr std::size_t kMinTrainingSamples = 50;

struct EnumModel {
    std::set<std::string> allowed;
    std::size_t samples_seen = 0;
};

/// nullopt when the scope does not look enumerated. Throws
/// InsufficientSamples below `min_samples`.
std::optional<EnumModel> train_enumerated(std::span<const std::string> samples,
                                          std::size_t min_samples = kMinTrainingSamples);

// ---------------------------------------------------------------------------
// Format-specific category: rank-binned relative character frequencies.

constexpr std::size_t kCharDistBins = 6;
using CharDist = std::array<double, kCharDistBins>;

/// chi-square critical value at 0.05 with 5 degrees of freedom.
constexpr double kChi2Floor = 11.07;

/// Upper rank (1-based, inclusive) of each bin: [1], [2-4], [5-7], [8-12],
/// [13-16], [17-256].
inline constexpr std::array<std::size_t, kCharDistBins> kRankBinUpper = {1, 4, 7, 12, 16, 256};

struct CharDistModel {
    CharDist idealized{};
    double chi2_threshold = kChi2Floor;
    std::size_t samples = 0;
};

/// Relative byte frequencies of `value`, sorted descending and summed per bin.
CharDist binned_char_distribution(std::string_view value);

/// Count-based chi-square of `value` against `idealized` (expected counts are
/// floored at kMinExpected so an empty idealized bin still penalizes mass).
double char_dist_chi2(std::string_view value, const CharDist& idealized);
constexpr double kMinExpected = 1e-6;

CharDistModel train_format(std::span<const std::string> samples,
                           std::size_t min_samples = kMinTrainingSamples);

// ---------------------------------------------------------------------------
// Web-address category

struct UrlWhitelist {
    struct Entry {
        std::optional<std::string> scheme;
        std::string host;
        std::string path_prefix;
    };
    std::vector<Entry> trusted;
    bool allow_relative_same_site = true;

    /// Accepts "https://host/prefix", "host/prefix" or "host".
    static Entry parse_entry(std::string_view text);
};

// ---------------------------------------------------------------------------
// Validation

/// Trained and configured per-scope state.
struct ValidatorModels {
    std::map<ParamScope, ParamSpec> specs;
    std::map<ParamScope, EnumModel> enums;
    std::map<ParamScope, CharDistModel> formats;

    /// Exact scope first, then the same location and name under kAnyPath.
    ParamSpec resolve(const ParamScope& scope) const;
};

struct ValidatorContext {
    const SignatureSet& signatures;
    const ValidatorModels& models;
    const UrlWhitelist& urls;
    const MarkLedger* ledger = nullptr;
    const SeverityTable& severity;
    std::set<std::string> skipped_headers = {"cookie"};
    int decode_cap = kDefaultDecodeCap;
};

constexpr std::string_view kValidatorModule = "data_validator";

std::optional<Alert> validate_text(const ParamValue& v, const SignatureSet& sigs, const std::string& scope,
                                   const ClientIdentity& who);
std::optional<Alert> validate_numeric(const ParamValue& v, const std::string& scope, const ClientIdentity& who,
                                      const SeverityTable& sev);
std::optional<Alert> validate_enumerated(const ParamValue& v, const EnumModel& m, const std::string& scope,
                                         const ClientIdentity& who, const SeverityTable& sev);
std::optional<Alert> validate_format(const ParamValue& v, const CharDistModel& m, const std::string& scope,
                                     const ClientIdentity& who, const SeverityTable& sev);
std::optional<Alert> validate_url(const ParamValue& v, const UrlWhitelist& w, const std::string& scope,
                                  const ClientIdentity& who, const SeverityTable& sev);
/// `value` is what the application received for this parameter.
std::optional<Alert> validate_application(std::string_view value, const std::string& name,
                                          const MarkLedger& ledger, const std::optional<std::string>& session_id,
                                          const std::string& scope, const ClientIdentity& who,
                                          const SeverityTable& sev);

struct ParamCheck {
    ParamScope scope;
    ParamCategory category;
};

/// Validates every parameter of the request. `checked`, when
/// given, receives the scheme applied to each parameter.
std::vector<Alert> validate_request(const CanonicalRequest& req, const ValidatorContext& ctx,
                                    std::vector<ParamCheck>* checked = nullptr);

}  // namespace sentrygate
