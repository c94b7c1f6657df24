#pragma once

#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sentrygate/common.hpp"
#include "sentrygate/http.hpp"

namespace sentrygate {

constexpr int kDefaultDecodeCap = 3;

/// A parameter value in both its wire form and its normalized form.
///
/// `original` is byte-identical to the wire. `form_value` is what the
/// application itself receives (one form-decoding pass). `canonical` is the
/// decode fixpoint with whitespace collapsed, and `match` is its lowercase
/// copy used by detectors.
struct ParamValue {
    std::string original;
    std::string form_value;
    std::string canonical;
    std::string match;
    int decode_rounds = 0;
    bool double_encoded = false;
};

/// Iterates {percent-decode, '+' to space, HTML-entity decode} until a
/// fixpoint or `decode_cap` rounds, then collapses whitespace runs and trims.
/// Invalid escapes pass through undecoded.
ParamValue canonicalize(std::string_view value, int decode_cap = kDefaultDecodeCap,
                        bool plus_as_space = true);

/// One pass of HTML character-reference decoding (named subset plus numeric).
std::string html_entity_decode(std::string_view s);

/// Replaces every all-digit path segment with "{id}".
std::string path_template(std::string_view path);

/// Lowercase extension of the last path segment, or empty.
std::string path_extension(std::string_view path);

enum class EvasionFlag { double_encoded, dot_segments };
std::string_view to_string(EvasionFlag f);

struct PreprocessorConfig {
    std::string session_cookie_name = "SESSIONID";
    int decode_cap = kDefaultDecodeCap;
    std::set<std::string> static_extensions = default_static_extensions();

    static std::set<std::string> default_static_extensions();
};

struct CanonicalRequest {
    ClientIdentity identity;
    TimestampMs received_at = 0;
    std::string method;
    std::string target;  // as received
    std::string path;
    std::string path_template;
    std::map<std::string, std::vector<std::string>> headers;  // lowercase names
    std::map<std::string, ParamValue> cookies;
    std::map<std::string, std::vector<ParamValue>> query_params;
    std::map<std::string, std::vector<ParamValue>> body_params;
    std::optional<std::string> session_id;
    std::set<EvasionFlag> evasion_flags;

    std::optional<std::string> header(std::string_view lower_name) const;
    /// First value of a parameter from the body, falling back to the query.
    const ParamValue* param(std::string_view name) const;
};

CanonicalRequest canonicalize_request(const RawRequest& raw, const PreprocessorConfig& config);

struct StaticAssetModel {
    std::set<std::string> extension_set;
    std::set<std::string> learned_paths;

    static StaticAssetModel defaults(const PreprocessorConfig& config);
};

/// False when the request targets a page asset and should bypass detection.
bool should_monitor(const CanonicalRequest& req, const StaticAssetModel& model);

struct LabeledRequest {
    RawRequest request;
    bool asset = false;
};

/// Learns asset-only templates and extensions from trusted traffic. An empty
/// trace yields the config defaults.
StaticAssetModel train_request_filter(std::span<const LabeledRequest> trace,
                                      const PreprocessorConfig& config);

}  // namespace sentrygate
