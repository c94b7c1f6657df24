#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "sentrygate/common.hpp"

namespace sentrygate {

using Header = std::pair<std::string, std::string>;
using HeaderList = std::vector<Header>;

/// An inbound request as read off the wire.
struct RawRequest {
    std::string source_ip;
    TimestampMs received_at = 0;
    std::string method;
    std::string target;  // origin-form: path plus optional query
    std::string version = "HTTP/1.1";
    HeaderList headers;
    std::string body;
};

struct HttpResponse {
    int status = 200;
    HeaderList headers;
    std::string body;
};

/// Parses a complete HTTP/1.x request head plus body. Throws MalformedRequest
/// on bad framing: control bytes in the request line, a target that is not
/// origin-form, empty header names, or a body whose length contradicts
/// Content-Length.
RawRequest parse_request(std::string_view bytes, std::string source_ip = {},
                         TimestampMs received_at = 0);

/// Wire form of a request; Content-Length is emitted as given in headers.
std::string serialize_request(const RawRequest& req);

std::string serialize_response(const HttpResponse& resp);
std::string_view reason_phrase(int status);

// Header list helpers. Lookups are case-insensitive.
std::optional<std::string> find_header(const HeaderList& headers, std::string_view name);
std::vector<std::string> find_headers(const HeaderList& headers, std::string_view name);
void set_header(HeaderList& headers, std::string_view name, std::string value);
void remove_header(HeaderList& headers, std::string_view name);

/// One pass of percent-decoding; '+' becomes a space when plus_as_space is
/// set. Invalid escapes are copied through unchanged.
std::string percent_decode(std::string_view s, bool plus_as_space);
std::string percent_encode(std::string_view s);

/// Splits "a=1&b=2" into raw (undecoded) name/value pairs.
std::vector<std::pair<std::string, std::string>> split_form(std::string_view s);

/// Parses a Cookie header value into name/value pairs.
std::vector<std::pair<std::string, std::string>> parse_cookie_header(std::string_view s);

struct SetCookie {
    std::string name;
    std::string value;
    std::string attributes;  // everything after the first ';', verbatim
};
std::optional<SetCookie> parse_set_cookie(std::string_view s);
std::string format_set_cookie(const SetCookie& c);

}  // namespace sentrygate
