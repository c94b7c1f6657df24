#include "sentrygate/http.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>

namespace sentrygate {

namespace {

bool is_token_char(unsigned char c) {
    if (c <= 0x20 || c >= 0x7f) return false;
    static constexpr std::string_view separators = "()<>@,;:\\\"/[]?={}";
    return separators.find(static_cast<char>(c)) == std::string_view::npos;
}

int hex_value(char c) {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
}

}  // namespace

RawRequest parse_request(std::string_view bytes, std::string source_ip, TimestampMs received_at) {
    auto head_end = bytes.find("\r\n\r\n");
    if (head_end == std::string_view::npos) throw MalformedRequest("incomplete request head");

    std::string_view head = bytes.substr(0, head_end);
    std::string_view body = bytes.substr(head_end + 4);

    auto line_end = head.find("\r\n");
    std::string_view request_line = head.substr(0, line_end);
    for (unsigned char c : request_line) {
        if (c < 0x20 || c == 0x7f) throw MalformedRequest("control byte in request line");
    }

    auto parts = split(request_line, ' ');
    if (parts.size() != 3) throw MalformedRequest("request line must have three fields");

    RawRequest req;
    req.source_ip = std::move(source_ip);
    req.received_at = received_at;
    req.method = std::string(parts[0]);
    req.target = std::string(parts[1]);
    req.version = std::string(parts[2]);

    if (req.method.empty() ||
        !std::all_of(req.method.begin(), req.method.end(),
                     [](unsigned char c) { return is_token_char(c); })) {
        throw MalformedRequest("invalid method token");
    }
    if (req.target.empty() || req.target.front() != '/') {
        throw MalformedRequest("target is not origin-form");
    }
    if (req.version != "HTTP/1.1" && req.version != "HTTP/1.0") {
        throw MalformedRequest("unsupported HTTP version");
    }

    if (line_end != std::string_view::npos) {
        std::string_view rest = head.substr(line_end + 2);
        for (auto line : split(rest, '\n')) {
            if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
            if (line.empty()) continue;
            auto colon = line.find(':');
            if (colon == std::string_view::npos || colon == 0) {
                throw MalformedRequest("header without name");
            }
            auto name = line.substr(0, colon);
            if (!std::all_of(name.begin(), name.end(),
                             [](unsigned char c) { return is_token_char(c); })) {
                throw MalformedRequest("invalid header name");
            }
            req.headers.emplace_back(std::string(name), std::string(trim(line.substr(colon + 1))));
        }
    }

    auto lengths = find_headers(req.headers, "Content-Length");
    if (lengths.size() > 1) throw MalformedRequest("duplicate Content-Length");
    if (lengths.size() == 1) {
        std::size_t declared = 0;
        const auto& text = lengths.front();
        auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), declared);
        if (ec != std::errc{} || ptr != text.data() + text.size()) {
            throw MalformedRequest("invalid Content-Length");
        }
        if (declared != body.size()) throw MalformedRequest("body length contradicts Content-Length");
    }
    req.body = std::string(body);
    return req;
}

std::string serialize_request(const RawRequest& req) {
    std::string out;
    out.reserve(128 + req.body.size());
    out += req.method;
    out += ' ';
    out += req.target;
    out += ' ';
    out += req.version;
    out += "\r\n";
    for (const auto& [name, value] : req.headers) {
        out += name;
        out += ": ";
        out += value;
        out += "\r\n";
    }
    out += "\r\n";
    out += req.body;
    return out;
}

std::string_view reason_phrase(int status) {
    switch (status) {
        case 200: return "OK";
        case 302: return "Found";
        case 400: return "Bad Request";
        case 401: return "Unauthorized";
        case 403: return "Forbidden";
        case 404: return "Not Found";
        case 500: return "Internal Server Error";
        case 502: return "Bad Gateway";
        default: return "Unknown";
    }
}

std::string serialize_response(const HttpResponse& resp) {
    std::string out = "HTTP/1.1 " + std::to_string(resp.status) + " " +
                      std::string(reason_phrase(resp.status)) + "\r\n";
    for (const auto& [name, value] : resp.headers) {
        if (iequals(name, "Content-Length")) continue;
        out += name + ": " + value + "\r\n";
    }
    out += "Content-Length: " + std::to_string(resp.body.size()) + "\r\n\r\n";
    out += resp.body;
    return out;
}

std::optional<std::string> find_header(const HeaderList& headers, std::string_view name) {
    for (const auto& [n, v] : headers) {
        if (iequals(n, name)) return v;
    }
    return std::nullopt;
}

std::vector<std::string> find_headers(const HeaderList& headers, std::string_view name) {
    std::vector<std::string> out;
    for (const auto& [n, v] : headers) {
        if (iequals(n, name)) out.push_back(v);
    }
    return out;
}

void set_header(HeaderList& headers, std::string_view name, std::string value) {
    remove_header(headers, name);
    headers.emplace_back(std::string(name), std::move(value));
}

void remove_header(HeaderList& headers, std::string_view name) {
    std::erase_if(headers, [&](const Header& h) { return iequals(h.first, name); });
}

std::string percent_decode(std::string_view s, bool plus_as_space) {
    std::string out;
    out.reserve(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        char c = s[i];
        if (c == '%' && i + 2 < s.size()) {
            int hi = hex_value(s[i + 1]);
            int lo = hex_value(s[i + 2]);
            if (hi >= 0 && lo >= 0) {
                out.push_back(static_cast<char>(hi * 16 + lo));
                i += 2;
                continue;
            }
        }
        if (c == '+' && plus_as_space) {
            out.push_back(' ');
            continue;
        }
        out.push_back(c);
    }
    return out;
}

std::string percent_encode(std::string_view s) {
    static constexpr char kHex[] = "0123456789ABCDEF";
    std::string out;
    for (unsigned char c : s) {
        if (std::isalnum(c) || c == '-' || c == '_' || c == '.' || c == '~') {
            out.push_back(static_cast<char>(c));
        } else {
            out.push_back('%');
            out.push_back(kHex[c >> 4]);
            out.push_back(kHex[c & 0xf]);
        }
    }
    return out;
}

std::vector<std::pair<std::string, std::string>> split_form(std::string_view s) {
    std::vector<std::pair<std::string, std::string>> out;
    if (s.empty()) return out;
    for (auto piece : split(s, '&')) {
        if (piece.empty()) continue;
        auto eq = piece.find('=');
        if (eq == std::string_view::npos) {
            out.emplace_back(std::string(piece), std::string());
        } else {
            out.emplace_back(std::string(piece.substr(0, eq)), std::string(piece.substr(eq + 1)));
        }
    }
    return out;
}

std::vector<std::pair<std::string, std::string>> parse_cookie_header(std::string_view s) {
    std::vector<std::pair<std::string, std::string>> out;
    for (auto piece : split(s, ';')) {
        piece = trim(piece);
        if (piece.empty()) continue;
        auto eq = piece.find('=');
        if (eq == std::string_view::npos) continue;
        out.emplace_back(std::string(trim(piece.substr(0, eq))), std::string(trim(piece.substr(eq + 1))));
    }
    return out;
}

std::optional<SetCookie> parse_set_cookie(std::string_view s) {
    auto semi = s.find(';');
    auto pair = trim(s.substr(0, semi));
    auto eq = pair.find('=');
    if (eq == std::string_view::npos || eq == 0) return std::nullopt;
    SetCookie c;
    c.name = std::string(trim(pair.substr(0, eq)));
    c.value = std::string(trim(pair.substr(eq + 1)));
    if (semi != std::string_view::npos) c.attributes = std::string(s.substr(semi + 1));
    return c;
}

std::string format_set_cookie(const SetCookie& c) {
    std::string out = c.name + "=" + c.value;
    if (!c.attributes.empty()) out += ";" + c.attributes;
    return out;
}

}  // namespace sentrygate
