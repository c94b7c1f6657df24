#include "sentrygate/harness.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>

#include "json.hpp"

namespace sentrygate {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Shop stub

namespace {

std::map<std::string, std::string> decode_pairs(std::string_view s) {
    std::map<std::string, std::string> out;
    for (const auto& [k, v] : split_form(s)) out.emplace(percent_decode(k, true), percent_decode(v, true));
    return out;
}

std::string escape_html(std::string_view s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '&': out += "&amp;"; break;
            case '"': out += "&quot;"; break;
            case '\'': out += "&#39;"; break;
            default: out += c;
        }
    }
    return out;
}

HttpResponse html(int status, std::string_view title, std::string_view content) {
    HttpResponse r;
    r.status = status;
    r.headers = {{"Content-Type", "text/html; charset=utf-8"},
                 {"Server", "Apache/2.4.41 (Ubuntu)"},
                 {"X-Powered-By", "PHP/7.4.3"}};
    r.body = "<!DOCTYPE html><html><head><title>" + std::string(title) +
             "</title><link rel=\"stylesheet\" href=\"/static/app.css\"></head><body>"
             "<nav><a href=\"/\">Home</a> <a href=\"/products\">Products</a> <a href=\"/account\">Account</a>"
             "<form method=\"post\" action=\"/logout\"><button type=\"submit\">Log out</button></form></nav>"
             "<main>" +
             std::string(content) + "</main></body></html>";
    return r;
}

HttpResponse asset(std::string_view type, std::string body) {
    HttpResponse r;
    r.headers = {{"Content-Type", std::string(type)}, {"Cache-Control", "max-age=3600"}};
    r.body = std::move(body);
    return r;
}

HttpResponse redirect(int status, const std::string& location) {
    auto r = html(status, "Moved", "<p>Moved to <a href=\"" + escape_html(location) + "\">here</a></p>");
    r.headers.emplace_back("Location", location);
    return r;
}

std::optional<int> numeric_segment(std::string_view s) {
    if (s.empty() || s.size() > 6 || !std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; })) {
        return std::nullopt;
    }
    return std::stoi(std::string(s));
}

const ShopStub::Product* find_product(int id) {
    for (const auto& p : ShopStub::catalog()) {
        if (p.id == id) return &p;
    }
    return nullptr;
}

}  // namespace

const std::vector<ShopStub::Product>& ShopStub::catalog() {
    static const std::vector<Product> products = {
        {1, "Desk lamp", "24.99"},    {2, "Oak desk", "189.00"},    {3, "Office chair", "129.50"},
        {4, "Coffee mug", "9.99"},    {5, "Kettle", "39.90"},       {6, "Wool rug", "74.00"},
        {7, "Bookshelf", "99.00"},    {8, "Floor lamp", "54.25"},   {9, "Blue cushion", "14.99"},
        {10, "Wall clock", "29.00"},  {11, "Tea set", "44.50"},     {12, "Plant pot", "12.75"},
    };
    return products;
}

const std::map<std::string, std::pair<std::string, std::string>>& ShopStub::accounts() {
    static const std::map<std::string, std::pair<std::string, std::string>> users = {
        {"alice", {"pw-alice", "member"}},   {"bob", {"pw-bob", "member"}},
        {"carol", {"pw-carol", "member"}},   {"erin", {"pw-erin", "member"}},
        {"frank", {"pw-frank", "member"}},   {"grace", {"pw-grace", "member"}},
        {"heidi", {"pw-heidi", "member"}},   {"olivia", {"pw-olivia", "admin"}},
        {"dana", {"pw-dana", "member"}},     {"mallory", {"pw-mallory", "member"}},
        {"trent", {"pw-trent", "member"}},   {"victor", {"pw-victor", "member"}},
        {"peggy", {"pw-peggy", "member"}},
    };
    return users;
}

HttpResponse ShopStub::forward(const RawRequest& req) {
    std::string_view target = req.target;
    auto qpos = target.find('?');
    std::string path(target.substr(0, qpos));
    auto query = qpos == std::string_view::npos ? std::map<std::string, std::string>{}
                                                : decode_pairs(target.substr(qpos + 1));
    auto form = decode_pairs(req.body);
    auto segments = split(std::string_view(path).substr(1), '/');
    const bool get = req.method == "GET" || req.method == "HEAD";
    const bool post = req.method == "POST";

    bool has_prefs = false;
    for (const auto& c : find_headers(req.headers, "cookie")) {
        for (const auto& [n, v] : parse_cookie_header(c)) has_prefs = has_prefs || n == "prefs";
    }

    HttpResponse r;
    if (get && path == "/") {
        r = html(200, "Home",
                 "<h1>Welcome</h1><img src=\"/static/logo.png\">"
                 "<form method=\"get\" action=\"/search\"><input name=\"q\"><button>Search</button></form>"
                 "<p><a href=\"/products\">Browse products</a> <a href=\"/login\">Sign in</a></p>"
                 "<p><a href=\"/go?target=http%3A%2F%2Fwww.partnersite.com%2Fdeal\">Partner deal</a></p>");
    } else if (get && path == "/products") {
        std::string list = "<form method=\"get\" action=\"/products\"><select name=\"sort\">"
                           "<option>price</option><option>name</option><option>rating</option>"
                           "<option>newest</option></select><input name=\"page\" value=\"1\">"
                           "<button>Go</button></form><ul>";
        for (const auto& p : catalog()) {
            list += "<li><img src=\"/img/" + std::to_string(p.id) + "\"><a href=\"/product/" + std::to_string(p.id) +
                    "\">" + p.name + "</a> $" + p.price + "</li>";
        }
        r = html(200, "Products", list + "</ul>");
    } else if (segments.size() >= 2 && segments[0] == "product" && numeric_segment(segments[1])) {
        const auto* p = find_product(*numeric_segment(segments[1]));
        if (!p) {
            r = html(404, "Not found", "<p>No such product</p>");
        } else if (get && segments.size() == 2) {
            auto id = std::to_string(p->id);
            r = html(200, p->name,
                     "<h1>" + p->name + "</h1><img src=\"/img/" + id + "\"><p>Price: $" + p->price + "</p>" +
                         "<form method=\"post\" action=\"/cart/add\"><input type=\"hidden\" name=\"item\" value=\"" +
                         id + "\"><input type=\"hidden\" name=\"Price\" value=\"" + p->price +
                         "\"><input type=\"number\" name=\"qty\" value=\"1\"><button>Add to cart</button></form>"
                         "<form method=\"post\" action=\"/product/" +
                         id + "/review\"><textarea name=\"comment\"></textarea><button>Post review</button></form>");
        } else if (post && segments.size() == 3 && segments[2] == "review") {
            r = html(200, "Thanks", "<p>Thanks for the review: " + escape_html(form["comment"]) + "</p>");
        } else {
            r = html(405, "Not allowed", "<p>Method not allowed</p>");
        }
    } else if (get && path == "/search") {
        const auto& q = query["q"];
        if (q.find('\'') != std::string::npos) {
            r = html(500, "Error",
                     "<p>Microsoft OLE DB Provider for ODBC Drivers error '80040e14' near '" + escape_html(q) +
                         "'</p>");
        } else {
            std::string hits;
            for (const auto& p : catalog()) {
                if (!q.empty() && to_lower(p.name).find(to_lower(q)) != std::string::npos) {
                    hits += "<li><a href=\"/product/" + std::to_string(p.id) + "\">" + p.name + "</a></li>";
                }
            }
            r = html(200, "Search", "<p>Results for " + escape_html(q) + "</p><ul>" + hits + "</ul>");
        }
    } else if (path == "/login") {
        const auto login_form = std::string(
            "<form method=\"post\" action=\"/login\"><input name=\"username\">"
            "<input type=\"password\" name=\"password\"><button>Sign in</button></form>");
        if (get) {
            r = html(200, "Sign in", login_form);
        } else {
            auto it = accounts().find(form["username"]);
            if (it != accounts().end() && it->second.first == form["password"]) {
                r = redirect(303, "/account");
                r.headers.emplace_back(std::string(kUserSignalHeader), it->first);
                r.headers.emplace_back(std::string(kRoleSignalHeader), it->second.second);
            } else {
                r = html(401, "Sign in", "<p>Invalid credentials</p>" + login_form);
            }
        }
    } else if (post && path == "/logout") {
        r = redirect(303, "/");
        r.headers.emplace_back(std::string(kLogoutSignalHeader), "1");
    } else if (post && path == "/cart/add") {
        auto id = numeric_segment(form["item"]);
        const auto* p = id ? find_product(*id) : nullptr;
        r = p ? html(200, "Cart", "<p>Added " + p->name + " at $" + escape_html(form["Price"]) +
                                      "</p><a href=\"/cart\">View cart</a>")
              : html(400, "Cart", "<p>Unknown item</p>");
    } else if (get && path == "/cart") {
        r = html(200, "Cart",
                 "<p>Your cart</p><form method=\"post\" action=\"/checkout\"><button>Checkout</button></form>");
    } else if (post && path == "/checkout") {
        r = html(200, "Order placed", "<p>Thank you for your order.</p>");
    } else if (get && path == "/account") {
        r = html(200, "Account", "<p>Your account</p><a href=\"/orders\">Orders</a>");
    } else if (get && path == "/orders") {
        r = html(200, "Orders", "<p>Orders since " + escape_html(query["since"]) + "</p>");
    } else if (get && path == "/admin/users") {
        std::string rows;
        for (const auto& [name, cred] : accounts()) rows += "<tr><td>" + name + "</td><td>" + cred.second + "</td></tr>";
        r = html(200, "Users", "<table>" + rows + "</table>");
    } else if (get && path == "/reports") {
        r = html(200, "Reports", "<p>Quarterly sales report</p>");
    } else if (get && path == "/go") {
        auto dest = query["target"];
        r = redirect(302, dest.empty() ? "/" : dest);
    } else if (get && path == "/static/app.css") {
        return asset("text/css", "body{font-family:sans-serif}nav{margin:1em}");
    } else if (get && path == "/static/logo.png") {
        return asset("image/png", std::string("\x89PNG\r\n\x1a\n", 8) + std::string(24, '\0'));
    } else if (get && segments.size() == 2 && segments[0] == "img" && numeric_segment(segments[1])) {
        return asset("image/jpeg", std::string("\xff\xd8\xff\xe0", 4) + std::string(32, 'j'));
    } else {
        r = html(404, "Not found", "<p>Not found</p>");
    }
    if (!has_prefs) r.headers.emplace_back("Set-Cookie", "prefs=theme-light; Path=/");
    return r;
}

// ---------------------------------------------------------------------------
// Trace generation

namespace {

constexpr TimestampMs kTraceStart = 1760000000000;  // 2025-10-09

const std::vector<std::string> kBrowsers = {
    "Mozilla/5.0 (Windows NT 10.0; Win64; x64) AppleWebKit/537.36 (KHTML, like Gecko) Chrome/126.0 Safari/537.36",
    "Mozilla/5.0 (Macintosh; Intel Mac OS X 14_5) AppleWebKit/605.1.15 (KHTML, like Gecko) Version/17.5 Safari/605.1.15",
    "Mozilla/5.0 (X11; Linux x86_64; rv:127.0) Gecko/20100101 Firefox/127.0",
    "Mozilla/5.0 (iPhone; CPU iPhone OS 17_5 like Mac OS X) AppleWebKit/605.1.15 (KHTML, like Gecko) Mobile/15E148",
};
const std::string kAttackerBrowser = "Mozilla/5.0 (Windows NT 10.0; Win64; x64; rv:115.0) Gecko/20100101 Firefox/115.0";
const std::string kCrawlerAgent = "Mozilla/5.0 (compatible; Googlebot/2.1; +http://www.google.com/bot.html)";
const std::string kCrawlerIp = "66.249.66.10";

const std::vector<std::string> kBenignUsers = {"alice", "bob", "carol", "erin", "frank", "grace", "heidi", "olivia"};
const std::vector<std::string> kSorts = {"price", "name", "rating", "newest"};
const std::vector<std::string> kSearches = {"lamp", "desk", "chair", "mug", "kettle", "blue+cushion", "wool+rug",
                                            "tea", "clock", "oak+desk"};
const std::vector<std::string> kComments = {"Great+value", "Works+as+described", "Arrived+quickly+and+well+packed",
                                            "Nice+colour", "Would+buy+again", "Solid+build+quality"};

class Rng {
  public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}
    std::uint64_t below(std::uint64_t n) { return engine_() % n; }
    TimestampMs between(TimestampMs lo, TimestampMs hi) {
        return lo + static_cast<TimestampMs>(below(static_cast<std::uint64_t>(hi - lo + 1)));
    }
    template <typename T>
    const T& pick(const std::vector<T>& v) {
        return v[below(v.size())];
    }

  private:
    std::mt19937_64 engine_;
};

/// One browser (or tool) working through a script.
class Actor {
  public:
    Actor(Rng& rng, std::vector<TraceRecord>& out, std::string ip, std::string ua, std::string client,
          TimestampMs start, std::string scenario = {})
        : rng_(rng), out_(out), ip_(std::move(ip)), ua_(std::move(ua)), client_(std::move(client)), t_(start),
          scenario_(std::move(scenario)) {}

    void think(TimestampMs lo, TimestampMs hi) { t_ += rng_.between(lo, hi); }
    void advance(TimestampMs ms) { t_ += ms; }
    TimestampMs now() const { return t_; }
    void set_identity(std::string ip, std::string ua) {
        ip_ = std::move(ip);
        ua_ = std::move(ua);
    }

    TraceRecord& get(const std::string& target, const std::string& expect = "benign") {
        return emit("GET", target, "", expect);
    }
    TraceRecord& post(const std::string& target, const std::string& body, const std::string& expect = "benign") {
        return emit("POST", target, body, expect);
    }
    void assets(std::initializer_list<std::string> paths) {
        TimestampMs at = t_;
        for (const auto& p : paths) {
            at += 40;
            TraceRecord r = base("GET", p);
            r.ts = at;
            r.asset = true;
            r.headers.emplace_back("Accept", "*/*");
            out_.push_back(std::move(r));
        }
    }

  private:
    TraceRecord base(const std::string& method, const std::string& target) {
        TraceRecord r;
        r.ts = t_;
        r.ip = ip_;
        r.method = method;
        r.target = target;
        r.headers = {{"User-Agent", ua_}};
        r.client = client_;
        r.scenario = scenario_;
        return r;
    }
    TraceRecord& emit(const std::string& method, const std::string& target, const std::string& body,
                      const std::string& expect) {
        TraceRecord r = base(method, target);
        r.headers.emplace_back("Accept", "text/html,application/xhtml+xml");
        r.headers.emplace_back("Accept-Language", "en-US,en;q=0.9");
        if (method == "POST") r.headers.emplace_back("Content-Type", "application/x-www-form-urlencoded");
        r.body = body;
        r.expect = expect;
        out_.push_back(std::move(r));
        return out_.back();
    }

    Rng& rng_;
    std::vector<TraceRecord>& out_;
    std::string ip_;
    std::string ua_;
    std::string client_;
    TimestampMs t_;
    std::string scenario_;
};

std::string login_body(const std::string& user, const std::string& password) {
    return "username=" + user + "&password=" + password + "&__ips_token={{csrf}}";
}

std::string random_date(Rng& rng) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "2025-%02d-%02d", static_cast<int>(1 + rng.below(9)),
                  static_cast<int>(1 + rng.below(28)));
    return buf;
}

void benign_session(Rng& rng, std::vector<TraceRecord>& out, std::size_t index, TimestampMs start) {
    const std::string ip = "10.1." + std::to_string(index / 200) + "." + std::to_string(10 + index % 200);
    Actor a(rng, out, ip, rng.pick(kBrowsers), "benign-" + std::to_string(index), start);
    auto think = [&] { a.think(8000, 15000); };
    int viewed = 0;
    auto view_product = [&] {
        viewed = static_cast<int>(1 + rng.below(ShopStub::catalog().size()));
        a.get("/product/" + std::to_string(viewed));
        a.assets({"/static/app.css", "/img/" + std::to_string(viewed)});
    };
    auto browse = [&] {
        switch (rng.below(3)) {
            case 0:
                a.get("/products?sort=" + rng.pick(kSorts) + "&page=" + std::to_string(1 + rng.below(5)));
                a.assets({"/static/app.css", "/img/1", "/img/2", "/img/3"});
                break;
            case 1: view_product(); break;
            default:
                a.get("/search?q=" + rng.pick(kSearches));
                a.assets({"/static/app.css"});
        }
    };

    a.get("/");
    a.assets({"/static/app.css", "/static/logo.png"});
    for (std::uint64_t i = 0, n = 2 + rng.below(3); i < n; ++i) {
        think();
        browse();
    }
    if (rng.below(6) == 0) {
        think();
        a.get("/go?target=http%3A%2F%2Fwww.partnersite.com%2Fdeal");
    }
    if (rng.below(4) == 0) return;  // anonymous visitor

    const auto& user = rng.pick(kBenignUsers);
    const auto& account = ShopStub::accounts().at(user);
    think();
    a.get("/login");
    think();
    a.post("/login", login_body(user, account.first));
    a.advance(300);
    a.get("/account");
    for (std::uint64_t i = 0, n = 1 + rng.below(2); i < n; ++i) {
        think();
        a.get("/orders?since=" + random_date(rng));
    }
    for (std::uint64_t i = 0, n = 2 + rng.below(3); i < n; ++i) {
        think();
        switch (rng.below(4)) {
            case 0:
                view_product();
                think();
                a.post("/cart/add", "item=" + std::to_string(viewed) + "&Price=" +
                                        ShopStub::catalog()[static_cast<std::size_t>(viewed - 1)].price +
                                        "&qty=" + std::to_string(1 + rng.below(3)) + "&__ips_token={{csrf}}");
                think();
                a.get("/cart");
                think();
                a.post("/checkout", "__ips_token={{csrf}}&__ips_otp={{otp}}");
                break;
            case 1:
                view_product();
                think();
                a.post("/product/" + std::to_string(viewed) + "/review",
                       "comment=" + rng.pick(kComments) + "&__ips_token={{csrf}}");
                break;
            case 2: browse(); break;
            default: a.get("/account");
        }
    }
    if (account.second == "admin") {
        think();
        a.get("/admin/users");
    }
    if (rng.below(2) == 0) {
        think();
        a.post("/logout", "__ips_token={{csrf}}");
    }
}

void crawler(Rng& rng, std::vector<TraceRecord>& out, std::size_t requests, TimestampMs start) {
    Actor a(rng, out, kCrawlerIp, kCrawlerAgent, "", start);
    for (std::size_t i = 0; i < requests; ++i) {
        switch (i % 3) {
            case 0: a.get("/"); break;
            case 1: a.get("/products?sort=name&page=" + std::to_string(1 + i % 5)); break;
            default: a.get("/product/" + std::to_string(1 + i % ShopStub::catalog().size()));
        }
        a.advance(1000);
    }
}

void member_login(Actor& a, const std::string& user) {
    a.get("/");
    a.think(6000, 10000);
    a.get("/login");
    a.think(6000, 10000);
    a.post("/login", login_body(user, ShopStub::accounts().at(user).first));
    a.advance(300);
    a.get("/account");
    a.think(6000, 10000);
}

/// Emits one attack scenario. Setup requests are labeled benign.
void attack(Rng& rng, std::vector<TraceRecord>& out, const ScenarioInfo& s, std::size_t index, TimestampMs start) {
    const std::string ip = "203.0.113." + std::to_string(10 + index);
    Actor a(rng, out, ip, kAttackerBrowser, "attacker-" + s.name, start, s.name);
    const auto& cls = s.expected;
    auto warm_up = [&] {
        a.get("/");
        a.think(6000, 10000);
    };

    if (s.name == "sqli_tautology") {
        warm_up();
        a.get("/search?q=%27+OR+%271%27%3D%271", cls);
    } else if (s.name == "xss_reflected") {
        warm_up();
        a.get("/search?q=%3Cscript%3Ealert(document.cookie)%3C%2Fscript%3E", cls);
    } else if (s.name == "xss_double_encoded") {
        warm_up();
        a.get("/search?q=%253Cscript%253Ealert(document.cookie)%253C%252Fscript%253E", cls);
    } else if (s.name == "numeric_type_violation") {
        warm_up();
        a.get("/products?sort=price&page=2x", cls);
    } else if (s.name == "enum_violation") {
        warm_up();
        a.get("/products?sort=owner&page=1", cls);
    } else if (s.name == "format_violation") {
        warm_up();
        a.get("/orders?since=zzzzzzzzzzzzzzzzzzzzzzzzzzzzzzzz", cls);
    } else if (s.name == "open_redirect") {
        warm_up();
        a.get("/go?target=http%3A%2F%2Fevil.example.net%2Flogin", cls);
    } else if (s.name == "price_tampering") {
        member_login(a, "mallory");
        a.get("/product/4");
        a.think(6000, 10000);
        a.post("/cart/add", "item=4&Price=0.01&qty=1&__ips_token={{csrf}}", cls);
    } else if (s.name == "cookie_tampering") {
        warm_up();
        auto& r = a.get("/products?sort=name&page=1", cls);
        r.headers.emplace_back("Cookie", "prefs=theme-dark");
    } else if (s.name == "session_hijack") {
        member_login(a, "dana");
        a.get("/product/7");
        a.think(30000, 60000);
        a.set_identity("198.18.0.77", "curl/8.5.0");
        a.get("/account", cls);
    } else if (s.name == "csrf_token_omission") {
        member_login(a, "trent");
        a.get("/product/2");
        a.think(6000, 10000);
        a.post("/cart/add", "item=2&Price=" + ShopStub::catalog()[1].price + "&qty=1", cls);
    } else if (s.name == "brute_force_login") {
        a.get("/login");
        for (int i = 0; i < 7; ++i) {
            a.advance(20000);
            a.post("/login", login_body("alice", "guess" + std::to_string(1000 + rng.below(9000))), cls);
        }
    } else if (s.name == "bot_flood") {
        for (int i = 0; i < 40; ++i) {
            a.get("/product/" + std::to_string(1 + i % 12), cls);
            a.advance(500);
        }
    } else if (s.name == "forced_browsing_admin") {
        member_login(a, "victor");
        a.get("/admin/users", cls);
    } else if (s.name == "unlisted_route_probe") {
        member_login(a, "peggy");
        a.get("/reports", cls);
    }
}

}  // namespace

const std::vector<ScenarioInfo>& scenario_catalog() {
    static const std::vector<ScenarioInfo> catalog = {
        {"sqli_tautology", "sqli"},
        {"xss_reflected", "xss"},
        {"xss_double_encoded", "xss"},
        {"numeric_type_violation", "type_violation"},
        {"enum_violation", "enum_violation"},
        {"format_violation", "format_violation"},
        {"open_redirect", "open_redirect"},
        {"price_tampering", "tampering"},
        {"cookie_tampering", "tampering"},
        {"session_hijack", "session_hijack"},
        {"csrf_token_omission", "csrf"},
        {"brute_force_login", "brute_force"},
        {"bot_flood", "bot"},
        {"forced_browsing_admin", "unauthorized_access"},
        {"unlisted_route_probe", "unauthorized_access"},
    };
    return catalog;
}

bool is_stateful_class(AttackClass c) {
    return c == AttackClass::bot || c == AttackClass::brute_force || c == AttackClass::session_hijack;
}

std::vector<TraceRecord> generate(const GenerateOptions& options) {
    Rng rng(options.seed);
    std::vector<TraceRecord> benign;
    for (std::size_t i = 0; i < options.benign_sessions; ++i) {
        TimestampMs start = kTraceStart + static_cast<TimestampMs>(i) * 45 * kSecondMs + rng.between(0, 20000);
        benign_session(rng, benign, i, start);
    }
    if (options.crawler_requests > 0) crawler(rng, benign, options.crawler_requests, kTraceStart + 5 * kMinuteMs);
    std::stable_sort(benign.begin(), benign.end(), [](const auto& x, const auto& y) { return x.ts < y.ts; });
    if (!options.attacks) return benign;

    TimestampMs t = (benign.empty() ? kTraceStart : benign.back().ts) + 5 * kMinuteMs;
    const auto& catalog = scenario_catalog();
    for (std::size_t i = 0; i < catalog.size(); ++i) {
        attack(rng, benign, catalog[i], i, t);
        t = benign.back().ts + 3 * kMinuteMs;
    }
    return benign;
}

// ---------------------------------------------------------------------------
// Shop configuration

namespace {

constexpr std::string_view kShopConfig = R"json({
  "listen": "127.0.0.1:8080",
  "upstream": "127.0.0.1:9000",
  "own_host": "shop.example",
  "session_cookie_name": "SESSIONID",
  "limits": {"idle_timeout_s": 1800, "login_window_s": 600, "login_threshold": 5,
             "decode_cap": 3, "min_role_support": 5},
  "protected_paths": ["/.git", "/backup"],
  "parameters": [
    {"path": "/search", "location": "query", "name": "q", "category": "text"},
    {"path": "/product/{id}/review", "location": "body", "name": "comment", "category": "text"},
    {"path": "/login", "location": "body", "name": "username", "category": "text"},
    {"path": "/login", "location": "body", "name": "password", "category": "text"},
    {"path": "/orders", "location": "query", "name": "since", "category": "format_specific"},
    {"path": "/go", "location": "query", "name": "target", "category": "web_address"}
  ],
  "enumerated_headers": [],
  "url_whitelist": {"trusted": ["http://www.partnersite.com", "https://www.partnersite.com"],
                    "allow_relative": true},
  "sealed_cookies": ["prefs"]
})json";

constexpr std::string_view kShopPolicy = R"json({
  "roles": ["visitor", "member", "admin"],
  "grants": {
    "visitor": ["GET /", "GET /products", "GET /product/{id}", "GET /search", "GET /login", "POST /login",
                "GET /go"],
    "member": ["GET /", "GET /products", "GET /product/{id}", "GET /search", "GET /login", "POST /login",
               "GET /go", "POST /logout", "GET /account", "GET /orders", "POST /cart/add", "GET /cart",
               "POST /checkout", "POST /product/{id}/review"],
    "admin": ["GET /", "GET /products", "GET /product/{id}", "GET /search", "GET /login", "POST /login",
              "GET /go", "POST /logout", "GET /account", "GET /orders", "POST /cart/add", "GET /cart",
              "POST /checkout", "POST /product/{id}/review", "GET /admin/users"]
  },
  "sensitive": ["POST /checkout"]
})json";

constexpr std::string_view kGoodBots = "# search engine crawlers\n66.249.66.\n";
constexpr std::string_view kBadBots = "# known abusive sources\n198.51.100.66\n";
constexpr std::string_view kBadAgents = "sqlmap\nnikto\nnmap\nmasscan\nzgrab\n";

std::vector<std::string> lines(std::string_view text) { return read_list_lines(std::string(text)); }

void write_text(const fs::path& p, std::string_view text) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot write " + p.string());
    out << text;
}

}  // namespace

RuntimeSettings shop_settings() {
    auto settings = parse_config(std::string(kShopConfig), ".").settings;
    settings.policy = RbacPolicy::from_json(std::string(kShopPolicy));
    auto good = lines(kGoodBots);
    auto bad = lines(kBadBots);
    auto agents = lines(kBadAgents);
    settings.bots = BotLists::from_lines(good, bad, agents);
    return settings;
}

void write_shop_config(const std::string& dir, const std::string& models_path) {
    fs::create_directories(dir);
    auto doc = json::parse(kShopConfig);
    doc["policy"] = "policy.json";
    doc["bot_lists"] = {{"good_ips", "good_bots.txt"}, {"bad_ips", "bad_bots.txt"}, {"bad_agents", "bad_agents.txt"}};
    doc["log_dir"] = "logs";
    doc["gap_report"] = "logs/rbac-gaps.jsonl";
    if (!models_path.empty()) doc["models"] = models_path;
    write_text(fs::path(dir) / "sentrygate.json", doc.dump(2) + "\n");
    write_text(fs::path(dir) / "policy.json", kShopPolicy);
    write_text(fs::path(dir) / "good_bots.txt", kGoodBots);
    write_text(fs::path(dir) / "bad_bots.txt", kBadBots);
    write_text(fs::path(dir) / "bad_agents.txt", kBadAgents);
}

// ---------------------------------------------------------------------------
// Evaluation

std::string MetricsReport::to_json() const {
    json classes_json = json::object();
    for (const auto& [name, m] : classes) {
        classes_json[name] = {{"expected", m.expected}, {"detected", m.detected}, {"rate", m.rate()}};
    }
    json scenarios_json = json::array();
    for (const auto& s : scenarios) {
        scenarios_json.push_back({{"name", s.name}, {"expected", s.expected}, {"detected", s.detected}});
    }
    json doc{{"requests", requests},
             {"benign", benign},
             {"false_positives", false_positives},
             {"false_positive_rate", fp_rate()},
             {"benign_alerts", benign_alerts},
             {"classes", classes_json},
             {"scenarios", scenarios_json},
             {"actions", actions},
             {"confusion", confusion}};
    return doc.dump(2);
}

MetricsReport evaluate(std::span<const Verdict> verdicts, std::span<const TraceRecord> trace) {
    if (verdicts.size() != trace.size()) {
        throw LabelMismatch("trace has " + std::to_string(trace.size()) + " records but there are " +
                            std::to_string(verdicts.size()) + " verdicts");
    }
    MetricsReport report;
    report.requests = trace.size();

    // Stateful classes are judged over the whole scenario; a record without a
    // scenario name stands alone.
    auto group_of = [&](std::size_t i) {
        return trace[i].scenario.empty() ? "#" + std::to_string(i) : trace[i].scenario;
    };
    std::map<std::string, std::set<std::string>> group_alerts;
    for (std::size_t i = 0; i < trace.size(); ++i) {
        if (verdicts[i].alert) group_alerts[group_of(i)].insert(std::string(to_string(verdicts[i].alert->attack_class)));
    }

    std::map<std::string, std::size_t> scenario_index;
    std::set<std::string> stateful_counted;
    for (std::size_t i = 0; i < trace.size(); ++i) {
        const auto& rec = trace[i];
        const auto& v = verdicts[i];
        const std::string reported = v.alert ? std::string(to_string(v.alert->attack_class)) : "none";
        report.confusion[rec.expect][reported]++;

        if (rec.expect == "benign") {
            ++report.benign;
            if (v.alert) ++report.benign_alerts;
            if (v.action && v.action->kind != ActionKind::challenge_2f && rejects(v.action->kind)) {
                ++report.false_positives;
            }
            continue;
        }

        auto cls = parse_attack_class(rec.expect);
        const bool stateful = cls && is_stateful_class(*cls);
        bool detected;
        if (stateful) {
            const auto group = group_of(i);
            detected = group_alerts[group].contains(rec.expect);
            if (stateful_counted.insert(group + "|" + rec.expect).second) {
                auto& m = report.classes[rec.expect];
                ++m.expected;
                if (detected) ++m.detected;
            }
        } else {
            detected = reported == rec.expect;
            auto& m = report.classes[rec.expect];
            ++m.expected;
            if (detected) ++m.detected;
        }
        if (v.alert && v.action) report.actions[rec.expect][v.action->describe()]++;

        if (!rec.scenario.empty()) {
            auto [it, fresh] = scenario_index.emplace(rec.scenario, report.scenarios.size());
            if (fresh) report.scenarios.push_back({rec.scenario, rec.expect, detected});
            auto& s = report.scenarios[it->second];
            s.detected = stateful ? detected : (s.detected || detected);
        }
    }
    return report;
}

}  // namespace sentrygate
