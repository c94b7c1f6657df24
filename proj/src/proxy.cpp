#include "sentrygate/proxy.hpp"

#include <chrono>
#include <filesystem>
#include <iostream>
#include <thread>

#include "httplib.h"
#include "sentrygate/models.hpp"

namespace sentrygate {

namespace fs = std::filesystem;

namespace {

TimestampMs wall_clock_ms() {
    using namespace std::chrono;
    return duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
}

bool hop_by_hop(std::string_view name) {
    for (std::string_view h : {"connection", "keep-alive", "proxy-connection", "transfer-encoding", "upgrade", "te",
                               "content-length"}) {
        if (iequals(name, h)) return true;
    }
    return false;
}

// httplib exposes connection details as pseudo headers.
bool pseudo_header(std::string_view name) {
    for (std::string_view h : {"REMOTE_ADDR", "REMOTE_PORT", "LOCAL_ADDR", "LOCAL_PORT"}) {
        if (name == h) return true;
    }
    return false;
}

}  // namespace

HttpUpstream::HttpUpstream(std::string host, int port, int timeout_s)
    : host_(std::move(host)), port_(port), timeout_s_(timeout_s) {}

HttpResponse HttpUpstream::forward(const RawRequest& req) {
    httplib::Client client(host_, port_);
    client.set_connection_timeout(timeout_s_);
    client.set_read_timeout(timeout_s_);
    client.set_follow_location(false);

    httplib::Request out;
    out.method = req.method;
    out.path = req.target;
    for (const auto& [name, value] : req.headers) {
        if (!hop_by_hop(name)) out.headers.emplace(name, value);
    }
    out.body = req.body;

    auto result = client.send(out);
    if (!result) throw UpstreamUnreachable("upstream " + host_ + ":" + std::to_string(port_) + ": " +
                                           httplib::to_string(result.error()));
    HttpResponse resp;
    resp.status = result->status;
    for (const auto& [name, value] : result->headers) {
        if (!hop_by_hop(name)) resp.headers.emplace_back(name, value);
    }
    resp.body = result->body;
    return resp;
}

bool serve(const Config& config, std::atomic<bool>& stop) {
    ModelBundle models = config.models_path.empty() ? ModelBundle::defaults(config.settings.preprocessor)
                                                    : ModelBundle::from_json(read_file(config.models_path));
    for (const auto& w : models.warnings) std::cerr << "model warning: " << w << "\n";

    Logger logger(config.log_dir);
    HttpUpstream upstream(config.upstream_host, config.upstream_port);
    SystemRandom rng;
    Runtime runtime(config.settings, std::move(models), upstream, rng, &logger,
                    RuntimeOptions{config.learning, "/login"});

    httplib::Server server;
    auto handler = [&](const httplib::Request& req, httplib::Response& res) {
        RawRequest raw;
        raw.source_ip = req.remote_addr;
        raw.received_at = wall_clock_ms();
        raw.method = req.method;
        raw.target = req.target.empty() ? req.path : req.target;
        raw.version = req.version;
        for (const auto& [name, value] : req.headers) {
            if (!pseudo_header(name)) raw.headers.emplace_back(name, value);
        }
        raw.body = req.body;
        if (!req.body.empty() || find_header(raw.headers, "content-length")) {
            set_header(raw.headers, "Content-Length", std::to_string(raw.body.size()));
        }

        auto result = runtime.handle(std::move(raw));
        res.status = result.response.status;
        std::string content_type = "application/octet-stream";
        for (const auto& [name, value] : result.response.headers) {
            if (iequals(name, "content-type")) {
                content_type = value;
            } else if (!hop_by_hop(name)) {
                res.headers.emplace(name, value);
            }
        }
        res.set_content(result.response.body, content_type);
    };
    server.Get(".*", handler);
    server.Post(".*", handler);
    server.Put(".*", handler);
    server.Patch(".*", handler);
    server.Delete(".*", handler);
    server.Options(".*", handler);

    if (!server.bind_to_port(config.listen_host, config.listen_port)) return false;

    // Housekeeping: expire blocks and idle histories, pick up admin blocks.
    std::thread keeper([&] {
        fs::file_time_type seen{};
        while (!stop.load()) {
            runtime.sweep(wall_clock_ms());
            if (!config.block_list_path.empty()) {
                std::error_code ec;
                auto mtime = fs::last_write_time(config.block_list_path, ec);
                if (!ec && mtime != seen) {
                    seen = mtime;
                    try {
                        for (auto& e : load_block_entries(read_file(config.block_list_path))) {
                            runtime.blocks().upsert(std::move(e));
                        }
                    } catch (const ConfigError& e) {
                        std::cerr << "block list: " << e.what() << "\n";
                    }
                }
            }
            for (int i = 0; i < 20 && !stop.load(); ++i) std::this_thread::sleep_for(std::chrono::milliseconds(100));
        }
        server.stop();
    });
    std::cerr << "sentrygate listening on " << config.listen_host << ":" << config.listen_port << " -> "
              << config.upstream_host << ":" << config.upstream_port << "\n";
    server.listen_after_bind();
    stop.store(true);
    keeper.join();
    logger.flush();
    return true;
}

}  // namespace sentrygate
