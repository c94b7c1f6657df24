// Command-line entry point for the proxy and its offline tools.

#include <chrono>
#include <csignal>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "sentrygate/harness.hpp"
#include "sentrygate/proxy.hpp"
#include "sentrygate/replay.hpp"

using namespace sentrygate;
namespace fs = std::filesystem;

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 1;
constexpr int kTraceError = 2;

std::atomic<bool> g_stop{false};

void on_signal(int) { g_stop.store(true); }

TimestampMs wall_clock_ms() {
    using namespace std::chrono;
    return duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
}

/// Milliseconds since the epoch, or an ISO date "2025-10-09" /
/// "2025-10-09T12:30:00Z" in UTC.
TimestampMs parse_time(const std::string& text) {
    if (!text.empty() && std::all_of(text.begin(), text.end(), ::isdigit)) return std::stoll(text);
    std::tm tm{};
    std::istringstream in(text);
    if (text.size() <= 10) {
        in >> std::get_time(&tm, "%Y-%m-%d");
    } else {
        in >> std::get_time(&tm, "%Y-%m-%dT%H:%M:%S");
    }
    if (in.fail()) throw ConfigError("bad time: " + text);
    return static_cast<TimestampMs>(timegm(&tm)) * 1000;
}

void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot write " + path);
    out << text;
}

ModelBundle load_models(const Config& cfg) {
    if (cfg.models_path.empty()) return ModelBundle::defaults(cfg.settings.preprocessor);
    return ModelBundle::from_json(read_file(cfg.models_path));
}

std::vector<Verdict> read_verdicts(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw TraceParseError("cannot read verdicts " + path);
    std::vector<Verdict> out;
    std::string line;
    while (std::getline(in, line)) {
        if (!trim(line).empty()) out.push_back(Verdict::from_json_line(line));
    }
    return out;
}

void print_summary(const MetricsReport& m) {
    std::cout << "requests=" << m.requests << " benign=" << m.benign << " false_positives=" << m.false_positives
              << "\n";
    for (const auto& [cls, c] : m.classes) {
        std::cout << "  " << cls << ": " << c.detected << "/" << c.expected << "\n";
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"sentrygate: reverse-proxy intrusion prevention for web applications"};
    app.require_subcommand(1);

    std::string config_path, trace_path, out_path, metrics_path, verdicts_path, config_dir, log_dir, file_path;
    std::uint64_t seed = 1;
    std::size_t benign_sessions = GenerateOptions{}.benign_sessions;
    bool no_attacks = false;

    auto* serve_cmd = app.add_subcommand("serve", "Run the reverse proxy");
    serve_cmd->add_option("--config", config_path, "Config file")->required();

    auto* train_cmd = app.add_subcommand("train", "Train models from a benign trace");
    train_cmd->add_option("--trace", trace_path, "Trace file (JSON Lines)")->required();
    train_cmd->add_option("--out", out_path, "Model bundle to write")->required();
    train_cmd->add_option("--config", config_path, "Config file (defaults to the bundled shop settings)");

    auto* replay_cmd = app.add_subcommand("replay", "Replay a trace against the bundled shop");
    replay_cmd->add_option("--trace", trace_path, "Trace file")->required();
    replay_cmd->add_option("--config", config_path, "Config file")->required();
    replay_cmd->add_option("--metrics", metrics_path, "Metrics report to write")->required();
    replay_cmd->add_option("--verdicts", verdicts_path, "Verdict stream to write");
    replay_cmd->add_option("--log-dir", log_dir, "Write defender and controller logs here");

    auto* simulate_cmd = app.add_subcommand("simulate", "Generate a labeled trace");
    simulate_cmd->add_option("--seed", seed, "Generator seed")->required();
    simulate_cmd->add_option("--out", out_path, "Trace file to write")->required();
    simulate_cmd->add_option("--benign-sessions", benign_sessions, "Number of benign browsing sessions");
    simulate_cmd->add_flag("--no-attacks", no_attacks, "Benign traffic only");
    simulate_cmd->add_option("--config-dir", config_dir, "Also write the matching shop config here");

    auto* evaluate_cmd = app.add_subcommand("evaluate", "Score verdicts against trace labels");
    evaluate_cmd->add_option("--verdicts", verdicts_path, "Verdict stream")->required();
    evaluate_cmd->add_option("--trace", trace_path, "Labeled trace")->required();
    evaluate_cmd->add_option("--out", out_path, "Metrics report to write")->required();

    std::string kind, key, reason = "admin";
    std::int64_t ttl_s = 0;
    auto* block_cmd = app.add_subcommand("block", "Add an entry to the block list");
    block_cmd->add_option("--kind", kind, "ip, session, user, path or protected")->required();
    block_cmd->add_option("--key", key, "Address, session id, user name or path")->required();
    block_cmd->add_option("--ttl", ttl_s, "Seconds until expiry; 0 blocks permanently")->required();
    block_cmd->add_option("--reason", reason, "Reason recorded with the entry");
    auto* block_target = block_cmd->add_option_group("target");
    block_target->add_option("--config", config_path, "Config whose block_list file is updated");
    block_target->add_option("--file", file_path, "Block list file to update");
    block_target->require_option(1);

    std::string from, to, cls, ip;
    bool rbac_gaps = false;
    auto* report_cmd = app.add_subcommand("report", "Query the defender log or the RBAC gap report");
    report_cmd->add_option("--from", from, "Start time (ms or ISO date, UTC)");
    report_cmd->add_option("--to", to, "End time, inclusive");
    report_cmd->add_option("--class", cls, "Attack class filter");
    report_cmd->add_option("--ip", ip, "Source address filter");
    report_cmd->add_flag("--rbac-gaps", rbac_gaps, "Summarize operations missing from the RBAC policy");
    report_cmd->add_option("--config", config_path, "Config naming log_dir and gap_report");
    report_cmd->add_option("--log-dir", log_dir, "Defender log directory");
    report_cmd->add_option("--file", file_path, "Gap report file");

    CLI11_PARSE(app, argc, argv);

    try {
        if (serve_cmd->parsed()) {
            auto cfg = load_config(config_path);
            std::signal(SIGINT, on_signal);
            std::signal(SIGTERM, on_signal);
            if (!serve(cfg, g_stop)) {
                std::cerr << "cannot listen on " << cfg.listen_host << ":" << cfg.listen_port << "\n";
                return kConfigError;
            }
            return kOk;
        }

        if (train_cmd->parsed()) {
            RuntimeSettings settings = config_path.empty() ? shop_settings() : load_config(config_path).settings;
            auto trace = read_trace(trace_path);
            ShopStub shop;
            auto bundle = train_all(trace, settings, shop);
            write_file(out_path, bundle.to_json() + "\n");
            for (const auto& w : bundle.warnings) std::cerr << "warning: " << w << "\n";
            std::cout << "trained on " << trace.size() << " requests, wrote " << out_path << "\n";
            return kOk;
        }

        if (replay_cmd->parsed()) {
            auto cfg = load_config(config_path);
            auto models = load_models(cfg);
            auto trace = read_trace(trace_path);
            ShopStub shop;
            DeterministicRandom rng(replay_seed(cfg.settings.secret));
            std::unique_ptr<Logger> logger;
            if (!log_dir.empty()) logger = std::make_unique<Logger>(log_dir);
            Runtime runtime(cfg.settings, std::move(models), shop, rng, logger.get(),
                            RuntimeOptions{cfg.learning, "/login"});
            auto verdicts = replay(trace, runtime);
            if (logger) logger->flush();
            if (!verdicts_path.empty()) {
                std::ofstream out(verdicts_path, std::ios::binary | std::ios::trunc);
                if (!out) throw ConfigError("cannot write " + verdicts_path);
                for (const auto& v : verdicts) out << v.to_json_line() << "\n";
            }
            auto report = evaluate(verdicts, trace);
            write_file(metrics_path, report.to_json() + "\n");
            print_summary(report);
            return kOk;
        }

        if (simulate_cmd->parsed()) {
            GenerateOptions opts;
            opts.seed = seed;
            opts.benign_sessions = benign_sessions;
            opts.attacks = !no_attacks;
            auto trace = generate(opts);
            write_trace(out_path, trace);
            if (!config_dir.empty()) write_shop_config(config_dir);
            std::cout << "wrote " << trace.size() << " requests to " << out_path << "\n";
            return kOk;
        }

        if (evaluate_cmd->parsed()) {
            auto verdicts = read_verdicts(verdicts_path);
            auto trace = read_trace(trace_path);
            auto report = evaluate(verdicts, trace);
            write_file(out_path, report.to_json() + "\n");
            print_summary(report);
            return kOk;
        }

        if (block_cmd->parsed()) {
            std::string path = file_path;
            if (path.empty()) {
                path = load_config(config_path).block_list_path;
                if (path.empty()) throw ConfigError("config has no block_list entry");
            }
            std::map<std::string, BlockKind> aliases = {{"ip", BlockKind::source_ip},
                                                        {"session", BlockKind::source_session},
                                                        {"user", BlockKind::source_user},
                                                        {"path", BlockKind::target_path},
                                                        {"protected", BlockKind::protected_prefix}};
            std::optional<BlockKind> k = aliases.contains(kind) ? aliases[kind] : parse_block_kind(kind);
            if (!k) throw ConfigError("unknown block kind " + kind);
            if (ttl_s < 0) throw ConfigError("ttl must be >= 0");
            std::vector<BlockEntry> entries;
            if (fs::exists(path)) entries = load_block_entries(read_file(path));
            std::erase_if(entries, [&](const BlockEntry& e) { return e.kind == *k && e.key == key; });
            BlockEntry entry{*k, key, std::nullopt, reason};
            if (ttl_s > 0) entry.expires_at = wall_clock_ms() + ttl_s * kSecondMs;
            entries.push_back(entry);
            write_file(path, dump_block_entries(entries) + "\n");
            std::cout << "blocked " << to_string(*k) << " " << key
                      << (ttl_s > 0 ? " for " + std::to_string(ttl_s) + "s" : std::string(" permanently")) << "\n";
            return kOk;
        }

        if (report_cmd->parsed()) {
            std::optional<Config> cfg;
            if (!config_path.empty()) cfg = load_config(config_path);
            if (rbac_gaps) {
                std::string path = file_path.empty() && cfg ? cfg->settings.gap_report_path : file_path;
                if (path.empty()) throw ConfigError("no gap report file given");
                std::cout << summarize_gap_report(path);
                return kOk;
            }
            if (from.empty() || to.empty()) throw ConfigError("report needs --from and --to");
            std::string dir = log_dir.empty() && cfg ? cfg->log_dir : log_dir;
            if (dir.empty()) throw ConfigError("no log directory given");
            LogQuery q{parse_time(from), parse_time(to), std::nullopt, std::nullopt};
            if (!cls.empty()) {
                q.attack_class = parse_attack_class(cls);
                if (!q.attack_class) throw ConfigError("unknown attack class " + cls);
            }
            if (!ip.empty()) q.ip = ip;
            for (const auto& r : query_defender_log(dir, q)) std::cout << r.to_json_line() << "\n";
            return kOk;
        }
    } catch (const TraceParseError& e) {
        std::cerr << "trace error: " << e.what() << "\n";
        return kTraceError;
    } catch (const LabelMismatch& e) {
        std::cerr << "trace error: " << e.what() << "\n";
        return kTraceError;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfigError;
    } catch (const SchemaError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfigError;
    }
    return kOk;
}
