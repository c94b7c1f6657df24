#include "sentrygate/connection_verifier.hpp"

#include <mutex>

#include "json.hpp"

namespace sentrygate {

using nlohmann::json;

std::string_view to_string(BlockKind k) {
    switch (k) {
        case BlockKind::source_ip: return "source_ip";
        case BlockKind::source_session: return "source_session";
        case BlockKind::source_user: return "source_user";
        case BlockKind::target_path: return "target_path";
        case BlockKind::protected_prefix: return "protected_prefix";
    }
    return "unknown";
}

std::optional<BlockKind> parse_block_kind(std::string_view s) {
    for (auto k : {BlockKind::source_ip, BlockKind::source_session, BlockKind::source_user,
                   BlockKind::target_path, BlockKind::protected_prefix}) {
        if (to_string(k) == s) return k;
    }
    return std::nullopt;
}

void BlockList::upsert(BlockEntry entry) {
    std::unique_lock lock(mutex_);
    auto key = std::make_pair(entry.kind, entry.key);
    entries_.insert_or_assign(std::move(key), std::move(entry));
}

void BlockList::purge_expired(TimestampMs now) {
    std::unique_lock lock(mutex_);
    std::erase_if(entries_, [now](const auto& kv) { return !kv.second.live_at(now); });
}

std::optional<BlockEntry> BlockList::find(BlockKind kind, const std::string& key, TimestampMs now) const {
    std::shared_lock lock(mutex_);
    auto it = entries_.find({kind, key});
    if (it == entries_.end() || !it->second.live_at(now)) return std::nullopt;
    return it->second;
}

std::vector<BlockEntry> BlockList::snapshot() const {
    std::shared_lock lock(mutex_);
    std::vector<BlockEntry> out;
    out.reserve(entries_.size());
    for (const auto& [_, entry] : entries_) out.push_back(entry);
    return out;
}

std::size_t BlockList::size() const {
    std::shared_lock lock(mutex_);
    return entries_.size();
}

ConnectionVerdict check_connection(const CanonicalRequest& req, const BlockList& lists, TimestampMs now) {
    if (lists.find(BlockKind::source_ip, req.identity.ip, now)) return {true, "ip-blocked"};
    if (req.session_id && lists.find(BlockKind::source_session, *req.session_id, now)) {
        return {true, "session-blocked"};
    }
    if (req.identity.username && lists.find(BlockKind::source_user, *req.identity.username, now)) {
        return {true, "user-blocked"};
    }
    if (lists.find(BlockKind::target_path, req.path_template, now)) return {true, "target-blocked"};
    for (const auto& entry : lists.snapshot()) {
        if (entry.kind == BlockKind::protected_prefix && entry.live_at(now) &&
            req.path.starts_with(entry.key)) {
            return {true, "protected-path"};
        }
    }
    return ConnectionVerdict::pass();
}

std::vector<BlockEntry> load_block_entries(const std::string& json_text) {
    std::vector<BlockEntry> out;
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("block seed: ") + e.what());
    }
    if (!doc.is_array()) throw ConfigError("block seed must be a JSON array");
    for (const auto& item : doc) {
        BlockEntry entry;
        auto kind = parse_block_kind(item.value("kind", ""));
        if (!kind) throw ConfigError("block seed: unknown kind");
        entry.kind = *kind;
        entry.key = item.value("key", "");
        if (entry.key.empty()) throw ConfigError("block seed: empty key");
        if (item.contains("expires_at") && !item["expires_at"].is_null()) {
            entry.expires_at = item["expires_at"].get<TimestampMs>();
        }
        entry.reason = item.value("reason", "admin");
        out.push_back(std::move(entry));
    }
    return out;
}

std::string dump_block_entries(const std::vector<BlockEntry>& entries) {
    json doc = json::array();
    for (const auto& e : entries) {
        json item{{"kind", to_string(e.kind)}, {"key", e.key}, {"reason", e.reason}};
        item["expires_at"] = e.expires_at ? json(*e.expires_at) : json(nullptr);
        doc.push_back(std::move(item));
    }
    return doc.dump(2);
}

}  // namespace sentrygate
