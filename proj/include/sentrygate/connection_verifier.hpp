#pragma once

#include <map>
#include <optional>
#include <shared_mutex>
#include <string>
#include <utility>
#include <vector>

#include "sentrygate/common.hpp"
#include "sentrygate/preprocessor.hpp"

namespace sentrygate {

enum class BlockKind { source_ip, source_session, source_user, target_path, protected_prefix };

std::string_view to_string(BlockKind k);
std::optional<BlockKind> parse_block_kind(std::string_view s);

struct BlockEntry {
    BlockKind kind = BlockKind::source_ip;
    std::string key;
    std::optional<TimestampMs> expires_at;  // nullopt = permanent
    std::string reason;

    bool live_at(TimestampMs now) const { return !expires_at || *expires_at > now; }
};

/// Blacklist keyed by source or target.
///
/// Readers (check, snapshot) run concurrently; writers are serialized. An
/// expired entry behaves as absent on lookup and is dropped by purge_expired.
class BlockList {
  public:
    void upsert(BlockEntry entry);
    void purge_expired(TimestampMs now);
    std::optional<BlockEntry> find(BlockKind kind, const std::string& key, TimestampMs now) const;
    std::vector<BlockEntry> snapshot() const;
    std::size_t size() const;

  private:
    mutable std::shared_mutex mutex_;
    std::map<std::pair<BlockKind, std::string>, BlockEntry> entries_;
};

struct ConnectionVerdict {
    bool blocked = false;
    std::string reason;  // "ip-blocked", "protected-path", ...

    static ConnectionVerdict pass() { return {}; }
};

/// Read-only check of a canonical request against the block list.
ConnectionVerdict check_connection(const CanonicalRequest& req, const BlockList& lists, TimestampMs now);

std::vector<BlockEntry> load_block_entries(const std::string& json_text);
std::string dump_block_entries(const std::vector<BlockEntry>& entries);

}  // namespace sentrygate
