#pragma once

#include <map>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <utility>

#include "sentrygate/crypto.hpp"

namespace sentrygate {

/// Keyed digests of server-set parameter values, one per (session, name).
/// The response side writes, the validator reads.
class MarkLedger {
  public:
    explicit MarkLedger(const Key256& mark_key) : key_(mark_key) {}

    enum class Check { match, mismatch, no_entry };

    Digest256 digest(std::string_view session_id, std::string_view name, std::string_view value) const;

    /// Records the latest value; an earlier digest for the same key is replaced.
    void mark(const std::string& session_id, const std::string& name, std::string_view value);
    Check verify(const std::string& session_id, const std::string& name, std::string_view value) const;
    void drop_session(const std::string& session_id);
    std::size_t size() const;

  private:
    Key256 key_;
    mutable std::shared_mutex mutex_;
    std::map<std::pair<std::string, std::string>, Digest256> entries_;
};

}  // namespace sentrygate
