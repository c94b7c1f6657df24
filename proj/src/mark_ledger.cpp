#include "sentrygate/mark_ledger.hpp"

#include <mutex>

namespace sentrygate {

namespace {

void append_length_prefixed(std::string& out, std::string_view field) {
    auto n = static_cast<std::uint32_t>(field.size());
    for (int i = 3; i >= 0; --i) out.push_back(static_cast<char>((n >> (8 * i)) & 0xff));
    out.append(field);
}

}  // namespace

Digest256 MarkLedger::digest(std::string_view session_id, std::string_view name, std::string_view value) const {
    std::string message;
    message.reserve(12 + session_id.size() + name.size() + value.size());
    append_length_prefixed(message, session_id);
    append_length_prefixed(message, name);
    append_length_prefixed(message, value);
    return hmac_sha256(key_, message);
}

void MarkLedger::mark(const std::string& session_id, const std::string& name, std::string_view value) {
    auto d = digest(session_id, name, value);
    std::unique_lock lock(mutex_);
    entries_.insert_or_assign({session_id, name}, d);
}

MarkLedger::Check MarkLedger::verify(const std::string& session_id, const std::string& name,
                                     std::string_view value) const {
    auto candidate = digest(session_id, name, value);
    Digest256 stored{};
    {
        std::shared_lock lock(mutex_);
        auto it = entries_.find({session_id, name});
        if (it == entries_.end()) return Check::no_entry;
        stored = it->second;
    }
    return constant_time_equal(candidate, stored) ? Check::match : Check::mismatch;
}

void MarkLedger::drop_session(const std::string& session_id) {
    std::unique_lock lock(mutex_);
    std::erase_if(entries_, [&](const auto& kv) { return kv.first.first == session_id; });
}

std::size_t MarkLedger::size() const {
    std::shared_lock lock(mutex_);
    return entries_.size();
}

}  // namespace sentrygate
