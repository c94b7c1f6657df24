#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>

namespace sentrygate {

using Key256 = std::array<std::uint8_t, 32>;
using Digest256 = std::array<std::uint8_t, 32>;

/// 256-bit deployment secret. Subkeys are derived per purpose with a label so
/// no two purposes share key material.
class Secret {
  public:
    static Secret from_bytes(std::span<const std::uint8_t> bytes);
    /// Reads a 32-byte raw key file; throws ConfigError on any other size.
    static Secret from_file(const std::string& path);
    /// Fixed key for offline training and replay when no secret is configured.
    static Secret development();

    Key256 derive(std::string_view label) const;

  private:
    Key256 key_{};
};

Digest256 hmac_sha256(const Key256& key, std::string_view message);

/// Constant-time comparison (sodium_memcmp); sizes are public.
bool constant_time_equal(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b);

std::string to_hex(std::span<const std::uint8_t> bytes);

class RandomSource {
  public:
    virtual ~RandomSource() = default;
    virtual void fill(std::span<std::uint8_t> out) = 0;

    /// Hex string of `bytes` random bytes.
    std::string hex_token(std::size_t bytes);
};

/// Operating-system CSPRNG.
class SystemRandom final : public RandomSource {
  public:
    void fill(std::span<std::uint8_t> out) override;
};

/// Reproducible stream keyed by a seed; used in replay so identical inputs
/// give identical random values.
class DeterministicRandom final : public RandomSource {
  public:
    explicit DeterministicRandom(const Key256& seed) : seed_(seed) {}
    void fill(std::span<std::uint8_t> out) override;

  private:
    Key256 seed_;
    std::uint64_t counter_ = 0;
};

/// Authenticated encryption of a cookie value, bound to the cookie name.
/// Output is "s1." followed by URL-safe base64 of nonce||ciphertext.
std::string seal_value(std::string_view plaintext, std::string_view name, const Key256& key,
                       RandomSource& rng);
std::optional<std::string> unseal_value(std::string_view sealed, std::string_view name, const Key256& key);

/// Standard base64 with padding.
std::string base64_encode(std::string_view bytes);
/// nullopt on malformed input.
std::optional<std::string> base64_decode(std::string_view text);

/// Calls sodium_init once; safe to call repeatedly.
void ensure_crypto_initialized();

}  // namespace sentrygate
