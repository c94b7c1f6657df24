#include "sentrygate/crypto.hpp"

#include <sodium.h>

#include <fstream>
#include <iterator>
#include <mutex>
#include <vector>

#include "sentrygate/common.hpp"

namespace sentrygate {

namespace {

constexpr std::string_view kSealPrefix = "s1.";

}  // namespace

void ensure_crypto_initialized() {
    static std::once_flag once;
    std::call_once(once, [] {
        if (sodium_init() < 0) throw std::runtime_error("libsodium initialization failed");
    });
}

Secret Secret::from_bytes(std::span<const std::uint8_t> bytes) {
    if (bytes.size() != 32) throw ConfigError("secret must be exactly 32 bytes");
    Secret s;
    std::copy(bytes.begin(), bytes.end(), s.key_.begin());
    return s;
}

Secret Secret::from_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read secret file: " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return from_bytes(bytes);
}

Secret Secret::development() {
    Key256 k{};
    for (std::size_t i = 0; i < k.size(); ++i) k[i] = static_cast<std::uint8_t>(0xA5 ^ (i * 7));
    Secret s;
    s.key_ = k;
    return s;
}

Key256 Secret::derive(std::string_view label) const {
    return hmac_sha256(key_, std::string("sentrygate/") + std::string(label));
}

Digest256 hmac_sha256(const Key256& key, std::string_view message) {
    ensure_crypto_initialized();
    Digest256 out{};
    crypto_auth_hmacsha256_state state;
    crypto_auth_hmacsha256_init(&state, key.data(), key.size());
    crypto_auth_hmacsha256_update(&state, reinterpret_cast<const unsigned char*>(message.data()),
                                  message.size());
    crypto_auth_hmacsha256_final(&state, out.data());
    return out;
}

bool constant_time_equal(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b) {
    if (a.size() != b.size()) return false;
    return sodium_memcmp(a.data(), b.data(), a.size()) == 0;
}

std::string to_hex(std::span<const std::uint8_t> bytes) {
    std::string out(bytes.size() * 2 + 1, '\0');
    sodium_bin2hex(out.data(), out.size(), bytes.data(), bytes.size());
    out.pop_back();
    return out;
}

std::string RandomSource::hex_token(std::size_t bytes) {
    std::vector<std::uint8_t> buf(bytes);
    fill(buf);
    return to_hex(buf);
}

void SystemRandom::fill(std::span<std::uint8_t> out) {
    ensure_crypto_initialized();
    randombytes_buf(out.data(), out.size());
}

void DeterministicRandom::fill(std::span<std::uint8_t> out) {
    ensure_crypto_initialized();
    // Each call draws from a fresh ChaCha20 stream keyed by (seed, counter).
    std::array<unsigned char, crypto_stream_chacha20_ietf_NONCEBYTES> nonce{};
    auto c = counter_++;
    for (std::size_t i = 0; i < 8; ++i) nonce[i] = static_cast<unsigned char>(c >> (8 * i));
    crypto_stream_chacha20_ietf(out.data(), out.size(), nonce.data(), seed_.data());
}

std::string seal_value(std::string_view plaintext, std::string_view name, const Key256& key,
                       RandomSource& rng) {
    ensure_crypto_initialized();
    std::vector<std::uint8_t> buf(crypto_aead_xchacha20poly1305_ietf_NPUBBYTES + plaintext.size() +
                                  crypto_aead_xchacha20poly1305_ietf_ABYTES);
    std::span<std::uint8_t> nonce(buf.data(), crypto_aead_xchacha20poly1305_ietf_NPUBBYTES);
    rng.fill(nonce);
    unsigned long long clen = 0;
    crypto_aead_xchacha20poly1305_ietf_encrypt(
        buf.data() + nonce.size(), &clen, reinterpret_cast<const unsigned char*>(plaintext.data()),
        plaintext.size(), reinterpret_cast<const unsigned char*>(name.data()), name.size(), nullptr,
        nonce.data(), key.data());
    std::size_t total = nonce.size() + clen;
    std::string b64(sodium_base64_ENCODED_LEN(total, sodium_base64_VARIANT_URLSAFE_NO_PADDING), '\0');
    sodium_bin2base64(b64.data(), b64.size(), buf.data(), total, sodium_base64_VARIANT_URLSAFE_NO_PADDING);
    b64.resize(std::char_traits<char>::length(b64.c_str()));
    return std::string(kSealPrefix) + b64;
}

std::optional<std::string> unseal_value(std::string_view sealed, std::string_view name, const Key256& key) {
    ensure_crypto_initialized();
    if (!sealed.starts_with(kSealPrefix)) return std::nullopt;
    auto b64 = sealed.substr(kSealPrefix.size());
    std::vector<std::uint8_t> raw(b64.size());
    std::size_t raw_len = 0;
    if (sodium_base642bin(raw.data(), raw.size(), b64.data(), b64.size(), nullptr, &raw_len, nullptr,
                          sodium_base64_VARIANT_URLSAFE_NO_PADDING) != 0) {
        return std::nullopt;
    }
    constexpr std::size_t nonce_len = crypto_aead_xchacha20poly1305_ietf_NPUBBYTES;
    if (raw_len < nonce_len + crypto_aead_xchacha20poly1305_ietf_ABYTES) return std::nullopt;
    std::string plain(raw_len - nonce_len - crypto_aead_xchacha20poly1305_ietf_ABYTES, '\0');
    unsigned long long plen = 0;
    if (crypto_aead_xchacha20poly1305_ietf_decrypt(
            reinterpret_cast<unsigned char*>(plain.data()), &plen, nullptr, raw.data() + nonce_len,
            raw_len - nonce_len, reinterpret_cast<const unsigned char*>(name.data()), name.size(),
            raw.data(), key.data()) != 0) {
        return std::nullopt;
    }
    plain.resize(plen);
    return plain;
}

std::string base64_encode(std::string_view bytes) {
    ensure_crypto_initialized();
    std::string out(sodium_base64_ENCODED_LEN(bytes.size(), sodium_base64_VARIANT_ORIGINAL), '\0');
    sodium_bin2base64(out.data(), out.size(), reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size(),
                      sodium_base64_VARIANT_ORIGINAL);
    out.resize(out.size() - 1);  // trailing NUL
    return out;
}

std::optional<std::string> base64_decode(std::string_view text) {
    ensure_crypto_initialized();
    std::string out(text.size() / 4 * 3 + 3, '\0');
    std::size_t len = 0;
    if (sodium_base642bin(reinterpret_cast<unsigned char*>(out.data()), out.size(), text.data(), text.size(), nullptr,
                          &len, nullptr, sodium_base64_VARIANT_ORIGINAL) != 0) {
        return std::nullopt;
    }
    out.resize(len);
    return out;
}

}  // namespace sentrygate
