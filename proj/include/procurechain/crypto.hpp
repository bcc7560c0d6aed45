#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "procurechain/encoding.hpp"

namespace procurechain {

// Fixed-width byte string with a phantom tag so that a public key can never be
// passed where a digest is expected.
template <std::size_t N, typename Tag>
struct FixedBytes {
    static constexpr std::size_t size = N;
    std::array<std::uint8_t, N> bytes{};

    std::span<const std::uint8_t> view() const noexcept { return bytes; }
    std::string hex() const { return to_hex(bytes); }
    bool is_zero() const noexcept {
        for (auto b : bytes)
            if (b != 0) return false;
        return true;
    }

    static std::optional<FixedBytes> from_hex(std::string_view text) {
        auto raw = procurechain::from_hex(text);
        if (!raw || raw->size() != N) return std::nullopt;
        FixedBytes out;
        std::copy(raw->begin(), raw->end(), out.bytes.begin());
        return out;
    }

    static std::optional<FixedBytes> from_span(std::span<const std::uint8_t> raw) {
        if (raw.size() != N) return std::nullopt;
        FixedBytes out;
        std::copy(raw.begin(), raw.end(), out.bytes.begin());
        return out;
    }

    friend auto operator<=>(const FixedBytes&, const FixedBytes&) = default;
};

struct HashTag;
struct PublicKeyTag;
struct SecretKeyTag;
struct SignatureTag;

using Hash256 = FixedBytes<32, HashTag>;
using PublicKey = FixedBytes<32, PublicKeyTag>;
// The 32-byte Ed25519 seed; the expanded signing key is derived on demand.
using SecretKey = FixedBytes<32, SecretKeyTag>;
using Signature = FixedBytes<64, SignatureTag>;

struct KeyPair {
    PublicKey public_key;
    SecretKey secret_key;

    friend bool operator==(const KeyPair&, const KeyPair&) = default;
};

// Deterministic when a seed is given; the seed must be exactly 32 bytes.
KeyPair generate_keypair(std::optional<std::span<const std::uint8_t>> seed = std::nullopt);

PublicKey derive_public_key(const SecretKey& secret);

Hash256 digest(std::span<const std::uint8_t> data);
Hash256 digest(std::string_view data);

Signature sign(std::span<const std::uint8_t> message, const SecretKey& secret);

// Never throws; any malformed input simply fails verification.
bool verify(std::span<const std::uint8_t> message, const Signature& sig, const PublicKey& public_key) noexcept;

// Account ids are the first 16 hex characters of the public key.
std::string account_id_of(const PublicKey& public_key);

std::string random_token_hex(std::size_t bytes = 32);

}  // namespace procurechain
