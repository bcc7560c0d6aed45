#pragma once

#include <string>
#include <string_view>

#include "procurechain/crypto.hpp"

namespace procurechain {

inline constexpr std::uint64_t kKeyFileVersion = 1;

struct KeyFile {
    std::uint64_t version = kKeyFileVersion;
    std::string account_id;
    KeyPair keypair;
    TimestampMs created_at = 0;
};

// Canonical JSON:
// {"account_id":..,"created_at":"<RFC3339>","public_key":"<hex>","secret_key":"<hex>","version":1}
std::string export_key_file(const KeyPair& kp, std::string_view account_id, TimestampMs created_at);

// Throws Error with parse_error, version_error or integrity_error (stored
// public key does not match the one derived from the secret).
KeyFile import_key_file(std::string_view text);

}  // namespace procurechain
