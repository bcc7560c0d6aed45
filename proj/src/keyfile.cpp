#include "procurechain/keyfile.hpp"

#include "procurechain/error.hpp"

namespace procurechain {

std::string export_key_file(const KeyPair& kp, std::string_view account_id, TimestampMs created_at) {
    Json j = {
        {"account_id", std::string(account_id)},
        {"created_at", format_rfc3339(created_at)},
        {"public_key", kp.public_key.hex()},
        {"secret_key", kp.secret_key.hex()},
        {"version", kKeyFileVersion},
    };
    return canonical_json(j);
}

KeyFile import_key_file(std::string_view text) {
    Json j = Json::parse(text, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw Error(ErrorCode::parse_error, "key file is not valid JSON");

    KeyFile kf;
    kf.version = require_u64(j, "version");
    if (kf.version != kKeyFileVersion)
        throw Error(ErrorCode::version_error, "unsupported key file version " + std::to_string(kf.version));
    kf.account_id = require_string(j, "account_id");

    auto created = parse_rfc3339(require_string(j, "created_at"));
    if (!created) throw Error(ErrorCode::parse_error, "key file created_at is not RFC 3339 UTC");
    kf.created_at = *created;

    auto pk = PublicKey::from_hex(require_string(j, "public_key"));
    auto sk = SecretKey::from_hex(require_string(j, "secret_key"));
    if (!pk || !sk) throw Error(ErrorCode::parse_error, "key file keys must be 64 lowercase hex characters");

    if (derive_public_key(*sk) != *pk)
        throw Error(ErrorCode::integrity_error, "key file public_key does not match its secret_key");
    kf.keypair = KeyPair{*pk, *sk};
    return kf;
}

}  // namespace procurechain
