#include "procurechain/crypto.hpp"

#include <stdexcept>

#include <sodium.h>

#include "procurechain/error.hpp"

namespace procurechain {

namespace {

void ensure_sodium() {
    static const bool ready = [] { return sodium_init() >= 0; }();
    if (!ready) throw Error(ErrorCode::internal, "libsodium failed to initialise");
}

struct ExpandedKey {
    std::array<std::uint8_t, crypto_sign_SECRETKEYBYTES> sk{};
    PublicKey pk;

    ~ExpandedKey() { sodium_memzero(sk.data(), sk.size()); }
};

void expand(const SecretKey& seed, ExpandedKey& out) {
    ensure_sodium();
    crypto_sign_seed_keypair(out.pk.bytes.data(), out.sk.data(), seed.bytes.data());
}

}  // namespace

KeyPair generate_keypair(std::optional<std::span<const std::uint8_t>> seed) {
    ensure_sodium();
    KeyPair kp;
    if (seed) {
        if (seed->size() != SecretKey::size)
            throw Error(ErrorCode::bad_request,
                        "keypair seed must be 32 bytes, got " + std::to_string(seed->size()));
        std::copy(seed->begin(), seed->end(), kp.secret_key.bytes.begin());
    } else {
        randombytes_buf(kp.secret_key.bytes.data(), kp.secret_key.bytes.size());
    }
    kp.public_key = derive_public_key(kp.secret_key);
    return kp;
}

PublicKey derive_public_key(const SecretKey& secret) {
    ExpandedKey key;
    expand(secret, key);
    return key.pk;
}

Hash256 digest(std::span<const std::uint8_t> data) {
    ensure_sodium();
    Hash256 out;
    crypto_hash_sha256(out.bytes.data(), data.data(), data.size());
    return out;
}

Hash256 digest(std::string_view data) {
    return digest(std::span(reinterpret_cast<const std::uint8_t*>(data.data()), data.size()));
}

Signature sign(std::span<const std::uint8_t> message, const SecretKey& secret) {
    ExpandedKey key;
    expand(secret, key);
    Signature sig;
    crypto_sign_detached(sig.bytes.data(), nullptr, message.data(), message.size(), key.sk.data());
    return sig;
}

bool verify(std::span<const std::uint8_t> message, const Signature& sig, const PublicKey& public_key) noexcept {
    if (sodium_init() < 0) return false;
    return crypto_sign_verify_detached(sig.bytes.data(), message.data(), message.size(),
                                       public_key.bytes.data()) == 0;
}

std::string account_id_of(const PublicKey& public_key) { return public_key.hex().substr(0, 16); }

std::string random_token_hex(std::size_t bytes) {
    ensure_sodium();
    Bytes buf(bytes);
    randombytes_buf(buf.data(), buf.size());
    return to_hex(buf);
}

}  // namespace procurechain
