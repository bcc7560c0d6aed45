#pragma once

#include <openssl/sha.h>
#include <stdlib.h>

#include <atomic>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <string>

#include "procurechain/engine.hpp"
#include "procurechain/error.hpp"

namespace pc_test {

using namespace procurechain;

class TempDir {
public:
    TempDir() {
        std::string tmpl = (fs::temp_directory_path() / "procurechain-test-XXXXXX").string();
        if (!mkdtemp(tmpl.data())) throw std::runtime_error("mkdtemp failed");
        path_ = tmpl;
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const fs::path& path() const { return path_; }
    fs::path operator/(const std::string& name) const { return path_ / name; }

private:
    fs::path path_;
};

// Independent SHA-256 used as the oracle for the library's digest.
inline Hash256 openssl_sha256(std::span<const std::uint8_t> data) {
    Hash256 h;
    SHA256(data.data(), data.size(), h.bytes.data());
    return h;
}

class FakeClock {
public:
    explicit FakeClock(TimestampMs start = 1'800'000'000'000) : t_(std::make_shared<std::atomic<TimestampMs>>(start)) {}
    TimestampMs now() const { return t_->load(); }
    void advance(TimestampMs ms) { t_->fetch_add(ms); }
    std::function<TimestampMs()> fn() const {
        auto t = t_;
        return [t] { return t->load(); };
    }

private:
    std::shared_ptr<std::atomic<TimestampMs>> t_;
};

struct Actor {
    std::string id;
    KeyPair kp;
};

inline bool conserved(const WorldState& s) {
    std::uint64_t total = s.escrow;
    for (const auto& [_, b] : s.balances) total += b;
    return total == s.supply;
}

// Relative path -> content digest for every regular file under root.
inline std::map<std::string, Hash256> hash_tree(const fs::path& root) {
    std::map<std::string, Hash256> out;
    if (!fs::exists(root)) return out;
    for (const auto& entry : fs::recursive_directory_iterator(root))
        if (entry.is_regular_file()) out[fs::relative(entry.path(), root).string()] = digest(read_file(entry.path()));
    return out;
}

inline std::string read_text(const fs::path& p) { return read_file(p); }

inline void write_text(const fs::path& p, std::string_view text) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out << text;
}

// An in-memory engine with a controllable clock and helpers for building
// fully onboarded accounts.
class Market {
public:
    explicit Market(EngineOptions options = {}, std::uint64_t treasury_tokens = 1'000'000'000) {
        options.password_strength = PasswordStrength::minimal;
        options.clock = clock.fn();
        engine = Engine::in_memory(authority, {{authority.public_key, TokenAmount::tokens(treasury_tokens).micro_units}},
                                   std::move(options));
    }

    Actor user(const std::string& name, Role role, std::uint64_t tokens = 1000, bool kyc = true) {
        KeyPair kp = generate_keypair();
        const std::string email = name + "@example.test";
        Registration reg = role == Role::admin ? engine->register_admin(email, name, "password-" + name, kp)
                                               : engine->register_account(email, name, role, "password-" + name, kp);
        engine->verify_email(reg.token.token);
        if (kyc) {
            engine->submit_kyc(reg.account.id, to_bytes("identity document of " + name));
            engine->review_kyc(kOperatorReviewer, reg.account.id, KycStatus::verified);
        }
        if (tokens) engine->grant(reg.account.id, TokenAmount::tokens(tokens));
        return {reg.account.id, kp};
    }

    std::string post(const Actor& procurer, TimestampMs window_ms = 60'000, TokenAmount deposit = TokenAmount::tokens(5)) {
        return engine->create_post(procurer.kp, "Tender " + std::to_string(++posts_), "Specification text",
                                   clock.now(), clock.now() + window_ms, deposit);
    }

    WorldState committed() const {
        return engine->read([](const EngineView& v) { return v.state; });
    }
    Chain chain() const {
        return engine->read([](const EngineView& v) { return v.chain; });
    }
    TokenAmount balance(const Actor& a) const {
        return engine->read([&](const EngineView& v) { return v.state.balance_of(a.kp.public_key); });
    }

    FakeClock clock;
    KeyPair authority = generate_keypair();
    std::unique_ptr<Engine> engine;

private:
    int posts_ = 0;
};

// The code of the Error thrown by f, or nullopt if it returned normally.
template <typename F>
std::optional<ErrorCode> error_code_of(F&& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    return std::nullopt;
}

}  // namespace pc_test
