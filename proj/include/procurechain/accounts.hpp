#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>

#include "procurechain/crypto.hpp"
#include "procurechain/encoding.hpp"

namespace procurechain {

inline constexpr std::uint64_t kMicroPerToken = 1'000'000;

// Integer micro-units only; 1 token = 1,000,000 micro-units.
struct TokenAmount {
    std::uint64_t micro_units = 0;

    static TokenAmount tokens(std::uint64_t whole) { return {whole * kMicroPerToken}; }
    // Accepts "12", "12.5", "0.000001"; at most six decimals.
    static std::optional<TokenAmount> parse(std::string_view text);
    std::string to_string() const;

    friend auto operator<=>(const TokenAmount&, const TokenAmount&) = default;
};

enum class Role { bidder, procurer, admin };
enum class KycStatus { none, pending, verified, rejected };

std::string_view to_string(Role role) noexcept;
std::optional<Role> role_from_string(std::string_view text) noexcept;
std::string_view to_string(KycStatus status) noexcept;
std::optional<KycStatus> kyc_status_from_string(std::string_view text) noexcept;

// none->pending, pending->verified, pending->rejected, rejected->pending.
bool kyc_transition_allowed(KycStatus from, KycStatus to) noexcept;

// Email addresses are compared after lowercasing.
std::optional<std::string> normalize_email(std::string_view email);

enum class PasswordStrength { minimal, interactive };

std::string hash_password(std::string_view password, PasswordStrength strength);
bool verify_password(const std::string& stored_hash, std::string_view password) noexcept;

// Off-chain identity record. Balance and KYC status live in the chain-derived
// world state; this only holds what the chain never sees.
struct AccountRecord {
    std::string id;
    PublicKey public_key;
    std::string email;
    std::string display_name;
    Role role = Role::bidder;
    bool email_verified = false;
    std::string password_hash;
    std::map<std::string, std::string> profile;
    std::uint64_t profile_seq = 0;
    TimestampMs created_at = 0;
};

struct EmailToken {
    std::string token;
    std::string account_id;
    TimestampMs expires_at = 0;
    bool used = false;
};

// Editable free-text profile keys besides display_name.
inline constexpr std::string_view kProfileFields[] = {"organization", "contact_number", "address", "bio"};
// Identity fields that an edit may name but never change.
inline constexpr std::string_view kImmutableFields[] = {"id", "public_key", "email", "role"};

// Bytes the owner signs to authorise a profile edit; seq must be profile_seq + 1.
Bytes profile_edit_message(std::string_view account_id, const Json& fields, std::uint64_t seq);

class Registry {
public:
    const AccountRecord& add(AccountRecord record);
    const AccountRecord* find(std::string_view id) const;
    const AccountRecord* find_by_email(std::string_view email) const;
    AccountRecord& at(std::string_view id);
    const std::map<std::string, AccountRecord, std::less<>>& accounts() const noexcept { return accounts_; }

    const EmailToken& issue_token(std::string account_id, TimestampMs expires_at);
    // Marks the token used and returns the account id. Throws verification_failed
    // for unknown, used or expired tokens.
    std::string consume_token(std::string_view token, TimestampMs now);
    // Newest unused, unexpired token for the account, if any.
    std::optional<EmailToken> live_token_for(std::string_view account_id, TimestampMs now) const;
    void drop_expired_tokens(TimestampMs now);

    Json to_json() const;
    static Registry from_json(const Json& j);

private:
    std::map<std::string, AccountRecord, std::less<>> accounts_;
    std::map<std::string, std::string, std::less<>> email_index_;
    std::map<std::string, EmailToken, std::less<>> tokens_;
};

}  // namespace procurechain
