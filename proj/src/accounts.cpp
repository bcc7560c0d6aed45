#include "procurechain/accounts.hpp"

#include <algorithm>
#include <cctype>

#include <sodium.h>

#include "procurechain/error.hpp"

namespace procurechain {

std::optional<TokenAmount> TokenAmount::parse(std::string_view text) {
    if (text.empty()) return std::nullopt;
    auto dot = text.find('.');
    std::string_view whole = text.substr(0, dot);
    std::string_view frac = dot == std::string_view::npos ? std::string_view{} : text.substr(dot + 1);
    if (whole.empty() || frac.size() > 6 || (dot != std::string_view::npos && frac.empty())) return std::nullopt;

    auto all_digits = [](std::string_view s) {
        return std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
    };
    if (!all_digits(whole) || !all_digits(frac) || whole.size() > 13) return std::nullopt;

    std::uint64_t micro = 0;
    for (char c : whole) micro = micro * 10 + static_cast<std::uint64_t>(c - '0');
    micro *= kMicroPerToken;
    std::uint64_t scale = kMicroPerToken / 10;
    for (char c : frac) {
        micro += static_cast<std::uint64_t>(c - '0') * scale;
        scale /= 10;
    }
    return TokenAmount{micro};
}

std::string TokenAmount::to_string() const {
    std::string frac = std::to_string(micro_units % kMicroPerToken);
    frac.insert(0, 6 - frac.size(), '0');
    while (!frac.empty() && frac.back() == '0') frac.pop_back();
    const std::string whole = std::to_string(micro_units / kMicroPerToken);
    return frac.empty() ? whole : whole + "." + frac;
}

std::string_view to_string(Role role) noexcept {
    switch (role) {
        case Role::bidder: return "bidder";
        case Role::procurer: return "procurer";
        case Role::admin: return "admin";
    }
    return "bidder";
}

std::optional<Role> role_from_string(std::string_view text) noexcept {
    if (text == "bidder") return Role::bidder;
    if (text == "procurer") return Role::procurer;
    if (text == "admin") return Role::admin;
    return std::nullopt;
}

std::string_view to_string(KycStatus status) noexcept {
    switch (status) {
        case KycStatus::none: return "none";
        case KycStatus::pending: return "pending";
        case KycStatus::verified: return "verified";
        case KycStatus::rejected: return "rejected";
    }
    return "none";
}

std::optional<KycStatus> kyc_status_from_string(std::string_view text) noexcept {
    if (text == "none") return KycStatus::none;
    if (text == "pending") return KycStatus::pending;
    if (text == "verified") return KycStatus::verified;
    if (text == "rejected") return KycStatus::rejected;
    return std::nullopt;
}

bool kyc_transition_allowed(KycStatus from, KycStatus to) noexcept {
    switch (from) {
        case KycStatus::none: return to == KycStatus::pending;
        case KycStatus::pending: return to == KycStatus::verified || to == KycStatus::rejected;
        case KycStatus::rejected: return to == KycStatus::pending;
        case KycStatus::verified: return false;
    }
    return false;
}

std::optional<std::string> normalize_email(std::string_view email) {
    if (email.size() < 3 || email.size() > 254) return std::nullopt;
    auto at = email.find('@');
    if (at == std::string_view::npos || at == 0 || email.find('@', at + 1) != std::string_view::npos)
        return std::nullopt;
    std::string_view domain = email.substr(at + 1);
    auto dot = domain.find('.');
    if (dot == std::string_view::npos || dot == 0 || domain.back() == '.') return std::nullopt;
    std::string out;
    for (char c : email) {
        auto uc = static_cast<unsigned char>(c);
        if (std::isspace(uc) || std::iscntrl(uc)) return std::nullopt;
        out.push_back(static_cast<char>(std::tolower(uc)));
    }
    return out;
}

std::string hash_password(std::string_view password, PasswordStrength strength) {
    if (sodium_init() < 0) throw Error(ErrorCode::internal, "libsodium failed to initialise");
    const auto ops = strength == PasswordStrength::minimal ? crypto_pwhash_OPSLIMIT_MIN : crypto_pwhash_OPSLIMIT_INTERACTIVE;
    const auto mem = strength == PasswordStrength::minimal ? crypto_pwhash_MEMLIMIT_MIN : crypto_pwhash_MEMLIMIT_INTERACTIVE;
    char out[crypto_pwhash_STRBYTES];
    if (crypto_pwhash_str(out, password.data(), password.size(), ops, mem) != 0)
        throw Error(ErrorCode::internal, "password hashing ran out of memory");
    return out;
}

bool verify_password(const std::string& stored_hash, std::string_view password) noexcept {
    if (sodium_init() < 0 || stored_hash.empty()) return false;
    return crypto_pwhash_str_verify(stored_hash.c_str(), password.data(), password.size()) == 0;
}

Bytes profile_edit_message(std::string_view account_id, const Json& fields, std::uint64_t seq) {
    Json msg = {{"account_id", std::string(account_id)}, {"fields", fields}, {"seq", seq}};
    return to_bytes(canonical_json(msg));
}

// --- Registry ---

const AccountRecord& Registry::add(AccountRecord record) {
    if (accounts_.count(record.id)) throw Error(ErrorCode::conflict, "account " + record.id + " already exists");
    if (email_index_.count(record.email)) throw Error(ErrorCode::conflict, "email already registered");
    email_index_.emplace(record.email, record.id);
    auto [it, _] = accounts_.emplace(record.id, std::move(record));
    return it->second;
}

const AccountRecord* Registry::find(std::string_view id) const {
    auto it = accounts_.find(id);
    return it == accounts_.end() ? nullptr : &it->second;
}

const AccountRecord* Registry::find_by_email(std::string_view email) const {
    auto it = email_index_.find(email);
    return it == email_index_.end() ? nullptr : find(it->second);
}

AccountRecord& Registry::at(std::string_view id) {
    auto it = accounts_.find(id);
    if (it == accounts_.end()) throw Error(ErrorCode::not_found, "no account " + std::string(id));
    return it->second;
}

const EmailToken& Registry::issue_token(std::string account_id, TimestampMs expires_at) {
    EmailToken t{random_token_hex(32), std::move(account_id), expires_at, false};
    auto [it, _] = tokens_.emplace(t.token, t);
    return it->second;
}

std::string Registry::consume_token(std::string_view token, TimestampMs now) {
    auto it = tokens_.find(token);
    if (it == tokens_.end()) throw Error(ErrorCode::verification_failed, "unknown verification token");
    if (it->second.used) throw Error(ErrorCode::verification_failed, "verification token already used");
    if (now >= it->second.expires_at) throw Error(ErrorCode::verification_failed, "verification token expired");
    it->second.used = true;
    return it->second.account_id;
}

std::optional<EmailToken> Registry::live_token_for(std::string_view account_id, TimestampMs now) const {
    std::optional<EmailToken> best;
    for (const auto& [_, t] : tokens_) {
        if (t.account_id != account_id || t.used || now >= t.expires_at) continue;
        if (!best || t.expires_at > best->expires_at) best = t;
    }
    return best;
}

void Registry::drop_expired_tokens(TimestampMs now) {
    std::erase_if(tokens_, [now](const auto& kv) { return now >= kv.second.expires_at; });
}

Json Registry::to_json() const {
    Json accounts = Json::object();
    for (const auto& [id, a] : accounts_) {
        Json profile = Json::object();
        for (const auto& [k, v] : a.profile) profile[k] = v;
        accounts[id] = {{"created_at", a.created_at},
                        {"display_name", a.display_name},
                        {"email", a.email},
                        {"email_verified", a.email_verified},
                        {"password_hash", a.password_hash},
                        {"profile", profile},
                        {"profile_seq", a.profile_seq},
                        {"public_key", a.public_key.hex()},
                        {"role", std::string(to_string(a.role))}};
    }
    Json tokens = Json::object();
    for (const auto& [tok, t] : tokens_)
        tokens[tok] = {{"account_id", t.account_id}, {"expires_at", t.expires_at}, {"used", t.used}};
    return {{"accounts", accounts}, {"email_tokens", tokens}};
}

Registry Registry::from_json(const Json& j) {
    Registry r;
    for (const auto& [id, a] : require_object(j, "accounts").items()) {
        AccountRecord rec;
        rec.id = id;
        auto pk = PublicKey::from_hex(require_string(a, "public_key"));
        auto role = role_from_string(require_string(a, "role"));
        if (!pk || !role || account_id_of(*pk) != id) throw Error(ErrorCode::parse_error, "bad account record " + id);
        rec.public_key = *pk;
        rec.role = *role;
        rec.email = require_string(a, "email");
        rec.display_name = require_string(a, "display_name");
        rec.email_verified = a.at("email_verified").get<bool>();
        rec.password_hash = require_string(a, "password_hash");
        rec.profile_seq = require_u64(a, "profile_seq");
        rec.created_at = require_u64(a, "created_at");
        for (const auto& [k, v] : require_object(a, "profile").items()) rec.profile[k] = v.get<std::string>();
        r.add(std::move(rec));
    }
    for (const auto& [tok, t] : require_object(j, "email_tokens").items()) {
        r.tokens_[tok] = EmailToken{tok, require_string(t, "account_id"), require_u64(t, "expires_at"),
                                    t.at("used").get<bool>()};
    }
    return r;
}

}  // namespace procurechain
