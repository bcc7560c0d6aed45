#include "procurechain/encoding.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>

#include "procurechain/error.hpp"

namespace procurechain {

std::string_view to_string(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::bad_request: return "bad_request";
        case ErrorCode::unauthenticated: return "unauthenticated";
        case ErrorCode::invalid_credentials: return "invalid_credentials";
        case ErrorCode::email_unverified: return "email_unverified";
        case ErrorCode::forbidden: return "forbidden";
        case ErrorCode::not_found: return "not_found";
        case ErrorCode::conflict: return "conflict";
        case ErrorCode::rejected: return "rejected";
        case ErrorCode::immutable_field: return "immutable_field";
        case ErrorCode::insufficient_funds: return "insufficient_funds";
        case ErrorCode::invalid_signature: return "invalid_signature";
        case ErrorCode::nonce_mismatch: return "nonce_mismatch";
        case ErrorCode::clock_regression: return "clock_regression";
        case ErrorCode::verification_failed: return "verification_failed";
        case ErrorCode::parse_error: return "parse_error";
        case ErrorCode::version_error: return "version_error";
        case ErrorCode::integrity_error: return "integrity_error";
        case ErrorCode::mail_gateway_error: return "mail_gateway_error";
        case ErrorCode::storage_error: return "storage_error";
        case ErrorCode::internal: return "internal";
    }
    return "internal";
}

std::string to_hex(std::span<const std::uint8_t> data) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string out;
    out.reserve(data.size() * 2);
    for (auto b : data) {
        out.push_back(digits[b >> 4]);
        out.push_back(digits[b & 0x0f]);
    }
    return out;
}

namespace {

int hex_value(char c) {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    return -1;
}

}  // namespace

std::optional<Bytes> from_hex(std::string_view hex) {
    if (hex.size() % 2 != 0) return std::nullopt;
    Bytes out;
    out.reserve(hex.size() / 2);
    for (std::size_t i = 0; i < hex.size(); i += 2) {
        int hi = hex_value(hex[i]);
        int lo = hex_value(hex[i + 1]);
        if (hi < 0 || lo < 0) return std::nullopt;
        out.push_back(static_cast<std::uint8_t>((hi << 4) | lo));
    }
    return out;
}

Bytes to_bytes(std::string_view text) { return Bytes(text.begin(), text.end()); }

void append_be32(Bytes& out, std::uint32_t value) {
    for (int shift = 24; shift >= 0; shift -= 8) out.push_back(static_cast<std::uint8_t>(value >> shift));
}

void append_be64(Bytes& out, std::uint64_t value) {
    for (int shift = 56; shift >= 0; shift -= 8) out.push_back(static_cast<std::uint8_t>(value >> shift));
}

void append_length_prefixed(Bytes& out, std::span<const std::uint8_t> field) {
    append_be32(out, static_cast<std::uint32_t>(field.size()));
    out.insert(out.end(), field.begin(), field.end());
}

void append_length_prefixed(Bytes& out, std::string_view field) {
    append_be32(out, static_cast<std::uint32_t>(field.size()));
    out.insert(out.end(), field.begin(), field.end());
}

std::string canonical_json(const Json& value) { return value.dump(); }

std::string format_rfc3339(TimestampMs ts) {
    std::time_t secs = static_cast<std::time_t>(ts / 1000);
    std::tm tm{};
    gmtime_r(&secs, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::optional<TimestampMs> parse_rfc3339(std::string_view text) {
    if (text.size() != 20 || text[19] != 'Z') return std::nullopt;
    std::tm tm{};
    std::string s(text);
    int consumed = 0;
    if (std::sscanf(s.c_str(), "%4d-%2d-%2dT%2d:%2d:%2dZ%n", &tm.tm_year, &tm.tm_mon, &tm.tm_mday,
                    &tm.tm_hour, &tm.tm_min, &tm.tm_sec, &consumed) != 6 ||
        consumed != 20) {
        return std::nullopt;
    }
    tm.tm_year -= 1900;
    tm.tm_mon -= 1;
    std::time_t secs = timegm(&tm);
    if (secs < 0) return std::nullopt;
    return static_cast<TimestampMs>(secs) * 1000;
}

TimestampMs system_now_ms() {
    using namespace std::chrono;
    return static_cast<TimestampMs>(
        duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count());
}

namespace {

const Json& require_field(const Json& obj, std::string_view key) {
    if (!obj.is_object()) throw Error(ErrorCode::parse_error, "expected a JSON object");
    auto it = obj.find(std::string(key));
    if (it == obj.end()) throw Error(ErrorCode::parse_error, "missing field '" + std::string(key) + "'");
    return *it;
}

}  // namespace

std::uint64_t require_u64(const Json& obj, std::string_view key) {
    const Json& v = require_field(obj, key);
    if (v.is_number_unsigned()) return v.get<std::uint64_t>();
    if (v.is_number_integer() && v.get<std::int64_t>() >= 0) return static_cast<std::uint64_t>(v.get<std::int64_t>());
    throw Error(ErrorCode::parse_error, "field '" + std::string(key) + "' must be an unsigned integer");
}

const std::string& require_string(const Json& obj, std::string_view key) {
    const Json& v = require_field(obj, key);
    if (!v.is_string()) throw Error(ErrorCode::parse_error, "field '" + std::string(key) + "' must be a string");
    return v.get_ref<const std::string&>();
}

const Json& require_object(const Json& obj, std::string_view key) {
    const Json& v = require_field(obj, key);
    if (!v.is_object()) throw Error(ErrorCode::parse_error, "field '" + std::string(key) + "' must be an object");
    return v;
}

const Json& require_array(const Json& obj, std::string_view key) {
    const Json& v = require_field(obj, key);
    if (!v.is_array()) throw Error(ErrorCode::parse_error, "field '" + std::string(key) + "' must be an array");
    return v;
}

void require_exact_keys(const Json& obj, std::initializer_list<std::string_view> keys) {
    if (!obj.is_object()) throw Error(ErrorCode::parse_error, "expected a JSON object");
    for (auto k : keys)
        if (!obj.contains(std::string(k))) throw Error(ErrorCode::parse_error, "missing field '" + std::string(k) + "'");
    if (obj.size() != keys.size()) throw Error(ErrorCode::parse_error, "unexpected extra fields");
}

}  // namespace procurechain
