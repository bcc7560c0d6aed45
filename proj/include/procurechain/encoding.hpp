#pragma once

#include <cstdint>
#include <initializer_list>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace procurechain {

using Bytes = std::vector<std::uint8_t>;
using Json = nlohmann::json;

// Milliseconds since the Unix epoch, UTC.
using TimestampMs = std::uint64_t;

std::string to_hex(std::span<const std::uint8_t> data);

// Strict: lowercase only, even length. Returns nullopt on any deviation so that
// a mutated serialization can never decode to the same bytes.
std::optional<Bytes> from_hex(std::string_view hex);

Bytes to_bytes(std::string_view text);

void append_be32(Bytes& out, std::uint32_t value);
void append_be64(Bytes& out, std::uint64_t value);
void append_length_prefixed(Bytes& out, std::span<const std::uint8_t> field);
void append_length_prefixed(Bytes& out, std::string_view field);

// Sorted keys, no insignificant whitespace. nlohmann's object type is an
// ordered std::map, so dump() without indentation is already canonical.
std::string canonical_json(const Json& value);

// RFC 3339 with second precision and a literal 'Z', e.g. 2026-10-16T08:30:00Z.
std::string format_rfc3339(TimestampMs ts);
std::optional<TimestampMs> parse_rfc3339(std::string_view text);

TimestampMs system_now_ms();

// Typed field accessors used by every parser in the project; they throw
// Error(parse_error) naming the offending field.
std::uint64_t require_u64(const Json& obj, std::string_view key);
const std::string& require_string(const Json& obj, std::string_view key);
const Json& require_object(const Json& obj, std::string_view key);
const Json& require_array(const Json& obj, std::string_view key);
// Object must hold exactly these keys and nothing else.
void require_exact_keys(const Json& obj, std::initializer_list<std::string_view> keys);

}  // namespace procurechain
