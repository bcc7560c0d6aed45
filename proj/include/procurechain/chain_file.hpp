#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

#include "procurechain/error.hpp"
#include "procurechain/ledger.hpp"

namespace procurechain {

inline constexpr std::string_view kChainFileHeader = "PROCURECHAIN v1";

// parse_error that remembers which block line failed, when one did.
class ChainParseError : public Error {
public:
    ChainParseError(const std::string& message, std::optional<std::uint64_t> block_index)
        : Error(ErrorCode::parse_error, message), block_index_(block_index) {}

    std::optional<std::uint64_t> block_index() const noexcept { return block_index_; }

private:
    std::optional<std::uint64_t> block_index_;
};

Json block_to_json(const Block& block);
Block block_from_json(const Json& j);

// One canonical-JSON line, newline-terminated.
std::string serialize_block_line(const Block& block);

// Header line followed by one block per line, in height order.
std::string serialize_chain(const Chain& chain);

// Strict parse. Every line including the last must be newline-terminated;
// a missing final newline is reported as a torn tail (parse_error).
Chain parse_chain(std::string_view text, const PublicKey& authority);

// When the text does not end in a newline, returns the length of the longest
// newline-terminated prefix; that is what a crash mid-append leaves behind.
std::optional<std::size_t> torn_tail_offset(std::string_view text);

}  // namespace procurechain
