#include "procurechain/chain_file.hpp"

#include <algorithm>

namespace procurechain {

namespace {

template <typename T>
T require_fixed(const Json& obj, std::string_view key) {
    auto v = T::from_hex(require_string(obj, key));
    if (!v) throw Error(ErrorCode::parse_error, "field '" + std::string(key) + "' is not canonical hex");
    return *v;
}

Json tx_to_json(const Transaction& tx) {
    return {{"kind", std::string(kind_name(tx.kind))},
            {"nonce", tx.nonce},
            {"payload", tx.payload_json()},
            {"signature", tx.signature.hex()},
            {"signer", tx.signer.hex()}};
}

Transaction tx_from_json(const Json& j) {
    require_exact_keys(j, {"kind", "nonce", "payload", "signature", "signer"});
    Transaction tx;
    auto kind = kind_from_name(require_string(j, "kind"));
    if (!kind) throw Error(ErrorCode::parse_error, "unknown transaction kind");
    tx.kind = *kind;
    tx.nonce = require_u64(j, "nonce");
    tx.payload = canonical_json(require_object(j, "payload"));
    tx.signature = require_fixed<Signature>(j, "signature");
    tx.signer = require_fixed<PublicKey>(j, "signer");
    return tx;
}

}  // namespace

Json block_to_json(const Block& block) {
    Json txs = Json::array();
    for (const auto& tx : block.transactions) txs.push_back(tx_to_json(tx));
    return {{"authority_sig", block.authority_sig.hex()},
            {"height", block.height},
            {"prev_hash", block.prev_hash.hex()},
            {"timestamp", block.timestamp},
            {"transactions", std::move(txs)},
            {"tx_root", block.tx_root.hex()}};
}

Block block_from_json(const Json& j) {
    require_exact_keys(j, {"authority_sig", "height", "prev_hash", "timestamp", "transactions", "tx_root"});
    Block b;
    b.authority_sig = require_fixed<Signature>(j, "authority_sig");
    b.height = require_u64(j, "height");
    b.prev_hash = require_fixed<Hash256>(j, "prev_hash");
    b.timestamp = require_u64(j, "timestamp");
    b.tx_root = require_fixed<Hash256>(j, "tx_root");
    for (const auto& tx : require_array(j, "transactions")) b.transactions.push_back(tx_from_json(tx));
    return b;
}

std::string serialize_block_line(const Block& block) { return canonical_json(block_to_json(block)) + "\n"; }

std::string serialize_chain(const Chain& chain) {
    std::string out(kChainFileHeader);
    out.push_back('\n');
    for (const auto& b : chain.blocks()) out += serialize_block_line(b);
    return out;
}

Chain parse_chain(std::string_view text, const PublicKey& authority) {
    if (auto torn = torn_tail_offset(text)) {
        auto lines_before = static_cast<std::uint64_t>(std::count(text.begin(), text.begin() + *torn, '\n'));
        throw ChainParseError("chain file ends with a torn (unterminated) line",
                              lines_before > 0 ? std::optional(lines_before - 1) : std::nullopt);
    }

    std::size_t pos = text.find('\n');
    if (text.substr(0, pos) != kChainFileHeader) throw ChainParseError("missing PROCURECHAIN v1 header", std::nullopt);
    ++pos;

    std::vector<Block> blocks;
    std::size_t line_no = 1;
    while (pos < text.size()) {
        ++line_no;
        std::size_t end = text.find('\n', pos);
        std::string_view line = text.substr(pos, end - pos);
        pos = end + 1;
        Json j = Json::parse(line, nullptr, false);
        const std::uint64_t index = line_no - 2;
        if (j.is_discarded()) throw ChainParseError("line " + std::to_string(line_no) + " is not JSON", index);
        try {
            blocks.push_back(block_from_json(j));
        } catch (const Error& e) {
            throw ChainParseError("line " + std::to_string(line_no) + ": " + e.what(), index);
        }
    }
    if (blocks.empty()) throw ChainParseError("chain file holds no blocks", std::nullopt);
    return Chain(authority, std::move(blocks));
}

std::optional<std::size_t> torn_tail_offset(std::string_view text) {
    if (text.empty() || text.back() == '\n') return std::nullopt;
    auto nl = text.rfind('\n');
    return nl == std::string_view::npos ? 0 : nl + 1;
}

}  // namespace procurechain
