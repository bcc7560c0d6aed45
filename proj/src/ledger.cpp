#include "procurechain/ledger.hpp"

#include <algorithm>

#include "procurechain/error.hpp"

namespace procurechain {

namespace {

constexpr std::string_view kKindNames[] = {
    "TokenTransfer", "Notarization", "KycAttestation", "PostCreated", "BidCommit", "ContractEvent",
};

Hash256 hash_pair(const Hash256& left, const Hash256& right) {
    std::array<std::uint8_t, 64> buf;
    std::copy(left.bytes.begin(), left.bytes.end(), buf.begin());
    std::copy(right.bytes.begin(), right.bytes.end(), buf.begin() + 32);
    return digest(buf);
}

std::vector<Hash256> tx_digests(const Block& block) {
    std::vector<Hash256> out;
    out.reserve(block.transactions.size());
    for (const auto& tx : block.transactions) out.push_back(tx.id());
    return out;
}

}  // namespace

std::string_view kind_name(TxKind kind) noexcept { return kKindNames[static_cast<std::size_t>(kind)]; }

std::optional<TxKind> kind_from_name(std::string_view name) noexcept {
    for (std::size_t i = 0; i < std::size(kKindNames); ++i)
        if (kKindNames[i] == name) return static_cast<TxKind>(i);
    return std::nullopt;
}

bool authority_only(TxKind kind) noexcept {
    return kind == TxKind::kyc_attestation || kind == TxKind::contract_event;
}

Bytes Transaction::signing_bytes() const {
    Bytes out;
    out.reserve(payload.size() + 80);
    append_length_prefixed(out, kind_name(kind));
    append_length_prefixed(out, std::string_view(payload));
    append_length_prefixed(out, signer.view());
    append_be64(out, nonce);
    return out;
}

Hash256 Transaction::id() const {
    Bytes buf = signing_bytes();
    append_length_prefixed(buf, signature.view());
    return digest(buf);
}

Json Transaction::payload_json() const {
    Json j = Json::parse(payload, nullptr, false);
    if (j.is_discarded() || !j.is_object())
        throw Error(ErrorCode::parse_error, "transaction payload is not a JSON object");
    return j;
}

Transaction make_transaction(TxKind kind, const Json& payload, const KeyPair& signer, std::uint64_t nonce) {
    Transaction tx;
    tx.kind = kind;
    tx.payload = canonical_json(payload);
    tx.signer = signer.public_key;
    tx.nonce = nonce;
    tx.signature = sign(tx.signing_bytes(), signer.secret_key);
    return tx;
}

Bytes Block::header_bytes() const {
    Bytes out;
    out.reserve(80);
    append_be64(out, height);
    append_be64(out, timestamp);
    out.insert(out.end(), prev_hash.bytes.begin(), prev_hash.bytes.end());
    out.insert(out.end(), tx_root.bytes.begin(), tx_root.bytes.end());
    return out;
}

Hash256 Block::header_digest() const { return digest(header_bytes()); }

Hash256 merkle_root(std::span<const Hash256> leaves) {
    if (leaves.empty()) return Hash256{};
    std::vector<Hash256> level(leaves.begin(), leaves.end());
    while (level.size() > 1) {
        if (level.size() % 2 == 1) level.push_back(level.back());
        std::vector<Hash256> next;
        next.reserve(level.size() / 2);
        for (std::size_t i = 0; i < level.size(); i += 2) next.push_back(hash_pair(level[i], level[i + 1]));
        level = std::move(next);
    }
    return level.front();
}

std::vector<MerkleStep> merkle_path(std::span<const Hash256> leaves, std::size_t index) {
    if (index >= leaves.size()) throw Error(ErrorCode::not_found, "merkle leaf index out of range");
    std::vector<MerkleStep> path;
    std::vector<Hash256> level(leaves.begin(), leaves.end());
    while (level.size() > 1) {
        if (level.size() % 2 == 1) level.push_back(level.back());
        if (index % 2 == 0)
            path.push_back({level[index + 1], SiblingSide::right});
        else
            path.push_back({level[index - 1], SiblingSide::left});
        std::vector<Hash256> next;
        for (std::size_t i = 0; i < level.size(); i += 2) next.push_back(hash_pair(level[i], level[i + 1]));
        level = std::move(next);
        index /= 2;
    }
    return path;
}

Hash256 merkle_replay(const Hash256& leaf, std::span<const MerkleStep> path) {
    Hash256 acc = leaf;
    for (const auto& step : path)
        acc = step.side == SiblingSide::left ? hash_pair(step.sibling, acc) : hash_pair(acc, step.sibling);
    return acc;
}

bool verify_inclusion(const InclusionProof& proof, const Hash256& tx_root) {
    return merkle_replay(proof.tx_digest, proof.merkle_path) == tx_root;
}

Json to_json(const InclusionProof& proof) {
    Json path = Json::array();
    for (const auto& step : proof.merkle_path)
        path.push_back({{"side", step.side == SiblingSide::left ? "left" : "right"},
                        {"sibling", step.sibling.hex()}});
    return {{"block_height", proof.block_height}, {"merkle_path", path}, {"tx_digest", proof.tx_digest.hex()}};
}

InclusionProof inclusion_proof_from_json(const Json& j) {
    InclusionProof proof;
    auto d = Hash256::from_hex(require_string(j, "tx_digest"));
    if (!d) throw Error(ErrorCode::parse_error, "bad tx_digest");
    proof.tx_digest = *d;
    proof.block_height = require_u64(j, "block_height");
    for (const auto& step : require_array(j, "merkle_path")) {
        auto sib = Hash256::from_hex(require_string(step, "sibling"));
        const auto& side = require_string(step, "side");
        if (!sib || (side != "left" && side != "right")) throw Error(ErrorCode::parse_error, "bad merkle step");
        proof.merkle_path.push_back({*sib, side == "left" ? SiblingSide::left : SiblingSide::right});
    }
    return proof;
}

// --- Chain ---

Chain::Chain(PublicKey authority, std::vector<Block> blocks) : authority_(authority) {
    for (auto& b : blocks) push_block(std::move(b));
}

void Chain::push_block(Block block) {
    blocks_.push_back(std::move(block));
    index_block(blocks_.back());
}

void Chain::index_block(const Block& block) {
    for (std::size_t i = 0; i < block.transactions.size(); ++i) {
        const auto& tx = block.transactions[i];
        auto& last = nonces_[tx.signer];
        last = std::max(last, tx.nonce);
        tx_index_.emplace(tx.id(), TxLocation{block.height, i, tx_count_});
        ++tx_count_;
    }
}

std::uint64_t Chain::last_nonce(const PublicKey& signer) const {
    auto it = nonces_.find(signer);
    return it == nonces_.end() ? 0 : it->second;
}

std::optional<TxLocation> Chain::find(const Hash256& tx_id) const {
    auto it = tx_index_.find(tx_id);
    if (it == tx_index_.end()) return std::nullopt;
    return it->second;
}

const Transaction& Chain::transaction_at(const TxLocation& loc) const {
    return blocks_.at(loc.height).transactions.at(loc.index);
}

Chain genesis(const KeyPair& authority, const std::vector<Allocation>& allocations, TimestampMs now) {
    Block block;
    block.height = 0;
    block.timestamp = now;
    std::uint64_t supply = 0;
    std::uint64_t nonce = 0;
    for (const auto& alloc : allocations) {
        if (alloc.account == kMintAddress) throw Error(ErrorCode::rejected, "cannot allocate to the mint address");
        for (const auto& tx : block.transactions) {
            if (tx.payload_json().at("to") == alloc.account.hex())
                throw Error(ErrorCode::conflict, "duplicate genesis allocation for " + alloc.account.hex());
        }
        if (alloc.micro_units > UINT64_MAX - supply) throw Error(ErrorCode::rejected, "genesis supply overflows");
        supply += alloc.micro_units;

        Transaction tx;
        tx.kind = TxKind::token_transfer;
        tx.payload = canonical_json({{"amount_micro", alloc.micro_units}, {"to", alloc.account.hex()}});
        tx.signer = kMintAddress;
        tx.nonce = ++nonce;
        block.transactions.push_back(std::move(tx));
    }
    auto digests = tx_digests(block);
    block.tx_root = merkle_root(digests);
    block.authority_sig = sign(block.header_bytes(), authority.secret_key);
    return Chain(authority.public_key, {std::move(block)});
}

Block build_block(const Chain& chain, std::vector<Transaction> txs, TimestampMs now,
                  const SecretKey& authority_secret) {
    if (chain.blocks().empty()) throw Error(ErrorCode::rejected, "chain has no genesis block");
    if (derive_public_key(authority_secret) != chain.authority())
        throw Error(ErrorCode::forbidden, "sealing key is not the chain authority");
    if (now < chain.tip().timestamp)
        throw Error(ErrorCode::clock_regression, "block timestamp " + std::to_string(now) +
                                                     " precedes tip timestamp " +
                                                     std::to_string(chain.tip().timestamp));

    std::map<PublicKey, std::uint64_t> batch_nonces;
    for (std::size_t i = 0; i < txs.size(); ++i) {
        const auto& tx = txs[i];
        if (tx.signer == kMintAddress)
            throw TransactionRejected(ErrorCode::rejected, i, "mint address may only sign genesis");
        if (authority_only(tx.kind) && tx.signer != chain.authority())
            throw TransactionRejected(ErrorCode::forbidden, i,
                                      std::string(kind_name(tx.kind)) + " must be signed by the authority");
        if (!verify(tx.signing_bytes(), tx.signature, tx.signer))
            throw TransactionRejected(ErrorCode::invalid_signature, i, "signature does not verify");
        auto it = batch_nonces.find(tx.signer);
        std::uint64_t prev = it != batch_nonces.end() ? it->second : chain.last_nonce(tx.signer);
        if (tx.nonce != prev + 1)
            throw TransactionRejected(ErrorCode::nonce_mismatch, i,
                                      "expected nonce " + std::to_string(prev + 1) + ", got " +
                                          std::to_string(tx.nonce));
        batch_nonces[tx.signer] = tx.nonce;
    }

    Block block;
    block.height = chain.height() + 1;
    block.timestamp = now;
    block.prev_hash = chain.tip().header_digest();
    block.transactions = std::move(txs);
    auto digests = tx_digests(block);
    block.tx_root = merkle_root(digests);
    block.authority_sig = sign(block.header_bytes(), authority_secret);
    return block;
}

const Block& append_block(Chain& chain, std::vector<Transaction> txs, TimestampMs now,
                          const SecretKey& authority_secret) {
    chain.push_block(build_block(chain, std::move(txs), now, authority_secret));
    return chain.tip();
}

std::string_view failure_class_name(FailureClass cls) noexcept {
    switch (cls) {
        case FailureClass::none: return "none";
        case FailureClass::hash_link: return "hash-link";
        case FailureClass::merkle: return "merkle";
        case FailureClass::authority_sig: return "authority-sig";
        case FailureClass::tx_sig: return "tx-sig";
        case FailureClass::nonce: return "nonce";
        case FailureClass::timestamp: return "timestamp";
    }
    return "none";
}

Json VerificationReport::to_json() const {
    if (valid) return {{"valid", true}};
    return {{"valid", false},
            {"failed_height", failed_height},
            {"failure", std::string(failure_class_name(failure))},
            {"detail", detail}};
}

VerificationReport verify_chain(const Chain& chain) {
    auto fail = [](std::uint64_t height, FailureClass cls, std::string detail) {
        return VerificationReport{false, height, cls, std::move(detail)};
    };

    const auto& blocks = chain.blocks();
    if (blocks.empty()) return fail(0, FailureClass::hash_link, "chain has no genesis block");

    std::map<PublicKey, std::uint64_t> nonces;
    Hash256 prev_digest{};
    TimestampMs prev_ts = 0;

    for (std::size_t pos = 0; pos < blocks.size(); ++pos) {
        const Block& b = blocks[pos];
        const std::uint64_t h = pos;

        if (b.height != h) return fail(h, FailureClass::hash_link, "block height field does not match position");
        if (b.prev_hash != prev_digest) return fail(h, FailureClass::hash_link, "prev_hash does not link the previous header");
        if (!verify(b.header_bytes(), b.authority_sig, chain.authority()))
            return fail(h, FailureClass::authority_sig, "authority signature does not verify");
        auto digests = tx_digests(b);
        if (merkle_root(digests) != b.tx_root) return fail(h, FailureClass::merkle, "tx_root does not match transactions");
        if (pos > 0 && b.timestamp < prev_ts) return fail(h, FailureClass::timestamp, "timestamp regresses");

        for (std::size_t i = 0; i < b.transactions.size(); ++i) {
            const auto& tx = b.transactions[i];
            const std::string where = " (tx #" + std::to_string(i) + ")";
            if (h == 0) {
                if (tx.signer != kMintAddress || tx.kind != TxKind::token_transfer || !tx.signature.is_zero())
                    return fail(h, FailureClass::tx_sig, "genesis may only carry unsigned mints" + where);
            } else {
                if (tx.signer == kMintAddress)
                    return fail(h, FailureClass::tx_sig, "mint address outside genesis" + where);
                if (authority_only(tx.kind) && tx.signer != chain.authority())
                    return fail(h, FailureClass::tx_sig, "authority-only kind signed by another key" + where);
                if (!verify(tx.signing_bytes(), tx.signature, tx.signer))
                    return fail(h, FailureClass::tx_sig, "transaction signature does not verify" + where);
            }
            auto& last = nonces[tx.signer];
            if (tx.nonce != last + 1)
                return fail(h, FailureClass::nonce,
                            "nonce " + std::to_string(tx.nonce) + " after " + std::to_string(last) + where);
            last = tx.nonce;
        }

        prev_digest = b.header_digest();
        prev_ts = b.timestamp;
    }
    return {};
}

Hash256 notarize(Chain& chain, const Hash256& document_hash, const KeyPair& owner, TimestampMs now,
                 const SecretKey& authority_secret) {
    auto tx = make_transaction(TxKind::notarization, {{"document_hash", document_hash.hex()}}, owner,
                               chain.last_nonce(owner.public_key) + 1);
    Hash256 id = tx.id();
    append_block(chain, {std::move(tx)}, now, authority_secret);
    return id;
}

InclusionProof prove_inclusion(const Chain& chain, const Hash256& tx_id) {
    auto loc = chain.find(tx_id);
    if (!loc) throw Error(ErrorCode::not_found, "transaction " + tx_id.hex() + " is not on the chain");
    const Block& block = chain.blocks().at(loc->height);
    auto digests = tx_digests(block);
    return InclusionProof{tx_id, block.height, merkle_path(digests, loc->index)};
}

}  // namespace procurechain
