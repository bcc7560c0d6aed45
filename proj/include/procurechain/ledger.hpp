#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "procurechain/crypto.hpp"
#include "procurechain/encoding.hpp"

namespace procurechain {

enum class TxKind {
    token_transfer,
    notarization,
    kyc_attestation,
    post_created,
    bid_commit,
    contract_event,
};

std::string_view kind_name(TxKind kind) noexcept;
std::optional<TxKind> kind_from_name(std::string_view name) noexcept;

// Kinds that only the chain authority may sign.
bool authority_only(TxKind kind) noexcept;

// Reserved signer of the genesis mints. No key can sign for it; genesis mints
// are covered by the authority's seal on block 0.
inline constexpr PublicKey kMintAddress{};

struct Transaction {
    TxKind kind = TxKind::token_transfer;
    std::string payload;  // canonical JSON object text
    PublicKey signer;
    std::uint64_t nonce = 0;
    Signature signature;

    // lp(kind name) || lp(payload) || lp(signer) || be64(nonce); lp = be32 length prefix.
    Bytes signing_bytes() const;
    // digest(signing_bytes || lp(signature)); also the Merkle leaf.
    Hash256 id() const;
    Json payload_json() const;

    friend bool operator==(const Transaction&, const Transaction&) = default;
};

Transaction make_transaction(TxKind kind, const Json& payload, const KeyPair& signer, std::uint64_t nonce);

struct Block {
    std::uint64_t height = 0;
    TimestampMs timestamp = 0;
    Hash256 prev_hash;
    Hash256 tx_root;
    std::vector<Transaction> transactions;
    Signature authority_sig;

    // be64(height) || be64(timestamp) || prev_hash || tx_root
    Bytes header_bytes() const;
    Hash256 header_digest() const;

    friend bool operator==(const Block&, const Block&) = default;
};

// --- Merkle tree (odd levels duplicate their last node) ---

enum class SiblingSide { left, right };

struct MerkleStep {
    Hash256 sibling;
    SiblingSide side = SiblingSide::right;

    friend bool operator==(const MerkleStep&, const MerkleStep&) = default;
};

Hash256 merkle_root(std::span<const Hash256> leaves);
std::vector<MerkleStep> merkle_path(std::span<const Hash256> leaves, std::size_t index);
Hash256 merkle_replay(const Hash256& leaf, std::span<const MerkleStep> path);

struct InclusionProof {
    Hash256 tx_digest;
    std::uint64_t block_height = 0;
    std::vector<MerkleStep> merkle_path;
};

bool verify_inclusion(const InclusionProof& proof, const Hash256& tx_root);
Json to_json(const InclusionProof& proof);
InclusionProof inclusion_proof_from_json(const Json& j);

// --- Chain ---

struct TxLocation {
    std::uint64_t height = 0;
    std::size_t index = 0;
    // Zero-based position of the transaction across the whole chain.
    std::uint64_t sequence = 0;
};

class Chain {
public:
    // Indexes the blocks without validating them; see verify_chain.
    Chain(PublicKey authority, std::vector<Block> blocks);

    const PublicKey& authority() const noexcept { return authority_; }
    const std::vector<Block>& blocks() const noexcept { return blocks_; }
    const Block& tip() const { return blocks_.back(); }
    std::uint64_t height() const noexcept { return blocks_.empty() ? 0 : blocks_.back().height; }
    std::uint64_t tx_count() const noexcept { return tx_count_; }

    std::uint64_t last_nonce(const PublicKey& signer) const;
    std::optional<TxLocation> find(const Hash256& tx_id) const;
    const Transaction& transaction_at(const TxLocation& loc) const;

    void push_block(Block block);

private:
    void index_block(const Block& block);

    PublicKey authority_;
    std::vector<Block> blocks_;
    std::map<PublicKey, std::uint64_t> nonces_;
    std::map<Hash256, TxLocation> tx_index_;
    std::uint64_t tx_count_ = 0;
};

struct Allocation {
    PublicKey account;
    std::uint64_t micro_units = 0;
};

Chain genesis(const KeyPair& authority, const std::vector<Allocation>& allocations, TimestampMs now = 0);

// Validates every transaction (signature, signer class, nonce = previous + 1)
// and the clock, then seals a block that would extend the chain. Throws
// TransactionRejected naming the offending index, or Error(clock_regression /
// forbidden).
Block build_block(const Chain& chain, std::vector<Transaction> txs, TimestampMs now,
                  const SecretKey& authority_secret);

// build_block followed by Chain::push_block.
const Block& append_block(Chain& chain, std::vector<Transaction> txs, TimestampMs now,
                          const SecretKey& authority_secret);

enum class FailureClass { none, hash_link, merkle, authority_sig, tx_sig, nonce, timestamp };

std::string_view failure_class_name(FailureClass cls) noexcept;

struct VerificationReport {
    bool valid = true;
    std::uint64_t failed_height = 0;
    FailureClass failure = FailureClass::none;
    std::string detail;

    Json to_json() const;
};

// Recomputes everything from the raw blocks; never trusts the Chain's cached index.
VerificationReport verify_chain(const Chain& chain);

// Submits a Notarization transaction in a new block; returns its tx id.
Hash256 notarize(Chain& chain, const Hash256& document_hash, const KeyPair& owner, TimestampMs now,
                 const SecretKey& authority_secret);

InclusionProof prove_inclusion(const Chain& chain, const Hash256& tx_id);

}  // namespace procurechain
