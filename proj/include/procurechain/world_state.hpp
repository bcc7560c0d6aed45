#pragma once

#include <map>
#include <string>
#include <vector>

#include "procurechain/accounts.hpp"
#include "procurechain/ledger.hpp"
#include "procurechain/procurement.hpp"

namespace procurechain {

struct KycEntry {
    std::string account_id;
    PublicKey public_key;
    KycStatus status = KycStatus::none;
    Hash256 document_hash;
    TimestampMs submitted_at = 0;
    std::string reviewer;
    Hash256 chain_tx;  // latest attestation
};

// Everything value-bearing, derived purely by applying chain transactions in
// order. Two states built from the same chain are identical; to_json() is the
// canonical form used for the persisted cache cross-check.
struct WorldState {
    std::map<PublicKey, std::uint64_t> balances;
    std::uint64_t escrow = 0;
    std::uint64_t supply = 0;
    std::uint64_t tx_count = 0;
    std::map<PublicKey, std::uint64_t> nonces;
    std::map<std::string, KycEntry, std::less<>> kyc;
    std::map<std::string, ProcurementPost, std::less<>> posts;
    std::map<std::string, Bid> bids;
    std::map<std::string, MultisigContract, std::less<>> contracts;
    std::map<Hash256, std::vector<Hash256>> notarizations;  // document hash -> tx ids

    TokenAmount balance_of(const PublicKey& key) const;
    std::uint64_t next_nonce(const PublicKey& key) const;
    KycStatus kyc_status(std::string_view account_id) const;
    bool kyc_verified(const PublicKey& key) const;

    const ProcurementPost& post(std::string_view id) const;
    const MultisigContract& contract(std::string_view id) const;
    std::vector<Bid> ranking(std::string_view post_id) const;

    Json to_json() const;
};

struct ApplyContext {
    PublicKey authority;
    bool genesis = false;
};

// Validates then applies one transaction. On any violation it throws Error and
// leaves the state untouched.
void apply_transaction(WorldState& state, const Transaction& tx, const Hash256& tx_id, const ApplyContext& ctx);

// Rebuilds the state from genesis; throws integrity_error naming the height.
WorldState replay_chain(const Chain& chain);

// Contract-event payload builders; the authority signs these.
Json award_event(const ProcurementPost& post, const std::vector<Bid>& ranking, TimestampMs declared_at);
Json contract_created_event(const WorldState& state, const ProcurementPost& post);
Json contract_signature_event(std::string_view contract_id, const PublicKey& signer, const Signature& sig);
Json kyc_attestation(std::string_view account_id, const PublicKey& key, const Hash256& document_hash,
                     KycStatus status, std::string_view reviewer, TimestampMs at);

// Digest of the canonical contract document for an awarded post.
Hash256 contract_document_hash(const WorldState& state, const ProcurementPost& post);

}  // namespace procurechain
