#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "procurechain/accounts.hpp"
#include "procurechain/crypto.hpp"
#include "procurechain/encoding.hpp"

namespace procurechain {

enum class PostStatus { open, closed_awarded, closed_failed, contracted };
enum class ContractStatus { pending, executed };

std::string_view to_string(PostStatus status) noexcept;
std::optional<PostStatus> post_status_from_string(std::string_view text) noexcept;
std::string_view to_string(ContractStatus status) noexcept;

struct AuctionResult {
    std::string post_id;
    bool awarded = false;
    std::string winning_bid;  // empty when the auction failed
    std::vector<std::string> ranking;
    TimestampMs declared_at = 0;
};

struct ProcurementPost {
    std::string id;
    PublicKey procurer;
    Hash256 post_hash;  // commitment to the full post document
    Hash256 spec_hash;
    TimestampMs opens_at = 0;
    TimestampMs closes_at = 0;
    TokenAmount deposit;
    PostStatus status = PostStatus::open;
    Hash256 chain_tx;
    std::map<PublicKey, std::string> live_bids;  // bidder -> bid id
    std::optional<AuctionResult> result;
    std::string contract_id;

    bool accepts_bids_at(TimestampMs now) const noexcept {
        return status == PostStatus::open && now >= opens_at && now < closes_at;
    }
};

enum class DepositState { held, refunded };

struct Bid {
    std::string id;
    std::string post_id;
    PublicKey bidder;
    TokenAmount amount;
    TokenAmount deposit;
    std::uint64_t ledger_seq = 0;
    Hash256 deposit_tx;
    Signature signature;
    bool live = true;  // false once replaced by a newer bid from the same bidder
    DepositState deposit_state = DepositState::held;
};

struct MultisigContract {
    static constexpr std::size_t kThreshold = 2;

    std::string id;
    std::string post_id;
    std::array<PublicKey, 2> required;  // procurer, winner
    Hash256 document_hash;
    std::map<PublicKey, Signature> signatures;
    ContractStatus status = ContractStatus::pending;
    std::optional<Hash256> notarization_tx;

    bool is_required(const PublicKey& key) const noexcept { return key == required[0] || key == required[1]; }
};

// Off-chain body of a post; its digest is the post_hash committed on chain.
struct PostDocument {
    std::string procurer_id;
    std::string title;
    std::string specification;
    TimestampMs opens_at = 0;
    TimestampMs closes_at = 0;
    TokenAmount deposit;

    Json to_json() const;
    static PostDocument from_json(const Json& j);
    Hash256 hash() const { return digest(canonical_json(to_json())); }
    Hash256 spec_hash() const { return digest(specification); }
};

// Ascending by (amount, ledger_seq). Total and deterministic since ledger_seq is unique.
bool ranks_before(const Bid& a, const Bid& b) noexcept;
std::vector<Bid> rank_live_bids(const ProcurementPost& post, const std::map<std::string, Bid>& bids);

// The byte sequence both contract parties sign (through its digest).
Json contract_document(std::string_view post_id, const Hash256& spec_hash, std::string_view procurer_id,
                       std::string_view winner_id, TokenAmount amount, TimestampMs declared_at);

// --- Canonical payloads for client-signed transactions ---

Json transfer_payload(const PublicKey& to, TokenAmount amount);
Json notarization_payload(const Hash256& document_hash);
Json post_payload(const PostDocument& doc);
Json bid_payload(std::string_view post_id, TokenAmount amount, TokenAmount deposit);

// Ids derived from the creating transaction's digest.
std::string short_id(const Hash256& h);

}  // namespace procurechain
