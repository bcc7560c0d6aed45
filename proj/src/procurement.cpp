#include "procurechain/procurement.hpp"

#include <algorithm>

#include "procurechain/error.hpp"

namespace procurechain {

std::string_view to_string(PostStatus status) noexcept {
    switch (status) {
        case PostStatus::open: return "open";
        case PostStatus::closed_awarded: return "closed_awarded";
        case PostStatus::closed_failed: return "closed_failed";
        case PostStatus::contracted: return "contracted";
    }
    return "open";
}

std::optional<PostStatus> post_status_from_string(std::string_view text) noexcept {
    for (auto s : {PostStatus::open, PostStatus::closed_awarded, PostStatus::closed_failed, PostStatus::contracted})
        if (to_string(s) == text) return s;
    return std::nullopt;
}

std::string_view to_string(ContractStatus status) noexcept {
    return status == ContractStatus::pending ? "pending" : "executed";
}

Json PostDocument::to_json() const {
    return {{"closes_at", closes_at},     {"deposit_micro", deposit.micro_units},
            {"opens_at", opens_at},       {"procurer_id", procurer_id},
            {"specification", specification}, {"title", title}};
}

PostDocument PostDocument::from_json(const Json& j) {
    PostDocument d;
    d.closes_at = require_u64(j, "closes_at");
    d.deposit = TokenAmount{require_u64(j, "deposit_micro")};
    d.opens_at = require_u64(j, "opens_at");
    d.procurer_id = require_string(j, "procurer_id");
    d.specification = require_string(j, "specification");
    d.title = require_string(j, "title");
    return d;
}

bool ranks_before(const Bid& a, const Bid& b) noexcept {
    if (a.amount != b.amount) return a.amount < b.amount;
    return a.ledger_seq < b.ledger_seq;
}

std::vector<Bid> rank_live_bids(const ProcurementPost& post, const std::map<std::string, Bid>& bids) {
    std::vector<Bid> out;
    out.reserve(post.live_bids.size());
    for (const auto& [_, bid_id] : post.live_bids) out.push_back(bids.at(bid_id));
    std::sort(out.begin(), out.end(), ranks_before);
    return out;
}

Json contract_document(std::string_view post_id, const Hash256& spec_hash, std::string_view procurer_id,
                       std::string_view winner_id, TokenAmount amount, TimestampMs declared_at) {
    return {{"amount_micro", amount.micro_units},      {"declared_at", declared_at},
            {"post_id", std::string(post_id)},         {"procurer_id", std::string(procurer_id)},
            {"spec_hash", spec_hash.hex()},            {"winner_id", std::string(winner_id)}};
}

Json transfer_payload(const PublicKey& to, TokenAmount amount) {
    return {{"amount_micro", amount.micro_units}, {"to", to.hex()}};
}

Json notarization_payload(const Hash256& document_hash) { return {{"document_hash", document_hash.hex()}}; }

Json post_payload(const PostDocument& doc) {
    return {{"closes_at", doc.closes_at},
            {"deposit_micro", doc.deposit.micro_units},
            {"opens_at", doc.opens_at},
            {"post_hash", doc.hash().hex()},
            {"spec_hash", doc.spec_hash().hex()}};
}

Json bid_payload(std::string_view post_id, TokenAmount amount, TokenAmount deposit) {
    return {{"amount_micro", amount.micro_units}, {"deposit_micro", deposit.micro_units},
            {"post_id", std::string(post_id)}};
}

std::string short_id(const Hash256& h) { return h.hex().substr(0, 16); }

}  // namespace procurechain
