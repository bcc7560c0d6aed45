#include "procurechain/world_state.hpp"

#include <algorithm>

#include "procurechain/error.hpp"

namespace procurechain {

namespace {

template <typename T>
T hex_field(const Json& obj, std::string_view key) {
    auto v = T::from_hex(require_string(obj, key));
    if (!v) throw Error(ErrorCode::bad_request, "field '" + std::string(key) + "' is not canonical hex");
    return *v;
}

std::uint64_t checked_add(std::uint64_t a, std::uint64_t b) {
    if (b > UINT64_MAX - a) throw Error(ErrorCode::rejected, "token amount overflows");
    return a + b;
}

Json public_key_list(const std::array<PublicKey, 2>& keys) { return Json::array({keys[0].hex(), keys[1].hex()}); }

// --- per-kind rules; each validates fully before its first mutation ---

void apply_transfer(WorldState& s, const Transaction& tx, const Json& p, const ApplyContext& ctx) {
    require_exact_keys(p, {"amount_micro", "to"});
    const auto amount = require_u64(p, "amount_micro");
    const auto to = hex_field<PublicKey>(p, "to");
    if (to == kMintAddress) throw Error(ErrorCode::rejected, "cannot transfer to the mint address");

    if (tx.signer == kMintAddress) {
        if (!ctx.genesis) throw Error(ErrorCode::rejected, "minting is only possible in genesis");
        auto supply = checked_add(s.supply, amount);
        auto bal = checked_add(s.balance_of(to).micro_units, amount);
        s.supply = supply;
        s.balances[to] = bal;
        return;
    }
    if (amount == 0) throw Error(ErrorCode::rejected, "transfer amount must be positive");
    if (to == tx.signer) throw Error(ErrorCode::rejected, "cannot transfer to self");
    const auto have = s.balance_of(tx.signer).micro_units;
    if (have < amount)
        throw Error(ErrorCode::insufficient_funds, "balance " + TokenAmount{have}.to_string() + " < " +
                                                       TokenAmount{amount}.to_string());
    s.balances[tx.signer] = have - amount;
    s.balances[to] += amount;
}

void apply_notarization(WorldState& s, const Json& p, const Hash256& tx_id) {
    require_exact_keys(p, {"document_hash"});
    s.notarizations[hex_field<Hash256>(p, "document_hash")].push_back(tx_id);
}

void apply_kyc(WorldState& s, const Json& p, const Hash256& tx_id) {
    require_exact_keys(p, {"account_id", "at", "document_hash", "public_key", "reviewer", "status"});
    const auto& account_id = require_string(p, "account_id");
    const auto key = hex_field<PublicKey>(p, "public_key");
    const auto doc = hex_field<Hash256>(p, "document_hash");
    const auto& reviewer = require_string(p, "reviewer");
    const auto at = require_u64(p, "at");
    auto status = kyc_status_from_string(require_string(p, "status"));
    if (!status || *status == KycStatus::none) throw Error(ErrorCode::bad_request, "bad kyc status");
    if (account_id_of(key) != account_id) throw Error(ErrorCode::rejected, "account id does not match public key");

    KycEntry current;
    if (auto it = s.kyc.find(account_id); it != s.kyc.end()) {
        current = it->second;
        if (current.public_key != key) throw Error(ErrorCode::forbidden, "kyc entry belongs to another key");
    }
    if (!kyc_transition_allowed(current.status, *status))
        throw Error(ErrorCode::conflict, "kyc transition " + std::string(to_string(current.status)) + " -> " +
                                             std::string(to_string(*status)) + " not allowed");

    KycEntry next = current;
    next.account_id = account_id;
    next.public_key = key;
    next.status = *status;
    next.chain_tx = tx_id;
    if (*status == KycStatus::pending) {
        if (!reviewer.empty()) throw Error(ErrorCode::rejected, "a submission carries no reviewer");
        next.document_hash = doc;
        next.submitted_at = at;
        next.reviewer.clear();
    } else {
        if (reviewer.empty()) throw Error(ErrorCode::rejected, "a review must name its reviewer");
        if (doc != current.document_hash) throw Error(ErrorCode::rejected, "review names a different document");
        next.reviewer = reviewer;
    }
    s.kyc[account_id] = std::move(next);
}

void apply_post_created(WorldState& s, const Transaction& tx, const Json& p, const Hash256& tx_id) {
    require_exact_keys(p, {"closes_at", "deposit_micro", "opens_at", "post_hash", "spec_hash"});
    ProcurementPost post;
    post.id = short_id(tx_id);
    post.procurer = tx.signer;
    post.post_hash = hex_field<Hash256>(p, "post_hash");
    post.spec_hash = hex_field<Hash256>(p, "spec_hash");
    post.opens_at = require_u64(p, "opens_at");
    post.closes_at = require_u64(p, "closes_at");
    post.deposit = TokenAmount{require_u64(p, "deposit_micro")};
    post.chain_tx = tx_id;

    if (!s.kyc_verified(tx.signer)) throw Error(ErrorCode::forbidden, "procurer KYC is not verified");
    if (post.opens_at >= post.closes_at) throw Error(ErrorCode::rejected, "opens_at must precede closes_at");
    if (s.posts.count(post.id)) throw Error(ErrorCode::conflict, "post id collision");
    s.posts.emplace(post.id, std::move(post));
}

void apply_bid(WorldState& s, const Transaction& tx, const Json& p, const Hash256& tx_id) {
    require_exact_keys(p, {"amount_micro", "deposit_micro", "post_id"});
    const auto& post_id = require_string(p, "post_id");
    const TokenAmount amount{require_u64(p, "amount_micro")};
    const TokenAmount deposit{require_u64(p, "deposit_micro")};

    auto pit = s.posts.find(post_id);
    if (pit == s.posts.end()) throw Error(ErrorCode::not_found, "no post " + post_id);
    ProcurementPost& post = pit->second;
    if (post.status != PostStatus::open) throw Error(ErrorCode::rejected, "post is closed");
    if (tx.signer == post.procurer) throw Error(ErrorCode::rejected, "procurer cannot bid on own post");
    if (!s.kyc_verified(tx.signer)) throw Error(ErrorCode::forbidden, "bidder KYC is not verified");
    if (amount.micro_units == 0) throw Error(ErrorCode::rejected, "bid amount must be positive");
    if (deposit != post.deposit) throw Error(ErrorCode::rejected, "deposit does not match the post's deposit");

    std::string replaced;
    std::uint64_t refund = 0;
    if (auto it = post.live_bids.find(tx.signer); it != post.live_bids.end()) {
        replaced = it->second;
        refund = s.bids.at(replaced).deposit.micro_units;
    }
    const auto available = s.balance_of(tx.signer).micro_units + refund;
    if (available < deposit.micro_units)
        throw Error(ErrorCode::insufficient_funds, "balance cannot cover the bid deposit");

    if (!replaced.empty()) {
        Bid& old = s.bids.at(replaced);
        old.live = false;
        old.deposit_state = DepositState::refunded;
    }
    s.balances[tx.signer] = available - deposit.micro_units;
    s.escrow = s.escrow - refund + deposit.micro_units;

    Bid bid;
    bid.id = short_id(tx_id);
    bid.post_id = post_id;
    bid.bidder = tx.signer;
    bid.amount = amount;
    bid.deposit = deposit;
    bid.ledger_seq = s.tx_count;
    bid.deposit_tx = tx_id;
    bid.signature = tx.signature;
    post.live_bids[tx.signer] = bid.id;
    s.bids.emplace(bid.id, std::move(bid));
}

void refund(WorldState& s, Bid& bid) {
    bid.deposit_state = DepositState::refunded;
    s.escrow -= bid.deposit.micro_units;
    s.balances[bid.bidder] += bid.deposit.micro_units;
}

void apply_award(WorldState& s, const Json& p) {
    require_exact_keys(p, {"declared_at", "event", "outcome", "post_id", "winning_bid"});
    const auto& post_id = require_string(p, "post_id");
    const auto& outcome = require_string(p, "outcome");
    const auto& winning = require_string(p, "winning_bid");
    const auto declared_at = require_u64(p, "declared_at");

    auto pit = s.posts.find(post_id);
    if (pit == s.posts.end()) throw Error(ErrorCode::not_found, "no post " + post_id);
    ProcurementPost& post = pit->second;
    if (post.status != PostStatus::open) throw Error(ErrorCode::conflict, "post already closed");
    if (declared_at < post.closes_at) throw Error(ErrorCode::rejected, "auction declared before closes_at");

    auto ranking = rank_live_bids(post, s.bids);
    const bool awarded = !ranking.empty();
    if (outcome != (awarded ? "awarded" : "failed")) throw Error(ErrorCode::rejected, "award outcome disagrees with bids");
    if (winning != (awarded ? ranking.front().id : std::string{}))
        throw Error(ErrorCode::rejected, "declared winner is not the lowest bid");

    AuctionResult result;
    result.post_id = post_id;
    result.awarded = awarded;
    result.winning_bid = winning;
    result.declared_at = declared_at;
    for (std::size_t i = 0; i < ranking.size(); ++i) {
        result.ranking.push_back(ranking[i].id);
        if (i > 0) refund(s, s.bids.at(ranking[i].id));
    }
    post.status = awarded ? PostStatus::closed_awarded : PostStatus::closed_failed;
    post.result = std::move(result);
}

void apply_contract_created(WorldState& s, const Json& p) {
    require_exact_keys(p, {"contract_id", "document_hash", "event", "post_id", "signers"});
    const auto& post_id = require_string(p, "post_id");
    auto pit = s.posts.find(post_id);
    if (pit == s.posts.end()) throw Error(ErrorCode::not_found, "no post " + post_id);
    ProcurementPost& post = pit->second;
    if (post.status != PostStatus::closed_awarded) throw Error(ErrorCode::rejected, "post was not awarded");
    if (!post.contract_id.empty()) throw Error(ErrorCode::conflict, "post already has a contract");

    const auto doc = hex_field<Hash256>(p, "document_hash");
    if (doc != contract_document_hash(s, post)) throw Error(ErrorCode::rejected, "contract document hash mismatch");
    const auto& contract_id = require_string(p, "contract_id");
    if (contract_id != short_id(doc)) throw Error(ErrorCode::rejected, "contract id mismatch");

    MultisigContract c;
    c.id = contract_id;
    c.post_id = post_id;
    c.required = {post.procurer, s.bids.at(post.result->winning_bid).bidder};
    c.document_hash = doc;
    if (require_array(p, "signers") != public_key_list(c.required))
        throw Error(ErrorCode::rejected, "contract signers must be procurer and winner");
    if (s.contracts.count(contract_id)) throw Error(ErrorCode::conflict, "contract id collision");

    post.contract_id = contract_id;
    s.contracts.emplace(contract_id, std::move(c));
}

void apply_contract_signature(WorldState& s, const Json& p, const Hash256& tx_id) {
    require_exact_keys(p, {"contract_id", "event", "signature", "signer"});
    const auto& contract_id = require_string(p, "contract_id");
    const auto signer = hex_field<PublicKey>(p, "signer");
    const auto sig = hex_field<Signature>(p, "signature");

    auto cit = s.contracts.find(contract_id);
    if (cit == s.contracts.end()) throw Error(ErrorCode::not_found, "no contract " + contract_id);
    MultisigContract& c = cit->second;
    if (c.status == ContractStatus::executed) throw Error(ErrorCode::conflict, "contract already executed");
    if (!c.is_required(signer)) throw Error(ErrorCode::forbidden, "signer is not a party to this contract");
    if (c.signatures.count(signer)) throw Error(ErrorCode::conflict, "party has already signed");
    if (!verify(c.document_hash.view(), sig, signer))
        throw Error(ErrorCode::invalid_signature, "contract signature does not verify");

    c.signatures.emplace(signer, sig);
    if (c.signatures.size() < MultisigContract::kThreshold) return;

    c.status = ContractStatus::executed;
    c.notarization_tx = tx_id;
    ProcurementPost& post = s.posts.at(c.post_id);
    post.status = PostStatus::contracted;
    refund(s, s.bids.at(post.result->winning_bid));
}

void apply_contract_event(WorldState& s, const Json& p, const Hash256& tx_id) {
    const auto& event = require_string(p, "event");
    if (event == "award")
        apply_award(s, p);
    else if (event == "contract_created")
        apply_contract_created(s, p);
    else if (event == "signature")
        apply_contract_signature(s, p, tx_id);
    else
        throw Error(ErrorCode::bad_request, "unknown contract event '" + event + "'");
}

}  // namespace

TokenAmount WorldState::balance_of(const PublicKey& key) const {
    auto it = balances.find(key);
    return TokenAmount{it == balances.end() ? 0 : it->second};
}

std::uint64_t WorldState::next_nonce(const PublicKey& key) const {
    auto it = nonces.find(key);
    return (it == nonces.end() ? 0 : it->second) + 1;
}

KycStatus WorldState::kyc_status(std::string_view account_id) const {
    auto it = kyc.find(account_id);
    return it == kyc.end() ? KycStatus::none : it->second.status;
}

bool WorldState::kyc_verified(const PublicKey& key) const {
    auto it = kyc.find(account_id_of(key));
    return it != kyc.end() && it->second.public_key == key && it->second.status == KycStatus::verified;
}

const ProcurementPost& WorldState::post(std::string_view id) const {
    auto it = posts.find(id);
    if (it == posts.end()) throw Error(ErrorCode::not_found, "no post " + std::string(id));
    return it->second;
}

const MultisigContract& WorldState::contract(std::string_view id) const {
    auto it = contracts.find(id);
    if (it == contracts.end()) throw Error(ErrorCode::not_found, "no contract " + std::string(id));
    return it->second;
}

std::vector<Bid> WorldState::ranking(std::string_view post_id) const { return rank_live_bids(post(post_id), bids); }

Json WorldState::to_json() const {
    Json j;
    Json bal = Json::object();
    for (const auto& [k, v] : balances) bal[k.hex()] = v;
    Json non = Json::object();
    for (const auto& [k, v] : nonces) non[k.hex()] = v;

    Json kj = Json::object();
    for (const auto& [id, e] : kyc)
        kj[id] = {{"chain_tx", e.chain_tx.hex()},       {"document_hash", e.document_hash.hex()},
                  {"public_key", e.public_key.hex()},   {"reviewer", e.reviewer},
                  {"status", std::string(to_string(e.status))}, {"submitted_at", e.submitted_at}};

    Json pj = Json::object();
    for (const auto& [id, p] : posts) {
        Json live = Json::object();
        for (const auto& [bidder, bid] : p.live_bids) live[bidder.hex()] = bid;
        Json result = nullptr;
        if (p.result)
            result = {{"awarded", p.result->awarded},
                      {"declared_at", p.result->declared_at},
                      {"ranking", p.result->ranking},
                      {"winning_bid", p.result->winning_bid}};
        pj[id] = {{"chain_tx", p.chain_tx.hex()},   {"closes_at", p.closes_at},
                  {"contract_id", p.contract_id},   {"deposit_micro", p.deposit.micro_units},
                  {"live_bids", live},              {"opens_at", p.opens_at},
                  {"post_hash", p.post_hash.hex()}, {"procurer", p.procurer.hex()},
                  {"result", result},               {"spec_hash", p.spec_hash.hex()},
                  {"status", std::string(to_string(p.status))}};
    }

    Json bj = Json::object();
    for (const auto& [id, b] : bids)
        bj[id] = {{"amount_micro", b.amount.micro_units},
                  {"bidder", b.bidder.hex()},
                  {"deposit_micro", b.deposit.micro_units},
                  {"deposit_state", b.deposit_state == DepositState::held ? "held" : "refunded"},
                  {"deposit_tx", b.deposit_tx.hex()},
                  {"ledger_seq", b.ledger_seq},
                  {"live", b.live},
                  {"post_id", b.post_id},
                  {"signature", b.signature.hex()}};

    Json cj = Json::object();
    for (const auto& [id, c] : contracts) {
        Json sigs = Json::object();
        for (const auto& [k, sig] : c.signatures) sigs[k.hex()] = sig.hex();
        cj[id] = {{"document_hash", c.document_hash.hex()},
                  {"notarization_tx", c.notarization_tx ? Json(c.notarization_tx->hex()) : Json(nullptr)},
                  {"post_id", c.post_id},
                  {"required", public_key_list(c.required)},
                  {"signatures", sigs},
                  {"status", std::string(to_string(c.status))}};
    }

    Json nj = Json::object();
    for (const auto& [doc, ids] : notarizations) {
        Json arr = Json::array();
        for (const auto& id : ids) arr.push_back(id.hex());
        nj[doc.hex()] = arr;
    }

    j["balances"] = bal;
    j["bids"] = bj;
    j["contracts"] = cj;
    j["escrow"] = escrow;
    j["kyc"] = kj;
    j["nonces"] = non;
    j["notarizations"] = nj;
    j["posts"] = pj;
    j["supply"] = supply;
    j["tx_count"] = tx_count;
    return j;
}

void apply_transaction(WorldState& state, const Transaction& tx, const Hash256& tx_id, const ApplyContext& ctx) {
    if (ctx.genesis) {
        if (tx.signer != kMintAddress || tx.kind != TxKind::token_transfer)
            throw Error(ErrorCode::rejected, "genesis only carries mints");
    } else {
        if (tx.signer == kMintAddress) throw Error(ErrorCode::rejected, "mint address may only sign genesis");
        if (authority_only(tx.kind) && tx.signer != ctx.authority)
            throw Error(ErrorCode::forbidden, std::string(kind_name(tx.kind)) + " must be signed by the authority");
        if (!verify(tx.signing_bytes(), tx.signature, tx.signer))
            throw Error(ErrorCode::invalid_signature, "transaction signature does not verify");
    }
    const auto expected = state.next_nonce(tx.signer);
    if (tx.nonce != expected)
        throw Error(ErrorCode::nonce_mismatch,
                    "expected nonce " + std::to_string(expected) + ", got " + std::to_string(tx.nonce));

    const Json p = tx.payload_json();
    switch (tx.kind) {
        case TxKind::token_transfer: apply_transfer(state, tx, p, ctx); break;
        case TxKind::notarization: apply_notarization(state, p, tx_id); break;
        case TxKind::kyc_attestation: apply_kyc(state, p, tx_id); break;
        case TxKind::post_created: apply_post_created(state, tx, p, tx_id); break;
        case TxKind::bid_commit: apply_bid(state, tx, p, tx_id); break;
        case TxKind::contract_event: apply_contract_event(state, p, tx_id); break;
    }
    state.nonces[tx.signer] = tx.nonce;
    ++state.tx_count;
}

WorldState replay_chain(const Chain& chain) {
    WorldState state;
    for (const auto& block : chain.blocks()) {
        ApplyContext ctx{chain.authority(), block.height == 0};
        for (std::size_t i = 0; i < block.transactions.size(); ++i) {
            const auto& tx = block.transactions[i];
            try {
                apply_transaction(state, tx, tx.id(), ctx);
            } catch (const Error& e) {
                throw Error(ErrorCode::integrity_error, "replay failed at height " + std::to_string(block.height) +
                                                            " tx #" + std::to_string(i) + ": " + e.what());
            }
        }
    }
    return state;
}

Json award_event(const ProcurementPost& post, const std::vector<Bid>& ranking, TimestampMs declared_at) {
    return {{"declared_at", declared_at},
            {"event", "award"},
            {"outcome", ranking.empty() ? "failed" : "awarded"},
            {"post_id", post.id},
            {"winning_bid", ranking.empty() ? std::string{} : ranking.front().id}};
}

Hash256 contract_document_hash(const WorldState& state, const ProcurementPost& post) {
    if (!post.result || !post.result->awarded) throw Error(ErrorCode::rejected, "post was not awarded");
    const Bid& winner = state.bids.at(post.result->winning_bid);
    Json doc = contract_document(post.id, post.spec_hash, account_id_of(post.procurer), account_id_of(winner.bidder),
                                 winner.amount, post.result->declared_at);
    return digest(canonical_json(doc));
}

Json contract_created_event(const WorldState& state, const ProcurementPost& post) {
    const Hash256 doc = contract_document_hash(state, post);
    const Bid& winner = state.bids.at(post.result->winning_bid);
    return {{"contract_id", short_id(doc)},
            {"document_hash", doc.hex()},
            {"event", "contract_created"},
            {"post_id", post.id},
            {"signers", public_key_list({post.procurer, winner.bidder})}};
}

Json contract_signature_event(std::string_view contract_id, const PublicKey& signer, const Signature& sig) {
    return {{"contract_id", std::string(contract_id)},
            {"event", "signature"},
            {"signature", sig.hex()},
            {"signer", signer.hex()}};
}

Json kyc_attestation(std::string_view account_id, const PublicKey& key, const Hash256& document_hash,
                     KycStatus status, std::string_view reviewer, TimestampMs at) {
    return {{"account_id", std::string(account_id)},
            {"at", at},
            {"document_hash", document_hash.hex()},
            {"public_key", key.hex()},
            {"reviewer", std::string(reviewer)},
            {"status", std::string(to_string(status))}};
}

}  // namespace procurechain
