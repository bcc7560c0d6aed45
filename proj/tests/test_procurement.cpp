#include <doctest.h>

#include "support.hpp"

using namespace pc_test;

namespace {

struct Auction {
    Market m;
    Actor procurer = m.user("proc", Role::procurer);
    Actor b1 = m.user("b1", Role::bidder);
    Actor b2 = m.user("b2", Role::bidder);
    Actor b3 = m.user("b3", Role::bidder);
    Actor outsider = m.user("out", Role::bidder);
    std::string post = m.post(procurer, 60'000, TokenAmount::tokens(5));

    Auction() { m.engine->seal(); }

    Engine& e() { return *m.engine; }
    const ProcurementPost post_state() {
        return m.engine->read([&](const EngineView& v) { return v.state.post(post); });
    }
    void close() {
        m.clock.advance(60'000);
        e().close_post(post);
        e().seal();
    }
};

Bid bid(std::string id, std::uint64_t amount, std::uint64_t seq) {
    Bid b;
    b.id = std::move(id);
    b.amount = TokenAmount{amount};
    b.ledger_seq = seq;
    return b;
}

}  // namespace

TEST_CASE("ranking is by amount, then ledger order") {
    CHECK(ranks_before(bid("a", 5, 9), bid("b", 6, 1)));
    CHECK(ranks_before(bid("a", 5, 1), bid("b", 5, 2)));
    CHECK_FALSE(ranks_before(bid("a", 5, 2), bid("b", 5, 1)));
    CHECK_FALSE(ranks_before(bid("a", 5, 1), bid("a", 5, 1)));
}

TEST_CASE("bids: escrow, rebids and rejection rules") {
    Auction a;
    const auto before = a.m.balance(a.b1);
    a.e().place_bid(a.post, a.b1.kp, TokenAmount::tokens(100));
    a.e().seal();
    CHECK(a.m.balance(a.b1).micro_units == before.micro_units - TokenAmount::tokens(5).micro_units);
    CHECK(a.m.committed().escrow == TokenAmount::tokens(5).micro_units);

    // A rebid replaces the live bid; the old deposit comes back, the new one is held.
    const std::string second = a.e().place_bid(a.post, a.b1.kp, TokenAmount::tokens(90));
    a.e().seal();
    WorldState s = a.m.committed();
    CHECK(s.escrow == TokenAmount::tokens(5).micro_units);
    CHECK(a.m.balance(a.b1).micro_units == before.micro_units - TokenAmount::tokens(5).micro_units);
    auto ranking = s.ranking(a.post);
    REQUIRE(ranking.size() == 1);
    CHECK(ranking[0].id == second);
    CHECK(conserved(s));

    CHECK(error_code_of([&] { a.e().place_bid(a.post, a.procurer.kp, TokenAmount::tokens(1)); }) == ErrorCode::rejected);
    CHECK(error_code_of([&] { a.e().place_bid(a.post, a.b2.kp, TokenAmount{0}); }) == ErrorCode::rejected);
    CHECK(error_code_of([&] { a.e().place_bid("0000000000000000", a.b2.kp, TokenAmount{1}); }) == ErrorCode::not_found);

    Actor poor = a.m.user("poor", Role::bidder, 1);
    CHECK(error_code_of([&] { a.e().place_bid(a.post, poor.kp, TokenAmount::tokens(1)); }) == ErrorCode::insufficient_funds);
    Actor unchecked = a.m.user("nokyc", Role::bidder, 100, false);
    CHECK(error_code_of([&] { a.e().place_bid(a.post, unchecked.kp, TokenAmount::tokens(1)); }) == ErrorCode::forbidden);

    // Deposit in the payload must be the post's deposit.
    auto tx = make_transaction(TxKind::bid_commit, bid_payload(a.post, TokenAmount::tokens(1), TokenAmount{1}), a.b2.kp,
                               a.e().next_nonce(a.b2.kp.public_key));
    CHECK(error_code_of([&] { a.e().submit_signed(tx); }) == ErrorCode::rejected);

    a.m.clock.advance(60'000);
    CHECK(error_code_of([&] { a.e().place_bid(a.post, a.b2.kp, TokenAmount::tokens(1)); }) == ErrorCode::rejected);
}

TEST_CASE("bids before the window opens are rejected") {
    Market m;
    Actor p = m.user("p", Role::procurer);
    Actor b = m.user("b", Role::bidder);
    const std::string post =
        m.engine->create_post(p.kp, "Later", "spec", m.clock.now() + 10'000, m.clock.now() + 20'000, TokenAmount{1});
    CHECK(error_code_of([&] { m.engine->place_bid(post, b.kp, TokenAmount{5}); }) == ErrorCode::rejected);
    m.clock.advance(10'000);
    m.engine->place_bid(post, b.kp, TokenAmount{5});
}

TEST_CASE("only KYC-verified procurers create posts, and the post hash commits to the document") {
    Market m;
    Actor bidder = m.user("b", Role::bidder);
    Actor unverified = m.user("p0", Role::procurer, 10, false);
    Actor p = m.user("p", Role::procurer);
    const auto now = m.clock.now();
    CHECK(error_code_of([&] { m.engine->create_post(bidder.kp, "t", "s", now, now + 1, TokenAmount{1}); }) == ErrorCode::forbidden);
    CHECK(error_code_of([&] { m.engine->create_post(unverified.kp, "t", "s", now, now + 1, TokenAmount{1}); }) == ErrorCode::forbidden);
    CHECK(error_code_of([&] { m.engine->create_post(p.kp, "t", "s", now, now, TokenAmount{1}); }) == ErrorCode::rejected);

    const std::string id = m.engine->create_post(p.kp, "Laptops", "Forty laptops, 16 GB RAM", now, now + 1000, TokenAmount{7});
    m.engine->seal();
    m.engine->read([&](const EngineView& v) {
        const auto& post = v.state.post(id);
        const PostDocument& doc = v.post_docs.at(post.post_hash.hex());
        // Recompute the commitment from the stored fields with an independent hash.
        const std::string canonical = canonical_json({{"closes_at", doc.closes_at},
                                                      {"deposit_micro", doc.deposit.micro_units},
                                                      {"opens_at", doc.opens_at},
                                                      {"procurer_id", doc.procurer_id},
                                                      {"specification", doc.specification},
                                                      {"title", doc.title}});
        CHECK(openssl_sha256(to_bytes(canonical)) == post.post_hash);
        CHECK(openssl_sha256(to_bytes(doc.specification)) == post.spec_hash);
        CHECK(doc.title == "Laptops");
        CHECK(v.chain.find(post.chain_tx));
    });

    // A document that does not match the signed payload is refused.
    PostDocument doc{p.id, "A", "B", now, now + 10, TokenAmount{1}};
    auto tx = make_transaction(TxKind::post_created, post_payload(doc), p.kp, m.engine->next_nonce(p.kp.public_key));
    PostDocument altered = doc;
    altered.title = "Changed";
    CHECK(error_code_of([&] { m.engine->submit_signed(tx, altered); }) == ErrorCode::bad_request);
    CHECK(error_code_of([&] { m.engine->submit_signed(tx); }) == ErrorCode::bad_request);
}

TEST_CASE("closing: premature, failed and awarded auctions") {
    Auction a;
    CHECK(error_code_of([&] { a.e().close_post(a.post); }) == ErrorCode::rejected);

    SUBCASE("no bids fails the auction") {
        a.close();
        CHECK(a.post_state().status == PostStatus::closed_failed);
        CHECK(error_code_of([&] { a.e().create_contract(a.post); }) == ErrorCode::rejected);
        CHECK(error_code_of([&] { a.e().close_post(a.post); }) == ErrorCode::conflict);
    }
    SUBCASE("lowest bid wins, ties go to the earlier bid") {
        a.e().place_bid(a.post, a.b1.kp, TokenAmount::tokens(80));
        const std::string early = a.e().place_bid(a.post, a.b2.kp, TokenAmount::tokens(70));
        a.e().place_bid(a.post, a.b3.kp, TokenAmount::tokens(70));
        a.close();
        auto post = a.post_state();
        CHECK(post.status == PostStatus::closed_awarded);
        CHECK(post.result->winning_bid == early);
        CHECK(post.result->ranking.size() == 3);
    }
}

TEST_CASE("losers are refunded at close, the winner at execution, each exactly once") {
    Auction a;
    const std::uint64_t deposit = TokenAmount::tokens(5).micro_units;
    const auto start1 = a.m.balance(a.b1), start2 = a.m.balance(a.b2), start3 = a.m.balance(a.b3);
    a.e().place_bid(a.post, a.b1.kp, TokenAmount::tokens(50));
    a.e().place_bid(a.post, a.b2.kp, TokenAmount::tokens(60));
    a.e().place_bid(a.post, a.b3.kp, TokenAmount::tokens(70));
    a.e().place_bid(a.post, a.b3.kp, TokenAmount::tokens(65));  // rebid
    a.close();
    const std::string cid = a.e().create_contract(a.post);
    a.e().seal();

    WorldState s = a.m.committed();
    CHECK(s.escrow == deposit);
    CHECK(a.m.balance(a.b1).micro_units == start1.micro_units - deposit);
    CHECK(a.m.balance(a.b2) == start2);
    CHECK(a.m.balance(a.b3) == start3);
    CHECK(conserved(s));

    a.e().sign_contract(cid, a.procurer.kp);
    a.e().sign_contract(cid, a.b1.kp);
    a.e().seal();
    s = a.m.committed();
    CHECK(s.escrow == 0);
    CHECK(a.m.balance(a.b1) == start1);
    for (const auto& [_, b] : s.bids) CHECK(b.deposit_state == DepositState::refunded);
    CHECK(conserved(s));
}

TEST_CASE("2-of-2 contract signing") {
    Auction a;
    a.e().place_bid(a.post, a.b1.kp, TokenAmount::tokens(50));
    a.e().place_bid(a.post, a.b2.kp, TokenAmount::tokens(55));
    a.close();
    const std::string cid = a.e().create_contract(a.post);
    a.e().seal();

    MultisigContract c = a.m.engine->read([&](const EngineView& v) { return v.state.contract(cid); });
    CHECK(c.status == ContractStatus::pending);
    CHECK(c.signatures.empty());
    CHECK(c.required[0] == a.procurer.kp.public_key);
    CHECK(c.required[1] == a.b1.kp.public_key);

    // Independent recomputation of the signed document.
    auto post = a.post_state();
    const std::string doc = canonical_json({{"amount_micro", TokenAmount::tokens(50).micro_units},
                                            {"declared_at", post.result->declared_at},
                                            {"post_id", a.post},
                                            {"procurer_id", a.procurer.id},
                                            {"spec_hash", post.spec_hash.hex()},
                                            {"winner_id", a.b1.id}});
    CHECK(openssl_sha256(to_bytes(doc)) == c.document_hash);
    CHECK(cid == c.document_hash.hex().substr(0, 16));
    CHECK(error_code_of([&] { a.e().create_contract(a.post); }) == ErrorCode::conflict);

    CHECK(error_code_of([&] { a.e().sign_contract(cid, a.outsider.kp); }) == ErrorCode::forbidden);
    CHECK(error_code_of([&] { a.e().sign_contract(cid, a.b2.kp); }) == ErrorCode::forbidden);
    const Signature wrong = sign(to_bytes("something else"), a.procurer.kp.secret_key);
    CHECK(error_code_of([&] { a.e().sign_contract(cid, a.procurer.kp.public_key, wrong); }) == ErrorCode::invalid_signature);

    a.e().sign_contract(cid, a.procurer.kp);
    CHECK(error_code_of([&] { a.e().sign_contract(cid, a.procurer.kp); }) == ErrorCode::conflict);
    a.e().seal();
    CHECK(a.m.engine->read([&](const EngineView& v) { return v.state.contract(cid).status; }) == ContractStatus::pending);

    const Hash256 final_tx = a.e().sign_contract(cid, a.b1.kp);
    a.e().seal();
    a.m.engine->read([&](const EngineView& v) {
        const auto& done = v.state.contract(cid);
        CHECK(done.status == ContractStatus::executed);
        CHECK(done.notarization_tx == final_tx);
        CHECK(v.chain.find(final_tx));
        CHECK(verify_inclusion(prove_inclusion(v.chain, final_tx), v.chain.tip().tx_root));
        CHECK(v.state.post(a.post).status == PostStatus::contracted);
        for (const auto& [key, sig] : done.signatures) CHECK(verify(done.document_hash.view(), sig, key));
    });
    CHECK(error_code_of([&] { a.e().sign_contract(cid, a.b1.kp); }) == ErrorCode::conflict);
}

TEST_CASE("transfers") {
    Market m;
    Actor a = m.user("a", Role::bidder, 10);
    Actor b = m.user("b", Role::bidder, 0);
    m.engine->transfer(a.kp, b.id, TokenAmount::tokens(4));
    m.engine->seal();
    CHECK(m.balance(a) == TokenAmount::tokens(6));
    CHECK(m.balance(b) == TokenAmount::tokens(4));
    CHECK(error_code_of([&] { m.engine->transfer(a.kp, b.id, TokenAmount::tokens(7)); }) == ErrorCode::insufficient_funds);
    CHECK(error_code_of([&] { m.engine->transfer(a.kp, a.id, TokenAmount::tokens(1)); }) == ErrorCode::rejected);
    CHECK(error_code_of([&] { m.engine->transfer(a.kp, "ffffffffffffffff", TokenAmount::tokens(1)); }) == ErrorCode::not_found);
    CHECK(error_code_of([&] { m.engine->transfer(a.kp, b.id, TokenAmount{0}); }) == ErrorCode::rejected);
    CHECK(conserved(m.committed()));
}

TEST_CASE("clients cannot submit authority-only kinds or replay transactions") {
    Market m;
    Actor a = m.user("a", Role::bidder, 10);
    Actor b = m.user("b", Role::bidder, 0);
    auto forged = make_transaction(TxKind::kyc_attestation,
                                   kyc_attestation(a.id, a.kp.public_key, digest("x"), KycStatus::verified, "me", 0),
                                   a.kp, m.engine->next_nonce(a.kp.public_key));
    CHECK(error_code_of([&] { m.engine->submit_signed(forged); }) == ErrorCode::forbidden);

    auto tx = make_transaction(TxKind::token_transfer, transfer_payload(b.kp.public_key, TokenAmount{1}), a.kp,
                               m.engine->next_nonce(a.kp.public_key));
    m.engine->submit_signed(tx);
    CHECK(error_code_of([&] { m.engine->submit_signed(tx); }) == ErrorCode::nonce_mismatch);
    m.engine->seal();
    CHECK(error_code_of([&] { m.engine->submit_signed(tx); }) == ErrorCode::nonce_mismatch);

    Transaction tampered = make_transaction(TxKind::token_transfer, transfer_payload(b.kp.public_key, TokenAmount{1}),
                                            a.kp, m.engine->next_nonce(a.kp.public_key));
    tampered.payload = canonical_json(transfer_payload(b.kp.public_key, TokenAmount{2}));
    CHECK(error_code_of([&] { m.engine->submit_signed(tampered); }) == ErrorCode::invalid_signature);
}

TEST_CASE("tick closes due posts, opens contracts and seals after the block interval") {
    EngineOptions options;
    options.block_interval = std::chrono::milliseconds(2000);
    Market m(options);
    Actor p = m.user("p", Role::procurer);
    Actor b = m.user("b", Role::bidder);
    const std::string post = m.post(p, 5000);
    m.engine->place_bid(post, b.kp, TokenAmount::tokens(3));
    m.engine->seal();

    m.clock.advance(1000);
    m.engine->tick();
    CHECK(m.engine->pending_count() == 0);
    m.clock.advance(4000);
    m.engine->tick();
    CHECK(m.engine->pending_count() == 2);  // award + contract_created, not yet sealed
    m.clock.advance(1999);
    m.engine->tick();
    CHECK(m.engine->pending_count() == 2);
    m.clock.advance(1);
    m.engine->tick();
    CHECK(m.engine->pending_count() == 0);
    m.engine->read([&](const EngineView& v) {
        CHECK(v.state.post(post).status == PostStatus::closed_awarded);
        CHECK_FALSE(v.state.post(post).contract_id.empty());
    });
}

TEST_CASE("a full pending queue seals immediately") {
    EngineOptions options;
    options.max_pending = 5;
    Market m(options);
    Actor a = m.user("a", Role::bidder, 10, false);
    const auto height = m.chain().height();
    for (int i = 0; i < 4; ++i) m.engine->notarize(a.kp, digest(std::to_string(i)));
    CHECK(m.chain().height() > height);
}
