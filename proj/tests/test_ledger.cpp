#include <doctest.h>

#include "procurechain/chain_file.hpp"
#include "support.hpp"

using namespace pc_test;

namespace {

// Textbook recursive Merkle root over OpenSSL SHA-256, duplicating the last
// node of odd levels; the oracle for merkle_root.
Hash256 oracle_root(std::vector<Hash256> level) {
    if (level.empty()) return Hash256{};
    if (level.size() == 1) return level[0];
    if (level.size() % 2) level.push_back(level.back());
    std::vector<Hash256> next;
    for (std::size_t i = 0; i < level.size(); i += 2) {
        Bytes buf(level[i].bytes.begin(), level[i].bytes.end());
        buf.insert(buf.end(), level[i + 1].bytes.begin(), level[i + 1].bytes.end());
        next.push_back(openssl_sha256(buf));
    }
    return oracle_root(next);
}

std::vector<Hash256> leaves(std::size_t n) {
    std::vector<Hash256> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(digest("leaf " + std::to_string(i)));
    return out;
}

Block resign(Block b, const KeyPair& authority) {
    b.authority_sig = sign(b.header_bytes(), authority.secret_key);
    return b;
}

Hash256 root_of(const Block& b) {
    std::vector<Hash256> ids;
    for (const auto& tx : b.transactions) ids.push_back(tx.id());
    return merkle_root(ids);
}

struct SmallChain {
    KeyPair authority = generate_keypair();
    KeyPair alice = generate_keypair();
    KeyPair bob = generate_keypair();
    Chain chain = genesis(authority, {{alice.public_key, 1'000'000}, {bob.public_key, 500}}, 1000);

    SmallChain() {
        for (int h = 1; h <= 4; ++h) {
            std::vector<Transaction> txs;
            for (int i = 0; i < h; ++i) {
                txs.push_back(make_transaction(TxKind::notarization, notarization_payload(digest(std::to_string(h * 10 + i))),
                                               alice, chain.last_nonce(alice.public_key) + 1 + i));
            }
            append_block(chain, txs, 1000 + h * 10, authority.secret_key);
        }
    }

    Chain with(std::size_t height, const Block& b) const {
        auto blocks = chain.blocks();
        blocks[height] = b;
        return Chain(chain.authority(), blocks);
    }
};

}  // namespace

TEST_CASE("merkle root matches brute-force oracle") {
    for (std::size_t n = 0; n <= 17; ++n) CHECK(merkle_root(leaves(n)) == oracle_root(leaves(n)));
    auto seven = leaves(7);
    CHECK(merkle_root(seven) == oracle_root(seven));
}

TEST_CASE("every merkle path replays to the root and tampering fails") {
    for (std::size_t n = 1; n <= 16; ++n) {
        auto l = leaves(n);
        const Hash256 root = merkle_root(l);
        for (std::size_t i = 0; i < n; ++i) {
            auto path = merkle_path(l, i);
            CHECK(merkle_replay(l[i], path) == root);
            if (!path.empty()) {
                path[0].sibling.bytes[0] ^= 1;
                CHECK(merkle_replay(l[i], path) != root);
            }
            CHECK(merkle_replay(digest("other"), merkle_path(l, i)) != root);
        }
    }
    CHECK(error_code_of([] { merkle_path(leaves(3), 3); }) == ErrorCode::not_found);
}

TEST_CASE("transaction signing bytes follow the length-prefixed layout") {
    KeyPair kp = generate_keypair();
    Transaction tx = make_transaction(TxKind::token_transfer, transfer_payload(kp.public_key, TokenAmount{5}), kp, 3);

    Bytes expected;
    auto lp = [&](std::string_view s) {
        const auto n = static_cast<std::uint32_t>(s.size());
        for (int shift = 24; shift >= 0; shift -= 8) expected.push_back(static_cast<std::uint8_t>(n >> shift));
        expected.insert(expected.end(), s.begin(), s.end());
    };
    lp("TokenTransfer");
    lp(tx.payload);
    lp(std::string_view(reinterpret_cast<const char*>(kp.public_key.bytes.data()), 32));
    for (int i = 0; i < 7; ++i) expected.push_back(0);
    expected.push_back(3);
    CHECK(tx.signing_bytes() == expected);
    CHECK(verify(expected, tx.signature, kp.public_key));

    Bytes with_sig = expected;
    with_sig.insert(with_sig.end(), {0, 0, 0, 64});
    with_sig.insert(with_sig.end(), tx.signature.bytes.begin(), tx.signature.bytes.end());
    CHECK(tx.id() == openssl_sha256(with_sig));
    CHECK(tx.payload == canonical_json(tx.payload_json()));
}

TEST_CASE("a well-formed chain verifies and inclusion proofs hold") {
    SmallChain s;
    CHECK(s.chain.height() == 4);
    CHECK(s.chain.tx_count() == 2 + 1 + 2 + 3 + 4);
    CHECK(verify_chain(s.chain).valid);
    for (const auto& block : s.chain.blocks()) {
        for (const auto& tx : block.transactions) {
            InclusionProof proof = prove_inclusion(s.chain, tx.id());
            CHECK(proof.block_height == block.height);
            CHECK(verify_inclusion(proof, block.tx_root));
            InclusionProof round = inclusion_proof_from_json(to_json(proof));
            CHECK(verify_inclusion(round, block.tx_root));
            CHECK_FALSE(verify_inclusion(round, digest("not the root")));
        }
    }
    CHECK(error_code_of([&] { prove_inclusion(s.chain, digest("missing")); }) == ErrorCode::not_found);
}

TEST_CASE("verify_chain classifies each failure at the right height") {
    SmallChain s;
    const auto& blocks = s.chain.blocks();

    SUBCASE("hash link") {
        Block b = blocks[3];
        b.prev_hash.bytes[0] ^= 1;
        auto r = verify_chain(s.with(3, resign(b, s.authority)));
        CHECK(r.failure == FailureClass::hash_link);
        CHECK(r.failed_height == 3);
    }
    SUBCASE("authority signature") {
        Block b = blocks[2];
        b.timestamp += 1;
        auto r = verify_chain(s.with(2, b));
        CHECK(r.failure == FailureClass::authority_sig);
        CHECK(r.failed_height == 2);
    }
    SUBCASE("merkle") {
        Block b = blocks[4];
        b.tx_root = digest("wrong");
        auto r = verify_chain(s.with(4, resign(b, s.authority)));
        CHECK(r.failure == FailureClass::merkle);
        CHECK(r.failed_height == 4);
    }
    SUBCASE("transaction signature") {
        Block b = blocks[2];
        b.transactions[1].payload = canonical_json(notarization_payload(digest("forged")));
        b.tx_root = root_of(b);
        auto r = verify_chain(s.with(2, resign(b, s.authority)));
        CHECK(r.failure == FailureClass::tx_sig);
        CHECK(r.failed_height == 2);
    }
    SUBCASE("nonce") {
        Block b = blocks[1];
        b.transactions[0] = make_transaction(TxKind::notarization, notarization_payload(digest("n")), s.alice, 5);
        b.tx_root = root_of(b);
        auto r = verify_chain(s.with(1, resign(b, s.authority)));
        CHECK(r.failure == FailureClass::nonce);
        CHECK(r.failed_height == 1);
    }
    SUBCASE("timestamp") {
        Block b = blocks[1];
        b.timestamp = 10;
        // Re-link the rest so only the regression is wrong.
        auto all = blocks;
        all[1] = resign(b, s.authority);
        for (std::size_t h = 2; h < all.size(); ++h) {
            all[h].prev_hash = all[h - 1].header_digest();
            all[h] = resign(all[h], s.authority);
        }
        auto r = verify_chain(Chain(s.chain.authority(), all));
        CHECK(r.failure == FailureClass::timestamp);
        CHECK(r.failed_height == 1);
    }
    SUBCASE("authority-only kind from another signer") {
        auto tx = make_transaction(TxKind::contract_event, {{"event", "award"}}, s.bob, 1);
        Block b = blocks[4];
        b.transactions.push_back(tx);
        b.tx_root = root_of(b);
        auto r = verify_chain(s.with(4, resign(b, s.authority)));
        CHECK(r.failure == FailureClass::tx_sig);
        CHECK(r.failed_height == 4);
    }
}

TEST_CASE("build_block enforces nonces, signer classes and the clock") {
    SmallChain s;
    auto good = make_transaction(TxKind::notarization, notarization_payload(digest("a")), s.bob, 1);
    auto gap = make_transaction(TxKind::notarization, notarization_payload(digest("b")), s.bob, 3);
    try {
        build_block(s.chain, {good, gap}, 5000, s.authority.secret_key);
        FAIL("expected rejection");
    } catch (const TransactionRejected& e) {
        CHECK(e.code() == ErrorCode::nonce_mismatch);
        CHECK(e.index() == 1);
    }
    auto replay = s.chain.blocks()[1].transactions[0];
    CHECK(error_code_of([&] { build_block(s.chain, {replay}, 5000, s.authority.secret_key); }) == ErrorCode::nonce_mismatch);
    auto kyc = make_transaction(TxKind::kyc_attestation, {{"x", 1}}, s.bob, 1);
    CHECK(error_code_of([&] { build_block(s.chain, {kyc}, 5000, s.authority.secret_key); }) == ErrorCode::forbidden);
    CHECK(error_code_of([&] { build_block(s.chain, {good}, 5, s.authority.secret_key); }) == ErrorCode::clock_regression);
    CHECK(error_code_of([&] { build_block(s.chain, {good}, 5000, s.bob.secret_key); }) == ErrorCode::forbidden);
    Transaction forged = good;
    forged.payload = canonical_json(notarization_payload(digest("c")));
    CHECK(error_code_of([&] { build_block(s.chain, {forged}, 5000, s.authority.secret_key); }) == ErrorCode::invalid_signature);
}

TEST_CASE("genesis rejects duplicate allocations") {
    KeyPair a = generate_keypair(), who = generate_keypair();
    CHECK(error_code_of([&] { genesis(a, {{who.public_key, 1}, {who.public_key, 2}}); }) == ErrorCode::conflict);
    Chain empty = genesis(a, {});
    CHECK(empty.tip().tx_root == Hash256{});
    CHECK(verify_chain(empty).valid);
}

TEST_CASE("chain file round trip and strict parsing") {
    SmallChain s;
    const std::string text = serialize_chain(s.chain);
    CHECK(text.rfind(std::string(kChainFileHeader) + "\n", 0) == 0);
    Chain parsed = parse_chain(text, s.authority.public_key);
    CHECK(parsed.blocks() == s.chain.blocks());
    CHECK(serialize_chain(parsed) == text);

    CHECK_FALSE(torn_tail_offset(text));
    const std::string torn = text + "{\"authority_sig\":\"ab";
    CHECK(torn_tail_offset(torn) == text.size());
    CHECK(error_code_of([&] { parse_chain(torn, s.authority.public_key); }) == ErrorCode::parse_error);

    // An extra key inside a block is refused rather than ignored.
    Json block = block_to_json(s.chain.blocks()[2]);
    block["extra"] = 1;
    std::string lines = std::string(kChainFileHeader) + "\n";
    for (std::size_t h = 0; h < 2; ++h) lines += serialize_block_line(s.chain.blocks()[h]);
    lines += canonical_json(block) + "\n";
    try {
        parse_chain(lines, s.authority.public_key);
        FAIL("expected parse error");
    } catch (const ChainParseError& e) {
        CHECK(e.block_index() == 2u);
    }
    CHECK(error_code_of([&] { parse_chain("PROCURECHAIN v2\n", s.authority.public_key); }) == ErrorCode::parse_error);
}

TEST_CASE("notarize records a document in a new block") {
    SmallChain s;
    const Hash256 doc = digest("contract pdf");
    const Hash256 id = notarize(s.chain, doc, s.bob, 9000, s.authority.secret_key);
    CHECK(s.chain.height() == 5);
    CHECK(s.chain.find(id)->height == 5);
    CHECK(verify_chain(s.chain).valid);
    CHECK(verify_inclusion(prove_inclusion(s.chain, id), s.chain.tip().tx_root));
}
