#include <httplib.h>

#include <charconv>

#include "procurechain/chain_file.hpp"
#include "procurechain/error.hpp"
#include "procurechain/service.hpp"

namespace procurechain {

namespace {

using httplib::Request;
using httplib::Response;

int http_status(ErrorCode code) {
    switch (code) {
        case ErrorCode::bad_request:
        case ErrorCode::parse_error:
        case ErrorCode::version_error: return 400;
        case ErrorCode::unauthenticated:
        case ErrorCode::invalid_credentials: return 401;
        case ErrorCode::forbidden:
        case ErrorCode::email_unverified: return 403;
        case ErrorCode::not_found: return 404;
        case ErrorCode::conflict: return 409;
        case ErrorCode::rejected:
        case ErrorCode::immutable_field:
        case ErrorCode::insufficient_funds:
        case ErrorCode::invalid_signature:
        case ErrorCode::nonce_mismatch:
        case ErrorCode::verification_failed: return 422;
        case ErrorCode::mail_gateway_error: return 502;
        default: return 500;
    }
}

void send_json(Response& res, int status, const Json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void send_error(Response& res, ErrorCode code, const std::string& message) {
    send_json(res, http_status(code), {{"error_code", to_string(code)}, {"message", message}});
}

template <typename F>
httplib::Server::Handler guarded(F handler) {
    return [handler](const Request& req, Response& res) {
        try {
            handler(req, res);
        } catch (const Error& e) {
            // The shared field readers report parse_error; in a request that is the client's input.
            send_error(res, e.code() == ErrorCode::parse_error ? ErrorCode::bad_request : e.code(), e.what());
        } catch (const Json::exception& e) {
            send_error(res, ErrorCode::bad_request, e.what());
        } catch (const std::exception& e) {
            send_error(res, ErrorCode::internal, e.what());
        }
    };
}

Json parse_body(const Request& req) {
    Json body = Json::parse(req.body, nullptr, false);
    if (body.is_discarded() || !body.is_object()) throw Error(ErrorCode::bad_request, "request body must be a JSON object");
    return body;
}

std::string bearer_token(const Request& req) {
    const auto header = req.get_header_value("Authorization");
    constexpr std::string_view prefix = "Bearer ";
    if (header.rfind(prefix, 0) != 0) return {};
    return header.substr(prefix.size());
}

template <typename T>
T parse_hex_field(const Json& body, std::string_view key) {
    auto v = T::from_hex(require_string(body, key));
    if (!v) throw Error(ErrorCode::bad_request, "'" + std::string(key) + "' is not valid hex of the right length");
    return *v;
}

Json account_view(const EngineView& v, const AccountRecord& rec, bool owner) {
    Json j = {{"id", rec.id},
              {"public_key", rec.public_key.hex()},
              {"display_name", rec.display_name},
              {"role", to_string(rec.role)},
              {"email_verified", rec.email_verified},
              {"kyc_status", to_string(v.state.kyc_status(rec.id))},
              {"balance_micro", v.state.balance_of(rec.public_key).micro_units},
              {"balance", v.state.balance_of(rec.public_key).to_string()},
              {"profile", rec.profile},
              {"created_at", rec.created_at}};
    if (owner) {
        j["email"] = rec.email;
        j["profile_seq"] = rec.profile_seq;
        j["next_nonce"] = v.state.next_nonce(rec.public_key);
    }
    return j;
}

std::string account_of_key(const EngineView& v, const PublicKey& key) {
    const AccountRecord* rec = v.registry.find(account_id_of(key));
    return rec ? rec->id : account_id_of(key);
}

Json bid_view(const EngineView& v, const Bid& bid) {
    return {{"id", bid.id},
            {"post_id", bid.post_id},
            {"bidder_id", account_of_key(v, bid.bidder)},
            {"bidder_key", bid.bidder.hex()},
            {"amount_micro", bid.amount.micro_units},
            {"deposit_micro", bid.deposit.micro_units},
            {"ledger_seq", bid.ledger_seq},
            {"deposit_tx", bid.deposit_tx.hex()},
            {"live", bid.live},
            {"deposit_state", bid.deposit_state == DepositState::held ? "held" : "refunded"}};
}

Json result_view(const AuctionResult& r) {
    return {{"post_id", r.post_id},
            {"awarded", r.awarded},
            {"winning_bid", r.winning_bid.empty() ? Json(nullptr) : Json(r.winning_bid)},
            {"ranking", r.ranking},
            {"declared_at", r.declared_at}};
}

Json post_view(const EngineView& v, const ProcurementPost& post) {
    auto ranking = v.state.ranking(post.id);
    Json j = {{"id", post.id},
              {"procurer_id", account_of_key(v, post.procurer)},
              {"opens_at", post.opens_at},
              {"closes_at", post.closes_at},
              {"deposit_micro", post.deposit.micro_units},
              {"status", to_string(post.status)},
              {"post_hash", post.post_hash.hex()},
              {"spec_hash", post.spec_hash.hex()},
              {"chain_tx", post.chain_tx.hex()},
              {"bid_count", ranking.size()},
              {"lowest_bid_micro", ranking.empty() ? Json(nullptr) : Json(ranking.front().amount.micro_units)},
              {"result", post.result ? result_view(*post.result) : Json(nullptr)},
              {"contract_id", post.contract_id.empty() ? Json(nullptr) : Json(post.contract_id)}};
    if (auto it = v.post_docs.find(post.post_hash.hex()); it != v.post_docs.end()) {
        j["title"] = it->second.title;
        j["specification"] = it->second.specification;
    }
    return j;
}

Json contract_view(const EngineView& v, const MultisigContract& c) {
    Json sigs = Json::object();
    for (const auto& [key, sig] : c.signatures) sigs[key.hex()] = sig.hex();
    return {{"id", c.id},
            {"post_id", c.post_id},
            {"required", {c.required[0].hex(), c.required[1].hex()}},
            {"required_ids", {account_of_key(v, c.required[0]), account_of_key(v, c.required[1])}},
            {"threshold", MultisigContract::kThreshold},
            {"document_hash", c.document_hash.hex()},
            {"signatures", sigs},
            {"status", to_string(c.status)},
            {"notarization_tx", c.notarization_tx ? Json(c.notarization_tx->hex()) : Json(nullptr)}};
}

class Api : public std::enable_shared_from_this<Api> {
public:
    explicit Api(Service& service) : svc_(service), engine_(service.engine()) {}

    void install(httplib::Server& s) {
        auto self = shared_from_this();
        const std::string p = "/api/v1";
        s.Get("/healthz", guarded([self](auto& q, auto& r) { self->healthz(q, r); }));
        s.Get(p + "/healthz", guarded([self](auto& q, auto& r) { self->healthz(q, r); }));

        s.Post(p + "/register", guarded([self](auto& q, auto& r) { self->register_account(q, r); }));
        s.Post(p + "/verify-email", guarded([self](auto& q, auto& r) { self->verify_email(q, r); }));
        s.Post(p + "/verify-email/resend", guarded([self](auto& q, auto& r) { self->resend(q, r); }));
        s.Post(p + "/login", guarded([self](auto& q, auto& r) { self->login(q, r); }));
        s.Post(p + "/logout", guarded([self](auto& q, auto& r) { self->logout(q, r); }));

        s.Get(p + "/me", guarded([self](auto& q, auto& r) { self->me(q, r); }));
        s.Patch(p + "/me", guarded([self](auto& q, auto& r) { self->edit_me(q, r); }));
        s.Get(p + "/accounts/:id", guarded([self](auto& q, auto& r) { self->account(q, r); }));

        s.Post(p + "/kyc", guarded([self](auto& q, auto& r) { self->kyc_submit(q, r); }));
        s.Get(p + "/kyc/pending", guarded([self](auto& q, auto& r) { self->kyc_pending(q, r); }));
        s.Post(p + "/kyc/:account/review", guarded([self](auto& q, auto& r) { self->kyc_review(q, r); }));

        s.Post(p + "/transfer", guarded([self](auto& q, auto& r) { self->transfer(q, r); }));
        s.Post(p + "/notarize", guarded([self](auto& q, auto& r) { self->notarize(q, r); }));

        s.Get(p + "/posts", guarded([self](auto& q, auto& r) { self->list_posts(q, r); }));
        s.Post(p + "/posts", guarded([self](auto& q, auto& r) { self->create_post(q, r); }));
        s.Get(p + "/posts/:id", guarded([self](auto& q, auto& r) { self->get_post(q, r); }));
        s.Get(p + "/posts/:id/bids", guarded([self](auto& q, auto& r) { self->list_bids(q, r); }));
        s.Post(p + "/posts/:id/bids", guarded([self](auto& q, auto& r) { self->place_bid(q, r); }));
        s.Post(p + "/posts/:id/close", guarded([self](auto& q, auto& r) { self->close_post(q, r); }));

        s.Get(p + "/contracts", guarded([self](auto& q, auto& r) { self->my_contracts(q, r); }));
        s.Get(p + "/contracts/:id", guarded([self](auto& q, auto& r) { self->get_contract(q, r); }));
        s.Post(p + "/contracts/:id/sign", guarded([self](auto& q, auto& r) { self->sign_contract(q, r); }));

        s.Get(p + "/chain/height", guarded([self](auto& q, auto& r) { self->chain_height(q, r); }));
        s.Get(p + "/chain/blocks/:h", guarded([self](auto& q, auto& r) { self->chain_block(q, r); }));
        s.Get(p + "/chain/tx/:id/proof", guarded([self](auto& q, auto& r) { self->tx_proof(q, r); }));
    }

private:
    // --- helpers ---

    const AccountRecord& session_account(const Request& req, EngineView& v) {
        auto id = svc_.sessions().lookup(bearer_token(req), engine_.now());
        if (!id) throw Error(ErrorCode::unauthenticated, "missing or expired session");
        const AccountRecord* rec = v.registry.find(*id);
        if (!rec) throw Error(ErrorCode::unauthenticated, "session account no longer exists");
        return *rec;
    }

    AccountRecord authenticated(const Request& req) {
        return engine_.read([&](EngineView v) { return session_account(req, v); });
    }

    AccountRecord admin(const Request& req) {
        AccountRecord rec = authenticated(req);
        if (rec.role != Role::admin) throw Error(ErrorCode::forbidden, "admin role required");
        return rec;
    }

    std::chrono::milliseconds commit_timeout() const {
        return svc_.config().block_interval * 4 + std::chrono::seconds(5);
    }

    // Waits for the transaction to land in a block and describes where.
    Json committed(const Hash256& tx_id) {
        Json j = {{"tx_id", tx_id.hex()}, {"committed", engine_.wait_committed(tx_id, commit_timeout())}};
        engine_.read([&](const EngineView& v) {
            if (auto loc = v.chain.find(tx_id)) j["block_height"] = loc->height;
        });
        return j;
    }

    void wait_for_writes() {
        if (auto last = engine_.last_enqueued()) engine_.wait_committed(*last, commit_timeout());
    }

    static Transaction signed_tx(const Json& body, TxKind kind, const PublicKey& signer) {
        const Json& payload = require_object(body, "payload");
        return Transaction{kind, canonical_json(payload), signer, require_u64(body, "nonce"),
                           parse_hex_field<Signature>(body, "signature")};
    }

    // --- routes ---

    void healthz(const Request&, Response& res) {
        engine_.read([&](const EngineView& v) {
            send_json(res, 200, {{"status", "ok"}, {"chain_height", v.chain.height()}, {"tx_count", v.chain.tx_count()}});
        });
    }

    void register_account(const Request& req, Response& res) {
        Json body = parse_body(req);
        auto role = role_from_string(require_string(body, "role"));
        if (!role || *role == Role::admin) throw Error(ErrorCode::rejected, "role must be bidder or procurer");
        Registration reg = engine_.register_account(require_string(body, "email"), require_string(body, "display_name"),
                                                    *role, require_string(body, "password"));
        Json out = {{"account_id", reg.account.id}, {"key_file", Json::parse(reg.key_file)}};
        try {
            svc_.send_verification_email(reg.account.id);
            out["email_sent"] = true;
        } catch (const Error& e) {
            // The account and its token stay valid; the client can ask for a resend.
            out["email_sent"] = false;
            out["email_error"] = {{"error_code", to_string(e.code())}, {"message", e.what()}};
        }
        engine_.read([&](const EngineView& v) { out["account"] = account_view(v, *v.registry.find(reg.account.id), true); });
        send_json(res, 201, out);
    }

    void verify_email(const Request& req, Response& res) {
        const std::string id = engine_.verify_email(require_string(parse_body(req), "token"));
        engine_.read([&](const EngineView& v) {
            send_json(res, 200, {{"account", account_view(v, *v.registry.find(id), true)}});
        });
    }

    void resend(const Request& req, Response& res) {
        auto email = normalize_email(require_string(parse_body(req), "email"));
        auto id = engine_.read([&](const EngineView& v) -> std::optional<std::string> {
            const AccountRecord* rec = email ? v.registry.find_by_email(*email) : nullptr;
            return rec ? std::optional(rec->id) : std::nullopt;
        });
        if (!id) throw Error(ErrorCode::not_found, "no account with that email");
        const bool sent = svc_.send_verification_email(*id).has_value();
        send_json(res, 200, {{"sent", sent}});
    }

    void login(const Request& req, Response& res) {
        Json body = parse_body(req);
        const std::string id = engine_.authenticate(require_string(body, "email"), require_string(body, "password"));
        ApiSession s = svc_.sessions().create(id, engine_.now(), svc_.config().session_ttl);
        send_json(res, 200, {{"token", s.token}, {"account_id", id}, {"expires_at", s.expires_at}});
    }

    void logout(const Request& req, Response& res) {
        authenticated(req);
        svc_.sessions().revoke(bearer_token(req));
        send_json(res, 200, {{"ok", true}});
    }

    void me(const Request& req, Response& res) {
        engine_.read([&](EngineView v) {
            const AccountRecord& rec = session_account(req, v);
            Json j = account_view(v, rec, true);
            Json bids = Json::array();
            for (const auto& [_, bid] : v.state.bids)
                if (bid.bidder == rec.public_key) bids.push_back(bid_view(v, bid));
            j["bids"] = bids;
            if (auto it = v.state.kyc.find(rec.id); it != v.state.kyc.end())
                j["kyc"] = {{"document_hash", it->second.document_hash.hex()},
                            {"submitted_at", it->second.submitted_at},
                            {"reviewer", it->second.reviewer}};
            send_json(res, 200, j);
        });
    }

    void edit_me(const Request& req, Response& res) {
        AccountRecord rec = authenticated(req);
        Json body = parse_body(req);
        engine_.edit_profile(rec.id, require_object(body, "fields"), require_u64(body, "seq"),
                             parse_hex_field<Signature>(body, "signature"));
        engine_.read([&](const EngineView& v) { send_json(res, 200, account_view(v, *v.registry.find(rec.id), true)); });
    }

    void account(const Request& req, Response& res) {
        engine_.read([&](EngineView v) {
            session_account(req, v);
            const AccountRecord* rec = v.registry.find(req.path_params.at("id"));
            if (!rec) throw Error(ErrorCode::not_found, "no such account");
            send_json(res, 200, account_view(v, *rec, false));
        });
    }

    void kyc_submit(const Request& req, Response& res) {
        AccountRecord rec = authenticated(req);
        if (!req.is_multipart_form_data() || !req.has_file("document"))
            throw Error(ErrorCode::bad_request, "expected multipart form data with a 'document' part");
        const std::string& content = req.get_file_value("document").content;
        const Hash256 tx = engine_.submit_kyc(rec.id, to_bytes(content));
        Json out = committed(tx);
        out["document_hash"] = digest(content).hex();
        out["kyc_status"] = "pending";
        send_json(res, 201, out);
    }

    void kyc_pending(const Request& req, Response& res) {
        admin(req);
        engine_.read([&](const EngineView& v) {
            Json list = Json::array();
            for (const auto& [id, entry] : v.state.kyc) {
                if (entry.status != KycStatus::pending) continue;
                const AccountRecord* rec = v.registry.find(id);
                list.push_back({{"account_id", id},
                                {"display_name", rec ? rec->display_name : ""},
                                {"email", rec ? rec->email : ""},
                                {"document_hash", entry.document_hash.hex()},
                                {"submitted_at", entry.submitted_at}});
            }
            send_json(res, 200, {{"pending", list}});
        });
    }

    void kyc_review(const Request& req, Response& res) {
        AccountRecord reviewer = admin(req);
        auto decision = kyc_status_from_string(require_string(parse_body(req), "decision"));
        if (!decision) throw Error(ErrorCode::bad_request, "decision must be verified or rejected");
        Json out = committed(engine_.review_kyc(reviewer.id, req.path_params.at("account"), *decision));
        out["kyc_status"] = to_string(*decision);
        send_json(res, 200, out);
    }

    void transfer(const Request& req, Response& res) {
        AccountRecord rec = authenticated(req);
        send_json(res, 201, committed(engine_.submit_signed(signed_tx(parse_body(req), TxKind::token_transfer, rec.public_key))));
    }

    void notarize(const Request& req, Response& res) {
        AccountRecord rec = authenticated(req);
        send_json(res, 201, committed(engine_.submit_signed(signed_tx(parse_body(req), TxKind::notarization, rec.public_key))));
    }

    void list_posts(const Request& req, Response& res) {
        std::optional<PostStatus> filter;
        if (req.has_param("status")) {
            filter = post_status_from_string(req.get_param_value("status"));
            if (!filter) throw Error(ErrorCode::bad_request, "unknown post status");
        }
        engine_.read([&](const EngineView& v) {
            Json list = Json::array();
            for (const auto& [_, post] : v.state.posts)
                if (!filter || post.status == *filter) list.push_back(post_view(v, post));
            send_json(res, 200, {{"posts", list}});
        });
    }

    void create_post(const Request& req, Response& res) {
        AccountRecord rec = authenticated(req);
        Json body = parse_body(req);
        const Json& payload = require_object(body, "payload");
        PostDocument doc{rec.id,
                         require_string(body, "title"),
                         require_string(body, "specification"),
                         require_u64(payload, "opens_at"),
                         require_u64(payload, "closes_at"),
                         TokenAmount{require_u64(payload, "deposit_micro")}};
        if (doc.title.empty()) throw Error(ErrorCode::bad_request, "title is required");
        const Hash256 tx = engine_.submit_signed(signed_tx(body, TxKind::post_created, rec.public_key), doc);
        Json out = committed(tx);
        out["post_id"] = short_id(tx);
        send_json(res, 201, out);
    }

    void get_post(const Request& req, Response& res) {
        engine_.read([&](const EngineView& v) { send_json(res, 200, post_view(v, v.state.post(req.path_params.at("id")))); });
    }

    void list_bids(const Request& req, Response& res) {
        engine_.read([&](const EngineView& v) {
            Json list = Json::array();
            std::size_t rank = 0;
            for (const auto& bid : v.state.ranking(req.path_params.at("id"))) {
                Json b = bid_view(v, bid);
                b["rank"] = ++rank;
                list.push_back(b);
            }
            send_json(res, 200, {{"post_id", req.path_params.at("id")}, {"bids", list}});
        });
    }

    void place_bid(const Request& req, Response& res) {
        AccountRecord rec = authenticated(req);
        Json body = parse_body(req);
        if (require_string(require_object(body, "payload"), "post_id") != req.path_params.at("id"))
            throw Error(ErrorCode::bad_request, "payload post_id does not match the URL");
        const Hash256 tx = engine_.submit_signed(signed_tx(body, TxKind::bid_commit, rec.public_key));
        Json out = committed(tx);
        out["bid_id"] = short_id(tx);
        send_json(res, 201, out);
    }

    void close_post(const Request& req, Response& res) {
        admin(req);
        const std::string id = req.path_params.at("id");
        AuctionResult result = engine_.close_post(id);
        std::string contract;
        if (result.awarded) contract = engine_.create_contract(id);
        wait_for_writes();
        send_json(res, 200, {{"result", result_view(result)},
                             {"contract_id", contract.empty() ? Json(nullptr) : Json(contract)}});
    }

    void my_contracts(const Request& req, Response& res) {
        engine_.read([&](EngineView v) {
            const AccountRecord& rec = session_account(req, v);
            Json list = Json::array();
            for (const auto& [_, c] : v.state.contracts)
                if (c.is_required(rec.public_key)) list.push_back(contract_view(v, c));
            send_json(res, 200, {{"contracts", list}});
        });
    }

    void get_contract(const Request& req, Response& res) {
        engine_.read([&](EngineView v) {
            session_account(req, v);
            send_json(res, 200, contract_view(v, v.state.contract(req.path_params.at("id"))));
        });
    }

    void sign_contract(const Request& req, Response& res) {
        AccountRecord rec = authenticated(req);
        Json body = parse_body(req);
        const auto signer = parse_hex_field<PublicKey>(body, "signer");
        if (signer != rec.public_key) throw Error(ErrorCode::forbidden, "signer must be the logged-in account's key");
        Json out = committed(engine_.sign_contract(req.path_params.at("id"), signer,
                                                   parse_hex_field<Signature>(body, "signature")));
        engine_.read([&](const EngineView& v) {
            out["contract"] = contract_view(v, v.state.contract(req.path_params.at("id")));
        });
        send_json(res, 200, out);
    }

    void chain_height(const Request&, Response& res) {
        engine_.read([&](const EngineView& v) {
            send_json(res, 200, {{"height", v.chain.height()},
                                 {"tip_hash", v.chain.tip().header_digest().hex()},
                                 {"tx_count", v.chain.tx_count()}});
        });
    }

    void chain_block(const Request& req, Response& res) {
        std::uint64_t h = 0;
        const std::string& text = req.path_params.at("h");
        auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), h);
        if (ec != std::errc() || ptr != text.data() + text.size()) throw Error(ErrorCode::bad_request, "bad height");
        engine_.read([&](const EngineView& v) {
            if (h > v.chain.height()) throw Error(ErrorCode::not_found, "no block at height " + text);
            const Block& block = v.chain.blocks()[h];
            Json j = block_to_json(block);
            j["hash"] = block.header_digest().hex();
            send_json(res, 200, j);
        });
    }

    void tx_proof(const Request& req, Response& res) {
        auto id = Hash256::from_hex(req.path_params.at("id"));
        if (!id) throw Error(ErrorCode::bad_request, "transaction id must be 64 lowercase hex characters");
        engine_.read([&](const EngineView& v) {
            InclusionProof proof = prove_inclusion(v.chain, *id);
            const Hash256& root = v.chain.blocks()[proof.block_height].tx_root;
            Json j = to_json(proof);
            j["tx_root"] = root.hex();
            j["verified"] = verify_inclusion(proof, root);
            send_json(res, 200, j);
        });
    }

    Service& svc_;
    Engine& engine_;
};

}  // namespace

void install_routes(httplib::Server& server, Service& service) {
    std::make_shared<Api>(service)->install(server);
    if (service.config().ui_dir) server.set_mount_point("/app", service.config().ui_dir->string());
    server.set_payload_max_length(16 * 1024 * 1024);
}

}  // namespace procurechain
