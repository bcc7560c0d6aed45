#include "procurechain/engine.hpp"

#include <iostream>

#include "procurechain/chain_file.hpp"
#include "procurechain/error.hpp"

namespace procurechain {

namespace {

constexpr std::uint64_t kStateFormat = 1;

void warn(const std::string& message) { std::cerr << "procurechain: warning: " << message << "\n"; }

Json post_docs_json(const PostDocuments& docs) {
    Json j = Json::object();
    for (const auto& [hash, doc] : docs) j[hash] = doc.to_json();
    return j;
}

}  // namespace

std::string serialize_state_file(const Chain& chain, const WorldState& state, const Registry& registry,
                                 const PostDocuments& docs) {
    Json j = {{"chain_height", chain.height()},
              {"derived", state.to_json()},
              {"format", kStateFormat},
              {"post_documents", post_docs_json(docs)},
              {"registry", registry.to_json()},
              {"tip_hash", chain.tip().header_digest().hex()}};
    return canonical_json(j) + "\n";
}

LoadedDataDir load_data_dir(const DataDir& dir, bool recover_torn_tail) {
    if (!dir.initialized()) throw Error(ErrorCode::not_found, "no chain file in " + dir.root.string());

    KeyPair authority;
    try {
        authority = import_key_file(read_file(dir.authority_file())).keypair;
    } catch (const Error& e) {
        throw Error(ErrorCode::integrity_error, std::string("authority key unreadable: ") + e.what());
    }

    std::vector<std::string> warnings;
    std::string text = read_file(dir.chain_file());
    if (auto torn = torn_tail_offset(text); torn && recover_torn_tail) {
        warnings.push_back("discarded " + std::to_string(text.size() - *torn) +
                           " bytes of an unterminated block line left by an interrupted append");
        truncate_file(dir.chain_file(), *torn);
        text.resize(*torn);
    }
    Chain chain = parse_chain(text, authority.public_key);

    if (auto report = verify_chain(chain); !report.valid) throw ChainVerificationError(std::move(report));
    WorldState state = replay_chain(chain);

    if (!fs::exists(dir.state_file())) throw Error(ErrorCode::integrity_error, "state file missing");
    Json sj = Json::parse(read_file(dir.state_file()), nullptr, false);
    if (sj.is_discarded() || !sj.is_object()) throw Error(ErrorCode::integrity_error, "state file is not valid JSON");

    Registry registry;
    PostDocuments docs;
    std::uint64_t cached_height = 0;
    try {
        if (require_u64(sj, "format") != kStateFormat) throw Error(ErrorCode::version_error, "unknown state format");
        registry = Registry::from_json(require_object(sj, "registry"));
        for (const auto& [hash, doc] : require_object(sj, "post_documents").items())
            docs.emplace(hash, PostDocument::from_json(doc));
        cached_height = require_u64(sj, "chain_height");
    } catch (const Error& e) {
        throw Error(ErrorCode::integrity_error, std::string("state file: ") + e.what());
    } catch (const Json::exception& e) {
        throw Error(ErrorCode::integrity_error, std::string("state file: ") + e.what());
    }

    if (cached_height > chain.height())
        throw Error(ErrorCode::integrity_error, "state file describes height " + std::to_string(cached_height) +
                                                    " but the chain ends at " + std::to_string(chain.height()));
    if (cached_height == chain.height()) {
        if (sj.value("tip_hash", "") != chain.tip().header_digest().hex())
            throw Error(ErrorCode::integrity_error, "state file tip hash does not match the chain");
        if (sj.at("derived") != state.to_json())
            throw Error(ErrorCode::integrity_error, "derived state cache does not match chain replay");
    } else {
        warnings.push_back("derived state cache is at height " + std::to_string(cached_height) +
                           ", chain at " + std::to_string(chain.height()) + "; rebuilt from the chain");
    }

    for (const auto& [id, post] : state.posts) {
        auto it = docs.find(post.post_hash.hex());
        if (it == docs.end() || it->second.hash() != post.post_hash)
            throw Error(ErrorCode::integrity_error, "post " + id + " document missing or altered");
    }
    BlobStore blobs(dir.blob_dir());
    for (const auto& [id, entry] : state.kyc) {
        auto blob = blobs.get(entry.document_hash);
        if (!blob || digest(*blob) != entry.document_hash)
            throw Error(ErrorCode::integrity_error, "KYC document for " + id + " missing or altered");
    }

    return LoadedDataDir{authority, std::move(chain), std::move(state), std::move(registry), std::move(docs),
                         std::move(warnings)};
}

// --- construction ---

void Engine::initialize(const fs::path& dir, const KeyPair& authority, TokenAmount treasury, TimestampMs now) {
    if (fs::exists(dir) && !fs::is_empty(dir))
        throw Error(ErrorCode::conflict, dir.string() + " is not empty; refusing to overwrite");
    fs::create_directories(dir);
    DataDir d{dir};

    std::vector<Allocation> allocations;
    if (treasury.micro_units > 0) allocations.push_back({authority.public_key, treasury.micro_units});
    Chain chain = genesis(authority, allocations, now);
    WorldState state = replay_chain(chain);

    atomic_write_file(d.lock_file(), "");
    atomic_write_file(d.authority_file(), export_key_file(authority, "authority", now) + "\n");
    atomic_write_file(d.state_file(), serialize_state_file(chain, state, Registry{}, {}));
    // Written last: the chain file's presence marks the directory initialised.
    atomic_write_file(d.chain_file(), serialize_chain(chain));
}

Engine::Engine(EngineOptions options, KeyPair authority, Chain chain, WorldState state, Registry registry,
               PostDocuments docs)
    : options_(std::move(options)),
      authority_(authority),
      chain_(std::move(chain)),
      committed_(std::move(state)),
      registry_(std::move(registry)),
      post_docs_(std::move(docs)),
      pending_state_(committed_),
      persisted_height_(chain_.height()) {}

std::unique_ptr<Engine> Engine::open(EngineOptions options) {
    if (!options.data_dir) throw Error(ErrorCode::bad_request, "Engine::open needs a data directory");
    DataDir dir{*options.data_dir};
    if (!dir.initialized()) throw Error(ErrorCode::not_found, dir.root.string() + " is not initialised");

    std::optional<DirLock> lock;
    if (options.take_lock) {
        lock = DirLock::try_acquire(dir);
        if (!lock) throw Error(ErrorCode::conflict, dir.root.string() + " is locked by another process");
    }
    LoadedDataDir loaded = load_data_dir(dir, options.recover_torn_tail);
    for (const auto& w : loaded.warnings) warn(w);
    const bool stale_cache = !loaded.warnings.empty();

    std::unique_ptr<Engine> engine(new Engine(std::move(options), loaded.authority, std::move(loaded.chain),
                                              std::move(loaded.state), std::move(loaded.registry),
                                              std::move(loaded.post_docs)));
    engine->dir_ = dir;
    engine->lock_ = std::move(lock);
    if (stale_cache && engine->options_.autopersist) {
        std::lock_guard lk(engine->write_mu_);
        engine->write_state_file_locked();
    }
    return engine;
}

std::unique_ptr<Engine> Engine::in_memory(const KeyPair& authority, const std::vector<Allocation>& allocations,
                                          EngineOptions options) {
    options.data_dir.reset();
    Chain chain = genesis(authority, allocations, options.clock());
    WorldState state = replay_chain(chain);
    return std::unique_ptr<Engine>(
        new Engine(std::move(options), authority, std::move(chain), std::move(state), Registry{}, {}));
}

Engine::~Engine() {
    if (!options_.autopersist) return;
    try {
        std::lock_guard lk(write_mu_);
        seal_locked();
    } catch (const std::exception& e) {
        warn(std::string("pending transactions lost at shutdown: ") + e.what());
    }
}

// --- accounts ---

Registration Engine::register_account(std::string_view email, std::string_view display_name, Role role,
                                      std::string_view password, std::optional<KeyPair> keypair) {
    if (role == Role::admin) throw Error(ErrorCode::rejected, "role must be bidder or procurer");
    std::lock_guard lk(write_mu_);
    return register_locked(email, display_name, role, password, keypair);
}

Registration Engine::register_admin(std::string_view email, std::string_view display_name,
                                    std::string_view password, std::optional<KeyPair> keypair) {
    std::lock_guard lk(write_mu_);
    return register_locked(email, display_name, Role::admin, password, keypair);
}

Registration Engine::register_locked(std::string_view email, std::string_view display_name, Role role,
                                     std::string_view password, std::optional<KeyPair> keypair) {
    auto normalized = normalize_email(email);
    if (!normalized) throw Error(ErrorCode::bad_request, "email address is not valid");
    if (display_name.empty()) throw Error(ErrorCode::bad_request, "display name is required");
    if (password.size() < 8) throw Error(ErrorCode::bad_request, "password must be at least 8 characters");
    if (registry_.find_by_email(*normalized)) throw Error(ErrorCode::conflict, "email already registered");

    KeyPair kp = keypair ? *keypair : generate_keypair();
    AccountRecord rec;
    rec.id = account_id_of(kp.public_key);
    if (registry_.find(rec.id)) throw Error(ErrorCode::conflict, "account id already registered");
    rec.public_key = kp.public_key;
    rec.email = *normalized;
    rec.display_name = std::string(display_name);
    rec.role = role;
    rec.password_hash = hash_password(password, options_.password_strength);
    rec.created_at = now();

    Registration out;
    {
        std::unique_lock lk(state_mu_);
        out.account = registry_.add(std::move(rec));
        out.token = registry_.issue_token(out.account.id, now() + static_cast<TimestampMs>(options_.email_token_ttl.count()));
    }
    registry_changed_locked();
    out.key_file = export_key_file(kp, out.account.id, out.account.created_at);
    return out;
}

std::string Engine::verify_email(std::string_view token) {
    std::lock_guard lk(write_mu_);
    std::string id;
    {
        std::unique_lock slk(state_mu_);
        id = registry_.consume_token(token, now());
        registry_.at(id).email_verified = true;
    }
    registry_changed_locked();
    return id;
}

std::optional<EmailToken> Engine::verification_token(std::string_view account_id) {
    std::lock_guard lk(write_mu_);
    const AccountRecord* rec = registry_.find(account_id);
    if (!rec) throw Error(ErrorCode::not_found, "no account " + std::string(account_id));
    if (rec->email_verified) return std::nullopt;
    if (auto live = registry_.live_token_for(account_id, now())) return live;
    EmailToken token;
    {
        std::unique_lock slk(state_mu_);
        token = registry_.issue_token(std::string(account_id),
                                      now() + static_cast<TimestampMs>(options_.email_token_ttl.count()));
    }
    registry_changed_locked();
    return token;
}

std::string Engine::authenticate(std::string_view email, std::string_view password) const {
    auto normalized = normalize_email(email);
    std::shared_lock lk(state_mu_);
    const AccountRecord* rec = normalized ? registry_.find_by_email(*normalized) : nullptr;
    if (!rec || !verify_password(rec->password_hash, password))
        throw Error(ErrorCode::invalid_credentials, "email or password is incorrect");
    if (!rec->email_verified) throw Error(ErrorCode::email_unverified, "check your mailbox to verify this account");
    return rec->id;
}

Hash256 Engine::submit_kyc(std::string_view account_id, std::span<const std::uint8_t> document) {
    std::lock_guard lk(write_mu_);
    const AccountRecord* rec = registry_.find(account_id);
    if (!rec) throw Error(ErrorCode::not_found, "no account " + std::string(account_id));
    if (!rec->email_verified) throw Error(ErrorCode::forbidden, "verify your email before submitting KYC");
    if (document.empty()) throw Error(ErrorCode::bad_request, "KYC document is empty");
    auto status = pending_state_.kyc_status(account_id);
    if (status != KycStatus::none && status != KycStatus::rejected)
        throw Error(ErrorCode::conflict, "KYC is already " + std::string(to_string(status)));

    const Hash256 doc_hash = digest(document);
    const Json payload = kyc_attestation(account_id, rec->public_key, doc_hash, KycStatus::pending, "", now());
    // The blob must be durable before any block can reference its hash.
    if (dir_ && options_.autopersist)
        BlobStore(dir_->blob_dir()).put(document);
    else
        pending_blobs_[doc_hash] = Bytes(document.begin(), document.end());
    return enqueue_authority(TxKind::kyc_attestation, payload);
}

Hash256 Engine::review_kyc(std::string_view reviewer_id, std::string_view account_id, KycStatus decision) {
    std::lock_guard lk(write_mu_);
    if (reviewer_id != kOperatorReviewer) {
        const AccountRecord* reviewer = registry_.find(reviewer_id);
        if (!reviewer || reviewer->role != Role::admin) throw Error(ErrorCode::forbidden, "only admins review KYC");
    }
    if (decision != KycStatus::verified && decision != KycStatus::rejected)
        throw Error(ErrorCode::bad_request, "decision must be verified or rejected");
    const AccountRecord* rec = registry_.find(account_id);
    if (!rec) throw Error(ErrorCode::not_found, "no account " + std::string(account_id));
    auto it = pending_state_.kyc.find(account_id);
    if (it == pending_state_.kyc.end() || it->second.status != KycStatus::pending)
        throw Error(ErrorCode::conflict, "account has no pending KYC submission");
    return enqueue_authority(TxKind::kyc_attestation, kyc_attestation(account_id, rec->public_key,
                                                                      it->second.document_hash, decision,
                                                                      reviewer_id, now()));
}

void Engine::edit_profile(std::string_view account_id, const Json& fields, std::uint64_t seq, const Signature& sig) {
    std::lock_guard lk(write_mu_);
    const AccountRecord* rec = registry_.find(account_id);
    if (!rec) throw Error(ErrorCode::not_found, "no account " + std::string(account_id));
    if (!fields.is_object()) throw Error(ErrorCode::bad_request, "fields must be an object");
    if (!verify(profile_edit_message(account_id, fields, seq), sig, rec->public_key))
        throw Error(ErrorCode::forbidden, "profile edit is not signed by the account owner");
    if (seq != rec->profile_seq + 1)
        throw Error(ErrorCode::nonce_mismatch, "expected profile seq " + std::to_string(rec->profile_seq + 1));

    AccountRecord next = *rec;
    for (const auto& [key, value] : fields.items()) {
        if (!value.is_string()) throw Error(ErrorCode::bad_request, "profile field '" + key + "' must be a string");
        const auto& v = value.get_ref<const std::string&>();
        if (std::find(std::begin(kImmutableFields), std::end(kImmutableFields), key) != std::end(kImmutableFields)) {
            const std::string current = key == "id"           ? rec->id
                                        : key == "public_key" ? rec->public_key.hex()
                                        : key == "email"      ? rec->email
                                                              : std::string(to_string(rec->role));
            if (v != current) throw Error(ErrorCode::immutable_field, "'" + key + "' cannot be changed");
        } else if (key == "display_name") {
            if (v.empty()) throw Error(ErrorCode::bad_request, "display name is required");
            next.display_name = v;
        } else if (std::find(std::begin(kProfileFields), std::end(kProfileFields), key) != std::end(kProfileFields)) {
            next.profile[key] = v;
        } else {
            throw Error(ErrorCode::bad_request, "unknown profile field '" + key + "'");
        }
    }
    next.profile_seq = seq;
    {
        std::unique_lock slk(state_mu_);
        registry_.at(account_id) = std::move(next);
    }
    registry_changed_locked();
}

Hash256 Engine::grant(std::string_view account_id, TokenAmount amount) {
    std::lock_guard lk(write_mu_);
    const AccountRecord* rec = registry_.find(account_id);
    if (!rec) throw Error(ErrorCode::not_found, "no account " + std::string(account_id));
    return enqueue_authority(TxKind::token_transfer, transfer_payload(rec->public_key, amount));
}

// --- signed submissions ---

Hash256 Engine::submit_signed(const Transaction& tx, const std::optional<PostDocument>& doc) {
    std::lock_guard lk(write_mu_);
    if (authority_only(tx.kind))
        throw Error(ErrorCode::forbidden, std::string(kind_name(tx.kind)) + " is issued by the service only");
    const AccountRecord* signer = registry_.find(account_id_of(tx.signer));
    if (!signer || signer->public_key != tx.signer) throw Error(ErrorCode::forbidden, "signer is not a registered account");

    Json payload = Json::parse(tx.payload, nullptr, false);
    if (payload.is_discarded() || !payload.is_object()) throw Error(ErrorCode::bad_request, "payload is not a JSON object");

    switch (tx.kind) {
        case TxKind::token_transfer: {
            auto to = PublicKey::from_hex(payload.value("to", ""));
            if (!to) throw Error(ErrorCode::bad_request, "transfer 'to' must be a public key");
            const AccountRecord* dest = registry_.find(account_id_of(*to));
            if (!dest || dest->public_key != *to) throw Error(ErrorCode::not_found, "recipient account does not exist");
            break;
        }
        case TxKind::post_created: {
            if (signer->role != Role::procurer) throw Error(ErrorCode::forbidden, "only procurers create posts");
            if (!doc) throw Error(ErrorCode::bad_request, "post title and specification are required");
            if (doc->procurer_id != signer->id || post_payload(*doc) != payload)
                throw Error(ErrorCode::bad_request, "post document does not match the signed payload");
            if (doc->opens_at >= doc->closes_at) throw Error(ErrorCode::rejected, "opens_at must precede closes_at");
            if (!pending_state_.kyc_verified(tx.signer)) throw Error(ErrorCode::forbidden, "procurer KYC is not verified");
            const std::string key = doc->hash().hex();
            const bool added = !post_docs_.count(key);
            if (added) {
                std::unique_lock slk(state_mu_);
                post_docs_.emplace(key, *doc);
            }
            registry_changed_locked();
            try {
                return enqueue(tx);
            } catch (...) {
                if (added) {
                    std::unique_lock slk(state_mu_);
                    post_docs_.erase(key);
                }
                throw;
            }
        }
        case TxKind::bid_commit: {
            auto it = pending_state_.posts.find(payload.value("post_id", ""));
            if (it == pending_state_.posts.end()) throw Error(ErrorCode::not_found, "no such post");
            const auto& post = it->second;
            if (post.status != PostStatus::open) throw Error(ErrorCode::rejected, "post is closed");
            if (!post.accepts_bids_at(now()))
                throw Error(ErrorCode::rejected, now() < post.opens_at ? "post is not open yet"
                                                                       : "bidding window has closed");
            break;
        }
        default: break;
    }
    return enqueue(tx);
}

Hash256 Engine::enqueue(Transaction tx) {
    const Hash256 id = tx.id();
    apply_transaction(pending_state_, tx, id, ApplyContext{authority_.public_key, false});
    pending_txs_.push_back(std::move(tx));
    last_enqueued_ = id;
    if (!oldest_pending_) oldest_pending_ = now();
    if (pending_txs_.size() >= options_.max_pending) seal_locked();
    return id;
}

Hash256 Engine::enqueue_authority(TxKind kind, const Json& payload) {
    return enqueue(make_transaction(kind, payload, authority_, pending_state_.next_nonce(authority_.public_key)));
}

// --- procurement ---

AuctionResult Engine::close_post(std::string_view post_id) {
    std::lock_guard lk(write_mu_);
    return close_post_locked(post_id);
}

AuctionResult Engine::close_post_locked(std::string_view post_id) {
    const ProcurementPost& post = pending_state_.post(post_id);
    if (post.status != PostStatus::open) throw Error(ErrorCode::conflict, "post is already closed");
    const TimestampMs t = now();
    if (t < post.closes_at) throw Error(ErrorCode::rejected, "post closes at " + format_rfc3339(post.closes_at));
    enqueue_authority(TxKind::contract_event, award_event(post, pending_state_.ranking(post_id), t));
    return *pending_state_.post(post_id).result;
}

std::string Engine::create_contract(std::string_view post_id) {
    std::lock_guard lk(write_mu_);
    return create_contract_locked(post_id);
}

std::string Engine::create_contract_locked(std::string_view post_id) {
    const ProcurementPost& post = pending_state_.post(post_id);
    if (!post.contract_id.empty()) throw Error(ErrorCode::conflict, "post already has a contract");
    if (post.status != PostStatus::closed_awarded) throw Error(ErrorCode::rejected, "post was not awarded");
    enqueue_authority(TxKind::contract_event, contract_created_event(pending_state_, post));
    return pending_state_.post(post_id).contract_id;
}

Hash256 Engine::sign_contract(std::string_view contract_id, const PublicKey& signer, const Signature& sig) {
    std::lock_guard lk(write_mu_);
    return enqueue_authority(TxKind::contract_event, contract_signature_event(contract_id, signer, sig));
}

std::vector<std::string> Engine::close_due_posts() {
    std::lock_guard lk(write_mu_);
    std::vector<std::string> due;
    const TimestampMs t = now();
    for (const auto& [id, post] : pending_state_.posts)
        if (post.status == PostStatus::open && post.closes_at <= t) due.push_back(id);
    for (const auto& id : due) {
        if (close_post_locked(id).awarded) create_contract_locked(id);
    }
    return due;
}

// --- conveniences ---

Hash256 Engine::transfer(const KeyPair& from, std::string_view to_account, TokenAmount amount) {
    PublicKey to;
    {
        std::shared_lock slk(state_mu_);
        const AccountRecord* dest = registry_.find(to_account);
        if (!dest) throw Error(ErrorCode::not_found, "no account " + std::string(to_account));
        to = dest->public_key;
    }
    return submit_signed(make_transaction(TxKind::token_transfer, transfer_payload(to, amount), from,
                                          next_nonce(from.public_key)));
}

std::string Engine::create_post(const KeyPair& procurer, std::string title, std::string specification,
                                TimestampMs opens_at, TimestampMs closes_at, TokenAmount deposit) {
    PostDocument doc{account_id_of(procurer.public_key), std::move(title), std::move(specification),
                     opens_at, closes_at, deposit};
    auto tx = make_transaction(TxKind::post_created, post_payload(doc), procurer, next_nonce(procurer.public_key));
    return short_id(submit_signed(tx, doc));
}

std::string Engine::place_bid(std::string_view post_id, const KeyPair& bidder, TokenAmount amount) {
    TokenAmount deposit;
    std::uint64_t nonce = 0;
    {
        std::lock_guard lk(write_mu_);
        deposit = pending_state_.post(post_id).deposit;
        nonce = pending_state_.next_nonce(bidder.public_key);
    }
    auto tx = make_transaction(TxKind::bid_commit, bid_payload(post_id, amount, deposit), bidder, nonce);
    return short_id(submit_signed(tx));
}

Hash256 Engine::sign_contract(std::string_view contract_id, const KeyPair& signer) {
    Hash256 doc;
    {
        std::lock_guard lk(write_mu_);
        doc = pending_state_.contract(contract_id).document_hash;
    }
    return sign_contract(contract_id, signer.public_key, sign(doc.view(), signer.secret_key));
}

Hash256 Engine::notarize(const KeyPair& owner, const Hash256& document_hash) {
    return submit_signed(make_transaction(TxKind::notarization, notarization_payload(document_hash), owner,
                                          next_nonce(owner.public_key)));
}

std::uint64_t Engine::next_nonce(const PublicKey& key) const {
    std::lock_guard lk(write_mu_);
    return pending_state_.next_nonce(key);
}

// --- block production ---

std::optional<std::uint64_t> Engine::seal() {
    std::lock_guard lk(write_mu_);
    return seal_locked();
}

void Engine::tick(bool close_due) {
    if (close_due) close_due_posts();
    std::lock_guard lk(write_mu_);
    if (oldest_pending_ && now() >= *oldest_pending_ + static_cast<TimestampMs>(options_.block_interval.count()))
        seal_locked();
}

std::size_t Engine::pending_count() const {
    std::lock_guard lk(write_mu_);
    return pending_txs_.size();
}

std::optional<Hash256> Engine::last_enqueued() const {
    std::lock_guard lk(write_mu_);
    return last_enqueued_;
}

bool Engine::wait_committed(const Hash256& tx_id, std::chrono::milliseconds timeout) const {
    std::shared_lock lk(state_mu_);
    return commit_cv_.wait_for(lk, timeout, [&] { return chain_.find(tx_id).has_value(); });
}

TimestampMs Engine::block_time_locked() const { return std::max(now(), chain_.tip().timestamp); }

std::optional<std::uint64_t> Engine::seal_locked() {
    if (pending_txs_.empty()) return std::nullopt;

    Block block;
    try {
        block = build_block(chain_, pending_txs_, block_time_locked(), authority_.secret_key);
    } catch (...) {
        // Pending state was validated with the same rules, so this is a bug;
        // drop the batch rather than wedge the writer.
        pending_state_ = committed_;
        pending_txs_.clear();
        oldest_pending_.reset();
        throw;
    }

    const bool durable = dir_ && options_.autopersist;
    if (durable) {
        for (const auto& [_, blob] : pending_blobs_) BlobStore(dir_->blob_dir()).put(blob);
        pending_blobs_.clear();
        durable_append(dir_->chain_file(), serialize_block_line(block));
    }
    {
        std::unique_lock lk(state_mu_);
        chain_.push_block(std::move(block));
        const ApplyContext ctx{authority_.public_key, false};
        for (const auto& tx : chain_.tip().transactions) apply_transaction(committed_, tx, tx.id(), ctx);
    }
    if (durable) persisted_height_ = chain_.height();
    pending_txs_.clear();
    oldest_pending_.reset();

    if (durable) {
        try {
            write_state_file_locked();
        } catch (const std::exception& e) {
            // The block itself is durable; the cache is rebuilt on next start.
            warn(std::string("state file not updated: ") + e.what());
        }
    }
    commit_cv_.notify_all();
    return chain_.height();
}

void Engine::persist() {
    std::lock_guard lk(write_mu_);
    persist_locked();
}

void Engine::persist_locked() {
    if (!dir_) return;
    BlobStore blobs(dir_->blob_dir());
    for (const auto& [_, blob] : pending_blobs_) blobs.put(blob);
    pending_blobs_.clear();
    if (persisted_height_ < chain_.height()) {
        std::string lines;
        for (auto h = persisted_height_ + 1; h <= chain_.height(); ++h) lines += serialize_block_line(chain_.blocks()[h]);
        durable_append(dir_->chain_file(), lines);
        persisted_height_ = chain_.height();
    }
    write_state_file_locked();
}

void Engine::write_state_file_locked() {
    atomic_write_file(dir_->state_file(), serialize_state_file(chain_, committed_, registry_, post_docs_));
}

void Engine::registry_changed_locked() {
    if (dir_ && options_.autopersist) write_state_file_locked();
}

}  // namespace procurechain
