#pragma once

#include <chrono>
#include <condition_variable>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "procurechain/accounts.hpp"
#include "procurechain/error.hpp"
#include "procurechain/keyfile.hpp"
#include "procurechain/ledger.hpp"
#include "procurechain/procurement.hpp"
#include "procurechain/storage.hpp"
#include "procurechain/world_state.hpp"

namespace procurechain {

using namespace std::chrono_literals;

// Reviewer id recorded when KYC decisions come from the operator CLI.
inline constexpr std::string_view kOperatorReviewer = "operator";

using PostDocuments = std::map<std::string, PostDocument, std::less<>>;  // keyed by post_hash hex

struct EngineOptions {
    std::optional<fs::path> data_dir;  // nullopt: purely in memory
    // Persist after every sealed block and every off-chain change. When false,
    // nothing reaches disk until persist(); the CLI uses this so that a
    // failing command leaves the directory untouched.
    bool autopersist = true;
    bool take_lock = true;
    // Truncate an unterminated final chain line on open instead of failing.
    bool recover_torn_tail = true;
    PasswordStrength password_strength = PasswordStrength::interactive;
    std::chrono::milliseconds email_token_ttl = 24h;
    std::chrono::milliseconds block_interval = 2s;
    std::size_t max_pending = 100;
    std::function<TimestampMs()> clock = system_now_ms;
};

struct Registration {
    AccountRecord account;
    std::string key_file;
    EmailToken token;
};

// Read-only view handed to Engine::read callbacks under the shared lock.
struct EngineView {
    const Chain& chain;
    const WorldState& state;
    const Registry& registry;
    const PostDocuments& post_docs;
};

// Everything recovered from a data directory, already cross-checked.
struct LoadedDataDir {
    KeyPair authority;
    Chain chain;
    WorldState state;
    Registry registry;
    PostDocuments post_docs;
    std::vector<std::string> warnings;
};

// Thrown when verify_chain rejects a persisted chain.
class ChainVerificationError : public Error {
public:
    explicit ChainVerificationError(VerificationReport report)
        : Error(ErrorCode::integrity_error, "chain verification failed at height " +
                                                std::to_string(report.failed_height) + " (" +
                                                std::string(failure_class_name(report.failure)) +
                                                "): " + report.detail),
          report_(std::move(report)) {}

    const VerificationReport& report() const noexcept { return report_; }

private:
    VerificationReport report_;
};

// Loads and validates a data directory: strict chain parse, verify_chain,
// replay, derived-state cross-check, post-document and KYC-blob checks.
// recover_torn_tail truncates an unterminated final chain line (a crash
// mid-append) instead of failing.
LoadedDataDir load_data_dir(const DataDir& dir, bool recover_torn_tail);

std::string serialize_state_file(const Chain& chain, const WorldState& state, const Registry& registry,
                                 const PostDocuments& docs);

// The single writer. Every mutation serialises through one mutex and is first
// applied to a pending copy of the world state; sealing moves the pending
// transactions into a block and into the committed state. Readers take a
// shared lock on the committed state only.
class Engine {
public:
    // Writes authority key, genesis chain (treasury minted to the authority)
    // and an initial state file. The directory must be absent or empty.
    static void initialize(const fs::path& dir, const KeyPair& authority, TokenAmount treasury, TimestampMs now);

    static std::unique_ptr<Engine> open(EngineOptions options);
    static std::unique_ptr<Engine> in_memory(const KeyPair& authority, const std::vector<Allocation>& allocations,
                                             EngineOptions options = {});

    ~Engine();
    Engine(const Engine&) = delete;
    Engine& operator=(const Engine&) = delete;

    const PublicKey& authority_key() const noexcept { return authority_.public_key; }
    TimestampMs now() const { return options_.clock(); }
    const EngineOptions& options() const noexcept { return options_; }

    // --- accounts ---
    Registration register_account(std::string_view email, std::string_view display_name, Role role,
                                  std::string_view password, std::optional<KeyPair> keypair = std::nullopt);
    // Admins are only created by operators (CLI), never through registration.
    Registration register_admin(std::string_view email, std::string_view display_name, std::string_view password,
                                std::optional<KeyPair> keypair = std::nullopt);
    std::string verify_email(std::string_view token);
    // Still-valid token for a pending account (a fresh one if the old expired);
    // nullopt once the email is verified.
    std::optional<EmailToken> verification_token(std::string_view account_id);
    std::string authenticate(std::string_view email, std::string_view password) const;
    Hash256 submit_kyc(std::string_view account_id, std::span<const std::uint8_t> document);
    Hash256 review_kyc(std::string_view reviewer_id, std::string_view account_id, KycStatus decision);
    void edit_profile(std::string_view account_id, const Json& fields, std::uint64_t seq, const Signature& sig);
    Hash256 grant(std::string_view account_id, TokenAmount amount);

    // --- client-signed transactions (transfer, post, bid, notarization) ---
    Hash256 submit_signed(const Transaction& tx, const std::optional<PostDocument>& doc = std::nullopt);

    // --- procurement ---
    AuctionResult close_post(std::string_view post_id);
    std::string create_contract(std::string_view post_id);
    Hash256 sign_contract(std::string_view contract_id, const PublicKey& signer, const Signature& sig);
    // Closes every open post past closes_at and opens contracts for awarded ones.
    std::vector<std::string> close_due_posts();

    // --- local-keypair conveniences ---
    Hash256 transfer(const KeyPair& from, std::string_view to_account, TokenAmount amount);
    std::string create_post(const KeyPair& procurer, std::string title, std::string specification,
                            TimestampMs opens_at, TimestampMs closes_at, TokenAmount deposit);
    std::string place_bid(std::string_view post_id, const KeyPair& bidder, TokenAmount amount);
    Hash256 sign_contract(std::string_view contract_id, const KeyPair& signer);
    Hash256 notarize(const KeyPair& owner, const Hash256& document_hash);

    // Nonce the next transaction from this key must carry, counting pending ones.
    std::uint64_t next_nonce(const PublicKey& key) const;

    // --- block production ---
    std::optional<std::uint64_t> seal();
    // Scheduler step: close due auctions, then seal if the oldest pending
    // transaction has waited a full block interval.
    void tick(bool close_due = true);
    std::size_t pending_count() const;
    // Id of the most recently enqueued transaction. Blocks commit pending
    // transactions in order, so once it is committed so is everything before it.
    std::optional<Hash256> last_enqueued() const;
    bool wait_committed(const Hash256& tx_id, std::chrono::milliseconds timeout) const;
    void persist();

    template <typename F>
    decltype(auto) read(F&& f) const {
        std::shared_lock lock(state_mu_);
        return std::forward<F>(f)(EngineView{chain_, committed_, registry_, post_docs_});
    }

private:
    Engine(EngineOptions options, KeyPair authority, Chain chain, WorldState state, Registry registry,
           PostDocuments docs);

    Registration register_locked(std::string_view email, std::string_view display_name, Role role,
                                 std::string_view password, std::optional<KeyPair> keypair);
    Hash256 enqueue(Transaction tx);
    Hash256 enqueue_authority(TxKind kind, const Json& payload);
    AuctionResult close_post_locked(std::string_view post_id);
    std::string create_contract_locked(std::string_view post_id);
    std::optional<std::uint64_t> seal_locked();
    void persist_locked();
    void write_state_file_locked();
    void registry_changed_locked();
    TimestampMs block_time_locked() const;

    EngineOptions options_;
    std::optional<DataDir> dir_;
    std::optional<DirLock> lock_;
    KeyPair authority_;

    mutable std::mutex write_mu_;
    mutable std::shared_mutex state_mu_;
    mutable std::condition_variable_any commit_cv_;

    // Guarded by state_mu_ for readers; only mutated while write_mu_ is held.
    Chain chain_;
    WorldState committed_;
    Registry registry_;
    PostDocuments post_docs_;

    // Writer-only.
    WorldState pending_state_;
    std::vector<Transaction> pending_txs_;
    std::optional<TimestampMs> oldest_pending_;
    std::optional<Hash256> last_enqueued_;
    std::map<Hash256, Bytes> pending_blobs_;
    std::uint64_t persisted_height_ = 0;
};

}  // namespace procurechain
