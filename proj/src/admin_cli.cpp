#include "procurechain/admin_cli.hpp"

#include <CLI11.hpp>
#include <signal.h>

#include <iostream>

#include "procurechain/chain_file.hpp"
#include "procurechain/engine.hpp"
#include "procurechain/error.hpp"
#include "procurechain/service.hpp"

namespace procurechain {

namespace {

struct DemoAccount {
    std::string name;
    Role role;
};

const DemoAccount kDemoAccounts[] = {
    {"admin", Role::admin},      {"procurer1", Role::procurer}, {"procurer2", Role::procurer},
    {"bidder1", Role::bidder},   {"bidder2", Role::bidder},     {"bidder3", Role::bidder},
    {"bidder4", Role::bidder},   {"bidder5", Role::bidder},
};

constexpr std::uint64_t kDemoFunding = 10'000;  // tokens per demo account
constexpr TimestampMs kDemoPostWindow = 7ull * 24 * 3600 * 1000;

KeyPair demo_keypair(const std::string& name) {
    const Hash256 seed = digest("procurechain-demo:" + name);
    return generate_keypair(seed.view());
}

int exit_code_for(ErrorCode code) {
    switch (code) {
        case ErrorCode::integrity_error:
        case ErrorCode::parse_error:
        case ErrorCode::version_error: return kExitIntegrity;
        default: return kExitValidation;
    }
}

// Runs a command body, turning exceptions into the exit-code contract.
template <typename F>
int guarded(const CliOutput& io, F body) {
    try {
        return body();
    } catch (const ChainVerificationError& e) {
        return io.failure(kExitIntegrity, "integrity_error", e.what(), {{"report", e.report().to_json()}});
    } catch (const ChainParseError& e) {
        Json extra = Json::object();
        if (e.block_index()) extra["failed_height"] = *e.block_index();
        return io.failure(kExitIntegrity, "parse_error", e.what(), extra);
    } catch (const Error& e) {
        return io.failure(exit_code_for(e.code()), to_string(e.code()), e.what());
    } catch (const std::exception& e) {
        return io.failure(kExitValidation, "internal", e.what());
    }
}

// Opens the directory in deferred mode: nothing is written until persist().
std::unique_ptr<Engine> open_deferred(const fs::path& data_dir) {
    EngineOptions options;
    options.data_dir = data_dir;
    options.autopersist = false;
    options.recover_torn_tail = false;
    return Engine::open(std::move(options));
}

void commit(Engine& engine) {
    engine.seal();
    engine.persist();
}

// Copies a data directory's contents, leaving out the lock file.
void copy_data_dir(const fs::path& from, const fs::path& to) {
    fs::create_directories(to);
    for (const auto& entry : fs::directory_iterator(from)) {
        if (entry.path().filename() == DataDir{from}.lock_file().filename()) continue;
        fs::copy(entry.path(), to / entry.path().filename(), fs::copy_options::recursive);
    }
}

std::string compact_timestamp(TimestampMs t) {
    std::string s = format_rfc3339(t);
    std::erase_if(s, [](char c) { return c == '-' || c == ':'; });
    return s;
}

Json verification_summary(const LoadedDataDir& loaded) {
    return {{"valid", true},
            {"height", loaded.chain.height()},
            {"tx_count", loaded.chain.tx_count()},
            {"tip_hash", loaded.chain.tip().header_digest().hex()},
            {"accounts", loaded.registry.accounts().size()},
            {"supply_micro", loaded.state.supply},
            {"warnings", loaded.warnings}};
}

}  // namespace

int CliOutput::success(const Json& report, const std::string& text) const {
    if (json) {
        Json j = report;
        j["ok"] = true;
        out << j.dump() << "\n";
    } else {
        out << text;
        if (!text.empty() && text.back() != '\n') out << "\n";
    }
    return kExitOk;
}

int CliOutput::failure(int exit_code, std::string_view error_code, const std::string& message,
                       const Json& extra) const {
    if (json) {
        Json j = extra;
        j["ok"] = false;
        j["error_code"] = error_code;
        j["message"] = message;
        out << j.dump() << "\n";
    } else {
        err << "error (" << error_code << "): " << message << "\n";
    }
    return exit_code;
}

int cmd_init(const fs::path& data_dir, const std::optional<std::string>& seed_hex, TokenAmount treasury,
             const CliOutput& io) {
    return guarded(io, [&] {
        KeyPair authority;
        if (seed_hex) {
            auto seed = from_hex(*seed_hex);
            if (!seed || seed->size() != 32) throw Error(ErrorCode::bad_request, "--seed must be 64 lowercase hex characters");
            authority = generate_keypair(*seed);
        } else {
            authority = generate_keypair();
        }
        Engine::initialize(data_dir, authority, treasury, system_now_ms());
        return io.success({{"authority_public_key", authority.public_key.hex()}, {"height", 0},
                           {"treasury_micro", treasury.micro_units}},
                          "initialised " + data_dir.string() + "\nauthority public key: " + authority.public_key.hex());
    });
}

int cmd_verify(const fs::path& data_dir, const CliOutput& io) {
    DataDir dir{data_dir};
    if (!dir.initialized())
        return io.failure(kExitValidation, "chain_missing", "no chain file at " + dir.chain_file().string());
    return guarded(io, [&] {
        // No lock: verify only reads, so it can run beside a live service.
        LoadedDataDir loaded = load_data_dir(dir, false);
        std::string text = "chain valid: height " + std::to_string(loaded.chain.height()) + ", " +
                           std::to_string(loaded.chain.tx_count()) + " transactions";
        for (const auto& w : loaded.warnings) text += "\nwarning: " + w;
        return io.success(verification_summary(loaded), text);
    });
}

int cmd_backup(const fs::path& data_dir, const fs::path& dest, const CliOutput& io) {
    return guarded(io, [&] {
        DataDir dir{data_dir};
        if (!dir.initialized()) throw Error(ErrorCode::not_found, "no chain file at " + dir.chain_file().string());
        auto lock = DirLock::try_acquire(dir);
        if (!lock) throw Error(ErrorCode::conflict, data_dir.string() + " is locked by another process");
        load_data_dir(dir, false);

        fs::create_directories(dest);
        const std::string stamp = compact_timestamp(system_now_ms());
        fs::path target = dest / stamp;
        for (int n = 1; fs::exists(target); ++n) target = dest / (stamp + "-" + std::to_string(n));
        const fs::path partial = dest / ("." + target.filename().string() + ".partial");
        fs::remove_all(partial);
        try {
            copy_data_dir(data_dir, partial);
            fs::rename(partial, target);
        } catch (...) {
            fs::remove_all(partial);
            throw;
        }
        return io.success({{"snapshot", target.string()}}, "snapshot written to " + target.string());
    });
}

int cmd_restore(const fs::path& src, const fs::path& data_dir, const CliOutput& io) {
    return guarded(io, [&] {
        if (fs::exists(data_dir) && !fs::is_empty(data_dir))
            throw Error(ErrorCode::conflict, data_dir.string() + " is not empty; refusing to restore over it");
        DataDir source{src};
        if (!source.initialized()) throw Error(ErrorCode::not_found, "no chain file in snapshot " + src.string());
        load_data_dir(source, false);

        const fs::path parent = fs::absolute(data_dir).parent_path();
        fs::create_directories(parent);
        const fs::path staging = parent / ("." + data_dir.filename().string() + ".restore-" + random_token_hex(4));
        try {
            copy_data_dir(src, staging);
            atomic_write_file(DataDir{staging}.lock_file(), "");
            LoadedDataDir loaded = load_data_dir(DataDir{staging}, false);
            if (fs::exists(data_dir)) fs::remove(data_dir);  // empty, checked above
            fs::rename(staging, data_dir);
            return io.success(verification_summary(loaded),
                              "restored " + src.string() + " into " + data_dir.string() + "; chain valid at height " +
                                  std::to_string(loaded.chain.height()));
        } catch (...) {
            fs::remove_all(staging);
            throw;
        }
    });
}

int cmd_faucet(const fs::path& data_dir, std::string_view account_id, TokenAmount amount, const CliOutput& io) {
    return guarded(io, [&] {
        if (amount.micro_units == 0) throw Error(ErrorCode::bad_request, "amount must be positive");
        auto engine = open_deferred(data_dir);
        const Hash256 tx = engine->grant(account_id, amount);
        commit(*engine);
        const auto balance = engine->read([&](const EngineView& v) {
            return v.state.balance_of(v.registry.find(account_id)->public_key);
        });
        return io.success({{"tx_id", tx.hex()}, {"account_id", account_id}, {"balance_micro", balance.micro_units}},
                          "granted " + amount.to_string() + " to " + std::string(account_id) + " (balance " +
                              balance.to_string() + ")\ntx " + tx.hex());
    });
}

int cmd_kyc_list(const fs::path& data_dir, const CliOutput& io) {
    return guarded(io, [&] {
        auto engine = open_deferred(data_dir);
        Json list = Json::array();
        std::string text;
        engine->read([&](const EngineView& v) {
            for (const auto& [id, entry] : v.state.kyc) {
                if (entry.status != KycStatus::pending) continue;
                const AccountRecord* rec = v.registry.find(id);
                const std::string email = rec ? rec->email : "";
                list.push_back({{"account_id", id},
                                {"email", email},
                                {"document_hash", entry.document_hash.hex()},
                                {"submitted_at", format_rfc3339(entry.submitted_at)}});
                text += id + "  " + email + "  " + format_rfc3339(entry.submitted_at) + "  " +
                        entry.document_hash.hex() + "\n";
            }
        });
        if (text.empty()) text = "no pending KYC submissions";
        return io.success({{"pending", list}}, text);
    });
}

int cmd_kyc_review(const fs::path& data_dir, std::string_view account_id, std::string_view decision,
                   const std::optional<std::string>& admin_id, const CliOutput& io) {
    return guarded(io, [&] {
        auto status = kyc_status_from_string(decision);
        if (!status || (*status != KycStatus::verified && *status != KycStatus::rejected))
            throw Error(ErrorCode::bad_request, "--decision must be verified or rejected");
        auto engine = open_deferred(data_dir);
        const Hash256 tx =
            engine->review_kyc(admin_id ? std::string_view(*admin_id) : kOperatorReviewer, account_id, *status);
        commit(*engine);
        return io.success({{"tx_id", tx.hex()}, {"account_id", account_id}, {"kyc_status", decision}},
                          std::string(account_id) + " KYC " + std::string(decision) + "\ntx " + tx.hex());
    });
}

int cmd_demo_seed(const fs::path& data_dir, const CliOutput& io) {
    return guarded(io, [&] {
        auto engine = open_deferred(data_dir);
        const TimestampMs now = engine->now();
        Json accounts = Json::array();
        std::vector<std::pair<fs::path, std::string>> key_files;

        for (const auto& demo : kDemoAccounts) {
            const KeyPair kp = demo_keypair(demo.name);
            const std::string id = account_id_of(kp.public_key);
            const std::string email = demo.name + "@demo.procurechain.local";
            const bool exists = engine->read([&](const EngineView& v) { return v.registry.find(id) != nullptr; });
            if (!exists) {
                Registration reg = demo.role == Role::admin
                                       ? engine->register_admin(email, demo.name, kDemoPassword, kp)
                                       : engine->register_account(email, demo.name, demo.role, kDemoPassword, kp);
                engine->verify_email(reg.token.token);
            }
            if (auto token = engine->verification_token(id)) engine->verify_email(token->token);

            const KycStatus kyc = engine->read([&](const EngineView& v) { return v.state.kyc_status(id); });
            if (kyc == KycStatus::none || kyc == KycStatus::rejected) {
                engine->submit_kyc(id, to_bytes("demo identity document for " + demo.name));
                engine->review_kyc(kOperatorReviewer, id, KycStatus::verified);
            } else if (kyc == KycStatus::pending) {
                engine->review_kyc(kOperatorReviewer, id, KycStatus::verified);
            }

            const auto balance = engine->read([&](const EngineView& v) { return v.state.balance_of(kp.public_key); });
            const auto target = TokenAmount::tokens(kDemoFunding);
            if (balance < target) engine->grant(id, TokenAmount{target.micro_units - balance.micro_units});

            const fs::path key_path = DataDir{data_dir}.demo_key_dir() / (demo.name + ".key.json");
            key_files.emplace_back(key_path, export_key_file(kp, id, now) + "\n");
            accounts.push_back({{"name", demo.name},
                                {"account_id", id},
                                {"email", email},
                                {"role", to_string(demo.role)},
                                {"key_file", key_path.string()}});
        }

        Json posts = Json::array();
        for (const char* name : {"procurer1", "procurer2"}) {
            const KeyPair kp = demo_keypair(name);
            auto existing = engine->read([&](const EngineView& v) -> std::optional<std::string> {
                for (const auto& [pid, post] : v.state.posts)
                    if (post.procurer == kp.public_key) return pid;
                return std::nullopt;
            });
            std::string pid = existing ? *existing
                                       : engine->create_post(kp, std::string("Demo tender from ") + name,
                                                             "Supply 100 units of office equipment as specified by " +
                                                                 std::string(name) + ".",
                                                             now, now + kDemoPostWindow, TokenAmount::tokens(10));
            posts.push_back(pid);
        }

        commit(*engine);
        // Key files are convenience copies; written only once the chain is durable.
        fs::create_directories(DataDir{data_dir}.demo_key_dir());
        for (const auto& [path, content] : key_files) atomic_write_file(path, content);

        std::string text = "demo accounts (password \"" + std::string(kDemoPassword) + "\"):\n";
        for (const auto& a : accounts)
            text += "  " + a["role"].get<std::string>() + "  " + a["account_id"].get<std::string>() + "  " +
                    a["email"].get<std::string>() + "\n";
        text += "open posts: " + posts[0].get<std::string>() + ", " + posts[1].get<std::string>();
        return io.success({{"accounts", accounts}, {"posts", posts}, {"password", kDemoPassword}}, text);
    });
}

namespace {

int cmd_serve(ServiceConfig config, const CliOutput& io) {
    sigset_t signals;
    sigemptyset(&signals);
    sigaddset(&signals, SIGINT);
    sigaddset(&signals, SIGTERM);
    // Block before any thread starts so that only sigwait below sees them.
    pthread_sigmask(SIG_BLOCK, &signals, nullptr);
    return guarded(io, [&] {
        Service service(std::move(config));
        service.start();
        io.out << "procurechain listening on http://" << service.config().host << ":" << service.port() << std::endl;
        int sig = 0;
        sigwait(&signals, &sig);
        service.stop();
        return kExitOk;
    });
}

}  // namespace

int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"ProcureChain operator tool"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string data_dir;
    bool json = false;
    app.add_option("--data-dir", data_dir, "Service data directory")->envname("PROCURECHAIN_DATA_DIR");
    app.add_flag("--json", json, "Machine-readable output");

    auto* init = app.add_subcommand("init", "Create a genesis chain and authority key");
    std::optional<std::string> seed;
    std::string treasury = "1000000";
    init->add_option("--seed", seed, "32-byte authority seed, hex");
    init->add_option("--treasury", treasury, "Tokens minted to the authority for faucet grants");

    auto* verify = app.add_subcommand("verify", "Verify the chain and cross-check derived state");

    auto* backup = app.add_subcommand("backup", "Write a timestamped snapshot");
    std::string dest;
    backup->add_option("--dest", dest, "Directory that receives snapshots")->required();

    auto* restore = app.add_subcommand("restore", "Restore a snapshot into an empty data directory");
    std::string src;
    restore->add_option("--src", src, "Snapshot directory")->required();

    auto* faucet = app.add_subcommand("faucet", "Grant demo tokens from the treasury");
    std::string to, amount;
    faucet->add_option("--to", to, "Account id")->required();
    faucet->add_option("--amount", amount, "Token amount, e.g. 250 or 12.5")->required();

    auto* kyc_list = app.add_subcommand("kyc-list", "List pending KYC submissions");

    auto* kyc_review = app.add_subcommand("kyc-review", "Approve or reject a pending KYC submission");
    std::string account, decision;
    std::optional<std::string> admin;
    kyc_review->add_option("--account", account, "Account id")->required();
    kyc_review->add_option("--decision", decision, "verified or rejected")->required();
    kyc_review->add_option("--admin", admin, "Admin account id to record as reviewer");

    auto* demo_seed = app.add_subcommand("demo-seed", "Create demo accounts and posts (idempotent)");

    auto* serve = app.add_subcommand("serve", "Run the HTTP service");
    std::string bind, ui_dir, smtp_mode;
    long block_interval_ms = 0;
    serve->add_option("--bind", bind, "host:port (overrides PROCURECHAIN_BIND)");
    serve->add_option("--ui-dir", ui_dir, "Static web UI directory served under /app");
    serve->add_option("--block-interval-ms", block_interval_ms, "Block interval in milliseconds");
    serve->add_option("--smtp-mode", smtp_mode, "capture or smtp")->check(CLI::IsMember({"capture", "smtp"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e, out, err);
        if (rc == 0) return kExitOk;
        err << app.help();
        return kExitUsage;
    }

    const CliOutput io{out, err, json};
    auto need_dir = [&]() -> bool {
        if (!data_dir.empty()) return true;
        err << "--data-dir (or PROCURECHAIN_DATA_DIR) is required\n";
        return false;
    };

    if (*serve) {
        ServiceConfig config;
        try {
            if (!bind.empty()) setenv("PROCURECHAIN_BIND", bind.c_str(), 1);
            if (!smtp_mode.empty()) setenv("PROCURECHAIN_SMTP_MODE", smtp_mode.c_str(), 1);
            config = ServiceConfig::from_env();
        } catch (const Error& e) {
            err << e.what() << "\n";
            return kExitUsage;
        }
        if (!data_dir.empty()) config.data_dir = data_dir;
        if (!ui_dir.empty()) config.ui_dir = ui_dir;
        if (block_interval_ms > 0) config.block_interval = std::chrono::milliseconds(block_interval_ms);
        return cmd_serve(std::move(config), io);
    }

    if (!need_dir()) return kExitUsage;
    if (*init) {
        auto t = TokenAmount::parse(treasury);
        if (!t) {
            err << "--treasury must be a token amount\n";
            return kExitUsage;
        }
        return cmd_init(data_dir, seed, *t, io);
    }
    if (*verify) return cmd_verify(data_dir, io);
    if (*backup) return cmd_backup(data_dir, dest, io);
    if (*restore) return cmd_restore(src, data_dir, io);
    if (*faucet) {
        auto a = TokenAmount::parse(amount);
        if (!a) {
            err << "--amount must be a token amount\n";
            return kExitUsage;
        }
        return cmd_faucet(data_dir, to, *a, io);
    }
    if (*kyc_list) return cmd_kyc_list(data_dir, io);
    if (*kyc_review) return cmd_kyc_review(data_dir, account, decision, admin, io);
    if (*demo_seed) return cmd_demo_seed(data_dir, io);
    return kExitUsage;
}

}  // namespace procurechain
