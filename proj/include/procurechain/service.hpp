#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

#include "procurechain/engine.hpp"
#include "procurechain/mail.hpp"

namespace httplib {
class Server;
}

namespace procurechain {

enum class MailMode { capture, smtp };

struct ServiceConfig {
    fs::path data_dir;
    std::string host = "127.0.0.1";
    int port = 8080;  // 0 picks a free port
    std::chrono::milliseconds block_interval = 2s;
    std::chrono::milliseconds email_token_ttl = 24h;
    std::chrono::milliseconds session_ttl = 12h;
    MailMode mail_mode = MailMode::capture;
    SmtpSettings smtp;
    std::optional<fs::path> ui_dir;  // served under /app when set
    PasswordStrength password_strength = PasswordStrength::interactive;
    TokenAmount treasury = TokenAmount::tokens(1'000'000);  // genesis mint when creating a fresh chain
    std::function<TimestampMs()> clock = system_now_ms;
    // When false, posts past their deadline stay open until POST .../close.
    bool auto_close_posts = true;

    // Reads PROCURECHAIN_DATA_DIR, PROCURECHAIN_BIND (host:port),
    // PROCURECHAIN_SMTP_MODE and SMTP_HOST/PORT/USER/PASS on top of the defaults.
    static ServiceConfig from_env();
    // Throws bad_request when a duration is not positive or the data dir is unset.
    void validate() const;
};

struct ApiSession {
    std::string token;
    std::string account_id;
    TimestampMs expires_at = 0;
};

class SessionStore {
public:
    ApiSession create(std::string account_id, TimestampMs now, std::chrono::milliseconds ttl);
    // Account id for a live session; expired sessions are dropped on lookup.
    std::optional<std::string> lookup(std::string_view token, TimestampMs now);
    void revoke(std::string_view token);
    void drop_expired(TimestampMs now);

private:
    std::mutex mu_;
    std::map<std::string, ApiSession, std::less<>> sessions_;
};

class Service {
public:
    // Opens the data directory, creating a genesis chain if it is empty or
    // absent. A gateway may be injected; otherwise one is built from the config.
    explicit Service(ServiceConfig config, std::shared_ptr<MailGateway> gateway = nullptr);
    ~Service();
    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    // Binds and starts the HTTP listener and the scheduler in background threads.
    void start();
    void stop();
    int port() const noexcept { return port_; }

    Engine& engine() noexcept { return *engine_; }
    MailGateway& mail() noexcept { return *mail_; }
    SessionStore& sessions() noexcept { return sessions_; }
    const ServiceConfig& config() const noexcept { return config_; }

    // Seals pending transactions and flushes chain and state to disk.
    void persist_state();

    // Sends (with retries) the account's live verification token, issuing a new
    // one if the old expired. Returns nullopt for verified accounts.
    std::optional<OutboundEmail> send_verification_email(std::string_view account_id);

private:
    void scheduler_loop();

    ServiceConfig config_;
    std::unique_ptr<Engine> engine_;
    std::shared_ptr<MailGateway> mail_;
    SessionStore sessions_;
    std::unique_ptr<httplib::Server> http_;
    int port_ = 0;

    std::thread http_thread_;
    std::thread scheduler_thread_;
    std::mutex stop_mu_;
    std::condition_variable stop_cv_;
    bool stopping_ = false;
    bool started_ = false;
};

// Registers every /api/v1 route, /healthz and the /app mount.
void install_routes(httplib::Server& server, Service& service);

}  // namespace procurechain
