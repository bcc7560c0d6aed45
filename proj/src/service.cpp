#include "procurechain/service.hpp"

#include <httplib.h>

#include <cstdlib>
#include <iostream>

#include "procurechain/error.hpp"

namespace procurechain {

namespace {

std::optional<std::string> env(const char* name) {
    const char* v = std::getenv(name);
    if (!v || !*v) return std::nullopt;
    return std::string(v);
}

int parse_port(const std::string& text) {
    try {
        std::size_t used = 0;
        int port = std::stoi(text, &used);
        if (used == text.size() && port >= 0 && port <= 65535) return port;
    } catch (const std::exception&) {
    }
    throw Error(ErrorCode::bad_request, "invalid port '" + text + "'");
}

}  // namespace

ServiceConfig ServiceConfig::from_env() {
    ServiceConfig c;
    if (auto dir = env("PROCURECHAIN_DATA_DIR")) c.data_dir = *dir;
    if (auto bind = env("PROCURECHAIN_BIND")) {
        auto colon = bind->rfind(':');
        if (colon == std::string::npos) {
            c.host = *bind;
        } else {
            c.host = bind->substr(0, colon);
            c.port = parse_port(bind->substr(colon + 1));
        }
    }
    if (auto mode = env("PROCURECHAIN_SMTP_MODE")) {
        if (*mode == "capture")
            c.mail_mode = MailMode::capture;
        else if (*mode == "smtp")
            c.mail_mode = MailMode::smtp;
        else
            throw Error(ErrorCode::bad_request, "PROCURECHAIN_SMTP_MODE must be capture or smtp");
    }
    if (auto host = env("SMTP_HOST")) c.smtp.host = *host;
    if (auto port = env("SMTP_PORT")) c.smtp.port = parse_port(*port);
    if (auto user = env("SMTP_USER")) c.smtp.user = *user;
    if (auto pass = env("SMTP_PASS")) c.smtp.password = *pass;
    return c;
}

void ServiceConfig::validate() const {
    if (data_dir.empty()) throw Error(ErrorCode::bad_request, "data directory is not set");
    if (block_interval.count() <= 0 || email_token_ttl.count() <= 0 || session_ttl.count() <= 0)
        throw Error(ErrorCode::bad_request, "durations must be positive");
    if (mail_mode == MailMode::smtp && smtp.host.empty())
        throw Error(ErrorCode::bad_request, "smtp mode needs SMTP_HOST");
}

ApiSession SessionStore::create(std::string account_id, TimestampMs now, std::chrono::milliseconds ttl) {
    ApiSession s{random_token_hex(32), std::move(account_id), now + static_cast<TimestampMs>(ttl.count())};
    std::lock_guard lk(mu_);
    sessions_[s.token] = s;
    return s;
}

std::optional<std::string> SessionStore::lookup(std::string_view token, TimestampMs now) {
    std::lock_guard lk(mu_);
    auto it = sessions_.find(token);
    if (it == sessions_.end()) return std::nullopt;
    if (now >= it->second.expires_at) {
        sessions_.erase(it);
        return std::nullopt;
    }
    return it->second.account_id;
}

void SessionStore::revoke(std::string_view token) {
    std::lock_guard lk(mu_);
    if (auto it = sessions_.find(token); it != sessions_.end()) sessions_.erase(it);
}

void SessionStore::drop_expired(TimestampMs now) {
    std::lock_guard lk(mu_);
    std::erase_if(sessions_, [&](const auto& kv) { return now >= kv.second.expires_at; });
}

Service::Service(ServiceConfig config, std::shared_ptr<MailGateway> gateway) : config_(std::move(config)) {
    config_.validate();
    DataDir dir{config_.data_dir};
    if (!dir.initialized()) {
        // initialize() refuses a non-empty directory, so a half-written or
        // foreign directory is never silently overwritten.
        Engine::initialize(dir.root, generate_keypair(), config_.treasury, config_.clock());
    }

    EngineOptions options;
    options.data_dir = dir.root;
    options.password_strength = config_.password_strength;
    options.email_token_ttl = config_.email_token_ttl;
    options.block_interval = config_.block_interval;
    options.clock = config_.clock;
    engine_ = Engine::open(std::move(options));

    if (gateway)
        mail_ = std::move(gateway);
    else if (config_.mail_mode == MailMode::smtp)
        mail_ = std::make_shared<SmtpGateway>(config_.smtp);
    else
        mail_ = std::make_shared<CaptureGateway>(dir.mailbox_file());
}

Service::~Service() { stop(); }

void Service::start() {
    if (started_) return;
    http_ = std::make_unique<httplib::Server>();
    install_routes(*http_, *this);
    if (config_.port == 0) {
        port_ = http_->bind_to_any_port(config_.host);
    } else {
        port_ = http_->bind_to_port(config_.host, config_.port) ? config_.port : -1;
    }
    if (port_ < 0) throw Error(ErrorCode::conflict, "cannot bind " + config_.host + ":" + std::to_string(config_.port));
    started_ = true;
    http_thread_ = std::thread([this] { http_->listen_after_bind(); });
    scheduler_thread_ = std::thread([this] { scheduler_loop(); });
}

void Service::stop() {
    {
        std::lock_guard lk(stop_mu_);
        stopping_ = true;
    }
    stop_cv_.notify_all();
    if (!started_) return;
    http_->stop();
    if (http_thread_.joinable()) http_thread_.join();
    if (scheduler_thread_.joinable()) scheduler_thread_.join();
    started_ = false;
    try {
        persist_state();
    } catch (const std::exception& e) {
        std::cerr << "procurechain: final persist failed: " << e.what() << "\n";
    }
}

void Service::persist_state() {
    engine_->seal();
    engine_->persist();
}

std::optional<OutboundEmail> Service::send_verification_email(std::string_view account_id) {
    auto token = engine_->verification_token(account_id);
    if (!token) return std::nullopt;
    AccountRecord account = engine_->read([&](const EngineView& v) { return *v.registry.find(account_id); });
    OutboundEmail email = verification_email(account, *token, engine_->now());
    send_with_retries(*mail_, email);
    return email;
}

void Service::scheduler_loop() {
    const auto step = std::clamp(config_.block_interval / 4, std::chrono::milliseconds(5), std::chrono::milliseconds(250));
    std::unique_lock lk(stop_mu_);
    while (!stop_cv_.wait_for(lk, step, [&] { return stopping_; })) {
        lk.unlock();
        try {
            engine_->tick(config_.auto_close_posts);
            sessions_.drop_expired(engine_->now());
        } catch (const std::exception& e) {
            std::cerr << "procurechain: scheduler: " << e.what() << "\n";
        }
        lk.lock();
    }
}

}  // namespace procurechain
