#pragma once

#include <filesystem>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "procurechain/accounts.hpp"
#include "procurechain/encoding.hpp"

namespace procurechain {

struct OutboundEmail {
    std::string to;
    std::string subject;
    std::string body;
    TimestampMs sent_at = 0;

    Json to_json() const;
};

class MailGateway {
public:
    virtual ~MailGateway() = default;
    // Throws Error(mail_gateway_error) when delivery fails.
    virtual void send(const OutboundEmail& email) = 0;
};

// Keeps every message in memory and, if given a path, appends it as one JSON
// line to a mailbox file.
class CaptureGateway : public MailGateway {
public:
    explicit CaptureGateway(std::optional<std::filesystem::path> mailbox = std::nullopt)
        : mailbox_(std::move(mailbox)) {}

    void send(const OutboundEmail& email) override;
    std::vector<OutboundEmail> messages() const;
    // Test hook: the next n sends fail.
    void fail_next(int n);

private:
    std::optional<std::filesystem::path> mailbox_;
    mutable std::mutex mu_;
    std::vector<OutboundEmail> sent_;
    int failures_ = 0;
};

struct SmtpSettings {
    std::string host;
    int port = 587;
    std::string user;
    std::string password;
    std::string from = "no-reply@procurechain.local";
};

class SmtpGateway : public MailGateway {
public:
    explicit SmtpGateway(SmtpSettings settings) : settings_(std::move(settings)) {}
    void send(const OutboundEmail& email) override;

private:
    SmtpSettings settings_;
};

inline constexpr int kMailRetries = 3;

OutboundEmail verification_email(const AccountRecord& account, const EmailToken& token, TimestampMs now);

// One attempt plus up to kMailRetries retries; rethrows the last failure.
void send_with_retries(MailGateway& gateway, const OutboundEmail& email);

// Pulls the verification token out of a message body.
std::optional<std::string> extract_token(std::string_view body);

}  // namespace procurechain
