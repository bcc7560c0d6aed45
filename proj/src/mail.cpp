#include "procurechain/mail.hpp"

#include <curl/curl.h>

#include <cstring>
#include <fstream>

#include "procurechain/error.hpp"

namespace procurechain {

namespace {

constexpr std::string_view kTokenLabel = "Verification token: ";

struct UploadCursor {
    std::string data;
    std::size_t offset = 0;
};

std::size_t read_payload(char* buffer, std::size_t size, std::size_t nitems, void* user) {
    auto* cursor = static_cast<UploadCursor*>(user);
    const std::size_t n = std::min(size * nitems, cursor->data.size() - cursor->offset);
    std::memcpy(buffer, cursor->data.data() + cursor->offset, n);
    cursor->offset += n;
    return n;
}

}  // namespace

Json OutboundEmail::to_json() const {
    return {{"body", body}, {"sent_at", format_rfc3339(sent_at)}, {"subject", subject}, {"to", to}};
}

void CaptureGateway::send(const OutboundEmail& email) {
    std::lock_guard lk(mu_);
    if (failures_ > 0) {
        --failures_;
        throw Error(ErrorCode::mail_gateway_error, "capture gateway: injected failure");
    }
    if (mailbox_) {
        std::ofstream out(*mailbox_, std::ios::app | std::ios::binary);
        out << canonical_json(email.to_json()) << "\n";
        out.flush();
        if (!out) throw Error(ErrorCode::mail_gateway_error, "cannot append to " + mailbox_->string());
    }
    sent_.push_back(email);
}

std::vector<OutboundEmail> CaptureGateway::messages() const {
    std::lock_guard lk(mu_);
    return sent_;
}

void CaptureGateway::fail_next(int n) {
    std::lock_guard lk(mu_);
    failures_ = n;
}

void SmtpGateway::send(const OutboundEmail& email) {
    CURL* curl = curl_easy_init();
    if (!curl) throw Error(ErrorCode::mail_gateway_error, "curl_easy_init failed");

    UploadCursor cursor;
    cursor.data = "To: <" + email.to + ">\r\nFrom: <" + settings_.from + ">\r\nSubject: " + email.subject +
                  "\r\n\r\n" + email.body + "\r\n";
    const std::string url = "smtp://" + settings_.host + ":" + std::to_string(settings_.port);
    const std::string from = "<" + settings_.from + ">";
    const std::string to = "<" + email.to + ">";
    curl_slist* recipients = curl_slist_append(nullptr, to.c_str());

    curl_easy_setopt(curl, CURLOPT_URL, url.c_str());
    curl_easy_setopt(curl, CURLOPT_USE_SSL, static_cast<long>(CURLUSESSL_TRY));
    if (!settings_.user.empty()) {
        curl_easy_setopt(curl, CURLOPT_USERNAME, settings_.user.c_str());
        curl_easy_setopt(curl, CURLOPT_PASSWORD, settings_.password.c_str());
    }
    curl_easy_setopt(curl, CURLOPT_MAIL_FROM, from.c_str());
    curl_easy_setopt(curl, CURLOPT_MAIL_RCPT, recipients);
    curl_easy_setopt(curl, CURLOPT_READFUNCTION, read_payload);
    curl_easy_setopt(curl, CURLOPT_READDATA, &cursor);
    curl_easy_setopt(curl, CURLOPT_UPLOAD, 1L);
    curl_easy_setopt(curl, CURLOPT_TIMEOUT, 20L);

    const CURLcode rc = curl_easy_perform(curl);
    curl_slist_free_all(recipients);
    curl_easy_cleanup(curl);
    if (rc != CURLE_OK) throw Error(ErrorCode::mail_gateway_error, std::string("smtp: ") + curl_easy_strerror(rc));
}

OutboundEmail verification_email(const AccountRecord& account, const EmailToken& token, TimestampMs now) {
    OutboundEmail email;
    email.to = account.email;
    email.subject = "Verify your ProcureChain account";
    email.body = "Hello " + account.display_name + ",\n\nConfirm your email address to activate account " +
                 account.id + ".\n\n" + std::string(kTokenLabel) + token.token + "\n\nThe token expires at " +
                 format_rfc3339(token.expires_at) + ".\n";
    email.sent_at = now;
    return email;
}

void send_with_retries(MailGateway& gateway, const OutboundEmail& email) {
    for (int attempt = 0;; ++attempt) {
        try {
            gateway.send(email);
            return;
        } catch (const Error&) {
            if (attempt == kMailRetries) throw;
        }
    }
}

std::optional<std::string> extract_token(std::string_view body) {
    auto pos = body.find(kTokenLabel);
    if (pos == std::string_view::npos) return std::nullopt;
    body.remove_prefix(pos + kTokenLabel.size());
    return std::string(body.substr(0, body.find('\n')));
}

}  // namespace procurechain
