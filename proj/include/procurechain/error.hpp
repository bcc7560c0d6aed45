#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace procurechain {

// Stable machine-readable error classes. The string forms are part of the
// HTTP error envelope and the CLI's --json reports, so never rename them.
enum class ErrorCode {
    bad_request,
    unauthenticated,
    invalid_credentials,
    email_unverified,
    forbidden,
    not_found,
    conflict,
    rejected,
    immutable_field,
    insufficient_funds,
    invalid_signature,
    nonce_mismatch,
    clock_regression,
    verification_failed,
    parse_error,
    version_error,
    integrity_error,
    mail_gateway_error,
    storage_error,
    internal,
};

std::string_view to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

// Raised by append_block when a submitted transaction fails validation.
class TransactionRejected : public Error {
public:
    TransactionRejected(ErrorCode code, std::size_t index, const std::string& message)
        : Error(code, message + " (tx #" + std::to_string(index) + ")"), index_(index) {}

    std::size_t index() const noexcept { return index_; }

private:
    std::size_t index_;
};

}  // namespace procurechain
