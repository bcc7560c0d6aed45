#pragma once

#include <iosfwd>
#include <optional>
#include <string>

#include "procurechain/accounts.hpp"
#include "procurechain/storage.hpp"

namespace procurechain {

// Stable process exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitIntegrity = 2;
inline constexpr int kExitUsage = 3;

inline constexpr std::string_view kDemoPassword = "procurechain-demo";

// Where a command reports: human text or one JSON object per command.
struct CliOutput {
    std::ostream& out;
    std::ostream& err;
    bool json = false;

    int success(const Json& report, const std::string& text) const;
    int failure(int exit_code, std::string_view error_code, const std::string& message,
                const Json& extra = Json::object()) const;
};

// Every command is atomic: on a nonzero exit the data directory is unchanged.
int cmd_init(const fs::path& data_dir, const std::optional<std::string>& seed_hex, TokenAmount treasury,
             const CliOutput& io);
int cmd_verify(const fs::path& data_dir, const CliOutput& io);
int cmd_backup(const fs::path& data_dir, const fs::path& dest, const CliOutput& io);
int cmd_restore(const fs::path& src, const fs::path& data_dir, const CliOutput& io);
int cmd_faucet(const fs::path& data_dir, std::string_view account_id, TokenAmount amount, const CliOutput& io);
int cmd_kyc_list(const fs::path& data_dir, const CliOutput& io);
int cmd_kyc_review(const fs::path& data_dir, std::string_view account_id, std::string_view decision,
                   const std::optional<std::string>& admin_id, const CliOutput& io);
int cmd_demo_seed(const fs::path& data_dir, const CliOutput& io);

// Full command line entry point, including `serve`.
int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace procurechain
