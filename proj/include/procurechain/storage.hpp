#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include "procurechain/crypto.hpp"

namespace procurechain {

namespace fs = std::filesystem;

// Layout of a service data directory.
struct DataDir {
    fs::path root;

    fs::path chain_file() const { return root / "chain.log"; }
    fs::path state_file() const { return root / "state.json"; }
    fs::path authority_file() const { return root / "authority.key.json"; }
    fs::path blob_dir() const { return root / "blobs"; }
    fs::path mailbox_file() const { return root / "mailbox.jsonl"; }
    fs::path demo_key_dir() const { return root / "demo-keys"; }
    fs::path lock_file() const { return root / "LOCK"; }

    bool initialized() const { return fs::exists(chain_file()); }
};

std::string read_file(const fs::path& path);

// Write to <path>.tmp, fsync, rename over <path>, fsync the directory. A crash
// at any point leaves either the old or the new content.
void atomic_write_file(const fs::path& path, std::string_view content);

// Appends and fsyncs. On failure the file is truncated back to its prior length.
void durable_append(const fs::path& path, std::string_view content);

void truncate_file(const fs::path& path, std::size_t length);

// Exclusive advisory lock (flock) on the data directory's LOCK file.
class DirLock {
public:
    static std::optional<DirLock> try_acquire(const DataDir& dir);

    DirLock(DirLock&& other) noexcept;
    DirLock& operator=(DirLock&& other) noexcept;
    DirLock(const DirLock&) = delete;
    DirLock& operator=(const DirLock&) = delete;
    ~DirLock();

private:
    explicit DirLock(int fd) : fd_(fd) {}
    int fd_ = -1;
};

// Files named by the lowercase hex SHA-256 of their content.
class BlobStore {
public:
    explicit BlobStore(fs::path dir) : dir_(std::move(dir)) {}

    Hash256 put(std::span<const std::uint8_t> data) const;
    std::optional<Bytes> get(const Hash256& hash) const;
    bool contains(const Hash256& hash) const { return fs::exists(dir_ / hash.hex()); }

private:
    fs::path dir_;
};

}  // namespace procurechain
