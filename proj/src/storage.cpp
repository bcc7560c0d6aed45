#include "procurechain/storage.hpp"

#include <cerrno>
#include <cstring>
#include <fstream>
#include <sstream>

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include "procurechain/error.hpp"

namespace procurechain {

namespace {

[[noreturn]] void throw_errno(const std::string& what, const fs::path& path) {
    throw Error(ErrorCode::storage_error, what + " " + path.string() + ": " + std::strerror(errno));
}

void write_all(int fd, std::string_view content, const fs::path& path) {
    const char* p = content.data();
    std::size_t left = content.size();
    while (left > 0) {
        ssize_t n = ::write(fd, p, left);
        if (n < 0) {
            if (errno == EINTR) continue;
            throw_errno("write", path);
        }
        p += n;
        left -= static_cast<std::size_t>(n);
    }
}

void fsync_dir(const fs::path& dir) {
    int fd = ::open(dir.c_str(), O_RDONLY | O_DIRECTORY);
    if (fd < 0) return;
    ::fsync(fd);
    ::close(fd);
}

}  // namespace

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::storage_error, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void atomic_write_file(const fs::path& path, std::string_view content) {
    fs::path tmp = path;
    tmp += ".tmp";
    int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644);
    if (fd < 0) throw_errno("open", tmp);
    try {
        write_all(fd, content, tmp);
        if (::fsync(fd) != 0) throw_errno("fsync", tmp);
    } catch (...) {
        ::close(fd);
        ::unlink(tmp.c_str());
        throw;
    }
    ::close(fd);
    if (::rename(tmp.c_str(), path.c_str()) != 0) {
        ::unlink(tmp.c_str());
        throw_errno("rename", path);
    }
    fsync_dir(path.parent_path());
}

void durable_append(const fs::path& path, std::string_view content) {
    int fd = ::open(path.c_str(), O_WRONLY | O_APPEND | O_CREAT | O_CLOEXEC, 0644);
    if (fd < 0) throw_errno("open", path);
    off_t before = ::lseek(fd, 0, SEEK_END);
    try {
        write_all(fd, content, path);
        if (::fsync(fd) != 0) throw_errno("fsync", path);
    } catch (...) {
        if (before >= 0 && ::ftruncate(fd, before) == 0) ::fsync(fd);
        ::close(fd);
        throw;
    }
    ::close(fd);
}

void truncate_file(const fs::path& path, std::size_t length) {
    if (::truncate(path.c_str(), static_cast<off_t>(length)) != 0) throw_errno("truncate", path);
}

std::optional<DirLock> DirLock::try_acquire(const DataDir& dir) {
    int fd = ::open(dir.lock_file().c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
    if (fd < 0) throw_errno("open", dir.lock_file());
    if (::flock(fd, LOCK_EX | LOCK_NB) != 0) {
        ::close(fd);
        return std::nullopt;
    }
    return DirLock(fd);
}

DirLock::DirLock(DirLock&& other) noexcept : fd_(std::exchange(other.fd_, -1)) {}

DirLock& DirLock::operator=(DirLock&& other) noexcept {
    if (this != &other) {
        if (fd_ >= 0) ::close(fd_);
        fd_ = std::exchange(other.fd_, -1);
    }
    return *this;
}

DirLock::~DirLock() {
    if (fd_ >= 0) ::close(fd_);
}

Hash256 BlobStore::put(std::span<const std::uint8_t> data) const {
    Hash256 h = digest(data);
    fs::create_directories(dir_);
    fs::path target = dir_ / h.hex();
    if (!fs::exists(target))
        atomic_write_file(target, std::string_view(reinterpret_cast<const char*>(data.data()), data.size()));
    return h;
}

std::optional<Bytes> BlobStore::get(const Hash256& hash) const {
    fs::path target = dir_ / hash.hex();
    if (!fs::exists(target)) return std::nullopt;
    auto text = read_file(target);
    return Bytes(text.begin(), text.end());
}

}  // namespace procurechain
