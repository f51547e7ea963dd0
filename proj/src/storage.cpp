#include "datapool/storage.hpp"

#include <fcntl.h>
#include <unistd.h>
#include <zlib.h>

#include <cerrno>
#include <cstring>
#include <fstream>
#include <sstream>

#include "datapool/error.hpp"

namespace datapool {
namespace {

constexpr std::size_t kHeaderSize = 16;
constexpr std::size_t kRecordHeaderSize = 16;
constexpr std::uint32_t kMaxPayload = 1u << 30;

[[noreturn]] void io_error(const std::string& what) {
  fail(ErrorKind::storage, "io_error", what + ": " + std::strerror(errno));
}

void put_le(std::string& out, std::uint64_t v, int width) {
  for (int i = 0; i < width; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_le(const char* p, int width) {
  std::uint64_t v = 0;
  for (int i = 0; i < width; ++i) {
    v |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(p[i])) << (8 * i);
  }
  return v;
}

void write_all(int fd, std::string_view bytes, const std::string& what) {
  while (!bytes.empty()) {
    const ssize_t n = ::write(fd, bytes.data(), bytes.size());
    if (n < 0) {
      if (errno == EINTR) continue;
      io_error(what);
    }
    bytes.remove_prefix(static_cast<std::size_t>(n));
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::storage, "io_error", "cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string encode_header(std::uint64_t base_seq) {
  std::string h = "DPLG";
  put_le(h, EventLog::kVersion, 4);
  put_le(h, base_seq, 8);
  return h;
}

}  // namespace

std::uint32_t crc32_of(std::string_view bytes, std::uint32_t seed) {
  return static_cast<std::uint32_t>(
      ::crc32(seed, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size())));
}

EventLog::EventLog(std::filesystem::path path, Options options)
    : path_(std::move(path)), options_(options) {
  open_or_create();
}

EventLog::~EventLog() {
  if (fd_ >= 0) ::close(fd_);
}

void EventLog::open_or_create() {
  if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
  fd_ = ::open(path_.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0600);
  if (fd_ < 0) io_error("open " + path_.string());
  const off_t size = ::lseek(fd_, 0, SEEK_END);
  if (size < 0) io_error("seek " + path_.string());
  if (size == 0) {
    write_all(fd_, encode_header(0), "write log header");
    if (::fdatasync(fd_) != 0) io_error("sync log header");
  }
  last_seq_ = scan(true);
  if (::lseek(fd_, 0, SEEK_END) < 0) io_error("seek " + path_.string());
}

std::uint64_t EventLog::scan(bool truncate_torn_tail) {
  const std::string bytes = read_file(path_);
  if (bytes.size() < kHeaderSize || bytes.compare(0, 4, "DPLG") != 0) {
    fail(ErrorKind::storage, "bad_log_header", path_.string() + " is not an event log");
  }
  const auto version = static_cast<std::uint32_t>(get_le(bytes.data() + 4, 4));
  if (version != kVersion) {
    fail(ErrorKind::storage, "log_version", "unsupported log version " + std::to_string(version));
  }
  base_seq_ = get_le(bytes.data() + 8, 8);
  std::uint64_t expected = base_seq_ + 1;
  std::size_t pos = kHeaderSize;
  while (pos < bytes.size()) {
    const std::size_t remaining = bytes.size() - pos;
    std::uint64_t len = 0;
    if (remaining >= kRecordHeaderSize) len = get_le(bytes.data() + pos, 4);
    if (remaining < kRecordHeaderSize || remaining - kRecordHeaderSize < len) {
      if (!truncate_torn_tail) break;
      if (::ftruncate(fd_, static_cast<off_t>(pos)) != 0) io_error("truncate torn tail");
      break;
    }
    const std::uint64_t seq = get_le(bytes.data() + pos + 4, 8);
    const auto crc = static_cast<std::uint32_t>(get_le(bytes.data() + pos + 12, 4));
    const std::string_view seq_bytes(bytes.data() + pos + 4, 8);
    const std::string_view payload(bytes.data() + pos + kRecordHeaderSize, len);
    if (crc32_of(payload, crc32_of(seq_bytes)) != crc) {
      fail(ErrorKind::storage, "checksum_mismatch",
           "log record at offset " + std::to_string(pos) + " fails its checksum");
    }
    if (seq != expected) {
      fail(ErrorKind::storage, "sequence_gap",
           "expected sequence " + std::to_string(expected) + ", found " + std::to_string(seq));
    }
    ++expected;
    pos += kRecordHeaderSize + len;
  }
  return expected - 1;
}

std::uint64_t EventLog::append(std::string_view kind, const nlohmann::json& data) {
  const std::string payload = nlohmann::json{{"kind", kind}, {"data", data}}.dump();
  if (payload.size() > kMaxPayload) {
    fail(ErrorKind::too_large, "record_too_large", "log record exceeds 1 GiB");
  }
  const std::uint64_t seq = last_seq_ + 1;
  std::string seq_bytes;
  put_le(seq_bytes, seq, 8);
  std::string frame;
  frame.reserve(kRecordHeaderSize + payload.size());
  put_le(frame, payload.size(), 4);
  frame += seq_bytes;
  put_le(frame, crc32_of(payload, crc32_of(seq_bytes)), 4);
  frame += payload;
  write_all(fd_, frame, "append to " + path_.string());
  if (options_.sync && ::fdatasync(fd_) != 0) io_error("sync " + path_.string());
  last_seq_ = seq;
  return seq;
}

void EventLog::replay(std::uint64_t from_seq,
                      const std::function<void(const LogRecord&)>& fn) const {
  const std::string bytes = read_file(path_);
  if (bytes.size() < kHeaderSize || bytes.compare(0, 4, "DPLG") != 0) {
    fail(ErrorKind::storage, "bad_log_header", path_.string() + " is not an event log");
  }
  if (base_seq_ != 0 && from_seq <= base_seq_) {
    fail(ErrorKind::storage, "compacted",
         "records before " + std::to_string(base_seq_ + 1) + " were compacted away");
  }
  std::uint64_t expected = base_seq_ + 1;
  std::size_t pos = kHeaderSize;
  while (pos + kRecordHeaderSize <= bytes.size()) {
    const std::uint64_t len = get_le(bytes.data() + pos, 4);
    if (bytes.size() - pos - kRecordHeaderSize < len) break;
    const std::uint64_t seq = get_le(bytes.data() + pos + 4, 8);
    const auto crc = static_cast<std::uint32_t>(get_le(bytes.data() + pos + 12, 4));
    const std::string_view payload(bytes.data() + pos + kRecordHeaderSize, len);
    if (crc32_of(payload, crc32_of(std::string_view(bytes.data() + pos + 4, 8))) != crc) {
      fail(ErrorKind::storage, "checksum_mismatch",
           "log record " + std::to_string(seq) + " fails its checksum");
    }
    if (seq != expected) {
      fail(ErrorKind::storage, "sequence_gap",
           "expected sequence " + std::to_string(expected) + ", found " + std::to_string(seq));
    }
    ++expected;
    pos += kRecordHeaderSize + len;
    if (seq < from_seq) continue;
    const auto j = nlohmann::json::parse(payload, nullptr, false);
    if (j.is_discarded() || !j.contains("kind") || !j.contains("data")) {
      fail(ErrorKind::storage, "bad_payload", "log record " + std::to_string(seq) + " is not a record");
    }
    fn(LogRecord{seq, j.at("kind").get<std::string>(), j.at("data")});
  }
}

void EventLog::compact(std::uint64_t through_seq) {
  if (through_seq > last_seq_ || through_seq < base_seq_) {
    fail(ErrorKind::storage, "bad_compaction", "compaction point outside the log");
  }
  std::string out = encode_header(through_seq);
  replay(through_seq + 1, [&](const LogRecord& rec) {
    const std::string payload = nlohmann::json{{"kind", rec.kind}, {"data", rec.data}}.dump();
    std::string seq_bytes;
    put_le(seq_bytes, rec.seq, 8);
    put_le(out, payload.size(), 4);
    out += seq_bytes;
    put_le(out, crc32_of(payload, crc32_of(seq_bytes)), 4);
    out += payload;
  });
  const std::filesystem::path tmp = path_.string() + ".compact";
  {
    const int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0600);
    if (fd < 0) io_error("open " + tmp.string());
    write_all(fd, out, "write " + tmp.string());
    if (::fsync(fd) != 0) io_error("sync " + tmp.string());
    ::close(fd);
  }
  std::filesystem::rename(tmp, path_);
  ::close(fd_);
  fd_ = -1;
  open_or_create();
}

void Snapshot::write(const std::filesystem::path& path) const {
  const std::string body = state.dump();
  std::string out = "DPSN";
  put_le(out, kVersion, 4);
  put_le(out, last_seq, 8);
  put_le(out, crc32_of(body), 4);
  put_le(out, body.size(), 8);
  out += body;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  const int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0600);
  if (fd < 0) io_error("open " + tmp.string());
  write_all(fd, out, "write " + tmp.string());
  if (::fsync(fd) != 0) io_error("sync " + tmp.string());
  ::close(fd);
  std::filesystem::rename(tmp, path);
}

Snapshot Snapshot::read(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  if (bytes.size() < 28 || bytes.compare(0, 4, "DPSN") != 0) {
    fail(ErrorKind::storage, "bad_snapshot", path.string() + " is not a snapshot");
  }
  const auto version = static_cast<std::uint32_t>(get_le(bytes.data() + 4, 4));
  if (version != kVersion) {
    fail(ErrorKind::storage, "snapshot_version",
         "snapshot version " + std::to_string(version) + " is not supported");
  }
  Snapshot snap;
  snap.last_seq = get_le(bytes.data() + 8, 8);
  const auto crc = static_cast<std::uint32_t>(get_le(bytes.data() + 16, 4));
  const std::uint64_t len = get_le(bytes.data() + 20, 8);
  if (bytes.size() - 28 != len) {
    fail(ErrorKind::storage, "bad_snapshot", "snapshot length mismatch");
  }
  const std::string_view body(bytes.data() + 28, len);
  if (crc32_of(body) != crc) fail(ErrorKind::storage, "checksum_mismatch", "snapshot is corrupt");
  snap.state = nlohmann::json::parse(body);
  return snap;
}

BlobStore::BlobStore(std::filesystem::path root) : root_(std::move(root)) {
  std::filesystem::create_directories(root_);
}

std::filesystem::path BlobStore::path_for(const Digest128& digest) const {
  const std::string hex = digest.hex();
  return root_ / hex.substr(0, 2) / hex.substr(2, 2) / hex;
}

std::filesystem::path BlobStore::put(const Digest128& digest, std::string_view bytes) const {
  const auto path = path_for(digest);
  if (std::filesystem::exists(path)) return path;
  std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  const int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0600);
  if (fd < 0) io_error("open " + tmp.string());
  write_all(fd, bytes, "write " + tmp.string());
  if (::fdatasync(fd) != 0) io_error("sync " + tmp.string());
  ::close(fd);
  std::filesystem::rename(tmp, path);
  return path;
}

std::optional<std::string> BlobStore::get(const Digest128& digest) const {
  const auto path = path_for(digest);
  if (!std::filesystem::exists(path)) return std::nullopt;
  return read_file(path);
}

bool BlobStore::contains(const Digest128& digest) const {
  return std::filesystem::exists(path_for(digest));
}

}  // namespace datapool
