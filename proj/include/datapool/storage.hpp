#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "datapool/dedup.hpp"

namespace datapool {

struct LogRecord {
  std::uint64_t seq = 0;
  std::string kind;
  nlohmann::json data;
};

/// Append-only event log.
///
/// File layout (little-endian):
///   header:  "DPLG" | u32 version | u64 base_seq
///   record:  u32 payload_len | u64 seq | u32 crc32(seq bytes + payload) | payload
/// The payload is canonical JSON {"data": ..., "kind": ...}. Sequence numbers
/// are dense starting at base_seq + 1.
///
/// A short final record (torn write from a crash before acknowledgment) is
/// truncated on open. A checksum mismatch or sequence gap anywhere is
/// fail-stop: open/replay throws Error(storage).
class EventLog {
 public:
  struct Options {
    /// fdatasync after every append. Off only for throwaway test logs.
    bool sync = true;
  };

  static constexpr std::uint32_t kVersion = 1;

  EventLog(std::filesystem::path path, Options options);
  EventLog(std::filesystem::path path) : EventLog(std::move(path), Options{}) {}
  ~EventLog();
  EventLog(const EventLog&) = delete;
  EventLog& operator=(const EventLog&) = delete;

  /// Durable before return. Returns the record's sequence number.
  std::uint64_t append(std::string_view kind, const nlohmann::json& data);

  /// Calls `fn` for every record with seq >= from_seq, in order.
  void replay(std::uint64_t from_seq, const std::function<void(const LogRecord&)>& fn) const;

  std::uint64_t base_seq() const { return base_seq_; }
  std::uint64_t last_seq() const { return last_seq_; }
  const std::filesystem::path& path() const { return path_; }

  /// Rewrites the log so it holds only records after `through_seq`
  /// (which must be covered by a snapshot).
  void compact(std::uint64_t through_seq);

 private:
  void open_or_create();
  std::uint64_t scan(bool truncate_torn_tail);

  std::filesystem::path path_;
  Options options_;
  int fd_ = -1;
  std::uint64_t base_seq_ = 0;
  std::uint64_t last_seq_ = 0;
};

/// Point-in-time state image covering log records up to last_seq.
///
/// Layout: "DPSN" | u32 version | u64 last_seq | u32 crc32(state) | u64 len | state JSON
struct Snapshot {
  static constexpr std::uint32_t kVersion = 1;

  std::uint64_t last_seq = 0;
  nlohmann::json state;

  /// Atomic replace via temp file + rename.
  void write(const std::filesystem::path& path) const;
  /// Refuses newer versions and corrupt images with Error(storage).
  static Snapshot read(const std::filesystem::path& path);
};

/// Content-addressed blob files: <root>/<hex[0:2]>/<hex[2:4]>/<hex>.
class BlobStore {
 public:
  explicit BlobStore(std::filesystem::path root);

  /// Idempotent. Returns the blob's path.
  std::filesystem::path put(const Digest128& digest, std::string_view bytes) const;
  std::optional<std::string> get(const Digest128& digest) const;
  bool contains(const Digest128& digest) const;
  std::filesystem::path path_for(const Digest128& digest) const;

 private:
  std::filesystem::path root_;
};

std::uint32_t crc32_of(std::string_view bytes, std::uint32_t seed = 0);

}  // namespace datapool
