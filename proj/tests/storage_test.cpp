#include <gtest/gtest.h>

#include <fstream>

#include "datapool/dedup.hpp"
#include "datapool/error.hpp"
#include "datapool/storage.hpp"
#include "support.hpp"

using namespace datapool;
using datapool::testing::TempDir;

namespace {

std::vector<LogRecord> read_all(const EventLog& log, std::uint64_t from = 1) {
  std::vector<LogRecord> out;
  log.replay(from, [&](const LogRecord& r) { out.push_back(r); });
  return out;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

void spit(const std::filesystem::path& p, const std::string& bytes) {
  std::ofstream(p, std::ios::binary | std::ios::trunc) << bytes;
}

std::string error_code(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return "no error";
}

}  // namespace

TEST(EventLog, AppendThenReadBack) {
  TempDir dir;
  EventLog log(dir.path() / "events.log", {false});
  EXPECT_EQ(log.last_seq(), 0u);
  EXPECT_EQ(log.append("alpha", {{"x", 1}}), 1u);
  EXPECT_EQ(log.append("beta", {{"y", "two"}}), 2u);
  const auto records = read_all(log);
  ASSERT_EQ(records.size(), 2u);
  EXPECT_EQ(records[0].kind, "alpha");
  EXPECT_EQ(records[0].data, (nlohmann::json{{"x", 1}}));
  EXPECT_EQ(records[1].seq, 2u);
  EXPECT_EQ(read_all(log, 2).size(), 1u);
}

TEST(EventLog, ReopenContinuesSequence) {
  TempDir dir;
  {
    EventLog log(dir.path() / "events.log", {false});
    for (int i = 0; i < 5; ++i) log.append("k", {{"i", i}});
  }
  EventLog log(dir.path() / "events.log", {false});
  EXPECT_EQ(log.last_seq(), 5u);
  EXPECT_EQ(log.append("k", {}), 6u);
  EXPECT_EQ(read_all(log).size(), 6u);
}

TEST(EventLog, TornTailIsTruncated) {
  TempDir dir;
  const auto path = dir.path() / "events.log";
  std::size_t good_size = 0;
  {
    EventLog log(path, {false});
    log.append("a", {{"n", 1}});
    log.append("b", {{"n", 2}});
    good_size = std::filesystem::file_size(path);
    log.append("c", {{"n", 3}});
  }
  const std::string bytes = slurp(path);
  for (std::size_t cut = good_size + 1; cut < bytes.size(); cut += 3) {
    spit(path, bytes.substr(0, cut));
    EventLog log(path, {false});
    EXPECT_EQ(log.last_seq(), 2u);
    EXPECT_EQ(std::filesystem::file_size(path), good_size);
    EXPECT_EQ(log.append("c2", {}), 3u);
  }
}

TEST(EventLog, ChecksumMismatchIsFailStop) {
  TempDir dir;
  const auto path = dir.path() / "events.log";
  {
    EventLog log(path, {false});
    log.append("a", {{"payload", "hello"}});
    log.append("b", {{"payload", "world"}});
  }
  std::string bytes = slurp(path);
  bytes[16 + 16 + 3] ^= 0x20;
  spit(path, bytes);
  EXPECT_EQ(error_code([&] { EventLog log(path, {false}); }), "checksum_mismatch");
}

TEST(EventLog, RejectsForeignFiles) {
  TempDir dir;
  spit(dir.path() / "junk.log", "this is not a log at all");
  EXPECT_EQ(error_code([&] { EventLog log(dir.path() / "junk.log", {false}); }), "bad_log_header");
  std::string header = "DPLG";
  header += std::string("\x09\x00\x00\x00", 4) + std::string(8, '\0');
  spit(dir.path() / "future.log", header);
  EXPECT_EQ(error_code([&] { EventLog log(dir.path() / "future.log", {false}); }), "log_version");
}

TEST(EventLog, CompactionDropsPrefix) {
  TempDir dir;
  const auto path = dir.path() / "events.log";
  EventLog log(path, {false});
  for (int i = 1; i <= 10; ++i) log.append("k", {{"i", i}});
  log.compact(7);
  EXPECT_EQ(log.base_seq(), 7u);
  EXPECT_EQ(log.last_seq(), 10u);
  const auto tail = read_all(log, 8);
  ASSERT_EQ(tail.size(), 3u);
  EXPECT_EQ(tail[0].data.at("i"), 8);
  EXPECT_EQ(error_code([&] { read_all(log, 3); }), "compacted");
  EXPECT_EQ(log.append("k", {{"i", 11}}), 11u);
  EventLog reopened(path, {false});
  EXPECT_EQ(reopened.base_seq(), 7u);
  EXPECT_EQ(reopened.last_seq(), 11u);
}

TEST(Snapshot, WriteReadAndVersionCheck) {
  TempDir dir;
  const auto path = dir.path() / "snapshot.bin";
  Snapshot snap{42, {{"contributors", nlohmann::json::array()}, {"alpha", 100000}}};
  snap.write(path);
  const Snapshot back = Snapshot::read(path);
  EXPECT_EQ(back.last_seq, 42u);
  EXPECT_EQ(back.state, snap.state);

  Snapshot{0, nlohmann::json::object()}.write(dir.path() / "empty.bin");
  EXPECT_EQ(Snapshot::read(dir.path() / "empty.bin").state, nlohmann::json::object());

  std::string bytes = slurp(path);
  bytes[4] = 2;
  spit(path, bytes);
  EXPECT_EQ(error_code([&] { Snapshot::read(path); }), "snapshot_version");

  bytes[4] = 1;
  bytes.back() ^= 1;
  spit(path, bytes);
  EXPECT_EQ(error_code([&] { Snapshot::read(path); }), "checksum_mismatch");
}

TEST(BlobStore, ContentAddressed) {
  TempDir dir;
  BlobStore blobs(dir.path() / "blobs");
  const std::string body = "{\"text\":\"hello\"}\n";
  const Digest128 d = exact_fingerprint(body);
  EXPECT_FALSE(blobs.contains(d));
  EXPECT_FALSE(blobs.get(d));
  const auto path = blobs.put(d, body);
  EXPECT_TRUE(blobs.contains(d));
  EXPECT_EQ(blobs.get(d), body);
  EXPECT_EQ(path.filename().string(), d.hex());
  EXPECT_EQ(path.parent_path().filename().string(), d.hex().substr(2, 2));
  blobs.put(d, body);
  EXPECT_EQ(blobs.get(d), body);
}

TEST(Crc32, KnownVector) {
  EXPECT_EQ(crc32_of("123456789"), 0xCBF43926u);
  EXPECT_EQ(crc32_of(""), 0u);
}
