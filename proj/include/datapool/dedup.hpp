#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "datapool/time.hpp"

namespace datapool {

/// 128-bit BLAKE2b digest of normalized text (unkeyed, 16-byte output).
struct Digest128 {
  std::array<std::uint8_t, 16> bytes{};

  std::string hex() const;
  static Digest128 from_hex(std::string_view hex);

  friend bool operator==(const Digest128&, const Digest128&) = default;
  friend auto operator<=>(const Digest128&, const Digest128&) = default;
};

struct Digest128Hash {
  std::size_t operator()(const Digest128& d) const noexcept;
};

Digest128 exact_fingerprint(std::string_view normalized_text);

/// Digest of the empty string; BLAKE2b-128("").
inline constexpr std::string_view kEmptyDigestHex = "cae66941d9efbd404e4d88758ea67670";

struct MinHashParams {
  std::uint32_t shingle_size = 5;
  std::uint32_t num_perms = 128;
  /// Master seed from which the base SipHash key and every permutation's
  /// (a, b) coefficients are derived via splitmix64.
  std::uint64_t seed = 0x6a09e667f3bcc908ULL;

  friend bool operator==(const MinHashParams&, const MinHashParams&) = default;
};

using Signature = std::vector<std::uint64_t>;

/// Character-shingle MinHash.
///
/// A shingle is `shingle_size` consecutive code points; texts shorter than
/// that form one shingle. Each shingle's UTF-8 bytes get a keyed 64-bit SipHash
/// x, and slot i holds min over shingles of (a_i * x + b_i) mod (2^61 - 1).
/// Empty text yields all-UINT64_MAX slots.
class MinHasher {
 public:
  explicit MinHasher(MinHashParams params = {});

  Signature sign(std::string_view normalized_text) const;
  const MinHashParams& params() const { return params_; }

 private:
  MinHashParams params_;
  std::array<std::uint8_t, 16> key_{};
  std::vector<std::uint64_t> a_;
  std::vector<std::uint64_t> b_;
};

Signature minhash_signature(std::string_view normalized_text, std::uint32_t shingle_size = 5,
                            std::uint32_t num_perms = 128);

/// Fraction of equal slots. Signatures must have equal length.
double estimate_jaccard(const Signature& a, const Signature& b);

/// Distinct character shingles of the text (UTF-8 substrings).
std::vector<std::string> char_shingles(std::string_view text, std::uint32_t shingle_size);

struct LshParams {
  std::uint32_t bands = 16;
  std::uint32_t rows_per_band = 8;
  double jaccard_threshold = 0.8;

  friend bool operator==(const LshParams&, const LshParams&) = default;
};

enum class CorpusSource { contributor, consumer_corpus, public_corpus };

const char* to_string(CorpusSource source);
CorpusSource corpus_source_from_string(std::string_view name);

struct IndexEntry {
  std::uint64_t doc_id = 0;
  Digest128 digest;
  CorpusSource source = CorpusSource::contributor;
  /// contributor_id for contributor documents, empty otherwise.
  std::string owner;
  Timestamp first_seen{};
};

struct UniqueDoc {};
struct ExactHit {
  std::uint64_t doc_id = 0;
  CorpusSource source = CorpusSource::contributor;
  std::string owner;
};
struct NearHit {
  std::uint64_t doc_id = 0;
  double estimated_jaccard = 0.0;
  CorpusSource source = CorpusSource::contributor;
  std::string owner;
};
using DuplicateQuery = std::variant<UniqueDoc, ExactHit, NearHit>;

enum class InsertOutcome { inserted, duplicate_digest };

/// Exact-digest table plus MinHash/LSH near-duplicate index.
///
/// Doc ids are dense and assigned in insertion order, so a lower id always
/// means an earlier writer. Not internally synchronized; callers provide
/// reader/writer exclusion.
class DedupIndex {
 public:
  explicit DedupIndex(MinHashParams minhash = {}, LshParams lsh = {});

  const MinHashParams& minhash_params() const { return minhash_; }
  const LshParams& lsh_params() const { return lsh_; }

  /// Exact digest match first; otherwise the best LSH candidate whose
  /// estimated Jaccard reaches the threshold.
  DuplicateQuery query(const Digest128& digest, const Signature& signature) const;

  /// Verified near candidates, estimate descending then doc_id ascending.
  std::vector<NearHit> near_candidates(const Signature& signature) const;

  /// First writer wins: an already-present digest leaves the index unchanged.
  InsertOutcome insert(const Digest128& digest, Signature signature, CorpusSource source,
                       std::string owner, Timestamp first_seen);

  bool contains(const Digest128& digest) const { return by_digest_.contains(digest); }
  const IndexEntry* find(const Digest128& digest) const;
  std::size_t size() const { return entries_.size(); }
  const std::vector<IndexEntry>& entries() const { return entries_; }
  const Signature& signature(std::uint64_t doc_id) const { return signatures_.at(doc_id - 1); }

  nlohmann::json to_json() const;
  static DedupIndex from_json(const nlohmann::json& j);

 private:
  void check_signature(const Signature& signature) const;
  std::uint64_t band_key(const Signature& signature, std::uint32_t band) const;

  MinHashParams minhash_;
  LshParams lsh_;
  std::vector<IndexEntry> entries_;
  std::vector<Signature> signatures_;
  std::unordered_map<Digest128, std::uint64_t, Digest128Hash> by_digest_;
  std::vector<std::unordered_map<std::uint64_t, std::vector<std::uint64_t>>> buckets_;
};

/// Compact text form of a signature (base64 of little-endian slots).
std::string encode_signature(const Signature& signature);
Signature decode_signature(std::string_view encoded);

/// Consumer/public corpus fingerprint file.
///
/// Layout (little-endian):
///   "DPFP" | u32 version=1 | u32 shingle_size | u32 num_perms | u64 seed |
///   u64 record_count | record_count x (16-byte digest | num_perms x u64)
struct FingerprintRecord {
  Digest128 digest;
  Signature signature;
};

struct FingerprintFile {
  MinHashParams params;
  std::vector<FingerprintRecord> records;
};

inline constexpr std::uint32_t kFingerprintFileVersion = 1;

std::string encode_fingerprint_file(const FingerprintFile& file);
/// Throws Error(validation) on bad magic, unsupported version, or truncation.
FingerprintFile decode_fingerprint_file(std::string_view bytes);

/// Normalizes and fingerprints raw texts. Texts that normalize to empty are skipped.
FingerprintFile fingerprint_texts(const std::vector<std::string>& raw_texts,
                                  const MinHashParams& params = {});

}  // namespace datapool
