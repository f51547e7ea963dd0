#include "datapool/dedup.hpp"

#include <sodium.h>

#include <algorithm>
#include <cstring>
#include <limits>
#include <unordered_set>

#include "datapool/error.hpp"
#include "datapool/text.hpp"

namespace datapool {
namespace {

constexpr std::uint64_t kMersenne61 = (std::uint64_t{1} << 61) - 1;

void ensure_sodium() {
  static const bool ready = [] {
    if (sodium_init() < 0) fail(ErrorKind::config, "sodium_init", "libsodium failed to initialize");
    return true;
  }();
  (void)ready;
}

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t mod_mersenne61(unsigned __int128 x) {
  std::uint64_t r = static_cast<std::uint64_t>(x & kMersenne61) + static_cast<std::uint64_t>(x >> 61);
  r = (r & kMersenne61) + (r >> 61);
  return r >= kMersenne61 ? r - kMersenne61 : r;
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  std::uint64_t uint(int width) {
    need(static_cast<std::size_t>(width));
    std::uint64_t v = 0;
    for (int i = 0; i < width; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += static_cast<std::size_t>(width);
    return v;
  }
  std::string_view take(std::size_t n) {
    need(n);
    const auto out = bytes_.substr(pos_, n);
    pos_ += n;
    return out;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) {
      fail(ErrorKind::validation, "truncated_fingerprint_file", "fingerprint file is truncated");
    }
  }
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string Digest128::hex() const {
  char buf[33];
  ensure_sodium();
  sodium_bin2hex(buf, sizeof buf, bytes.data(), bytes.size());
  return buf;
}

Digest128 Digest128::from_hex(std::string_view hex) {
  ensure_sodium();
  Digest128 d;
  std::size_t len = 0;
  if (hex.size() != 32 ||
      sodium_hex2bin(d.bytes.data(), d.bytes.size(), hex.data(), hex.size(), nullptr, &len,
                     nullptr) != 0 ||
      len != 16) {
    fail(ErrorKind::validation, "invalid_digest", "digest must be 32 hex characters");
  }
  return d;
}

std::size_t Digest128Hash::operator()(const Digest128& d) const noexcept {
  std::uint64_t lo;
  std::memcpy(&lo, d.bytes.data(), sizeof lo);
  return static_cast<std::size_t>(lo);
}

Digest128 exact_fingerprint(std::string_view normalized_text) {
  ensure_sodium();
  Digest128 d;
  crypto_generichash(d.bytes.data(), d.bytes.size(),
                     reinterpret_cast<const unsigned char*>(normalized_text.data()),
                     normalized_text.size(), nullptr, 0);
  return d;
}

std::vector<std::string> char_shingles(std::string_view text, std::uint32_t shingle_size) {
  if (shingle_size == 0) {
    fail(ErrorKind::validation, "invalid_shingle_size", "shingle_size must be positive");
  }
  std::vector<std::size_t> starts;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if ((static_cast<unsigned char>(text[i]) & 0xC0) != 0x80) starts.push_back(i);
  }
  std::vector<std::string> out;
  if (starts.empty()) return out;
  if (starts.size() <= shingle_size) {
    out.emplace_back(text);
    return out;
  }
  starts.push_back(text.size());
  std::unordered_set<std::string_view> seen;
  for (std::size_t i = 0; i + shingle_size < starts.size(); ++i) {
    const std::string_view s = text.substr(starts[i], starts[i + shingle_size] - starts[i]);
    if (seen.insert(s).second) out.emplace_back(s);
  }
  return out;
}

MinHasher::MinHasher(MinHashParams params) : params_(params) {
  if (params_.num_perms == 0 || params_.shingle_size == 0) {
    fail(ErrorKind::validation, "invalid_minhash_params",
         "num_perms and shingle_size must be positive");
  }
  ensure_sodium();
  std::uint64_t state = params_.seed;
  const std::uint64_t k0 = splitmix64(state);
  const std::uint64_t k1 = splitmix64(state);
  std::memcpy(key_.data(), &k0, 8);
  std::memcpy(key_.data() + 8, &k1, 8);
  a_.resize(params_.num_perms);
  b_.resize(params_.num_perms);
  for (std::uint32_t i = 0; i < params_.num_perms; ++i) {
    a_[i] = splitmix64(state) % (kMersenne61 - 1) + 1;
    b_[i] = splitmix64(state) % kMersenne61;
  }
}

Signature MinHasher::sign(std::string_view text) const {
  Signature sig(params_.num_perms, std::numeric_limits<std::uint64_t>::max());
  const auto shingle = [&](std::string_view s) {
    std::uint8_t out[crypto_shorthash_BYTES];
    crypto_shorthash(out, reinterpret_cast<const unsigned char*>(s.data()), s.size(), key_.data());
    std::uint64_t h;
    std::memcpy(&h, out, sizeof h);
    const std::uint64_t x = mod_mersenne61(h);
    for (std::uint32_t i = 0; i < params_.num_perms; ++i) {
      const std::uint64_t v =
          mod_mersenne61(static_cast<unsigned __int128>(a_[i]) * x + b_[i]);
      if (v < sig[i]) sig[i] = v;
    }
  };

  // Walk code-point boundaries directly instead of materializing the shingle set.
  std::vector<std::size_t> starts;
  starts.reserve(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) {
    if ((static_cast<unsigned char>(text[i]) & 0xC0) != 0x80) starts.push_back(i);
  }
  if (starts.empty()) return sig;
  const std::size_t k = params_.shingle_size;
  if (starts.size() <= k) {
    shingle(text);
    return sig;
  }
  starts.push_back(text.size());
  for (std::size_t i = 0; i + k < starts.size(); ++i) {
    shingle(text.substr(starts[i], starts[i + k] - starts[i]));
  }
  return sig;
}

Signature minhash_signature(std::string_view normalized_text, std::uint32_t shingle_size,
                            std::uint32_t num_perms) {
  MinHashParams params;
  params.shingle_size = shingle_size;
  params.num_perms = num_perms;
  return MinHasher(params).sign(normalized_text);
}

double estimate_jaccard(const Signature& a, const Signature& b) {
  if (a.size() != b.size() || a.empty()) {
    fail(ErrorKind::config, "signature_mismatch", "signatures have different lengths");
  }
  std::size_t equal = 0;
  for (std::size_t i = 0; i < a.size(); ++i) equal += a[i] == b[i];
  return static_cast<double>(equal) / static_cast<double>(a.size());
}

const char* to_string(CorpusSource source) {
  switch (source) {
    case CorpusSource::contributor: return "contributor";
    case CorpusSource::consumer_corpus: return "consumer_corpus";
    case CorpusSource::public_corpus: return "public_corpus";
  }
  return "unknown";
}

CorpusSource corpus_source_from_string(std::string_view name) {
  if (name == "contributor") return CorpusSource::contributor;
  if (name == "consumer_corpus" || name == "consumer") return CorpusSource::consumer_corpus;
  if (name == "public_corpus" || name == "public") return CorpusSource::public_corpus;
  fail(ErrorKind::validation, "invalid_corpus_source", "unknown corpus source '" + std::string(name) + "'");
}

DedupIndex::DedupIndex(MinHashParams minhash, LshParams lsh) : minhash_(minhash), lsh_(lsh) {
  if (lsh_.bands == 0 || lsh_.rows_per_band == 0 ||
      lsh_.bands * lsh_.rows_per_band != minhash_.num_perms) {
    fail(ErrorKind::config, "lsh_mismatch", "bands x rows_per_band must equal num_perms");
  }
  if (!(lsh_.jaccard_threshold >= 0.0 && lsh_.jaccard_threshold <= 1.0)) {
    fail(ErrorKind::config, "lsh_mismatch", "jaccard_threshold must lie in [0, 1]");
  }
  buckets_.resize(lsh_.bands);
}

void DedupIndex::check_signature(const Signature& signature) const {
  if (signature.size() != minhash_.num_perms) {
    fail(ErrorKind::config, "signature_mismatch",
         "signature has " + std::to_string(signature.size()) + " slots, index expects " +
             std::to_string(minhash_.num_perms));
  }
}

std::uint64_t DedupIndex::band_key(const Signature& signature, std::uint32_t band) const {
  std::uint64_t h = mix64(band + 0x9e3779b97f4a7c15ULL);
  const std::size_t begin = static_cast<std::size_t>(band) * lsh_.rows_per_band;
  for (std::size_t r = begin; r < begin + lsh_.rows_per_band; ++r) {
    h = mix64(h ^ signature[r]) + 0x9e3779b97f4a7c15ULL;
  }
  return h;
}

std::vector<NearHit> DedupIndex::near_candidates(const Signature& signature) const {
  check_signature(signature);
  std::unordered_set<std::uint64_t> candidates;
  for (std::uint32_t band = 0; band < lsh_.bands; ++band) {
    const auto& table = buckets_[band];
    const auto it = table.find(band_key(signature, band));
    if (it == table.end()) continue;
    candidates.insert(it->second.begin(), it->second.end());
  }
  std::vector<NearHit> hits;
  for (const std::uint64_t id : candidates) {
    const double estimate = estimate_jaccard(signature, signatures_[id - 1]);
    if (estimate >= lsh_.jaccard_threshold) {
      const IndexEntry& e = entries_[id - 1];
      hits.push_back(NearHit{id, estimate, e.source, e.owner});
    }
  }
  std::sort(hits.begin(), hits.end(), [](const NearHit& a, const NearHit& b) {
    if (a.estimated_jaccard != b.estimated_jaccard) return a.estimated_jaccard > b.estimated_jaccard;
    return a.doc_id < b.doc_id;
  });
  return hits;
}

DuplicateQuery DedupIndex::query(const Digest128& digest, const Signature& signature) const {
  check_signature(signature);
  if (const IndexEntry* e = find(digest)) {
    return ExactHit{e->doc_id, e->source, e->owner};
  }
  auto hits = near_candidates(signature);
  if (hits.empty()) return UniqueDoc{};
  return hits.front();
}

const IndexEntry* DedupIndex::find(const Digest128& digest) const {
  const auto it = by_digest_.find(digest);
  return it == by_digest_.end() ? nullptr : &entries_[it->second - 1];
}

InsertOutcome DedupIndex::insert(const Digest128& digest, Signature signature, CorpusSource source,
                                 std::string owner, Timestamp first_seen) {
  check_signature(signature);
  if (by_digest_.contains(digest)) return InsertOutcome::duplicate_digest;
  const std::uint64_t id = entries_.size() + 1;
  for (std::uint32_t band = 0; band < lsh_.bands; ++band) {
    buckets_[band][band_key(signature, band)].push_back(id);
  }
  entries_.push_back(IndexEntry{id, digest, source, std::move(owner), first_seen});
  signatures_.push_back(std::move(signature));
  by_digest_.emplace(digest, id);
  return InsertOutcome::inserted;
}

nlohmann::json DedupIndex::to_json() const {
  nlohmann::json docs = nlohmann::json::array();
  for (const auto& e : entries_) {
    docs.push_back({{"digest", e.digest.hex()},
                    {"source", to_string(e.source)},
                    {"owner", e.owner},
                    {"first_seen", format_rfc3339(e.first_seen)},
                    {"signature", encode_signature(signatures_[e.doc_id - 1])}});
  }
  return {{"shingle_size", minhash_.shingle_size},
          {"num_perms", minhash_.num_perms},
          {"seed", minhash_.seed},
          {"bands", lsh_.bands},
          {"rows_per_band", lsh_.rows_per_band},
          {"jaccard_threshold_ppm",
           static_cast<std::int64_t>(lsh_.jaccard_threshold * 1'000'000 + 0.5)},
          {"documents", std::move(docs)}};
}

DedupIndex DedupIndex::from_json(const nlohmann::json& j) {
  MinHashParams mh;
  mh.shingle_size = j.at("shingle_size").get<std::uint32_t>();
  mh.num_perms = j.at("num_perms").get<std::uint32_t>();
  mh.seed = j.at("seed").get<std::uint64_t>();
  LshParams lsh;
  lsh.bands = j.at("bands").get<std::uint32_t>();
  lsh.rows_per_band = j.at("rows_per_band").get<std::uint32_t>();
  lsh.jaccard_threshold =
      static_cast<double>(j.at("jaccard_threshold_ppm").get<std::int64_t>()) / 1'000'000.0;
  DedupIndex index(mh, lsh);
  for (const auto& d : j.at("documents")) {
    index.insert(Digest128::from_hex(d.at("digest").get<std::string>()),
                 decode_signature(d.at("signature").get<std::string>()),
                 corpus_source_from_string(d.at("source").get<std::string>()),
                 d.at("owner").get<std::string>(),
                 parse_rfc3339(d.at("first_seen").get<std::string>()));
  }
  return index;
}

std::string encode_signature(const Signature& signature) {
  ensure_sodium();
  std::string raw;
  raw.reserve(signature.size() * 8);
  for (const auto v : signature) put_u64(raw, v);
  const int variant = sodium_base64_VARIANT_ORIGINAL;
  std::string out(sodium_base64_ENCODED_LEN(raw.size(), variant), '\0');
  sodium_bin2base64(out.data(), out.size(), reinterpret_cast<const unsigned char*>(raw.data()),
                    raw.size(), variant);
  out.resize(std::strlen(out.c_str()));
  return out;
}

Signature decode_signature(std::string_view encoded) {
  ensure_sodium();
  std::string raw(encoded.size(), '\0');
  std::size_t len = 0;
  if (sodium_base642bin(reinterpret_cast<unsigned char*>(raw.data()), raw.size(), encoded.data(),
                        encoded.size(), nullptr, &len, nullptr,
                        sodium_base64_VARIANT_ORIGINAL) != 0 ||
      len % 8 != 0) {
    fail(ErrorKind::validation, "invalid_signature", "signature is not valid base64 of u64 slots");
  }
  raw.resize(len);
  Reader r(raw);
  Signature sig(len / 8);
  for (auto& v : sig) v = r.uint(8);
  return sig;
}

std::string encode_fingerprint_file(const FingerprintFile& file) {
  std::string out = "DPFP";
  put_u32(out, kFingerprintFileVersion);
  put_u32(out, file.params.shingle_size);
  put_u32(out, file.params.num_perms);
  put_u64(out, file.params.seed);
  put_u64(out, file.records.size());
  for (const auto& rec : file.records) {
    if (rec.signature.size() != file.params.num_perms) {
      fail(ErrorKind::config, "signature_mismatch", "record signature length differs from header");
    }
    out.append(reinterpret_cast<const char*>(rec.digest.bytes.data()), rec.digest.bytes.size());
    for (const auto v : rec.signature) put_u64(out, v);
  }
  return out;
}

FingerprintFile decode_fingerprint_file(std::string_view bytes) {
  Reader r(bytes);
  if (r.take(4) != "DPFP") {
    fail(ErrorKind::validation, "bad_fingerprint_magic", "not a fingerprint file");
  }
  const auto version = static_cast<std::uint32_t>(r.uint(4));
  if (version != kFingerprintFileVersion) {
    fail(ErrorKind::validation, "unsupported_fingerprint_version",
         "fingerprint file version " + std::to_string(version) + " is not supported");
  }
  FingerprintFile file;
  file.params.shingle_size = static_cast<std::uint32_t>(r.uint(4));
  file.params.num_perms = static_cast<std::uint32_t>(r.uint(4));
  file.params.seed = r.uint(8);
  const std::uint64_t count = r.uint(8);
  const std::uint64_t record_size = 16 + 8 * static_cast<std::uint64_t>(file.params.num_perms);
  if (file.params.num_perms == 0 || count > bytes.size() / record_size) {
    fail(ErrorKind::validation, "truncated_fingerprint_file", "record count exceeds file size");
  }
  file.records.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    FingerprintRecord rec;
    const auto digest = r.take(16);
    std::memcpy(rec.digest.bytes.data(), digest.data(), 16);
    rec.signature.resize(file.params.num_perms);
    for (auto& v : rec.signature) v = r.uint(8);
    file.records.push_back(std::move(rec));
  }
  if (!r.done()) {
    fail(ErrorKind::validation, "trailing_fingerprint_bytes", "unexpected bytes after last record");
  }
  return file;
}

FingerprintFile fingerprint_texts(const std::vector<std::string>& raw_texts,
                                  const MinHashParams& params) {
  FingerprintFile file;
  file.params = params;
  const MinHasher hasher(params);
  for (const auto& raw : raw_texts) {
    const std::string text = normalize(raw);
    if (text.empty()) continue;
    file.records.push_back(FingerprintRecord{exact_fingerprint(text), hasher.sign(text)});
  }
  return file;
}

}  // namespace datapool
