#include "datapool/platform.hpp"

#include <sodium.h>

#include <algorithm>
#include <cstdio>
#include <mutex>
#include <unordered_set>

#include "datapool/error.hpp"

namespace datapool {
namespace {

constexpr const char* kLogFile = "events.log";
constexpr const char* kSnapshotFile = "snapshot.bin";
constexpr const char* kBlobDir = "blobs";

std::string padded_id(const char* prefix, std::size_t n) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s-%06zu", prefix, n);
  return buf;
}

std::string trim_ascii(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

SubmissionStatus submission_status_from(const std::string& s) {
  if (s == "queued") return SubmissionStatus::queued;
  if (s == "processing") return SubmissionStatus::processing;
  if (s == "finalized") return SubmissionStatus::finalized;
  if (s == "failed") return SubmissionStatus::failed;
  fail(ErrorKind::storage, "bad_state", "unknown submission status " + s);
}

}  // namespace

std::string hash_token(std::string_view token) {
  if (sodium_init() < 0) fail(ErrorKind::config, "sodium_init", "libsodium failed to initialize");
  unsigned char out[32];
  crypto_generichash(out, sizeof out, reinterpret_cast<const unsigned char*>(token.data()),
                     token.size(), nullptr, 0);
  char hex[65];
  sodium_bin2hex(hex, sizeof hex, out, sizeof out);
  return hex;
}

std::string generate_token() {
  if (sodium_init() < 0) fail(ErrorKind::config, "sodium_init", "libsodium failed to initialize");
  unsigned char raw[24];
  randombytes_buf(raw, sizeof raw);
  char hex[49];
  sodium_bin2hex(hex, sizeof hex, raw, sizeof raw);
  return std::string("dp_") + hex;
}

const char* to_string(Role role) {
  return role == Role::consumer_admin ? "consumer_admin" : "contributor";
}

const char* to_string(SubmissionStatus status) {
  switch (status) {
    case SubmissionStatus::queued: return "queued";
    case SubmissionStatus::processing: return "processing";
    case SubmissionStatus::finalized: return "finalized";
    case SubmissionStatus::failed: return "failed";
  }
  return "queued";
}

void PlatformConfig::validate() const {
  if (alpha_ppm < 0 || alpha_ppm > kPpmScale) {
    fail(ErrorKind::validation, "alpha_out_of_range", "alpha_ppm must be within [0, 1000000]");
  }
  if (epoch_length_days <= 0) {
    fail(ErrorKind::validation, "invalid_epoch_length", "epoch_length_days must be positive");
  }
  if (currency_code.size() != 3 ||
      !std::all_of(currency_code.begin(), currency_code.end(), [](char c) { return c >= 'A' && c <= 'Z'; })) {
    fail(ErrorKind::validation, "invalid_currency", "currency_code must be a 3-letter ISO 4217 code");
  }
  rules.validate();
  DedupIndex probe(minhash, lsh);
  (void)probe;
}

nlohmann::json PlatformConfig::to_json() const {
  return {{"alpha_ppm", alpha_ppm},
          {"epoch_length_days", epoch_length_days},
          {"currency_code", currency_code},
          {"max_submission_bytes", max_submission_bytes},
          {"filters",
           {{"min_chars", rules.min_chars},
            {"max_chars", rules.max_chars},
            {"max_non_text_ratio_ppm",
             static_cast<std::int64_t>(rules.max_non_text_ratio * 1'000'000 + 0.5)},
            {"max_repetition_ratio_ppm",
             static_cast<std::int64_t>(rules.max_repetition_ratio * 1'000'000 + 0.5)},
            {"enable_min_chars", rules.enable_min_chars},
            {"enable_max_chars", rules.enable_max_chars},
            {"enable_non_text", rules.enable_non_text},
            {"enable_repetition", rules.enable_repetition}}},
          {"minhash",
           {{"shingle_size", minhash.shingle_size},
            {"num_perms", minhash.num_perms},
            {"seed", minhash.seed}}},
          {"lsh",
           {{"bands", lsh.bands},
            {"rows_per_band", lsh.rows_per_band},
            {"jaccard_threshold_ppm",
             static_cast<std::int64_t>(lsh.jaccard_threshold * 1'000'000 + 0.5)}}}};
}

PlatformConfig PlatformConfig::from_json(const nlohmann::json& j) {
  PlatformConfig c;
  c.alpha_ppm = j.at("alpha_ppm").get<std::int64_t>();
  c.epoch_length_days = j.at("epoch_length_days").get<std::int64_t>();
  c.currency_code = j.at("currency_code").get<std::string>();
  c.max_submission_bytes = j.at("max_submission_bytes").get<std::uint64_t>();
  const auto& f = j.at("filters");
  c.rules.min_chars = f.at("min_chars").get<std::int64_t>();
  c.rules.max_chars = f.at("max_chars").get<std::int64_t>();
  c.rules.max_non_text_ratio = static_cast<double>(f.at("max_non_text_ratio_ppm").get<std::int64_t>()) / 1e6;
  c.rules.max_repetition_ratio =
      static_cast<double>(f.at("max_repetition_ratio_ppm").get<std::int64_t>()) / 1e6;
  c.rules.enable_min_chars = f.at("enable_min_chars").get<bool>();
  c.rules.enable_max_chars = f.at("enable_max_chars").get<bool>();
  c.rules.enable_non_text = f.at("enable_non_text").get<bool>();
  c.rules.enable_repetition = f.at("enable_repetition").get<bool>();
  const auto& m = j.at("minhash");
  c.minhash.shingle_size = m.at("shingle_size").get<std::uint32_t>();
  c.minhash.num_perms = m.at("num_perms").get<std::uint32_t>();
  c.minhash.seed = m.at("seed").get<std::uint64_t>();
  const auto& l = j.at("lsh");
  c.lsh.bands = l.at("bands").get<std::uint32_t>();
  c.lsh.rows_per_band = l.at("rows_per_band").get<std::uint32_t>();
  c.lsh.jaccard_threshold = static_cast<double>(l.at("jaccard_threshold_ppm").get<std::int64_t>()) / 1e6;
  return c;
}

nlohmann::json Submission::to_json() const {
  nlohmann::json j = {{"submission_id", submission_id},
                      {"contributor_id", contributor_id},
                      {"received_at", format_rfc3339(received_at)},
                      {"size_bytes", size_bytes},
                      {"status", to_string(status)},
                      {"accepted_tokens", report.complete() ? report.accepted_tokens() : 0}};
  if (finalized_at) j["finalized_at"] = format_rfc3339(*finalized_at);
  if (!error_code.empty()) j["error"] = {{"code", error_code}, {"message", error_message}};
  return j;
}

nlohmann::json MetricsView::to_json() const {
  return {{"contribution_ratio", contribution_ratio.to_decimal()},
          {"contribution_token_count", contribution_token_count},
          {"current_monetary_reward_minor", current_monetary_reward_minor},
          {"expected_payout_minor", expected_payout_minor}};
}

struct Platform::State {
  State(PlatformConfig cfg, Timestamp genesis_time, std::string admin_hash)
      : config(std::move(cfg)),
        genesis(genesis_time),
        admin_token_hash(std::move(admin_hash)),
        index(config.minhash, config.lsh),
        epochs(genesis_time, Seconds{config.epoch_length_days * kSecondsPerDay}, config.alpha_ppm) {}

  PlatformConfig config;
  Timestamp genesis;
  std::string admin_token_hash;
  std::map<std::string, ContributorAccount> contributors;
  std::map<std::string, std::string> names;         // display_name -> contributor_id
  std::map<std::string, std::string> token_hashes;  // token hash -> contributor_id
  std::map<std::string, Submission> submissions;
  DedupIndex index;
  RevenueBook revenue;
  EpochBook epochs;

  nlohmann::json to_json() const {
    nlohmann::json accounts = nlohmann::json::array();
    for (const auto& [id, a] : contributors) {
      accounts.push_back({{"contributor_id", a.contributor_id},
                          {"display_name", a.display_name},
                          {"registered_at", to_unix(a.registered_at)},
                          {"net_tokens", a.net_tokens}});
    }
    nlohmann::json tokens = nlohmann::json::object();
    for (const auto& [hash, id] : token_hashes) tokens[hash] = id;
    nlohmann::json subs = nlohmann::json::array();
    for (const auto& [id, s] : submissions) {
      // "processing" is transient; persisted state only knows queued work.
      const bool done = s.status == SubmissionStatus::finalized || s.status == SubmissionStatus::failed;
      subs.push_back({{"submission_id", s.submission_id},
                      {"contributor_id", s.contributor_id},
                      {"received_at", to_unix(s.received_at)},
                      {"size_bytes", s.size_bytes},
                      {"body_digest", s.body_digest.hex()},
                      {"status", done ? to_string(s.status) : "queued"},
                      {"report", done ? s.report.to_json() : StageReport::pending(id).to_json()},
                      {"finalized_at", s.finalized_at ? nlohmann::json(to_unix(*s.finalized_at))
                                                      : nlohmann::json()},
                      {"error_code", s.error_code},
                      {"error_message", s.error_message}});
    }
    nlohmann::json events = nlohmann::json::array();
    for (const auto& [t, e] : revenue.events()) events.push_back(e.to_json());
    return {{"config", config.to_json()},
            {"genesis", to_unix(genesis)},
            {"admin_token_hash", admin_token_hash},
            {"contributors", std::move(accounts)},
            {"token_hashes", std::move(tokens)},
            {"submissions", std::move(subs)},
            {"index", index.to_json()},
            {"revenue_events", std::move(events)},
            {"epochs", epochs.to_state_json()}};
  }

  static std::unique_ptr<State> from_json(const nlohmann::json& j) {
    auto s = std::make_unique<State>(PlatformConfig::from_json(j.at("config")),
                                     from_unix(j.at("genesis").get<std::int64_t>()),
                                     j.at("admin_token_hash").get<std::string>());
    for (const auto& a : j.at("contributors")) {
      ContributorAccount acc{a.at("contributor_id").get<std::string>(),
                             a.at("display_name").get<std::string>(),
                             from_unix(a.at("registered_at").get<std::int64_t>()),
                             a.at("net_tokens").get<std::int64_t>()};
      s->names[acc.display_name] = acc.contributor_id;
      s->contributors[acc.contributor_id] = acc;
    }
    for (const auto& [hash, id] : j.at("token_hashes").items()) s->token_hashes[hash] = id.get<std::string>();
    for (const auto& sj : j.at("submissions")) {
      Submission sub;
      sub.submission_id = sj.at("submission_id").get<std::string>();
      sub.contributor_id = sj.at("contributor_id").get<std::string>();
      sub.received_at = from_unix(sj.at("received_at").get<std::int64_t>());
      sub.size_bytes = sj.at("size_bytes").get<std::uint64_t>();
      sub.body_digest = Digest128::from_hex(sj.at("body_digest").get<std::string>());
      sub.status = submission_status_from(sj.at("status").get<std::string>());
      sub.report = StageReport::from_json(sj.at("report"));
      if (!sj.at("finalized_at").is_null()) {
        sub.finalized_at = from_unix(sj.at("finalized_at").get<std::int64_t>());
      }
      sub.error_code = sj.at("error_code").get<std::string>();
      sub.error_message = sj.at("error_message").get<std::string>();
      s->submissions[sub.submission_id] = std::move(sub);
    }
    s->index = DedupIndex::from_json(j.at("index"));
    for (const auto& e : j.at("revenue_events")) s->revenue.record(RevenueEvent::from_json(e));
    s->epochs = EpochBook::from_state_json(j.at("epochs"));
    return s;
  }

  TokenSnapshot tokens() const {
    TokenSnapshot snap;
    for (const auto& [id, a] : contributors) snap.emplace(id, a.net_tokens);
    return snap;
  }
};

Platform::Platform(Options options)
    : data_dir_(options.data_dir),
      clock_(options.clock ? options.clock
                           : Clock([] {
                               return std::chrono::floor<Seconds>(std::chrono::system_clock::now());
                             })),
      blobs_(options.data_dir / kBlobDir) {
  std::filesystem::create_directories(data_dir_);
  const bool has_snapshot = std::filesystem::exists(data_dir_ / kSnapshotFile);
  log_ = std::make_unique<EventLog>(data_dir_ / kLogFile, EventLog::Options{options.sync});
  if (has_snapshot || log_->last_seq() > 0) {
    restore_from_disk();
  } else {
    init_fresh(options);
  }
}

Platform::~Platform() = default;

void Platform::init_fresh(const Options& options) {
  options.config.validate();
  if (options.admin_token.empty()) {
    fail(ErrorKind::config, "missing_admin_token", "an admin token is required to initialize");
  }
  const Timestamp genesis = options.genesis.value_or(clock_());
  commit("init", {{"config", options.config.to_json()},
                  {"genesis", to_unix(genesis)},
                  {"admin_token_hash", hash_token(options.admin_token)}});
}

void Platform::restore_from_disk() {
  std::uint64_t from = 1;
  if (std::filesystem::exists(data_dir_ / kSnapshotFile)) {
    const Snapshot snap = Snapshot::read(data_dir_ / kSnapshotFile);
    state_ = State::from_json(snap.state);
    from = snap.last_seq + 1;
  }
  log_->replay(from, [&](const LogRecord& rec) { apply(rec.kind, rec.data); });
  if (!state_) fail(ErrorKind::storage, "bad_state", "log does not start with an init record");
  for (const auto& [id, sub] : state_->submissions) {
    if (sub.status == SubmissionStatus::queued) queue_.push_back(id);
  }
}

std::uint64_t Platform::commit(const std::string& kind, const nlohmann::json& data) {
  const std::uint64_t seq = log_->append(kind, data);
  apply(kind, data);
  return seq;
}

void Platform::apply(const std::string& kind, const nlohmann::json& d) {
  if (kind == "init") {
    state_ = std::make_unique<State>(PlatformConfig::from_json(d.at("config")),
                                     from_unix(d.at("genesis").get<std::int64_t>()),
                                     d.at("admin_token_hash").get<std::string>());
    return;
  }
  if (!state_) fail(ErrorKind::storage, "bad_state", "record '" + kind + "' precedes init");
  State& s = *state_;

  if (kind == "contributor_registered") {
    ContributorAccount a{d.at("contributor_id").get<std::string>(),
                         d.at("display_name").get<std::string>(),
                         from_unix(d.at("registered_at").get<std::int64_t>()), 0};
    s.names[a.display_name] = a.contributor_id;
    s.token_hashes[d.at("token_hash").get<std::string>()] = a.contributor_id;
    s.contributors[a.contributor_id] = std::move(a);
  } else if (kind == "submission_received") {
    Submission sub;
    sub.submission_id = d.at("submission_id").get<std::string>();
    sub.contributor_id = d.at("contributor_id").get<std::string>();
    sub.received_at = from_unix(d.at("received_at").get<std::int64_t>());
    sub.size_bytes = d.at("size_bytes").get<std::uint64_t>();
    sub.body_digest = Digest128::from_hex(d.at("body_digest").get<std::string>());
    sub.report = StageReport::pending(sub.submission_id);
    s.submissions[sub.submission_id] = std::move(sub);
  } else if (kind == "submission_finalized") {
    Submission& sub = s.submissions.at(d.at("submission_id").get<std::string>());
    const Timestamp at = from_unix(d.at("finalized_at").get<std::int64_t>());
    std::int64_t credited = 0;
    for (const auto& doc : d.at("accepted")) {
      s.index.insert(Digest128::from_hex(doc.at("digest").get<std::string>()),
                     decode_signature(doc.at("signature").get<std::string>()),
                     CorpusSource::contributor, sub.contributor_id, at);
      credited += doc.at("tokens").get<std::int64_t>();
    }
    s.contributors.at(sub.contributor_id).net_tokens += credited;
    sub.report = StageReport::from_json(d.at("report"));
    sub.status = SubmissionStatus::finalized;
    sub.finalized_at = at;
  } else if (kind == "submission_failed") {
    Submission& sub = s.submissions.at(d.at("submission_id").get<std::string>());
    sub.status = SubmissionStatus::failed;
    sub.finalized_at = from_unix(d.at("finalized_at").get<std::int64_t>());
    sub.error_code = d.at("code").get<std::string>();
    sub.error_message = d.at("message").get<std::string>();
    sub.report = StageReport::pending(sub.submission_id);
  } else if (kind == "revenue_accepted") {
    s.revenue.record(RevenueEvent::from_json(d));
  } else if (kind == "epoch_closed") {
    s.epochs.close(d.at("epoch_id").get<std::uint64_t>(),
                   from_unix(d.at("close_time").get<std::int64_t>()),
                   d.at("override").get<bool>(), s.tokens(),
                   [&s](Timestamp a, Timestamp b) { return s.revenue.aggregate(a, b); });
  } else if (kind == "alpha_set") {
    const auto ppm = d.at("alpha_ppm").get<std::int64_t>();
    s.epochs.set_next_alpha(ppm);
    s.config.alpha_ppm = ppm;
  } else if (kind == "corpus_loaded") {
    const CorpusSource source = corpus_source_from_string(d.at("source").get<std::string>());
    const Timestamp at = from_unix(d.at("loaded_at").get<std::int64_t>());
    for (const auto& rec : d.at("records")) {
      s.index.insert(Digest128::from_hex(rec.at("digest").get<std::string>()),
                     decode_signature(rec.at("signature").get<std::string>()), source, {}, at);
    }
  } else {
    fail(ErrorKind::storage, "unknown_record", "unknown log record kind '" + kind + "'");
  }
}

PlatformConfig Platform::config() const {
  std::shared_lock lock(mutex_);
  return state_->config;
}

std::optional<Principal> Platform::authenticate(std::string_view bearer_token) const {
  if (bearer_token.empty()) return std::nullopt;
  const std::string hash = hash_token(bearer_token);
  std::shared_lock lock(mutex_);
  if (sodium_memcmp(hash.data(), state_->admin_token_hash.data(), hash.size()) == 0 &&
      hash.size() == state_->admin_token_hash.size()) {
    return Principal{"admin", Role::consumer_admin};
  }
  const auto it = state_->token_hashes.find(hash);
  if (it == state_->token_hashes.end()) return std::nullopt;
  return Principal{it->second, Role::contributor};
}

Registration Platform::register_contributor(const std::string& display_name) {
  const std::string name = trim_ascii(display_name);
  if (name.empty()) fail(ErrorKind::validation, "empty_name", "display_name must not be empty");
  if (!is_valid_utf8(name)) fail(ErrorKind::validation, "invalid_utf8", "display_name is not UTF-8");
  std::unique_lock lock(mutex_);
  if (state_->names.contains(name)) {
    fail(ErrorKind::conflict, "name_taken", "display name '" + name + "' is already registered");
  }
  Registration reg{padded_id("ctr", state_->contributors.size() + 1), generate_token()};
  commit("contributor_registered", {{"contributor_id", reg.contributor_id},
                                    {"display_name", name},
                                    {"registered_at", to_unix(clock_())},
                                    {"token_hash", hash_token(reg.token)}});
  return reg;
}

std::optional<ContributorAccount> Platform::contributor(const std::string& contributor_id) const {
  std::shared_lock lock(mutex_);
  const auto it = state_->contributors.find(contributor_id);
  if (it == state_->contributors.end()) return std::nullopt;
  return it->second;
}

std::vector<ContributorAccount> Platform::contributors() const {
  std::shared_lock lock(mutex_);
  std::vector<ContributorAccount> out;
  for (const auto& [id, a] : state_->contributors) out.push_back(a);
  return out;
}

TokenSnapshot Platform::token_snapshot_locked() const { return state_->tokens(); }

TokenSnapshot Platform::token_snapshot() const {
  std::shared_lock lock(mutex_);
  return token_snapshot_locked();
}

std::string Platform::submit(const std::string& contributor_id, std::string body) {
  std::string id;
  {
    std::unique_lock lock(mutex_);
    if (!state_->contributors.contains(contributor_id)) {
      fail(ErrorKind::not_found, "unknown_contributor", "no contributor " + contributor_id);
    }
    if (body.size() > state_->config.max_submission_bytes) {
      fail(ErrorKind::too_large, "payload_too_large", "submission exceeds the configured size cap");
    }
    const Digest128 digest = exact_fingerprint(body);
    blobs_.put(digest, body);
    id = padded_id("sub", state_->submissions.size() + 1);
    commit("submission_received", {{"submission_id", id},
                                   {"contributor_id", contributor_id},
                                   {"received_at", to_unix(clock_())},
                                   {"size_bytes", body.size()},
                                   {"body_digest", digest.hex()}});
  }
  {
    std::lock_guard q(queue_mutex_);
    queue_.push_back(id);
  }
  queue_cv_.notify_one();
  return id;
}

void Platform::process_submission(const std::string& submission_id) {
  Digest128 body_digest;
  PipelineOptions options;
  {
    std::unique_lock lock(mutex_);
    const auto it = state_->submissions.find(submission_id);
    if (it == state_->submissions.end()) {
      fail(ErrorKind::not_found, "unknown_submission", "no submission " + submission_id);
    }
    Submission& sub = it->second;
    if (sub.status == SubmissionStatus::finalized || sub.status == SubmissionStatus::failed) {
      fail(ErrorKind::conflict, "already_processed",
           "submission " + submission_id + " was already processed");
    }
    if (sub.status == SubmissionStatus::processing) {
      fail(ErrorKind::conflict, "in_progress", "submission " + submission_id + " is being processed");
    }
    sub.status = SubmissionStatus::processing;
    body_digest = sub.body_digest;
    options = PipelineOptions{state_->config.rules, state_->config.minhash, state_->config.lsh};
  }
  {
    std::lock_guard q(queue_mutex_);
    queue_.erase(std::remove(queue_.begin(), queue_.end(), submission_id), queue_.end());
  }

  auto record_failure = [&](const std::string& code, const std::string& message) {
    std::unique_lock lock(mutex_);
    commit("submission_failed", {{"submission_id", submission_id},
                                 {"finalized_at", to_unix(clock_())},
                                 {"code", code},
                                 {"message", message}});
  };

  std::optional<PreparedSubmission> prepared;
  try {
    const auto body = blobs_.get(body_digest);
    if (!body) fail(ErrorKind::storage, "missing_blob", "submission body is missing from the blob store");
    prepared = prepare_submission(submission_id, *body, options);
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::storage) {
      std::unique_lock lock(mutex_);
      state_->submissions.at(submission_id).status = SubmissionStatus::queued;
      throw;
    }
    record_failure(e.code(), e.what());
    return;
  }

  std::unique_lock lock(mutex_);
  Submission& sub = state_->submissions.at(submission_id);
  try {
    PipelineResult result = finalize_submission(std::move(*prepared), state_->index);
    nlohmann::json accepted = nlohmann::json::array();
    for (const auto& doc : result.accepted) {
      blobs_.put(doc.digest, doc.normalized);
      accepted.push_back({{"digest", doc.digest.hex()},
                          {"signature", encode_signature(doc.signature)},
                          {"tokens", doc.tokens}});
    }
    commit("submission_finalized", {{"submission_id", submission_id},
                                    {"finalized_at", to_unix(clock_())},
                                    {"report", result.report.to_json()},
                                    {"accepted", std::move(accepted)}});
  } catch (...) {
    sub.status = SubmissionStatus::queued;
    throw;
  }
}

bool Platform::process_next() {
  std::string id;
  {
    std::lock_guard q(queue_mutex_);
    if (queue_.empty()) return false;
    id = queue_.front();
    queue_.pop_front();
  }
  process_submission(id);
  return true;
}

void Platform::process_all() {
  while (process_next()) {
  }
}

void Platform::run_worker(std::stop_token stop) {
  while (!stop.stop_requested()) {
    std::string id;
    {
      std::unique_lock q(queue_mutex_);
      if (!queue_cv_.wait(q, stop, [&] { return !queue_.empty(); })) return;
      id = queue_.front();
      queue_.pop_front();
    }
    try {
      process_submission(id);
    } catch (const Error&) {
      // Storage failures leave the submission queued for the next start.
    }
  }
}

std::optional<Submission> Platform::submission(const std::string& submission_id) const {
  std::shared_lock lock(mutex_);
  const auto it = state_->submissions.find(submission_id);
  if (it == state_->submissions.end()) return std::nullopt;
  return it->second;
}

std::vector<Submission> Platform::submissions(const std::optional<std::string>& contributor_id) const {
  std::shared_lock lock(mutex_);
  std::vector<Submission> out;
  for (const auto& [id, s] : state_->submissions) {
    if (!contributor_id || s.contributor_id == *contributor_id) out.push_back(s);
  }
  return out;
}

IngestOutcome Platform::ingest_revenue(const RevenueEvent& event) {
  const RevenueBook::PendingGuard pending(state_->revenue);
  std::unique_lock lock(mutex_);
  if (state_->revenue.contains(event.event_id)) return {IngestStatus::duplicate, {}};
  if (event.currency != state_->config.currency_code) {
    return {IngestStatus::rejected, "currency mismatch"};
  }
  const IngestOutcome outcome =
      state_->revenue.check(event, state_->epochs.open_epoch().period_start);
  if (outcome.status == IngestStatus::accepted) commit("revenue_accepted", event.to_json());
  return outcome;
}

Minor Platform::aggregate_revenue(Timestamp start, Timestamp end) const {
  std::shared_lock lock(mutex_);
  return state_->revenue.aggregate(start, end);
}

std::vector<UsageBucket> Platform::usage_detail(Timestamp start, Timestamp end) const {
  std::shared_lock lock(mutex_);
  return state_->revenue.usage_detail(start, end);
}

PayoutEpoch Platform::open_epoch() const {
  std::shared_lock lock(mutex_);
  return state_->epochs.open_epoch();
}

std::vector<PayoutEpoch> Platform::epochs() const {
  std::shared_lock lock(mutex_);
  return state_->epochs.epochs();
}

EpochStatement Platform::statement(std::uint64_t epoch_id) const {
  std::shared_lock lock(mutex_);
  return state_->epochs.statement(epoch_id);
}

std::string Platform::statement_json(std::uint64_t epoch_id,
                                     const std::optional<std::string>& only_contributor) const {
  std::shared_lock lock(mutex_);
  return datapool::statement_json(state_->epochs.statement(epoch_id), state_->config.currency_code,
                                  only_contributor)
      .dump();
}

CloseOutcome Platform::close_epoch(std::uint64_t epoch_id, std::optional<Timestamp> close_time,
                                   bool admin_override) {
  std::unique_lock lock(mutex_);
  const Timestamp t = close_time.value_or(clock_());
  if (state_->epochs.validate_close(epoch_id, t, admin_override, state_->revenue.pending())) {
    return CloseOutcome{state_->epochs.statement(epoch_id), true};
  }
  commit("epoch_closed", {{"epoch_id", epoch_id}, {"close_time", to_unix(t)}, {"override", admin_override}});
  return CloseOutcome{state_->epochs.statement(epoch_id), false};
}

void Platform::set_alpha(std::int64_t alpha_ppm) {
  if (alpha_ppm < 0 || alpha_ppm > kPpmScale) {
    fail(ErrorKind::validation, "alpha_out_of_range", "alpha_ppm must be within [0, 1000000]");
  }
  std::unique_lock lock(mutex_);
  commit("alpha_set", {{"alpha_ppm", alpha_ppm}});
}

ForecastEstimate Platform::forecast_locked(const TokenSnapshot& tokens) const {
  const PayoutEpoch& open = state_->epochs.open_epoch();
  const Timestamp now = clock_();
  if (now <= open.period_start) {
    ForecastEstimate f;
    f.as_of = now;
    f.insufficient_data = true;
    return f;
  }
  const Minor so_far =
      state_->revenue.aggregate(open.period_start, std::min(now + Seconds{1}, open.period_end));
  return expected_payout(now, open, so_far, tokens, open.alpha_ppm);
}

ForecastEstimate Platform::forecast() const {
  std::shared_lock lock(mutex_);
  return forecast_locked(token_snapshot_locked());
}

MetricsView Platform::metrics_locked(const std::string& contributor_id, const TokenSnapshot& tokens,
                                     const ForecastEstimate& forecast) const {
  const auto it = tokens.find(contributor_id);
  if (it == tokens.end()) {
    fail(ErrorKind::not_found, "unknown_contributor", "no contributor " + contributor_id);
  }
  MetricsView view;
  view.contribution_token_count = it->second;
  std::int64_t total = 0;
  for (const auto& [id, t] : tokens) total += t;
  view.contribution_ratio = total > 0 ? contribution_ratio(contributor_id, tokens) : Rational{0, 1};
  if (const PayoutEpoch* last = state_->epochs.last_closed()) {
    for (const auto& line : state_->epochs.lines(last->epoch_id)) {
      if (line.contributor_id == contributor_id) view.current_monetary_reward_minor = line.reward_minor;
    }
  }
  if (const auto f = forecast.expected_payout_minor.find(contributor_id);
      f != forecast.expected_payout_minor.end()) {
    view.expected_payout_minor = f->second;
  }
  return view;
}

MetricsView Platform::metrics(const std::string& contributor_id) const {
  std::shared_lock lock(mutex_);
  const TokenSnapshot tokens = token_snapshot_locked();
  return metrics_locked(contributor_id, tokens, forecast_locked(tokens));
}

std::map<std::string, MetricsView> Platform::all_metrics() const {
  std::shared_lock lock(mutex_);
  const TokenSnapshot tokens = token_snapshot_locked();
  const ForecastEstimate f = forecast_locked(tokens);
  std::map<std::string, MetricsView> out;
  for (const auto& [id, t] : tokens) out.emplace(id, metrics_locked(id, tokens, f));
  return out;
}

std::size_t Platform::load_corpus(const FingerprintFile& file, CorpusSource source) {
  if (source == CorpusSource::contributor) {
    fail(ErrorKind::validation, "invalid_corpus_source", "corpus source must be consumer or public");
  }
  std::unique_lock lock(mutex_);
  if (!(file.params == state_->config.minhash)) {
    fail(ErrorKind::config, "parameter_mismatch",
         "fingerprint file parameters differ from the platform's MinHash parameters");
  }
  std::size_t fresh = 0;
  std::unordered_set<Digest128, Digest128Hash> seen;
  nlohmann::json records = nlohmann::json::array();
  for (const auto& rec : file.records) {
    if (rec.signature.size() != file.params.num_perms) {
      fail(ErrorKind::config, "signature_mismatch", "record signature length differs from header");
    }
    if (state_->index.contains(rec.digest) || !seen.insert(rec.digest).second) continue;
    ++fresh;
    records.push_back({{"digest", rec.digest.hex()}, {"signature", encode_signature(rec.signature)}});
  }
  if (fresh > 0) {
    commit("corpus_loaded",
           {{"source", to_string(source)}, {"loaded_at", to_unix(clock_())}, {"records", std::move(records)}});
  }
  return fresh;
}

std::size_t Platform::index_size() const {
  std::shared_lock lock(mutex_);
  return state_->index.size();
}

DuplicateQuery Platform::query_index(const Digest128& digest, const Signature& signature) const {
  std::shared_lock lock(mutex_);
  return state_->index.query(digest, signature);
}

void Platform::snapshot() {
  std::unique_lock lock(mutex_);
  Snapshot snap{log_->last_seq(), state_->to_json()};
  snap.write(data_dir_ / kSnapshotFile);
  log_->compact(snap.last_seq);
}

nlohmann::json Platform::state_json() const {
  std::shared_lock lock(mutex_);
  return state_->to_json();
}

std::uint64_t Platform::last_seq() const {
  std::shared_lock lock(mutex_);
  return log_->last_seq();
}

}  // namespace datapool
