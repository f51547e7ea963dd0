#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <stop_token>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "datapool/dedup.hpp"
#include "datapool/filters.hpp"
#include "datapool/ledger.hpp"
#include "datapool/pipeline.hpp"
#include "datapool/revenue.hpp"
#include "datapool/storage.hpp"

namespace datapool {

struct PlatformConfig {
  std::int64_t alpha_ppm = 100'000;
  std::int64_t epoch_length_days = 30;
  std::string currency_code = "USD";
  std::uint64_t max_submission_bytes = std::uint64_t{1} << 30;
  FilterRuleSet rules;
  MinHashParams minhash;
  LshParams lsh;

  void validate() const;
  nlohmann::json to_json() const;
  static PlatformConfig from_json(const nlohmann::json& j);
};

enum class Role { contributor, consumer_admin };

const char* to_string(Role role);

struct Principal {
  std::string principal_id;
  Role role = Role::contributor;

  bool is_admin() const { return role == Role::consumer_admin; }
};

struct ContributorAccount {
  std::string contributor_id;
  std::string display_name;
  Timestamp registered_at{};
  /// Sum of accepted tokens over finalized submissions.
  std::int64_t net_tokens = 0;
};

enum class SubmissionStatus { queued, processing, finalized, failed };

const char* to_string(SubmissionStatus status);

struct Submission {
  std::string submission_id;
  std::string contributor_id;
  Timestamp received_at{};
  std::uint64_t size_bytes = 0;
  Digest128 body_digest;
  SubmissionStatus status = SubmissionStatus::queued;
  StageReport report;
  std::optional<Timestamp> finalized_at;
  std::string error_code;
  std::string error_message;

  nlohmann::json to_json() const;
};

/// The four dashboard figures for one contributor.
struct MetricsView {
  Rational contribution_ratio;
  std::int64_t contribution_token_count = 0;
  /// Reward from the most recently closed epoch.
  Minor current_monetary_reward_minor = 0;
  /// Forecast for the open epoch.
  Minor expected_payout_minor = 0;

  nlohmann::json to_json() const;
};

struct Registration {
  std::string contributor_id;
  /// Bearer credential, returned once; only its hash is stored.
  std::string token;
};

struct CloseOutcome {
  EpochStatement statement;
  bool already_closed = false;
};

/// The platform's full mutable state as a fold over the event log.
///
/// Every mutation is validated, appended durably to the log, then applied
/// through the same apply() path that replay uses, so replaying the log always
/// reproduces the live state. Reads take a shared lock; writes are exclusive.
class Platform {
 public:
  using Clock = std::function<Timestamp()>;

  struct Options {
    std::filesystem::path data_dir;
    bool sync = true;
    Clock clock;
    /// Used only when initializing a fresh data directory.
    PlatformConfig config;
    std::string admin_token;
    std::optional<Timestamp> genesis;
  };

  /// Restores snapshot + log if data_dir holds state, otherwise initializes it.
  explicit Platform(Options options);
  ~Platform();
  Platform(const Platform&) = delete;
  Platform& operator=(const Platform&) = delete;

  Timestamp now() const { return clock_(); }
  PlatformConfig config() const;

  std::optional<Principal> authenticate(std::string_view bearer_token) const;

  Registration register_contributor(const std::string& display_name);
  std::optional<ContributorAccount> contributor(const std::string& contributor_id) const;
  std::vector<ContributorAccount> contributors() const;
  TokenSnapshot token_snapshot() const;

  /// Persists the body and queues it. Returns the submission id.
  std::string submit(const std::string& contributor_id, std::string body);
  /// Runs the pipeline for one queued submission and commits atomically.
  /// Throws Error(conflict, "already_processed") for a finalized submission.
  void process_submission(const std::string& submission_id);
  /// Processes the oldest queued submission. False if the queue was empty.
  bool process_next();
  void process_all();
  /// Worker loop for asynchronous processing; returns when stop is requested.
  void run_worker(std::stop_token stop);

  std::optional<Submission> submission(const std::string& submission_id) const;
  /// Submissions ordered by id; contributor filter when set.
  std::vector<Submission> submissions(const std::optional<std::string>& contributor_id) const;

  IngestOutcome ingest_revenue(const RevenueEvent& event);
  Minor aggregate_revenue(Timestamp start, Timestamp end) const;
  std::vector<UsageBucket> usage_detail(Timestamp start, Timestamp end) const;

  PayoutEpoch open_epoch() const;
  std::vector<PayoutEpoch> epochs() const;
  EpochStatement statement(std::uint64_t epoch_id) const;
  /// Canonical statement document; `only_contributor` restricts lines.
  std::string statement_json(std::uint64_t epoch_id,
                             const std::optional<std::string>& only_contributor) const;
  /// close_time defaults to now. Idempotent on closed epochs.
  CloseOutcome close_epoch(std::uint64_t epoch_id, std::optional<Timestamp> close_time,
                           bool admin_override);
  /// Applies from the next epoch opened.
  void set_alpha(std::int64_t alpha_ppm);

  MetricsView metrics(const std::string& contributor_id) const;
  std::map<std::string, MetricsView> all_metrics() const;
  ForecastEstimate forecast() const;

  /// Adds corpus fingerprints. Returns the number of new index entries.
  std::size_t load_corpus(const FingerprintFile& file, CorpusSource source);
  std::size_t index_size() const;
  DuplicateQuery query_index(const Digest128& digest, const Signature& signature) const;

  /// Writes a snapshot and compacts the log behind it.
  void snapshot();

  /// Canonical serialization of the whole state, used for snapshots and for
  /// comparing live against replayed state.
  nlohmann::json state_json() const;
  std::uint64_t last_seq() const;

  const BlobStore& blobs() const { return blobs_; }

 private:
  struct State;

  void init_fresh(const Options& options);
  void restore_from_disk();
  std::uint64_t commit(const std::string& kind, const nlohmann::json& data);
  void apply(const std::string& kind, const nlohmann::json& data);
  MetricsView metrics_locked(const std::string& contributor_id, const TokenSnapshot& tokens,
                             const ForecastEstimate& forecast) const;
  ForecastEstimate forecast_locked(const TokenSnapshot& tokens) const;
  TokenSnapshot token_snapshot_locked() const;

  std::filesystem::path data_dir_;
  Clock clock_;
  BlobStore blobs_;
  std::unique_ptr<EventLog> log_;
  std::unique_ptr<State> state_;

  mutable std::shared_mutex mutex_;
  std::mutex queue_mutex_;
  std::condition_variable_any queue_cv_;
  std::deque<std::string> queue_;
};

/// Hex BLAKE2b-256 of a bearer token.
std::string hash_token(std::string_view token);
/// Fresh random bearer token.
std::string generate_token();

}  // namespace datapool
