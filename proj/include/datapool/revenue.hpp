#pragma once

#include <atomic>
#include <cstdint>
#include <map>
#include <string>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "datapool/ledger.hpp"
#include "datapool/time.hpp"

namespace datapool {

struct UsageMeta {
  std::string endpoint;
  std::int64_t request_count = 0;

  friend bool operator==(const UsageMeta&, const UsageMeta&) = default;
};

/// One consumer-reported revenue record. event_id is producer-assigned and
/// globally unique; replays are ignored.
struct RevenueEvent {
  std::string event_id;
  Timestamp occurred_at{};
  Minor amount_minor = 0;
  std::string currency;
  UsageMeta usage;

  friend bool operator==(const RevenueEvent&, const RevenueEvent&) = default;

  nlohmann::json to_json() const;
  /// Parses the ingestion payload
  /// {event_id, occurred_at (RFC 3339), amount_minor, currency, usage_meta}.
  /// Throws Error(validation) on a malformed payload.
  static RevenueEvent from_json(const nlohmann::json& j);
};

enum class IngestStatus { accepted, duplicate, rejected };

const char* to_string(IngestStatus status);

struct IngestOutcome {
  IngestStatus status = IngestStatus::accepted;
  /// Reason code when rejected: "non-positive amount", "epoch closed", ...
  std::string reason;
};

struct UsageBucket {
  std::int64_t day = 0;  // days since 1970-01-01
  Minor amount_minor = 0;
  std::int64_t event_count = 0;
  /// endpoint -> summed request_count
  std::map<std::string, std::int64_t> endpoints;

  nlohmann::json to_json() const;
};

/// Append-only store of accepted revenue events with windowed aggregation.
///
/// Not internally synchronized; the platform serializes writers. The pending
/// counter is atomic so close_epoch can see ingests queued behind the writer lock.
class RevenueBook {
 public:
  /// Validation without mutation. `open_since` is the start of the open epoch;
  /// anything earlier belongs to a closed epoch.
  IngestOutcome check(const RevenueEvent& event, Timestamp open_since) const;

  /// check() then, if accepted, records the event.
  IngestOutcome ingest(const RevenueEvent& event, Timestamp open_since);

  /// Records an event already known to be acceptable (log replay).
  void record(const RevenueEvent& event);

  /// Exact sum of accepted events with start <= occurred_at < end.
  Minor aggregate(Timestamp start, Timestamp end) const;

  /// Per-day buckets for [start, end), ascending; days without events are omitted.
  std::vector<UsageBucket> usage_detail(Timestamp start, Timestamp end) const;

  std::size_t event_count() const { return ids_.size(); }
  bool contains(const std::string& event_id) const { return ids_.contains(event_id); }
  const std::multimap<Timestamp, RevenueEvent>& events() const { return by_time_; }

  std::size_t pending() const { return pending_.load(); }

  /// RAII marker for an ingest request waiting on the writer lock.
  class PendingGuard {
   public:
    explicit PendingGuard(const RevenueBook& book) : book_(book) { ++book_.pending_; }
    ~PendingGuard() { --book_.pending_; }
    PendingGuard(const PendingGuard&) = delete;
    PendingGuard& operator=(const PendingGuard&) = delete;

   private:
    const RevenueBook& book_;
  };

 private:
  std::multimap<Timestamp, RevenueEvent> by_time_;
  std::unordered_set<std::string> ids_;
  mutable std::atomic<std::size_t> pending_{0};
};

}  // namespace datapool
