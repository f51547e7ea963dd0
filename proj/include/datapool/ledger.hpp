#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "datapool/rational.hpp"
#include "datapool/time.hpp"

namespace datapool {

/// Money in minor currency units (cents). Money never touches floating point.
using Minor = std::int64_t;

/// Share of revenue paid to contributors, in parts per million.
inline constexpr std::int64_t kPpmScale = 1'000'000;

/// contributor_id -> net accepted tokens. Ordered so iteration is by ascending id.
using TokenSnapshot = std::map<std::string, std::int64_t>;

struct PayoutLine {
  std::uint64_t epoch_id = 0;
  std::string contributor_id;
  std::int64_t tokens = 0;
  Minor reward_minor = 0;

  friend bool operator==(const PayoutLine&, const PayoutLine&) = default;
};

/// Result of splitting one epoch's contributor pool.
struct RewardSplit {
  Minor pool_minor = 0;
  /// Pool retained by the consumer because no tokens were contributed.
  Minor undistributed_minor = 0;
  bool no_contributions = false;
  /// One line per snapshot entry, ascending contributor_id.
  std::vector<PayoutLine> lines;
};

/// floor(alpha_ppm * revenue / 1e6), computed without overflow.
Minor reward_pool(Minor revenue_total_minor, std::int64_t alpha_ppm);

/// Proportional reward split.
///
/// Each contributor's exact quota is pool * T_i / sum(T). Floors are handed out
/// first and the leftover units go one each to the largest fractional
/// remainders, ties broken by ascending contributor_id, so the rewards always sum
/// to the pool exactly and no reward is a full unit away from its quota.
///
/// Throws Error(validation) on negative tokens, negative revenue, or alpha
/// outside [0, 1e6]. A zero token total is not an error: the split is flagged
/// `no_contributions` and the pool is reported as undistributed.
RewardSplit compute_rewards(const TokenSnapshot& snapshot, Minor revenue_total_minor,
                            std::int64_t alpha_ppm);

/// T_i / sum(T) in lowest terms. Throws "undefined-ratio" when the total is zero
/// and "unknown-contributor" when the id is absent.
Rational contribution_ratio(const std::string& contributor_id, const TokenSnapshot& snapshot);

enum class EpochStatus { open, closed };

struct PayoutEpoch {
  std::uint64_t epoch_id = 0;
  Timestamp period_start{};
  Timestamp period_end{};
  EpochStatus status = EpochStatus::open;
  std::int64_t alpha_ppm = 0;
  // Populated at close.
  Minor revenue_total_minor = 0;
  TokenSnapshot token_snapshot;
  Minor pool_minor = 0;
  Minor undistributed_minor = 0;
  bool no_contributions = false;
  std::optional<Timestamp> closed_at;
  bool early_close = false;

  std::int64_t token_total() const;
};

struct ForecastEstimate {
  Timestamp as_of{};
  bool insufficient_data = false;
  bool no_contributions = false;
  Minor projected_epoch_revenue_minor = 0;
  std::map<std::string, Minor> expected_payout_minor;
};

/// Linear extrapolation of the open epoch's revenue:
/// projected = floor(revenue_so_far * epoch_duration / elapsed), then split with
/// compute_rewards. `now` past period_end is clamped to period_end.
ForecastEstimate expected_payout(Timestamp now, const PayoutEpoch& open_epoch,
                                 Minor revenue_so_far_minor, const TokenSnapshot& snapshot,
                                 std::int64_t alpha_ppm);

struct EpochStatement {
  PayoutEpoch epoch;
  std::vector<PayoutLine> lines;
};

struct CloseResult {
  EpochStatement statement;
  PayoutEpoch successor;
  /// True when the epoch had already been closed and the stored result was returned.
  bool already_closed = false;
};

/// Revenue lookup for a half-open window [start, end).
using RevenueWindowFn = std::function<Minor(Timestamp start, Timestamp end)>;

/// Sequence of contiguous payout epochs, exactly one of which is open.
///
/// Not internally synchronized: close() requires a single writer.
class EpochBook {
 public:
  EpochBook(Timestamp genesis, Seconds epoch_length, std::int64_t alpha_ppm);
  EpochBook() = delete;

  const PayoutEpoch& open_epoch() const { return epochs_.back(); }
  const PayoutEpoch& epoch(std::uint64_t epoch_id) const;
  const std::vector<PayoutEpoch>& epochs() const { return epochs_; }
  const std::vector<PayoutLine>& lines(std::uint64_t epoch_id) const;
  EpochStatement statement(std::uint64_t epoch_id) const;
  /// Most recently closed epoch, if any.
  const PayoutEpoch* last_closed() const;

  Seconds epoch_length() const { return epoch_length_; }

  /// Alpha applied to epochs opened from now on; the open epoch keeps its own.
  void set_next_alpha(std::int64_t alpha_ppm);
  std::int64_t next_alpha() const { return next_alpha_; }

  /// Checks close() preconditions without mutating. Returns true when the
  /// epoch is already closed (close() would return the stored result).
  bool validate_close(std::uint64_t epoch_id, Timestamp close_time, bool admin_override,
                      std::size_t pending_events) const;

  /// Snapshots tokens, freezes revenue for the epoch window, computes the payout
  /// lines, and opens the successor at the (possibly overridden) period end.
  /// Re-closing a closed epoch returns the persisted result unchanged.
  CloseResult close(std::uint64_t epoch_id, Timestamp close_time, bool admin_override,
                    const TokenSnapshot& snapshot, const RevenueWindowFn& revenue,
                    std::size_t pending_events = 0);

  /// Full state including token snapshots, for persistence.
  nlohmann::json to_state_json() const;
  static EpochBook from_state_json(const nlohmann::json& j);

 private:
  std::size_t index_of(std::uint64_t epoch_id) const;

  std::vector<PayoutEpoch> epochs_;
  std::vector<std::vector<PayoutLine>> lines_;
  Seconds epoch_length_;
  std::int64_t next_alpha_;
};

nlohmann::json to_json(const PayoutLine& line);
nlohmann::json to_json(const PayoutEpoch& epoch);
/// Canonical statement document. With `only_contributor` set, lines are
/// restricted to that contributor.
nlohmann::json statement_json(const EpochStatement& statement, const std::string& currency,
                              const std::optional<std::string>& only_contributor = std::nullopt);
nlohmann::json to_json(const ForecastEstimate& forecast);

const char* to_string(EpochStatus status);

}  // namespace datapool
