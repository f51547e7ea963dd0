#include "datapool/ledger.hpp"

#include <algorithm>
#include <numeric>

#include "datapool/error.hpp"

namespace datapool {
namespace {

using u128 = unsigned __int128;

std::int64_t checked_total(const TokenSnapshot& snapshot) {
  std::int64_t total = 0;
  for (const auto& [id, tokens] : snapshot) {
    if (tokens < 0) {
      fail(ErrorKind::validation, "negative_tokens", "token count for '" + id + "' is negative");
    }
    if (__builtin_add_overflow(total, tokens, &total)) {
      fail(ErrorKind::validation, "token_overflow", "token total exceeds 64-bit range");
    }
  }
  return total;
}

void check_alpha(std::int64_t alpha_ppm) {
  if (alpha_ppm < 0 || alpha_ppm > kPpmScale) {
    fail(ErrorKind::validation, "alpha_out_of_range",
         "alpha_ppm must be within [0, 1000000], got " + std::to_string(alpha_ppm));
  }
}

}  // namespace

Minor reward_pool(Minor revenue_total_minor, std::int64_t alpha_ppm) {
  check_alpha(alpha_ppm);
  if (revenue_total_minor < 0) {
    fail(ErrorKind::validation, "negative_revenue", "revenue_total_minor is negative");
  }
  return static_cast<Minor>(static_cast<u128>(revenue_total_minor) *
                            static_cast<u128>(alpha_ppm) / kPpmScale);
}

RewardSplit compute_rewards(const TokenSnapshot& snapshot, Minor revenue_total_minor,
                            std::int64_t alpha_ppm) {
  RewardSplit split;
  split.pool_minor = reward_pool(revenue_total_minor, alpha_ppm);
  const std::int64_t total = checked_total(snapshot);

  split.lines.reserve(snapshot.size());
  for (const auto& [id, tokens] : snapshot) {
    split.lines.push_back(PayoutLine{0, id, tokens, 0});
  }
  if (total == 0) {
    split.no_contributions = true;
    split.undistributed_minor = split.pool_minor;
    return split;
  }

  const auto pool = static_cast<u128>(split.pool_minor);
  const auto denom = static_cast<u128>(total);
  std::vector<u128> remainders(split.lines.size());
  Minor assigned = 0;
  for (std::size_t i = 0; i < split.lines.size(); ++i) {
    const u128 quota = pool * static_cast<u128>(split.lines[i].tokens);
    split.lines[i].reward_minor = static_cast<Minor>(quota / denom);
    remainders[i] = quota % denom;
    assigned += split.lines[i].reward_minor;
  }

  // Lines are already in ascending id order, so a stable sort on remainder
  // alone gives the id tie-break.
  std::vector<std::size_t> order(split.lines.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return remainders[a] > remainders[b]; });
  const auto leftover = static_cast<std::size_t>(split.pool_minor - assigned);
  for (std::size_t k = 0; k < leftover; ++k) {
    split.lines[order[k]].reward_minor += 1;
  }
  return split;
}

Rational contribution_ratio(const std::string& contributor_id, const TokenSnapshot& snapshot) {
  const auto it = snapshot.find(contributor_id);
  if (it == snapshot.end()) {
    fail(ErrorKind::not_found, "unknown-contributor",
         "contributor '" + contributor_id + "' is not in the snapshot");
  }
  const std::int64_t total = checked_total(snapshot);
  if (total == 0) {
    fail(ErrorKind::validation, "undefined-ratio", "token total is zero");
  }
  return Rational::make(it->second, total);
}

std::int64_t PayoutEpoch::token_total() const {
  return checked_total(token_snapshot);
}

ForecastEstimate expected_payout(Timestamp now, const PayoutEpoch& open_epoch,
                                 Minor revenue_so_far_minor, const TokenSnapshot& snapshot,
                                 std::int64_t alpha_ppm) {
  if (revenue_so_far_minor < 0) {
    fail(ErrorKind::validation, "negative_revenue", "revenue_so_far_minor is negative");
  }
  if (now < open_epoch.period_start) {
    fail(ErrorKind::validation, "before_epoch", "forecast time precedes the epoch start");
  }
  ForecastEstimate estimate;
  estimate.as_of = now;
  const Timestamp effective = std::min(now, open_epoch.period_end);
  const std::int64_t elapsed = (effective - open_epoch.period_start).count();
  if (elapsed <= 0) {
    estimate.insufficient_data = true;
    return estimate;
  }
  const std::int64_t duration = (open_epoch.period_end - open_epoch.period_start).count();
  const u128 projected = static_cast<u128>(revenue_so_far_minor) * static_cast<u128>(duration) /
                         static_cast<u128>(elapsed);
  if (projected > static_cast<u128>(INT64_MAX)) {
    fail(ErrorKind::validation, "revenue_overflow", "projected revenue exceeds 64-bit range");
  }
  estimate.projected_epoch_revenue_minor = static_cast<Minor>(projected);

  const RewardSplit split =
      compute_rewards(snapshot, estimate.projected_epoch_revenue_minor, alpha_ppm);
  if (split.no_contributions) {
    estimate.no_contributions = true;
    return estimate;
  }
  for (const auto& line : split.lines) {
    estimate.expected_payout_minor.emplace(line.contributor_id, line.reward_minor);
  }
  return estimate;
}

EpochBook::EpochBook(Timestamp genesis, Seconds epoch_length, std::int64_t alpha_ppm)
    : epoch_length_(epoch_length), next_alpha_(alpha_ppm) {
  check_alpha(alpha_ppm);
  if (epoch_length.count() <= 0) {
    fail(ErrorKind::validation, "invalid_epoch_length", "epoch length must be positive");
  }
  PayoutEpoch first;
  first.epoch_id = 1;
  first.period_start = genesis;
  first.period_end = genesis + epoch_length;
  first.alpha_ppm = alpha_ppm;
  epochs_.push_back(first);
  lines_.emplace_back();
}

std::size_t EpochBook::index_of(std::uint64_t epoch_id) const {
  // Epoch ids are dense and start at 1.
  if (epoch_id == 0 || epoch_id > epochs_.size()) {
    fail(ErrorKind::not_found, "unknown_epoch", "no epoch " + std::to_string(epoch_id));
  }
  return static_cast<std::size_t>(epoch_id - 1);
}

const PayoutEpoch& EpochBook::epoch(std::uint64_t epoch_id) const {
  return epochs_[index_of(epoch_id)];
}

const std::vector<PayoutLine>& EpochBook::lines(std::uint64_t epoch_id) const {
  return lines_[index_of(epoch_id)];
}

EpochStatement EpochBook::statement(std::uint64_t epoch_id) const {
  const std::size_t i = index_of(epoch_id);
  return EpochStatement{epochs_[i], lines_[i]};
}

const PayoutEpoch* EpochBook::last_closed() const {
  return epochs_.size() >= 2 ? &epochs_[epochs_.size() - 2] : nullptr;
}

void EpochBook::set_next_alpha(std::int64_t alpha_ppm) {
  check_alpha(alpha_ppm);
  next_alpha_ = alpha_ppm;
}

bool EpochBook::validate_close(std::uint64_t epoch_id, Timestamp close_time, bool admin_override,
                               std::size_t pending_events) const {
  const PayoutEpoch& target = epochs_[index_of(epoch_id)];
  if (target.status == EpochStatus::closed) return true;
  if (pending_events > 0) {
    fail(ErrorKind::conflict, "pending-events",
         std::to_string(pending_events) + " revenue event(s) still pending ingestion");
  }
  if (close_time < target.period_end) {
    if (!admin_override) {
      fail(ErrorKind::conflict, "epoch_not_ended",
           "epoch " + std::to_string(epoch_id) + " ends at " + format_rfc3339(target.period_end));
    }
    if (close_time <= target.period_start) {
      fail(ErrorKind::validation, "close_before_start",
           "early close time must be after the epoch start");
    }
  }
  return false;
}

CloseResult EpochBook::close(std::uint64_t epoch_id, Timestamp close_time, bool admin_override,
                             const TokenSnapshot& snapshot, const RevenueWindowFn& revenue,
                             std::size_t pending_events) {
  const std::size_t i = index_of(epoch_id);
  if (validate_close(epoch_id, close_time, admin_override, pending_events)) {
    return CloseResult{EpochStatement{epochs_[i], lines_[i]}, epochs_[i + 1], true};
  }

  PayoutEpoch closed = epochs_[i];
  if (close_time < closed.period_end) {
    closed.period_end = close_time;
    closed.early_close = true;
  }
  closed.revenue_total_minor = revenue(closed.period_start, closed.period_end);
  RewardSplit split = compute_rewards(snapshot, closed.revenue_total_minor, closed.alpha_ppm);
  for (auto& line : split.lines) line.epoch_id = epoch_id;
  closed.token_snapshot = snapshot;
  closed.pool_minor = split.pool_minor;
  closed.undistributed_minor = split.undistributed_minor;
  closed.no_contributions = split.no_contributions;
  closed.closed_at = close_time;
  closed.status = EpochStatus::closed;

  PayoutEpoch successor;
  successor.epoch_id = epoch_id + 1;
  successor.period_start = closed.period_end;
  successor.period_end = closed.period_end + epoch_length_;
  successor.alpha_ppm = next_alpha_;

  epochs_[i] = closed;
  lines_[i] = std::move(split.lines);
  epochs_.push_back(successor);
  lines_.emplace_back();
  return CloseResult{EpochStatement{epochs_[i], lines_[i]}, successor, false};
}

nlohmann::json EpochBook::to_state_json() const {
  nlohmann::json list = nlohmann::json::array();
  for (std::size_t i = 0; i < epochs_.size(); ++i) {
    const PayoutEpoch& e = epochs_[i];
    nlohmann::json snapshot = nlohmann::json::object();
    for (const auto& [id, tokens] : e.token_snapshot) snapshot[id] = tokens;
    nlohmann::json lines = nlohmann::json::array();
    for (const auto& line : lines_[i]) lines.push_back(to_json(line));
    list.push_back({{"epoch_id", e.epoch_id},
                    {"period_start", to_unix(e.period_start)},
                    {"period_end", to_unix(e.period_end)},
                    {"status", to_string(e.status)},
                    {"alpha_ppm", e.alpha_ppm},
                    {"revenue_total_minor", e.revenue_total_minor},
                    {"token_snapshot", std::move(snapshot)},
                    {"pool_minor", e.pool_minor},
                    {"undistributed_minor", e.undistributed_minor},
                    {"no_contributions", e.no_contributions},
                    {"closed_at", e.closed_at ? nlohmann::json(to_unix(*e.closed_at)) : nlohmann::json()},
                    {"early_close", e.early_close},
                    {"lines", std::move(lines)}});
  }
  return {{"epoch_length_seconds", epoch_length_.count()},
          {"next_alpha_ppm", next_alpha_},
          {"epochs", std::move(list)}};
}

EpochBook EpochBook::from_state_json(const nlohmann::json& j) {
  const auto& list = j.at("epochs");
  if (list.empty()) fail(ErrorKind::storage, "bad_state", "epoch list is empty");
  EpochBook book(from_unix(list[0].at("period_start").get<std::int64_t>()),
                 Seconds{j.at("epoch_length_seconds").get<std::int64_t>()},
                 j.at("next_alpha_ppm").get<std::int64_t>());
  book.epochs_.clear();
  book.lines_.clear();
  for (const auto& e : list) {
    PayoutEpoch epoch;
    epoch.epoch_id = e.at("epoch_id").get<std::uint64_t>();
    epoch.period_start = from_unix(e.at("period_start").get<std::int64_t>());
    epoch.period_end = from_unix(e.at("period_end").get<std::int64_t>());
    epoch.status = e.at("status").get<std::string>() == "open" ? EpochStatus::open : EpochStatus::closed;
    epoch.alpha_ppm = e.at("alpha_ppm").get<std::int64_t>();
    epoch.revenue_total_minor = e.at("revenue_total_minor").get<Minor>();
    for (const auto& [id, tokens] : e.at("token_snapshot").items()) {
      epoch.token_snapshot[id] = tokens.get<std::int64_t>();
    }
    epoch.pool_minor = e.at("pool_minor").get<Minor>();
    epoch.undistributed_minor = e.at("undistributed_minor").get<Minor>();
    epoch.no_contributions = e.at("no_contributions").get<bool>();
    if (!e.at("closed_at").is_null()) epoch.closed_at = from_unix(e.at("closed_at").get<std::int64_t>());
    epoch.early_close = e.at("early_close").get<bool>();
    std::vector<PayoutLine> lines;
    for (const auto& l : e.at("lines")) {
      lines.push_back(PayoutLine{l.at("epoch_id").get<std::uint64_t>(),
                                 l.at("contributor_id").get<std::string>(),
                                 l.at("tokens").get<std::int64_t>(), l.at("reward_minor").get<Minor>()});
    }
    book.epochs_.push_back(std::move(epoch));
    book.lines_.push_back(std::move(lines));
  }
  return book;
}

const char* to_string(EpochStatus status) {
  return status == EpochStatus::open ? "open" : "closed";
}

nlohmann::json to_json(const PayoutLine& line) {
  return {{"epoch_id", line.epoch_id},
          {"contributor_id", line.contributor_id},
          {"tokens", line.tokens},
          {"reward_minor", line.reward_minor}};
}

nlohmann::json to_json(const PayoutEpoch& epoch) {
  nlohmann::json j = {{"epoch_id", epoch.epoch_id},
                      {"period_start", format_rfc3339(epoch.period_start)},
                      {"period_end", format_rfc3339(epoch.period_end)},
                      {"status", to_string(epoch.status)},
                      {"alpha_ppm", epoch.alpha_ppm}};
  if (epoch.status == EpochStatus::closed) {
    j["revenue_total_minor"] = epoch.revenue_total_minor;
    j["pool_minor"] = epoch.pool_minor;
    j["undistributed_minor"] = epoch.undistributed_minor;
    j["no_contributions"] = epoch.no_contributions;
    j["token_total"] = epoch.token_total();
    j["early_close"] = epoch.early_close;
    j["closed_at"] = format_rfc3339(*epoch.closed_at);
  }
  return j;
}

nlohmann::json statement_json(const EpochStatement& statement, const std::string& currency,
                              const std::optional<std::string>& only_contributor) {
  nlohmann::json j = to_json(statement.epoch);
  j["currency"] = currency;
  nlohmann::json lines = nlohmann::json::array();
  for (const auto& line : statement.lines) {
    if (only_contributor && line.contributor_id != *only_contributor) continue;
    lines.push_back(to_json(line));
  }
  j["lines"] = std::move(lines);
  return j;
}

nlohmann::json to_json(const ForecastEstimate& forecast) {
  nlohmann::json expected = nlohmann::json::object();
  for (const auto& [id, amount] : forecast.expected_payout_minor) expected[id] = amount;
  return {{"as_of", format_rfc3339(forecast.as_of)},
          {"insufficient_data", forecast.insufficient_data},
          {"no_contributions", forecast.no_contributions},
          {"projected_epoch_revenue_minor", forecast.projected_epoch_revenue_minor},
          {"expected_payout_minor", std::move(expected)}};
}

}  // namespace datapool
