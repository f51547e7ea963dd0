#include "datapool/revenue.hpp"

#include "datapool/error.hpp"

namespace datapool {

const char* to_string(IngestStatus status) {
  switch (status) {
    case IngestStatus::accepted: return "accepted";
    case IngestStatus::duplicate: return "duplicate";
    case IngestStatus::rejected: return "rejected";
  }
  return "rejected";
}

nlohmann::json RevenueEvent::to_json() const {
  return {{"event_id", event_id},
          {"occurred_at", format_rfc3339(occurred_at)},
          {"amount_minor", amount_minor},
          {"currency", currency},
          {"usage_meta", {{"endpoint", usage.endpoint}, {"request_count", usage.request_count}}}};
}

RevenueEvent RevenueEvent::from_json(const nlohmann::json& j) {
  auto bad = [](const std::string& what) -> void {
    fail(ErrorKind::validation, "invalid_event", what);
  };
  if (!j.is_object()) bad("event must be a JSON object");
  RevenueEvent e;
  const auto id = j.find("event_id");
  if (id == j.end() || !id->is_string() || id->get<std::string>().empty()) {
    bad("event_id must be a non-empty string");
  }
  e.event_id = id->get<std::string>();
  const auto at = j.find("occurred_at");
  if (at == j.end() || !at->is_string()) bad("occurred_at must be an RFC 3339 string");
  e.occurred_at = parse_rfc3339(at->get<std::string>());
  const auto amount = j.find("amount_minor");
  if (amount == j.end() || !amount->is_number_integer()) bad("amount_minor must be an integer");
  e.amount_minor = amount->get<Minor>();
  const auto currency = j.find("currency");
  if (currency == j.end() || !currency->is_string()) bad("currency must be a string");
  e.currency = currency->get<std::string>();
  if (const auto meta = j.find("usage_meta"); meta != j.end() && !meta->is_null()) {
    if (!meta->is_object()) bad("usage_meta must be an object");
    if (const auto ep = meta->find("endpoint"); ep != meta->end()) {
      if (!ep->is_string()) bad("usage_meta.endpoint must be a string");
      e.usage.endpoint = ep->get<std::string>();
    }
    if (const auto rc = meta->find("request_count"); rc != meta->end()) {
      if (!rc->is_number_integer() || rc->get<std::int64_t>() < 0) {
        bad("usage_meta.request_count must be a non-negative integer");
      }
      e.usage.request_count = rc->get<std::int64_t>();
    }
  }
  return e;
}

nlohmann::json UsageBucket::to_json() const {
  nlohmann::json eps = nlohmann::json::object();
  for (const auto& [name, n] : endpoints) eps[name] = n;
  return {{"day", format_day(day)},
          {"amount_minor", amount_minor},
          {"event_count", event_count},
          {"endpoints", std::move(eps)}};
}

IngestOutcome RevenueBook::check(const RevenueEvent& event, Timestamp open_since) const {
  if (ids_.contains(event.event_id)) return {IngestStatus::duplicate, {}};
  if (event.amount_minor <= 0) return {IngestStatus::rejected, "non-positive amount"};
  if (event.occurred_at < open_since) return {IngestStatus::rejected, "epoch closed"};
  return {IngestStatus::accepted, {}};
}

IngestOutcome RevenueBook::ingest(const RevenueEvent& event, Timestamp open_since) {
  IngestOutcome outcome = check(event, open_since);
  if (outcome.status == IngestStatus::accepted) record(event);
  return outcome;
}

void RevenueBook::record(const RevenueEvent& event) {
  if (!ids_.insert(event.event_id).second) return;
  by_time_.emplace(event.occurred_at, event);
}

Minor RevenueBook::aggregate(Timestamp start, Timestamp end) const {
  Minor total = 0;
  if (end <= start) return total;
  for (auto it = by_time_.lower_bound(start); it != by_time_.end() && it->first < end; ++it) {
    total += it->second.amount_minor;
  }
  return total;
}

std::vector<UsageBucket> RevenueBook::usage_detail(Timestamp start, Timestamp end) const {
  std::vector<UsageBucket> out;
  if (end <= start) return out;
  for (auto it = by_time_.lower_bound(start); it != by_time_.end() && it->first < end; ++it) {
    const RevenueEvent& e = it->second;
    const std::int64_t day = day_number(e.occurred_at);
    if (out.empty() || out.back().day != day) out.push_back(UsageBucket{day, 0, 0, {}});
    UsageBucket& b = out.back();
    b.amount_minor += e.amount_minor;
    b.event_count += 1;
    if (!e.usage.endpoint.empty()) b.endpoints[e.usage.endpoint] += e.usage.request_count;
  }
  return out;
}

}  // namespace datapool
