#include <gtest/gtest.h>

#include <random>

#include "datapool/error.hpp"
#include "datapool/revenue.hpp"

using namespace datapool;

namespace {

Timestamp t0() { return timestamp_from_civil(2026, 3, 1); }

RevenueEvent event(std::string id, Minor amount, Timestamp at, std::string endpoint = "chat") {
  return RevenueEvent{std::move(id), at, amount, "USD", UsageMeta{std::move(endpoint), 1}};
}

}  // namespace

TEST(Ingest, FirstWriteThenReplays) {
  RevenueBook book;
  EXPECT_EQ(book.ingest(event("e1", 250, t0()), t0()).status, IngestStatus::accepted);
  EXPECT_EQ(book.aggregate(t0(), t0() + Seconds{1}), 250);
  for (int i = 0; i < 10; ++i) {
    EXPECT_EQ(book.ingest(event("e1", 999 + i, t0() + Seconds{i}), t0()).status, IngestStatus::duplicate);
  }
  EXPECT_EQ(book.aggregate(t0(), t0() + Seconds{100}), 250);
  EXPECT_EQ(book.event_count(), 1u);
}

TEST(Ingest, RejectsNonPositiveAndClosedEpoch) {
  RevenueBook book;
  auto out = book.ingest(event("zero", 0, t0()), t0());
  EXPECT_EQ(out.status, IngestStatus::rejected);
  EXPECT_EQ(out.reason, "non-positive amount");
  EXPECT_EQ(book.ingest(event("neg", -5, t0()), t0()).reason, "non-positive amount");
  out = book.ingest(event("late", 100, t0() - Seconds{1}), t0());
  EXPECT_EQ(out.status, IngestStatus::rejected);
  EXPECT_EQ(out.reason, "epoch closed");
  EXPECT_EQ(book.event_count(), 0u);
  EXPECT_FALSE(book.contains("late"));
}

TEST(Aggregate, Examples) {
  RevenueBook book;
  EXPECT_EQ(book.aggregate(t0(), t0() + Seconds{86'400}), 0);
  book.ingest(event("a", 100, t0() + Seconds{10}), t0());
  book.ingest(event("b", 250, t0() + Seconds{20}), t0());
  book.ingest(event("c", 650, t0() + Seconds{30}), t0());
  EXPECT_EQ(book.aggregate(t0(), t0() + Seconds{31}), 1'000);
  EXPECT_EQ(book.aggregate(t0() + Seconds{20}, t0() + Seconds{30}), 250);
  EXPECT_EQ(book.aggregate(t0() + Seconds{30}, t0()), 0);
}

TEST(AggregateProperty, MatchesLinearScanAndIsAdditive) {
  std::mt19937_64 rng(9);
  std::uniform_int_distribution<std::int64_t> offset(0, 90 * kSecondsPerDay);
  std::uniform_int_distribution<Minor> amount(1, 100'000);
  RevenueBook book;
  std::vector<RevenueEvent> accepted;
  for (int i = 0; i < 10'000; ++i) {
    auto e = event("ev-" + std::to_string(i), amount(rng), t0() + Seconds{offset(rng)});
    ASSERT_EQ(book.ingest(e, t0()).status, IngestStatus::accepted);
    accepted.push_back(e);
  }
  for (int w = 0; w < 200; ++w) {
    Timestamp a = t0() + Seconds{offset(rng)};
    Timestamp c = t0() + Seconds{offset(rng)};
    if (c < a) std::swap(a, c);
    const Timestamp b = a + (c - a) / 2;
    Minor scan = 0;
    for (const auto& e : accepted) {
      if (e.occurred_at >= a && e.occurred_at < c) scan += e.amount_minor;
    }
    EXPECT_EQ(book.aggregate(a, c), scan);
    EXPECT_EQ(book.aggregate(a, b) + book.aggregate(b, c), book.aggregate(a, c));
  }
}

TEST(IngestProperty, ReplaysLeaveTotalsUnchanged) {
  std::mt19937_64 rng(10);
  std::uniform_int_distribution<Minor> amount(1, 5'000);
  std::bernoulli_distribution replay(0.3);
  RevenueBook book;
  std::vector<RevenueEvent> originals;
  Minor oracle = 0;
  for (int i = 0; i < 5'000; ++i) {
    if (!originals.empty() && replay(rng)) {
      auto copy = originals[rng() % originals.size()];
      copy.amount_minor = amount(rng);
      EXPECT_EQ(book.ingest(copy, t0()).status, IngestStatus::duplicate);
    } else {
      originals.push_back(event("r" + std::to_string(i), amount(rng), t0() + Seconds{i}));
      oracle += originals.back().amount_minor;
      EXPECT_EQ(book.ingest(originals.back(), t0()).status, IngestStatus::accepted);
    }
  }
  EXPECT_EQ(book.aggregate(t0(), t0() + Seconds{10'000}), oracle);
}

TEST(UsageDetail, BucketsByDay) {
  RevenueBook book;
  EXPECT_TRUE(book.usage_detail(t0(), t0() + Seconds{86'400}).empty());
  for (int d = 0; d < 3; ++d) {
    book.ingest(event("d" + std::to_string(d), 100 * (d + 1), t0() + Seconds{d * kSecondsPerDay + 5},
                      d == 1 ? "embed" : "chat"),
                t0());
  }
  book.ingest(event("extra", 7, t0() + Seconds{60}), t0());
  const auto buckets = book.usage_detail(t0(), t0() + Seconds{3 * kSecondsPerDay});
  ASSERT_EQ(buckets.size(), 3u);
  EXPECT_EQ(buckets[0].amount_minor, 107);
  EXPECT_EQ(buckets[0].event_count, 2);
  EXPECT_EQ(buckets[0].endpoints.at("chat"), 2);
  EXPECT_EQ(buckets[1].endpoints.at("embed"), 1);
  EXPECT_EQ(buckets[0].to_json().at("day"), "2026-03-01");
  Minor sum = 0;
  for (const auto& b : buckets) sum += b.amount_minor;
  EXPECT_EQ(sum, book.aggregate(t0(), t0() + Seconds{3 * kSecondsPerDay}));
}

TEST(Event, JsonRoundTripAndValidation) {
  const auto e = event("j1", 42, t0(), "search");
  EXPECT_EQ(RevenueEvent::from_json(e.to_json()), e);
  const auto minimal = RevenueEvent::from_json(
      {{"event_id", "m"}, {"occurred_at", "2026-03-01T00:00:00Z"}, {"amount_minor", 5}, {"currency", "USD"}});
  EXPECT_EQ(minimal.usage.endpoint, "");
  for (const auto& bad : std::vector<nlohmann::json>{
           nlohmann::json::array(),
           {{"occurred_at", "2026-03-01T00:00:00Z"}, {"amount_minor", 5}, {"currency", "USD"}},
           {{"event_id", ""}, {"occurred_at", "2026-03-01T00:00:00Z"}, {"amount_minor", 5}, {"currency", "USD"}},
           {{"event_id", "x"}, {"occurred_at", "yesterday"}, {"amount_minor", 5}, {"currency", "USD"}},
           {{"event_id", "x"}, {"occurred_at", "2026-03-01T00:00:00Z"}, {"amount_minor", 5.5}, {"currency", "USD"}},
           {{"event_id", "x"}, {"occurred_at", "2026-03-01T00:00:00Z"}, {"amount_minor", 5}},
       }) {
    EXPECT_THROW(RevenueEvent::from_json(bad), Error) << bad.dump();
  }
}

TEST(Pending, GuardCountsInFlightRequests) {
  RevenueBook book;
  EXPECT_EQ(book.pending(), 0u);
  {
    RevenueBook::PendingGuard a(book);
    RevenueBook::PendingGuard b(book);
    EXPECT_EQ(book.pending(), 2u);
  }
  EXPECT_EQ(book.pending(), 0u);
}
