#include <gtest/gtest.h>

#include "datapool/error.hpp"

#include <fstream>
#include "platform_fixture.hpp"

using namespace datapool;
using namespace datapool::testing;

namespace {

std::string code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return "no error";
}

std::string submit_now(Platform& p, const std::string& who, const std::string& body) {
  const std::string id = p.submit(who, body);
  p.process_all();
  return id;
}

}  // namespace

TEST(Platform, RegistrationRules) {
  PlatformHarness h;
  const auto a = h->register_contributor("alice");
  EXPECT_EQ(a.contributor_id, "ctr-000001");
  EXPECT_EQ(a.token.rfind("dp_", 0), 0u);
  EXPECT_EQ(a.token.size(), 51u);
  EXPECT_EQ(code_of([&] { h->register_contributor("alice"); }), "name_taken");
  EXPECT_EQ(code_of([&] { h->register_contributor(""); }), "empty_name");
  EXPECT_EQ(code_of([&] { h->register_contributor("   "); }), "empty_name");
  EXPECT_EQ(h->register_contributor("bob").contributor_id, "ctr-000002");
  EXPECT_EQ(h->contributors().size(), 2u);
}

TEST(Platform, AuthenticationResolvesRoles) {
  PlatformHarness h;
  const auto a = h->register_contributor("alice");
  const auto who = h->authenticate(a.token);
  ASSERT_TRUE(who);
  EXPECT_EQ(who->principal_id, a.contributor_id);
  EXPECT_EQ(who->role, Role::contributor);
  const auto admin = h->authenticate(kAdminToken);
  ASSERT_TRUE(admin);
  EXPECT_TRUE(admin->is_admin());
  EXPECT_FALSE(h->authenticate("dp_bogus"));
  EXPECT_FALSE(h->authenticate(""));
  EXPECT_EQ(h->state_json().dump().find(a.token), std::string::npos);
}

TEST(Platform, SubmissionCreditsAcceptedTokens) {
  PlatformHarness h;
  std::mt19937_64 rng(1);
  const auto a = h->register_contributor("alice");
  const std::string doc = doc_with_tokens(rng, 40);
  const std::string id = submit_now(*h, a.contributor_id, doc + doc + "{broken\n");
  const auto sub = h->submission(id);
  ASSERT_TRUE(sub);
  EXPECT_EQ(sub->status, SubmissionStatus::finalized);
  EXPECT_EQ(sub->report.accepted_tokens(), 40);
  EXPECT_EQ(sub->report.rejections.at("exact_duplicate"), 1);
  EXPECT_EQ(sub->report.rejections.at("unparseable"), 1);
  EXPECT_EQ(h->contributor(a.contributor_id)->net_tokens, 40);
  EXPECT_EQ(code_of([&] { h->process_submission(id); }), "already_processed");
  EXPECT_EQ(h->contributor(a.contributor_id)->net_tokens, 40);
}

TEST(Platform, EarlierContributorKeepsCredit) {
  PlatformHarness h;
  std::mt19937_64 rng(2);
  const auto a = h->register_contributor("alice");
  const auto b = h->register_contributor("bob");
  const std::string doc = doc_with_tokens(rng, 30);
  submit_now(*h, a.contributor_id, doc);
  const std::string second = submit_now(*h, b.contributor_id, doc);
  EXPECT_EQ(h->submission(second)->report.rejections.at("contributor_duplicate"), 1);
  EXPECT_EQ(h->token_snapshot(), (TokenSnapshot{{a.contributor_id, 30}, {b.contributor_id, 0}}));
}

TEST(Platform, FailedSubmissionRecordsError) {
  PlatformHarness h;
  const auto a = h->register_contributor("alice");
  const std::string id = submit_now(*h, a.contributor_id, "\n\n");
  const auto sub = h->submission(id);
  EXPECT_EQ(sub->status, SubmissionStatus::failed);
  EXPECT_EQ(sub->error_code, "no_parseable_records");
  EXPECT_EQ(h->contributor(a.contributor_id)->net_tokens, 0);
}

TEST(Platform, OversizedSubmissionRejected) {
  PlatformHarness h;
  h.config.max_submission_bytes = 16;
  std::filesystem::remove_all(h.dir.path() / "data");
  h.reopen();
  const auto a = h->register_contributor("alice");
  EXPECT_EQ(code_of([&] { h->submit(a.contributor_id, std::string(17, 'x')); }), "payload_too_large");
  EXPECT_EQ(code_of([&] { h->submit("ctr-999999", "x"); }), "unknown_contributor");
}

TEST(Platform, ConsumerCorpusBlocksCredit) {
  PlatformHarness h;
  std::mt19937_64 rng(3);
  std::vector<std::string> texts;
  std::string body;
  for (int i = 0; i < 5; ++i) {
    texts.push_back(join(random_words(rng, 20)));
    body += nlohmann::json{{"text", texts.back()}}.dump() + "\n";
  }
  EXPECT_EQ(h->load_corpus(fingerprint_texts(texts), CorpusSource::consumer_corpus), 5u);
  EXPECT_EQ(h->load_corpus(fingerprint_texts(texts), CorpusSource::consumer_corpus), 0u);
  const auto a = h->register_contributor("alice");
  const auto id = submit_now(*h, a.contributor_id, body);
  EXPECT_EQ(h->submission(id)->report.accepted_tokens(), 0);
  EXPECT_EQ(h->submission(id)->report.rejections,
            (std::map<std::string, std::int64_t>{{"consumer_duplicate", 5}}));
  EXPECT_EQ(code_of([&] {
              h->load_corpus(fingerprint_texts(texts, MinHashParams{5, 128, 99}), CorpusSource::public_corpus);
            }),
            "parameter_mismatch");
}

TEST(Platform, RevenueIngestRules) {
  PlatformHarness h;
  h.advance_days(1);
  EXPECT_EQ(h->ingest_revenue(revenue_event("e1", 250, genesis())).status, IngestStatus::accepted);
  EXPECT_EQ(h->ingest_revenue(revenue_event("e1", 250, genesis())).status, IngestStatus::duplicate);
  auto euro = revenue_event("e2", 10, genesis());
  euro.currency = "EUR";
  EXPECT_EQ(h->ingest_revenue(euro).reason, "currency mismatch");
  EXPECT_EQ(h->ingest_revenue(revenue_event("e3", 10, genesis() - Seconds{1})).reason, "epoch closed");
  EXPECT_EQ(h->aggregate_revenue(genesis(), genesis() + Seconds{86'400}), 250);
}

TEST(Platform, EpochCloseSplitsRevenue) {
  PlatformHarness h;
  std::mt19937_64 rng(4);
  const auto a = h->register_contributor("alice");
  const auto b = h->register_contributor("bob");
  submit_now(*h, a.contributor_id, doc_with_tokens(rng, 100));
  submit_now(*h, b.contributor_id, doc_with_tokens(rng, 300));
  h->ingest_revenue(revenue_event("r1", 6'000, genesis() + Seconds{10}));
  h->ingest_revenue(revenue_event("r2", 4'000, genesis() + Seconds{20 * kSecondsPerDay}));

  EXPECT_EQ(h->metrics(a.contributor_id).contribution_ratio.to_decimal(), "0.25");
  EXPECT_EQ(code_of([&] { h->close_epoch(1, std::nullopt, false); }), "epoch_not_ended");

  h.advance_days(30);
  h->ingest_revenue(revenue_event("r3", 999, genesis() + Seconds{30 * kSecondsPerDay}));
  const auto closed = h->close_epoch(1, std::nullopt, false);
  EXPECT_FALSE(closed.already_closed);
  ASSERT_EQ(closed.statement.lines.size(), 2u);
  EXPECT_EQ(closed.statement.epoch.revenue_total_minor, 10'000);
  EXPECT_EQ(closed.statement.lines[0].reward_minor, 250);
  EXPECT_EQ(closed.statement.lines[1].reward_minor, 750);
  const std::string first = h->statement_json(1, std::nullopt);
  EXPECT_TRUE(h->close_epoch(1, std::nullopt, false).already_closed);
  EXPECT_EQ(h->statement_json(1, std::nullopt), first);

  const auto m = h->metrics(b.contributor_id);
  EXPECT_EQ(m.current_monetary_reward_minor, 750);
  EXPECT_EQ(m.contribution_token_count, 300);
  EXPECT_EQ(h->open_epoch().epoch_id, 2u);
  EXPECT_EQ(h->aggregate_revenue(h->open_epoch().period_start, h->open_epoch().period_end), 999);
  EXPECT_EQ(h->ingest_revenue(revenue_event("late", 5, genesis() + Seconds{5})).reason, "epoch closed");
}

TEST(Platform, MetricsForIdleContributorAreZero) {
  PlatformHarness h;
  const auto a = h->register_contributor("alice");
  h.advance_days(3);
  h->ingest_revenue(revenue_event("r1", 300, genesis() + Seconds{5}));
  const auto m = h->metrics(a.contributor_id);
  EXPECT_EQ(m.contribution_ratio.to_string(), "0");
  EXPECT_EQ(m.contribution_token_count, 0);
  EXPECT_EQ(m.current_monetary_reward_minor, 0);
  EXPECT_EQ(m.expected_payout_minor, 0);
  EXPECT_EQ(m.to_json().size(), 4u);
}

TEST(Platform, ForecastUsesOpenEpochRate) {
  PlatformHarness h;
  std::mt19937_64 rng(5);
  const auto a = h->register_contributor("alice");
  const auto b = h->register_contributor("bob");
  submit_now(*h, a.contributor_id, doc_with_tokens(rng, 50));
  submit_now(*h, b.contributor_id, doc_with_tokens(rng, 50));
  EXPECT_TRUE(h->forecast().insufficient_data);
  h->ingest_revenue(revenue_event("r1", 500, genesis() + Seconds{100}));
  h.advance_days(10);
  const auto f = h->forecast();
  EXPECT_EQ(f.projected_epoch_revenue_minor, 1'500);
  EXPECT_EQ(f.expected_payout_minor.at(a.contributor_id), 75);
  EXPECT_EQ(h->metrics(b.contributor_id).expected_payout_minor, 75);
}

TEST(Platform, AlphaAppliesToNextEpoch) {
  PlatformHarness h;
  std::mt19937_64 rng(6);
  const auto a = h->register_contributor("alice");
  submit_now(*h, a.contributor_id, doc_with_tokens(rng, 10));
  h->set_alpha(500'000);
  EXPECT_EQ(code_of([&] { h->set_alpha(2'000'000); }), "alpha_out_of_range");
  h->ingest_revenue(revenue_event("r", 1'000, genesis()));
  h.advance_days(30);
  EXPECT_EQ(h->close_epoch(1, std::nullopt, false).statement.lines[0].reward_minor, 100);
  EXPECT_EQ(h->open_epoch().alpha_ppm, 500'000);
}

TEST(Platform, EarlyCloseWithOverride) {
  PlatformHarness h;
  h.advance_days(5);
  const auto out = h->close_epoch(1, std::nullopt, true);
  EXPECT_TRUE(out.statement.epoch.early_close);
  EXPECT_EQ(h->open_epoch().period_start, genesis() + Seconds{5 * kSecondsPerDay});
}

TEST(Platform, ReopenRestoresState) {
  PlatformHarness h;
  std::mt19937_64 rng(7);
  const auto a = h->register_contributor("alice");
  submit_now(*h, a.contributor_id, doc_with_tokens(rng, 33));
  h->ingest_revenue(revenue_event("r", 1'234, genesis()));
  h.advance_days(31);
  h->close_epoch(1, std::nullopt, false);
  const std::string before = h->state_json().dump();
  const std::string statement = h->statement_json(1, std::nullopt);
  h.reopen();
  EXPECT_EQ(h->state_json().dump(), before);
  EXPECT_EQ(h->statement_json(1, std::nullopt), statement);
  EXPECT_TRUE(h->authenticate(a.token));
  h.reopen();
  EXPECT_EQ(h->statement_json(1, std::nullopt), statement);
}

TEST(Platform, QueuedSubmissionSurvivesRestart) {
  PlatformHarness h;
  std::mt19937_64 rng(8);
  const auto a = h->register_contributor("alice");
  const std::string id = h->submit(a.contributor_id, doc_with_tokens(rng, 12));
  h.reopen();
  EXPECT_EQ(h->submission(id)->status, SubmissionStatus::queued);
  h->process_all();
  EXPECT_EQ(h->submission(id)->status, SubmissionStatus::finalized);
  EXPECT_EQ(h->contributor(a.contributor_id)->net_tokens, 12);
}

TEST(PlatformProperty, ReplayEqualsLiveAfterRandomOperations) {
  PlatformHarness h;
  std::mt19937_64 rng(9);
  std::uniform_int_distribution<int> op(0, 9);
  std::vector<std::string> ids;
  std::vector<std::string> docs;
  std::string snapshot_state;
  for (int i = 0; i < 1'000; ++i) {
    switch (op(rng)) {
      case 0:
        ids.push_back(h->register_contributor("user-" + std::to_string(i)).contributor_id);
        break;
      case 1:
      case 2:
      case 3:
        if (!ids.empty()) {
          std::string body = doc_with_tokens(rng, 5 + rng() % 40);
          if (!docs.empty() && rng() % 3 == 0) body += docs[rng() % docs.size()];
          docs.push_back(body);
          h->submit(ids[rng() % ids.size()], body);
          if (rng() % 2) h->process_all();
        }
        break;
      case 4:
      case 5:
        h->ingest_revenue(revenue_event("ev-" + std::to_string(rng() % 400), 1 + rng() % 1'000,
                                        *h.clock - Seconds{rng() % 3'600}));
        break;
      case 6:
        *h.clock += Seconds{static_cast<std::int64_t>(rng() % (3 * kSecondsPerDay))};
        break;
      case 7:
        if (rng() % 4 == 0 && *h.clock > h->open_epoch().period_start) {
          h->close_epoch(h->open_epoch().epoch_id, std::nullopt, true);
        }
        break;
      case 8:
        if (rng() % 10 == 0) h->set_alpha(static_cast<std::int64_t>(rng() % 1'000'001));
        break;
      default:
        if (i == 500) h->snapshot();
        break;
    }
  }
  h->process_all();
  const std::string live = h->state_json().dump();
  h.reopen();
  EXPECT_EQ(h->state_json().dump(), live);

  // Snapshot + tail must equal a replay of the complete history.
  h->snapshot();
  h.reopen();
  EXPECT_EQ(h->state_json().dump(), live);
}

TEST(Platform, SnapshotPlusTailEqualsFullReplay) {
  PlatformHarness full;
  PlatformHarness snap;
  std::mt19937_64 rng_a(10);
  std::mt19937_64 rng_b(10);
  auto drive = [](PlatformHarness& h, std::mt19937_64& rng, int from, int to) {
    for (int i = from; i < to; ++i) {
      const auto id = h->register_contributor("n" + std::to_string(i)).contributor_id;
      h->submit(id, doc_with_tokens(rng, 10 + i));
      h->process_all();
      h->ingest_revenue(revenue_event("e" + std::to_string(i), 100 + i, *h.clock));
      h.advance_days(1);
    }
  };
  drive(full, rng_a, 0, 20);
  drive(snap, rng_b, 0, 10);
  snap->snapshot();
  drive(snap, rng_b, 10, 20);
  full.reopen();
  snap.reopen();
  // Credentials are random per instance; everything else must match.
  auto a = snap->state_json();
  auto b = full->state_json();
  a.erase("token_hashes");
  b.erase("token_hashes");
  EXPECT_EQ(a.dump(), b.dump());
}

TEST(Platform, EmptyStateRestoresEmpty) {
  PlatformHarness h;
  const std::string fresh = h->state_json().dump();
  h->snapshot();
  h.reopen();
  EXPECT_EQ(h->state_json().dump(), fresh);
  EXPECT_TRUE(h->contributors().empty());
  EXPECT_EQ(h->open_epoch().epoch_id, 1u);
}

TEST(Platform, NewerSnapshotVersionRefused) {
  PlatformHarness h;
  h->register_contributor("alice");
  h->snapshot();
  h.platform.reset();
  const auto path = h.dir.path() / "data" / "snapshot.bin";
  std::string bytes;
  {
    std::ifstream in(path, std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), {});
  }
  bytes[4] = 7;
  std::ofstream(path, std::ios::binary | std::ios::trunc) << bytes;
  EXPECT_EQ(code_of([&] { h.open(); }), "snapshot_version");
}

TEST(Platform, ConfigValidation) {
  PlatformConfig c;
  EXPECT_NO_THROW(c.validate());
  c.alpha_ppm = 0;
  EXPECT_NO_THROW(c.validate());
  c.alpha_ppm = 1'000'001;
  EXPECT_THROW(c.validate(), Error);
  c = {};
  c.epoch_length_days = 0;
  EXPECT_THROW(c.validate(), Error);
  c = {};
  c.currency_code = "usd";
  EXPECT_THROW(c.validate(), Error);
  EXPECT_EQ(PlatformConfig::from_json(PlatformConfig{}.to_json()).to_json(), PlatformConfig{}.to_json());
}
