#include <gtest/gtest.h>
#include <httplib.h>

#include <regex>

#include "datapool/service.hpp"
#include "platform_fixture.hpp"

using namespace datapool;
using namespace datapool::testing;

namespace {

struct Server {
  PlatformHarness h;
  std::unique_ptr<Service> service;
  std::unique_ptr<httplib::Client> client;

  explicit Server(bool async = true, std::size_t max_bytes = std::uint64_t{1} << 30) {
    h.config.max_submission_bytes = max_bytes;
    std::filesystem::remove_all(h.dir.path() / "data");
    h.reopen();
    service = std::make_unique<Service>(*h, Service::Options{async, 2});
    const int port = service->start_background();
    client = std::make_unique<httplib::Client>("127.0.0.1", port);
  }
  ~Server() { service->stop(); }

  static httplib::Headers auth(const std::string& token) {
    if (token.empty()) return {};
    return {{"Authorization", "Bearer " + token}};
  }

  httplib::Result get(const std::string& path, const std::string& token = "") {
    return client->Get(path, auth(token));
  }
  httplib::Result post(const std::string& path, const std::string& body, const std::string& token = "") {
    return client->Post(path, auth(token), body, "application/json");
  }
  nlohmann::json json(const httplib::Result& r) { return nlohmann::json::parse(r->body); }

  Registration enroll(const std::string& name) {
    const auto r = post("/contributors", nlohmann::json{{"display_name", name}}.dump());
    EXPECT_EQ(r->status, 201);
    const auto j = json(r);
    return {j.at("contributor_id"), j.at("token")};
  }

  nlohmann::json wait_report(const std::string& id, const std::string& token) {
    for (int i = 0; i < 500; ++i) {
      const auto r = get("/submissions/" + id + "/report", token);
      const auto j = json(r);
      if (r->status != 200 || j.at("status") == "finalized") return j;
      std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }
    ADD_FAILURE() << "submission never finalized";
    return {};
  }
};

std::string concrete(std::string pattern) {
  pattern = std::regex_replace(pattern, std::regex(":id/statement"), "1/statement");
  pattern = std::regex_replace(pattern, std::regex(":id/close"), "1/close");
  return std::regex_replace(pattern, std::regex(":id"), "sub-000001");
}

}  // namespace

TEST(Service, HealthIsOpen) {
  Server s;
  const auto r = s.get("/health");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 200);
  EXPECT_EQ(r->get_header_value("Content-Type"), "application/json");
}

TEST(Service, AuthMatrixOverEveryRoute) {
  Server s(false);
  const auto alice = s.enroll("alice");
  std::mt19937_64 rng(1);
  for (const auto& route : route_table()) {
    const std::string path = concrete(route.pattern);
    const std::vector<std::pair<std::string, std::string>> credentials = {
        {"none", ""},
        {"garbage", "dp_" + std::string(48, '0')},
        {"contributor", alice.token},
        {"admin", kAdminToken}};
    for (const auto& [label, token] : credentials) {
      const auto r = route.method == "GET" ? s.get(path, token) : s.post(path, "{}", token);
      ASSERT_TRUE(r) << route.pattern;
      const bool known = label == "contributor" || label == "admin";
      if (route.access == Access::open) {
        EXPECT_NE(r->status, 401) << route.pattern << " " << label;
        EXPECT_NE(r->status, 403) << route.pattern << " " << label;
      } else if (!known) {
        EXPECT_EQ(r->status, 401) << route.pattern << " " << label;
        EXPECT_EQ(s.json(r).at("code"), "unauthorized");
      } else if (route.access == Access::admin_only && label == "contributor") {
        EXPECT_EQ(r->status, 403) << route.pattern;
      } else {
        EXPECT_NE(r->status, 401) << route.pattern << " " << label;
      }
    }
  }
  // Random malformed Authorization headers never authenticate.
  for (int i = 0; i < 50; ++i) {
    std::string junk;
    for (int k = 0; k < static_cast<int>(rng() % 60); ++k) junk += static_cast<char>(' ' + rng() % 94);
    const auto r = s.client->Get("/metrics", {{"Authorization", junk}});
    EXPECT_EQ(r->status, 401) << junk;
  }
}

TEST(Service, Registration) {
  Server s;
  s.enroll("alice");
  EXPECT_EQ(s.post("/contributors", R"({"display_name":"alice"})")->status, 409);
  EXPECT_EQ(s.post("/contributors", R"({"display_name":""})")->status, 422);
  EXPECT_EQ(s.post("/contributors", "not json")->status, 422);
  const auto err = s.json(s.post("/contributors", R"({"display_name":""})"));
  EXPECT_TRUE(err.contains("code"));
  EXPECT_TRUE(err.contains("message"));
  EXPECT_TRUE(err.contains("detail"));
}

TEST(Service, SubmissionLifecycle) {
  Server s;
  std::mt19937_64 rng(2);
  const auto alice = s.enroll("alice");
  const auto bob = s.enroll("bob");
  const std::string doc = doc_with_tokens(rng, 25);
  const auto r = s.client->Post("/submissions", Server::auth(alice.token), doc + doc, "application/x-ndjson");
  ASSERT_EQ(r->status, 202);
  const std::string id = s.json(r).at("submission_id");
  EXPECT_EQ(s.json(r).at("status"), "queued");
  const auto report = s.wait_report(id, alice.token);
  EXPECT_EQ(report.at("accepted_tokens"), 25);
  EXPECT_EQ(report.at("rejections").at("exact_duplicate"), 1);
  EXPECT_EQ(s.get("/submissions/" + id + "/report", bob.token)->status, 403);
  EXPECT_EQ(s.get("/submissions/" + id + "/report", kAdminToken)->status, 200);
  EXPECT_EQ(s.get("/submissions/sub-424242", alice.token)->status, 404);
  EXPECT_EQ(s.client->Post("/submissions", Server::auth(kAdminToken), doc, "application/x-ndjson")->status, 403);

  const auto empty = s.client->Post("/submissions", Server::auth(alice.token), "\n", "application/x-ndjson");
  const std::string bad_id = s.json(empty).at("submission_id");
  for (int i = 0; i < 500; ++i) {
    if (s.json(s.get("/submissions/" + bad_id, alice.token)).at("status") == "failed") break;
    std::this_thread::sleep_for(std::chrono::milliseconds(10));
  }
  const auto failed = s.get("/submissions/" + bad_id + "/report", alice.token);
  EXPECT_EQ(failed->status, 422);
  EXPECT_EQ(s.json(failed).at("code"), "no_parseable_records");
}

TEST(Service, PendingReportShowsPendingStages) {
  Server s(false);
  std::mt19937_64 rng(3);
  const auto alice = s.enroll("alice");
  const auto r = s.client->Post("/submissions", Server::auth(alice.token), doc_with_tokens(rng, 9), "application/x-ndjson");
  const auto report = s.get("/submissions/" + s.json(r).at("submission_id").get<std::string>() + "/report", alice.token);
  ASSERT_EQ(report->status, 200);
  const auto j = s.json(report);
  EXPECT_EQ(j.at("status"), "queued");
  for (const auto& stage : j.at("stages")) EXPECT_EQ(stage.at("status"), "pending");
}

TEST(Service, OversizedBodyIs413) {
  Server s(true, 64);
  const auto alice = s.enroll("alice");
  const auto r = s.client->Post("/submissions", Server::auth(alice.token), std::string(65, 'x'), "application/x-ndjson");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 413);
  EXPECT_EQ(s.json(r).at("code"), "payload_too_large");
}

TEST(Service, Pagination) {
  Server s(false);
  std::mt19937_64 rng(4);
  const auto alice = s.enroll("alice");
  for (int i = 0; i < 5; ++i) {
    s.client->Post("/submissions", Server::auth(alice.token), doc_with_tokens(rng, 9), "application/x-ndjson");
  }
  std::vector<std::string> seen;
  std::string cursor;
  for (int page = 0; page < 10; ++page) {
    const auto j = s.json(s.get("/submissions" + (cursor.empty() ? "" : "?cursor=" + cursor), alice.token));
    for (const auto& item : j.at("items")) seen.push_back(item.at("submission_id"));
    if (j.at("next_cursor").is_null()) break;
    cursor = j.at("next_cursor");
  }
  EXPECT_EQ(seen, (std::vector<std::string>{"sub-000001", "sub-000002", "sub-000003", "sub-000004", "sub-000005"}));
  EXPECT_EQ(s.json(s.get("/submissions?limit=1", alice.token)).at("items").size(), 1u);
  EXPECT_EQ(s.get("/submissions?limit=0", alice.token)->status, 422);
}

TEST(Service, RevenueMetricsAndStatements) {
  Server s;
  std::mt19937_64 rng(5);
  const auto a = s.enroll("alice");
  const auto b = s.enroll("bob");
  for (const auto& [who, n] : std::vector<std::pair<Registration, std::size_t>>{{a, 100}, {b, 300}}) {
    const auto r = s.client->Post("/submissions", Server::auth(who.token), doc_with_tokens(rng, n), "application/x-ndjson");
    s.wait_report(s.json(r).at("submission_id"), who.token);
  }
  const auto event = revenue_event("inv-1", 10'000, genesis() + Seconds{60}).to_json();
  EXPECT_EQ(s.json(s.post("/revenue/events", event.dump(), kAdminToken)).at("status"), "accepted");
  const auto dup = s.post("/revenue/events", event.dump(), kAdminToken);
  EXPECT_EQ(dup->status, 200);
  EXPECT_EQ(s.json(dup).at("status"), "duplicate");
  auto zero = revenue_event("inv-2", 0, genesis()).to_json();
  const auto rejected = s.post("/revenue/events", zero.dump(), kAdminToken);
  EXPECT_EQ(rejected->status, 422);
  EXPECT_EQ(s.json(rejected).at("code"), "non-positive amount");

  const auto m = s.json(s.get("/metrics", a.token));
  EXPECT_EQ(m.at("contribution_ratio"), "0.25");
  EXPECT_EQ(m.at("contribution_token_count"), 100);
  EXPECT_EQ(s.json(s.get("/metrics", kAdminToken)).at("contributors").size(), 2u);

  const auto usage = s.json(s.get("/revenue/usage", a.token));
  EXPECT_EQ(usage.at("total_minor"), 10'000);
  EXPECT_EQ(usage.at("buckets").size(), 1u);

  EXPECT_EQ(s.post("/epochs/1/close", R"({"override":false})", kAdminToken)->status, 409);
  s.h.advance_days(30);
  const auto closed = s.post("/epochs/1/close", "{}", kAdminToken);
  ASSERT_EQ(closed->status, 200);
  const auto again = s.post("/epochs/1/close", "{}", kAdminToken);
  EXPECT_EQ(again->body, closed->body);
  const auto statement = s.json(closed);
  EXPECT_EQ(statement.at("lines")[0].at("reward_minor"), 250);
  EXPECT_EQ(statement.at("lines")[1].at("reward_minor"), 750);
  EXPECT_EQ(s.get("/epochs/1/statement", kAdminToken)->body, s.get("/epochs/1/statement", kAdminToken)->body);
  const auto own = s.json(s.get("/epochs/1/statement", b.token));
  ASSERT_EQ(own.at("lines").size(), 1u);
  EXPECT_EQ(own.at("lines")[0].at("reward_minor"), 750);
  EXPECT_EQ(s.json(s.get("/epochs", a.token)).at("items").size(), 2u);
  EXPECT_EQ(s.get("/epochs/9/statement", a.token)->status, 404);
  EXPECT_EQ(s.json(s.get("/metrics", b.token)).at("current_monetary_reward_minor"), 750);
}

TEST(Service, AdminAlphaAndCorpus) {
  Server s;
  EXPECT_EQ(s.post("/admin/alpha", R"({"alpha_ppm":2000000})", kAdminToken)->status, 422);
  EXPECT_EQ(s.post("/admin/alpha", R"({"alpha_ppm":250000})", kAdminToken)->status, 200);
  const std::string bytes = encode_fingerprint_file(fingerprint_texts({"some consumer document text here"}));
  const auto r = s.client->Post("/corpus?source=consumer", Server::auth(kAdminToken), bytes, "application/octet-stream");
  ASSERT_EQ(r->status, 200);
  EXPECT_EQ(s.json(r).at("added"), 1);
  EXPECT_EQ(s.client->Post("/corpus?source=web", Server::auth(kAdminToken), bytes, "application/octet-stream")->status,
            422);
  EXPECT_EQ(s.client->Post("/corpus", Server::auth(kAdminToken), "garbage", "application/octet-stream")->status, 422);
}

TEST(Service, UnknownRouteIsJson404) {
  Server s;
  const auto r = s.get("/nope");
  EXPECT_EQ(r->status, 404);
  EXPECT_EQ(s.json(r).at("code"), "not_found");
}
