#include "datapool/service.hpp"

#include <httplib.h>
#include <sodium.h>
#include <spdlog/spdlog.h>

#include <charconv>
#include <cstring>

#include "datapool/error.hpp"

namespace datapool {
namespace {

int status_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::validation: return 422;
    case ErrorKind::unauthorized: return 401;
    case ErrorKind::forbidden: return 403;
    case ErrorKind::not_found: return 404;
    case ErrorKind::conflict: return 409;
    case ErrorKind::too_large: return 413;
    case ErrorKind::config: return 422;
    case ErrorKind::storage: return 500;
  }
  return 500;
}

void send_json(httplib::Response& res, int status, const nlohmann::json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& code,
                const std::string& message, const nlohmann::json& detail = nlohmann::json::object()) {
  send_json(res, status, {{"code", code}, {"message", message}, {"detail", detail}});
}

std::string bearer_token(const httplib::Request& req) {
  const std::string header = req.get_header_value("Authorization");
  constexpr std::string_view kPrefix = "Bearer ";
  if (header.size() <= kPrefix.size() || header.compare(0, kPrefix.size(), kPrefix) != 0) return {};
  return header.substr(kPrefix.size());
}

std::string encode_cursor(const std::string& last_key) {
  if (sodium_init() < 0) return last_key;
  constexpr int kVariant = sodium_base64_VARIANT_URLSAFE_NO_PADDING;
  std::string out(sodium_base64_ENCODED_LEN(last_key.size(), kVariant), '\0');
  sodium_bin2base64(out.data(), out.size(), reinterpret_cast<const unsigned char*>(last_key.data()),
                    last_key.size(), kVariant);
  out.resize(std::strlen(out.c_str()));
  return out;
}

std::string decode_cursor(const std::string& cursor) {
  std::string out(cursor.size(), '\0');
  std::size_t len = 0;
  if (sodium_init() < 0 ||
      sodium_base642bin(reinterpret_cast<unsigned char*>(out.data()), out.size(), cursor.data(),
                        cursor.size(), nullptr, &len, nullptr,
                        sodium_base64_VARIANT_URLSAFE_NO_PADDING) != 0) {
    fail(ErrorKind::validation, "invalid_cursor", "cursor is not valid");
  }
  out.resize(len);
  return out;
}

std::size_t parse_limit(const httplib::Request& req, std::size_t max_limit) {
  if (!req.has_param("limit")) return max_limit;
  const std::string s = req.get_param_value("limit");
  std::size_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || v == 0) {
    fail(ErrorKind::validation, "invalid_limit", "limit must be a positive integer");
  }
  return std::min(v, max_limit);
}

std::uint64_t parse_epoch_id(const std::string& s) {
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    fail(ErrorKind::not_found, "unknown_epoch", "no epoch '" + s + "'");
  }
  return v;
}

nlohmann::json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return nlohmann::json::object();
  auto j = nlohmann::json::parse(req.body, nullptr, false);
  if (j.is_discarded()) fail(ErrorKind::validation, "invalid_json", "request body is not JSON");
  return j;
}

}  // namespace

const std::vector<RouteSpec>& route_table() {
  static const std::vector<RouteSpec> routes{
      {"GET", "/health", Access::open},
      {"GET", "/config", Access::any_principal},
      {"POST", "/contributors", Access::open},
      {"POST", "/submissions", Access::any_principal},
      {"GET", "/submissions", Access::any_principal},
      {"GET", "/submissions/:id", Access::any_principal},
      {"GET", "/submissions/:id/report", Access::any_principal},
      {"GET", "/metrics", Access::any_principal},
      {"POST", "/revenue/events", Access::admin_only},
      {"GET", "/revenue/usage", Access::any_principal},
      {"GET", "/epochs", Access::any_principal},
      {"GET", "/epochs/:id/statement", Access::any_principal},
      {"POST", "/epochs/:id/close", Access::admin_only},
      {"POST", "/admin/alpha", Access::admin_only},
      {"POST", "/corpus", Access::admin_only},
  };
  return routes;
}

Service::Service(Platform& platform, Options options)
    : platform_(platform), options_(options), server_(std::make_unique<httplib::Server>()) {
  server_->set_payload_max_length(static_cast<std::size_t>(platform_.config().max_submission_bytes));
  install_routes();
  if (options_.async_processing) {
    worker_ = std::jthread([this](std::stop_token stop) { platform_.run_worker(stop); });
  }
}

Service::~Service() { stop(); }

int Service::bind_any_port(const std::string& host) { return server_->bind_to_any_port(host); }

bool Service::bind(const std::string& host, int port) { return server_->bind_to_port(host, port); }

bool Service::serve() { return server_->listen_after_bind(); }

int Service::start_background(const std::string& host) {
  const int port = bind_any_port(host);
  if (port < 0) return port;
  listener_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return port;
}

void Service::stop() {
  if (server_) server_->stop();
  if (listener_.joinable()) listener_.join();
  if (worker_.joinable()) {
    worker_.request_stop();
    worker_.join();
  }
}

void Service::install_routes() {
  using Req = const httplib::Request&;
  using Res = httplib::Response&;
  using Handler = std::function<void(Req, Res, const std::optional<Principal>&)>;

  // Wraps a handler with authentication, role checks, and error mapping.
  auto guarded = [this](Access access, Handler handler) {
    return [this, access, handler = std::move(handler)](Req req, Res res) {
      try {
        std::optional<Principal> principal;
        if (access != Access::open) {
          principal = platform_.authenticate(bearer_token(req));
          if (!principal) {
            send_error(res, 401, "unauthorized", "missing or unknown bearer token");
            return;
          }
          if (access == Access::admin_only && !principal->is_admin()) {
            send_error(res, 403, "forbidden", "consumer_admin role required");
            return;
          }
        }
        handler(req, res, principal);
      } catch (const Error& e) {
        send_error(res, status_for(e.kind()), e.code(), e.what());
      } catch (const nlohmann::json::exception& e) {
        send_error(res, 422, "invalid_json", e.what());
      } catch (const std::exception& e) {
        spdlog::error("request {} {} failed: {}", req.method, req.path, e.what());
        send_error(res, 500, "internal_error", e.what());
      }
    };
  };

  auto& srv = *server_;

  srv.Get("/health", guarded(Access::open, [](Req, Res res, const auto&) {
    send_json(res, 200, {{"status", "ok"}});
  }));

  srv.Get("/config", guarded(Access::any_principal, [this](Req, Res res, const auto&) {
    const PlatformConfig cfg = platform_.config();
    nlohmann::json body = cfg.to_json();
    body["open_epoch"] = to_json(platform_.open_epoch());
    send_json(res, 200, body);
  }));

  srv.Post("/contributors", guarded(Access::open, [this](Req req, Res res, const auto&) {
    const nlohmann::json body = parse_body(req);
    const auto name = body.find("display_name");
    if (name == body.end() || !name->is_string()) {
      fail(ErrorKind::validation, "empty_name", "display_name is required");
    }
    const Registration reg = platform_.register_contributor(name->get<std::string>());
    send_json(res, 201, {{"contributor_id", reg.contributor_id}, {"token", reg.token}});
  }));

  srv.Post("/submissions", guarded(Access::any_principal, [this](Req req, Res res, const auto& who) {
    if (who->is_admin()) {
      fail(ErrorKind::forbidden, "forbidden", "only contributors upload submissions");
    }
    const std::string id = platform_.submit(who->principal_id, req.body);
    send_json(res, 202, {{"submission_id", id}, {"status", "queued"}});
  }));

  srv.Get("/submissions", guarded(Access::any_principal, [this](Req req, Res res, const auto& who) {
    const std::size_t limit = parse_limit(req, options_.page_limit);
    const std::string after = req.has_param("cursor") ? decode_cursor(req.get_param_value("cursor")) : "";
    const auto subs = platform_.submissions(
        who->is_admin() ? std::nullopt : std::optional<std::string>(who->principal_id));
    nlohmann::json items = nlohmann::json::array();
    std::string last;
    bool more = false;
    for (const auto& s : subs) {
      if (!after.empty() && s.submission_id <= after) continue;
      if (items.size() == limit) {
        more = true;
        break;
      }
      items.push_back(s.to_json());
      last = s.submission_id;
    }
    nlohmann::json body = {{"items", std::move(items)}};
    body["next_cursor"] = more ? nlohmann::json(encode_cursor(last)) : nlohmann::json();
    send_json(res, 200, body);
  }));

  auto owned_submission = [this](const std::string& id, const Principal& who) {
    auto sub = platform_.submission(id);
    if (!sub) fail(ErrorKind::not_found, "unknown_submission", "no submission " + id);
    if (!who.is_admin() && sub->contributor_id != who.principal_id) {
      fail(ErrorKind::forbidden, "forbidden", "submission belongs to another contributor");
    }
    return *sub;
  };

  srv.Get("/submissions/:id",
          guarded(Access::any_principal, [owned_submission](Req req, Res res, const auto& who) {
            send_json(res, 200, owned_submission(req.path_params.at("id"), *who).to_json());
          }));

  srv.Get("/submissions/:id/report",
          guarded(Access::any_principal, [owned_submission](Req req, Res res, const auto& who) {
            const Submission sub = owned_submission(req.path_params.at("id"), *who);
            if (sub.status == SubmissionStatus::failed) {
              send_error(res, 422, sub.error_code, sub.error_message,
                         {{"submission_id", sub.submission_id}});
              return;
            }
            nlohmann::json body = sub.report.to_json();
            body["status"] = to_string(sub.status);
            send_json(res, 200, body);
          }));

  srv.Get("/metrics", guarded(Access::any_principal, [this](Req, Res res, const auto& who) {
    if (who->is_admin()) {
      nlohmann::json all = nlohmann::json::object();
      for (const auto& [id, view] : platform_.all_metrics()) all[id] = view.to_json();
      send_json(res, 200, {{"contributors", std::move(all)}});
      return;
    }
    send_json(res, 200, platform_.metrics(who->principal_id).to_json());
  }));

  srv.Post("/revenue/events", guarded(Access::admin_only, [this](Req req, Res res, const auto&) {
    const RevenueEvent event = RevenueEvent::from_json(parse_body(req));
    const IngestOutcome outcome = platform_.ingest_revenue(event);
    if (outcome.status == IngestStatus::rejected) {
      send_error(res, 422, outcome.reason, "revenue event rejected: " + outcome.reason,
                 {{"event_id", event.event_id}});
      return;
    }
    send_json(res, 200, {{"status", to_string(outcome.status)}, {"event_id", event.event_id}});
  }));

  srv.Get("/revenue/usage", guarded(Access::any_principal, [this](Req req, Res res, const auto&) {
    const PayoutEpoch open = platform_.open_epoch();
    const Timestamp start =
        req.has_param("start") ? parse_rfc3339(req.get_param_value("start")) : open.period_start;
    const Timestamp end =
        req.has_param("end") ? parse_rfc3339(req.get_param_value("end")) : open.period_end;
    if (!(start < end)) fail(ErrorKind::validation, "invalid_window", "start must precede end");
    nlohmann::json buckets = nlohmann::json::array();
    for (const auto& b : platform_.usage_detail(start, end)) buckets.push_back(b.to_json());
    send_json(res, 200,
              {{"start", format_rfc3339(start)},
               {"end", format_rfc3339(end)},
               {"total_minor", platform_.aggregate_revenue(start, end)},
               {"buckets", std::move(buckets)}});
  }));

  srv.Get("/epochs", guarded(Access::any_principal, [this](Req req, Res res, const auto&) {
    const std::size_t limit = parse_limit(req, options_.page_limit);
    std::uint64_t after = 0;
    if (req.has_param("cursor")) after = parse_epoch_id(decode_cursor(req.get_param_value("cursor")));
    nlohmann::json items = nlohmann::json::array();
    bool more = false;
    std::uint64_t last = 0;
    for (const auto& e : platform_.epochs()) {
      if (e.epoch_id <= after) continue;
      if (items.size() == limit) {
        more = true;
        break;
      }
      items.push_back(to_json(e));
      last = e.epoch_id;
    }
    nlohmann::json body = {{"items", std::move(items)}};
    body["next_cursor"] = more ? nlohmann::json(encode_cursor(std::to_string(last))) : nlohmann::json();
    send_json(res, 200, body);
  }));

  srv.Get("/epochs/:id/statement",
          guarded(Access::any_principal, [this](Req req, Res res, const auto& who) {
            const std::uint64_t id = parse_epoch_id(req.path_params.at("id"));
            res.status = 200;
            res.set_content(platform_.statement_json(
                                id, who->is_admin() ? std::nullopt
                                                    : std::optional<std::string>(who->principal_id)),
                            "application/json");
          }));

  srv.Post("/epochs/:id/close", guarded(Access::admin_only, [this](Req req, Res res, const auto&) {
    const std::uint64_t id = parse_epoch_id(req.path_params.at("id"));
    const nlohmann::json body = parse_body(req);
    const bool override_flag = body.value("override", false);
    std::optional<Timestamp> at;
    if (const auto t = body.find("close_time"); t != body.end() && !t->is_null()) {
      at = parse_rfc3339(t->get<std::string>());
    }
    platform_.close_epoch(id, at, override_flag);
    res.status = 200;
    res.set_content(platform_.statement_json(id, std::nullopt), "application/json");
  }));

  srv.Post("/admin/alpha", guarded(Access::admin_only, [this](Req req, Res res, const auto&) {
    const nlohmann::json body = parse_body(req);
    const auto ppm = body.find("alpha_ppm");
    if (ppm == body.end() || !ppm->is_number_integer()) {
      fail(ErrorKind::validation, "alpha_out_of_range", "alpha_ppm must be an integer");
    }
    platform_.set_alpha(ppm->get<std::int64_t>());
    send_json(res, 200, {{"next_alpha_ppm", ppm->get<std::int64_t>()}});
  }));

  srv.Post("/corpus", guarded(Access::admin_only, [this](Req req, Res res, const auto&) {
    const CorpusSource source = corpus_source_from_string(
        req.has_param("source") ? req.get_param_value("source") : "consumer");
    if (source == CorpusSource::contributor) {
      fail(ErrorKind::validation, "invalid_corpus_source", "source must be consumer or public");
    }
    const FingerprintFile file = decode_fingerprint_file(req.body);
    const std::size_t added = platform_.load_corpus(file, source);
    send_json(res, 200, {{"records", file.records.size()},
                         {"added", added},
                         {"index_size", platform_.index_size()}});
  }));

  srv.set_error_handler([](Req, Res res) {
    if (!res.body.empty()) return;
    if (res.status == 413) {
      send_error(res, 413, "payload_too_large", "request body exceeds the configured size cap");
    } else if (res.status == 404) {
      send_error(res, 404, "not_found", "no such endpoint");
    }
  });
}

}  // namespace datapool
