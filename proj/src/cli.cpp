#include "datapool/cli.hpp"

#include <CLI11.hpp>
#include <httplib.h>
#include <sys/stat.h>

#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <thread>
#include <charconv>
#include <map>
#include <algorithm>

#include "datapool/dedup.hpp"
#include "datapool/error.hpp"
#include "datapool/platform.hpp"
#include "datapool/service.hpp"

namespace datapool::cli {
namespace {

/// Failure reported by the server or the network.
struct ServerFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Problem detected locally before contacting the server.
struct LocalFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LocalFailure("cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

class ApiClient {
 public:
  explicit ApiClient(const CliConfig& config) : client_(config.server), token_(config.token) {
    client_.set_connection_timeout(10);
    client_.set_read_timeout(300);
    client_.set_write_timeout(300);
  }

  nlohmann::json get(const std::string& path, std::string* raw = nullptr) {
    return check(client_.Get(path, headers()), raw);
  }

  nlohmann::json post_json(const std::string& path, const nlohmann::json& body,
                           std::string* raw = nullptr) {
    return check(client_.Post(path, headers(), body.dump(), "application/json"), raw);
  }

  nlohmann::json post_bytes(const std::string& path, const std::string& bytes,
                            const std::string& content_type) {
    return check(client_.Post(path, headers(), bytes, content_type), nullptr);
  }

  /// Streams a file as the request body in fixed-size chunks.
  nlohmann::json post_file(const std::string& path, const std::filesystem::path& file,
                           const std::string& content_type) {
    auto in = std::make_shared<std::ifstream>(file, std::ios::binary);
    if (!*in) throw LocalFailure("cannot read " + file.string());
    const auto size = static_cast<std::size_t>(std::filesystem::file_size(file));
    auto provider = [in](std::size_t offset, std::size_t length, httplib::DataSink& sink) {
      std::vector<char> buf(std::min<std::size_t>(length, 1 << 16));
      in->seekg(static_cast<std::streamoff>(offset));
      in->read(buf.data(), static_cast<std::streamsize>(buf.size()));
      sink.write(buf.data(), static_cast<std::size_t>(in->gcount()));
      return true;
    };
    return check(client_.Post(path, headers(), size, provider, content_type), nullptr);
  }

 private:
  httplib::Headers headers() const {
    httplib::Headers h;
    if (!token_.empty()) h.emplace("Authorization", "Bearer " + token_);
    return h;
  }

  static nlohmann::json check(const httplib::Result& res, std::string* raw) {
    if (!res) throw ServerFailure("request failed: " + httplib::to_string(res.error()));
    auto body = nlohmann::json::parse(res->body, nullptr, false);
    if (res->status >= 400) {
      std::string msg = "server returned " + std::to_string(res->status);
      if (!body.is_discarded() && body.is_object()) {
        msg += ": " + body.value("code", std::string()) + " - " + body.value("message", std::string());
      }
      throw ServerFailure(msg);
    }
    if (body.is_discarded()) throw ServerFailure("server returned a non-JSON body");
    if (raw) *raw = res->body;
    return body;
  }

  httplib::Client client_;
  std::string token_;
};

void validate_jsonl_file(const std::filesystem::path& file) {
  if (!std::filesystem::exists(file) || std::filesystem::is_directory(file)) {
    throw LocalFailure("no such file: " + file.string());
  }
  std::ifstream in(file, std::ios::binary);
  if (!in) throw LocalFailure("cannot read " + file.string());
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto j = nlohmann::json::parse(line, nullptr, false);
    if (!j.is_discarded() && j.is_object()) return;
  }
  throw LocalFailure(file.string() + " is not JSON Lines: no line holds a JSON object");
}

void print_report(std::ostream& out, const nlohmann::json& report) {
  out << "submission " << report.at("submission_id").get<std::string>() << " ("
      << report.value("status", std::string("unknown")) << ")\n";
  out << std::left << std::setw(22) << "stage" << std::right << std::setw(12) << "documents"
      << std::setw(14) << "tokens" << "  status\n";
  for (const auto& s : report.at("stages")) {
    out << std::left << std::setw(22) << s.at("stage").get<std::string>() << std::right
        << std::setw(12) << s.at("documents").get<std::int64_t>() << std::setw(14)
        << s.at("tokens").get<std::int64_t>() << "  " << s.at("status").get<std::string>() << "\n";
  }
  const auto& rejections = report.at("rejections");
  if (!rejections.empty()) {
    out << "rejections:";
    for (const auto& [reason, n] : rejections.items()) out << " " << reason << "=" << n.get<std::int64_t>();
    out << "\n";
  }
}

void print_metrics(std::ostream& out, const nlohmann::json& m) {
  out << std::left << std::setw(28) << "data contribution ratio" << m.at("contribution_ratio").get<std::string>() << "\n"
      << std::setw(28) << "contribution token count" << m.at("contribution_token_count").get<std::int64_t>() << "\n"
      << std::setw(28) << "current monetary reward" << m.at("current_monetary_reward_minor").get<std::int64_t>() << "\n"
      << std::setw(28) << "expected payout" << m.at("expected_payout_minor").get<std::int64_t>() << "\n";
}

void print_statement(std::ostream& out, const nlohmann::json& s) {
  out << "epoch " << s.at("epoch_id").get<std::uint64_t>() << " [" << s.at("period_start").get<std::string>()
      << ", " << s.at("period_end").get<std::string>() << ") " << s.at("status").get<std::string>() << "\n";
  if (s.at("status") == "closed") {
    out << "revenue " << s.at("revenue_total_minor").get<std::int64_t>() << "  alpha_ppm "
        << s.at("alpha_ppm").get<std::int64_t>() << "  pool " << s.at("pool_minor").get<std::int64_t>()
        << "  undistributed " << s.at("undistributed_minor").get<std::int64_t>() << " ("
        << s.at("currency").get<std::string>() << " minor units)\n";
  }
  for (const auto& line : s.at("lines")) {
    out << "  " << std::left << std::setw(16) << line.at("contributor_id").get<std::string>() << std::right
        << std::setw(14) << line.at("tokens").get<std::int64_t>() << std::setw(14)
        << line.at("reward_minor").get<std::int64_t>() << "\n";
  }
}

void emit(std::ostream& out, bool json, const std::string& raw, const std::function<void()>& human) {
  if (json) {
    out << raw << "\n";
  } else {
    human();
  }
}

int serve(const std::string& data_dir, const std::string& host, int port,
          const std::string& admin_token, const std::string& filters_path, std::int64_t alpha_ppm,
          std::int64_t epoch_days, const std::string& currency, bool no_sync, std::ostream& out) {
  Platform::Options options;
  options.data_dir = data_dir;
  options.sync = !no_sync;
  options.config.alpha_ppm = alpha_ppm;
  options.config.epoch_length_days = epoch_days;
  options.config.currency_code = currency;
  if (!filters_path.empty()) options.config.rules = FilterRuleSet::load(filters_path);
  options.admin_token = admin_token;

  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  Platform platform(options);
  Service service(platform);
  if (!service.bind(host, port)) throw LocalFailure("cannot bind " + host + ":" + std::to_string(port));
  out << "datapool serving on http://" << host << ":" << port << std::endl;
  std::jthread stopper([&](std::stop_token) {
    int sig = 0;
    sigwait(&signals, &sig);
    service.stop();
  });
  service.serve();
  // Wake the signal waiter if the server stopped for another reason.
  pthread_kill(stopper.native_handle(), SIGTERM);
  return kExitOk;
}

}  // namespace

std::filesystem::path default_config_path() {
  if (const char* xdg = std::getenv("XDG_CONFIG_HOME"); xdg && *xdg) {
    return std::filesystem::path(xdg) / "datapool" / "config";
  }
  const char* home = std::getenv("HOME");
  return std::filesystem::path(home ? home : ".") / ".config" / "datapool" / "config";
}

CliConfig read_config_file(const std::filesystem::path& path) {
  CliConfig config;
  std::ifstream in(path);
  if (!in) return config;
  std::string line;
  while (std::getline(in, line)) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      if (b == std::string::npos) return std::string();
      return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key == "server") config.server = value;
    if (key == "token") config.token = value;
  }
  if (!config.token.empty()) {
    struct stat st {};
    if (::stat(path.c_str(), &st) == 0 && (st.st_mode & 077) != 0) {
      fail(ErrorKind::validation, "config_permissions",
           path.string() + " holds a credential but is accessible by group/others; chmod 600 it");
    }
  }
  return config;
}

std::vector<std::string> read_corpus_dir(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw LocalFailure("not a directory: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::recursive_directory_iterator(dir)) {
    if (entry.is_regular_file()) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<std::string> texts;
  for (const auto& file : files) {
    if (file.extension() == ".jsonl") {
      std::ifstream in(file, std::ios::binary);
      std::string line;
      while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const auto j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_object() && j.contains("text") && j["text"].is_string()) {
          texts.push_back(j["text"].get<std::string>());
        }
      }
    } else {
      texts.push_back(read_file(file));
    }
  }
  return texts;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"datapool: contributor and operator client for the data-sharing platform", "datapool"};
  app.require_subcommand(1);

  std::string server_flag;
  std::string token_flag;
  std::string config_flag;
  bool json = false;
  app.add_option("--server", server_flag, "Server URL (env DATAPOOL_SERVER)");
  app.add_option("--token", token_flag, "Bearer credential (env DATAPOOL_TOKEN)");
  app.add_option("--config", config_flag, "Config file (default ~/.config/datapool/config)");
  app.add_flag("--json", json, "Emit canonical JSON instead of tables");

  // serve
  auto* serve_cmd = app.add_subcommand("serve", "Run the platform HTTP service");
  std::string data_dir = "./datapool-data";
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string admin_token;
  std::string filters_path;
  std::int64_t alpha_ppm = 100'000;
  std::int64_t epoch_days = 30;
  std::string currency = "USD";
  bool no_sync = false;
  serve_cmd->add_option("--data-dir", data_dir, "State directory");
  serve_cmd->add_option("--host", host);
  serve_cmd->add_option("--port", port);
  serve_cmd->add_option("--admin-token", admin_token, "Admin credential (env DATAPOOL_ADMIN_TOKEN)");
  serve_cmd->add_option("--filters", filters_path, "Filter rules key=value file");
  serve_cmd->add_option("--alpha-ppm", alpha_ppm, "Initial contributor share, parts per million");
  serve_cmd->add_option("--epoch-days", epoch_days);
  serve_cmd->add_option("--currency", currency);
  serve_cmd->add_flag("--no-sync", no_sync, "Skip fdatasync on log appends (testing only)");

  // contrib
  auto* contrib = app.add_subcommand("contrib", "Contributor commands");
  contrib->require_subcommand(1);
  std::string name;
  auto* reg_cmd = contrib->add_subcommand("register", "Register a contributor and print its credential");
  reg_cmd->add_option("name", name)->required();
  std::string upload_file;
  bool wait = false;
  auto* upload_cmd = contrib->add_subcommand("upload", "Upload a JSON Lines dataset");
  upload_cmd->add_option("file", upload_file)->required();
  upload_cmd->add_flag("--wait", wait, "Poll until the submission is finalized");
  std::string submission_id;
  auto* status_cmd = contrib->add_subcommand("status", "Show a submission's preprocessing funnel");
  status_cmd->add_option("id", submission_id)->required();
  status_cmd->add_flag("--wait", wait, "Poll until the submission is finalized");
  auto* metrics_cmd = contrib->add_subcommand("metrics", "Show contribution ratio, tokens, reward, expected payout");
  std::uint64_t statement_epoch = 0;
  auto* statement_cmd = contrib->add_subcommand("statement", "Show a payout statement");
  statement_cmd->add_option("epoch", statement_epoch)->required();

  // admin
  auto* admin = app.add_subcommand("admin", "Consumer administrator commands");
  admin->require_subcommand(1);
  std::string corpus_dir;
  bool public_corpus = false;
  std::string fingerprint_out;
  auto* corpus_cmd = admin->add_subcommand("load-corpus", "Fingerprint a corpus locally and upload the fingerprints");
  corpus_cmd->add_option("dir", corpus_dir)->required();
  corpus_cmd->add_flag("--public", public_corpus, "Register as public-corpus rather than consumer-owned");
  corpus_cmd->add_option("--output", fingerprint_out, "Write the fingerprint file here instead of uploading");
  std::optional<std::uint64_t> close_epoch_id;
  bool override_flag = false;
  std::string close_at;
  auto* close_cmd = admin->add_subcommand("close-epoch", "Close a payout epoch and print its statement");
  close_cmd->add_option("--epoch", close_epoch_id, "Epoch id (default: the open epoch)");
  close_cmd->add_flag("--override", override_flag, "Allow closing before the epoch's end");
  close_cmd->add_option("--at", close_at, "Close time, RFC 3339 (default: now)");
  std::string alpha_text;
  auto* alpha_cmd = admin->add_subcommand("set-alpha", "Set alpha (ppm) for the next epoch");
  alpha_cmd->add_option("ppm", alpha_text)->required();
  std::string revenue_file;
  auto* revenue_cmd = admin->add_subcommand("push-revenue", "Push revenue events from a JSON Lines file");
  revenue_cmd->add_option("file", revenue_file)->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << e.what() << "\n";
    return kExitLocalError;
  }

  try {
    if (serve_cmd->parsed()) {
      if (admin_token.empty()) {
        if (const char* env = std::getenv("DATAPOOL_ADMIN_TOKEN")) admin_token = env;
      }
      return serve(data_dir, host, port, admin_token, filters_path, alpha_ppm, epoch_days, currency,
                   no_sync, out);
    }

    CliConfig config = read_config_file(config_flag.empty() ? default_config_path() : std::filesystem::path(config_flag));
    if (const char* env = std::getenv("DATAPOOL_SERVER"); env && *env) config.server = env;
    if (const char* env = std::getenv("DATAPOOL_TOKEN"); env && *env) config.token = env;
    if (!server_flag.empty()) config.server = server_flag;
    if (!token_flag.empty()) config.token = token_flag;
    config.json = json;

    if (alpha_cmd->parsed()) {
      std::int64_t ppm = 0;
      const auto [ptr, ec] = std::from_chars(alpha_text.data(), alpha_text.data() + alpha_text.size(), ppm);
      if (ec != std::errc{} || ptr != alpha_text.data() + alpha_text.size() || ppm < 0 || ppm > 1'000'000) {
        throw LocalFailure("alpha must be an integer in [0, 1000000] ppm, got '" + alpha_text + "'");
      }
      ApiClient api(config);
      std::string raw;
      api.post_json("/admin/alpha", {{"alpha_ppm", ppm}}, &raw);
      emit(out, json, raw, [&] { out << "alpha for the next epoch: " << ppm << " ppm\n"; });
      return kExitOk;
    }
    if (upload_cmd->parsed()) {
      validate_jsonl_file(upload_file);
      ApiClient api(config);
      const nlohmann::json res = api.post_file("/submissions", upload_file, "application/x-ndjson");
      submission_id = res.at("submission_id").get<std::string>();
      if (!wait) {
        if (json) out << res.dump() << "\n";
        else out << submission_id << "\n";
        return kExitOk;
      }
    }
    if (corpus_cmd->parsed()) {
      const std::vector<std::string> texts = read_corpus_dir(corpus_dir);
      MinHashParams params;
      if (fingerprint_out.empty()) {
        ApiClient api(config);
        const nlohmann::json cfg = api.get("/config");
        params.shingle_size = cfg.at("minhash").at("shingle_size").get<std::uint32_t>();
        params.num_perms = cfg.at("minhash").at("num_perms").get<std::uint32_t>();
        params.seed = cfg.at("minhash").at("seed").get<std::uint64_t>();
      }
      const std::string bytes = encode_fingerprint_file(fingerprint_texts(texts, params));
      if (!fingerprint_out.empty()) {
        std::ofstream f(fingerprint_out, std::ios::binary);
        f << bytes;
        if (!f) throw LocalFailure("cannot write " + fingerprint_out);
        out << "wrote fingerprints for " << texts.size() << " document(s) to " << fingerprint_out << "\n";
        return kExitOk;
      }
      ApiClient api(config);
      const nlohmann::json res = api.post_bytes(
          std::string("/corpus?source=") + (public_corpus ? "public" : "consumer"), bytes,
          "application/octet-stream");
      if (json) out << res.dump() << "\n";
      else out << "uploaded " << res.at("records") << " fingerprint(s), " << res.at("added") << " new\n";
      return kExitOk;
    }

    ApiClient api(config);
    if (reg_cmd->parsed()) {
      std::string raw;
      const auto res = api.post_json("/contributors", {{"display_name", name}}, &raw);
      emit(out, json, raw, [&] {
        out << "contributor_id " << res.at("contributor_id").get<std::string>() << "\n"
            << "token          " << res.at("token").get<std::string>() << "\n";
      });
      return kExitOk;
    }
    if (status_cmd->parsed() || upload_cmd->parsed()) {
      std::string raw;
      nlohmann::json report = api.get("/submissions/" + submission_id + "/report", &raw);
      while (wait && report.value("status", std::string()) != "finalized") {
        std::this_thread::sleep_for(std::chrono::milliseconds(100));
        report = api.get("/submissions/" + submission_id + "/report", &raw);
      }
      emit(out, json, raw, [&] { print_report(out, report); });
      return kExitOk;
    }
    if (metrics_cmd->parsed()) {
      std::string raw;
      const auto m = api.get("/metrics", &raw);
      emit(out, json, raw, [&] {
        if (m.contains("contributors")) {
          for (const auto& [id, view] : m.at("contributors").items()) {
            out << id << "\n";
            print_metrics(out, view);
          }
        } else {
          print_metrics(out, m);
        }
      });
      return kExitOk;
    }
    if (statement_cmd->parsed()) {
      std::string raw;
      const auto s = api.get("/epochs/" + std::to_string(statement_epoch) + "/statement", &raw);
      emit(out, json, raw, [&] { print_statement(out, s); });
      return kExitOk;
    }
    if (close_cmd->parsed()) {
      if (!close_at.empty()) parse_rfc3339(close_at);
      std::uint64_t id = 0;
      if (close_epoch_id) {
        id = *close_epoch_id;
      } else {
        id = api.get("/config").at("open_epoch").at("epoch_id").get<std::uint64_t>();
      }
      nlohmann::json body = {{"override", override_flag}};
      if (!close_at.empty()) body["close_time"] = close_at;
      std::string raw;
      const auto s = api.post_json("/epochs/" + std::to_string(id) + "/close", body, &raw);
      emit(out, json, raw, [&] { print_statement(out, s); });
      return kExitOk;
    }
    if (revenue_cmd->parsed()) {
      std::istringstream in(read_file(revenue_file));
      std::vector<nlohmann::json> events;
      std::string line;
      std::size_t line_no = 0;
      while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        auto j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object()) {
          throw LocalFailure(revenue_file + ":" + std::to_string(line_no) + ": not a JSON object");
        }
        events.push_back(std::move(j));
      }
      if (events.empty()) throw LocalFailure(revenue_file + " holds no events");
      std::map<std::string, int> tally;
      for (const auto& event : events) {
        try {
          const auto res = api.post_json("/revenue/events", event);
          ++tally[res.at("status").get<std::string>()];
        } catch (const ServerFailure& e) {
          ++tally["rejected"];
          err << e.what() << "\n";
        }
      }
      nlohmann::json summary = nlohmann::json::object();
      for (const auto& [k, v] : tally) summary[k] = v;
      out << (json ? summary.dump() : "revenue events: " + summary.dump()) << "\n";
      return tally.contains("rejected") ? kExitServerError : kExitOk;
    }
  } catch (const LocalFailure& e) {
    err << "error: " << e.what() << "\n";
    return kExitLocalError;
  } catch (const ServerFailure& e) {
    err << "error: " << e.what() << "\n";
    return kExitServerError;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return e.kind() == ErrorKind::validation || e.kind() == ErrorKind::config ? kExitLocalError
                                                                              : kExitServerError;
  }
  err << app.help();
  return kExitLocalError;
}

}  // namespace datapool::cli
