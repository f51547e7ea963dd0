#pragma once

#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "datapool/platform.hpp"

namespace httplib {
class Server;
}

namespace datapool {

/// Who may call an endpoint.
enum class Access { open, any_principal, admin_only };

struct RouteSpec {
  std::string method;
  /// Path pattern with ":param" segments.
  std::string pattern;
  Access access;
};

/// Every route the service exposes; also the dashboard's contract.
const std::vector<RouteSpec>& route_table();

/// HTTP/JSON front end over a Platform.
///
/// Error responses carry {code, message, detail}. Uploaded submissions are
/// processed by a background worker unless async processing is disabled.
class Service {
 public:
  struct Options {
    bool async_processing = true;
    std::size_t page_limit = 100;
  };

  Service(Platform& platform, Options options);
  explicit Service(Platform& platform) : Service(platform, Options{}) {}
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Binds to an ephemeral port on host; returns it (or -1).
  int bind_any_port(const std::string& host = "127.0.0.1");
  bool bind(const std::string& host, int port);
  /// Blocks serving requests until stop().
  bool serve();
  /// bind_any_port + serve on a background thread; waits until ready.
  int start_background(const std::string& host = "127.0.0.1");
  void stop();

 private:
  void install_routes();

  Platform& platform_;
  Options options_;
  std::unique_ptr<httplib::Server> server_;
  std::jthread worker_;
  std::thread listener_;
};

}  // namespace datapool
