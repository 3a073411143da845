#pragma once

#include <chrono>
#include <filesystem>
#include <memory>
#include <string>

namespace rflow::service {

struct ServiceConfig {
  std::filesystem::path data_dir = "runs";  // run checkpoints, one directory per session
  unsigned workers = 2;                     // concurrent optimization sessions
  std::chrono::milliseconds eval_timeout{30000};
  unsigned optimizer_threads = 1;
};

/// HTTP session API for steering optimizations.
///
///   POST /sessions                          create, starts optimizing
///   GET  /sessions/{id}/front               front snapshot + status
///   POST /sessions/{id}/evaluate            run one point, returns artifacts
///   GET  /sessions/{id}/evaluations/{e}/overlay.png | label_map.png
///   POST /sessions/{id}/weights             store weights, ranked front
///   POST /sessions/{id}/pause | resume
///   GET  /runs, GET /runs/{name}/front      checkpointed runs in data_dir
///   GET  /healthz
class Service {
 public:
  explicit Service(ServiceConfig cfg);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Binds the listening socket; port 0 picks a free port. Returns the bound
  /// port. Throws ConfigError when the port cannot be bound.
  int bind(const std::string& host, int port);
  /// Serves until shutdown(). Requires bind().
  void run();
  /// Stops running sessions (each writes its checkpoint), then the server.
  /// Idempotent; safe from any thread.
  void shutdown();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace rflow::service
