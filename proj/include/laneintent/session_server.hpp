#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>

#include "laneintent/config.hpp"
#include "laneintent/session.hpp"

namespace laneintent {

struct ServeOptions {
  std::string host = "127.0.0.1";
  unsigned short port = 8765;  // 0 picks a free port
  /// Where session traces go; empty means nothing is written.
  std::string out_dir;
  Seed seed{};
  int decimation = kDefaultDecimation;
  /// false: step as fast as the event loop allows (tests, self-check).
  bool realtime = true;
  /// Stop after this many sessions; 0 = serve until stop().
  int max_sessions = 0;
  bool stop_on_signals = false;
};

/// WebSocket front end for SessionEngine. One engine per connection, all
/// connections share one single-threaded event loop.
class SessionServer {
 public:
  /// Binds immediately; throws std::runtime_error if the address is taken.
  SessionServer(const RunConfig& config, ServeOptions options);
  ~SessionServer();
  SessionServer(const SessionServer&) = delete;
  SessionServer& operator=(const SessionServer&) = delete;

  unsigned short port() const;
  void run();
  /// Safe to call from any thread.
  void stop();

  int sessions_finished() const;
  /// Trace paths in the order sessions ended.
  std::vector<std::string> trace_paths() const;

  struct Impl;

 private:
  std::unique_ptr<Impl> impl_;
};

/// Minimal blocking client, used by the self-check and the tests.
class SessionClient {
 public:
  SessionClient(const std::string& host, unsigned short port);
  ~SessionClient();
  SessionClient(const SessionClient&) = delete;
  SessionClient& operator=(const SessionClient&) = delete;

  void send(const std::string& frame);
  /// Next text frame, or nullopt once the server has closed.
  std::optional<std::string> read();
  void close();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

struct HeadlessCheckResult {
  bool ok = false;
  std::string detail;
};

/// Starts a server on a free local port, performs one handshake with a
/// scripted client, waits for the first tick frame and disconnects.
HeadlessCheckResult headless_check(const RunConfig& config, Seed seed);

}  // namespace laneintent
