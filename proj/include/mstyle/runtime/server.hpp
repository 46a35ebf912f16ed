#pragma once

#include "mstyle/runtime/protocol.hpp"

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>

namespace mstyle::runtime {

struct ServerConfig {
  std::string checkpoint;  // serialized checkpoint; every connection loads its own model
  std::string address = "127.0.0.1";
  unsigned short port = 8765;  // 0 picks a free port
  double fps = 60.0;
  double trajectory_blend = 0.5;
  std::uint64_t seed = 0;
  std::size_t queue_capacity = 8;  // frames waiting per client before the oldest is dropped
  /// Connection n records to <stem>-<n><ext>.
  std::optional<std::filesystem::path> record;
  /// Drives every connection from this recording instead of client messages,
  /// then closes it after the last recorded tick.
  std::optional<Recording> replay;
};

struct ServerStats {
  std::uint64_t connections = 0;
  std::uint64_t frames_sent = 0;
  std::uint64_t frames_dropped = 0;
  std::uint64_t overruns = 0;
  std::uint64_t errors_sent = 0;
};

/// WebSocket service: one session and generation thread per connection,
/// latest-wins control between ticks, drop-oldest delivery to slow clients.
class Server {
 public:
  /// Binds immediately; throws ConfigError if the checkpoint or address is unusable.
  explicit Server(ServerConfig config);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  unsigned short port() const;
  /// Serves until stop(); blocks the calling thread.
  void run();
  /// Safe from any thread.
  void stop();
  ServerStats stats() const;

  struct Impl;

 private:
  std::unique_ptr<Impl> impl_;
};

}  // namespace mstyle::runtime
