#pragma once

#include <memory>
#include <string>

#include "avil/service/session.hpp"

namespace avil::service {

/// WebSocket server: one session per connection, one JSON text message per
/// request and per reply.
class Server {
 public:
  /// Binds immediately (port 0 picks a free port); throws std::runtime_error
  /// when the address cannot be bound.
  Server(ServiceConfig config, const std::string& host, unsigned short port, int threads = 4);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  unsigned short port() const;
  /// Blocks until stop(); stop() may be called from any thread or a signal handler context.
  void run();
  /// Closes the listener and every session; in-progress recordings are saved.
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// "host:port" -> pair; throws std::invalid_argument.
std::pair<std::string, unsigned short> parse_address(const std::string& address);

}  // namespace avil::service
