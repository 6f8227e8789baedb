#pragma once

#include <memory>
#include <string>
#include <string_view>

#include "connstream/control.hpp"
#include "connstream/frames.hpp"

namespace connstream {

/// TCP server for subscribers. A connection that opens with an HTTP "GET " is upgraded to
/// a WebSocket (path /ws only) carrying websocket_message() text; anything else is a raw
/// frame stream. Control arrives as JSON text on the WebSocket or as 0x10 frames on raw
/// TCP; each gets an ack back on the same connection.
class Publisher {
 public:
  /// Binds immediately. Throws EnvironmentError when the port is taken. Port 0 picks one.
  Publisher(const std::string& host, int port, ControlChannel* control);
  ~Publisher();
  Publisher(const Publisher&) = delete;
  Publisher& operator=(const Publisher&) = delete;

  int port() const;
  /// Fire-and-forget broadcast; dropped when nobody is connected. Slow clients lose their
  /// oldest queued frames.
  void publish(FrameType type, std::string_view payload);
  std::size_t n_clients() const;
  std::size_t frames_sent() const;
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace connstream
