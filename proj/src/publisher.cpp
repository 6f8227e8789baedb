#include "connstream/publisher.hpp"

#include <array>
#include <atomic>
#include <chrono>
#include <deque>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include "connstream/errors.hpp"

namespace connstream {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;

namespace {

constexpr std::size_t kSessionQueueCap = 64;

class Session : public std::enable_shared_from_this<Session> {
 public:
  virtual ~Session() = default;
  virtual void send(FrameType type, const std::shared_ptr<const std::string>& payload) = 0;
  virtual void close() = 0;
  bool alive() const { return alive_; }

 protected:
  std::atomic<bool> alive_{true};
};

// Outgoing queue shared by both session kinds; the front element is the one in flight.
struct WriteQueue {
  std::deque<std::shared_ptr<const std::string>> items;
  bool writing = false;

  void push(std::shared_ptr<const std::string> msg) {
    if (items.size() >= kSessionQueueCap) {
      // keep the in-flight head
      items.erase(items.begin() + (writing ? 1 : 0));
    }
    items.push_back(std::move(msg));
  }
};

class RawSession final : public Session {
 public:
  RawSession(tcp::socket socket, ControlChannel* control)
      : socket_(std::move(socket)), control_(control) {}

  void start(std::string_view initial) {
    if (!consume(initial)) return;
    read();
  }

  void send(FrameType type, const std::shared_ptr<const std::string>& payload) override {
    queue_.push(std::make_shared<const std::string>(encode_frame(type, *payload)));
    if (!queue_.writing) write();
  }

  void close() override {
    alive_ = false;
    beast::error_code ec;
    socket_.shutdown(tcp::socket::shutdown_both, ec);
    socket_.close(ec);
  }

 private:
  bool consume(std::string_view bytes) {
    try {
      decoder_.feed(bytes);
      while (auto frame = decoder_.next()) {
        if (frame->type != FrameType::Control) continue;
        const std::string ack = control_ ? control_->submit(frame->payload)
                                         : ack_json("unknown", false, "control disabled", std::nullopt);
        send(FrameType::Ack, std::make_shared<const std::string>(ack));
      }
    } catch (const Error&) {
      close();
      return false;
    }
    return true;
  }

  void read() {
    socket_.async_read_some(asio::buffer(buf_), [self = shared_from_this(), this](beast::error_code ec,
                                                                                   std::size_t n) {
      if (ec) {
        alive_ = false;
        return;
      }
      if (consume(std::string_view(buf_.data(), n))) read();
    });
  }

  void write() {
    if (queue_.items.empty() || !alive_) {
      queue_.writing = false;
      return;
    }
    queue_.writing = true;
    auto msg = queue_.items.front();
    asio::async_write(socket_, asio::buffer(*msg),
                      [self = shared_from_this(), this, msg](beast::error_code ec, std::size_t) {
                        if (ec) {
                          alive_ = false;
                          queue_.writing = false;
                          return;
                        }
                        queue_.items.pop_front();
                        write();
                      });
  }

  tcp::socket socket_;
  ControlChannel* control_;
  FrameDecoder decoder_;
  std::array<char, 8192> buf_{};
  WriteQueue queue_;
};

class WsSession final : public Session {
 public:
  WsSession(tcp::socket socket, ControlChannel* control)
      : ws_(std::move(socket)), control_(control) {}

  void start(http::request<http::string_body> req) {
    ws_.text(true);
    ws_.async_accept(req, [self = shared_from_this(), this](beast::error_code ec) {
      if (ec) {
        alive_ = false;
        return;
      }
      open_ = true;
      if (!queue_.items.empty()) write();
      read();
    });
  }

  void send(FrameType type, const std::shared_ptr<const std::string>& payload) override {
    queue_.push(std::make_shared<const std::string>(websocket_message(type, *payload)));
    if (open_ && !queue_.writing) write();
  }

  void close() override {
    alive_ = false;
    beast::error_code ec;
    beast::get_lowest_layer(ws_).shutdown(tcp::socket::shutdown_both, ec);
    beast::get_lowest_layer(ws_).close(ec);
  }

 private:
  void read() {
    ws_.async_read(in_, [self = shared_from_this(), this](beast::error_code ec, std::size_t) {
      if (ec) {
        alive_ = false;
        return;
      }
      const std::string text = beast::buffers_to_string(in_.data());
      in_.consume(in_.size());
      const std::string ack = control_ ? control_->submit(text)
                                       : ack_json("unknown", false, "control disabled", std::nullopt);
      send(FrameType::Ack, std::make_shared<const std::string>(ack));
      read();
    });
  }

  void write() {
    if (queue_.items.empty() || !alive_) {
      queue_.writing = false;
      return;
    }
    queue_.writing = true;
    auto msg = queue_.items.front();
    ws_.async_write(asio::buffer(*msg), [self = shared_from_this(), this, msg](beast::error_code ec,
                                                                              std::size_t) {
      if (ec) {
        alive_ = false;
        queue_.writing = false;
        return;
      }
      queue_.items.pop_front();
      write();
    });
  }

  websocket::stream<tcp::socket> ws_;
  ControlChannel* control_;
  beast::flat_buffer in_;
  WriteQueue queue_;
  bool open_ = false;
};

// Reads the first bytes of a connection to decide between WebSocket and raw frames.
class Sniffer : public std::enable_shared_from_this<Sniffer> {
 public:
  using Register = std::function<void(std::shared_ptr<Session>)>;

  Sniffer(tcp::socket socket, ControlChannel* control, Register reg)
      : socket_(std::move(socket)),
        timer_(socket_.get_executor()),
        control_(control),
        register_(std::move(reg)) {}

  void start() {
    // Raw subscribers may never send anything; after a short quiet period they are
    // treated as frame-stream clients.
    timer_.expires_after(std::chrono::milliseconds(150));
    timer_.async_wait([self = shared_from_this(), this](beast::error_code ec) {
      if (ec || decided_) return;
      timed_out_ = true;
      beast::error_code ignored;
      socket_.cancel(ignored);
    });
    read_more();
  }

 private:
  void read_more() {
    auto space = buffer_.prepare(512);
    socket_.async_read_some(space, [self = shared_from_this(), this](beast::error_code ec, std::size_t n) {
      if (ec == asio::error::operation_aborted && timed_out_) {
        decide();
        return;
      }
      if (ec) return;
      buffer_.commit(n);
      if (buffer_.size() < 4 && !timed_out_) {
        read_more();
        return;
      }
      decide();
    });
  }

  void decide() {
    decided_ = true;
    timer_.cancel();
    const std::string head = beast::buffers_to_string(buffer_.data());
    if (head.rfind("GET ", 0) != 0) {
      auto session = std::make_shared<RawSession>(std::move(socket_), control_);
      register_(session);
      session->start(head);
      return;
    }
    req_ = std::make_shared<http::request<http::string_body>>();
    http::async_read(socket_, buffer_, *req_, [self = shared_from_this(), this](beast::error_code ec,
                                                                              std::size_t) {
      if (ec) return;
      if (req_->target() != "/ws" || !websocket::is_upgrade(*req_)) {
        reject();
        return;
      }
      auto session = std::make_shared<WsSession>(std::move(socket_), control_);
      register_(session);
      session->start(std::move(*req_));
    });
  }

  void reject() {
    auto res = std::make_shared<http::response<http::string_body>>(http::status::not_found, 11);
    res->set(http::field::content_type, "text/plain");
    res->body() = "websocket endpoint is /ws\n";
    res->keep_alive(false);
    res->prepare_payload();
    http::async_write(socket_, *res, [self = shared_from_this(), res](beast::error_code, std::size_t) {
      beast::error_code ec;
      self->socket_.shutdown(tcp::socket::shutdown_both, ec);
    });
  }

  tcp::socket socket_;
  asio::steady_timer timer_;
  bool decided_ = false;
  bool timed_out_ = false;
  ControlChannel* control_;
  Register register_;
  beast::flat_buffer buffer_;
  std::shared_ptr<http::request<http::string_body>> req_;
};

}  // namespace

struct Publisher::Impl {
  asio::io_context io;
  tcp::acceptor acceptor{io};
  ControlChannel* control = nullptr;
  std::vector<std::shared_ptr<Session>> sessions;  // io thread only
  std::atomic<std::size_t> n_clients{0};
  std::atomic<std::size_t> frames_sent{0};
  std::thread thread;
  std::once_flag stopped;

  void accept() {
    acceptor.async_accept([this](beast::error_code ec, tcp::socket socket) {
      if (ec) return;
      socket.set_option(tcp::no_delay(true), ec);
      std::make_shared<Sniffer>(std::move(socket), control, [this](std::shared_ptr<Session> s) {
        sessions.push_back(std::move(s));
        prune();
      })->start();
      accept();
    });
  }

  void prune() {
    std::erase_if(sessions, [](const auto& s) { return !s->alive(); });
    n_clients = sessions.size();
  }
};

Publisher::Publisher(const std::string& host, int port, ControlChannel* control)
    : impl_(std::make_unique<Impl>()) {
  impl_->control = control;
  try {
    const tcp::endpoint ep(asio::ip::make_address(host), static_cast<unsigned short>(port));
    impl_->acceptor.open(ep.protocol());
    impl_->acceptor.set_option(tcp::acceptor::reuse_address(true));
    impl_->acceptor.bind(ep);
    impl_->acceptor.listen();
  } catch (const boost::system::system_error& ex) {
    throw EnvironmentError("cannot listen on " + host + ":" + std::to_string(port) + ": " + ex.what());
  }
  impl_->accept();
  impl_->thread = std::thread([this] { impl_->io.run(); });
}

Publisher::~Publisher() { stop(); }

int Publisher::port() const { return impl_->acceptor.local_endpoint().port(); }

void Publisher::publish(FrameType type, std::string_view payload) {
  auto shared = std::make_shared<const std::string>(payload);
  asio::post(impl_->io, [impl = impl_.get(), type, shared] {
    impl->prune();
    for (auto& s : impl->sessions) {
      s->send(type, shared);
      ++impl->frames_sent;
    }
  });
}

std::size_t Publisher::n_clients() const { return impl_->n_clients; }

std::size_t Publisher::frames_sent() const { return impl_->frames_sent; }

void Publisher::stop() {
  std::call_once(impl_->stopped, [this] {
    asio::post(impl_->io, [impl = impl_.get()] {
      beast::error_code ec;
      impl->acceptor.close(ec);
      for (auto& s : impl->sessions) s->close();
      impl->sessions.clear();
      impl->io.stop();
    });
    if (impl_->thread.joinable()) impl_->thread.join();
  });
}

}  // namespace connstream
