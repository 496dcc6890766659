#include "avil/service/server.hpp"

#include <boost/asio/dispatch.hpp>
#include <boost/asio/ip/tcp.hpp>
#include <boost/asio/strand.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>
#include <iostream>
#include <mutex>
#include <thread>
#include <vector>

namespace avil::service {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;

namespace {

class Session : public std::enable_shared_from_this<Session> {
 public:
  Session(tcp::socket&& socket, const ServiceConfig& config, EpisodeStore& store)
      : ws_(std::move(socket)), handler_(config, store), idle_(config.idle_timeout_seconds) {}

  ~Session() { finish(); }

  void start() {
    asio::dispatch(ws_.get_executor(), [self = shared_from_this()] {
      websocket::stream_base::timeout t = websocket::stream_base::timeout::suggested(beast::role_type::server);
      t.idle_timeout = std::chrono::seconds(self->idle_);
      t.keep_alive_pings = false;
      self->ws_.set_option(t);
      self->ws_.async_accept([self](beast::error_code ec) {
        if (ec) return self->finish();
        self->send(self->handler_.hello().dump());
      });
    });
  }

  void close() {
    asio::post(ws_.get_executor(), [self = shared_from_this()] {
      if (!self->ws_.is_open()) return;
      self->ws_.async_close(websocket::close_code::going_away, [self](beast::error_code) { self->finish(); });
    });
  }

 private:
  void send(std::string text) {
    out_ = std::move(text);
    ws_.text(true);
    ws_.async_write(asio::buffer(out_), [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) return self->finish();
      self->read();
    });
  }

  void read() {
    buffer_.clear();
    ws_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) return self->finish();
      self->send(self->handler_.handle(beast::buffers_to_string(self->buffer_.data())));
    });
  }

  // Connection over for whatever reason: keep what was recorded.
  void finish() {
    try {
      if (auto path = handler_.flush()) std::cerr << "saved unfinished recording to " << path->string() << "\n";
    } catch (const std::exception& e) {
      std::cerr << "could not save recording: " << e.what() << "\n";
    }
  }

  websocket::stream<beast::tcp_stream> ws_;
  beast::flat_buffer buffer_;
  std::string out_;
  SessionHandler handler_;
  int idle_;
};

}  // namespace

struct Server::Impl {
  Impl(ServiceConfig cfg, int threads)
      : config(std::move(cfg)), store(config.demo_dir, config.k, config.m), ioc(threads), acceptor(ioc),
        threads(std::max(1, threads)) {}

  void accept() {
    acceptor.async_accept(asio::make_strand(ioc), [this](beast::error_code ec, tcp::socket socket) {
      if (ec) return;  // listener closed
      auto session = std::make_shared<Session>(std::move(socket), config, store);
      {
        std::lock_guard lock(mutex);
        std::erase_if(sessions, [](const std::weak_ptr<Session>& w) { return w.expired(); });
        sessions.push_back(session);
      }
      session->start();
      accept();
    });
  }

  ServiceConfig config;
  EpisodeStore store;
  asio::io_context ioc;
  tcp::acceptor acceptor;
  int threads;
  std::mutex mutex;
  std::vector<std::weak_ptr<Session>> sessions;
};

Server::Server(ServiceConfig config, const std::string& host, unsigned short port, int threads)
    : impl_(std::make_unique<Impl>(std::move(config), threads)) {
  beast::error_code ec;
  const tcp::endpoint endpoint(asio::ip::make_address(host, ec), port);
  if (ec) throw std::runtime_error("bad listen address '" + host + "': " + ec.message());
  auto& a = impl_->acceptor;
  a.open(endpoint.protocol(), ec);
  if (!ec) a.set_option(asio::socket_base::reuse_address(true), ec);
  if (!ec) a.bind(endpoint, ec);
  if (!ec) a.listen(asio::socket_base::max_listen_connections, ec);
  if (ec) throw std::runtime_error("cannot listen on " + host + ":" + std::to_string(port) + ": " + ec.message());
  impl_->accept();
}

Server::~Server() {
  stop();
}

unsigned short Server::port() const { return impl_->acceptor.local_endpoint().port(); }

void Server::run() {
  std::vector<std::thread> workers;
  for (int i = 1; i < impl_->threads; ++i) workers.emplace_back([this] { impl_->ioc.run(); });
  impl_->ioc.run();
  for (auto& t : workers) t.join();
}

void Server::stop() {
  asio::post(impl_->ioc, [impl = impl_.get()] {
    beast::error_code ec;
    impl->acceptor.close(ec);
    std::lock_guard lock(impl->mutex);
    for (auto& w : impl->sessions) {
      if (auto s = w.lock()) s->close();
    }
  });
}

std::pair<std::string, unsigned short> parse_address(const std::string& address) {
  const auto colon = address.rfind(':');
  if (colon == std::string::npos || colon == 0) throw std::invalid_argument("address must be host:port, got '" + address + "'");
  int port = 0;
  try {
    std::size_t used = 0;
    port = std::stoi(address.substr(colon + 1), &used);
    if (used != address.size() - colon - 1) throw std::invalid_argument("trailing characters");
  } catch (const std::exception&) {
    throw std::invalid_argument("bad port in '" + address + "'");
  }
  if (port < 0 || port > 65535) throw std::invalid_argument("port out of range in '" + address + "'");
  return {address.substr(0, colon), static_cast<unsigned short>(port)};
}

}  // namespace avil::service
