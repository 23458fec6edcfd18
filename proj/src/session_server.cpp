#include "laneintent/session_server.hpp"

#include <chrono>
#include <csignal>
#include <deque>
#include <filesystem>
#include <thread>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

namespace laneintent {

namespace beast = boost::beast;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;

namespace {

constexpr auto kTickPeriod = std::chrono::nanoseconds(1'000'000'000 / kTicksPerSecond);

class Connection;

}  // namespace

struct SessionServer::Impl {
  const RunConfig& config;
  ServeOptions options;
  net::io_context ioc{1};
  tcp::acceptor acceptor{ioc};
  std::optional<net::signal_set> signals;
  int started = 0;
  int finished = 0;
  std::vector<std::string> paths;

  Impl(const RunConfig& c, ServeOptions o) : config(c), options(std::move(o)) {}

  void accept();
  void session_done(const std::string& path) {
    ++finished;
    if (!path.empty()) paths.push_back(path);
    if (options.max_sessions > 0 && finished >= options.max_sessions) {
      beast::error_code ec;
      acceptor.close(ec);
      if (signals) signals->cancel();
    }
  }
};

namespace {

class Connection : public std::enable_shared_from_this<Connection> {
 public:
  Connection(tcp::socket socket, SessionServer::Impl& server, int index)
      : ws_(std::move(socket)), timer_(ws_.get_executor()), server_(server) {
    SessionOptions so;
    so.decimation = server.options.decimation;
    char id[32];
    std::snprintf(id, sizeof id, "session_%04d", index + 1);
    so.episode_id = id;
    engine_ = std::make_unique<SessionEngine>(server.config,
                                              derive_seed(server.options.seed, index), so);
  }

  void start() {
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.async_accept([self = shared_from_this()](beast::error_code ec) {
      if (ec) return;
      self->do_read();
    });
  }

 private:
  void do_read() {
    ws_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      self->on_read(ec);
    });
  }

  void on_read(beast::error_code ec) {
    if (ec) {
      on_disconnect();
      return;
    }
    const std::string text = beast::buffers_to_string(buffer_.data());
    buffer_.consume(buffer_.size());
    if (ended_) return;
    const bool was_started = engine_->started();
    for (auto& reply : engine_->receive(text)) enqueue(std::move(reply));
    if (engine_->rejected()) {
      ended_ = true;
      closing_ = true;
      if (!writing_) close();
      return;
    }
    if (!was_started && engine_->started()) {
      next_ = std::chrono::steady_clock::now();
      schedule();
    }
    do_read();
  }

  void schedule() {
    auto self = shared_from_this();
    if (server_.options.realtime) {
      next_ += kTickPeriod;
      timer_.expires_at(next_);
      timer_.async_wait([self](beast::error_code ec) {
        if (!ec) self->on_tick();
      });
    } else {
      net::post(ws_.get_executor(), [self] { self->on_tick(); });
    }
  }

  void on_tick() {
    if (ended_) return;
    if (auto frame = engine_->step()) enqueue(std::move(*frame));
    if (engine_->done()) {
      end_session();
    } else {
      schedule();
    }
  }

  std::string save() {
    const Trace trace = engine_->finish();
    if (server_.options.out_dir.empty()) return {};
    try {
      return write_session_outputs(trace, engine_->label_log(), server_.options.out_dir);
    } catch (const std::exception&) {
      return {};
    }
  }

  void end_session() {
    ended_ = true;
    const std::string path = save();
    enqueue(engine_->session_end_text(path));
    closing_ = true;
    server_.session_done(path);
  }

  void on_disconnect() {
    if (ended_) return;
    ended_ = true;
    timer_.cancel();
    server_.session_done(engine_->started() ? save() : std::string{});
  }

  void enqueue(std::string frame) {
    out_.push_back(std::move(frame));
    if (!writing_) write_next();
  }

  void write_next() {
    writing_ = true;
    ws_.text(true);
    ws_.async_write(net::buffer(out_.front()),
                    [self = shared_from_this()](beast::error_code ec, std::size_t) {
                      self->on_write(ec);
                    });
  }

  void on_write(beast::error_code ec) {
    out_.pop_front();
    writing_ = false;
    if (ec) {
      out_.clear();
      on_disconnect();
      return;
    }
    if (!out_.empty()) {
      write_next();
    } else if (closing_) {
      close();
    }
  }

  void close() {
    ws_.async_close(websocket::close_code::normal, [self = shared_from_this()](beast::error_code) {});
  }

  websocket::stream<beast::tcp_stream> ws_;
  beast::flat_buffer buffer_;
  net::steady_timer timer_;
  SessionServer::Impl& server_;
  std::unique_ptr<SessionEngine> engine_;
  std::deque<std::string> out_;
  std::chrono::steady_clock::time_point next_;
  bool writing_ = false;
  bool closing_ = false;
  bool ended_ = false;
};

}  // namespace

void SessionServer::Impl::accept() {
  acceptor.async_accept(net::make_strand(ioc), [this](beast::error_code ec, tcp::socket socket) {
    if (ec) return;
    std::make_shared<Connection>(std::move(socket), *this, started++)->start();
    if (options.max_sessions == 0 || started < options.max_sessions) accept();
  });
}

SessionServer::SessionServer(const RunConfig& config, ServeOptions options)
    : impl_(std::make_unique<Impl>(config, std::move(options))) {
  auto& a = impl_->acceptor;
  const auto& o = impl_->options;
  beast::error_code ec;
  const auto address = net::ip::make_address(o.host, ec);
  if (ec) throw std::runtime_error("invalid host '" + o.host + "'");
  const tcp::endpoint ep(address, o.port);
  const std::string where = o.host + ":" + std::to_string(o.port);
  a.open(ep.protocol(), ec);
  if (!ec) a.set_option(net::socket_base::reuse_address(true), ec);
  if (!ec) a.bind(ep, ec);
  if (!ec) a.listen(net::socket_base::max_listen_connections, ec);
  if (ec) throw std::runtime_error("cannot listen on " + where + ": " + ec.message());
}

SessionServer::~SessionServer() = default;

unsigned short SessionServer::port() const { return impl_->acceptor.local_endpoint().port(); }

void SessionServer::run() {
  if (impl_->options.stop_on_signals) {
    impl_->signals.emplace(impl_->ioc, SIGINT, SIGTERM);
    impl_->signals->async_wait([this](beast::error_code ec, int) {
      if (!ec) impl_->ioc.stop();
    });
  }
  impl_->accept();
  impl_->ioc.run();
}

void SessionServer::stop() {
  net::post(impl_->ioc, [this] {
    beast::error_code ec;
    impl_->acceptor.close(ec);
    impl_->ioc.stop();
  });
}

int SessionServer::sessions_finished() const { return impl_->finished; }

std::vector<std::string> SessionServer::trace_paths() const { return impl_->paths; }

// ---------------------------------------------------------------------------

struct SessionClient::Impl {
  net::io_context ioc;
  websocket::stream<tcp::socket> ws{ioc};
  beast::flat_buffer buffer;
};

SessionClient::SessionClient(const std::string& host, unsigned short port)
    : impl_(std::make_unique<Impl>()) {
  tcp::resolver resolver(impl_->ioc);
  net::connect(impl_->ws.next_layer(), resolver.resolve(host, std::to_string(port)));
  impl_->ws.handshake(host + ":" + std::to_string(port), "/");
  impl_->ws.text(true);
}

SessionClient::~SessionClient() {
  beast::error_code ec;
  if (impl_->ws.is_open()) impl_->ws.close(websocket::close_code::normal, ec);
}

void SessionClient::send(const std::string& frame) { impl_->ws.write(net::buffer(frame)); }

std::optional<std::string> SessionClient::read() {
  beast::error_code ec;
  impl_->buffer.consume(impl_->buffer.size());
  impl_->ws.read(impl_->buffer, ec);
  if (ec) return std::nullopt;
  return beast::buffers_to_string(impl_->buffer.data());
}

void SessionClient::close() {
  beast::error_code ec;
  impl_->ws.close(websocket::close_code::normal, ec);
}

// ---------------------------------------------------------------------------

HeadlessCheckResult headless_check(const RunConfig& config, Seed seed) {
  ServeOptions o;
  o.port = 0;
  o.seed = seed;
  o.realtime = false;
  o.max_sessions = 1;
  HeadlessCheckResult result;
  SessionServer server(config, o);
  const unsigned short port = server.port();
  std::thread loop([&] { server.run(); });
  try {
    SessionClient client("127.0.0.1", port);
    client.send(client_message_text(HandshakeMessage{}));
    client.send(client_message_text(ControlMessage{0.0, 0.0, 0.0}));
    while (auto frame = client.read()) {
      const auto j = nlohmann::json::parse(*frame, nullptr, false);
      if (j.is_object() && j.value("type", "") == "tick") {
        result.ok = true;
        result.detail = "handshake ok on port " + std::to_string(port) + ", first tick at t=" +
                        j["time"].dump();
        break;
      }
      if (j.is_object() && j.value("type", "") == "error") {
        result.detail = "server error: " + j.value("text", "");
        break;
      }
    }
    if (!result.ok && result.detail.empty()) result.detail = "connection closed before first tick";
    client.close();
  } catch (const std::exception& e) {
    result.ok = false;
    result.detail = e.what();
    server.stop();
  }
  loop.join();
  return result;
}

}  // namespace laneintent
