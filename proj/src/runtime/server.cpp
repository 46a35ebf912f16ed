#include "mstyle/runtime/server.hpp"

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

#include <atomic>
#include <chrono>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

namespace mstyle::runtime {

namespace net = boost::asio;
namespace beast = boost::beast;
namespace websocket = beast::websocket;
using tcp = net::ip::tcp;

namespace {

std::filesystem::path numbered(const std::filesystem::path& base, std::uint64_t n) {
  auto p = base;
  p.replace_filename(base.stem().string() + "-" + std::to_string(n) + base.extension().string());
  return p;
}

models::MotionModel load_model(const std::string& bytes) {
  std::istringstream in(bytes);
  return models::read_checkpoint(in);
}

}  // namespace

struct Server::Impl {
  explicit Impl(ServerConfig c) : config(std::move(c)), acceptor(ioc) {}

  ServerConfig config;
  net::io_context ioc{1};
  tcp::acceptor acceptor;
  std::atomic<bool> stopping{false};
  std::mutex threads_mutex;
  std::vector<std::thread> loops;

  std::atomic<std::uint64_t> connections{0};
  std::atomic<std::uint64_t> frames_sent{0};
  std::atomic<std::uint64_t> frames_dropped{0};
  std::atomic<std::uint64_t> overruns{0};
  std::atomic<std::uint64_t> errors_sent{0};

  void accept();
};

namespace {

class Connection : public std::enable_shared_from_this<Connection> {
 public:
  Connection(tcp::socket socket, Server::Impl& server, std::uint64_t id)
      : ws_(std::move(socket)),
        server_(server),
        id_(id),
        queue_(server.config.queue_capacity),
        model_(load_model(server.config.checkpoint)) {}

  void start() {
    net::dispatch(ws_.get_executor(), [self = shared_from_this()] {
      self->ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
      self->ws_.async_accept([self](beast::error_code ec) { self->on_accept(ec); });
    });
  }

 private:
  void on_accept(beast::error_code ec) {
    if (ec) {
      open_ = false;
      return;
    }
    send(hello_message(model_, server_.config.fps).dump(), false);
    read();
    std::lock_guard lock(server_.threads_mutex);
    server_.loops.emplace_back([self = shared_from_this()] { self->generate(); });
  }

  void read() {
    ws_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) { self->on_read(ec); });
  }

  void on_read(beast::error_code ec) {
    if (ec) {
      open_ = false;
      return;
    }
    const std::string text = beast::buffers_to_string(buffer_.data());
    buffer_.consume(buffer_.size());
    try {
      ClientMessage msg = parse_client_message(text, model_.styles().size());
      if (server_.config.replay) {
        send(error_message("replay_mode", "session is replaying a recording; input ignored").dump(), false);
      } else {
        mailbox_.post(std::move(msg));
      }
    } catch (const ProtocolError& e) {
      send(error_message(e.code(), e.what()).dump(), false);
    }
    read();
  }

  /// Queues a message from any thread.
  void send(std::string text, bool droppable) {
    net::post(ws_.get_executor(), [self = shared_from_this(), text = std::move(text), droppable]() mutable {
      const std::size_t before = self->queue_.dropped();
      self->queue_.push(std::move(text), droppable);
      self->server_.frames_dropped += self->queue_.dropped() - before;
      if (!self->writing_) {
        self->write();
      }
    });
  }

  void write() {
    auto next = queue_.pop();
    if (!next || !open_) {
      writing_ = false;
      return;
    }
    writing_ = true;
    current_ = std::move(*next);
    ws_.text(true);
    ws_.async_write(net::buffer(current_), [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) {
        self->open_ = false;
        self->writing_ = false;
        return;
      }
      if (self->current_.find(R"("type":"frame")") != std::string::npos) {
        ++self->server_.frames_sent;
      } else if (self->current_.find(R"("type":"error")") != std::string::npos) {
        ++self->server_.errors_sent;
      }
      self->write();
    });
  }

  void close() {
    net::post(ws_.get_executor(), [self = shared_from_this()] {
      self->ws_.async_close(websocket::close_code::normal, [self](beast::error_code) { self->open_ = false; });
    });
  }

  /// Generation loop; owns the session exclusively.
  void generate() {
    const auto& cfg = server_.config;
    ServerSession session(model_, {cfg.fps, cfg.trajectory_blend}, cfg.replay ? cfg.replay->seed : cfg.seed);
    std::ofstream record;
    if (cfg.record && !cfg.replay) {
      record.open(numbered(*cfg.record, id_));
      if (record) {
        session.record_to(record);
      } else {
        std::clog << "serve: cannot write recording " << numbered(*cfg.record, id_) << '\n';
      }
    }
    using clock = std::chrono::steady_clock;
    const auto period = std::chrono::duration_cast<clock::duration>(std::chrono::duration<double>(1.0 / cfg.fps));
    auto due = clock::now() + period;
    std::uint64_t overruns = 0;
    while (open_ && !server_.stopping) {
      PendingInput input;
      if (cfg.replay) {
        if (session.ticks() >= cfg.replay->ticks) {
          break;
        }
        const auto it = cfg.replay->inputs.find(session.ticks());
        if (it != cfg.replay->inputs.end()) {
          input = it->second;
        }
      } else {
        input = mailbox_.take();
      }
      std::vector<nlohmann::json> messages;
      try {
        messages = session.tick(input, overruns);
      } catch (const std::exception& e) {
        send(error_message("internal", e.what()).dump(), false);
        break;
      }
      const auto now = clock::now();
      if (now > due) {
        ++overruns;
        ++server_.overruns;
        messages.back()["overrun_count"] = overruns;
        if (now - due > period) {
          due = now;
        }
      } else {
        std::this_thread::sleep_until(due);
      }
      due += period;
      for (auto& m : messages) {
        const bool frame = m["type"] == "frame";
        send(m.dump(), frame);
      }
    }
    session.finish_recording();
    if (cfg.replay && open_) {
      close();
    }
  }

  websocket::stream<beast::tcp_stream> ws_;
  Server::Impl& server_;
  std::uint64_t id_;
  beast::flat_buffer buffer_;
  DropOldestQueue queue_;
  std::string current_;
  bool writing_ = false;
  std::atomic<bool> open_{true};
  ControlMailbox mailbox_;
  models::MotionModel model_;
};

}  // namespace

void Server::Impl::accept() {
  acceptor.async_accept(net::make_strand(ioc), [this](beast::error_code ec, tcp::socket socket) {
    if (ec) {
      if (!stopping) {
        accept();
      }
      return;
    }
    try {
      std::make_shared<Connection>(std::move(socket), *this, connections++)->start();
    } catch (const std::exception& e) {
      std::clog << "serve: connection rejected: " << e.what() << '\n';
    }
    accept();
  });
}

Server::Server(ServerConfig config) : impl_(std::make_unique<Impl>(std::move(config))) {
  const auto& c = impl_->config;
  if (!(c.fps > 0.0) || c.queue_capacity == 0) {
    throw ConfigError("serve needs fps > 0 and a positive queue capacity");
  }
  const models::MotionModel probe = load_model(c.checkpoint);
  if (c.replay && c.replay->styles != probe.styles()) {
    throw ConfigError("recording style vocabulary does not match the checkpoint");
  }
  beast::error_code ec;
  const auto address = net::ip::make_address(c.address, ec);
  if (ec) {
    throw ConfigError("invalid bind address '" + c.address + "'");
  }
  const tcp::endpoint endpoint(address, c.port);
  impl_->acceptor.open(endpoint.protocol(), ec);
  if (!ec) {
    impl_->acceptor.set_option(net::socket_base::reuse_address(true), ec);
  }
  if (!ec) {
    impl_->acceptor.bind(endpoint, ec);
  }
  if (!ec) {
    impl_->acceptor.listen(net::socket_base::max_listen_connections, ec);
  }
  if (ec) {
    throw ConfigError("cannot listen on " + c.address + ":" + std::to_string(c.port) + ": " + ec.message());
  }
  impl_->accept();
}

Server::~Server() {
  stop();
  std::lock_guard lock(impl_->threads_mutex);
  for (auto& t : impl_->loops) {
    if (t.joinable()) {
      t.join();
    }
  }
}

unsigned short Server::port() const { return impl_->acceptor.local_endpoint().port(); }

void Server::run() {
  impl_->ioc.run();
  impl_->stopping = true;
  std::vector<std::thread> loops;
  {
    std::lock_guard lock(impl_->threads_mutex);
    loops.swap(impl_->loops);
  }
  for (auto& t : loops) {
    t.join();
  }
}

void Server::stop() {
  impl_->stopping = true;
  net::post(impl_->ioc, [impl = impl_.get()] {
    beast::error_code ec;
    impl->acceptor.close(ec);
    impl->ioc.stop();
  });
}

ServerStats Server::stats() const {
  return {impl_->connections, impl_->frames_sent, impl_->frames_dropped, impl_->overruns, impl_->errors_sent};
}

}  // namespace mstyle::runtime
