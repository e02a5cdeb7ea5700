#include "server.hpp"

#include <csignal>
#include <deque>
#include <fstream>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>
#include <unordered_set>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>
#include <spdlog/spdlog.h>

namespace palmpipe::server {

namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;

namespace {

using Message = std::shared_ptr<const std::string>;
using Request = http::request<http::string_body>;
using Response = http::response<http::string_body>;

constexpr std::string_view kFallbackPage =
    "<!doctype html><html><head><meta charset=\"utf-8\"><title>palmpipe</title></head>"
    "<body><p>The sandbox UI is not built. The tick stream is live at <code>/ws</code>.</p></body></html>";

std::string_view mime_type(const std::filesystem::path& p) {
  const auto ext = p.extension().string();
  if (ext == ".html" || ext == ".htm") return "text/html; charset=utf-8";
  if (ext == ".js" || ext == ".mjs") return "text/javascript; charset=utf-8";
  if (ext == ".css") return "text/css; charset=utf-8";
  if (ext == ".json" || ext == ".map") return "application/json";
  if (ext == ".svg") return "image/svg+xml";
  if (ext == ".png") return "image/png";
  if (ext == ".ico") return "image/x-icon";
  if (ext == ".wasm") return "application/wasm";
  return "application/octet-stream";
}

class WsSession;

class Core {
 public:
  Core(ServeOptions o, std::shared_ptr<const cnn::ModelParams> m) : opts(std::move(o)), model(std::move(m)) {}

  // Handlers destroyed with the io_context still reach these, so they are
  // declared before it and outlive it.
  ServeOptions opts;
  std::shared_ptr<const cnn::ModelParams> model;
  std::unordered_set<WsSession*> sessions;
  std::atomic<std::size_t> client_count{0};
  mutable std::mutex pose_mu;
  wire::PoseCommand pose;
  BoundedChannel<Message> outbox{4};
  std::atomic<std::uint64_t> ticks{0};
  std::atomic<bool> stop_flag{false};
  unsigned short bound_port = 0;

  net::io_context ioc{1};
  tcp::acceptor acceptor{ioc};
  std::thread io_thread;
  std::thread loop_thread;
  bool running = false;

  wire::PoseCommand current_pose() const {
    std::lock_guard lock(pose_mu);
    return pose;
  }

  /// Empty on success, otherwise the error message to send back.
  std::optional<std::string> handle_command(std::string_view text) {
    auto parsed = wire::parse_pose_command(text);
    if (auto* err = std::get_if<wire::ParseError>(&parsed)) return wire::error_message(err->message).dump();
    const auto& cmd = std::get<wire::PoseCommand>(parsed);
    if (cmd.mode.is_masked() && !model) {
      return wire::error_message("masked mode needs a checkpoint (start serve with --ckpt)").dump();
    }
    std::lock_guard lock(pose_mu);
    pose = cmd;
    return std::nullopt;
  }

  void add(WsSession* s) {
    sessions.insert(s);
    client_count = sessions.size();
  }
  void remove(WsSession* s) {
    sessions.erase(s);
    client_count = sessions.size();
  }

  void drain();
  Response static_response(const Request& req) const;
  void accept();
  void pipeline_loop();
};

class WsSession : public std::enable_shared_from_this<WsSession> {
 public:
  WsSession(tcp::socket&& socket, Core& core) : ws_(std::move(socket)), core_(core) {}
  ~WsSession() {
    if (registered_) core_.remove(this);
  }

  void run(Request req) {
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.async_accept(req, beast::bind_front_handler(&WsSession::on_accept, shared_from_this()));
  }

  void send(Message m) {
    if (dead_) return;
    if (queue_.size() >= std::max<std::size_t>(core_.opts.client_queue, 2)) {
      // The front element may be mid-write; drop the oldest one behind it.
      queue_.erase(writing_ ? queue_.begin() + 1 : queue_.begin());
    }
    queue_.push_back(std::move(m));
    if (!writing_) do_write();
  }

 private:
  void on_accept(beast::error_code ec) {
    if (ec) return;
    registered_ = true;
    core_.add(this);
    spdlog::info("client connected ({} total)", core_.sessions.size());
    do_read();
  }

  void do_read() { ws_.async_read(buffer_, beast::bind_front_handler(&WsSession::on_read, shared_from_this())); }

  void on_read(beast::error_code ec, std::size_t) {
    if (ec) {
      dead_ = true;
      queue_.clear();
      if (ec != websocket::error::closed) spdlog::debug("client read ended: {}", ec.message());
      return;
    }
    const std::string text = beast::buffers_to_string(buffer_.data());
    buffer_.consume(buffer_.size());
    if (auto err = core_.handle_command(text)) {
      spdlog::warn("rejected client message: {}", *err);
      send(std::make_shared<const std::string>(std::move(*err)));
    }
    do_read();
  }

  void do_write() {
    writing_ = true;
    ws_.text(true);
    ws_.async_write(net::buffer(*queue_.front()),
                    beast::bind_front_handler(&WsSession::on_write, shared_from_this()));
  }

  void on_write(beast::error_code ec, std::size_t) {
    writing_ = false;
    if (ec) {
      dead_ = true;
      queue_.clear();
      return;
    }
    queue_.pop_front();
    if (!queue_.empty()) do_write();
  }

  websocket::stream<beast::tcp_stream> ws_;
  Core& core_;
  beast::flat_buffer buffer_;
  std::deque<Message> queue_;
  bool writing_ = false;
  bool dead_ = false;
  bool registered_ = false;
};

class HttpSession : public std::enable_shared_from_this<HttpSession> {
 public:
  HttpSession(tcp::socket&& socket, Core& core) : stream_(std::move(socket)), core_(core) {}

  void run() { do_read(); }

 private:
  void do_read() {
    req_ = {};
    stream_.expires_after(std::chrono::seconds(30));
    http::async_read(stream_, buffer_, req_, beast::bind_front_handler(&HttpSession::on_read, shared_from_this()));
  }

  void on_read(beast::error_code ec, std::size_t) {
    if (ec == http::error::end_of_stream) {
      stream_.socket().shutdown(tcp::socket::shutdown_send, ec);
      return;
    }
    if (ec) return;
    if (websocket::is_upgrade(req_) && req_.target() == "/ws") {
      stream_.expires_never();
      std::make_shared<WsSession>(stream_.release_socket(), core_)->run(std::move(req_));
      return;
    }
    write(core_.static_response(req_));
  }

  void write(Response&& res) {
    auto sp = std::make_shared<Response>(std::move(res));
    http::async_write(stream_, *sp, [self = shared_from_this(), sp](beast::error_code ec, std::size_t) {
      if (ec) return;
      if (sp->need_eof()) {
        self->stream_.socket().shutdown(tcp::socket::shutdown_send, ec);
        return;
      }
      self->do_read();
    });
  }

  beast::tcp_stream stream_;
  Core& core_;
  beast::flat_buffer buffer_;
  Request req_;
};

void Core::drain() {
  while (auto m = outbox.try_pop()) {
    // Copy: a failed send may end a session while we iterate.
    const std::vector<WsSession*> targets(sessions.begin(), sessions.end());
    for (WsSession* s : targets) s->send(*m);
  }
}

Response Core::static_response(const Request& req) const {
  auto reply = [&](http::status status, std::string body, std::string_view type) {
    Response res{status, req.version()};
    res.set(http::field::server, "palmpipe");
    res.set(http::field::content_type, beast::string_view(type.data(), type.size()));
    res.keep_alive(req.keep_alive());
    res.body() = std::move(body);
    res.prepare_payload();
    if (req.method() == http::verb::head) res.body().clear();
    return res;
  };
  if (req.method() != http::verb::get && req.method() != http::verb::head) {
    return reply(http::status::method_not_allowed, "method not allowed\n", "text/plain");
  }
  std::string target(req.target());
  target = target.substr(0, target.find('?'));
  if (target.empty() || target.front() != '/' || target.find("..") != std::string::npos) {
    return reply(http::status::bad_request, "bad path\n", "text/plain");
  }
  if (target.back() == '/') target += "index.html";
  const std::filesystem::path file = opts.static_root / target.substr(1);
  std::ifstream in(file, std::ios::binary);
  if (in && std::filesystem::is_regular_file(file)) {
    std::ostringstream body;
    body << in.rdbuf();
    return reply(http::status::ok, std::move(body).str(), mime_type(file));
  }
  if (target == "/index.html") return reply(http::status::ok, std::string(kFallbackPage), "text/html; charset=utf-8");
  return reply(http::status::not_found, "not found\n", "text/plain");
}

void Core::accept() {
  acceptor.async_accept([this](beast::error_code ec, tcp::socket socket) {
    if (ec) {
      if (ec != net::error::operation_aborted) spdlog::warn("accept failed: {}", ec.message());
      if (!acceptor.is_open()) return;
    } else {
      std::make_shared<HttpSession>(std::move(socket), *this)->run();
    }
    accept();
  });
}

void Core::pipeline_loop() {
  try {
    Pipeline pipeline(opts.pipeline, model);
    SyntheticSource source(opts.sim, opts.seed, kSensorRateHz, [this](std::uint64_t) {
      const auto p = current_pose();
      return Pose{p.angle, p.position, p.grip_step};
    });
    RunOptions ro;
    ro.duration_s = std::numeric_limits<double>::infinity();
    ro.stop = &stop_flag;
    ro.mode_provider = [this] { return current_pose().mode; };
    const auto report = run(pipeline, source, PipelineMode::direct(), [this](const TickSnapshot& snap) {
      ++ticks;
      if (client_count.load() == 0) return;
      outbox.push(std::make_shared<const std::string>(wire::tick_message(snap).dump()));
      net::post(ioc, [this] { drain(); });
    }, ro);
    spdlog::info("pipeline stopped after {} ticks ({} overruns)", report.ticks, report.overruns);
  } catch (const std::exception& e) {
    spdlog::error("pipeline loop failed: {}", e.what());
  }
}

}  // namespace

struct SandboxServer::Impl : Core {
  using Core::Core;
};

SandboxServer::SandboxServer(ServeOptions opts, std::shared_ptr<const cnn::ModelParams> model)
    : impl_(std::make_unique<Impl>(std::move(opts), std::move(model))) {
  impl_->opts.sim.validate();
  if (!impl_->model) impl_->pose.mode = PipelineMode::direct();
}

SandboxServer::~SandboxServer() { stop(); }

void SandboxServer::start() {
  auto& c = *impl_;
  if (c.running) return;
  beast::error_code ec;
  const auto address = net::ip::make_address(c.opts.host, ec);
  if (ec) throw std::runtime_error("bad listen address " + c.opts.host + ": " + ec.message());
  const tcp::endpoint endpoint{address, c.opts.port};
  const std::string where = c.opts.host + ":" + std::to_string(c.opts.port);
  c.acceptor.open(endpoint.protocol(), ec);
  if (!ec) c.acceptor.set_option(net::socket_base::reuse_address(true), ec);
  if (!ec) c.acceptor.bind(endpoint, ec);
  if (!ec) c.acceptor.listen(net::socket_base::max_listen_connections, ec);
  if (ec) {
    beast::error_code ignored;
    c.acceptor.close(ignored);
    throw std::runtime_error("cannot listen on " + where + ": " + ec.message());
  }
  c.bound_port = c.acceptor.local_endpoint().port();
  c.accept();
  c.stop_flag = false;
  c.running = true;
  c.io_thread = std::thread([&c] { c.ioc.run(); });
  c.loop_thread = std::thread([&c] { c.pipeline_loop(); });
  spdlog::info("serving on http://{}:{} (ws at /ws, static files from {})", c.opts.host, c.bound_port,
               c.opts.static_root.string());
}

void SandboxServer::stop() {
  auto& c = *impl_;
  if (!c.running) return;
  c.stop_flag = true;
  if (c.loop_thread.joinable()) c.loop_thread.join();
  net::post(c.ioc, [&c] {
    beast::error_code ignored;
    c.acceptor.close(ignored);
  });
  c.ioc.stop();
  if (c.io_thread.joinable()) c.io_thread.join();
  c.running = false;
}

void SandboxServer::wait_for_signal() {
  net::io_context sig;
  net::signal_set signals(sig, SIGINT, SIGTERM);
  signals.async_wait([](const beast::error_code&, int signo) { spdlog::info("signal {} received, stopping", signo); });
  sig.run();
  stop();
}

unsigned short SandboxServer::port() const { return impl_->bound_port; }
std::uint64_t SandboxServer::ticks() const { return impl_->ticks.load(); }
std::size_t SandboxServer::clients() const { return impl_->client_count.load(); }
wire::PoseCommand SandboxServer::pose() const { return impl_->current_pose(); }

}  // namespace palmpipe::server
