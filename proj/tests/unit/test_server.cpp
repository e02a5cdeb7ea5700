#include "doctest.h"

#include <boost/asio/connect.hpp>
#include <boost/asio/ip/tcp.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <random>
#include <thread>

#include "server.hpp"

namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;
using namespace palmpipe;
using palmpipe::wire::Json;

namespace {

struct StaticDir {
  std::filesystem::path path;
  StaticDir() {
    std::random_device rd;
    path = std::filesystem::temp_directory_path() / ("palmpipe_static_" + std::to_string(rd()));
    std::filesystem::create_directories(path / "assets");
    std::ofstream(path / "index.html") << "<!doctype html><title>sandbox</title>";
    std::ofstream(path / "assets" / "app.js") << "console.log(1);";
  }
  ~StaticDir() { std::filesystem::remove_all(path); }
};

server::ServeOptions options(const std::filesystem::path& root) {
  server::ServeOptions o;
  o.port = 0;
  o.static_root = root;
  return o;
}

http::response<http::string_body> get(unsigned short port, const std::string& target) {
  net::io_context ioc;
  tcp::socket sock(ioc);
  sock.connect({net::ip::make_address("127.0.0.1"), port});
  http::request<http::string_body> req{http::verb::get, target, 11};
  req.set(http::field::host, "localhost");
  http::write(sock, req);
  beast::flat_buffer buf;
  http::response<http::string_body> res;
  http::read(sock, buf, res);
  return res;
}

class Client {
 public:
  explicit Client(unsigned short port) : ws_(ioc_) {
    ws_.next_layer().connect({net::ip::make_address("127.0.0.1"), port});
    ws_.handshake("localhost", "/ws");
  }
  Json read() {
    beast::flat_buffer buf;
    ws_.read(buf);
    return Json::parse(beast::buffers_to_string(buf.data()));
  }
  void send(const std::string& text) { ws_.write(net::buffer(text)); }
  void close() { ws_.close(websocket::close_code::normal); }

 private:
  net::io_context ioc_;
  websocket::stream<tcp::socket> ws_;
};

template <class Pred>
bool eventually(Pred pred, double seconds = 2.0) {
  const auto end = std::chrono::steady_clock::now() + std::chrono::duration<double>(seconds);
  while (std::chrono::steady_clock::now() < end) {
    if (pred()) return true;
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }
  return pred();
}

std::string pose_json(const char* mode, int angle = 45, const char* position = "right") {
  return Json{{"type", "set_pose"}, {"angle_deg", angle}, {"position", position}, {"grip_step", 30}, {"mode", mode}}
      .dump();
}

}  // namespace

TEST_CASE("static assets") {
  StaticDir dir;
  server::SandboxServer srv(options(dir.path), nullptr);
  srv.start();
  REQUIRE(srv.port() != 0);

  auto root = get(srv.port(), "/");
  CHECK(root.result() == http::status::ok);
  CHECK(root.body().find("sandbox") != std::string::npos);
  CHECK(root[http::field::content_type].starts_with("text/html"));

  auto js = get(srv.port(), "/assets/app.js");
  CHECK(js.result() == http::status::ok);
  CHECK(js[http::field::content_type].starts_with("text/javascript"));

  CHECK(get(srv.port(), "/nope.css").result() == http::status::not_found);
  CHECK(get(srv.port(), "/../secret").result() == http::status::bad_request);
  srv.stop();
}

TEST_CASE("built-in page when the UI is not built") {
  server::SandboxServer srv(options("/nonexistent/dist"), nullptr);
  srv.start();
  auto root = get(srv.port(), "/");
  CHECK(root.result() == http::status::ok);
  CHECK(root.body().find("/ws") != std::string::npos);
  srv.stop();
}

TEST_CASE("pipeline ticks with no client connected") {
  server::SandboxServer srv(options("/nonexistent"), nullptr);
  srv.start();
  CHECK(srv.clients() == 0);
  CHECK(eventually([&] { return srv.ticks() >= 20; }));
  srv.stop();
  const auto after = srv.ticks();
  std::this_thread::sleep_for(std::chrono::milliseconds(50));
  CHECK(srv.ticks() == after);
}

TEST_CASE("tick stream follows pose commands") {
  auto model = std::make_shared<cnn::ModelParams>(cnn::init_params({}, 1));
  server::SandboxServer srv(options("/nonexistent"), model);
  srv.start();
  Client c(srv.port());
  CHECK(eventually([&] { return srv.clients() == 1; }));

  Json first = c.read();
  CHECK(first["type"] == "tick");
  CHECK(first["mask"].is_null());
  CHECK(first["prediction"].is_null());
  const auto tick0 = first["tick"].get<std::uint64_t>();
  CHECK(c.read()["tick"].get<std::uint64_t>() > tick0);

  const auto sent_at = srv.ticks();
  c.send(pose_json("masked"));
  std::uint64_t first_masked = 0;
  for (int i = 0; i < 30; ++i) {
    const Json m = c.read();
    if (m["type"] == "tick" && !m["mask"].is_null()) {
      first_masked = m["tick"].get<std::uint64_t>();
      CHECK(m["prediction"].is_object());
      break;
    }
  }
  REQUIRE(first_masked > 0);
  CHECK(first_masked <= sent_at + 2);
  CHECK(srv.pose().angle == AngleClass::Deg45);
  CHECK(srv.pose().position == PositionClass::Right);

  c.send(pose_json("direct", 90, "center"));
  CHECK(eventually([&] { return srv.pose().mode == PipelineMode::direct(); }));
  CHECK(srv.pose().angle == AngleClass::Deg90);
  c.close();
  CHECK(eventually([&] { return srv.clients() == 0; }));
  srv.stop();
}

TEST_CASE("invalid messages get an error and change nothing") {
  server::SandboxServer srv(options("/nonexistent"), nullptr);
  srv.start();
  Client c(srv.port());
  const auto before = srv.pose();

  auto next_error = [&] {
    for (int i = 0; i < 60; ++i) {
      Json m = c.read();
      if (m["type"] == "error") return m;
    }
    return Json();
  };
  c.send("not json");
  CHECK(next_error()["message"].get<std::string>().find("JSON") != std::string::npos);
  c.send(pose_json("direct", 30));
  CHECK(next_error()["message"].get<std::string>().find("angle_deg") != std::string::npos);
  c.send(pose_json("masked"));
  CHECK(next_error()["message"].get<std::string>().find("checkpoint") != std::string::npos);
  CHECK(srv.pose() == before);

  // The stream keeps flowing afterwards.
  const auto t = c.read()["tick"].get<std::uint64_t>();
  CHECK(c.read()["tick"].get<std::uint64_t>() > t);
  c.close();
  srv.stop();
}

TEST_CASE("two clients both receive ticks") {
  server::SandboxServer srv(options("/nonexistent"), nullptr);
  srv.start();
  Client a(srv.port()), b(srv.port());
  CHECK(eventually([&] { return srv.clients() == 2; }));
  CHECK(a.read()["type"] == "tick");
  CHECK(b.read()["type"] == "tick");
  a.close();
  b.close();
  srv.stop();
}

TEST_CASE("port in use") {
  server::SandboxServer first(options("/nonexistent"), nullptr);
  first.start();
  auto o = options("/nonexistent");
  o.port = first.port();
  server::SandboxServer second(o, nullptr);
  CHECK_THROWS_AS(second.start(), std::runtime_error);
  first.stop();
}
