/**
 * @file server.hpp
 * @brief Sandbox server: pipeline loop steered by WebSocket clients.
 *
 * GET /ws upgrades to a WebSocket. Clients send PoseCommand text frames and
 * receive one TickMessage per tick; a malformed command gets an error
 * message back and changes nothing. Any other GET serves files below the
 * static root (index.html for /).
 *
 * The pipeline keeps ticking with no client connected. Tick messages reach
 * clients through a drop-oldest channel, and every client has its own short
 * drop-oldest send queue, so a slow client never stalls the loop.
 */

#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>

#include "palmpipe/pipeline.hpp"
#include "palmpipe/wire.hpp"

namespace palmpipe::server {

struct ServeOptions {
  std::string host = "127.0.0.1";
  unsigned short port = 8080;  // 0 picks a free port
  std::filesystem::path static_root = "sandbox_ui/dist";
  std::uint64_t seed = 0;
  SimConfig sim;
  PipelineConfig pipeline;
  std::size_t client_queue = 8;
};

class SandboxServer {
 public:
  SandboxServer(ServeOptions opts, std::shared_ptr<const cnn::ModelParams> model);
  ~SandboxServer();
  SandboxServer(const SandboxServer&) = delete;
  SandboxServer& operator=(const SandboxServer&) = delete;

  /// Binds and starts the network and pipeline threads. Throws
  /// std::runtime_error when the address cannot be bound (port in use).
  void start();
  void stop();
  /// Blocks until SIGINT/SIGTERM, then stops.
  void wait_for_signal();

  unsigned short port() const;
  std::uint64_t ticks() const;
  std::size_t clients() const;
  wire::PoseCommand pose() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace palmpipe::server
