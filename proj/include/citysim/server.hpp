#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "citysim/task_io.hpp"

namespace citysim {

enum class ClockMode : std::uint8_t { fast, realtime };
std::string_view clock_mode_name(ClockMode m);
ClockMode clock_mode_from_name(std::string_view s);

struct ServerConfig {
  std::string host = "127.0.0.1";
  int port = 7878;  // 0 picks a free port
  ClockMode mode = ClockMode::fast;
  double tick_rate = 60.0;  // world ticks per wall second in realtime mode
  std::optional<double> position_tolerance;  // overrides task goals when set
  std::optional<double> heading_tolerance;
  std::filesystem::path map;   // optional; checked against the task's map hash
  std::filesystem::path task;  // loaded at startup when set
  std::filesystem::path log_dir;  // episode logs written here on episode end
  std::size_t max_line = 1 << 20;
  EnvConfig env;
};

Json to_json(const ServerConfig& c);
/// Overrides the fields present in `j`. Throws ConfigError.
ServerConfig server_config_from(const Json& j, ServerConfig base = {});

using EnvLookup = std::function<const char*(const char*)>;
/// Defaults, then the config file if given, then CITYSIM_HOST, CITYSIM_PORT,
/// CITYSIM_MODE, CITYSIM_TICK_RATE, CITYSIM_POSITION_TOLERANCE,
/// CITYSIM_HEADING_TOLERANCE, CITYSIM_MAP, CITYSIM_TASK, CITYSIM_LOG_DIR.
ServerConfig load_server_config(const std::optional<std::filesystem::path>& file, const EnvLookup& env);

/// Protocol state shared by every connection: one map, one active task, one
/// episode. Requests are handled under a single lock; in realtime mode a
/// clock thread polls the buffer, in fast mode polls happen on request.
class Session {
 public:
  explicit Session(ServerConfig config);
  ~Session();
  Session(const Session&) = delete;
  Session& operator=(const Session&) = delete;

  /// Exactly one response per request; errors come back as
  /// {"status":"error","error":{"code","message"}} and change nothing.
  Json handle(const Json& request);
  Json handle_line(std::string_view line);

  /// Starts the realtime clock thread (no-op in fast mode).
  void start_clock();
  void stop_clock();

  const ServerConfig& config() const { return config_; }

 private:
  using Lock = std::unique_lock<std::mutex>;

  Json dispatch(const std::string& op, const Json& req, Lock& lock);
  Json op_reset(const Json& req);
  Json op_observe(std::uint32_t agent);
  Json op_step(std::uint32_t agent, const RobotAction& action, Lock& lock);
  Json op_submit(std::uint32_t agent, const RobotAction& action);
  Json op_tick(const Json& req);
  Json op_wait(std::uint32_t agent, Lock& lock);
  Json op_info() const;
  Json op_snapshot() const;
  Json op_transcript(const Json& req) const;
  Json op_replay(const Json& req) const;

  void load(TaskFile task, std::optional<CityMap> map);
  void restart();
  Episode& episode();
  std::uint32_t agent_of(const Json& req) const;
  void submit(std::uint32_t agent, const RobotAction& action);
  void poll_once();
  Json agent_payload(std::uint32_t agent) const;
  Json completion_payload(const LogRecord& r);
  std::string status_text() const;
  Transcript transcript() const;
  void flush_log();
  void clock_loop();

  ServerConfig config_;
  std::mutex m_;
  std::condition_variable changed_;
  std::unique_ptr<CityMap> map_;
  std::optional<TaskFile> task_;
  std::unique_ptr<Episode> ep_;
  std::uint64_t serial_ = 0;  // bumps on every reset
  std::vector<TranscriptEntry> entries_;
  std::vector<std::uint64_t> completed_;  // per agent completion count
  std::vector<std::optional<LogRecord>> last_;
  bool flushed_ = false;
  std::thread clock_;
  bool stopping_ = false;
};

/// TCP listener speaking JSON lines, or WebSocket text frames when a
/// connection opens with an HTTP upgrade request.
class Server {
 public:
  explicit Server(Session& session);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  /// Binds and starts accepting (BindError on failure).
  void start();
  int port() const { return port_; }
  void stop();
  /// Blocks until stop() is called from another thread.
  void wait();

 private:
  struct Connection {
    int fd = -1;
    std::thread thread;
    std::atomic<bool> done{false};
  };

  void accept_loop();
  void serve(Connection& c);
  void serve_lines(int fd, std::string pending);
  void serve_websocket(int fd, std::string pending);
  void reap(bool all);

  Session& session_;
  int listen_fd_ = -1;
  int port_ = 0;
  std::thread acceptor_;
  std::mutex m_;
  std::condition_variable stopped_cv_;
  bool stopped_ = false;
  std::vector<std::unique_ptr<Connection>> connections_;
};

// WebSocket framing, exposed for tests and clients.
std::string websocket_accept_key(std::string_view client_key);

enum class WsOpcode : std::uint8_t { continuation = 0, text = 1, binary = 2, close = 8, ping = 9, pong = 10 };

struct WsFrame {
  bool fin = true;
  WsOpcode opcode = WsOpcode::text;
  std::string payload;
};

/// Removes one complete frame from the front of `buffer`, or returns nullopt
/// if more bytes are needed. Throws BadRequest on malformed or oversized
/// frames, or when `require_mask` is set and the frame is unmasked.
std::optional<WsFrame> ws_decode(std::string& buffer, bool require_mask, std::size_t max_payload);
std::string ws_encode(const WsFrame& frame, std::optional<std::uint32_t> mask = std::nullopt);

/// Minimal blocking client used by tests and the CLI.
class Client {
 public:
  Client(const std::string& host, int port, bool websocket = false);
  ~Client();
  Client(const Client&) = delete;
  Client& operator=(const Client&) = delete;

  void send_raw(std::string_view bytes);
  Json request(const Json& req);
  /// Sends one line (JSON-lines) or one text frame, returns the response text.
  std::string exchange(std::string_view text);

 private:
  std::string read_message();

  int fd_ = -1;
  bool websocket_ = false;
  std::string buffer_;
  std::uint32_t mask_ = 0x12345678;
};

}  // namespace citysim
