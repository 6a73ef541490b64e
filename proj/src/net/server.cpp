#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <openssl/evp.h>
#include <openssl/sha.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <cctype>
#include <cstring>

#include "citysim/error.hpp"
#include "citysim/server.hpp"

namespace citysim {

namespace {

constexpr std::string_view kWsGuid = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11";
constexpr std::size_t kMaxHeader = 16 * 1024;

[[noreturn]] void bad_request(const std::string& what) { throw Error(ErrorCode::bad_request, what); }

bool send_all(int fd, std::string_view data) {
  while (!data.empty()) {
    const ssize_t n = ::send(fd, data.data(), data.size(), MSG_NOSIGNAL);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) return false;
    data.remove_prefix(static_cast<std::size_t>(n));
  }
  return true;
}

// Appends whatever arrives; false on EOF or error.
bool recv_some(int fd, std::string& buffer) {
  char chunk[16384];
  for (;;) {
    const ssize_t n = ::recv(fd, chunk, sizeof chunk, 0);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) return false;
    buffer.append(chunk, static_cast<std::size_t>(n));
    return true;
  }
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

std::string trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return std::string(s);
}

// Header value by case-insensitive name, empty if absent.
std::string header(std::string_view request, std::string_view name) {
  const std::string want = lower(std::string(name));
  std::size_t pos = request.find("\r\n");
  while (pos != std::string_view::npos && pos + 2 < request.size()) {
    const std::size_t start = pos + 2;
    const std::size_t end = request.find("\r\n", start);
    const std::string_view line = request.substr(start, end == std::string_view::npos ? end : end - start);
    const std::size_t colon = line.find(':');
    if (colon != std::string_view::npos && lower(trim(line.substr(0, colon))) == want) {
      return trim(line.substr(colon + 1));
    }
    pos = end;
  }
  return {};
}

std::string error_line(const std::string& message) {
  Json j = {{"status", "error"}, {"error", {{"code", error_code_name(ErrorCode::bad_request)}, {"message", message}}}};
  return j.dump();
}

}  // namespace

std::string websocket_accept_key(std::string_view client_key) {
  const std::string in = std::string(client_key) + std::string(kWsGuid);
  unsigned char digest[SHA_DIGEST_LENGTH];
  SHA1(reinterpret_cast<const unsigned char*>(in.data()), in.size(), digest);
  unsigned char out[4 * ((SHA_DIGEST_LENGTH + 2) / 3) + 1];
  const int n = EVP_EncodeBlock(out, digest, SHA_DIGEST_LENGTH);
  return std::string(reinterpret_cast<const char*>(out), static_cast<std::size_t>(n));
}

std::optional<WsFrame> ws_decode(std::string& buffer, bool require_mask, std::size_t max_payload) {
  if (buffer.size() < 2) return std::nullopt;
  const auto byte = [&](std::size_t i) { return static_cast<std::uint8_t>(buffer[i]); };
  if (byte(0) & 0x70) bad_request("websocket frame uses reserved bits");
  WsFrame f;
  f.fin = (byte(0) & 0x80) != 0;
  const std::uint8_t op = byte(0) & 0x0f;
  if (op != 0 && op != 1 && op != 2 && op != 8 && op != 9 && op != 10) bad_request("unknown websocket opcode");
  f.opcode = static_cast<WsOpcode>(op);
  const bool masked = (byte(1) & 0x80) != 0;
  if (require_mask && !masked) bad_request("client websocket frames must be masked");
  std::uint64_t len = byte(1) & 0x7f;
  std::size_t at = 2;
  if (len == 126) {
    if (buffer.size() < 4) return std::nullopt;
    len = (std::uint64_t{byte(2)} << 8) | byte(3);
    at = 4;
  } else if (len == 127) {
    if (buffer.size() < 10) return std::nullopt;
    len = 0;
    for (int i = 0; i < 8; ++i) len = (len << 8) | byte(2 + static_cast<std::size_t>(i));
    at = 10;
  }
  if (op >= 8 && (len > 125 || !f.fin)) bad_request("malformed websocket control frame");
  if (len > max_payload) bad_request("websocket frame too large");
  std::uint8_t mask[4] = {0, 0, 0, 0};
  if (masked) {
    if (buffer.size() < at + 4) return std::nullopt;
    for (int i = 0; i < 4; ++i) mask[i] = byte(at + static_cast<std::size_t>(i));
    at += 4;
  }
  if (buffer.size() < at + len) return std::nullopt;
  f.payload = buffer.substr(at, static_cast<std::size_t>(len));
  if (masked) {
    for (std::size_t i = 0; i < f.payload.size(); ++i) f.payload[i] = static_cast<char>(f.payload[i] ^ mask[i % 4]);
  }
  buffer.erase(0, at + static_cast<std::size_t>(len));
  return f;
}

std::string ws_encode(const WsFrame& frame, std::optional<std::uint32_t> mask) {
  std::string out;
  out.push_back(static_cast<char>((frame.fin ? 0x80 : 0) | static_cast<std::uint8_t>(frame.opcode)));
  const std::uint8_t mbit = mask ? 0x80 : 0;
  const std::uint64_t len = frame.payload.size();
  if (len < 126) {
    out.push_back(static_cast<char>(mbit | len));
  } else if (len <= 0xffff) {
    out.push_back(static_cast<char>(mbit | 126));
    out.push_back(static_cast<char>(len >> 8));
    out.push_back(static_cast<char>(len & 0xff));
  } else {
    out.push_back(static_cast<char>(mbit | 127));
    for (int i = 7; i >= 0; --i) out.push_back(static_cast<char>((len >> (8 * i)) & 0xff));
  }
  if (!mask) return out + frame.payload;
  const std::uint8_t key[4] = {static_cast<std::uint8_t>(*mask >> 24), static_cast<std::uint8_t>(*mask >> 16),
                               static_cast<std::uint8_t>(*mask >> 8), static_cast<std::uint8_t>(*mask)};
  out.append(reinterpret_cast<const char*>(key), 4);
  for (std::size_t i = 0; i < frame.payload.size(); ++i) out.push_back(static_cast<char>(frame.payload[i] ^ key[i % 4]));
  return out;
}

Server::Server(Session& session) : session_(session) {}

Server::~Server() { stop(); }

void Server::start() {
  const ServerConfig& c = session_.config();
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  hints.ai_flags = AI_PASSIVE;
  addrinfo* res = nullptr;
  const std::string port = std::to_string(c.port);
  if (const int rc = ::getaddrinfo(c.host.c_str(), port.c_str(), &hints, &res); rc != 0) {
    throw Error(ErrorCode::bind_error, "cannot resolve " + c.host + ": " + gai_strerror(rc));
  }
  std::string why = "no usable address";
  for (addrinfo* a = res; a != nullptr; a = a->ai_next) {
    const int fd = ::socket(a->ai_family, a->ai_socktype, a->ai_protocol);
    if (fd < 0) continue;
    const int one = 1;
    ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    if (::bind(fd, a->ai_addr, a->ai_addrlen) == 0 && ::listen(fd, 64) == 0) {
      listen_fd_ = fd;
      break;
    }
    why = std::strerror(errno);
    ::close(fd);
  }
  ::freeaddrinfo(res);
  if (listen_fd_ < 0) throw Error(ErrorCode::bind_error, "cannot listen on " + c.host + ":" + port + ": " + why);
  sockaddr_storage addr{};
  socklen_t len = sizeof addr;
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.ss_family == AF_INET6 ? reinterpret_cast<sockaddr_in6*>(&addr)->sin6_port
                                           : reinterpret_cast<sockaddr_in*>(&addr)->sin_port);
  session_.start_clock();
  acceptor_ = std::thread([this] { accept_loop(); });
}

void Server::stop() {
  {
    std::lock_guard lock(m_);
    if (stopped_ && listen_fd_ < 0) return;
    stopped_ = true;
    if (listen_fd_ >= 0) ::shutdown(listen_fd_, SHUT_RDWR);
    for (auto& c : connections_) ::shutdown(c->fd, SHUT_RDWR);
  }
  stopped_cv_.notify_all();
  if (acceptor_.joinable()) acceptor_.join();
  if (listen_fd_ >= 0) ::close(listen_fd_);
  listen_fd_ = -1;
  session_.stop_clock();  // wakes requests still waiting on the clock
  reap(true);
}

void Server::wait() {
  std::unique_lock lock(m_);
  stopped_cv_.wait(lock, [&] { return stopped_; });
}

void Server::reap(bool all) {
  std::vector<std::unique_ptr<Connection>> dead;
  {
    std::lock_guard lock(m_);
    auto keep = std::partition(connections_.begin(), connections_.end(),
                               [&](const auto& c) { return !all && !c->done.load(); });
    for (auto it = keep; it != connections_.end(); ++it) dead.push_back(std::move(*it));
    connections_.erase(keep, connections_.end());
  }
  for (auto& c : dead) {
    if (c->thread.joinable()) c->thread.join();
    ::close(c->fd);
  }
}

void Server::accept_loop() {
  for (;;) {
    const int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) {
      if (errno == EINTR || errno == ECONNABORTED) continue;
      return;
    }
    const int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    reap(false);
    std::lock_guard lock(m_);
    if (stopped_) {
      ::close(fd);
      return;
    }
    auto c = std::make_unique<Connection>();
    c->fd = fd;
    Connection& ref = *c;
    connections_.push_back(std::move(c));
    ref.thread = std::thread([this, &ref] {
      serve(ref);
      ref.done = true;
    });
  }
}

void Server::serve(Connection& c) {
  std::string pending;
  // Sniff the transport: browsers open with an HTTP upgrade request.
  while (pending.size() < 4) {
    if (!recv_some(c.fd, pending)) return;
    if (pending.find('\n') != std::string::npos) break;
  }
  if (pending.rfind("GET ", 0) == 0) {
    serve_websocket(c.fd, std::move(pending));
  } else {
    serve_lines(c.fd, std::move(pending));
  }
}

void Server::serve_lines(int fd, std::string pending) {
  const std::size_t max_line = session_.config().max_line;
  bool skipping = false;  // inside an oversized line, dropping bytes up to its newline
  for (;;) {
    std::size_t nl;
    while ((nl = pending.find('\n')) != std::string::npos) {
      std::string line = pending.substr(0, nl);
      pending.erase(0, nl + 1);
      if (skipping) {
        skipping = false;
        continue;
      }
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (trim(line).empty()) continue;
      if (!send_all(fd, session_.handle_line(line).dump() + "\n")) return;
    }
    if (pending.size() > max_line) {
      if (!skipping && !send_all(fd, error_line("request line exceeds " + std::to_string(max_line) + " bytes") + "\n")) {
        return;
      }
      skipping = true;
      pending.clear();
    }
    if (!recv_some(fd, pending)) return;
  }
}

void Server::serve_websocket(int fd, std::string pending) {
  std::size_t end;
  while ((end = pending.find("\r\n\r\n")) == std::string::npos) {
    if (pending.size() > kMaxHeader || !recv_some(fd, pending)) return;
  }
  const std::string request = pending.substr(0, end + 2);
  pending.erase(0, end + 4);
  const std::string key = header(request, "Sec-WebSocket-Key");
  if (lower(header(request, "Upgrade")) != "websocket" || key.empty()) {
    send_all(fd, "HTTP/1.1 400 Bad Request\r\nContent-Length: 0\r\nConnection: close\r\n\r\n");
    return;
  }
  if (!send_all(fd, "HTTP/1.1 101 Switching Protocols\r\nUpgrade: websocket\r\nConnection: Upgrade\r\n"
                    "Sec-WebSocket-Accept: " + websocket_accept_key(key) + "\r\n\r\n")) {
    return;
  }
  const std::size_t max_payload = session_.config().max_line;
  std::string message;
  for (;;) {
    std::optional<WsFrame> f;
    try {
      f = ws_decode(pending, true, max_payload);
    } catch (const Error&) {
      send_all(fd, ws_encode({true, WsOpcode::close, std::string("\x03\xea", 2)}));  // 1002 protocol error
      return;
    }
    if (!f) {
      if (!recv_some(fd, pending)) return;
      continue;
    }
    switch (f->opcode) {
      case WsOpcode::close:
        send_all(fd, ws_encode({true, WsOpcode::close, f->payload.substr(0, 2)}));
        return;
      case WsOpcode::ping:
        if (!send_all(fd, ws_encode({true, WsOpcode::pong, f->payload}))) return;
        continue;
      case WsOpcode::pong:
        continue;
      default:
        break;
    }
    message += f->payload;
    if (message.size() > max_payload) {
      if (!send_all(fd, ws_encode({true, WsOpcode::text, error_line("message too large")}))) return;
      message.clear();
      continue;
    }
    if (!f->fin) continue;
    // A frame may carry several newline-separated requests; each gets its own reply frame.
    std::size_t start = 0;
    while (start <= message.size()) {
      std::size_t nl = message.find('\n', start);
      if (nl == std::string::npos) nl = message.size();
      const std::string line = trim(std::string_view(message).substr(start, nl - start));
      start = nl + 1;
      if (line.empty()) continue;
      if (!send_all(fd, ws_encode({true, WsOpcode::text, session_.handle_line(line).dump()}))) return;
    }
    message.clear();
  }
}

Client::Client(const std::string& host, int port, bool websocket) : websocket_(websocket) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (::getaddrinfo(host.c_str(), std::to_string(port).c_str(), &hints, &res) != 0) {
    throw Error(ErrorCode::io_error, "cannot resolve " + host);
  }
  for (addrinfo* a = res; a != nullptr && fd_ < 0; a = a->ai_next) {
    fd_ = ::socket(a->ai_family, a->ai_socktype, a->ai_protocol);
    if (fd_ >= 0 && ::connect(fd_, a->ai_addr, a->ai_addrlen) != 0) {
      ::close(fd_);
      fd_ = -1;
    }
  }
  ::freeaddrinfo(res);
  if (fd_ < 0) throw Error(ErrorCode::io_error, "cannot connect to " + host + ":" + std::to_string(port));
  const int one = 1;
  ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  if (!websocket_) return;
  const std::string key = "dGhlIHNhbXBsZSBub25jZQ==";
  send_raw("GET /ws HTTP/1.1\r\nHost: " + host + "\r\nUpgrade: websocket\r\nConnection: Upgrade\r\n"
           "Sec-WebSocket-Key: " + key + "\r\nSec-WebSocket-Version: 13\r\n\r\n");
  std::size_t end;
  while ((end = buffer_.find("\r\n\r\n")) == std::string::npos) {
    if (!recv_some(fd_, buffer_)) throw Error(ErrorCode::io_error, "connection closed during handshake");
  }
  const std::string reply = buffer_.substr(0, end + 2);
  buffer_.erase(0, end + 4);
  if (reply.rfind("HTTP/1.1 101", 0) != 0 || header(reply, "Sec-WebSocket-Accept") != websocket_accept_key(key)) {
    throw Error(ErrorCode::io_error, "websocket handshake rejected");
  }
}

Client::~Client() {
  if (fd_ >= 0) ::close(fd_);
}

void Client::send_raw(std::string_view bytes) {
  if (!send_all(fd_, bytes)) throw Error(ErrorCode::io_error, "send failed");
}

std::string Client::read_message() {
  for (;;) {
    if (websocket_) {
      if (auto f = ws_decode(buffer_, false, std::size_t{1} << 30)) {
        if (f->opcode == WsOpcode::text) return f->payload;
        if (f->opcode == WsOpcode::close) throw Error(ErrorCode::io_error, "server closed the websocket");
        continue;
      }
    } else if (const std::size_t nl = buffer_.find('\n'); nl != std::string::npos) {
      std::string line = buffer_.substr(0, nl);
      buffer_.erase(0, nl + 1);
      return line;
    }
    if (!recv_some(fd_, buffer_)) throw Error(ErrorCode::io_error, "connection closed");
  }
}

std::string Client::exchange(std::string_view text) {
  if (websocket_) {
    send_raw(ws_encode({true, WsOpcode::text, std::string(text)}, mask_++));
  } else {
    send_raw(std::string(text) + "\n");
  }
  return read_message();
}

Json Client::request(const Json& req) { return Json::parse(exchange(req.dump())); }

}  // namespace citysim
