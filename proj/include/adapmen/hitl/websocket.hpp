#pragma once

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <openssl/evp.h>
#include <openssl/sha.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <cctype>
#include <cerrno>
#include <chrono>
#include <cstdint>
#include <cstring>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>

// Minimal RFC 6455 transport: text frames, fragmentation, ping/pong, close.
// No extensions, no TLS.
namespace adapmen::hitl::ws {

inline constexpr const char* kHandshakeGuid = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11";
inline constexpr std::size_t kMaxMessageBytes = 1 << 20;

class SocketError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline std::string base64(const unsigned char* data, std::size_t n) {
  std::string out(4 * ((n + 2) / 3), '\0');
  const int len = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), data, static_cast<int>(n));
  out.resize(static_cast<std::size_t>(len));
  return out;
}

/// Sec-WebSocket-Accept for a client key.
inline std::string accept_key(const std::string& client_key) {
  const std::string in = client_key + kHandshakeGuid;
  unsigned char digest[SHA_DIGEST_LENGTH];
  SHA1(reinterpret_cast<const unsigned char*>(in.data()), in.size(), digest);
  return base64(digest, SHA_DIGEST_LENGTH);
}

/// Owning file descriptor.
class Fd {
 public:
  Fd() = default;
  explicit Fd(int fd) : fd_(fd) {}
  Fd(Fd&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
  Fd& operator=(Fd&& o) noexcept {
    if (this != &o) {
      reset();
      fd_ = std::exchange(o.fd_, -1);
    }
    return *this;
  }
  Fd(const Fd&) = delete;
  Fd& operator=(const Fd&) = delete;
  ~Fd() { reset(); }

  int get() const { return fd_; }
  bool valid() const { return fd_ >= 0; }
  void reset() {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
  }

 private:
  int fd_ = -1;
};

/// Binds and listens. Port 0 picks an ephemeral port. Throws SocketError
/// (mentioning "in use" when applicable) on failure.
inline Fd listen_tcp(const std::string& host, std::uint16_t port, int backlog = 16) {
  Fd fd(::socket(AF_INET, SOCK_STREAM, 0));
  if (!fd.valid()) throw SocketError(std::string("socket: ") + std::strerror(errno));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) throw SocketError("bad listen address '" + host + "'");
  if (::bind(fd.get(), reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
    const int err = errno;
    if (err == EADDRINUSE) throw SocketError("port " + std::to_string(port) + " is in use");
    throw SocketError(std::string("bind: ") + std::strerror(err));
  }
  if (::listen(fd.get(), backlog) != 0) throw SocketError(std::string("listen: ") + std::strerror(errno));
  return fd;
}

inline std::uint16_t local_port(const Fd& fd) {
  sockaddr_in addr{};
  socklen_t len = sizeof addr;
  if (::getsockname(fd.get(), reinterpret_cast<sockaddr*>(&addr), &len) != 0)
    throw SocketError(std::string("getsockname: ") + std::strerror(errno));
  return ntohs(addr.sin_port);
}

/// Waits up to timeout_ms (negative blocks) for the fd to become readable.
inline bool wait_readable(int fd, int timeout_ms) {
  pollfd p{fd, POLLIN, 0};
  for (;;) {
    const int r = ::poll(&p, 1, timeout_ms);
    if (r < 0 && errno == EINTR) continue;
    if (r < 0) throw SocketError(std::string("poll: ") + std::strerror(errno));
    return r > 0;
  }
}

struct HttpRequest {
  std::string method;
  std::string path;
  std::map<std::string, std::string> headers;  // lower-cased names

  std::string header(const std::string& name) const {
    const auto it = headers.find(name);
    return it == headers.end() ? std::string() : it->second;
  }
};

enum class RecvStatus { message, timeout, closed };

struct Received {
  RecvStatus status = RecvStatus::closed;
  std::string text;
};

/**
 * One connected peer. The server side sends unmasked frames and requires
 * masked ones; the client side does the opposite.
 */
class Connection {
 public:
  enum class Role { server, client };

  Connection(Fd fd, Role role) : fd_(std::move(fd)), role_(role) {
    const int one = 1;
    ::setsockopt(fd_.get(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  }

  int fd() const { return fd_.get(); }
  bool open() const { return fd_.valid() && !closed_; }

  /// Reads the HTTP request head (up to the blank line).
  HttpRequest read_http_request(int timeout_ms = 5000) {
    const auto end = fill_until("\r\n\r\n", timeout_ms);
    const std::string head = buf_.substr(0, end);
    buf_.erase(0, end + 4);
    HttpRequest req;
    std::istringstream in(head);
    std::string line;
    std::getline(in, line);
    std::istringstream first(line);
    first >> req.method >> req.path;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      const auto colon = line.find(':');
      if (colon == std::string::npos) continue;
      std::string name = line.substr(0, colon);
      std::transform(name.begin(), name.end(), name.begin(), [](unsigned char c) { return std::tolower(c); });
      std::string value = line.substr(colon + 1);
      value.erase(0, value.find_first_not_of(" \t"));
      req.headers[name] = value;
    }
    return req;
  }

  static bool is_upgrade(const HttpRequest& req) {
    std::string up = req.header("upgrade");
    std::transform(up.begin(), up.end(), up.begin(), [](unsigned char c) { return std::tolower(c); });
    return req.method == "GET" && up == "websocket" && !req.header("sec-websocket-key").empty();
  }

  void accept_upgrade(const HttpRequest& req) {
    write_all("HTTP/1.1 101 Switching Protocols\r\nUpgrade: websocket\r\nConnection: Upgrade\r\n"
              "Sec-WebSocket-Accept: " +
              accept_key(req.header("sec-websocket-key")) + "\r\n\r\n");
  }

  void send_http(int status, const std::string& reason, const std::string& content_type, const std::string& body) {
    write_all("HTTP/1.1 " + std::to_string(status) + " " + reason + "\r\nContent-Type: " + content_type +
              "\r\nContent-Length: " + std::to_string(body.size()) + "\r\nConnection: close\r\n\r\n" + body);
  }

  /// Client half of the opening handshake.
  void client_handshake(const std::string& host, const std::string& path) {
    unsigned char nonce[16];
    std::random_device rd;
    for (auto& b : nonce) b = static_cast<unsigned char>(rd());
    const std::string key = base64(nonce, sizeof nonce);
    write_all("GET " + path + " HTTP/1.1\r\nHost: " + host +
              "\r\nUpgrade: websocket\r\nConnection: Upgrade\r\nSec-WebSocket-Key: " + key +
              "\r\nSec-WebSocket-Version: 13\r\n\r\n");
    const auto end = fill_until("\r\n\r\n", 5000);
    const std::string head = buf_.substr(0, end);
    buf_.erase(0, end + 4);
    if (head.rfind("HTTP/1.1 101", 0) != 0) throw SocketError("handshake refused: " + head.substr(0, head.find('\r')));
    if (head.find(accept_key(key)) == std::string::npos) throw SocketError("handshake accept key mismatch");
  }

  void send_text(const std::string& text) { send_frame(0x1, text); }

  void send_close(std::uint16_t code = 1000) {
    if (closed_ || !fd_.valid()) return;
    std::string payload{static_cast<char>(code >> 8), static_cast<char>(code & 0xff)};
    try {
      send_frame(0x8, payload);
    } catch (const SocketError&) {
    }
    closed_ = true;
  }

  /// Next complete text message. timeout_ms < 0 blocks.
  Received receive(int timeout_ms) {
    const auto deadline = deadline_from(timeout_ms);
    std::string message;
    bool in_fragment = false;
    for (;;) {
      Frame f;
      if (!read_frame(f, deadline)) return {RecvStatus::timeout, {}};
      if (f.opcode < 0) return {RecvStatus::closed, {}};
      switch (f.opcode) {
        case 0x8:
          send_close();
          return {RecvStatus::closed, {}};
        case 0x9: send_frame(0xA, f.payload); continue;
        case 0xA: continue;
        case 0x1:
        case 0x2:
          if (in_fragment) throw SocketError("new data frame inside a fragmented message");
          message = std::move(f.payload);
          in_fragment = !f.fin;
          break;
        case 0x0:
          if (!in_fragment) throw SocketError("continuation frame without a start");
          message += f.payload;
          in_fragment = !f.fin;
          break;
        default: throw SocketError("unknown opcode " + std::to_string(f.opcode));
      }
      if (message.size() > kMaxMessageBytes) throw SocketError("message too large");
      if (!in_fragment) return {RecvStatus::message, std::move(message)};
    }
  }

 private:
  using Clock = std::chrono::steady_clock;

  struct Frame {
    bool fin = true;
    int opcode = -1;  // stays -1 when the peer went away
    std::string payload;
  };

  static std::optional<Clock::time_point> deadline_from(int timeout_ms) {
    if (timeout_ms < 0) return std::nullopt;
    return Clock::now() + std::chrono::milliseconds(timeout_ms);
  }

  static int remaining_ms(const std::optional<Clock::time_point>& deadline) {
    if (!deadline) return -1;
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(*deadline - Clock::now()).count();
    return left > 0 ? static_cast<int>(left) : 0;
  }

  // Returns false on timeout; marks the connection closed on EOF.
  bool fill(std::size_t need, const std::optional<Clock::time_point>& deadline) {
    while (buf_.size() < need) {
      if (closed_) return true;
      if (!wait_readable(fd_.get(), remaining_ms(deadline))) return false;
      char tmp[4096];
      const ssize_t n = ::recv(fd_.get(), tmp, sizeof tmp, 0);
      if (n < 0 && errno == EINTR) continue;
      if (n <= 0) {
        closed_ = true;
        return true;
      }
      buf_.append(tmp, static_cast<std::size_t>(n));
    }
    return true;
  }

  std::size_t fill_until(const std::string& marker, int timeout_ms) {
    const auto deadline = deadline_from(timeout_ms);
    for (;;) {
      const auto pos = buf_.find(marker);
      if (pos != std::string::npos) return pos;
      if (buf_.size() > 64 * 1024) throw SocketError("HTTP head too large");
      if (!fill(buf_.size() + 1, deadline)) throw SocketError("timed out reading HTTP head");
      if (closed_) throw SocketError("connection closed during handshake");
    }
  }

  // The frame header is only consumed once the whole frame is buffered, so a
  // timeout never leaves a half-read frame behind.
  bool read_frame(Frame& f, const std::optional<Clock::time_point>& deadline) {
    // 0 timeout, 1 buffered, 2 peer gone before the bytes arrived
    const auto need = [&](std::size_t n) {
      if (!fill(n, deadline)) return 0;
      return buf_.size() >= n ? 1 : 2;
    };
    int r = need(2);
    if (r != 1) return r == 2;
    const auto b0 = static_cast<unsigned char>(buf_[0]);
    const auto b1 = static_cast<unsigned char>(buf_[1]);
    if (b0 & 0x70) throw SocketError("reserved bits set");
    const bool masked = (b1 & 0x80) != 0;
    if (masked != (role_ == Role::server)) throw SocketError(masked ? "unexpected masked frame" : "unmasked client frame");
    std::size_t header = 2;
    std::uint64_t len = b1 & 0x7f;
    if (len == 126) {
      if ((r = need(4)) != 1) return r == 2;
      len = (std::uint64_t(static_cast<unsigned char>(buf_[2])) << 8) | static_cast<unsigned char>(buf_[3]);
      header = 4;
    } else if (len == 127) {
      if ((r = need(10)) != 1) return r == 2;
      len = 0;
      for (int i = 0; i < 8; ++i) len = (len << 8) | static_cast<unsigned char>(buf_[2 + i]);
      header = 10;
    }
    if (len > kMaxMessageBytes) throw SocketError("frame too large");
    const std::size_t mask_at = header;
    if (masked) header += 4;
    const std::size_t total = header + static_cast<std::size_t>(len);
    if ((r = need(total)) != 1) return r == 2;
    f.fin = (b0 & 0x80) != 0;
    f.opcode = b0 & 0x0f;
    f.payload = buf_.substr(header, static_cast<std::size_t>(len));
    if (masked)
      for (std::size_t i = 0; i < f.payload.size(); ++i)
        f.payload[i] = static_cast<char>(f.payload[i] ^ buf_[mask_at + (i & 3)]);
    buf_.erase(0, total);
    return true;
  }

  void send_frame(int opcode, const std::string& payload) {
    std::string out;
    out.push_back(static_cast<char>(0x80 | opcode));
    const bool mask = role_ == Role::client;
    const std::size_t n = payload.size();
    const unsigned char mbit = mask ? 0x80 : 0x00;
    if (n < 126) {
      out.push_back(static_cast<char>(mbit | n));
    } else if (n <= 0xffff) {
      out.push_back(static_cast<char>(mbit | 126));
      out.push_back(static_cast<char>(n >> 8));
      out.push_back(static_cast<char>(n & 0xff));
    } else {
      out.push_back(static_cast<char>(mbit | 127));
      for (int i = 7; i >= 0; --i) out.push_back(static_cast<char>((std::uint64_t(n) >> (8 * i)) & 0xff));
    }
    if (mask) {
      char key[4];
      for (auto& k : key) k = static_cast<char>(mask_rng_());
      out.append(key, 4);
      for (std::size_t i = 0; i < n; ++i) out.push_back(static_cast<char>(payload[i] ^ key[i & 3]));
    } else {
      out += payload;
    }
    write_all(out);
  }

  void write_all(const std::string& data) {
    std::size_t off = 0;
    while (off < data.size()) {
      const ssize_t n = ::send(fd_.get(), data.data() + off, data.size() - off, MSG_NOSIGNAL);
      if (n < 0 && errno == EINTR) continue;
      if (n <= 0) {
        closed_ = true;
        throw SocketError(std::string("send: ") + std::strerror(errno));
      }
      off += static_cast<std::size_t>(n);
    }
  }

  Fd fd_;
  Role role_;
  bool closed_ = false;
  std::string buf_;
  std::minstd_rand mask_rng_{std::random_device{}()};
};

/// Opens a client connection and completes the handshake.
inline Connection connect_client(const std::string& host, std::uint16_t port, const std::string& path = "/session") {
  Fd fd(::socket(AF_INET, SOCK_STREAM, 0));
  if (!fd.valid()) throw SocketError(std::string("socket: ") + std::strerror(errno));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) throw SocketError("bad address '" + host + "'");
  if (::connect(fd.get(), reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0)
    throw SocketError(std::string("connect: ") + std::strerror(errno));
  Connection conn(std::move(fd), Connection::Role::client);
  conn.client_handshake(host + ":" + std::to_string(port), path);
  return conn;
}

}  // namespace adapmen::hitl::ws
