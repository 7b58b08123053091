#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <charconv>
#include <cstring>
#include <thread>

#include "splitnn/error.hpp"
#include "splitnn/transport.hpp"

namespace splitnn {

namespace {

using Clock = std::chrono::steady_clock;

// Frames beyond this are treated as stream corruption rather than allocated.
constexpr std::uint32_t kMaxFrameBytes = 1u << 30;

std::string errno_text(const char* what) {
  return std::string(what) + ": " + std::strerror(errno);
}

int remaining_ms(std::optional<Clock::time_point> deadline) {
  if (!deadline) return -1;
  const auto left =
      std::chrono::duration_cast<std::chrono::milliseconds>(*deadline - Clock::now()).count();
  return left < 0 ? 0 : static_cast<int>(left);
}

sockaddr_in resolve(const SocketAddress& addr) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* found = nullptr;
  const std::string host = addr.host.empty() ? "0.0.0.0" : addr.host;
  if (int rc = ::getaddrinfo(host.c_str(), nullptr, &hints, &found); rc != 0 || !found) {
    throw TransportError("cannot resolve " + host + ": " + ::gai_strerror(rc));
  }
  sockaddr_in out{};
  std::memcpy(&out, found->ai_addr, sizeof(out));
  ::freeaddrinfo(found);
  out.sin_port = htons(addr.port);
  return out;
}

class TcpChannel final : public Channel {
 public:
  TcpChannel(int fd, std::string peer) : fd_(fd), peer_(std::move(peer)) {
    int one = 1;
    ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
  }

  ~TcpChannel() override {
    close();
    ::close(fd_);
  }

  std::size_t write_frame(std::span<const std::uint8_t> frame) override {
    if (frame.size() > kMaxFrameBytes) throw TransportError("frame too large for TCP framing");
    const auto len = static_cast<std::uint32_t>(frame.size());
    const std::uint8_t prefix[kTcpPrefixBytes] = {
        static_cast<std::uint8_t>(len), static_cast<std::uint8_t>(len >> 8),
        static_cast<std::uint8_t>(len >> 16), static_cast<std::uint8_t>(len >> 24)};
    write_all(prefix);
    write_all(frame);
    return kTcpPrefixBytes + frame.size();
  }

  Bytes read_frame(std::optional<std::chrono::milliseconds> timeout,
                   std::size_t& wire_bytes) override {
    std::optional<Clock::time_point> deadline;
    if (timeout) deadline = Clock::now() + *timeout;
    std::uint8_t prefix[kTcpPrefixBytes];
    read_all(prefix, deadline);
    const std::uint32_t len = static_cast<std::uint32_t>(prefix[0]) |
                              static_cast<std::uint32_t>(prefix[1]) << 8 |
                              static_cast<std::uint32_t>(prefix[2]) << 16 |
                              static_cast<std::uint32_t>(prefix[3]) << 24;
    if (len > kMaxFrameBytes) throw FramingError("length prefix exceeds frame limit");
    Bytes frame(len);
    read_all(frame, deadline);
    wire_bytes = kTcpPrefixBytes + len;
    return frame;
  }

  void close() noexcept override {
    if (!closed_.exchange(true)) ::shutdown(fd_, SHUT_RDWR);
  }

  std::string describe() const override { return "tcp:" + peer_; }

 private:
  void write_all(std::span<const std::uint8_t> bytes) {
    std::size_t done = 0;
    while (done < bytes.size()) {
      const ssize_t n = ::send(fd_, bytes.data() + done, bytes.size() - done, MSG_NOSIGNAL);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw TransportError(errno_text("send"));
      }
      done += static_cast<std::size_t>(n);
    }
  }

  void read_all(std::span<std::uint8_t> bytes, std::optional<Clock::time_point> deadline) {
    std::size_t done = 0;
    while (done < bytes.size()) {
      pollfd pfd{fd_, POLLIN, 0};
      const int ready = ::poll(&pfd, 1, remaining_ms(deadline));
      if (ready < 0) {
        if (errno == EINTR) continue;
        throw TransportError(errno_text("poll"));
      }
      if (ready == 0) throw TimeoutError("tcp recv timed out from " + peer_);
      const ssize_t n = ::recv(fd_, bytes.data() + done, bytes.size() - done, 0);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw TransportError(errno_text("recv"));
      }
      if (n == 0) throw TransportError("connection closed by " + peer_);
      done += static_cast<std::size_t>(n);
    }
  }

  int fd_;
  std::string peer_;
  std::atomic<bool> closed_{false};
};

std::string peer_name(const sockaddr_in& sa) {
  char buf[INET_ADDRSTRLEN] = {};
  ::inet_ntop(AF_INET, &sa.sin_addr, buf, sizeof(buf));
  return std::string(buf) + ":" + std::to_string(ntohs(sa.sin_port));
}

}  // namespace

SocketAddress SocketAddress::parse(const std::string& text) {
  SocketAddress out;
  const auto colon = text.rfind(':');
  if (colon == std::string::npos) {
    out.host = text;
    return out;
  }
  if (colon > 0) out.host = text.substr(0, colon);
  const std::string port = text.substr(colon + 1);
  unsigned value = 0;
  auto [ptr, ec] = std::from_chars(port.data(), port.data() + port.size(), value);
  if (ec != std::errc() || ptr != port.data() + port.size() || value > 65535) {
    throw ConfigError("invalid port in address '" + text + "'");
  }
  out.port = static_cast<std::uint16_t>(value);
  return out;
}

TcpListener::TcpListener(const SocketAddress& addr) {
  const sockaddr_in sa = resolve(addr);
  fd_ = ::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0);
  if (fd_ < 0) throw TransportError(errno_text("socket"));
  int one = 1;
  ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  if (::bind(fd_, reinterpret_cast<const sockaddr*>(&sa), sizeof(sa)) < 0) {
    const std::string msg = errno_text(("bind " + addr.to_string()).c_str());
    ::close(fd_);
    throw TransportError(msg);
  }
  if (::listen(fd_, 64) < 0) {
    const std::string msg = errno_text("listen");
    ::close(fd_);
    throw TransportError(msg);
  }
  sockaddr_in bound{};
  socklen_t len = sizeof(bound);
  ::getsockname(fd_, reinterpret_cast<sockaddr*>(&bound), &len);
  port_ = ntohs(bound.sin_port);
}

TcpListener::~TcpListener() {
  if (fd_ >= 0) ::close(fd_);
}

std::unique_ptr<Endpoint> TcpListener::accept(Role role, Precision precision,
                                              std::chrono::milliseconds timeout) {
  pollfd pfd{fd_, POLLIN, 0};
  for (;;) {
    const int ready = ::poll(&pfd, 1, static_cast<int>(timeout.count()));
    if (ready < 0 && errno == EINTR) continue;
    if (ready < 0) throw TransportError(errno_text("poll"));
    if (ready == 0) throw TimeoutError("no connection within " + std::to_string(timeout.count()) + " ms");
    break;
  }
  sockaddr_in peer{};
  socklen_t len = sizeof(peer);
  const int fd = ::accept4(fd_, reinterpret_cast<sockaddr*>(&peer), &len, SOCK_CLOEXEC);
  if (fd < 0) throw TransportError(errno_text("accept"));
  return std::make_unique<Endpoint>(role, std::make_unique<TcpChannel>(fd, peer_name(peer)),
                                    precision, timeout);
}

std::unique_ptr<TcpListener> tcp_listen(const SocketAddress& addr) {
  return std::make_unique<TcpListener>(addr);
}

std::unique_ptr<Endpoint> tcp_connect(const SocketAddress& addr, Role role, Precision precision,
                                      std::chrono::milliseconds timeout) {
  const sockaddr_in sa = resolve(addr);
  const auto deadline = Clock::now() + timeout;
  for (;;) {
    const int fd = ::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0);
    if (fd < 0) throw TransportError(errno_text("socket"));
    if (::connect(fd, reinterpret_cast<const sockaddr*>(&sa), sizeof(sa)) == 0) {
      return std::make_unique<Endpoint>(role, std::make_unique<TcpChannel>(fd, addr.to_string()),
                                        precision, timeout);
    }
    const int err = errno;
    ::close(fd);
    if (err != ECONNREFUSED && err != EINTR) {
      errno = err;
      throw TransportError(errno_text(("connect " + addr.to_string()).c_str()));
    }
    if (Clock::now() >= deadline) {
      throw TransportError("connect " + addr.to_string() + ": refused until timeout");
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
  }
}

std::pair<std::unique_ptr<Endpoint>, std::unique_ptr<Endpoint>> tcp_loopback_pair(
    Precision precision, std::chrono::milliseconds timeout) {
  TcpListener listener(SocketAddress{"127.0.0.1", 0});
  auto client = tcp_connect(SocketAddress{"127.0.0.1", listener.port()}, Role::client, precision,
                            timeout);
  auto server = listener.accept(Role::server, precision, timeout);
  return {std::move(client), std::move(server)};
}

}  // namespace splitnn
