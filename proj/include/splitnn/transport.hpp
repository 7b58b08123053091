#pragma once

// Message delivery with exact byte accounting.
//
// An Endpoint owns a Channel (the byte carrier) and counts every frame it
// sends or receives. Loopback channels pass whole frames between two
// in-process endpoints; TCP channels add a u32 little-endian length prefix
// per frame, and those 4 bytes are counted too.

#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>

#include "splitnn/protocol.hpp"
#include "splitnn/types.hpp"

namespace splitnn {

inline constexpr std::uint16_t kDefaultPort = 7470;
inline constexpr std::chrono::milliseconds kDefaultTimeout{30'000};
inline constexpr std::size_t kTcpPrefixBytes = 4;

enum class Role { client, server };
enum class Direction { sent, received };

struct ByteCounts {
  std::uint64_t bytes_up = 0;
  std::uint64_t bytes_down = 0;
  std::uint64_t frames_up = 0;
  std::uint64_t frames_down = 0;

  std::uint64_t bytes_total() const noexcept { return bytes_up + bytes_down; }
  std::uint64_t frames_total() const noexcept { return frames_up + frames_down; }

  friend ByteCounts operator-(const ByteCounts& a, const ByteCounts& b) noexcept {
    return {a.bytes_up - b.bytes_up, a.bytes_down - b.bytes_down, a.frames_up - b.frames_up,
            a.frames_down - b.frames_down};
  }
  friend ByteCounts operator+(const ByteCounts& a, const ByteCounts& b) noexcept {
    return {a.bytes_up + b.bytes_up, a.bytes_down + b.bytes_down, a.frames_up + b.frames_up,
            a.frames_down + b.frames_down};
  }
  friend bool operator==(const ByteCounts&, const ByteCounts&) = default;
};

/// Monotonic traffic counters, safe to read from any thread.
class ByteCounter {
 public:
  void record_up(std::uint64_t bytes) noexcept;
  void record_down(std::uint64_t bytes) noexcept;
  ByteCounts snapshot() const noexcept;

 private:
  std::atomic<std::uint64_t> bytes_up_{0};
  std::atomic<std::uint64_t> bytes_down_{0};
  std::atomic<std::uint64_t> frames_up_{0};
  std::atomic<std::uint64_t> frames_down_{0};
};

/// Moves whole frames. Implementations report how many bytes each frame cost
/// on the wire, framing overhead included.
class Channel {
 public:
  virtual ~Channel() = default;

  /// Returns the wire bytes used. Throws TransportError if the peer is gone.
  virtual std::size_t write_frame(std::span<const std::uint8_t> frame) = 0;

  /// Blocks for the next frame; `timeout` of nullopt waits indefinitely.
  /// Throws TimeoutError or TransportError.
  virtual Bytes read_frame(std::optional<std::chrono::milliseconds> timeout,
                           std::size_t& wire_bytes) = 0;

  /// Wakes blocked readers; later I/O fails with TransportError.
  virtual void close() noexcept = 0;

  virtual std::string describe() const = 0;
};

class Endpoint {
 public:
  using Tap = std::function<void(Direction, std::span<const std::uint8_t>)>;

  Endpoint(Role role, std::unique_ptr<Channel> channel, Precision precision,
           std::chrono::milliseconds timeout = kDefaultTimeout);

  Endpoint(const Endpoint&) = delete;
  Endpoint& operator=(const Endpoint&) = delete;

  void send(const Message& msg);

  /// Waits up to the endpoint's default timeout.
  Message recv();
  /// nullopt waits until a frame arrives or the channel closes.
  Message recv(std::optional<std::chrono::milliseconds> timeout);

  void close() noexcept;

  Role role() const noexcept { return role_; }
  Precision precision() const noexcept { return precision_; }
  std::chrono::milliseconds timeout() const noexcept { return timeout_; }
  ByteCounts counts() const noexcept { return counter_.snapshot(); }
  std::string describe() const { return channel_->describe(); }

  /// Observes every frame (without transport framing) in both directions.
  void set_tap(Tap tap) { tap_ = std::move(tap); }

 private:
  void count(Direction dir, std::size_t wire_bytes) noexcept;
  void check_order(const Message& msg);

  Role role_;
  std::unique_ptr<Channel> channel_;
  Precision precision_;
  std::chrono::milliseconds timeout_;
  ByteCounter counter_;
  Tap tap_;
  std::map<MessageType, BatchId> last_batch_;
};

/// The two ends of an in-process frame queue.
std::pair<std::unique_ptr<Channel>, std::unique_ptr<Channel>> loopback_channels();

/// Two connected in-process endpoints: first is the client side.
std::pair<std::unique_ptr<Endpoint>, std::unique_ptr<Endpoint>> loopback_pair(
    Precision precision, std::chrono::milliseconds timeout = kDefaultTimeout);

struct SocketAddress {
  std::string host = "127.0.0.1";
  std::uint16_t port = kDefaultPort;

  std::string to_string() const { return host + ":" + std::to_string(port); }
  /// "host:port", "host" or ":port". Throws ConfigError.
  static SocketAddress parse(const std::string& text);
};

class TcpListener {
 public:
  /// Binds and listens. Port 0 picks an ephemeral port.
  explicit TcpListener(const SocketAddress& addr);
  ~TcpListener();
  TcpListener(const TcpListener&) = delete;
  TcpListener& operator=(const TcpListener&) = delete;

  std::uint16_t port() const noexcept { return port_; }

  /// Waits for one connection; throws TimeoutError / TransportError.
  std::unique_ptr<Endpoint> accept(Role role, Precision precision,
                                   std::chrono::milliseconds timeout = kDefaultTimeout);

 private:
  int fd_ = -1;
  std::uint16_t port_ = 0;
};

std::unique_ptr<TcpListener> tcp_listen(const SocketAddress& addr);

/// Connects, retrying refused attempts until `timeout` elapses.
std::unique_ptr<Endpoint> tcp_connect(const SocketAddress& addr, Role role, Precision precision,
                                      std::chrono::milliseconds timeout = kDefaultTimeout);

/// A connected client/server endpoint pair over localhost TCP.
std::pair<std::unique_ptr<Endpoint>, std::unique_ptr<Endpoint>> tcp_loopback_pair(
    Precision precision, std::chrono::milliseconds timeout = kDefaultTimeout);

}  // namespace splitnn
