#include "splitnn/transport.hpp"

#include <condition_variable>
#include <deque>
#include <mutex>

#include "splitnn/error.hpp"

namespace splitnn {

void ByteCounter::record_up(std::uint64_t bytes) noexcept {
  bytes_up_.fetch_add(bytes, std::memory_order_relaxed);
  frames_up_.fetch_add(1, std::memory_order_relaxed);
}

void ByteCounter::record_down(std::uint64_t bytes) noexcept {
  bytes_down_.fetch_add(bytes, std::memory_order_relaxed);
  frames_down_.fetch_add(1, std::memory_order_relaxed);
}

ByteCounts ByteCounter::snapshot() const noexcept {
  return {bytes_up_.load(std::memory_order_relaxed), bytes_down_.load(std::memory_order_relaxed),
          frames_up_.load(std::memory_order_relaxed), frames_down_.load(std::memory_order_relaxed)};
}

Endpoint::Endpoint(Role role, std::unique_ptr<Channel> channel, Precision precision,
                   std::chrono::milliseconds timeout)
    : role_(role), channel_(std::move(channel)), precision_(precision), timeout_(timeout) {}

void Endpoint::count(Direction dir, std::size_t wire_bytes) noexcept {
  const bool upward = (dir == Direction::sent) == (role_ == Role::client);
  if (upward) {
    counter_.record_up(wire_bytes);
  } else {
    counter_.record_down(wire_bytes);
  }
}

void Endpoint::send(const Message& msg) {
  const Bytes frame = encode_frame(msg, precision_);
  if (tap_) tap_(Direction::sent, frame);
  count(Direction::sent, channel_->write_frame(frame));
}

Message Endpoint::recv() { return recv(timeout_); }

Message Endpoint::recv(std::optional<std::chrono::milliseconds> timeout) {
  std::size_t wire_bytes = 0;
  const Bytes frame = channel_->read_frame(timeout, wire_bytes);
  count(Direction::received, wire_bytes);
  if (tap_) tap_(Direction::received, frame);
  Message msg = decode_frame(frame);
  check_order(msg);
  return msg;
}

void Endpoint::check_order(const Message& msg) {
  const MessageType type = message_type(msg);
  if (!is_data_message(type)) return;
  const BatchId batch = message_batch(msg);
  auto [it, fresh] = last_batch_.try_emplace(type, batch);
  if (!fresh) {
    if (batch <= it->second) {
      throw ProtocolError(std::string(to_string(type)) + " batch_id " + std::to_string(batch) +
                          " does not follow " + std::to_string(it->second));
    }
    it->second = batch;
  }
}

void Endpoint::close() noexcept { channel_->close(); }

namespace {

struct LoopbackState {
  std::mutex mutex;
  std::condition_variable ready;
  std::deque<Bytes> queues[2];
  bool closed = false;
};

class LoopbackChannel final : public Channel {
 public:
  LoopbackChannel(std::shared_ptr<LoopbackState> state, int side)
      : state_(std::move(state)), side_(side) {}

  ~LoopbackChannel() override { close(); }

  std::size_t write_frame(std::span<const std::uint8_t> frame) override {
    {
      std::lock_guard lock(state_->mutex);
      if (state_->closed) throw TransportError("loopback channel closed");
      state_->queues[1 - side_].emplace_back(frame.begin(), frame.end());
    }
    state_->ready.notify_all();
    return frame.size();
  }

  Bytes read_frame(std::optional<std::chrono::milliseconds> timeout,
                   std::size_t& wire_bytes) override {
    std::unique_lock lock(state_->mutex);
    auto& queue = state_->queues[side_];
    auto has_data = [&] { return !queue.empty() || state_->closed; };
    if (timeout) {
      if (!state_->ready.wait_for(lock, *timeout, has_data)) {
        throw TimeoutError("loopback recv timed out after " + std::to_string(timeout->count()) +
                           " ms");
      }
    } else {
      state_->ready.wait(lock, has_data);
    }
    if (queue.empty()) throw TransportError("loopback channel closed");
    Bytes frame = std::move(queue.front());
    queue.pop_front();
    wire_bytes = frame.size();
    return frame;
  }

  void close() noexcept override {
    {
      std::lock_guard lock(state_->mutex);
      state_->closed = true;
    }
    state_->ready.notify_all();
  }

  std::string describe() const override { return side_ == 0 ? "loopback:a" : "loopback:b"; }

 private:
  std::shared_ptr<LoopbackState> state_;
  int side_;
};

}  // namespace

std::pair<std::unique_ptr<Channel>, std::unique_ptr<Channel>> loopback_channels() {
  auto state = std::make_shared<LoopbackState>();
  return {std::make_unique<LoopbackChannel>(state, 0), std::make_unique<LoopbackChannel>(state, 1)};
}

std::pair<std::unique_ptr<Endpoint>, std::unique_ptr<Endpoint>> loopback_pair(
    Precision precision, std::chrono::milliseconds timeout) {
  auto [a, b] = loopback_channels();
  return {std::make_unique<Endpoint>(Role::client, std::move(a), precision, timeout),
          std::make_unique<Endpoint>(Role::server, std::move(b), precision, timeout)};
}

}  // namespace splitnn
