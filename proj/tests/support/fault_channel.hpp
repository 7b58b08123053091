#pragma once

// Channel wrapper that fails on a chosen write, for rollback tests.

#include <atomic>
#include <memory>

#include "splitnn/error.hpp"
#include "splitnn/session.hpp"
#include "splitnn/transport.hpp"

namespace testfault {

class FaultyChannel final : public splitnn::Channel {
 public:
  // Throws TransportError on the write numbered `fail_at` (0-based) counted
  // across every channel sharing `writes`.
  FaultyChannel(std::unique_ptr<splitnn::Channel> inner, std::shared_ptr<std::atomic<long>> writes,
                long fail_at)
      : inner_(std::move(inner)), writes_(std::move(writes)), fail_at_(fail_at) {}

  std::size_t write_frame(std::span<const std::uint8_t> frame) override {
    if (writes_->fetch_add(1) == fail_at_) {
      inner_->close();
      throw splitnn::TransportError("injected fault");
    }
    return inner_->write_frame(frame);
  }
  splitnn::Bytes read_frame(std::optional<std::chrono::milliseconds> timeout,
                            std::size_t& wire_bytes) override {
    return inner_->read_frame(timeout, wire_bytes);
  }
  void close() noexcept override { inner_->close(); }
  std::string describe() const override { return "faulty " + inner_->describe(); }

 private:
  std::unique_ptr<splitnn::Channel> inner_;
  std::shared_ptr<std::atomic<long>> writes_;
  long fail_at_;
};

// Link factory whose links share one write counter; the `fail_at`-th frame
// written on any of them fails. fail_at < 0 never fails.
inline splitnn::LinkFactory faulty_links(splitnn::Precision precision,
                                         std::shared_ptr<std::atomic<long>> writes, long fail_at) {
  return [=](splitnn::ClientId) {
    auto [a, b] = splitnn::loopback_channels();
    return splitnn::Link{
        std::make_unique<splitnn::Endpoint>(
            splitnn::Role::client, std::make_unique<FaultyChannel>(std::move(a), writes, fail_at),
            precision, std::chrono::seconds(5)),
        std::make_unique<splitnn::Endpoint>(
            splitnn::Role::server, std::make_unique<FaultyChannel>(std::move(b), writes, fail_at),
            precision, std::chrono::seconds(5))};
  };
}

}  // namespace testfault
