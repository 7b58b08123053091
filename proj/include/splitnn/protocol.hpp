#pragma once

// Wire messages of the split-training round and their binary framing.
//
// Frame layout (little-endian):
//
//   [0..4)   magic "SPLT"
//   [4]      version (1)
//   [5]      msg_type
//   [6]      precision flag (0 = f32, 1 = f64)
//   [7]      reserved (0)
//   [8..12)  client_id  u32
//   [12..20) batch_id   u64
//   [20..24) rows       u32
//   [24..28) cols       u32
//   [28..)   rows*cols IEEE-754 values, row-major
//
// Data messages carry exactly one matrix. Control messages have no payload
// and put their scalars into the batch_id/rows/cols fields.
//
// No message type carries raw inputs or labels: those never leave a client.

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <variant>
#include <vector>

#include "splitnn/matrix.hpp"
#include "splitnn/types.hpp"

namespace splitnn {

inline constexpr std::array<std::uint8_t, 4> kFrameMagic{'S', 'P', 'L', 'T'};
inline constexpr std::uint8_t kProtocolVersion = 1;
inline constexpr std::size_t kHeaderBytes = 28;
/// Frames of a single four-message round.
inline constexpr std::size_t kFramesPerRound = 4;

enum class MessageType : std::uint8_t {
  activation_up = 1,
  output_down = 2,
  gradient_up = 3,
  boundary_grad_down = 4,
  hello = 10,
  config_down = 11,
  epoch_end = 12,
};

/// Client -> server: output of the client-side layers for one batch.
struct ActivationUp {
  ClientId client_id = 0;
  BatchId batch_id = 0;
  Matrix activations;
  friend bool operator==(const ActivationUp&, const ActivationUp&) = default;
};

/// Server -> client: logits of the output layer.
struct OutputDown {
  ClientId client_id = 0;
  BatchId batch_id = 0;
  Matrix logits;
  friend bool operator==(const OutputDown&, const OutputDown&) = default;
};

/// Client -> server: loss gradient with respect to the logits.
struct GradientUp {
  ClientId client_id = 0;
  BatchId batch_id = 0;
  Matrix logit_grads;
  friend bool operator==(const GradientUp&, const GradientUp&) = default;
};

/// Server -> client: loss gradient with respect to the client-side output.
struct BoundaryGradDown {
  ClientId client_id = 0;
  BatchId batch_id = 0;
  Matrix boundary_grads;
  friend bool operator==(const BoundaryGradDown&, const BoundaryGradDown&) = default;
};

/// Client -> server on connect. sample_count is split low/high over rows/cols.
struct Hello {
  ClientId client_id = 0;
  std::uint64_t sample_count = 0;
  friend bool operator==(const Hello&, const Hello&) = default;
};

/// Server -> client after every client said hello: the client's minibatch
/// size (rows), the expected boundary width (cols) and epoch count (batch_id).
struct ConfigDown {
  ClientId client_id = 0;
  std::uint32_t minibatch_size = 0;
  std::uint32_t boundary_width = 0;
  std::uint64_t epochs = 0;
  friend bool operator==(const ConfigDown&, const ConfigDown&) = default;
};

struct EpochEnd {
  ClientId client_id = 0;
  friend bool operator==(const EpochEnd&, const EpochEnd&) = default;
};

using Message =
    std::variant<ActivationUp, OutputDown, GradientUp, BoundaryGradDown, Hello, ConfigDown, EpochEnd>;

MessageType message_type(const Message& msg) noexcept;
ClientId message_client(const Message& msg) noexcept;
std::string_view to_string(MessageType t) noexcept;
bool is_data_message(MessageType t) noexcept;

/// Payload matrix of a data message, nullptr for control messages.
const Matrix* message_matrix(const Message& msg) noexcept;
/// batch_id of a data message, 0 for control messages.
BatchId message_batch(const Message& msg) noexcept;

using Bytes = std::vector<std::uint8_t>;

/// Exact encoded length of `msg` at `precision`.
std::size_t frame_length(const Message& msg, Precision precision) noexcept;

/// Throws EncodingError if a matrix dimension does not fit in u32.
Bytes encode_frame(const Message& msg, Precision precision);

/// Throws ProtocolError (bad magic, version, type, flag, non-finite value) or
/// FramingError (length disagrees with header). Never returns a partial message.
Message decode_frame(std::span<const std::uint8_t> bytes);

/// Header fields without decoding the payload. Throws like decode_frame.
struct FrameHeader {
  MessageType type;
  Precision precision;
  ClientId client_id;
  BatchId batch_id;
  std::uint32_t rows;
  std::uint32_t cols;
};
FrameHeader peek_header(std::span<const std::uint8_t> bytes);

/// Bytes exchanged by one client in one round: 2*s*(d1 + c)*bytes_per_value,
/// plus the four frame headers when include_headers is set.
std::uint64_t round_bytes(std::uint64_t batch_size, std::uint64_t boundary_width,
                          std::uint64_t class_count, Precision precision, bool include_headers);

}  // namespace splitnn
