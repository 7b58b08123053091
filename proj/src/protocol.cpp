#include "splitnn/protocol.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <string>
#include <type_traits>

#include "splitnn/error.hpp"

namespace splitnn {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

template <class T>
void put_le(Bytes& out, T value) {
  static_assert(std::is_unsigned_v<T>);
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<std::uint8_t>(value >> (8 * i)));
  }
}

template <class T>
T get_le(std::span<const std::uint8_t> in, std::size_t offset) {
  T value = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    value |= static_cast<T>(in[offset + i]) << (8 * i);
  }
  return value;
}

struct HeaderFields {
  MessageType type;
  ClientId client_id;
  BatchId batch_id;
  std::uint32_t rows;
  std::uint32_t cols;
  const Matrix* matrix;
};

HeaderFields fields_of(const Message& msg) {
  return std::visit(
      Overloaded{
          [](const ActivationUp& m) {
            return HeaderFields{MessageType::activation_up, m.client_id, m.batch_id, 0, 0,
                                &m.activations};
          },
          [](const OutputDown& m) {
            return HeaderFields{MessageType::output_down, m.client_id, m.batch_id, 0, 0,
                                &m.logits};
          },
          [](const GradientUp& m) {
            return HeaderFields{MessageType::gradient_up, m.client_id, m.batch_id, 0, 0,
                                &m.logit_grads};
          },
          [](const BoundaryGradDown& m) {
            return HeaderFields{MessageType::boundary_grad_down, m.client_id, m.batch_id, 0, 0,
                                &m.boundary_grads};
          },
          [](const Hello& m) {
            return HeaderFields{MessageType::hello, m.client_id, 0,
                                static_cast<std::uint32_t>(m.sample_count),
                                static_cast<std::uint32_t>(m.sample_count >> 32), nullptr};
          },
          [](const ConfigDown& m) {
            return HeaderFields{MessageType::config_down, m.client_id, m.epochs,
                                m.minibatch_size, m.boundary_width, nullptr};
          },
          [](const EpochEnd& m) {
            return HeaderFields{MessageType::epoch_end, m.client_id, 0, 0, 0, nullptr};
          },
      },
      msg);
}

bool known_type(std::uint8_t t) {
  switch (static_cast<MessageType>(t)) {
    case MessageType::activation_up:
    case MessageType::output_down:
    case MessageType::gradient_up:
    case MessageType::boundary_grad_down:
    case MessageType::hello:
    case MessageType::config_down:
    case MessageType::epoch_end:
      return true;
  }
  return false;
}

}  // namespace

MessageType message_type(const Message& msg) noexcept {
  constexpr MessageType kTypes[] = {
      MessageType::activation_up, MessageType::output_down, MessageType::gradient_up,
      MessageType::boundary_grad_down, MessageType::hello, MessageType::config_down,
      MessageType::epoch_end};
  return kTypes[msg.index()];
}

ClientId message_client(const Message& msg) noexcept {
  return std::visit([](const auto& m) { return m.client_id; }, msg);
}

std::string_view to_string(MessageType t) noexcept {
  switch (t) {
    case MessageType::activation_up:
      return "ActivationUp";
    case MessageType::output_down:
      return "OutputDown";
    case MessageType::gradient_up:
      return "GradientUp";
    case MessageType::boundary_grad_down:
      return "BoundaryGradDown";
    case MessageType::hello:
      return "Hello";
    case MessageType::config_down:
      return "ConfigDown";
    case MessageType::epoch_end:
      return "EpochEnd";
  }
  return "Unknown";
}

bool is_data_message(MessageType t) noexcept {
  return static_cast<std::uint8_t>(t) >= 1 && static_cast<std::uint8_t>(t) <= 4;
}

const Matrix* message_matrix(const Message& msg) noexcept { return fields_of(msg).matrix; }

BatchId message_batch(const Message& msg) noexcept {
  return is_data_message(message_type(msg)) ? fields_of(msg).batch_id : 0;
}

std::size_t frame_length(const Message& msg, Precision precision) noexcept {
  const Matrix* m = message_matrix(msg);
  return kHeaderBytes + (m ? m->size() * bytes_per_value(precision) : 0);
}

Bytes encode_frame(const Message& msg, Precision precision) {
  HeaderFields h = fields_of(msg);
  if (h.matrix) {
    constexpr auto kMax = std::numeric_limits<std::uint32_t>::max();
    if (h.matrix->rows() > kMax || h.matrix->cols() > kMax) {
      throw EncodingError("matrix dimensions exceed u32 range");
    }
    if (h.matrix->empty()) throw EncodingError("data message with empty matrix");
    h.rows = static_cast<std::uint32_t>(h.matrix->rows());
    h.cols = static_cast<std::uint32_t>(h.matrix->cols());
  }

  Bytes out;
  out.reserve(frame_length(msg, precision));
  out.insert(out.end(), kFrameMagic.begin(), kFrameMagic.end());
  out.push_back(kProtocolVersion);
  out.push_back(static_cast<std::uint8_t>(h.type));
  out.push_back(static_cast<std::uint8_t>(precision));
  out.push_back(0);
  put_le(out, h.client_id);
  put_le(out, h.batch_id);
  put_le(out, h.rows);
  put_le(out, h.cols);
  if (h.matrix) {
    for (double v : h.matrix->values()) {
      if (precision == Precision::f32) {
        put_le(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
      } else {
        put_le(out, std::bit_cast<std::uint64_t>(v));
      }
    }
  }
  return out;
}

FrameHeader peek_header(std::span<const std::uint8_t> bytes) {
  const std::size_t magic_len = std::min(bytes.size(), kFrameMagic.size());
  if (!std::equal(bytes.begin(), bytes.begin() + magic_len, kFrameMagic.begin())) {
    throw ProtocolError("bad frame magic");
  }
  if (bytes.size() < kHeaderBytes) {
    throw FramingError("truncated header: " + std::to_string(bytes.size()) + " of " +
                       std::to_string(kHeaderBytes) + " bytes");
  }
  if (bytes[4] != kProtocolVersion) {
    throw ProtocolError("unsupported protocol version " + std::to_string(bytes[4]));
  }
  if (!known_type(bytes[5])) {
    throw ProtocolError("unknown message type " + std::to_string(bytes[5]));
  }
  if (bytes[6] > 1) throw ProtocolError("bad precision flag " + std::to_string(bytes[6]));
  if (bytes[7] != 0) throw ProtocolError("reserved header byte is not zero");
  return FrameHeader{static_cast<MessageType>(bytes[5]), static_cast<Precision>(bytes[6]),
                     get_le<std::uint32_t>(bytes, 8), get_le<std::uint64_t>(bytes, 12),
                     get_le<std::uint32_t>(bytes, 20), get_le<std::uint32_t>(bytes, 24)};
}

Message decode_frame(std::span<const std::uint8_t> bytes) {
  const FrameHeader h = peek_header(bytes);
  const std::size_t payload = bytes.size() - kHeaderBytes;

  if (!is_data_message(h.type)) {
    if (payload != 0) throw FramingError("control frame with non-empty payload");
    switch (h.type) {
      case MessageType::hello:
        if (h.batch_id != 0) throw ProtocolError("Hello with non-zero batch_id");
        return Hello{h.client_id, (static_cast<std::uint64_t>(h.cols) << 32) | h.rows};
      case MessageType::config_down:
        return ConfigDown{h.client_id, h.rows, h.cols, h.batch_id};
      default:
        if (h.batch_id != 0 || h.rows != 0 || h.cols != 0) {
          throw ProtocolError("EpochEnd with non-zero scalar fields");
        }
        return EpochEnd{h.client_id};
    }
  }

  if (h.rows == 0 || h.cols == 0) throw ProtocolError("data frame with an empty matrix");
  const std::size_t width = bytes_per_value(h.precision);
  // rows*cols*width fits in 67 bits; compare via division to avoid overflow.
  const std::uint64_t count = static_cast<std::uint64_t>(h.rows) * h.cols;
  if (payload % width != 0 || payload / width != count) {
    throw FramingError("payload is " + std::to_string(payload) + " bytes, header implies " +
                       std::to_string(h.rows) + "x" + std::to_string(h.cols) + "x" +
                       std::to_string(width));
  }

  std::vector<double> values(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t at = kHeaderBytes + i * width;
    const double v = h.precision == Precision::f32
                         ? static_cast<double>(std::bit_cast<float>(get_le<std::uint32_t>(bytes, at)))
                         : std::bit_cast<double>(get_le<std::uint64_t>(bytes, at));
    if (!std::isfinite(v)) throw ProtocolError("non-finite value in payload");
    values[i] = v;
  }
  Matrix m(h.rows, h.cols, std::move(values));

  switch (h.type) {
    case MessageType::activation_up:
      return ActivationUp{h.client_id, h.batch_id, std::move(m)};
    case MessageType::output_down:
      return OutputDown{h.client_id, h.batch_id, std::move(m)};
    case MessageType::gradient_up:
      return GradientUp{h.client_id, h.batch_id, std::move(m)};
    default:
      return BoundaryGradDown{h.client_id, h.batch_id, std::move(m)};
  }
}

std::uint64_t round_bytes(std::uint64_t batch_size, std::uint64_t boundary_width,
                          std::uint64_t class_count, Precision precision, bool include_headers) {
  const std::uint64_t payload =
      2 * batch_size * (boundary_width + class_count) * bytes_per_value(precision);
  return payload + (include_headers ? kFramesPerRound * kHeaderBytes : 0);
}

}  // namespace splitnn
