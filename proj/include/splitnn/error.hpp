#pragma once

#include <stdexcept>
#include <string>

namespace splitnn {

/// Root of every error thrown by this library. Catching `Error` is enough to
/// separate typed failures from genuine bugs (bad_alloc, logic errors).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid model description (dims, split index, learning rate).
class SpecError : public Error {
 public:
  using Error::Error;
};

/// Operand shapes do not compose.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Input values outside their domain (labels, weights, counts).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// A NaN or Inf appeared in a tensor.
class NumericError : public Error {
 public:
  using Error::Error;
};

class EncodingError : public Error {
 public:
  using Error::Error;
};

/// Frame content violates the protocol (magic, version, type, ordering).
class ProtocolError : public Error {
 public:
  using Error::Error;
};

/// Frame length does not match its header.
class FramingError : public ProtocolError {
 public:
  using ProtocolError::ProtocolError;
};

/// A message arrived that the receiving state machine cannot accept now.
class ProtocolStateError : public Error {
 public:
  using Error::Error;
};

class TransportError : public Error {
 public:
  using Error::Error;
};

class TimeoutError : public TransportError {
 public:
  using TransportError::TransportError;
};

class AllocationError : public Error {
 public:
  using Error::Error;
};

class IngestionError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace splitnn
