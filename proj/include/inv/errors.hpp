#pragma once

#include <stdexcept>
#include <string>

namespace inv {

// Raised when stored/received bytes do not match their declared shape or
// fail an integrity check.
struct CorruptDataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Stream-level failures (see stream.hpp for the wire format).
struct UnsupportedStreamError : CorruptDataError {
  using CorruptDataError::CorruptDataError;
};

struct CorruptPacketError : CorruptDataError {
  explicit CorruptPacketError(const std::string& msg, int frame_index = -1)
      : CorruptDataError(msg), frame_index(frame_index) {}
  int frame_index;  // -1 when the failing packet is not a frame
};

struct ProtocolError : CorruptDataError {
  using CorruptDataError::CorruptDataError;
};

struct TruncatedSessionError : CorruptDataError {
  explicit TruncatedSessionError(const std::string& msg, int frames_delivered = 0)
      : CorruptDataError(msg), frames_delivered(frames_delivered) {}
  int frames_delivered;
};

}  // namespace inv
