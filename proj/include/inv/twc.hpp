#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "inv/model.hpp"

namespace inv {

// Upper half of an IEEE 754 binary32 pattern: 1 sign, 8 exponent, 7 mantissa
// bits. Conversion rounds to nearest (ties to even) so the relative error of
// expand16(truncate16(x)) is at most 2^-8 for normal x. NaN/Inf inputs are
// rejected; results that would round up to infinity fall back to plain
// truncation.
std::uint16_t truncate16(float x);
float expand16(std::uint16_t t);

// Frame-major stack of flattened StructureBlock parameters.
struct TemporalWeightMatrix {
  int frame_count = 0;
  int row_length = 0;
  std::vector<float> values;  // frame_count * row_length

  std::span<const float> row(int t) const {
    return {values.data() + static_cast<std::size_t>(t) * row_length,
            static_cast<std::size_t>(row_length)};
  }
  std::span<float> row(int t) {
    return {values.data() + static_cast<std::size_t>(t) * row_length,
            static_cast<std::size_t>(row_length)};
  }
};

TemporalWeightMatrix build_temporal_matrix(std::span<const StructureBlock> blocks);

// Inverse of build_temporal_matrix given a block of the right shape.
std::vector<StructureBlock> blocks_from_matrix(const TemporalWeightMatrix& m,
                                               const StructureBlock& shape_template);

// Codec ids shared with the stream module's frame payloads.
inline constexpr std::uint8_t kCodecRawF32 = 0;
inline constexpr std::uint8_t kCodecStreamDelta16 = 1;
inline constexpr std::uint8_t kCodecBatchTwc16 = 2;

// Container: codec id (1 byte), frame count (u32 LE), row length (u32 LE),
// zlib-deflated body. Body words are little-endian u16: row 0 holds truncated
// values, each later row the two's-complement difference from the previous
// row's truncated values.
struct TwcPayload {
  std::uint8_t codec_id = kCodecBatchTwc16;
  std::uint32_t frame_count = 0;
  std::uint32_t row_length = 0;
  std::vector<std::uint8_t> stream;

  std::size_t byte_size() const { return 9 + stream.size(); }
  std::vector<std::uint8_t> to_bytes() const;
  static TwcPayload from_bytes(std::span<const std::uint8_t> bytes);
};

TwcPayload twc_encode(const TemporalWeightMatrix& m);
// decode(encode(m)) equals truncate16 applied elementwise to m, exactly.
TemporalWeightMatrix twc_decode(const TwcPayload& p);

// Zero-lookahead variant: one self-contained chunk per frame, deltas taken
// against the previously *decoded* frame. Same per-frame math as the batched
// codec.
class TwcStreamEncoder {
 public:
  explicit TwcStreamEncoder(int row_length);
  std::vector<std::uint8_t> encode_frame(std::span<const float> row);

 private:
  int row_length_;
  std::vector<std::uint16_t> prev_;
};

class TwcStreamDecoder {
 public:
  explicit TwcStreamDecoder(int row_length);
  std::vector<float> decode_frame(std::span<const std::uint8_t> chunk);

 private:
  int row_length_;
  std::vector<std::uint16_t> prev_;
};

struct CompressionReport {
  std::int64_t raw_bytes = 0;         // frames as raw f32
  std::int64_t compressed_bytes = 0;  // payload container size
  double bytes_per_frame = 0.0;
  double ratio = 0.0;  // raw / compressed
  double fps = 0.0;
  double megabits_per_second = 0.0;
};

double megabits_per_second(double bytes_per_frame, double fps);

CompressionReport compression_report(const InvArtifact& artifact, const TwcPayload& payload,
                                     double fps);

// zlib plumbing, exposed for the stream module.
std::vector<std::uint8_t> zlib_deflate(std::span<const std::uint8_t> src);
std::vector<std::uint8_t> zlib_inflate(std::span<const std::uint8_t> src,
                                       std::size_t expected_size);

}  // namespace inv
