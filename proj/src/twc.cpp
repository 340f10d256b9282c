#include "inv/twc.hpp"

#include <zlib.h>

#include <bit>
#include <cmath>
#include <stdexcept>
#include <string>

#include "inv/errors.hpp"

namespace inv {

std::uint16_t truncate16(float x) {
  if (!std::isfinite(x)) {
    throw std::invalid_argument("truncate16: input must be finite");
  }
  const std::uint32_t bits = std::bit_cast<std::uint32_t>(x);
  const std::uint32_t rounded = bits + 0x7fffu + ((bits >> 16) & 1u);
  auto t = static_cast<std::uint16_t>(rounded >> 16);
  if ((t & 0x7fffu) >= 0x7f80u) {
    // rounding carried into the exponent of the largest binade
    t = static_cast<std::uint16_t>(bits >> 16);
  }
  return t;
}

float expand16(std::uint16_t t) {
  return std::bit_cast<float>(static_cast<std::uint32_t>(t) << 16);
}

TemporalWeightMatrix build_temporal_matrix(std::span<const StructureBlock> blocks) {
  if (blocks.empty()) throw std::invalid_argument("build_temporal_matrix: no blocks");
  for (std::size_t t = 1; t < blocks.size(); ++t) {
    if (blocks[t].layers.size() != blocks[0].layers.size()) {
      throw std::invalid_argument("build_temporal_matrix: blocks differ in layer count");
    }
    for (std::size_t j = 0; j < blocks[t].layers.size(); ++j) {
      if (!same_shape(blocks[t].layers[j], blocks[0].layers[j])) {
        throw std::invalid_argument("build_temporal_matrix: blocks differ in shape");
      }
    }
  }
  TemporalWeightMatrix m;
  m.frame_count = static_cast<int>(blocks.size());
  m.row_length = static_cast<int>(blocks[0].param_count());
  m.values.reserve(static_cast<std::size_t>(m.frame_count) * m.row_length);
  for (const auto& b : blocks) {
    const auto row = flatten_block(b.layers);
    m.values.insert(m.values.end(), row.begin(), row.end());
  }
  return m;
}

std::vector<StructureBlock> blocks_from_matrix(const TemporalWeightMatrix& m,
                                               const StructureBlock& shape_template) {
  if (shape_template.param_count() != m.row_length) {
    throw std::invalid_argument("blocks_from_matrix: template shape does not match row length");
  }
  std::vector<StructureBlock> blocks;
  blocks.reserve(m.frame_count);
  for (int t = 0; t < m.frame_count; ++t) {
    StructureBlock b = shape_template;
    b.frame_index = t;
    load_block_from_floats(m.row(t), b.layers);
    blocks.push_back(std::move(b));
  }
  return blocks;
}

std::vector<std::uint8_t> zlib_deflate(std::span<const std::uint8_t> src) {
  uLongf bound = compressBound(static_cast<uLong>(src.size()));
  std::vector<std::uint8_t> out(bound);
  const int rc = compress2(out.data(), &bound, src.data(), static_cast<uLong>(src.size()), 9);
  if (rc != Z_OK) throw std::runtime_error("zlib_deflate: compress2 failed");
  out.resize(bound);
  return out;
}

std::vector<std::uint8_t> zlib_inflate(std::span<const std::uint8_t> src,
                                       std::size_t expected_size) {
  std::vector<std::uint8_t> out(expected_size);
  uLongf dest_len = static_cast<uLongf>(expected_size);
  const int rc =
      uncompress(out.data(), &dest_len, src.data(), static_cast<uLong>(src.size()));
  if (rc != Z_OK || dest_len != expected_size) {
    throw CorruptDataError("zlib_inflate: corrupt or mis-sized stream");
  }
  return out;
}

namespace {

void append_u16_le(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void append_u32_le(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xff));
  out.push_back(static_cast<std::uint8_t>((v >> 16) & 0xff));
  out.push_back(static_cast<std::uint8_t>((v >> 24) & 0xff));
}

std::uint16_t read_u16_le(const std::uint8_t* p) {
  return static_cast<std::uint16_t>(p[0] | (static_cast<std::uint16_t>(p[1]) << 8));
}

std::uint32_t read_u32_le(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace

std::vector<std::uint8_t> TwcPayload::to_bytes() const {
  std::vector<std::uint8_t> out;
  out.reserve(byte_size());
  out.push_back(codec_id);
  append_u32_le(out, frame_count);
  append_u32_le(out, row_length);
  out.insert(out.end(), stream.begin(), stream.end());
  return out;
}

TwcPayload TwcPayload::from_bytes(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 9) throw CorruptDataError("TwcPayload: container too short");
  TwcPayload p;
  p.codec_id = bytes[0];
  p.frame_count = read_u32_le(bytes.data() + 1);
  p.row_length = read_u32_le(bytes.data() + 5);
  p.stream.assign(bytes.begin() + 9, bytes.end());
  return p;
}

TwcPayload twc_encode(const TemporalWeightMatrix& m) {
  if (m.frame_count < 1 || m.row_length < 1) {
    throw std::invalid_argument("twc_encode: matrix must have at least one row");
  }
  if (m.values.size() != static_cast<std::size_t>(m.frame_count) * m.row_length) {
    throw std::invalid_argument("twc_encode: value count does not match dims");
  }
  std::vector<std::uint8_t> words;
  words.reserve(m.values.size() * 2);
  std::vector<std::uint16_t> prev(m.row_length, 0);
  for (int t = 0; t < m.frame_count; ++t) {
    const auto row = m.row(t);
    for (int j = 0; j < m.row_length; ++j) {
      const std::uint16_t tr = truncate16(row[j]);
      if (t == 0) {
        append_u16_le(words, tr);
      } else {
        append_u16_le(words, static_cast<std::uint16_t>(tr - prev[j]));
      }
      prev[j] = tr;
    }
  }
  TwcPayload p;
  p.codec_id = kCodecBatchTwc16;
  p.frame_count = static_cast<std::uint32_t>(m.frame_count);
  p.row_length = static_cast<std::uint32_t>(m.row_length);
  p.stream = zlib_deflate(words);
  return p;
}

TemporalWeightMatrix twc_decode(const TwcPayload& p) {
  if (p.codec_id != kCodecBatchTwc16) {
    throw CorruptDataError("twc_decode: unknown codec id " + std::to_string(p.codec_id));
  }
  if (p.frame_count < 1 || p.row_length < 1) {
    throw CorruptDataError("twc_decode: empty payload dims");
  }
  const std::size_t expected = static_cast<std::size_t>(p.frame_count) * p.row_length * 2;
  const auto words = zlib_inflate(p.stream, expected);

  TemporalWeightMatrix m;
  m.frame_count = static_cast<int>(p.frame_count);
  m.row_length = static_cast<int>(p.row_length);
  m.values.resize(static_cast<std::size_t>(m.frame_count) * m.row_length);
  std::vector<std::uint16_t> prev(m.row_length, 0);
  const std::uint8_t* w = words.data();
  for (int t = 0; t < m.frame_count; ++t) {
    for (int j = 0; j < m.row_length; ++j) {
      const std::uint16_t word = read_u16_le(w);
      w += 2;
      const std::uint16_t tr =
          (t == 0) ? word : static_cast<std::uint16_t>(prev[j] + word);
      prev[j] = tr;
      m.values[static_cast<std::size_t>(t) * m.row_length + j] = expand16(tr);
    }
  }
  return m;
}

TwcStreamEncoder::TwcStreamEncoder(int row_length) : row_length_(row_length) {
  if (row_length < 1) throw std::invalid_argument("TwcStreamEncoder: bad row length");
}

std::vector<std::uint8_t> TwcStreamEncoder::encode_frame(std::span<const float> row) {
  if (static_cast<int>(row.size()) != row_length_) {
    throw std::invalid_argument("TwcStreamEncoder: row length mismatch");
  }
  std::vector<std::uint8_t> words;
  words.reserve(row.size() * 2);
  const bool first = prev_.empty();
  if (first) prev_.assign(row_length_, 0);
  for (int j = 0; j < row_length_; ++j) {
    const std::uint16_t tr = truncate16(row[j]);
    append_u16_le(words, first ? tr : static_cast<std::uint16_t>(tr - prev_[j]));
    prev_[j] = tr;
  }
  return zlib_deflate(words);
}

TwcStreamDecoder::TwcStreamDecoder(int row_length) : row_length_(row_length) {
  if (row_length < 1) throw std::invalid_argument("TwcStreamDecoder: bad row length");
}

std::vector<float> TwcStreamDecoder::decode_frame(std::span<const std::uint8_t> chunk) {
  const auto words = zlib_inflate(chunk, static_cast<std::size_t>(row_length_) * 2);
  const bool first = prev_.empty();
  if (first) prev_.assign(row_length_, 0);
  std::vector<float> row(row_length_);
  for (int j = 0; j < row_length_; ++j) {
    const std::uint16_t word = read_u16_le(words.data() + static_cast<std::size_t>(j) * 2);
    const std::uint16_t tr = first ? word : static_cast<std::uint16_t>(prev_[j] + word);
    prev_[j] = tr;
    row[j] = expand16(tr);
  }
  return row;
}

double megabits_per_second(double bytes_per_frame, double fps) {
  return bytes_per_frame * 8.0 * fps / 1e6;
}

CompressionReport compression_report(const InvArtifact& artifact, const TwcPayload& payload,
                                     double fps) {
  const int frames = static_cast<int>(artifact.frames.size());
  if (frames < 1) throw std::invalid_argument("compression_report: artifact has no frames");
  if (payload.frame_count != static_cast<std::uint32_t>(frames) ||
      payload.row_length != static_cast<std::uint32_t>(artifact.frames[0].param_count())) {
    throw std::invalid_argument("compression_report: payload does not match artifact frames");
  }
  CompressionReport r;
  r.raw_bytes = static_cast<std::int64_t>(frames) * artifact.frames[0].param_count() * 4;
  r.compressed_bytes = static_cast<std::int64_t>(payload.byte_size());
  r.bytes_per_frame = static_cast<double>(r.compressed_bytes) / frames;
  r.ratio = static_cast<double>(r.raw_bytes) / static_cast<double>(r.compressed_bytes);
  r.fps = fps;
  r.megabits_per_second = megabits_per_second(r.bytes_per_frame, fps);
  return r;
}

}  // namespace inv
