#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "inv/errors.hpp"
#include "inv/model.hpp"
#include "inv/twc.hpp"

namespace inv {

// Wire format (.invs), all multi-byte integers little-endian.
//
// packet   := type(u8) length(u32) payload(length bytes) crc32(u32)
//             crc32 (IEEE polynomial) covers type + length + payload
// session  := Header packet, Frame packet*, End packet
// header   := magic "INVS", version(u16),
//             pos_enc { input_dim(u32) num_freqs(u32) include_input(u8) },
//             has_view(u8) [ view_enc as above ],
//             hidden_width(u32) num_hidden_layers(u32) heads(u8) paired(u8),
//             k(u32) warmup_count(u32),
//             shared color block weights (raw f32, serialize_weights layout)
// frame    := frame_index(u32) codec(u8) body
//             codec 0: raw f32 structure block
//             codec 1: TwcStreamEncoder chunk (16-bit delta vs previous frame)
//             codec 2: one packet at index 0 holding a batched TwcPayload
//                      for the whole sequence (file mode; needs lookahead)
// end      := empty payload

enum class PacketType : std::uint8_t { kHeader = 0, kFrame = 1, kEnd = 2 };

struct StreamPacket {
  PacketType type = PacketType::kEnd;
  std::vector<std::uint8_t> payload;
};

inline constexpr std::uint16_t kStreamVersion = 1;

class ByteSink {
 public:
  virtual ~ByteSink() = default;
  virtual void write(const std::uint8_t* data, std::size_t size) = 0;
};

class ByteSource {
 public:
  virtual ~ByteSource() = default;
  // Returns the number of bytes read; 0 means end of stream.
  virtual std::size_t read_some(std::uint8_t* data, std::size_t size) = 0;
};

class MemorySink : public ByteSink {
 public:
  void write(const std::uint8_t* data, std::size_t size) override {
    bytes.insert(bytes.end(), data, data + size);
  }
  std::vector<std::uint8_t> bytes;
};

class MemorySource : public ByteSource {
 public:
  explicit MemorySource(std::span<const std::uint8_t> data) : data_(data) {}
  std::size_t read_some(std::uint8_t* out, std::size_t size) override;
  std::size_t consumed() const { return pos_; }

 private:
  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
};

class FileSink : public ByteSink {
 public:
  explicit FileSink(const std::string& path);
  ~FileSink() override;
  void write(const std::uint8_t* data, std::size_t size) override;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

class FileSource : public ByteSource {
 public:
  explicit FileSource(const std::string& path);
  ~FileSource() override;
  std::size_t read_some(std::uint8_t* data, std::size_t size) override;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Reliable ordered byte channel over TCP.
class TcpStream : public ByteSink, public ByteSource {
 public:
  static TcpStream connect(const std::string& host, int port);
  TcpStream(TcpStream&&) noexcept;
  TcpStream& operator=(TcpStream&&) noexcept;
  ~TcpStream() override;

  void write(const std::uint8_t* data, std::size_t size) override;
  std::size_t read_some(std::uint8_t* data, std::size_t size) override;
  void shutdown_send();

 private:
  explicit TcpStream(int fd) : fd_(fd) {}
  friend class TcpListener;
  int fd_ = -1;
};

class TcpListener {
 public:
  explicit TcpListener(int port);  // port 0 picks an ephemeral port
  ~TcpListener();
  int port() const { return port_; }
  TcpStream accept();

 private:
  int fd_ = -1;
  int port_ = 0;
};

std::vector<std::uint8_t> pack_packet(const StreamPacket& packet);
void write_packet(ByteSink& sink, const StreamPacket& packet);
// nullopt on clean end-of-stream at a packet boundary. Throws
// TruncatedSessionError on a partial packet and CorruptPacketError on CRC or
// framing failures.
std::optional<StreamPacket> read_packet(ByteSource& src);

// Header + one Frame per structure block (codecs 0,1; one batch Frame for
// codec 2) + End.
void encode_session(const InvArtifact& artifact, std::uint8_t codec, ByteSink& sink);
std::vector<std::uint8_t> encode_session_bytes(const InvArtifact& artifact, std::uint8_t codec);

// Incremental pull-based decoder: frames become available as their packets
// are consumed, before the rest of the stream is read.
class SessionDecoder {
 public:
  explicit SessionDecoder(ByteSource& src);  // reads and validates the header

  const NetworkConfig& config() const { return config_; }
  const ColorBlock& shared_color() const { return shared_color_; }
  int warmup_count() const { return warmup_count_; }

  struct DecodedFrame {
    int index = 0;
    StructureBlock block;
  };
  // nullopt once the End packet has been consumed.
  std::optional<DecodedFrame> next_frame();
  bool ended() const { return ended_; }

 private:
  ByteSource& src_;
  NetworkConfig config_;
  ColorBlock shared_color_;
  int warmup_count_ = 0;
  int next_index_ = 0;
  bool ended_ = false;
  std::optional<std::uint8_t> session_codec_;
  std::optional<TwcStreamDecoder> delta_decoder_;
  std::vector<StructureBlock> pending_;  // expanded batch frames, reversed
  std::vector<LayerSpec> structure_specs_;

  StructureBlock decode_frame_body(std::uint8_t codec, std::span<const std::uint8_t> body,
                                   int index);
};

InvArtifact decode_session(ByteSource& src);
InvArtifact decode_session_bytes(std::span<const std::uint8_t> bytes);

using FrameSink = std::function<void(int frame_index, const MlpNetwork& assembled)>;

struct SessionResult {
  std::uint64_t bytes = 0;
  int frames = 0;
  double mean_bytes_per_frame = 0.0;  // frame packets only, framing included
  double mbps = 0.0;                  // at the pacing rate; 0 when unpaced
  double seconds = 0.0;
};

// Sends the artifact over the sink, pacing Frame packets at pacing_fps
// (best effort; <= 0 disables pacing). Encoding of frame t+1 overlaps the
// transmission of frame t through a bounded in-order packet queue.
SessionResult stream_send(const InvArtifact& artifact, ByteSink& sink, std::uint8_t codec,
                          double pacing_fps);

// Receives a session, invoking sink with the assembled full model per frame,
// in strictly increasing frame order. Throws TruncatedSessionError when the
// stream ends before the End packet.
SessionResult stream_receive(ByteSource& src, const FrameSink& sink);

}  // namespace inv
