#include "inv/stream.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>
#include <zlib.h>

#include <chrono>
#include <condition_variable>
#include <cstring>
#include <deque>
#include <exception>
#include <fstream>
#include <mutex>
#include <stdexcept>
#include <thread>

namespace inv {

namespace {

constexpr std::size_t kMaxPacketPayload = 256u << 20;
constexpr char kMagic[4] = {'I', 'N', 'V', 'S'};

void append_u16_le(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void append_u32_le(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

class Cursor {
 public:
  explicit Cursor(std::span<const std::uint8_t> data) : data_(data) {}

  std::uint8_t u8() {
    need(1);
    return data_[pos_++];
  }
  std::uint16_t u16() {
    need(2);
    const std::uint16_t v =
        static_cast<std::uint16_t>(data_[pos_] | (static_cast<std::uint16_t>(data_[pos_ + 1]) << 8));
    pos_ += 2;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(data_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::span<const std::uint8_t> rest() { return data_.subspan(pos_); }
  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) throw CorruptDataError("stream: payload too short");
  }
  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
};

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
  return static_cast<std::uint32_t>(
      ::crc32(0L, bytes.data(), static_cast<uInt>(bytes.size())));
}

// Reads exactly `size` bytes. Returns false if the stream ended cleanly
// before the first byte; throws TruncatedSessionError on a partial read.
bool read_exact(ByteSource& src, std::uint8_t* out, std::size_t size) {
  std::size_t got = 0;
  while (got < size) {
    const std::size_t n = src.read_some(out + got, size - got);
    if (n == 0) {
      if (got == 0) return false;
      throw TruncatedSessionError("stream ended inside a packet");
    }
    got += n;
  }
  return true;
}

void append_pos_enc(std::vector<std::uint8_t>& out, const PosEncodingSpec& enc) {
  append_u32_le(out, static_cast<std::uint32_t>(enc.input_dim));
  append_u32_le(out, static_cast<std::uint32_t>(enc.num_freqs));
  out.push_back(enc.include_input ? 1 : 0);
}

PosEncodingSpec read_pos_enc(Cursor& c) {
  PosEncodingSpec enc;
  enc.input_dim = static_cast<int>(c.u32());
  enc.num_freqs = static_cast<int>(c.u32());
  enc.include_input = c.u8() != 0;
  return enc;
}

std::vector<std::uint8_t> encode_header_payload(const InvArtifact& artifact) {
  std::vector<std::uint8_t> out;
  out.insert(out.end(), kMagic, kMagic + 4);
  append_u16_le(out, kStreamVersion);
  const NetworkConfig& cfg = artifact.config;
  append_pos_enc(out, cfg.pos_enc);
  out.push_back(cfg.view_enc.has_value() ? 1 : 0);
  if (cfg.view_enc) append_pos_enc(out, *cfg.view_enc);
  append_u32_le(out, static_cast<std::uint32_t>(cfg.hidden_width));
  append_u32_le(out, static_cast<std::uint32_t>(cfg.num_hidden_layers));
  out.push_back(static_cast<std::uint8_t>(cfg.heads));
  out.push_back(cfg.paired_coarse_fine ? 1 : 0);
  append_u32_le(out, static_cast<std::uint32_t>(cfg.structure_layer_count));
  append_u32_le(out, static_cast<std::uint32_t>(artifact.warmup_count));
  const auto color_bytes = serialize_block(artifact.shared_color.layers);
  out.insert(out.end(), color_bytes.begin(), color_bytes.end());
  return out;
}

}  // namespace

std::size_t MemorySource::read_some(std::uint8_t* out, std::size_t size) {
  const std::size_t n = std::min(size, data_.size() - pos_);
  std::memcpy(out, data_.data() + pos_, n);
  pos_ += n;
  return n;
}

struct FileSink::Impl {
  std::ofstream f;
};

FileSink::FileSink(const std::string& path) : impl_(new Impl) {
  impl_->f.open(path, std::ios::binary | std::ios::trunc);
  if (!impl_->f) throw std::runtime_error("FileSink: cannot open " + path);
}

FileSink::~FileSink() = default;

void FileSink::write(const std::uint8_t* data, std::size_t size) {
  impl_->f.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(size));
  if (!impl_->f) throw std::runtime_error("FileSink: write failed");
}

struct FileSource::Impl {
  std::ifstream f;
};

FileSource::FileSource(const std::string& path) : impl_(new Impl) {
  impl_->f.open(path, std::ios::binary);
  if (!impl_->f) throw std::runtime_error("FileSource: cannot open " + path);
}

FileSource::~FileSource() = default;

std::size_t FileSource::read_some(std::uint8_t* data, std::size_t size) {
  impl_->f.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(size));
  return static_cast<std::size_t>(impl_->f.gcount());
}

TcpStream TcpStream::connect(const std::string& host, int port) {
  const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd < 0) throw std::runtime_error("TcpStream: socket() failed");
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(static_cast<std::uint16_t>(port));
  const std::string resolved = (host == "localhost") ? "127.0.0.1" : host;
  if (inet_pton(AF_INET, resolved.c_str(), &addr.sin_addr) != 1) {
    ::close(fd);
    throw std::runtime_error("TcpStream: cannot parse host " + host);
  }
  if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
    ::close(fd);
    throw std::runtime_error("TcpStream: connect to " + host + ":" + std::to_string(port) +
                             " failed");
  }
  return TcpStream(fd);
}

TcpStream::TcpStream(TcpStream&& other) noexcept : fd_(other.fd_) { other.fd_ = -1; }

TcpStream& TcpStream::operator=(TcpStream&& other) noexcept {
  if (this != &other) {
    if (fd_ >= 0) ::close(fd_);
    fd_ = other.fd_;
    other.fd_ = -1;
  }
  return *this;
}

TcpStream::~TcpStream() {
  if (fd_ >= 0) ::close(fd_);
}

void TcpStream::write(const std::uint8_t* data, std::size_t size) {
  std::size_t sent = 0;
  while (sent < size) {
    const ssize_t n = ::send(fd_, data + sent, size - sent, 0);
    if (n <= 0) throw std::runtime_error("TcpStream: send failed");
    sent += static_cast<std::size_t>(n);
  }
}

std::size_t TcpStream::read_some(std::uint8_t* data, std::size_t size) {
  const ssize_t n = ::recv(fd_, data, size, 0);
  if (n < 0) throw std::runtime_error("TcpStream: recv failed");
  return static_cast<std::size_t>(n);
}

void TcpStream::shutdown_send() { ::shutdown(fd_, SHUT_WR); }

TcpListener::TcpListener(int port) {
  fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd_ < 0) throw std::runtime_error("TcpListener: socket() failed");
  const int one = 1;
  ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_ANY);
  addr.sin_port = htons(static_cast<std::uint16_t>(port));
  if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
    ::close(fd_);
    throw std::runtime_error("TcpListener: bind to port " + std::to_string(port) + " failed");
  }
  if (::listen(fd_, 1) != 0) {
    ::close(fd_);
    throw std::runtime_error("TcpListener: listen failed");
  }
  sockaddr_in bound{};
  socklen_t len = sizeof(bound);
  ::getsockname(fd_, reinterpret_cast<sockaddr*>(&bound), &len);
  port_ = ntohs(bound.sin_port);
}

TcpListener::~TcpListener() {
  if (fd_ >= 0) ::close(fd_);
}

TcpStream TcpListener::accept() {
  const int fd = ::accept(fd_, nullptr, nullptr);
  if (fd < 0) throw std::runtime_error("TcpListener: accept failed");
  return TcpStream(fd);
}

std::vector<std::uint8_t> pack_packet(const StreamPacket& packet) {
  std::vector<std::uint8_t> out;
  out.reserve(packet.payload.size() + 9);
  out.push_back(static_cast<std::uint8_t>(packet.type));
  append_u32_le(out, static_cast<std::uint32_t>(packet.payload.size()));
  out.insert(out.end(), packet.payload.begin(), packet.payload.end());
  const std::uint32_t crc = crc32_of({out.data(), out.size()});
  append_u32_le(out, crc);
  return out;
}

void write_packet(ByteSink& sink, const StreamPacket& packet) {
  const auto bytes = pack_packet(packet);
  sink.write(bytes.data(), bytes.size());
}

std::optional<StreamPacket> read_packet(ByteSource& src) {
  std::uint8_t head[5];
  if (!read_exact(src, head, 5)) return std::nullopt;
  const std::uint8_t type = head[0];
  std::uint32_t length = 0;
  for (int i = 0; i < 4; ++i) length |= static_cast<std::uint32_t>(head[1 + i]) << (8 * i);
  if (length > kMaxPacketPayload) {
    throw CorruptPacketError("packet length " + std::to_string(length) + " is implausible");
  }
  StreamPacket packet;
  packet.payload.resize(length);
  if (length > 0 && !read_exact(src, packet.payload.data(), length)) {
    throw TruncatedSessionError("stream ended inside a packet payload");
  }
  std::uint8_t crc_bytes[4];
  if (!read_exact(src, crc_bytes, 4)) {
    throw TruncatedSessionError("stream ended before the packet checksum");
  }
  std::uint32_t crc_stored = 0;
  for (int i = 0; i < 4; ++i) crc_stored |= static_cast<std::uint32_t>(crc_bytes[i]) << (8 * i);

  std::uint32_t crc = ::crc32(0L, head, 5);
  crc = ::crc32(crc, packet.payload.data(), static_cast<uInt>(packet.payload.size()));
  if (crc != crc_stored) throw CorruptPacketError("packet CRC mismatch");
  if (type > 2) throw CorruptPacketError("unknown packet type " + std::to_string(type));
  packet.type = static_cast<PacketType>(type);
  return packet;
}

void encode_session(const InvArtifact& artifact, std::uint8_t codec, ByteSink& sink) {
  artifact.validate();
  if (codec > 2) throw std::invalid_argument("encode_session: unknown codec");
  write_packet(sink, {PacketType::kHeader, encode_header_payload(artifact)});

  auto frame_packet = [](int index, std::uint8_t codec_id, std::vector<std::uint8_t> body) {
    std::vector<std::uint8_t> payload;
    payload.reserve(body.size() + 5);
    append_u32_le(payload, static_cast<std::uint32_t>(index));
    payload.push_back(codec_id);
    payload.insert(payload.end(), body.begin(), body.end());
    return StreamPacket{PacketType::kFrame, std::move(payload)};
  };

  if (codec == kCodecBatchTwc16) {
    if (!artifact.frames.empty()) {
      const auto matrix = build_temporal_matrix(artifact.frames);
      write_packet(sink, frame_packet(0, codec, twc_encode(matrix).to_bytes()));
    }
  } else {
    std::optional<TwcStreamEncoder> delta;
    for (const auto& frame : artifact.frames) {
      std::vector<std::uint8_t> body;
      if (codec == kCodecRawF32) {
        body = serialize_block(frame.layers);
      } else {
        const auto row = flatten_block(frame.layers);
        if (!delta) delta.emplace(static_cast<int>(row.size()));
        body = delta->encode_frame(row);
      }
      write_packet(sink, frame_packet(frame.frame_index, codec, std::move(body)));
    }
  }
  write_packet(sink, {PacketType::kEnd, {}});
}

std::vector<std::uint8_t> encode_session_bytes(const InvArtifact& artifact, std::uint8_t codec) {
  MemorySink sink;
  encode_session(artifact, codec, sink);
  return std::move(sink.bytes);
}

SessionDecoder::SessionDecoder(ByteSource& src) : src_(src) {
  auto packet = read_packet(src_);
  if (!packet) throw TruncatedSessionError("empty stream");
  if (packet->type != PacketType::kHeader) {
    throw ProtocolError("session must begin with a Header packet");
  }
  Cursor c(packet->payload);
  char magic[4];
  for (char& ch : magic) ch = static_cast<char>(c.u8());
  if (std::memcmp(magic, kMagic, 4) != 0) {
    throw UnsupportedStreamError("bad stream magic");
  }
  const std::uint16_t version = c.u16();
  if (version != kStreamVersion) {
    throw UnsupportedStreamError("unsupported stream version " + std::to_string(version));
  }
  config_.pos_enc = read_pos_enc(c);
  if (c.u8() != 0) config_.view_enc = read_pos_enc(c);
  config_.hidden_width = static_cast<int>(c.u32());
  config_.num_hidden_layers = static_cast<int>(c.u32());
  config_.heads = static_cast<HeadType>(c.u8());
  config_.paired_coarse_fine = c.u8() != 0;
  config_.structure_layer_count = static_cast<int>(c.u32());
  warmup_count_ = static_cast<int>(c.u32());
  try {
    config_.validate();
  } catch (const std::invalid_argument& e) {
    throw CorruptDataError(std::string("header config invalid: ") + e.what());
  }

  const auto specs = config_.chain_layers();
  const int k = config_.structure_layer_count;
  structure_specs_.assign(specs.begin(), specs.begin() + k);
  const std::vector<LayerSpec> color_specs(specs.begin() + k, specs.end());

  std::int64_t color_params = 0;
  for (const auto& s : color_specs) color_params += static_cast<std::int64_t>(s.in) * s.out + s.out;
  const auto color_bytes = c.rest();
  if (static_cast<std::int64_t>(color_bytes.size()) != color_params * 4) {
    throw CorruptDataError("header color block has " + std::to_string(color_bytes.size()) +
                           " bytes, config expects " + std::to_string(color_params * 4));
  }
  const MlpNetwork color_net =
      deserialize_weights(color_bytes, color_specs.front().in, color_specs);
  shared_color_.layers = color_net.layers;
}

StructureBlock SessionDecoder::decode_frame_body(std::uint8_t codec,
                                                 std::span<const std::uint8_t> body, int index) {
  std::int64_t params = 0;
  for (const auto& s : structure_specs_) params += static_cast<std::int64_t>(s.in) * s.out + s.out;

  StructureBlock block;
  block.frame_index = index;
  if (codec == kCodecRawF32) {
    const MlpNetwork net = deserialize_weights(body, structure_specs_.front().in, structure_specs_);
    block.layers = net.layers;
    return block;
  }
  // codec 1: one delta chunk
  if (!delta_decoder_) delta_decoder_.emplace(static_cast<int>(params));
  const auto row = delta_decoder_->decode_frame(body);
  MlpNetwork net;
  net.input_dim = structure_specs_.front().in;
  for (const auto& s : structure_specs_) {
    DenseLayer l;
    l.act = s.act;
    l.weights.resize(s.out, s.in);
    l.bias.resize(s.out);
    net.layers.push_back(std::move(l));
  }
  load_block_from_floats(row, net.layers);
  block.layers = std::move(net.layers);
  return block;
}

std::optional<SessionDecoder::DecodedFrame> SessionDecoder::next_frame() {
  if (!pending_.empty()) {
    DecodedFrame f{next_index_, std::move(pending_.back())};
    pending_.pop_back();
    f.block.frame_index = next_index_;
    ++next_index_;
    return f;
  }
  if (ended_) return std::nullopt;

  std::optional<StreamPacket> packet;
  try {
    packet = read_packet(src_);
  } catch (const CorruptPacketError& e) {
    throw CorruptPacketError(std::string(e.what()) + " (expecting frame " +
                                 std::to_string(next_index_) + ")",
                             next_index_);
  }
  if (!packet) {
    throw TruncatedSessionError("stream ended without an End packet", next_index_);
  }
  if (packet->type == PacketType::kEnd) {
    ended_ = true;
    return std::nullopt;
  }
  if (packet->type != PacketType::kFrame) {
    throw ProtocolError("unexpected packet type mid-session");
  }

  Cursor c(packet->payload);
  const int index = static_cast<int>(c.u32());
  const std::uint8_t codec = c.u8();
  if (codec > 2) throw CorruptPacketError("unknown frame codec", index);
  if (session_codec_ && *session_codec_ != codec) {
    throw ProtocolError("frame codec changed mid-session");
  }
  session_codec_ = codec;

  if (codec == kCodecBatchTwc16) {
    if (index != 0 || next_index_ != 0) {
      throw ProtocolError("batched TWC payload must be the only frame packet");
    }
    const auto payload = TwcPayload::from_bytes(c.rest());
    const auto matrix = twc_decode(payload);
    std::int64_t params = 0;
    for (const auto& s : structure_specs_) {
      params += static_cast<std::int64_t>(s.in) * s.out + s.out;
    }
    if (matrix.row_length != params) {
      throw CorruptDataError("batched TWC row length does not match the structure block");
    }
    StructureBlock shape;
    for (const auto& s : structure_specs_) {
      DenseLayer l;
      l.act = s.act;
      l.weights.resize(s.out, s.in);
      l.bias.resize(s.out);
      shape.layers.push_back(std::move(l));
    }
    auto blocks = blocks_from_matrix(matrix, shape);
    for (auto it = blocks.rbegin(); it != blocks.rend(); ++it) {
      pending_.push_back(std::move(*it));
    }
    return next_frame();
  }

  if (index != next_index_) {
    throw ProtocolError("out-of-order frame index " + std::to_string(index) + ", expected " +
                        std::to_string(next_index_));
  }
  DecodedFrame f{index, decode_frame_body(codec, c.rest(), index)};
  ++next_index_;
  return f;
}

InvArtifact decode_session(ByteSource& src) {
  SessionDecoder decoder(src);
  InvArtifact artifact;
  artifact.config = decoder.config();
  artifact.shared_color = decoder.shared_color();
  artifact.warmup_count = decoder.warmup_count();
  while (auto frame = decoder.next_frame()) {
    artifact.frames.push_back(std::move(frame->block));
  }
  artifact.validate();
  return artifact;
}

InvArtifact decode_session_bytes(std::span<const std::uint8_t> bytes) {
  MemorySource src(bytes);
  return decode_session(src);
}

namespace {

// Bounded in-order queue between the packet producer and the paced sender.
class PacketQueue {
 public:
  explicit PacketQueue(std::size_t capacity) : capacity_(capacity) {}

  void push(std::vector<std::uint8_t> bytes) {
    std::unique_lock lock(mu_);
    cv_space_.wait(lock, [&] { return items_.size() < capacity_; });
    items_.push_back(std::move(bytes));
    cv_data_.notify_one();
  }

  void close() {
    std::lock_guard lock(mu_);
    closed_ = true;
    cv_data_.notify_all();
  }

  std::optional<std::vector<std::uint8_t>> pop() {
    std::unique_lock lock(mu_);
    cv_data_.wait(lock, [&] { return !items_.empty() || closed_; });
    if (items_.empty()) return std::nullopt;
    auto item = std::move(items_.front());
    items_.pop_front();
    cv_space_.notify_one();
    return item;
  }

 private:
  std::mutex mu_;
  std::condition_variable cv_data_, cv_space_;
  std::deque<std::vector<std::uint8_t>> items_;
  std::size_t capacity_;
  bool closed_ = false;
};

}  // namespace

SessionResult stream_send(const InvArtifact& artifact, ByteSink& sink, std::uint8_t codec,
                          double pacing_fps) {
  const auto t0 = std::chrono::steady_clock::now();
  PacketQueue queue(4);
  std::exception_ptr producer_error;

  std::thread producer([&] {
    try {
      struct QueueSink : ByteSink {
        PacketQueue& q;
        explicit QueueSink(PacketQueue& q) : q(q) {}
        void write(const std::uint8_t* data, std::size_t size) override {
          q.push(std::vector<std::uint8_t>(data, data + size));
        }
      } queue_sink(queue);
      encode_session(artifact, codec, queue_sink);
    } catch (...) {
      producer_error = std::current_exception();
    }
    queue.close();
  });

  SessionResult result;
  std::uint64_t frame_bytes = 0;
  try {
    while (auto bytes = queue.pop()) {
      // encode_session writes one packet per ByteSink::write call
      const bool is_frame = !bytes->empty() &&
                            (*bytes)[0] == static_cast<std::uint8_t>(PacketType::kFrame);
      if (is_frame && pacing_fps > 0.0 && result.frames > 0) {
        const auto due =
            t0 + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                     std::chrono::duration<double>(result.frames / pacing_fps));
        std::this_thread::sleep_until(due);
      }
      sink.write(bytes->data(), bytes->size());
      result.bytes += bytes->size();
      if (is_frame) {
        ++result.frames;
        frame_bytes += bytes->size();
      }
    }
  } catch (...) {
    queue.close();
    producer.join();
    throw;
  }
  producer.join();
  if (producer_error) std::rethrow_exception(producer_error);

  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (result.frames > 0) {
    result.mean_bytes_per_frame = static_cast<double>(frame_bytes) / result.frames;
    if (pacing_fps > 0.0) {
      result.mbps = megabits_per_second(result.mean_bytes_per_frame, pacing_fps);
    }
  }
  return result;
}

namespace {

class CountingSource : public ByteSource {
 public:
  explicit CountingSource(ByteSource& inner) : inner_(inner) {}
  std::size_t read_some(std::uint8_t* data, std::size_t size) override {
    const std::size_t n = inner_.read_some(data, size);
    count_ += n;
    return n;
  }
  std::uint64_t count() const { return count_; }

 private:
  ByteSource& inner_;
  std::uint64_t count_ = 0;
};

}  // namespace

SessionResult stream_receive(ByteSource& src, const FrameSink& sink) {
  const auto t0 = std::chrono::steady_clock::now();
  CountingSource counting(src);
  SessionResult result;
  std::uint64_t frame_start = 0;
  try {
    SessionDecoder decoder(counting);
    frame_start = counting.count();
    std::uint64_t frame_bytes = 0;
    while (auto frame = decoder.next_frame()) {
      const MlpNetwork net = assemble_model(frame->block, decoder.shared_color());
      if (sink) sink(frame->index, net);
      ++result.frames;
      frame_bytes = counting.count() - frame_start;
    }
    result.bytes = counting.count();
    if (result.frames > 0) {
      result.mean_bytes_per_frame = static_cast<double>(frame_bytes) / result.frames;
    }
  } catch (const TruncatedSessionError& e) {
    throw TruncatedSessionError(e.what(), result.frames);
  }
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

}  // namespace inv
