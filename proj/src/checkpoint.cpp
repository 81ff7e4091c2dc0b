#include "qprune/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "qprune/errors.hpp"
#include "qprune/metrics.hpp"

namespace qprune {

Tensor CheckpointEntry::tensor() const {
  if (!quantized) return Tensor(shape, values);
  Tensor t(shape);
  for (std::size_t i = 0; i < codes.size(); ++i) t[i] = scale * static_cast<double>(codes[i]);
  return t;
}

std::vector<Tensor> QuantizedCheckpoint::params() const {
  std::vector<Tensor> out;
  for (const auto& e : entries) out.push_back(e.tensor());
  return out;
}

std::vector<QuantizedLayer> QuantizedCheckpoint::quantized_layers() const {
  std::vector<QuantizedLayer> out;
  for (const auto& e : entries)
    if (e.quantized) out.push_back({e.shape, e.scale, e.codes});
  return out;
}

namespace {

class Writer {
 public:
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<unsigned char>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<unsigned char>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    buf_.insert(buf_.end(), s.begin(), s.end());
  }
  std::vector<unsigned char>& bytes() { return buf_; }

 private:
  std::vector<unsigned char> buf_;
};

class Reader {
 public:
  Reader(const unsigned char* data, std::size_t size, std::size_t base) : data_(data), size_(size), base_(base) {}
  std::uint8_t u8() { return *take(1); }
  std::uint32_t u32() {
    const auto* p = take(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t{p[i]} << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    const auto* p = take(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t{p[i]} << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    const std::uint32_t n = u32();
    const auto* p = take(n);
    return std::string(reinterpret_cast<const char*>(p), n);
  }
  bool done() const { return pos_ == size_; }

 private:
  const unsigned char* take(std::size_t n) {
    if (size_ - pos_ < n) {
      throw FormatError("checkpoint truncated at byte offset " + std::to_string(base_ + pos_) + ": need " +
                        std::to_string(n) + " more bytes");
    }
    const auto* p = data_ + pos_;
    pos_ += n;
    return p;
  }
  const unsigned char* data_;
  std::size_t size_;
  std::size_t base_;
  std::size_t pos_ = 0;
};

std::uint32_t crc(const unsigned char* data, std::size_t n) {
  return static_cast<std::uint32_t>(::crc32(::crc32(0L, Z_NULL, 0), data, static_cast<uInt>(n)));
}

constexpr std::size_t kHeaderBytes = sizeof(kCheckpointMagic) + 4 + 8;

}  // namespace

std::vector<unsigned char> encode_checkpoint(const QuantizedCheckpoint& ck) {
  Writer payload;
  const auto& a = ck.architecture;
  payload.u32(static_cast<std::uint32_t>(a.in_channels));
  payload.u32(static_cast<std::uint32_t>(a.height));
  payload.u32(static_cast<std::uint32_t>(a.width));
  payload.u32(static_cast<std::uint32_t>(a.classes));
  payload.u32(static_cast<std::uint32_t>(a.kernel));
  payload.u32(static_cast<std::uint32_t>(a.padding));
  payload.u32(static_cast<std::uint32_t>(a.pool));
  payload.u32(static_cast<std::uint32_t>(a.conv_channels.size()));
  for (auto c : a.conv_channels) payload.u32(static_cast<std::uint32_t>(c));
  payload.u32(static_cast<std::uint32_t>(ck.bits));
  payload.u32(static_cast<std::uint32_t>(ck.entries.size()));
  for (const auto& e : ck.entries) {
    payload.str(e.name);
    payload.u8(e.quantized ? 1 : 0);
    payload.u32(static_cast<std::uint32_t>(e.shape.size()));
    for (auto d : e.shape) payload.u32(static_cast<std::uint32_t>(d));
    if (e.quantized) {
      payload.f64(e.scale);
      for (auto c : e.codes) payload.u8(static_cast<std::uint8_t>(c));
    } else {
      for (double v : e.values) payload.f64(v);
    }
  }
  payload.str(ck.metrics_csv);

  Writer out;
  for (char c : kCheckpointMagic) out.u8(static_cast<std::uint8_t>(c));
  out.u32(kCheckpointVersion);
  const auto& body = payload.bytes();
  out.u64(body.size());
  out.bytes().insert(out.bytes().end(), body.begin(), body.end());
  out.u32(crc(body.data(), body.size()));
  return std::move(out.bytes());
}

QuantizedCheckpoint decode_checkpoint(const std::vector<unsigned char>& bytes) {
  if (bytes.size() < kHeaderBytes + 4) {
    throw FormatError("checkpoint too short: " + std::to_string(bytes.size()) + " bytes");
  }
  if (std::memcmp(bytes.data(), kCheckpointMagic, sizeof(kCheckpointMagic)) != 0) {
    throw FormatError("not a checkpoint: bad magic at byte offset 0");
  }
  Reader header(bytes.data() + sizeof(kCheckpointMagic), 12, sizeof(kCheckpointMagic));
  const std::uint32_t version = header.u32();
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint version mismatch: file has " + std::to_string(version) + ", reader supports " +
                      std::to_string(kCheckpointVersion));
  }
  const std::uint64_t length = header.u64();
  if (length != bytes.size() - kHeaderBytes - 4) {
    throw FormatError("checkpoint length mismatch: header declares " + std::to_string(length) + " payload bytes, file has " +
                      std::to_string(bytes.size() - kHeaderBytes - 4));
  }
  const unsigned char* body = bytes.data() + kHeaderBytes;
  Reader trailer(body + length, 4, kHeaderBytes + length);
  if (trailer.u32() != crc(body, length)) throw FormatError("checkpoint corrupted: checksum mismatch");

  Reader r(body, length, kHeaderBytes);
  QuantizedCheckpoint ck;
  auto& a = ck.architecture;
  a.in_channels = r.u32();
  a.height = r.u32();
  a.width = r.u32();
  a.classes = r.u32();
  a.kernel = r.u32();
  a.padding = r.u32();
  a.pool = r.u32();
  a.conv_channels.resize(r.u32());
  for (auto& c : a.conv_channels) c = r.u32();
  ck.bits = static_cast<int>(r.u32());
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    CheckpointEntry e;
    e.name = r.str();
    e.quantized = r.u8() != 0;
    e.shape.resize(r.u32());
    for (auto& d : e.shape) d = r.u32();
    const std::size_t n = shape_numel(e.shape);
    if (e.quantized) {
      e.scale = r.f64();
      e.codes.resize(n);
      for (auto& c : e.codes) c = static_cast<std::int8_t>(r.u8());
    } else {
      e.values.resize(n);
      for (auto& v : e.values) v = r.f64();
    }
    ck.entries.push_back(std::move(e));
  }
  ck.metrics_csv = r.str();
  if (!r.done()) throw FormatError("checkpoint has trailing bytes in payload");
  return ck;
}

void write_checkpoint(const std::string& path, const QuantizedCheckpoint& ck) {
  const auto bytes = encode_checkpoint(ck);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot write checkpoint " + path);
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

QuantizedCheckpoint read_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open checkpoint " + path);
  std::vector<unsigned char> bytes{std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
  return decode_checkpoint(bytes);
}

double eval_accuracy(const QuantizedCheckpoint& ck, const Dataset& data) {
  return eval_accuracy(ck.architecture, ck.params(), data);
}

}  // namespace qprune
