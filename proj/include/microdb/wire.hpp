#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "microdb/error.hpp"

// Canonical serialization used everywhere bytes must be bit-exact: the store
// log, content hashing and the sync wire protocol.
//
//   integers    big-endian, fixed width
//   i64 / f64   two's complement / IEEE-754 bits, 8 bytes big-endian
//   string      u32 byte length + UTF-8 bytes
//   bytes       u32 length + raw bytes
//
// Store log frame:  u32 payload length | u8 frame kind | payload
// Sync frame:       u32 payload length | u8 type | u8 version | payload
// The length covers the payload only, never the header bytes.

namespace microdb {

using Bytes = std::vector<std::uint8_t>;

inline constexpr std::uint8_t kFrameRecord = 0x01;
inline constexpr std::uint8_t kFrameTombstone = 0x02;

inline constexpr std::uint8_t kSyncHello = 0x10;
inline constexpr std::uint8_t kSyncDelta = 0x11;
inline constexpr std::uint8_t kSyncPolicy = 0x12;
inline constexpr std::uint8_t kSyncAck = 0x13;
inline constexpr std::uint8_t kSyncProtocolVersion = 0x01;

class Encoder {
 public:
  void u8(std::uint8_t v) { buf_.push_back(v); }

  void u16(std::uint16_t v) {
    buf_.push_back(static_cast<std::uint8_t>(v >> 8));
    buf_.push_back(static_cast<std::uint8_t>(v));
  }

  void u32(std::uint32_t v) {
    for (int shift = 24; shift >= 0; shift -= 8)
      buf_.push_back(static_cast<std::uint8_t>(v >> shift));
  }

  void u64(std::uint64_t v) {
    for (int shift = 56; shift >= 0; shift -= 8)
      buf_.push_back(static_cast<std::uint8_t>(v >> shift));
  }

  void i64(std::int64_t v) { u64(static_cast<std::uint64_t>(v)); }

  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

  void str(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    buf_.insert(buf_.end(), s.begin(), s.end());
  }

  void bytes(std::span<const std::uint8_t> b) {
    u32(static_cast<std::uint32_t>(b.size()));
    buf_.insert(buf_.end(), b.begin(), b.end());
  }

  void raw(std::span<const std::uint8_t> b) {
    buf_.insert(buf_.end(), b.begin(), b.end());
  }

  const Bytes& data() const { return buf_; }
  Bytes take() { return std::move(buf_); }

 private:
  Bytes buf_;
};

class Decoder {
 public:
  explicit Decoder(std::span<const std::uint8_t> data) : data_(data) {}

  Result<std::uint8_t> u8() {
    if (pos_ + 1 > data_.size()) return underflow();
    return data_[pos_++];
  }

  Result<std::uint32_t> u32() {
    if (pos_ + 4 > data_.size()) return underflow();
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v = (v << 8) | data_[pos_++];
    return v;
  }

  Result<std::uint64_t> u64() {
    if (pos_ + 8 > data_.size()) return underflow();
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v = (v << 8) | data_[pos_++];
    return v;
  }

  Result<std::int64_t> i64() {
    auto v = u64();
    if (!v) return v.error();
    return static_cast<std::int64_t>(v.value());
  }

  Result<double> f64() {
    auto v = u64();
    if (!v) return v.error();
    return std::bit_cast<double>(v.value());
  }

  Result<std::string> str() {
    auto n = u32();
    if (!n) return n.error();
    if (pos_ + n.value() > data_.size()) return underflow();
    std::string s(reinterpret_cast<const char*>(data_.data() + pos_),
                  n.value());
    pos_ += n.value();
    return s;
  }

  Result<Bytes> bytes() {
    auto n = u32();
    if (!n) return n.error();
    if (pos_ + n.value() > data_.size()) return underflow();
    Bytes b(data_.begin() + static_cast<std::ptrdiff_t>(pos_),
            data_.begin() + static_cast<std::ptrdiff_t>(pos_ + n.value()));
    pos_ += n.value();
    return b;
  }

  bool done() const { return pos_ == data_.size(); }
  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  Error underflow() const {
    return make_error(Errc::decode_error, "truncated payload");
  }

  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
};

struct SyncFrame {
  std::uint8_t type = 0;
  std::uint8_t version = kSyncProtocolVersion;
  Bytes payload;

  bool operator==(const SyncFrame&) const = default;
};

inline void append_log_frame(Bytes& out, std::uint8_t kind,
                             std::span<const std::uint8_t> payload) {
  Encoder e;
  e.u32(static_cast<std::uint32_t>(payload.size()));
  e.u8(kind);
  e.raw(payload);
  Bytes b = e.take();
  out.insert(out.end(), b.begin(), b.end());
}

// Reads one log frame starting at `pos`; advances `pos` past it.
inline Result<std::pair<std::uint8_t, Bytes>> read_log_frame(
    std::span<const std::uint8_t> data, std::size_t& pos) {
  if (pos + 5 > data.size())
    return make_error(Errc::decode_error, "truncated frame header");
  std::uint32_t len = 0;
  for (int i = 0; i < 4; ++i) len = (len << 8) | data[pos + i];
  std::uint8_t kind = data[pos + 4];
  if (pos + 5 + len > data.size())
    return make_error(Errc::decode_error, "truncated frame payload");
  Bytes payload(data.begin() + static_cast<std::ptrdiff_t>(pos + 5),
                data.begin() + static_cast<std::ptrdiff_t>(pos + 5 + len));
  pos += 5 + len;
  return std::make_pair(kind, std::move(payload));
}

inline Bytes encode_sync_frame(const SyncFrame& f) {
  Encoder e;
  e.u32(static_cast<std::uint32_t>(f.payload.size()));
  e.u8(f.type);
  e.u8(f.version);
  e.raw(f.payload);
  return e.take();
}

inline Result<SyncFrame> decode_sync_frame(std::span<const std::uint8_t> data,
                                           std::size_t& pos) {
  if (pos + 6 > data.size())
    return make_error(Errc::decode_error, "truncated sync frame header");
  std::uint32_t len = 0;
  for (int i = 0; i < 4; ++i) len = (len << 8) | data[pos + i];
  SyncFrame f;
  f.type = data[pos + 4];
  f.version = data[pos + 5];
  if (f.version != kSyncProtocolVersion)
    return make_error(Errc::decode_error, "protocol version mismatch");
  if (pos + 6 + len > data.size())
    return make_error(Errc::decode_error, "truncated sync frame payload");
  f.payload.assign(data.begin() + static_cast<std::ptrdiff_t>(pos + 6),
                   data.begin() + static_cast<std::ptrdiff_t>(pos + 6 + len));
  pos += 6 + len;
  return f;
}

inline std::string to_hex(std::span<const std::uint8_t> bytes) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(bytes.size() * 2);
  for (std::uint8_t c : bytes) {
    out.push_back(kHex[(c >> 4) & 0x0F]);
    out.push_back(kHex[c & 0x0F]);
  }
  return out;
}

inline Result<Bytes> from_hex(std::string_view hex) {
  auto nibble = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
  };
  if (hex.size() % 2 != 0)
    return make_error(Errc::malformed, "odd hex length");
  Bytes out;
  out.reserve(hex.size() / 2);
  for (std::size_t i = 0; i < hex.size(); i += 2) {
    int hi = nibble(hex[i]);
    int lo = nibble(hex[i + 1]);
    if (hi < 0 || lo < 0) return make_error(Errc::malformed, "bad hex digit");
    out.push_back(static_cast<std::uint8_t>((hi << 4) | lo));
  }
  return out;
}

}  // namespace microdb
