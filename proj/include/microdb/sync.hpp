#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "microdb/crypto.hpp"
#include "microdb/error.hpp"
#include "microdb/record.hpp"
#include "microdb/security.hpp"
#include "microdb/wire.hpp"

namespace microdb {

// At most this many records ride in one DELTA frame.
inline constexpr std::size_t kMaxDeltaBatch = 1000;

struct SyncFilter {
  std::vector<std::string> store_patterns;
  KeyRange range;                   // optional key filter
  std::optional<std::string> tag;   // bound-instance tag predicate

  bool has_selector() const {
    return !store_patterns.empty() || !range.is_all() || tag.has_value();
  }

  bool operator==(const SyncFilter&) const = default;
};

struct SyncLinkConfig {
  std::string link_id;
  std::string peer_replica;
  TierKind peer_tier = TierKind::local;
  SyncFilter filter;
  std::optional<std::int64_t> period_ms;  // absent = manual rounds only
  Bytes link_key;                         // 32 bytes, provisioned
  std::string endpoint;                   // http://host:port for real links

  bool operator==(const SyncLinkConfig&) const = default;
};

// (store, origin) -> highest origin_seq known covered. "Covered" means every
// filter-matching entry with a seq at or below the mark has been seen.
class WatermarkVector {
 public:
  using Key = std::pair<std::string, std::string>;

  std::uint64_t get(const std::string& store, const std::string& origin) const {
    auto it = marks_.find({store, origin});
    return it == marks_.end() ? 0 : it->second;
  }

  // Never decreases an existing mark.
  void advance(const std::string& store, const std::string& origin,
               std::uint64_t seq) {
    auto [it, inserted] = marks_.try_emplace({store, origin}, seq);
    if (!inserted && seq > it->second) it->second = seq;
  }

  void merge_max(const WatermarkVector& o) {
    for (const auto& [k, v] : o.marks_) advance(k.first, k.second, v);
  }

  void drop_store(const std::string& store) {
    std::erase_if(marks_, [&](const auto& kv) { return kv.first.first == store; });
  }

  const std::map<Key, std::uint64_t>& marks() const { return marks_; }
  bool empty() const { return marks_.empty(); }

  void encode(Encoder& e) const {
    e.u32(static_cast<std::uint32_t>(marks_.size()));
    for (const auto& [k, v] : marks_) {
      e.str(k.first);
      e.str(k.second);
      e.u64(v);
    }
  }

  static Result<WatermarkVector> decode(Decoder& d) {
    WatermarkVector w;
    auto n = d.u32();
    if (!n) return n.error();
    for (std::uint32_t i = 0; i < n.value(); ++i) {
      auto store = d.str();
      if (!store) return store.error();
      auto origin = d.str();
      if (!origin) return origin.error();
      auto seq = d.u64();
      if (!seq) return seq.error();
      w.advance(store.value(), origin.value(), seq.value());
    }
    return w;
  }

 private:
  std::map<Key, std::uint64_t> marks_;
};

struct SyncLinkState {
  SyncLinkConfig config;
  WatermarkVector received;    // what this side has received over the link
  WatermarkVector peer_acked;  // what the peer confirmed it has committed
  std::uint64_t rounds = 0;
  std::uint64_t records_in = 0;
  std::uint64_t records_out = 0;
};

struct SyncReport {
  std::string link_id;
  std::map<std::string, std::uint64_t> sent;      // per store
  std::map<std::string, std::uint64_t> received;  // per store
  std::uint64_t conflicts = 0;
  std::uint64_t deduplicated = 0;
  std::uint64_t rejected_in = 0;   // sync-in callback rejections
  std::uint64_t rejected_out = 0;  // sync-out callback rejections
  bool policy_sent = false;
  bool policy_applied = false;
  std::vector<std::string> warnings;

  std::uint64_t total_sent() const {
    std::uint64_t n = 0;
    for (const auto& [_, v] : sent) n += v;
    return n;
  }
  std::uint64_t total_received() const {
    std::uint64_t n = 0;
    for (const auto& [_, v] : received) n += v;
    return n;
  }
  bool quiescent() const { return total_sent() == 0 && total_received() == 0; }
};

// -- frame payloads --
// Every payload begins with the cleartext link id so the receiver can select
// the link key; the body of every frame except HELLO is sealed with that key.

struct HelloPayload {
  std::string link_id;
  std::string sender;
  bool registry_only = false;
  WatermarkVector watermarks;
};

struct DeltaPayload {
  std::string link_id;
  std::string store;
  std::string origin;
  std::uint64_t upto = 0;  // receiver may advance its mark here after apply
  std::vector<Entry> entries;
};

struct AckPayload {
  std::string link_id;
  WatermarkVector watermarks;
};

struct PolicyPayload {
  std::string link_id;
  PolicyBundle bundle;
};

inline Bytes sync_frame_aad(const std::string& link_id, std::uint8_t type) {
  Encoder e;
  e.str(link_id);
  e.u8(type);
  e.u8(kSyncProtocolVersion);
  return e.take();
}

inline SyncFrame make_hello_frame(const HelloPayload& p) {
  Encoder e;
  e.str(p.link_id);
  e.str(p.sender);
  e.u8(p.registry_only ? 1 : 0);
  p.watermarks.encode(e);
  return SyncFrame{kSyncHello, kSyncProtocolVersion, e.take()};
}

inline Result<HelloPayload> parse_hello_frame(const SyncFrame& f) {
  Decoder d(f.payload);
  HelloPayload p;
  auto link = d.str();
  if (!link) return link.error();
  p.link_id = std::move(link).value();
  auto sender = d.str();
  if (!sender) return sender.error();
  p.sender = std::move(sender).value();
  auto flag = d.u8();
  if (!flag) return flag.error();
  p.registry_only = flag.value() != 0;
  auto w = WatermarkVector::decode(d);
  if (!w) return w.error();
  p.watermarks = std::move(w).value();
  if (!d.done()) return make_error(Errc::decode_error, "trailing hello bytes");
  return p;
}

// Builds a sealed non-HELLO frame: payload = link_id | seal(body).
inline SyncFrame make_sealed_frame(std::uint8_t type,
                                   const std::string& link_id,
                                   std::span<const std::uint8_t> body,
                                   CryptoProvider& provider,
                                   std::span<const std::uint8_t> link_key) {
  Bytes sealed = provider.seal(link_key, body, sync_frame_aad(link_id, type));
  Encoder e;
  e.str(link_id);
  e.raw(sealed);
  return SyncFrame{type, kSyncProtocolVersion, e.take()};
}

inline Result<std::string> peek_link_id(const SyncFrame& f) {
  Decoder d(f.payload);
  return d.str();
}

inline Result<Bytes> open_sealed_frame(const SyncFrame& f,
                                       CryptoProvider& provider,
                                       std::span<const std::uint8_t> link_key) {
  Decoder d(f.payload);
  auto link = d.str();
  if (!link) return link.error();
  Bytes sealed(f.payload.begin() +
                   static_cast<std::ptrdiff_t>(f.payload.size() - d.remaining()),
               f.payload.end());
  return provider.open(link_key, sealed, sync_frame_aad(link.value(), f.type));
}

inline Bytes encode_delta_body(const DeltaPayload& p) {
  Encoder e;
  e.str(p.store);
  e.str(p.origin);
  e.u64(p.upto);
  e.u32(static_cast<std::uint32_t>(p.entries.size()));
  for (const auto& entry : p.entries) encode_entry(e, entry);
  return e.take();
}

inline Result<DeltaPayload> decode_delta_body(std::span<const std::uint8_t> body) {
  Decoder d(body);
  DeltaPayload p;
  auto store = d.str();
  if (!store) return store.error();
  p.store = std::move(store).value();
  auto origin = d.str();
  if (!origin) return origin.error();
  p.origin = std::move(origin).value();
  auto upto = d.u64();
  if (!upto) return upto.error();
  p.upto = upto.value();
  auto n = d.u32();
  if (!n) return n.error();
  for (std::uint32_t i = 0; i < n.value(); ++i) {
    auto entry = decode_entry(d);
    if (!entry) return entry.error();
    p.entries.push_back(std::move(entry).value());
  }
  if (!d.done()) return make_error(Errc::decode_error, "trailing delta bytes");
  return p;
}

inline Bytes encode_ack_body(const WatermarkVector& w) {
  Encoder e;
  w.encode(e);
  return e.take();
}

inline Result<WatermarkVector> decode_ack_body(std::span<const std::uint8_t> body) {
  Decoder d(body);
  auto w = WatermarkVector::decode(d);
  if (!w) return w.error();
  if (!d.done()) return make_error(Errc::decode_error, "trailing ack bytes");
  return w;
}

inline Bytes encode_policy_body(const PolicyBundle& b) {
  Encoder e;
  encode_policy_bundle(e, b);
  return e.take();
}

inline Result<PolicyBundle> decode_policy_body(std::span<const std::uint8_t> body) {
  Decoder d(body);
  auto b = decode_policy_bundle(d);
  if (!b) return b.error();
  if (!d.done()) return make_error(Errc::decode_error, "trailing policy bytes");
  return b;
}

// -- transport --

// One request/response exchange per protocol phase. Implementations must
// deliver request frames to the peer in order and return the peer's reply.
class SyncTransport {
 public:
  virtual ~SyncTransport() = default;
  virtual Result<std::vector<SyncFrame>> exchange(
      const std::vector<SyncFrame>& frames) = 0;
};

// In-process transport used by the harness and tests. Frames are passed
// through the exact wire encoding (encode + decode round trip) so the byte
// format is exercised even without a socket. Supports scripted outages,
// frame-level crash injection and wire capture.
class InMemoryTransport final : public SyncTransport {
 public:
  using FrameHandler =
      std::function<Result<std::vector<SyncFrame>>(const SyncFrame&)>;

  explicit InMemoryTransport(FrameHandler peer) : peer_(std::move(peer)) {}

  // Link up/down; consulted at every exchange.
  std::function<bool()> link_up = [] { return true; };

  // Frames deliverable (both directions) before the link "crashes".
  // Negative = unlimited.
  std::int64_t frame_budget = -1;

  // When set, every frame that crossed the wire is appended here.
  std::vector<SyncFrame>* capture = nullptr;

  Result<std::vector<SyncFrame>> exchange(
      const std::vector<SyncFrame>& frames) override {
    if (!link_up()) return make_error(Errc::transport_down, "link down");
    std::vector<SyncFrame> responses;
    for (const auto& f : frames) {
      auto delivered = deliver(f);
      if (!delivered) return delivered.error();
      auto reply = peer_(delivered.value());
      if (!reply) return reply.error();
      for (const auto& rf : reply.value()) {
        auto back = deliver(rf);
        if (!back) return back.error();
        responses.push_back(std::move(back).value());
      }
    }
    return responses;
  }

 private:
  Result<SyncFrame> deliver(const SyncFrame& f) {
    if (frame_budget == 0)
      return make_error(Errc::transport_down, "link failed mid-round");
    if (frame_budget > 0) --frame_budget;
    // Round-trip through the byte encoding; this is the wire.
    Bytes raw = encode_sync_frame(f);
    std::size_t pos = 0;
    auto decoded = decode_sync_frame(raw, pos);
    if (!decoded) return decoded.error();
    if (capture != nullptr) capture->push_back(decoded.value());
    return decoded;
  }

  FrameHandler peer_;
};

}  // namespace microdb
