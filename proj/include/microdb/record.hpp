#pragma once

#include <compare>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <tuple>

#include "microdb/value.hpp"
#include "microdb/wire.hpp"

namespace microdb {

// (ts, seq) composite key. seq stays 0 unless a same-timestamp collision was
// resolved at write time.
struct RecordKey {
  std::int64_t ts = 0;
  std::uint32_t seq = 0;

  auto operator<=>(const RecordKey&) const = default;

  RecordKey next() const {
    if (seq == std::numeric_limits<std::uint32_t>::max())
      return RecordKey{ts + 1, 0};
    return RecordKey{ts, seq + 1};
  }

  std::string to_string() const {
    return std::to_string(ts) + "," + std::to_string(seq);
  }
};

struct Provenance {
  std::string origin_id;
  std::uint64_t origin_seq = 0;
  std::int64_t write_ts = 0;

  bool operator==(const Provenance&) const = default;
};

// Total order that decides conflict winners: later write_ts dominates, origin
// id breaks ties, origin_seq orders same-origin same-instant commits.
inline std::tuple<std::int64_t, const std::string&, std::uint64_t>
conflict_rank(const Provenance& p) {
  return {p.write_ts, p.origin_id, p.origin_seq};
}

struct Record {
  RecordKey key;
  Value value;
  Provenance prov;

  bool operator==(const Record&) const = default;
};

// One committed store mutation: a record (kFrameRecord) or a deletion marker
// (kFrameTombstone, value is none). This is the unit that lands in the log,
// ships in DELTA frames and feeds the content hash.
struct Entry {
  std::uint8_t kind = kFrameRecord;
  Record rec;

  bool is_tombstone() const { return kind == kFrameTombstone; }
  bool operator==(const Entry&) const = default;
};

// Canonical record body: ts i64 | seq u32 | value | origin str | origin_seq
// u64 | write_ts i64.
inline void encode_record_body(Encoder& e, const Record& r) {
  e.i64(r.key.ts);
  e.u32(r.key.seq);
  r.value.encode(e);
  e.str(r.prov.origin_id);
  e.u64(r.prov.origin_seq);
  e.i64(r.prov.write_ts);
}

inline Result<Record> decode_record_body(Decoder& d) {
  Record r;
  auto ts = d.i64();
  if (!ts) return ts.error();
  r.key.ts = ts.value();
  auto seq = d.u32();
  if (!seq) return seq.error();
  r.key.seq = seq.value();
  auto v = Value::decode(d);
  if (!v) return v.error();
  r.value = std::move(v).value();
  auto origin = d.str();
  if (!origin) return origin.error();
  r.prov.origin_id = std::move(origin).value();
  auto oseq = d.u64();
  if (!oseq) return oseq.error();
  r.prov.origin_seq = oseq.value();
  auto wts = d.i64();
  if (!wts) return wts.error();
  r.prov.write_ts = wts.value();
  return r;
}

inline void encode_entry(Encoder& e, const Entry& entry) {
  e.u8(entry.kind);
  encode_record_body(e, entry.rec);
}

inline Result<Entry> decode_entry(Decoder& d) {
  auto kind = d.u8();
  if (!kind) return kind.error();
  if (kind.value() != kFrameRecord && kind.value() != kFrameTombstone)
    return make_error(Errc::decode_error, "unknown entry kind");
  auto body = decode_record_body(d);
  if (!body) return body.error();
  return Entry{kind.value(), std::move(body).value()};
}

// Half-open [lo, hi); an absent bound is unbounded on that side.
struct KeyRange {
  std::optional<RecordKey> lo;
  std::optional<RecordKey> hi;

  bool operator==(const KeyRange&) const = default;

  static KeyRange all() { return {}; }
  static KeyRange bounded(RecordKey lo, RecordKey hi) { return {lo, hi}; }
  static KeyRange single(RecordKey k) { return {k, k.next()}; }

  bool is_all() const { return !lo && !hi; }
  bool empty() const { return lo && hi && !(*lo < *hi); }

  bool contains(const RecordKey& k) const {
    if (lo && k < *lo) return false;
    if (hi && !(k < *hi)) return false;
    return true;
  }

  // True when every key of `r` lies inside this range.
  bool contains(const KeyRange& r) const {
    if (r.empty()) return true;
    if (lo && (!r.lo || *r.lo < *lo)) return false;
    if (hi && (!r.hi || *hi < *r.hi)) return false;
    return true;
  }

  std::string to_string() const {
    auto side = [](const std::optional<RecordKey>& k) {
      return k ? k->to_string() : std::string("*");
    };
    return "[" + side(lo) + "," + side(hi) + ")";
  }
};

inline void encode_key_range(Encoder& e, const KeyRange& r) {
  e.u8(static_cast<std::uint8_t>((r.lo ? 1 : 0) | (r.hi ? 2 : 0)));
  if (r.lo) {
    e.i64(r.lo->ts);
    e.u32(r.lo->seq);
  }
  if (r.hi) {
    e.i64(r.hi->ts);
    e.u32(r.hi->seq);
  }
}

inline Result<KeyRange> decode_key_range(Decoder& d) {
  auto flags = d.u8();
  if (!flags) return flags.error();
  KeyRange r;
  if (flags.value() & 1) {
    auto ts = d.i64();
    if (!ts) return ts.error();
    auto seq = d.u32();
    if (!seq) return seq.error();
    r.lo = RecordKey{ts.value(), seq.value()};
  }
  if (flags.value() & 2) {
    auto ts = d.i64();
    if (!ts) return ts.error();
    auto seq = d.u32();
    if (!seq) return seq.error();
    r.hi = RecordKey{ts.value(), seq.value()};
  }
  return r;
}

}  // namespace microdb
