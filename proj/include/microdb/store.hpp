#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "microdb/crypto.hpp"
#include "microdb/error.hpp"
#include "microdb/record.hpp"

namespace microdb {

enum class Mutability : std::uint8_t { immutable = 0, mutable_ = 1 };

inline const char* mutability_name(Mutability m) {
  return m == Mutability::immutable ? "immutable" : "mutable";
}

inline Result<Mutability> mutability_from_name(std::string_view s) {
  if (s == "immutable") return Mutability::immutable;
  if (s == "mutable") return Mutability::mutable_;
  return make_error(Errc::invalid_config, "unknown mutability " + std::string(s));
}

struct IngestSpec {
  std::string source_id;
  bool poll = false;          // false = push
  std::int64_t period_ms = 0; // poll mode only
  std::string address;

  bool operator==(const IngestSpec&) const = default;
};

struct ColumnStoreConfig {
  std::string name;
  Mutability mutability = Mutability::immutable;
  std::optional<std::string> value_type;
  bool encrypted = false;
  std::optional<std::uint64_t> retention;  // max visible record count
  std::optional<IngestSpec> ingest;

  bool operator==(const ColumnStoreConfig&) const = default;
};

inline bool valid_store_name(std::string_view name) {
  if (name.empty() || name.size() > 64) return false;
  for (char c : name) {
    bool ok = (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_' ||
              c == '-';
    if (!ok) return false;
  }
  return true;
}

inline constexpr std::string_view kRegistryStore = "__registry";

struct StoredVersion {
  std::uint8_t kind = kFrameRecord;
  Value value;
  Provenance prov;

  bool is_tombstone() const { return kind == kFrameTombstone; }
};

struct ApplyOutcome {
  bool deduplicated = false;
  bool conflict = false;        // a different version of the key already existed
  bool became_visible = false;  // the applied entry is now the current version
};

// One append-mostly column store: an append-only log file plus in-memory
// indexes rebuilt on open. Not thread-safe; the owning database serializes
// access per its concurrency contract.
class ColumnStore {
 public:
  ColumnStore(std::filesystem::path dir, std::string db_id,
              ColumnStoreConfig config, Bytes data_key,
              CryptoProvider* provider)
      : dir_(std::move(dir)),
        db_id_(std::move(db_id)),
        config_(std::move(config)),
        data_key_(std::move(data_key)),
        provider_(provider) {}

  const ColumnStoreConfig& config() const { return config_; }
  std::filesystem::path log_path() const {
    return dir_ / (config_.name + ".log");
  }

  Result<void> open() {
    std::error_code ec;
    std::filesystem::create_directories(dir_, ec);
    if (std::filesystem::exists(log_path())) {
      auto r = replay();
      if (!r) return r;
    }
    out_.open(log_path(), std::ios::binary | std::ios::app);
    if (!out_)
      return make_error(Errc::io_error,
                        "cannot open " + log_path().string());
    return {};
  }

  void close() {
    if (out_.is_open()) out_.close();
  }

  Result<void> destroy() {
    close();
    std::error_code ec;
    std::filesystem::remove(log_path(), ec);
    if (ec) return make_error(Errc::io_error, ec.message());
    return {};
  }

  // Collision rule: seq = 1 + highest seq ever committed at this ts.
  RecordKey place_key(std::int64_t ts) const {
    auto it = max_seq_for_ts_.find(ts);
    if (it == max_seq_for_ts_.end()) return RecordKey{ts, 0};
    return RecordKey{ts, it->second + 1};
  }

  bool key_committed(const RecordKey& k) const {
    auto it = max_seq_for_ts_.find(k.ts);
    return it != max_seq_for_ts_.end() && k.seq <= it->second;
  }

  std::uint64_t next_origin_seq(const std::string& origin) const {
    auto it = entries_.find(origin);
    if (it == entries_.end() || it->second.empty()) return 1;
    return it->second.rbegin()->first + 1;
  }

  // Highest contiguous-from-1 origin_seq committed for an origin. Meaningful
  // for the local origin, where assignment is gapless by construction.
  std::uint64_t contiguous_seq(const std::string& origin) const {
    auto it = entries_.find(origin);
    if (it == entries_.end()) return 0;
    std::uint64_t expect = 1;
    for (const auto& [seq, _] : it->second) {
      if (seq != expect) break;
      ++expect;
    }
    return expect - 1;
  }

  Result<ApplyOutcome> apply(const Entry& e) {
    return apply_impl(e, /*durable=*/true);
  }

  const StoredVersion* current(const RecordKey& k) const {
    auto it = current_.find(k);
    return it == current_.end() ? nullptr : &it->second;
  }

  std::vector<Record> read_range(const RecordKey& lo, const RecordKey& hi,
                                 std::uint64_t limit) const {
    std::vector<Record> out;
    if (!(lo < hi)) return out;
    for (auto it = current_.lower_bound(lo);
         it != current_.end() && it->first < hi; ++it) {
      if (it->second.is_tombstone()) continue;
      out.push_back(Record{it->first, it->second.value, it->second.prov});
      if (limit != 0 && out.size() >= limit) break;
    }
    return out;
  }

  std::uint64_t visible_count() const {
    std::uint64_t n = 0;
    for (const auto& [_, v] : current_)
      if (!v.is_tombstone()) ++n;
    return n;
  }

  // Digest over the canonical serialization of visible records inside the
  // range, in key order. Equal record multisets hash equal by construction.
  Bytes content_hash(const KeyRange& range = KeyRange::all()) const {
    Encoder e;
    for (const auto& [key, v] : current_) {
      if (v.is_tombstone()) continue;
      if (!range.contains(key)) continue;
      encode_entry(e, Entry{v.kind, Record{key, v.value, v.prov}});
    }
    return sha256(e.data());
  }

  // Entries of one origin with origin_seq in (after, upto], filtered to keys
  // inside the range; ascending origin_seq.
  std::vector<Entry> entries_for(const std::string& origin,
                                 std::uint64_t after, std::uint64_t upto,
                                 const KeyRange& range,
                                 std::size_t max_count) const {
    std::vector<Entry> out;
    auto it = entries_.find(origin);
    if (it == entries_.end()) return out;
    for (auto jt = it->second.upper_bound(after);
         jt != it->second.end() && jt->first <= upto; ++jt) {
      if (!range.contains(jt->second.rec.key)) continue;
      out.push_back(jt->second);
      if (max_count != 0 && out.size() >= max_count) break;
    }
    return out;
  }

  std::vector<std::string> origins() const {
    std::vector<std::string> out;
    for (const auto& [origin, _] : entries_) out.push_back(origin);
    return out;
  }

  std::uint64_t max_origin_seq(const std::string& origin) const {
    auto it = entries_.find(origin);
    if (it == entries_.end() || it->second.empty()) return 0;
    return it->second.rbegin()->first;
  }

  const std::vector<StoredVersion>* history(const RecordKey& k) const {
    auto it = history_.find(k);
    return it == history_.end() ? nullptr : &it->second;
  }

  std::uint64_t conflicts() const { return conflicts_; }
  std::uint64_t committed(std::uint8_t kind) const {
    return kind == kFrameRecord ? committed_records_ : committed_tombstones_;
  }

 private:
  Result<ApplyOutcome> apply_impl(const Entry& e, bool durable) {
    ApplyOutcome out;
    auto& per_origin = entries_[e.rec.prov.origin_id];
    if (per_origin.contains(e.rec.prov.origin_seq)) {
      out.deduplicated = true;
      return out;
    }
    if (durable) {
      auto w = write_frame(e);
      if (!w) return w.error();
    }
    per_origin.emplace(e.rec.prov.origin_seq, e);
    auto [seq_it, inserted] =
        max_seq_for_ts_.try_emplace(e.rec.key.ts, e.rec.key.seq);
    if (!inserted && e.rec.key.seq > seq_it->second)
      seq_it->second = e.rec.key.seq;
    if (e.is_tombstone())
      ++committed_tombstones_;
    else
      ++committed_records_;

    StoredVersion incoming{e.kind, e.rec.value, e.rec.prov};
    auto cur = current_.find(e.rec.key);
    if (cur == current_.end()) {
      current_.emplace(e.rec.key, std::move(incoming));
      out.became_visible = true;
    } else {
      out.conflict = cur->second.prov.origin_id != e.rec.prov.origin_id;
      if (out.conflict) ++conflicts_;
      if (conflict_rank(incoming.prov) > conflict_rank(cur->second.prov)) {
        history_[e.rec.key].push_back(std::move(cur->second));
        cur->second = std::move(incoming);
        out.became_visible = true;
      } else {
        history_[e.rec.key].push_back(std::move(incoming));
      }
    }
    enforce_retention();
    return out;
  }

  void enforce_retention() {
    if (!config_.retention) return;
    std::uint64_t visible = visible_count();
    auto it = current_.begin();
    while (visible > *config_.retention && it != current_.end()) {
      if (it->second.is_tombstone()) {
        ++it;
        continue;
      }
      history_.erase(it->first);
      it = current_.erase(it);
      --visible;
    }
  }

  Result<void> write_frame(const Entry& e) {
    Encoder body;
    encode_record_body(body, e.rec);
    Bytes payload = body.take();
    if (config_.encrypted) {
      if (data_key_.size() != kKeyLen || provider_ == nullptr)
        return make_error(Errc::no_key,
                          "store " + config_.name + " has no data key");
      payload = provider_->seal(data_key_, payload, frame_aad(e.kind));
    }
    Bytes frame;
    append_log_frame(frame, e.kind, payload);
    out_.write(reinterpret_cast<const char*>(frame.data()),
               static_cast<std::streamsize>(frame.size()));
    out_.flush();
    if (!out_) return make_error(Errc::io_error, "log write failed");
    return {};
  }

  Bytes frame_aad(std::uint8_t kind) const {
    Encoder e;
    e.str(db_id_);
    e.str(config_.name);
    e.u8(kind);
    return e.take();
  }

  Result<void> replay() {
    std::ifstream in(log_path(), std::ios::binary);
    if (!in)
      return make_error(Errc::io_error, "cannot read " + log_path().string());
    Bytes data((std::istreambuf_iterator<char>(in)),
               std::istreambuf_iterator<char>());
    std::size_t pos = 0;
    while (pos < data.size()) {
      auto frame = read_log_frame(data, pos);
      if (!frame) return frame.error();
      auto [kind, payload] = std::move(frame).value();
      Bytes body = std::move(payload);
      if (config_.encrypted) {
        if (data_key_.size() != kKeyLen || provider_ == nullptr)
          return make_error(Errc::no_key,
                            "store " + config_.name + " has no data key");
        auto opened = provider_->open(data_key_, body, frame_aad(kind));
        if (!opened) return opened.error();
        body = std::move(opened).value();
      }
      Decoder d(body);
      auto rec = decode_record_body(d);
      if (!rec || !d.done())
        return make_error(Errc::decode_error,
                          "corrupt log frame in " + config_.name);
      auto applied = apply_impl(Entry{kind, std::move(rec).value()},
                                /*durable=*/false);
      if (!applied) return applied.error();
    }
    return {};
  }

  std::filesystem::path dir_;
  std::string db_id_;
  ColumnStoreConfig config_;
  Bytes data_key_;
  CryptoProvider* provider_;

  std::ofstream out_;
  std::map<RecordKey, StoredVersion> current_;
  std::map<RecordKey, std::vector<StoredVersion>> history_;
  std::map<std::string, std::map<std::uint64_t, Entry>> entries_;
  std::map<std::int64_t, std::uint32_t> max_seq_for_ts_;
  std::uint64_t conflicts_ = 0;
  std::uint64_t committed_records_ = 0;
  std::uint64_t committed_tombstones_ = 0;
};

}  // namespace microdb
