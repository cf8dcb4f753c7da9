#pragma once

#include <cstdint>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "microdb/clock.hpp"
#include "microdb/error.hpp"
#include "microdb/store.hpp"
#include "microdb/value.hpp"

namespace microdb {

struct Reading {
  std::int64_t ts = 0;
  Value value;
};

class IngestSource {
 public:
  virtual ~IngestSource() = default;
  // Poll: readings with after_ts < ts <= now, ascending.
  virtual Result<std::vector<Reading>> fetch(std::int64_t after_ts,
                                             std::int64_t now) = 0;
};

// Pre-recorded reading stream with optional unreachable windows; the test
// and simulation source.
class ScriptedSource final : public IngestSource {
 public:
  ScriptedSource() = default;
  explicit ScriptedSource(std::vector<Reading> readings)
      : readings_(std::move(readings)) {
    std::sort(readings_.begin(), readings_.end(),
              [](const Reading& a, const Reading& b) { return a.ts < b.ts; });
  }

  void add_outage(std::int64_t from_ns, std::int64_t until_ns) {
    outages_.emplace_back(from_ns, until_ns);
  }

  Result<std::vector<Reading>> fetch(std::int64_t after_ts,
                                     std::int64_t now) override {
    for (const auto& [a, b] : outages_)
      if (now >= a && now < b)
        return make_error(Errc::source_unreachable, "scripted outage");
    std::vector<Reading> out;
    for (const auto& r : readings_)
      if (r.ts > after_ts && r.ts <= now) out.push_back(r);
    return out;
  }

 private:
  std::vector<Reading> readings_;
  std::vector<std::pair<std::int64_t, std::int64_t>> outages_;
};

// Line format: ts_ns<TAB>value_literal
inline Result<std::shared_ptr<ScriptedSource>> load_source_file(
    const std::string& path) {
  std::ifstream in(path);
  if (!in) return make_error(Errc::io_error, "cannot read " + path);
  std::vector<Reading> readings;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos)
      return make_error(Errc::parse_error,
                        path + ":" + std::to_string(lineno) + ": missing tab");
    Reading r;
    try {
      r.ts = std::stoll(line.substr(0, tab));
    } catch (...) {
      return make_error(Errc::parse_error,
                        path + ":" + std::to_string(lineno) + ": bad ts");
    }
    auto v = value_from_literal(line.substr(tab + 1));
    if (!v)
      return make_error(Errc::parse_error, path + ":" +
                                               std::to_string(lineno) + ": " +
                                               v.error().message);
    r.value = std::move(v).value();
    readings.push_back(std::move(r));
  }
  return std::make_shared<ScriptedSource>(std::move(readings));
}

// Resolves binding address strings. Knows "file:<path>" natively; anything
// else must have been registered (real protocol drivers are out of scope).
class SourceResolver {
 public:
  void register_source(const std::string& address,
                       std::shared_ptr<IngestSource> source) {
    sources_[address] = std::move(source);
  }

  Result<std::shared_ptr<IngestSource>> resolve(const std::string& address) {
    auto it = sources_.find(address);
    if (it != sources_.end()) return it->second;
    if (address.rfind("file:", 0) == 0) {
      auto src = load_source_file(address.substr(5));
      if (!src) return src.error();
      sources_[address] = src.value();
      return std::shared_ptr<IngestSource>(src.value());
    }
    return make_error(Errc::invalid_config, "unresolvable source " + address);
  }

 private:
  std::map<std::string, std::shared_ptr<IngestSource>> sources_;
};

enum class IngestOutcome : std::uint8_t {
  appended = 0,
  updated = 1,    // mutable store, same ts, new value
  duplicate = 2,  // same ts, identical value
  conflict = 3,   // immutable store, same ts, different value
};

struct IngestCounters {
  std::uint64_t appended = 0;
  std::uint64_t dropped = 0;
  std::uint64_t duplicate = 0;
  std::uint64_t unreachable = 0;
  std::map<std::string, std::uint64_t> drop_reasons;
};

struct BindingStatus {
  IngestSpec spec;
  std::string store;
  IngestCounters counters;
  std::int64_t last_seen_ts = std::numeric_limits<std::int64_t>::min();
  std::int64_t next_deadline_ns = 0;
};

// Drives record creation from sources, in push or poll mode. Every reading
// goes through the database's ingest commit path (authorization + ingest
// callback chain); nothing here bypasses it.
class IngestManager {
 public:
  // Performs the idempotent commit of one reading as actor
  // "ingest:<source_id>". Must be atomic with respect to other writers.
  using CommitFn = std::function<Result<IngestOutcome>(
      const std::string& store, std::int64_t ts, const Value& value,
      const std::string& source_id)>;

  IngestManager(const Clock& clock, CommitFn commit)
      : clock_(clock), commit_(std::move(commit)) {}

  void set_resolver(SourceResolver* resolver) { resolver_ = resolver; }

  Result<void> bind(const std::string& store, const IngestSpec& spec) {
    if (bindings_.contains(store))
      return make_error(Errc::already_bound, store);
    if (spec.poll && spec.period_ms < 10)
      return make_error(Errc::invalid_config, "poll period below 10ms");
    for (const auto& [other_store, b] : bindings_)
      if (b.status.spec.source_id == spec.source_id && !b.status.spec.poll &&
          !spec.poll)
        return make_error(Errc::invalid_config,
                          "push source " + spec.source_id +
                              " already feeds " + other_store);
    BindingState st;
    st.status.spec = spec;
    st.status.store = store;
    // Poll sources resolve lazily at the first due tick so bindings restored
    // from the catalog survive sources registered later.
    if (spec.poll)
      st.status.next_deadline_ns =
          clock_.now_ns() + spec.period_ms * 1'000'000;
    bindings_.emplace(store, std::move(st));
    return {};
  }

  Result<void> unbind(const std::string& store) {
    if (bindings_.erase(store) == 0)
      return make_error(Errc::unknown_store, "no binding for " + store);
    return {};
  }

  bool bound(const std::string& store) const {
    return bindings_.contains(store);
  }

  const IngestSpec* binding(const std::string& store) const {
    auto it = bindings_.find(store);
    return it == bindings_.end() ? nullptr : &it->second.status.spec;
  }

  // Push delivery. Never throws; a reading that cannot commit is a counted
  // outcome, not an error.
  void on_push(const std::string& source_id, const Reading& reading) {
    BindingState* st = nullptr;
    for (auto& [_, b] : bindings_) {
      if (!b.status.spec.poll && b.status.spec.source_id == source_id) {
        st = &b;
        break;
      }
    }
    if (st == nullptr) {
      ++unbound_drops_;
      return;
    }
    ingest_one(*st, reading);
  }

  // Runs every due poll binding once. Returns records appended.
  std::uint64_t poll_tick(std::int64_t now) {
    std::uint64_t appended = 0;
    for (auto& [_, st] : bindings_) {
      if (!st.status.spec.poll) continue;
      if (st.status.next_deadline_ns > now) continue;
      while (st.status.next_deadline_ns <= now)
        st.status.next_deadline_ns +=
            st.status.spec.period_ms * 1'000'000;
      if (!st.source) {
        if (resolver_ == nullptr) {
          ++st.status.counters.unreachable;
          continue;
        }
        auto src = resolver_->resolve(st.status.spec.address);
        if (!src) {
          ++st.status.counters.unreachable;
          continue;
        }
        st.source = std::move(src).value();
      }
      auto fetched = st.source->fetch(st.status.last_seen_ts, now);
      if (!fetched) {
        ++st.status.counters.unreachable;
        continue;
      }
      for (const auto& r : fetched.value()) {
        if (ingest_one(st, r)) ++appended;
        if (r.ts > st.status.last_seen_ts) st.status.last_seen_ts = r.ts;
      }
    }
    return appended;
  }

  std::optional<std::int64_t> next_deadline() const {
    std::optional<std::int64_t> out;
    for (const auto& [_, st] : bindings_) {
      if (!st.status.spec.poll) continue;
      if (!out || st.status.next_deadline_ns < *out)
        out = st.status.next_deadline_ns;
    }
    return out;
  }

  std::vector<BindingStatus> status() const {
    std::vector<BindingStatus> out;
    for (const auto& [_, st] : bindings_) out.push_back(st.status);
    return out;
  }

  std::uint64_t unbound_drops() const { return unbound_drops_; }

 private:
  struct BindingState {
    BindingStatus status;
    std::shared_ptr<IngestSource> source;
  };

  bool ingest_one(BindingState& st, const Reading& r) {
    auto outcome =
        commit_(st.status.store, r.ts, r.value, st.status.spec.source_id);
    auto& c = st.status.counters;
    if (!outcome) {
      ++c.dropped;
      ++c.drop_reasons[errc_name(outcome.error().code)];
      return false;
    }
    switch (outcome.value()) {
      case IngestOutcome::appended:
      case IngestOutcome::updated:
        ++c.appended;
        return true;
      case IngestOutcome::duplicate:
        ++c.duplicate;
        return false;
      case IngestOutcome::conflict:
        ++c.dropped;
        ++c.drop_reasons["conflict"];
        return false;
    }
    return false;
  }

  const Clock& clock_;
  CommitFn commit_;
  SourceResolver* resolver_ = nullptr;
  std::map<std::string, BindingState> bindings_;
  std::uint64_t unbound_drops_ = 0;
};

}  // namespace microdb
