#pragma once

#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "microdb/error.hpp"
#include "microdb/record.hpp"
#include "microdb/security.hpp"

namespace microdb {

enum class Txn : std::uint8_t {
  create = 0,
  update = 1,
  remove = 2,
  create_store = 3,
  delete_store = 4,
};

inline const char* txn_name(Txn t) {
  switch (t) {
    case Txn::create: return "create";
    case Txn::update: return "update";
    case Txn::remove: return "delete";
    case Txn::create_store: return "create-store";
    case Txn::delete_store: return "delete-store";
  }
  return "?";
}

inline Result<Txn> txn_from_name(std::string_view s) {
  if (s == "create") return Txn::create;
  if (s == "update") return Txn::update;
  if (s == "delete") return Txn::remove;
  if (s == "create-store") return Txn::create_store;
  if (s == "delete-store") return Txn::delete_store;
  return make_error(Errc::invalid_argument, "unknown txn " + std::string(s));
}

// Notifications carry no record content; subscribers read the store.
struct Event {
  std::uint64_t event_seq = 0;  // per-store, gapless
  Txn txn = Txn::create;
  std::string store;
  std::optional<RecordKey> key;  // absent for store-level txns
  std::string actor;
  std::int64_t emit_ts = 0;

  std::string to_line() const {
    return std::to_string(event_seq) + "\t" + txn_name(txn) + "\t" + store +
           "\t" + (key ? key->to_string() : std::string("-")) + "\t" + actor;
  }
};

struct SubscriptionFilter {
  std::string store_pattern = "*";
  std::set<Txn> txns;  // empty = all
  KeyRange range;      // applies to keyed events only

  bool matches(const Event& e) const {
    if (!store_pattern_matches(store_pattern, e.store)) return false;
    if (!txns.empty() && !txns.contains(e.txn)) return false;
    if (e.key && !range.contains(*e.key)) return false;
    return true;
  }
};

class Subscription {
 public:
  Subscription(std::uint64_t id, SubscriptionFilter filter,
               std::size_t capacity)
      : id_(id), filter_(std::move(filter)), capacity_(capacity) {}

  std::uint64_t id() const { return id_; }
  const SubscriptionFilter& filter() const { return filter_; }

  std::optional<Event> pop() {
    std::lock_guard lk(mu_);
    if (queue_.empty()) return std::nullopt;
    Event e = queue_.front();
    queue_.pop_front();
    return e;
  }

  std::vector<Event> drain() {
    std::lock_guard lk(mu_);
    std::vector<Event> out(queue_.begin(), queue_.end());
    queue_.clear();
    return out;
  }

  std::size_t pending() const {
    std::lock_guard lk(mu_);
    return queue_.size();
  }

  // Set when overflow forced the oldest events to be dropped.
  bool gap() const {
    std::lock_guard lk(mu_);
    return gap_;
  }

  std::uint64_t delivered() const {
    std::lock_guard lk(mu_);
    return delivered_;
  }

 private:
  friend class EventBus;

  void push(const Event& e) {
    std::lock_guard lk(mu_);
    if (queue_.size() >= capacity_) {
      queue_.pop_front();
      gap_ = true;
    }
    queue_.push_back(e);
    ++delivered_;
  }

  std::uint64_t id_;
  SubscriptionFilter filter_;
  std::size_t capacity_;
  mutable std::mutex mu_;
  std::deque<Event> queue_;
  bool gap_ = false;
  std::uint64_t delivered_ = 0;
};

class EventBus {
 public:
  static constexpr std::size_t kDefaultQueueCapacity = 1024;

  std::shared_ptr<Subscription> subscribe(SubscriptionFilter filter,
                                          std::size_t capacity =
                                              kDefaultQueueCapacity) {
    std::lock_guard lk(mu_);
    auto sub = std::make_shared<Subscription>(next_id_++, std::move(filter),
                                              capacity);
    subs_[sub->id()] = sub;
    return sub;
  }

  Result<void> unsubscribe(std::uint64_t id) {
    std::lock_guard lk(mu_);
    if (subs_.erase(id) == 0)
      return make_error(Errc::unknown_subscription, std::to_string(id));
    return {};
  }

  // Called exactly once per committed transaction, after commit. Assigns the
  // per-store event_seq; delivery failures never surface to the writer.
  Event emit(Txn txn, const std::string& store,
             std::optional<RecordKey> key, const std::string& actor,
             std::int64_t emit_ts) {
    std::lock_guard lk(mu_);
    Event e;
    e.event_seq = ++store_seq_[store];
    e.txn = txn;
    e.store = store;
    e.key = key;
    e.actor = actor;
    e.emit_ts = emit_ts;
    ++emitted_[store][txn];
    for (auto& [_, sub] : subs_)
      if (sub->filter().matches(e)) sub->push(e);
    return e;
  }

  void forget_store(const std::string& store) {
    std::lock_guard lk(mu_);
    store_seq_.erase(store);
  }

  std::uint64_t emitted(const std::string& store, Txn txn) const {
    std::lock_guard lk(mu_);
    auto it = emitted_.find(store);
    if (it == emitted_.end()) return 0;
    auto jt = it->second.find(txn);
    return jt == it->second.end() ? 0 : jt->second;
  }

  std::map<std::string, std::map<Txn, std::uint64_t>> emitted_counters() const {
    std::lock_guard lk(mu_);
    return emitted_;
  }

 private:
  mutable std::mutex mu_;
  std::uint64_t next_id_ = 1;
  std::map<std::uint64_t, std::shared_ptr<Subscription>> subs_;
  std::map<std::string, std::uint64_t> store_seq_;
  std::map<std::string, std::map<Txn, std::uint64_t>> emitted_;
};

// -- callback pipeline --

enum class Stage : std::uint8_t { ingest = 0, exchange = 1, sync_in = 2, sync_out = 3 };

inline const char* stage_name(Stage s) {
  switch (s) {
    case Stage::ingest: return "ingest";
    case Stage::exchange: return "exchange";
    case Stage::sync_in: return "sync-in";
    case Stage::sync_out: return "sync-out";
  }
  return "?";
}

inline Result<Stage> stage_from_name(std::string_view s) {
  if (s == "ingest") return Stage::ingest;
  if (s == "exchange") return Stage::exchange;
  if (s == "sync-in") return Stage::sync_in;
  if (s == "sync-out") return Stage::sync_out;
  return make_error(Errc::invalid_config, "unknown stage " + std::string(s));
}

struct CallbackAccept {};
struct CallbackReject {
  std::string reason;
};
struct CallbackTransform {
  Record record;
};
using CallbackAction =
    std::variant<CallbackAccept, CallbackReject, CallbackTransform>;

struct CallbackSpec {
  std::string id;
  Stage stage = Stage::exchange;
  std::string store_pattern = "*";
  std::string role_pattern;  // empty = any actor; else actor must hold it
  std::function<CallbackAction(const Record&)> action;
};

inline bool role_pattern_matches(const std::string& pattern,
                                 const std::set<std::string>& actor_roles) {
  if (pattern.empty()) return true;
  if (pattern == "*") return !actor_roles.empty();
  return actor_roles.contains(pattern);
}

class CallbackRegistry {
 public:
  Result<void> register_callback(CallbackSpec spec) {
    if (spec.id.empty())
      return make_error(Errc::invalid_config, "empty callback id");
    if (!spec.action)
      return make_error(Errc::invalid_config,
                        "callback " + spec.id + " has no action");
    for (const auto& c : chain_)
      if (c.id == spec.id)
        return make_error(Errc::duplicate, "callback " + spec.id);
    chain_.push_back(std::move(spec));
    return {};
  }

  Result<void> unregister(const std::string& id) {
    for (auto it = chain_.begin(); it != chain_.end(); ++it) {
      if (it->id == id) {
        chain_.erase(it);
        return {};
      }
    }
    return make_error(Errc::not_found, "callback " + id);
  }

  bool has(const std::string& id) const {
    for (const auto& c : chain_)
      if (c.id == id) return true;
    return false;
  }

  std::size_t size() const { return chain_.size(); }

  // Applies matching callbacks in registration order. First reject wins;
  // transforms compose. A transform may not touch the key.
  Result<Record> run_chain(Stage stage, const std::string& store,
                           Record record,
                           const std::set<std::string>& actor_roles) const {
    for (const auto& cb : chain_) {
      if (cb.stage != stage) continue;
      if (!store_pattern_matches(cb.store_pattern, store)) continue;
      if (!role_pattern_matches(cb.role_pattern, actor_roles)) continue;
      CallbackAction action = cb.action(record);
      if (std::holds_alternative<CallbackReject>(action))
        return make_error(Errc::rejected_by_callback,
                          cb.id + ": " +
                              std::get<CallbackReject>(action).reason);
      if (std::holds_alternative<CallbackTransform>(action)) {
        Record next = std::get<CallbackTransform>(std::move(action)).record;
        if (!(next.key == record.key))
          return make_error(Errc::key_mutation,
                            "callback " + cb.id + " changed the record key");
        next.prov = record.prov;
        record = std::move(next);
      }
    }
    return record;
  }

 private:
  std::vector<CallbackSpec> chain_;
};

// Built-in callback actions declarable from manifests.

// Clamps numeric scalars into [min, max]; NaN is rejected.
inline std::function<CallbackAction(const Record&)> make_range_clamp(
    double min, double max) {
  return [min, max](const Record& r) -> CallbackAction {
    if (!r.value.is_numeric()) return CallbackAccept{};
    double v = r.value.numeric();
    if (std::isnan(v)) return CallbackReject{"value is NaN"};
    double clamped = std::min(std::max(v, min), max);
    if (clamped == v) return CallbackAccept{};
    Record out = r;
    out.value = r.value.kind() == Value::Kind::integer
                    ? Value::of(static_cast<std::int64_t>(std::llround(clamped)))
                    : Value::of(clamped);
    out.value.type_ref = r.value.type_ref;
    return CallbackTransform{std::move(out)};
  };
}

inline std::function<CallbackAction(const Record&)> make_unit_scale(
    double factor) {
  return [factor](const Record& r) -> CallbackAction {
    if (!r.value.is_numeric()) return CallbackAccept{};
    Record out = r;
    if (r.value.kind() == Value::Kind::integer)
      out.value = Value::of(static_cast<std::int64_t>(
          std::llround(static_cast<double>(r.value.as_int()) * factor)));
    else
      out.value = Value::of(r.value.as_float() * factor);
    out.value.type_ref = r.value.type_ref;
    return CallbackTransform{std::move(out)};
  };
}

inline std::function<CallbackAction(const Record&)> make_redact_field(
    std::string field) {
  return [field = std::move(field)](const Record& r) -> CallbackAction {
    if (r.value.kind() != Value::Kind::object) return CallbackAccept{};
    if (r.value.field(field) == nullptr) return CallbackAccept{};
    Record out = r;
    auto& obj = out.value.as_object();
    std::erase_if(obj, [&](const auto& kv) { return kv.first == field; });
    return CallbackTransform{std::move(out)};
  };
}

inline std::function<CallbackAction(const Record&)> make_reject_all(
    std::string reason) {
  return [reason = std::move(reason)](const Record&) -> CallbackAction {
    return CallbackReject{reason};
  };
}

}  // namespace microdb
