#pragma once

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "microdb/clock.hpp"
#include "microdb/crypto.hpp"
#include "microdb/error.hpp"
#include "microdb/eventbus.hpp"
#include "microdb/infomodel.hpp"
#include "microdb/ingest.hpp"
#include "microdb/record.hpp"
#include "microdb/registry.hpp"
#include "microdb/security.hpp"
#include "microdb/store.hpp"
#include "microdb/sync.hpp"

namespace microdb {

struct Receipt {
  RecordKey key;
  Provenance prov;
};

// One microdatabase: the tier-local data vault. Column stores, information
// model, security domain, event hub, ingest bindings, sync links and the
// manifest registry, persisted under <data_dir>/<replica_id>/.
//
// Every committing operation on the instance is serialized by one lock,
// which trivially satisfies the per-store single-writer contract; reads copy
// results out so callers never hold references into live state.
class Microdatabase {
 public:
  struct Options {
    std::filesystem::path data_dir;
    std::string replica_id;
    TierKind tier = TierKind::local;
    std::string owner_subject;        // default owner@<replica_id>
    Bytes owner_key;                  // default derived from the replica id
    std::string crypto = "aes-256-gcm";  // or "xor-mac"
    std::shared_ptr<Clock> clock;     // default wall clock
    RandomFn rng;                     // default OS randomness
  };

  static Result<std::unique_ptr<Microdatabase>> open(Options opts) {
    if (opts.replica_id.empty())
      return make_error(Errc::invalid_config, "replica_id is required");
    if (const char* env = std::getenv("MICRODB_DATA_DIR");
        env != nullptr && *env != '\0' && opts.data_dir.empty())
      opts.data_dir = env;
    if (opts.data_dir.empty())
      return make_error(Errc::invalid_config, "data_dir is required");
    if (opts.owner_subject.empty())
      opts.owner_subject = "owner@" + opts.replica_id;
    if (opts.owner_key.empty())
      opts.owner_key = derive_key("microdb-owner", opts.replica_id);
    if (opts.owner_key.size() != kKeyLen)
      return make_error(Errc::invalid_config, "owner key must be 32 bytes");
    if (!opts.clock) opts.clock = std::make_shared<WallClock>();
    if (!opts.rng) opts.rng = os_random;

    auto db = std::unique_ptr<Microdatabase>(new Microdatabase(std::move(opts)));
    auto r = db->bootstrap();
    if (!r) return r.error();
    return db;
  }

  const std::string& replica_id() const { return opts_.replica_id; }
  TierKind tier() const { return opts_.tier; }
  std::filesystem::path dir() const { return dir_; }
  const Clock& clock() const { return *opts_.clock; }
  CryptoProvider& crypto() { return *provider_; }

  Principal owner_principal() const {
    return Principal{opts_.owner_subject, "local",
                     std::numeric_limits<std::int64_t>::max()};
  }

  // ---- store operations ----

  Result<void> create_store(const ColumnStoreConfig& config,
                            const Principal& p) {
    std::scoped_lock lk(mu_);
    auto auth = policy_.authorize(p, Interface::admin, config.name,
                                  KeyRange::all());
    if (!auth.allow) return make_error(Errc::unauthorized, auth.reason);
    if (config.name.rfind("__", 0) == 0)
      return make_error(Errc::invalid_config,
                        "store names starting with __ are reserved");
    auto r = create_store_internal(config);
    if (!r) return r;
    persist_catalog();
    commit_counts_[config.name][Txn::create_store]++;
    bus_.emit(Txn::create_store, config.name, std::nullopt, p.subject,
              opts_.clock->now_ns());
    return {};
  }

  Result<void> drop_store(const std::string& name, const Principal& p) {
    std::scoped_lock lk(mu_);
    auto auth = policy_.authorize(p, Interface::admin, name, KeyRange::all());
    if (!auth.allow) return make_error(Errc::unauthorized, auth.reason);
    if (name.rfind("__", 0) == 0)
      return make_error(Errc::invalid_config, "reserved store");
    auto it = stores_.find(name);
    if (it == stores_.end()) return make_error(Errc::not_found, name);
    if (ingest_.bound(name)) (void)ingest_.unbind(name);
    (void)policy_.drop_role(ingest_role_name(name));
    auto destroyed = it->second->destroy();
    if (!destroyed) return destroyed;
    stores_.erase(it);
    wrapped_keys_.erase(name);
    for (auto& [_, link] : links_) {
      link.received.drop_store(name);
      link.peer_acked.drop_store(name);
    }
    commit_counts_.erase(name);
    persist_catalog();
    bus_.emit(Txn::delete_store, name, std::nullopt, p.subject,
              opts_.clock->now_ns());
    bus_.forget_store(name);
    return {};
  }

  Result<Receipt> append(const std::string& store, RecordKey key,
                         Value value, const Principal& p) {
    std::scoped_lock lk(mu_);
    auto* st = find_store(store);
    if (st == nullptr) return make_error(Errc::not_found, store);
    if (store.rfind("__", 0) == 0)
      return make_error(Errc::unauthorized,
                        "reserved store accepts no direct writes");
    RecordKey placed =
        st->key_committed(key) ? st->place_key(key.ts) : key;
    auto auth = policy_.authorize(p, Interface::exchange_create, store,
                                  KeyRange::single(placed));
    if (!auth.allow) return make_error(Errc::unauthorized, auth.reason);
    if (st->config().value_type) {
      auto v = models_.validate(*st->config().value_type, value);
      if (!v) return v.error();
    }
    Record rec{placed, std::move(value), Provenance{}};
    auto chained = callbacks_.run_chain(Stage::exchange, store, std::move(rec),
                                        policy_.roles_of(p.subject));
    if (!chained) return chained.error();
    Record out = std::move(chained).value();
    out.prov = next_provenance(*st);
    auto applied = st->apply(Entry{kFrameRecord, out});
    if (!applied) return applied.error();
    commit_counts_[store][Txn::create]++;
    bus_.emit(Txn::create, store, out.key, p.subject, opts_.clock->now_ns());
    return Receipt{out.key, out.prov};
  }

  Result<std::vector<Record>> read_range(const std::string& store,
                                         RecordKey lo, RecordKey hi,
                                         std::uint64_t limit,
                                         const Principal& p) {
    std::scoped_lock lk(mu_);
    auto* st = find_store(store);
    if (st == nullptr) return make_error(Errc::not_found, store);
    KeyRange requested{lo, hi};
    if (requested.empty()) return std::vector<Record>{};
    auto auth =
        policy_.authorize(p, Interface::exchange_read, store, requested);
    if (!auth.allow) return make_error(Errc::unauthorized_range, auth.reason);
    return st->read_range(lo, hi, limit);
  }

  // new_value absent = tombstone.
  Result<Receipt> mutate(const std::string& store, RecordKey key,
                         std::optional<Value> new_value, const Principal& p) {
    std::scoped_lock lk(mu_);
    auto* st = find_store(store);
    if (st == nullptr) return make_error(Errc::not_found, store);
    if (store.rfind("__", 0) == 0)
      return make_error(Errc::unauthorized,
                        "reserved store accepts no direct writes");
    if (st->config().mutability != Mutability::mutable_)
      return make_error(Errc::immutable_store, store);
    Interface iface = new_value ? Interface::exchange_update
                                : Interface::exchange_delete;
    auto auth = policy_.authorize(p, iface, store, KeyRange::single(key));
    if (!auth.allow) return make_error(Errc::unauthorized, auth.reason);
    const StoredVersion* cur = st->current(key);
    if (cur == nullptr || cur->is_tombstone())
      return make_error(Errc::key_not_found, key.to_string());
    if (new_value && st->config().value_type) {
      auto v = models_.validate(*st->config().value_type, *new_value);
      if (!v) return v.error();
    }
    Record rec{key, new_value ? std::move(*new_value) : Value::none(),
               Provenance{}};
    auto chained = callbacks_.run_chain(Stage::exchange, store, std::move(rec),
                                        policy_.roles_of(p.subject));
    if (!chained) return chained.error();
    Record out = std::move(chained).value();
    out.prov = next_provenance(*st);
    Entry e{new_value ? kFrameRecord : kFrameTombstone, out};
    auto applied = st->apply(e);
    if (!applied) return applied.error();
    Txn txn = new_value ? Txn::update : Txn::remove;
    commit_counts_[store][txn]++;
    bus_.emit(txn, store, key, p.subject, opts_.clock->now_ns());
    return Receipt{key, out.prov};
  }

  Result<Bytes> content_hash(const std::string& store,
                             const KeyRange& range = KeyRange::all()) const {
    std::scoped_lock lk(mu_);
    auto it = stores_.find(store);
    if (it == stores_.end()) return make_error(Errc::not_found, store);
    return it->second->content_hash(range);
  }

  bool store_exists(const std::string& name) const {
    std::scoped_lock lk(mu_);
    return stores_.contains(name);
  }

  std::vector<std::string> store_names(bool include_reserved = false) const {
    std::scoped_lock lk(mu_);
    std::vector<std::string> out;
    for (const auto& [name, _] : stores_)
      if (include_reserved || name.rfind("__", 0) != 0) out.push_back(name);
    return out;
  }

  Result<ColumnStoreConfig> store_config(const std::string& name) const {
    std::scoped_lock lk(mu_);
    auto it = stores_.find(name);
    if (it == stores_.end()) return make_error(Errc::not_found, name);
    return it->second->config();
  }

  std::uint64_t visible_count(const std::string& store) const {
    std::scoped_lock lk(mu_);
    auto it = stores_.find(store);
    return it == stores_.end() ? 0 : it->second->visible_count();
  }

  std::uint64_t store_conflicts(const std::string& store) const {
    std::scoped_lock lk(mu_);
    auto it = stores_.find(store);
    return it == stores_.end() ? 0 : it->second->conflicts();
  }

  std::uint64_t committed_count(const std::string& store, Txn txn) const {
    std::scoped_lock lk(mu_);
    auto it = commit_counts_.find(store);
    if (it == commit_counts_.end()) return 0;
    auto jt = it->second.find(txn);
    return jt == it->second.end() ? 0 : jt->second;
  }

  // Test/oracle access to raw per-origin entries.
  std::vector<Entry> store_entries(const std::string& store,
                                   const std::string& origin) const {
    std::scoped_lock lk(mu_);
    auto it = stores_.find(store);
    if (it == stores_.end()) return {};
    return it->second->entries_for(
        origin, 0, std::numeric_limits<std::uint64_t>::max(), KeyRange::all(),
        0);
  }

  std::vector<std::string> store_origins(const std::string& store) const {
    std::scoped_lock lk(mu_);
    auto it = stores_.find(store);
    return it == stores_.end() ? std::vector<std::string>{}
                               : it->second->origins();
  }

  // ---- security ----

  Result<Principal> authenticate(std::string_view token) const {
    std::scoped_lock lk(mu_);
    return microdb::authenticate(token, policy_.issuers(), *opts_.clock);
  }

  Result<void> define_role(const Role& role, const Principal& p) {
    std::scoped_lock lk(mu_);
    auto auth = admin(p);
    if (!auth) return auth;
    if (is_local_role(role.name))
      return make_error(Errc::invalid_grant, "reserved role name");
    auto r = policy_.define_role(role);
    if (!r) return r;
    persist_catalog();
    return {};
  }

  Result<void> provision(const std::string& subject,
                         const std::string& role_name, const Principal& p,
                         bool exclusive = false) {
    std::scoped_lock lk(mu_);
    auto auth = admin(p);
    if (!auth) return auth;
    auto r = exclusive ? policy_.provision_exclusive(subject, role_name)
                       : policy_.provision(subject, role_name);
    if (!r) return r;
    persist_catalog();
    return {};
  }

  Result<void> define_sharing_policy(const SharingPolicy& pol,
                                     const Principal& p) {
    std::scoped_lock lk(mu_);
    auto auth = admin(p);
    if (!auth) return auth;
    auto r = policy_.define_policy(pol);
    if (!r) return r;
    persist_catalog();
    return {};
  }

  Result<void> trust_issuer(const TrustedIssuer& issuer, const Principal& p) {
    std::scoped_lock lk(mu_);
    auto auth = admin(p);
    if (!auth) return auth;
    policy_.trust_issuer(issuer);
    persist_catalog();
    return {};
  }

  Decision authorize(const Principal& p, Interface iface,
                     const std::string& store, const KeyRange& range) const {
    std::scoped_lock lk(mu_);
    return policy_.authorize(p, iface, store, range);
  }

  const PolicySet& policy() const { return policy_; }
  std::uint64_t policy_seq() const {
    std::scoped_lock lk(mu_);
    return policy_.policy_seq();
  }

  // ---- information model ----

  Result<void> define_type(const TypeDef& def, const Principal& p) {
    std::scoped_lock lk(mu_);
    auto auth = admin(p);
    if (!auth) return auth;
    auto r = models_.model(def.model_id).define_type(def);
    if (!r) return r;
    persist_catalog();
    return {};
  }

  Result<void> define_instance(const InstanceDef& def, const Principal& p) {
    std::scoped_lock lk(mu_);
    auto auth = admin(p);
    if (!auth) return auth;
    if (!stores_.contains(def.binding))
      return make_error(Errc::invalid_config,
                        "instance " + def.name + " binds unknown store " +
                            def.binding);
    auto r = models_.model(def.model_id).define_instance(def);
    if (!r) return r;
    persist_catalog();
    return {};
  }

  Result<void> classify(const std::string& model_id, const Tag& tag,
                        const Principal& p) {
    std::scoped_lock lk(mu_);
    auto auth = admin(p);
    if (!auth) return auth;
    auto* m = models_.find(model_id);
    if (m == nullptr) return make_error(Errc::unknown_model, model_id);
    auto r = models_.model(model_id).classify(tag);
    if (!r) return r;
    persist_catalog();
    return {};
  }

  Result<void> unclassify(const std::string& model_id, const Tag& tag,
                          const Principal& p) {
    std::scoped_lock lk(mu_);
    auto auth = admin(p);
    if (!auth) return auth;
    auto* m = models_.find(model_id);
    if (m == nullptr) return make_error(Errc::unknown_model, model_id);
    auto r = models_.model(model_id).unclassify(tag);
    if (!r) return r;
    persist_catalog();
    return {};
  }

  Result<std::vector<BrowseNode>> browse(
      const std::string& model_id, const std::string& path,
      const std::optional<std::string>& tag = std::nullopt) const {
    std::scoped_lock lk(mu_);
    const auto* m = models_.find(model_id);
    if (m == nullptr) return make_error(Errc::unknown_model, model_id);
    if (path == "/models") return std::vector<BrowseNode>{{"model", model_id, {}}};
    return m->browse(path, tag);
  }

  Result<std::vector<BrowseNode>> browse_federated(
      std::vector<std::string> model_ids, const std::string& path,
      const std::optional<std::string>& tag = std::nullopt) const {
    std::scoped_lock lk(mu_);
    if (model_ids.empty()) model_ids = models_.all_model_ids();
    return models_.federated_browse(model_ids, path, tag);
  }

  std::vector<std::string> model_ids() const {
    std::scoped_lock lk(mu_);
    return models_.all_model_ids();
  }

  // ---- eventing & callbacks ----

  Result<std::shared_ptr<Subscription>> subscribe(
      const SubscriptionFilter& filter, const Principal& p,
      std::size_t capacity = EventBus::kDefaultQueueCapacity) {
    std::scoped_lock lk(mu_);
    auto auth = policy_.authorize_pattern(p, Interface::subscribe,
                                          filter.store_pattern, filter.range);
    if (!auth.allow) return make_error(Errc::unauthorized, auth.reason);
    return bus_.subscribe(filter, capacity);
  }

  Result<void> unsubscribe(std::uint64_t id) { return bus_.unsubscribe(id); }

  Result<void> register_callback(CallbackSpec spec, const Principal& p) {
    std::scoped_lock lk(mu_);
    auto auth = admin(p);
    if (!auth) return auth;
    return callbacks_.register_callback(std::move(spec));
  }

  EventBus& bus() { return bus_; }
  const EventBus& bus() const { return bus_; }

  // ---- ingest ----

  Result<void> bind_source(const std::string& store, const IngestSpec& spec,
                           const Principal& p) {
    std::scoped_lock lk(mu_);
    auto auth = policy_.authorize(p, Interface::admin, store, KeyRange::all());
    if (!auth.allow) return make_error(Errc::unauthorized, auth.reason);
    if (!stores_.contains(store))
      return make_error(Errc::unknown_store, store);
    if (store.rfind("__", 0) == 0)
      return make_error(Errc::invalid_config, "reserved store");
    auto r = bind_source_internal(store, spec);
    if (!r) return r;
    persist_catalog();
    return {};
  }

  Result<void> unbind_source(const std::string& store, const Principal& p) {
    std::scoped_lock lk(mu_);
    auto auth = policy_.authorize(p, Interface::admin, store, KeyRange::all());
    if (!auth.allow) return make_error(Errc::unauthorized, auth.reason);
    auto r = ingest_.unbind(store);
    if (!r) return r;
    (void)policy_.drop_role(ingest_role_name(store));
    persist_catalog();
    return {};
  }

  void push_reading(const std::string& source_id, const Reading& reading) {
    ingest_.on_push(source_id, reading);
  }

  std::uint64_t poll_tick(std::int64_t now) { return ingest_.poll_tick(now); }

  std::optional<std::int64_t> next_poll_deadline() const {
    return ingest_.next_deadline();
  }

  std::vector<BindingStatus> ingest_status() const { return ingest_.status(); }
  std::uint64_t ingest_unbound_drops() const { return ingest_.unbound_drops(); }
  SourceResolver& resolver() { return resolver_; }

  // ---- sync ----

  Result<void> configure_link(SyncLinkConfig config, const Principal& p) {
    std::scoped_lock lk(mu_);
    std::vector<std::string> patterns = config.filter.store_patterns;
    if (patterns.empty()) patterns.push_back("*");
    for (const auto& pattern : patterns) {
      auto a = policy_.authorize_pattern(p, Interface::admin, pattern,
                                         KeyRange::all());
      if (!a.allow) return make_error(Errc::unauthorized, a.reason);
      auto s = policy_.authorize_pattern(p, Interface::sync, pattern,
                                         config.filter.range);
      if (!s.allow) return make_error(Errc::unauthorized, s.reason);
    }
    auto r = configure_link_internal(std::move(config));
    if (!r) return r;
    persist_catalog();
    return {};
  }

  Result<void> drop_link(const std::string& link_id, const Principal& p) {
    std::scoped_lock lk(mu_);
    auto auth = admin(p);
    if (!auth) return auth;
    if (links_.erase(link_id) == 0)
      return make_error(Errc::not_found, link_id);
    persist_catalog();
    return {};
  }

  std::vector<SyncLinkState> link_states() const {
    std::scoped_lock lk(mu_);
    std::vector<SyncLinkState> out;
    for (const auto& [_, st] : links_) out.push_back(st);
    return out;
  }

  Result<SyncLinkConfig> link_config(const std::string& link_id) const {
    std::scoped_lock lk(mu_);
    auto it = links_.find(link_id);
    if (it == links_.end()) return make_error(Errc::not_found, link_id);
    return it->second.config;
  }

  // Runs one four-phase round as the initiator.
  Result<SyncReport> sync_round(const std::string& link_id,
                                SyncTransport& transport,
                                bool registry_only = false) {
    std::unique_lock lk(mu_);
    auto it = links_.find(link_id);
    if (it == links_.end()) return make_error(Errc::not_found, link_id);
    if (round_active_.contains(link_id))
      return make_error(Errc::transport_down,
                        "a round is already active on " + link_id);
    round_active_.insert(link_id);
    auto result = run_round(it->second, transport, registry_only, lk);
    round_active_.erase(link_id);
    if (result) {
      it->second.rounds++;
      it->second.records_in += result.value().total_received();
      it->second.records_out += result.value().total_sent();
      persist_catalog();
    }
    return result;
  }

  Result<SyncReport> reconcile_registry(const std::string& link_id,
                                        SyncTransport& transport) {
    return sync_round(link_id, transport, /*registry_only=*/true);
  }

  // Responder side: processes one inbound frame, returns reply frames.
  Result<std::vector<SyncFrame>> handle_sync_frame(const SyncFrame& frame) {
    std::scoped_lock lk(mu_);
    switch (frame.type) {
      case kSyncHello: return respond_hello(frame);
      case kSyncDelta: return respond_delta(frame);
      case kSyncPolicy: return respond_policy(frame);
      case kSyncAck: return respond_ack(frame);
      default:
        return make_error(Errc::decode_error, "unknown frame type");
    }
  }

  // ---- registry ----

  Result<std::pair<std::string, std::uint64_t>> publish_manifest(
      const ManifestJson& doc, const Principal& p) {
    std::scoped_lock lk(mu_);
    auto auth = admin(p);
    if (!auth) return auth.error();
    auto manifest = parse_manifest(doc);
    if (!manifest)
      return make_error(Errc::validation_failure, manifest.error().message);
    const Manifest& m = manifest.value();
    auto valid = validate_manifest(m, deployed_view());
    if (!valid) return valid.error();
    std::uint64_t latest = 0;
    for (const auto& e : registry_log())
      if (e.manifest_id == m.manifest_id && e.version > latest)
        latest = e.version;
    if (m.version <= latest)
      return make_error(Errc::stale_version,
                        m.manifest_id + " version " +
                            std::to_string(m.version) +
                            " is not above " + std::to_string(latest));
    auto* reg = find_store(std::string(kRegistryStore));
    Record rec{reg->place_key(opts_.clock->now_ns()),
               registry_record_value(m), next_provenance(*reg)};
    auto applied = reg->apply(Entry{kFrameRecord, rec});
    if (!applied) return applied.error();
    commit_counts_[std::string(kRegistryStore)][Txn::create]++;
    bus_.emit(Txn::create, std::string(kRegistryStore), rec.key, p.subject,
              opts_.clock->now_ns());
    return std::make_pair(opts_.replica_id, rec.prov.origin_seq);
  }

  std::vector<RegistryEntry> registry_log() const {
    std::scoped_lock lk(mu_);
    auto it = stores_.find(std::string(kRegistryStore));
    if (it == stores_.end()) return {};
    std::vector<RegistryEntry> out;
    for (const auto& origin : it->second->origins()) {
      for (const auto& entry : it->second->entries_for(
               origin, 0, std::numeric_limits<std::uint64_t>::max(),
               KeyRange::all(), 0)) {
        auto parsed = registry_entry_from_record(entry.rec);
        if (parsed) out.push_back(std::move(parsed).value());
      }
    }
    std::sort(out.begin(), out.end(),
              [](const RegistryEntry& a, const RegistryEntry& b) {
                return std::tie(a.tier_id, a.seq) < std::tie(b.tier_id, b.seq);
              });
    return out;
  }

  Result<DeploymentReport> deploy(const std::string& manifest_id,
                                  std::uint64_t version) {
    std::scoped_lock lk(mu_);
    std::optional<RegistryEntry> found;
    for (const auto& e : registry_log())
      if (e.manifest_id == manifest_id && e.version == version) {
        found = e;
        break;
      }
    if (!found)
      return make_error(Errc::not_found,
                        manifest_id + " v" + std::to_string(version));
    auto manifest = parse_manifest(found->doc);
    if (!manifest)
      return make_error(Errc::validation_failure, manifest.error().message);
    auto report = apply_manifest(manifest.value());
    persist_catalog();
    return report;
  }

  const std::set<std::pair<std::string, std::uint64_t>>& deployed() const {
    return deployed_;
  }

  // Deterministic description of everything configuration-level; replicas
  // deployed from the same manifests dump identically.
  std::string config_dump() const {
    std::scoped_lock lk(mu_);
    std::vector<std::string> lines;
    for (const auto& [name, st] : stores_) {
      if (name.rfind("__", 0) == 0) continue;
      const auto& c = st->config();
      std::string l = "store " + name +
                      " mutability=" + mutability_name(c.mutability) +
                      " value_type=" + c.value_type.value_or("-") +
                      " encrypted=" + (c.encrypted ? "1" : "0") + " retention=" +
                      (c.retention ? std::to_string(*c.retention) : "-");
      if (c.ingest)
        l += " ingest=" + c.ingest->source_id + "," +
             (c.ingest->poll ? "poll" : "push") + "," +
             std::to_string(c.ingest->period_ms) + "," + c.ingest->address;
      lines.push_back(std::move(l));
    }
    for (const auto& [model_id, model] : models_.models()) {
      for (const auto& [tname, t] : model.types()) {
        std::string l = "type " + model_id + ":" + tname + " parent=" +
                        (t.parent.empty() ? "-" : t.parent) + " props=";
        for (const auto& p : t.properties)
          l += p.name + ":" + p.type_name() +
               (p.unit.empty() ? "" : "(" + p.unit + ")") + ";";
        lines.push_back(std::move(l));
      }
      for (const auto& [iname, inst] : model.instances())
        lines.push_back("instance " + model_id + ":" + iname + " type=" +
                        inst.type + " binding=" + inst.binding);
      for (const auto& tag : model.tags())
        lines.push_back("tag " + model_id + " " +
                        tag_subject_name(tag.subject_kind) + " " +
                        tag.subject + " " + tag.label);
    }
    for (const auto& [name, role] : policy_.roles()) {
      if (is_local_role(name)) continue;
      std::string l = "role " + name + " grants=";
      for (const auto& g : role.grants)
        l += std::string(interface_name(g.iface)) + "@" + g.store_pattern +
             "@" + g.range.to_string() + "@" + (g.policy_ref.empty() ? "-" : g.policy_ref) + ";";
      lines.push_back(std::move(l));
    }
    for (const auto& [subject, roles] : policy_.bindings())
      for (const auto& role : roles)
        if (!is_local_role(role))
          lines.push_back("binding " + subject + " " + role);
    for (const auto& [name, pol] : policy_.policies()) {
      std::string l = "policy " + name + " allow=" +
                      (pol.allow_synchronization ? "1" : "0") + " tiers=";
      for (TierKind t : pol.allowed_tier_kinds)
        l += std::string(tier_kind_name(t)) + ";";
      l += " digest=" + to_hex(pol.eula_digest);
      lines.push_back(std::move(l));
    }
    for (const auto& [id, _] : policy_.issuers())
      lines.push_back("issuer " + id);
    for (const auto& [id, cb] : declared_callbacks_)
      lines.push_back("callback " + id + " " + stage_name(cb.stage) + " " +
                      cb.store_pattern + " " +
                      (cb.role_pattern.empty() ? "-" : cb.role_pattern) + " " +
                      cb.action.dump());
    for (const auto& [id, link] : links_) {
      const auto& c = link.config;
      std::string l = "link " + id + " peer=" + c.peer_replica + " tier=" +
                      tier_kind_name(c.peer_tier) + " stores=";
      for (const auto& s : c.filter.store_patterns) l += s + ";";
      l += " range=" + c.filter.range.to_string() + " tag=" +
           c.filter.tag.value_or("-") + " period=" +
           (c.period_ms ? std::to_string(*c.period_ms) : "manual");
      lines.push_back(std::move(l));
    }
    std::sort(lines.begin(), lines.end());
    std::string out;
    for (const auto& l : lines) {
      out += l;
      out += '\n';
    }
    return out;
  }

 private:
  explicit Microdatabase(Options opts)
      : opts_(std::move(opts)),
        dir_(opts_.data_dir / opts_.replica_id),
        ingest_(*opts_.clock, make_ingest_commit()) {
    if (opts_.crypto == "xor-mac")
      provider_ = std::make_unique<XorMacProvider>(opts_.rng);
    else
      provider_ = std::make_unique<AesGcmProvider>(opts_.rng);
    ingest_.set_resolver(&resolver_);
  }

  IngestManager::CommitFn make_ingest_commit() {
    return [this](const std::string& store, std::int64_t ts,
                  const Value& value, const std::string& source_id) {
      return ingest_commit(store, ts, value, source_id);
    };
  }

  static std::string ingest_role_name(const std::string& store) {
    return "__ingest:" + store;
  }

  Result<void> admin(const Principal& p) const {
    auto d = policy_.authorize(p, Interface::admin, "*", KeyRange::all());
    if (!d.allow) return make_error(Errc::unauthorized, d.reason);
    return {};
  }

  ColumnStore* find_store(const std::string& name) {
    auto it = stores_.find(name);
    return it == stores_.end() ? nullptr : it->second.get();
  }
  const ColumnStore* find_store(const std::string& name) const {
    auto it = stores_.find(name);
    return it == stores_.end() ? nullptr : it->second.get();
  }

  Provenance next_provenance(ColumnStore& st) {
    return Provenance{opts_.replica_id, st.next_origin_seq(opts_.replica_id),
                      opts_.clock->now_ns()};
  }

  Result<void> bootstrap() {
    std::error_code ec;
    std::filesystem::create_directories(dir_, ec);
    if (ec) return make_error(Errc::io_error, ec.message());
    policy_.set_owner(opts_.owner_subject);
    auto loaded = load_catalog();
    if (!loaded) return loaded;
    if (!stores_.contains(std::string(kRegistryStore))) {
      ColumnStoreConfig reg;
      reg.name = kRegistryStore;
      reg.mutability = Mutability::immutable;
      auto r = create_store_internal(reg);
      if (!r) return r;
      persist_catalog();
    }
    return {};
  }

  Result<void> create_store_internal(const ColumnStoreConfig& config) {
    if (!valid_store_name(config.name))
      return make_error(Errc::invalid_config,
                        "store name must match [a-z0-9_-]{1,64}");
    if (stores_.contains(config.name))
      return make_error(Errc::duplicate_name, config.name);
    if (config.value_type) {
      auto resolved = models_.resolve_type(*config.value_type);
      if (!resolved) return resolved.error();
    }
    Bytes data_key;
    Bytes wrapped;
    if (config.encrypted) {
      data_key.resize(kKeyLen);
      opts_.rng(data_key);
      wrapped = wrap_key(*provider_, opts_.owner_key, data_key,
                         "store-key:" + config.name);
    }
    auto st = std::make_unique<ColumnStore>(dir_, opts_.replica_id, config,
                                            data_key, provider_.get());
    auto opened = st->open();
    if (!opened) return opened;
    stores_.emplace(config.name, std::move(st));
    if (config.encrypted) wrapped_keys_[config.name] = wrapped;
    if (config.ingest) {
      auto bound = bind_source_internal(config.name, *config.ingest);
      if (!bound) {
        stores_[config.name]->destroy().ok();
        stores_.erase(config.name);
        wrapped_keys_.erase(config.name);
        return bound;
      }
    }
    return {};
  }

  Result<void> bind_source_internal(const std::string& store,
                                    const IngestSpec& spec) {
    auto r = ingest_.bind(store, spec);
    if (!r) return r;
    Role role{ingest_role_name(store),
              {Grant{Interface::exchange_create, store, KeyRange::all(), {}}}};
    (void)policy_.define_role(role);
    (void)policy_.provision("ingest:" + spec.source_id, role.name);
    return {};
  }

  // The idempotent ingest commit path; actor "ingest:<source_id>".
  Result<IngestOutcome> ingest_commit(const std::string& store,
                                      std::int64_t ts, const Value& value,
                                      const std::string& source_id) {
    std::scoped_lock lk(mu_);
    auto* st = find_store(store);
    if (st == nullptr) return make_error(Errc::unknown_store, store);
    Principal actor{"ingest:" + source_id, "local",
                    std::numeric_limits<std::int64_t>::max()};
    RecordKey key{ts, 0};
    auto auth = policy_.authorize(actor, Interface::exchange_create, store,
                                  KeyRange::single(key));
    if (!auth.allow) return make_error(Errc::unauthorized, auth.reason);
    if (st->config().value_type) {
      auto v = models_.validate(*st->config().value_type, value);
      if (!v) return v.error();
    }
    Record rec{key, value, Provenance{}};
    auto chained = callbacks_.run_chain(Stage::ingest, store, std::move(rec),
                                        policy_.roles_of(actor.subject));
    if (!chained) return chained.error();
    Record out = std::move(chained).value();
    const StoredVersion* cur = st->current(key);
    if (cur != nullptr && !cur->is_tombstone()) {
      if (cur->value == out.value) return IngestOutcome::duplicate;
      if (st->config().mutability == Mutability::immutable)
        return IngestOutcome::conflict;
      out.prov = next_provenance(*st);
      auto applied = st->apply(Entry{kFrameRecord, out});
      if (!applied) return applied.error();
      commit_counts_[store][Txn::update]++;
      bus_.emit(Txn::update, store, key, actor.subject,
                opts_.clock->now_ns());
      return IngestOutcome::updated;
    }
    out.prov = next_provenance(*st);
    auto applied = st->apply(Entry{kFrameRecord, out});
    if (!applied) return applied.error();
    commit_counts_[store][Txn::create]++;
    bus_.emit(Txn::create, store, key, actor.subject, opts_.clock->now_ns());
    return IngestOutcome::appended;
  }

  Result<void> configure_link_internal(SyncLinkConfig config) {
    if (config.link_id.empty())
      return make_error(Errc::invalid_config, "link id is empty");
    if (!tiers_adjacent(opts_.tier, config.peer_tier))
      return make_error(Errc::non_adjacent_tier,
                        std::string(tier_kind_name(opts_.tier)) + " and " +
                            tier_kind_name(config.peer_tier) +
                            " are not adjacent");
    if (!config.filter.has_selector())
      return make_error(Errc::invalid_config, "filter has no selector");
    if (config.link_key.empty())
      config.link_key = derive_key("microdb-link", config.link_id);
    if (config.link_key.size() != kKeyLen)
      return make_error(Errc::invalid_config, "link key must be 32 bytes");
    // Sharing-policy gate over the stores the filter matches right now.
    std::vector<std::string> warnings;
    for (const auto& store :
         expand_filter(config.filter, /*registry_only=*/false, nullptr)) {
      if (store == kRegistryStore) continue;
      auto blocked = policy_.sync_blocked_reason(store, config.peer_tier);
      if (blocked)
        return make_error(Errc::policy_blocked, *blocked);
    }
    auto it = links_.find(config.link_id);
    if (it == links_.end()) {
      SyncLinkState st;
      st.config = std::move(config);
      links_.emplace(st.config.link_id, std::move(st));
    } else {
      it->second.config = std::move(config);
    }
    return {};
  }

  // Stores a round will carry: filter expansion + tag predicate + policy
  // gate, plus the reserved registry store on every link.
  std::vector<std::string> expand_filter(const SyncFilter& filter,
                                         bool registry_only,
                                         std::vector<std::string>* warnings,
                                         std::optional<TierKind> peer =
                                             std::nullopt) const {
    std::set<std::string> out;
    if (!registry_only) {
      std::set<std::string> candidates;
      if (filter.store_patterns.empty()) {
        for (const auto& [name, _] : stores_)
          if (name.rfind("__", 0) != 0) candidates.insert(name);
      } else {
        for (const auto& pattern : filter.store_patterns) {
          if (pattern == "*") {
            for (const auto& [name, _] : stores_)
              if (name.rfind("__", 0) != 0) candidates.insert(name);
          } else if (stores_.contains(pattern)) {
            candidates.insert(pattern);
          } else if (warnings != nullptr) {
            warnings->push_back("filter-miss:" + pattern);
          }
        }
      }
      for (const auto& store : candidates) {
        if (filter.tag && !store_instance_has_tag(store, *filter.tag))
          continue;
        if (peer) {
          auto blocked = policy_.sync_blocked_reason(store, *peer);
          if (blocked) {
            if (warnings != nullptr)
              warnings->push_back("policy-blocked:" + store);
            continue;
          }
        }
        out.insert(store);
      }
    }
    out.insert(std::string(kRegistryStore));
    return {out.begin(), out.end()};
  }

  bool store_instance_has_tag(const std::string& store,
                              const std::string& tag) const {
    for (const auto& [_, model] : models_.models()) {
      for (const auto& [iname, inst] : model.instances()) {
        if (inst.binding != store) continue;
        auto tags = model.instance_tags(iname);
        if (std::find(tags.begin(), tags.end(), tag) != tags.end())
          return true;
      }
    }
    return false;
  }

  std::uint64_t coverage(const std::string& store,
                         const std::string& origin) const {
    if (origin == opts_.replica_id) {
      auto it = stores_.find(store);
      return it == stores_.end() ? 0 : it->second->contiguous_seq(origin);
    }
    std::uint64_t best = 0;
    for (const auto& [_, link] : links_)
      best = std::max(best, link.received.get(store, origin));
    return best;
  }

  WatermarkVector coverage_vector(const std::vector<std::string>& stores) const {
    WatermarkVector w;
    for (const auto& store : stores) {
      auto it = stores_.find(store);
      if (it == stores_.end()) continue;
      std::set<std::string> origins;
      origins.insert(opts_.replica_id);
      for (const auto& o : it->second->origins()) origins.insert(o);
      for (const auto& [_, link] : links_)
        for (const auto& [k, v] : link.received.marks())
          if (k.first == store) origins.insert(k.second);
      for (const auto& origin : origins) {
        std::uint64_t c = coverage(store, origin);
        if (c > 0) w.advance(store, origin, c);
      }
    }
    return w;
  }

  KeyRange delta_range(const SyncLinkConfig& config,
                       const std::string& store) const {
    return store == kRegistryStore ? KeyRange::all() : config.filter.range;
  }

  std::vector<SyncFrame> build_delta_frames(
      const SyncLinkState& link, const std::vector<std::string>& stores,
      const WatermarkVector& peer_has, SyncReport* report) {
    std::vector<SyncFrame> frames;
    for (const auto& store : stores) {
      auto it = stores_.find(store);
      if (it == stores_.end()) continue;
      const KeyRange range = delta_range(link.config, store);
      std::set<std::string> origins;
      origins.insert(opts_.replica_id);
      for (const auto& o : it->second->origins()) origins.insert(o);
      for (const auto& origin : origins) {
        const std::uint64_t cov = coverage(store, origin);
        const std::uint64_t after = peer_has.get(store, origin);
        if (cov <= after) continue;
        auto pending = it->second->entries_for(origin, after, cov, range, 0);
        // sync-out gate, applied before anything leaves this replica
        std::vector<Entry> shipping;
        shipping.reserve(pending.size());
        for (auto& e : pending) {
          auto chained = callbacks_.run_chain(Stage::sync_out, store,
                                              e.rec, {});
          if (!chained) {
            if (report != nullptr) report->rejected_out++;
            continue;
          }
          shipping.push_back(Entry{e.kind, std::move(chained).value()});
        }
        std::size_t i = 0;
        do {
          DeltaPayload p;
          p.link_id = link.config.link_id;
          p.store = store;
          p.origin = origin;
          std::size_t n = std::min(kMaxDeltaBatch, shipping.size() - i);
          p.entries.assign(shipping.begin() + static_cast<std::ptrdiff_t>(i),
                           shipping.begin() + static_cast<std::ptrdiff_t>(i + n));
          i += n;
          p.upto = i == shipping.size()
                       ? cov
                       : p.entries.back().rec.prov.origin_seq;
          if (report != nullptr) report->sent[store] += p.entries.size();
          frames.push_back(make_sealed_frame(
              kSyncDelta, link.config.link_id, encode_delta_body(p),
              *provider_, link.config.link_key));
        } while (i < shipping.size());
      }
    }
    return frames;
  }

  void apply_delta(SyncLinkState& link, const DeltaPayload& delta,
                   SyncReport* report) {
    auto it = stores_.find(delta.store);
    if (it == stores_.end()) {
      if (report != nullptr)
        report->warnings.push_back("unknown-store:" + delta.store);
      link.received.advance(delta.store, delta.origin, delta.upto);
      return;
    }
    for (const auto& entry : delta.entries) {
      auto chained = callbacks_.run_chain(Stage::sync_in, delta.store,
                                          entry.rec, {});
      if (!chained) {
        if (report != nullptr) report->rejected_in++;
        continue;
      }
      Entry incoming{entry.kind, std::move(chained).value()};
      auto outcome = it->second->apply(incoming);
      if (!outcome) {
        // Commit failed; stop here so the watermark never claims coverage
        // of entries that are not durable. The next round retries them.
        if (report != nullptr)
          report->warnings.push_back("apply-failed:" + delta.store + ":" +
                                     outcome.error().message);
        return;
      }
      if (outcome.value().deduplicated) {
        if (report != nullptr) report->deduplicated++;
        continue;
      }
      if (outcome.value().conflict && report != nullptr) report->conflicts++;
      Txn txn = incoming.is_tombstone() ? Txn::remove : Txn::create;
      commit_counts_[delta.store][txn]++;
      if (report != nullptr) report->received[delta.store]++;
      bus_.emit(txn, delta.store, incoming.rec.key,
                "sync:" + incoming.rec.prov.origin_id,
                opts_.clock->now_ns());
    }
    link.received.advance(delta.store, delta.origin, delta.upto);
  }

  Result<SyncReport> run_round(SyncLinkState& link, SyncTransport& transport,
                               bool registry_only,
                               std::unique_lock<std::recursive_mutex>& lk) {
    SyncReport report;
    report.link_id = link.config.link_id;
    std::vector<std::string> stores =
        expand_filter(link.config.filter, registry_only, &report.warnings,
                      link.config.peer_tier);

    // Phase 1: HELLO. Reply carries the peer's HELLO plus its deltas.
    HelloPayload hello;
    hello.link_id = link.config.link_id;
    hello.sender = opts_.replica_id;
    hello.registry_only = registry_only;
    hello.watermarks = coverage_vector(stores);
    auto ex1 = exchange_unlocked(transport, {make_hello_frame(hello)}, lk);
    if (!ex1) return ex1.error();
    const auto& replies = ex1.value();
    if (replies.empty() || replies[0].type != kSyncHello)
      return make_error(Errc::decode_error, "peer sent no HELLO");
    auto peer_hello = parse_hello_frame(replies[0]);
    if (!peer_hello) return peer_hello.error();
    if (peer_hello.value().link_id != link.config.link_id ||
        peer_hello.value().sender != link.config.peer_replica)
      return make_error(Errc::auth_failure,
                        "peer identity mismatch on " + link.config.link_id);
    for (std::size_t i = 1; i < replies.size(); ++i) {
      if (replies[i].type != kSyncDelta)
        return make_error(Errc::decode_error, "unexpected frame after HELLO");
      auto body =
          open_sealed_frame(replies[i], *provider_, link.config.link_key);
      if (!body) return body.error();
      auto delta = decode_delta_body(body.value());
      if (!delta) return delta.error();
      apply_delta(link, delta.value(), &report);
    }

    // Phase 2: our deltas, computed against the peer's claimed coverage.
    auto deltas = build_delta_frames(link, stores,
                                     peer_hello.value().watermarks, &report);
    if (!deltas.empty()) {
      auto ex2 = exchange_unlocked(transport, deltas, lk);
      if (!ex2) return ex2.error();
    }

    // Phase 3: policy bundles travel with the data.
    if (!registry_only) {
      PolicyBundle mine = policy_.bundle(opts_.replica_id);
      auto policy_frame = make_sealed_frame(
          kSyncPolicy, link.config.link_id, encode_policy_body(mine),
          *provider_, link.config.link_key);
      auto ex3 = exchange_unlocked(transport, {policy_frame}, lk);
      if (!ex3) return ex3.error();
      report.policy_sent = true;
      for (const auto& f : ex3.value()) {
        if (f.type != kSyncPolicy) continue;
        auto body = open_sealed_frame(f, *provider_, link.config.link_key);
        if (!body) return body.error();
        auto bundle = decode_policy_body(body.value());
        if (!bundle) return bundle.error();
        if (policy_.apply_bundle(bundle.value(), opts_.replica_id))
          report.policy_applied = true;
      }
    }

    // Phase 4: ACK with what we now hold; the reply advances peer_acked.
    auto ack_frame =
        make_sealed_frame(kSyncAck, link.config.link_id,
                          encode_ack_body(coverage_vector(stores)),
                          *provider_, link.config.link_key);
    auto ex4 = exchange_unlocked(transport, {ack_frame}, lk);
    if (!ex4) return ex4.error();
    for (const auto& f : ex4.value()) {
      if (f.type != kSyncAck) continue;
      auto body = open_sealed_frame(f, *provider_, link.config.link_key);
      if (!body) return body.error();
      auto acked = decode_ack_body(body.value());
      if (!acked) return acked.error();
      link.peer_acked.merge_max(acked.value());
    }
    return report;
  }

  // The in-memory transport reaches straight into the peer instance, which
  // locks its own mutex; dropping ours during the call keeps lock order
  // acyclic when rounds run in both directions.
  Result<std::vector<SyncFrame>> exchange_unlocked(
      SyncTransport& transport, const std::vector<SyncFrame>& frames,
      std::unique_lock<std::recursive_mutex>& lk) {
    lk.unlock();
    auto r = transport.exchange(frames);
    lk.lock();
    return r;
  }

  Result<SyncLinkState*> link_for_frame(const SyncFrame& frame) {
    auto link_id = peek_link_id(frame);
    if (!link_id) return link_id.error();
    auto it = links_.find(link_id.value());
    if (it == links_.end())
      return make_error(Errc::auth_failure,
                        "unknown link " + link_id.value());
    return &it->second;
  }

  Result<std::vector<SyncFrame>> respond_hello(const SyncFrame& frame) {
    auto hello = parse_hello_frame(frame);
    if (!hello) return hello.error();
    auto it = links_.find(hello.value().link_id);
    if (it == links_.end())
      return make_error(Errc::auth_failure,
                        "unknown link " + hello.value().link_id);
    SyncLinkState& link = it->second;
    if (hello.value().sender != link.config.peer_replica)
      return make_error(Errc::auth_failure, "peer identity mismatch");
    std::vector<std::string> stores = expand_filter(
        link.config.filter, hello.value().registry_only, nullptr,
        link.config.peer_tier);
    HelloPayload mine;
    mine.link_id = link.config.link_id;
    mine.sender = opts_.replica_id;
    mine.registry_only = hello.value().registry_only;
    mine.watermarks = coverage_vector(stores);
    std::vector<SyncFrame> out{make_hello_frame(mine)};
    auto deltas =
        build_delta_frames(link, stores, hello.value().watermarks, nullptr);
    for (auto& f : deltas) out.push_back(std::move(f));
    return out;
  }

  Result<std::vector<SyncFrame>> respond_delta(const SyncFrame& frame) {
    auto link = link_for_frame(frame);
    if (!link) return link.error();
    auto body = open_sealed_frame(frame, *provider_,
                                  link.value()->config.link_key);
    if (!body) return body.error();
    auto delta = decode_delta_body(body.value());
    if (!delta) return delta.error();
    SyncReport scratch;
    apply_delta(*link.value(), delta.value(), &scratch);
    link.value()->records_in += scratch.total_received();
    persist_catalog();
    return std::vector<SyncFrame>{};
  }

  Result<std::vector<SyncFrame>> respond_policy(const SyncFrame& frame) {
    auto link = link_for_frame(frame);
    if (!link) return link.error();
    auto body = open_sealed_frame(frame, *provider_,
                                  link.value()->config.link_key);
    if (!body) return body.error();
    auto bundle = decode_policy_body(body.value());
    if (!bundle) return bundle.error();
    PolicyBundle mine = policy_.bundle(opts_.replica_id);
    if (policy_.apply_bundle(bundle.value(), opts_.replica_id))
      persist_catalog();
    return std::vector<SyncFrame>{make_sealed_frame(
        kSyncPolicy, link.value()->config.link_id, encode_policy_body(mine),
        *provider_, link.value()->config.link_key)};
  }

  Result<std::vector<SyncFrame>> respond_ack(const SyncFrame& frame) {
    auto link = link_for_frame(frame);
    if (!link) return link.error();
    auto body = open_sealed_frame(frame, *provider_,
                                  link.value()->config.link_key);
    if (!body) return body.error();
    auto acked = decode_ack_body(body.value());
    if (!acked) return acked.error();
    link.value()->peer_acked.merge_max(acked.value());
    std::vector<std::string> stores =
        expand_filter(link.value()->config.filter, false, nullptr,
                      link.value()->config.peer_tier);
    auto reply = make_sealed_frame(
        kSyncAck, link.value()->config.link_id,
        encode_ack_body(coverage_vector(stores)), *provider_,
        link.value()->config.link_key);
    persist_catalog();
    return std::vector<SyncFrame>{reply};
  }

  // ---- deployment ----

  DeployedView deployed_view() const {
    DeployedView v;
    v.tier = opts_.tier;
    for (const auto& [name, _] : stores_)
      if (name.rfind("__", 0) != 0) v.stores.insert(name);
    for (const auto& [model_id, model] : models_.models()) {
      v.models.insert(model_id);
      for (const auto& [tname, _] : model.types())
        v.types.insert(model_id + ":" + tname);
      for (const auto& [iname, _] : model.instances())
        v.instances.insert(model_id + ":" + iname);
    }
    for (const auto& [name, _] : policy_.roles())
      if (!is_local_role(name)) v.roles.insert(name);
    for (const auto& [name, _] : policy_.policies()) v.policies.insert(name);
    return v;
  }

  DeploymentReport apply_manifest(const Manifest& m) {
    DeploymentReport report;
    report.manifest_id = m.manifest_id;
    report.version = m.version;
    if (deployed_.contains({m.manifest_id, m.version})) {
      auto skip_all = [&](const std::string& section, const std::string& name) {
        report.items.push_back({section, name, "skipped", "already deployed"});
      };
      for (const auto& p : m.policies) skip_all("policies", p.name);
      for (const auto& r : m.roles) skip_all("roles", r.role.name);
      if (m.model) skip_all("model", m.model->model_id);
      for (const auto& s : m.stores) skip_all("stores", s.name);
      for (const auto& c : m.callbacks) skip_all("callbacks", c.id);
      for (const auto& i : m.ingest) skip_all("ingest", i.store);
      for (const auto& l : m.sync) skip_all("sync", l.link_id);
      return report;
    }

    bool failed = false;
    apply_policy_section(m, report, failed);
    if (!failed) apply_model_section(m, report, failed);
    if (!failed) apply_store_section(m, report, failed);
    if (!failed) apply_callback_section(m, report, failed);
    if (!failed) apply_ingest_section(m, report, failed);
    if (!failed) apply_sync_section(m, report, failed);
    report.partial = failed;
    if (!failed) deployed_.insert({m.manifest_id, m.version});
    return report;
  }

  void apply_policy_section(const Manifest& m, DeploymentReport& report,
                            bool& failed) {
    PolicySet snapshot = policy_;
    auto fail = [&](const std::string& name, const std::string& why) {
      policy_ = snapshot;
      // Items from this section flip to failed on rollback.
      for (auto& item : report.items)
        if (item.section == "policies" || item.section == "roles" ||
            item.section == "issuers")
          item.outcome = "failed";
      report.items.push_back({"roles", name, "failed", why});
      failed = true;
    };
    for (const auto& pol : m.policies) {
      auto existing = policy_.policies().find(pol.name);
      if (existing != policy_.policies().end() && existing->second == pol) {
        report.items.push_back({"policies", pol.name, "skipped", ""});
        continue;
      }
      bool replaced = existing != policy_.policies().end();
      auto r = policy_.define_policy(pol);
      if (!r) return fail(pol.name, r.error().to_string());
      report.items.push_back(
          {"policies", pol.name, replaced ? "replaced" : "created", ""});
    }
    for (const auto& iss : m.issuers) {
      bool replaced = policy_.issuers().contains(iss.id);
      policy_.trust_issuer(iss);
      report.items.push_back(
          {"issuers", iss.id, replaced ? "replaced" : "created", ""});
    }
    for (const auto& mr : m.roles) {
      auto existing = policy_.roles().find(mr.role.name);
      bool same =
          existing != policy_.roles().end() && existing->second == mr.role;
      if (!same) {
        bool replaced = existing != policy_.roles().end();
        auto r = policy_.define_role(mr.role);
        if (!r) return fail(mr.role.name, r.error().to_string());
        report.items.push_back({"roles", mr.role.name,
                                replaced ? "replaced" : "created", ""});
      } else {
        report.items.push_back({"roles", mr.role.name, "skipped", ""});
      }
      for (const auto& subject : mr.subjects) {
        auto r = policy_.provision(subject, mr.role.name);
        if (!r) return fail(mr.role.name, r.error().to_string());
      }
    }
  }

  void apply_model_section(const Manifest& m, DeploymentReport& report,
                           bool& failed) {
    if (!m.model) return;
    ModelSet snapshot = models_;
    auto fail = [&](const std::string& name, const std::string& why) {
      models_ = snapshot;
      for (auto& item : report.items)
        if (item.section == "model") item.outcome = "failed";
      report.items.push_back({"model", name, "failed", why});
      failed = true;
    };
    InfoModel& model = models_.model(m.model->model_id);
    std::set<std::string> store_refs = type_store_refs(m.model->model_id);
    for (const auto& t : m.model->types) {
      auto existing = model.types().find(t.name);
      if (existing != model.types().end()) {
        if (existing->second == t) {
          report.items.push_back({"model", "type " + t.name, "skipped", ""});
          continue;
        }
        auto removed = model.remove_type(t.name, store_refs);
        if (!removed)
          return fail("type " + t.name, removed.error().to_string());
        auto r = model.define_type(t);
        if (!r) return fail("type " + t.name, r.error().to_string());
        report.items.push_back({"model", "type " + t.name, "replaced", ""});
        continue;
      }
      auto r = model.define_type(t);
      if (!r) return fail("type " + t.name, r.error().to_string());
      report.items.push_back({"model", "type " + t.name, "created", ""});
    }
    for (const auto& inst : m.model->instances) {
      auto existing = model.instances().find(inst.name);
      if (existing != model.instances().end()) {
        if (existing->second == inst) {
          report.items.push_back(
              {"model", "instance " + inst.name, "skipped", ""});
          continue;
        }
        auto r = model.replace_instance(inst);
        if (!r) return fail("instance " + inst.name, r.error().to_string());
        report.items.push_back(
            {"model", "instance " + inst.name, "replaced", ""});
        continue;
      }
      if (!stores_.contains(inst.binding) &&
          std::none_of(m.stores.begin(), m.stores.end(),
                       [&](const auto& s) { return s.name == inst.binding; }))
        return fail("instance " + inst.name,
                    "binds unknown store " + inst.binding);
      auto r = model.define_instance(inst);
      if (!r) return fail("instance " + inst.name, r.error().to_string());
      report.items.push_back({"model", "instance " + inst.name, "created", ""});
    }
    for (const auto& tag : m.model->tags) {
      auto r = model.classify(tag);
      if (r) {
        report.items.push_back(
            {"model", "tag " + tag.label + "@" + tag.subject, "created", ""});
      } else if (r.error().code == Errc::duplicate_tag) {
        report.items.push_back(
            {"model", "tag " + tag.label + "@" + tag.subject, "skipped", ""});
      } else {
        return fail("tag " + tag.label, r.error().to_string());
      }
    }
  }

  std::set<std::string> type_store_refs(const std::string& model_id) const {
    std::set<std::string> refs;
    for (const auto& [_, st] : stores_) {
      if (!st->config().value_type) continue;
      auto resolved = models_.resolve_type(*st->config().value_type);
      if (resolved && resolved.value().first == model_id)
        refs.insert(resolved.value().second);
    }
    return refs;
  }

  void apply_store_section(const Manifest& m, DeploymentReport& report,
                           bool& failed) {
    std::vector<std::string> created;
    auto fail = [&](const std::string& name, const std::string& why) {
      for (const auto& s : created) {
        if (ingest_.bound(s)) (void)ingest_.unbind(s);
        (void)policy_.drop_role(ingest_role_name(s));
        auto it = stores_.find(s);
        if (it != stores_.end()) {
          (void)it->second->destroy();
          stores_.erase(it);
          wrapped_keys_.erase(s);
        }
      }
      for (auto& item : report.items)
        if (item.section == "stores") item.outcome = "failed";
      report.items.push_back({"stores", name, "failed", why});
      failed = true;
    };
    for (const auto& cfg : m.stores) {
      auto it = stores_.find(cfg.name);
      if (it != stores_.end()) {
        if (it->second->config() == cfg) {
          report.items.push_back({"stores", cfg.name, "skipped", ""});
          continue;
        }
        return fail(cfg.name,
                    "store exists with a different configuration; "
                    "drop it or publish under a new name");
      }
      auto r = create_store_internal(cfg);
      if (!r) return fail(cfg.name, r.error().to_string());
      created.push_back(cfg.name);
      commit_counts_[cfg.name][Txn::create_store]++;
      bus_.emit(Txn::create_store, cfg.name, std::nullopt,
                "deploy:" + m.manifest_id, opts_.clock->now_ns());
      report.items.push_back({"stores", cfg.name, "created", ""});
    }
  }

  void apply_callback_section(const Manifest& m, DeploymentReport& report,
                              bool& failed) {
    CallbackRegistry snapshot = callbacks_;
    auto declared_snapshot = declared_callbacks_;
    auto fail = [&](const std::string& name, const std::string& why) {
      callbacks_ = snapshot;
      declared_callbacks_ = declared_snapshot;
      for (auto& item : report.items)
        if (item.section == "callbacks") item.outcome = "failed";
      report.items.push_back({"callbacks", name, "failed", why});
      failed = true;
    };
    for (const auto& cb : m.callbacks) {
      auto existing = declared_callbacks_.find(cb.id);
      bool same = existing != declared_callbacks_.end() &&
                  existing->second.action == cb.action &&
                  existing->second.stage == cb.stage &&
                  existing->second.store_pattern == cb.store_pattern &&
                  existing->second.role_pattern == cb.role_pattern;
      if (same) {
        report.items.push_back({"callbacks", cb.id, "skipped", ""});
        continue;
      }
      auto action = build_callback_action(cb.action);
      if (!action) return fail(cb.id, action.error().to_string());
      bool replaced = callbacks_.has(cb.id);
      if (replaced) (void)callbacks_.unregister(cb.id);
      CallbackSpec spec;
      spec.id = cb.id;
      spec.stage = cb.stage;
      spec.store_pattern = cb.store_pattern;
      spec.role_pattern = cb.role_pattern;
      spec.action = std::move(action).value();
      auto r = callbacks_.register_callback(std::move(spec));
      if (!r) return fail(cb.id, r.error().to_string());
      declared_callbacks_[cb.id] = cb;
      report.items.push_back(
          {"callbacks", cb.id, replaced ? "replaced" : "created", ""});
    }
  }

  void apply_ingest_section(const Manifest& m, DeploymentReport& report,
                            bool& failed) {
    std::vector<std::pair<std::string, std::optional<IngestSpec>>> undo;
    auto fail = [&](const std::string& name, const std::string& why) {
      for (auto it = undo.rbegin(); it != undo.rend(); ++it) {
        if (ingest_.bound(it->first)) (void)ingest_.unbind(it->first);
        (void)policy_.drop_role(ingest_role_name(it->first));
        if (it->second) (void)bind_source_internal(it->first, *it->second);
      }
      for (auto& item : report.items)
        if (item.section == "ingest") item.outcome = "failed";
      report.items.push_back({"ingest", name, "failed", why});
      failed = true;
    };
    for (const auto& mi : m.ingest) {
      if (!stores_.contains(mi.store))
        return fail(mi.store, "unknown store");
      const IngestSpec* existing = ingest_.binding(mi.store);
      if (existing != nullptr && *existing == mi.spec) {
        report.items.push_back({"ingest", mi.store, "skipped", ""});
        continue;
      }
      std::optional<IngestSpec> old;
      if (existing != nullptr) {
        old = *existing;
        (void)ingest_.unbind(mi.store);
        (void)policy_.drop_role(ingest_role_name(mi.store));
      }
      auto r = bind_source_internal(mi.store, mi.spec);
      if (!r) return fail(mi.store, r.error().to_string());
      undo.emplace_back(mi.store, old);
      report.items.push_back(
          {"ingest", mi.store, old ? "replaced" : "created", ""});
    }
  }

  void apply_sync_section(const Manifest& m, DeploymentReport& report,
                          bool& failed) {
    std::vector<std::pair<std::string, std::optional<SyncLinkConfig>>> undo;
    auto fail = [&](const std::string& name, const std::string& why) {
      for (auto it = undo.rbegin(); it != undo.rend(); ++it) {
        if (it->second)
          links_[it->first].config = *it->second;
        else
          links_.erase(it->first);
      }
      for (auto& item : report.items)
        if (item.section == "sync") item.outcome = "failed";
      report.items.push_back({"sync", name, "failed", why});
      failed = true;
    };
    for (const auto& cfg : m.sync) {
      auto it = links_.find(cfg.link_id);
      if (it != links_.end()) {
        SyncLinkConfig normalized = cfg;
        if (normalized.link_key.empty())
          normalized.link_key = derive_key("microdb-link", cfg.link_id);
        if (it->second.config == normalized) {
          report.items.push_back({"sync", cfg.link_id, "skipped", ""});
          continue;
        }
        std::optional<SyncLinkConfig> old = it->second.config;
        auto r = configure_link_internal(cfg);
        if (!r) return fail(cfg.link_id, r.error().to_string());
        undo.emplace_back(cfg.link_id, old);
        report.items.push_back({"sync", cfg.link_id, "replaced", ""});
        continue;
      }
      auto r = configure_link_internal(cfg);
      if (!r) return fail(cfg.link_id, r.error().to_string());
      undo.emplace_back(cfg.link_id, std::nullopt);
      report.items.push_back({"sync", cfg.link_id, "created", ""});
    }
  }

  // ---- catalog persistence ----

  void persist_catalog() {
    ManifestJson j;
    j["replica_id"] = opts_.replica_id;
    j["tier"] = tier_kind_name(opts_.tier);
    j["owner_subject"] = opts_.owner_subject;
    j["crypto"] = provider_->name();
    auto stores = ManifestJson::array();
    for (const auto& [name, st] : stores_) {
      const auto& c = st->config();
      ManifestJson s;
      s["name"] = c.name;
      s["mutability"] = mutability_name(c.mutability);
      if (c.value_type) s["value_type"] = *c.value_type;
      s["encrypted"] = c.encrypted;
      if (c.retention) s["retention"] = *c.retention;
      if (c.ingest) {
        s["ingest"] = {{"source_id", c.ingest->source_id},
                       {"mode", c.ingest->poll ? "poll" : "push"},
                       {"period_ms", c.ingest->period_ms},
                       {"address", c.ingest->address}};
      }
      auto wrapped = wrapped_keys_.find(name);
      if (wrapped != wrapped_keys_.end())
        s["wrapped_key_hex"] = to_hex(wrapped->second);
      stores.push_back(std::move(s));
    }
    j["stores"] = std::move(stores);

    auto models = ManifestJson::array();
    for (const auto& [model_id, model] : models_.models()) {
      ManifestJson mj;
      mj["model_id"] = model_id;
      auto types = ManifestJson::array();
      for (const auto& [_, t] : model.types()) {
        ManifestJson tj;
        tj["name"] = t.name;
        tj["parent"] = t.parent;
        auto props = ManifestJson::array();
        for (const auto& p : t.properties) {
          ManifestJson pj;
          pj["name"] = p.name;
          pj["type"] = p.is_object ? "object(" + p.object_type + ")"
                                   : scalar_kind_name(p.scalar);
          pj["unit"] = p.unit;
          props.push_back(std::move(pj));
        }
        tj["properties"] = std::move(props);
        types.push_back(std::move(tj));
      }
      mj["types"] = std::move(types);
      auto instances = ManifestJson::array();
      for (const auto& [_, inst] : model.instances())
        instances.push_back({{"name", inst.name},
                             {"type", inst.type},
                             {"binding", inst.binding}});
      mj["instances"] = std::move(instances);
      auto tags = ManifestJson::array();
      for (const auto& t : model.tags())
        tags.push_back({{"label", t.label},
                        {"subject_kind", tag_subject_name(t.subject_kind)},
                        {"subject", t.subject}});
      mj["tags"] = std::move(tags);
      models.push_back(std::move(mj));
    }
    j["model"] = std::move(models);

    ManifestJson sec;
    sec["policy_seq"] = policy_.policy_seq();
    auto roles = ManifestJson::array();
    for (const auto& [name, role] : policy_.roles()) {
      if (is_local_role(name)) continue;
      ManifestJson rj;
      rj["name"] = name;
      auto grants = ManifestJson::array();
      for (const auto& g : role.grants) {
        ManifestJson gj;
        gj["interface"] = interface_name(g.iface);
        gj["store"] = g.store_pattern;
        gj["range"] = range_to_json(g.range);
        gj["policy"] = g.policy_ref;
        grants.push_back(std::move(gj));
      }
      rj["grants"] = std::move(grants);
      roles.push_back(std::move(rj));
    }
    sec["roles"] = std::move(roles);
    auto bindings = ManifestJson::array();
    for (const auto& [subject, set] : policy_.bindings()) {
      auto filtered = ManifestJson::array();
      for (const auto& r : set)
        if (!is_local_role(r)) filtered.push_back(r);
      if (!filtered.empty())
        bindings.push_back({{"subject", subject}, {"roles", filtered}});
    }
    sec["bindings"] = std::move(bindings);
    auto policies = ManifestJson::array();
    for (const auto& [_, p] : policy_.policies()) {
      ManifestJson pj;
      pj["name"] = p.name;
      pj["eula_digest"] = to_hex(p.eula_digest);
      pj["allow_synchronization"] = p.allow_synchronization;
      auto tiers = ManifestJson::array();
      for (TierKind t : p.allowed_tier_kinds) tiers.push_back(tier_kind_name(t));
      pj["allowed_tiers"] = std::move(tiers);
      policies.push_back(std::move(pj));
    }
    sec["policies"] = std::move(policies);
    auto issuers = ManifestJson::array();
    for (const auto& [_, i] : policy_.issuers())
      issuers.push_back({{"id", i.id}, {"key_hex", to_hex(i.key)}});
    sec["issuers"] = std::move(issuers);
    j["security"] = std::move(sec);

    auto callbacks = ManifestJson::array();
    for (const auto& [id, cb] : declared_callbacks_) {
      ManifestJson cj;
      cj["id"] = id;
      cj["stage"] = stage_name(cb.stage);
      cj["store"] = cb.store_pattern;
      cj["role"] = cb.role_pattern;
      cj["action"] = cb.action;
      callbacks.push_back(std::move(cj));
    }
    j["callbacks"] = std::move(callbacks);

    auto ingest = ManifestJson::array();
    for (const auto& b : ingest_.status()) {
      ManifestJson ij;
      ij["store"] = b.store;
      ij["source_id"] = b.spec.source_id;
      ij["mode"] = b.spec.poll ? "poll" : "push";
      ij["period_ms"] = b.spec.period_ms;
      ij["address"] = b.spec.address;
      ingest.push_back(std::move(ij));
    }
    j["ingest"] = std::move(ingest);

    auto links = ManifestJson::array();
    for (const auto& [id, link] : links_) {
      ManifestJson lj;
      const auto& c = link.config;
      lj["link_id"] = id;
      lj["peer"] = c.peer_replica;
      lj["peer_tier"] = tier_kind_name(c.peer_tier);
      auto patterns = ManifestJson::array();
      for (const auto& p : c.filter.store_patterns) patterns.push_back(p);
      lj["stores"] = std::move(patterns);
      lj["range"] = range_to_json(c.filter.range);
      if (c.filter.tag) lj["tag"] = *c.filter.tag;
      if (c.period_ms) lj["period_ms"] = *c.period_ms;
      lj["endpoint"] = c.endpoint;
      lj["key_wrapped_hex"] = to_hex(
          wrap_key(*provider_, opts_.owner_key, c.link_key, "link-key:" + id));
      auto dump_wm = [](const WatermarkVector& w) {
        auto arr = ManifestJson::array();
        for (const auto& [k, v] : w.marks())
          arr.push_back(ManifestJson::array({k.first, k.second, v}));
        return arr;
      };
      lj["received"] = dump_wm(link.received);
      lj["acked"] = dump_wm(link.peer_acked);
      links.push_back(std::move(lj));
    }
    j["links"] = std::move(links);

    auto deployed = ManifestJson::array();
    for (const auto& [id, version] : deployed_)
      deployed.push_back(ManifestJson::array({id, version}));
    j["deployed"] = std::move(deployed);

    auto tmp = dir_ / "catalog.json.tmp";
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out << j.dump(2);
    out.close();
    std::error_code ec;
    std::filesystem::rename(tmp, dir_ / "catalog.json", ec);
  }

  Result<void> load_catalog() {
    auto path = dir_ / "catalog.json";
    if (!std::filesystem::exists(path)) return {};
    std::ifstream in(path, std::ios::binary);
    ManifestJson j = ManifestJson::parse(in, nullptr, false);
    if (j.is_discarded())
      return make_error(Errc::io_error, "corrupt catalog.json");

    for (const auto& mj : j.value("model", ManifestJson::array())) {
      InfoModel& model = models_.model(mj["model_id"].get<std::string>());
      for (const auto& tj : mj.value("types", ManifestJson::array())) {
        TypeDef t;
        t.model_id = mj["model_id"].get<std::string>();
        t.name = tj["name"].get<std::string>();
        t.parent = tj.value("parent", std::string{});
        for (const auto& pj : tj.value("properties", ManifestJson::array())) {
          PropertyDef p;
          p.name = pj["name"].get<std::string>();
          std::string kind = pj.value("type", std::string("float64"));
          if (kind.rfind("object(", 0) == 0 && kind.back() == ')') {
            p.is_object = true;
            p.object_type = kind.substr(7, kind.size() - 8);
          } else {
            auto sk = scalar_kind_from_name(kind);
            if (sk) p.scalar = sk.value();
          }
          p.unit = pj.value("unit", std::string{});
          t.properties.push_back(std::move(p));
        }
        model.load_type(std::move(t));
      }
      for (const auto& ij : mj.value("instances", ManifestJson::array())) {
        InstanceDef inst;
        inst.model_id = mj["model_id"].get<std::string>();
        inst.name = ij["name"].get<std::string>();
        inst.type = ij["type"].get<std::string>();
        inst.binding = ij["binding"].get<std::string>();
        model.load_instance(std::move(inst));
      }
      for (const auto& gj : mj.value("tags", ManifestJson::array())) {
        Tag t;
        t.label = gj["label"].get<std::string>();
        std::string kind = gj.value("subject_kind", std::string("type"));
        t.subject_kind = kind == "instance" ? TagSubject::instance
                         : kind == "property" ? TagSubject::property
                                              : TagSubject::type;
        t.subject = gj["subject"].get<std::string>();
        model.load_tag(std::move(t));
      }
    }

    if (j.contains("security")) {
      const auto& sec = j["security"];
      for (const auto& rj : sec.value("roles", ManifestJson::array())) {
        Role role;
        role.name = rj["name"].get<std::string>();
        for (const auto& gj : rj.value("grants", ManifestJson::array())) {
          Grant g;
          auto iface = interface_from_name(gj["interface"].get<std::string>());
          if (!iface) return iface.error();
          g.iface = iface.value();
          g.store_pattern = gj.value("store", std::string("*"));
          auto range = range_from_json(gj.value("range", ManifestJson()));
          if (range) g.range = range.value();
          g.policy_ref = gj.value("policy", std::string{});
          role.grants.push_back(std::move(g));
        }
        auto r = policy_.define_role(role);
        if (!r) return r;
      }
      for (const auto& bj : sec.value("bindings", ManifestJson::array()))
        for (const auto& role : bj.value("roles", ManifestJson::array()))
          (void)policy_.provision(bj["subject"].get<std::string>(),
                                  role.get<std::string>());
      for (const auto& pj : sec.value("policies", ManifestJson::array())) {
        SharingPolicy p;
        p.name = pj["name"].get<std::string>();
        auto digest = from_hex(pj["eula_digest"].get<std::string>());
        if (!digest) return digest.error();
        p.eula_digest = std::move(digest).value();
        p.allow_synchronization = pj.value("allow_synchronization", true);
        for (const auto& tj : pj.value("allowed_tiers", ManifestJson::array())) {
          auto t = tier_kind_from_name(tj.get<std::string>());
          if (t) p.allowed_tier_kinds.insert(t.value());
        }
        auto r = policy_.define_policy(p);
        if (!r) return r;
      }
      for (const auto& ij : sec.value("issuers", ManifestJson::array())) {
        TrustedIssuer iss;
        iss.id = ij["id"].get<std::string>();
        auto key = from_hex(ij["key_hex"].get<std::string>());
        if (!key) return key.error();
        iss.key = std::move(key).value();
        policy_.trust_issuer(iss);
      }
      policy_.force_policy_seq(sec.value("policy_seq", std::uint64_t{0}));
    }

    for (const auto& sj : j.value("stores", ManifestJson::array())) {
      ColumnStoreConfig c;
      c.name = sj["name"].get<std::string>();
      auto mut = mutability_from_name(
          sj.value("mutability", std::string("immutable")));
      if (!mut) return mut.error();
      c.mutability = mut.value();
      if (sj.contains("value_type"))
        c.value_type = sj["value_type"].get<std::string>();
      c.encrypted = sj.value("encrypted", false);
      if (sj.contains("retention"))
        c.retention = sj["retention"].get<std::uint64_t>();
      if (sj.contains("ingest")) {
        IngestSpec spec;
        spec.source_id = sj["ingest"]["source_id"].get<std::string>();
        spec.poll = sj["ingest"].value("mode", std::string("push")) == "poll";
        spec.period_ms = sj["ingest"].value("period_ms", std::int64_t{0});
        spec.address = sj["ingest"].value("address", std::string{});
        c.ingest = std::move(spec);
      }
      Bytes data_key;
      if (c.encrypted) {
        auto wrapped = from_hex(sj.value("wrapped_key_hex", std::string{}));
        if (!wrapped)
          return make_error(Errc::no_key,
                            "store " + c.name + " has no wrapped key");
        auto unwrapped = unwrap_key(*provider_, opts_.owner_key,
                                    wrapped.value(), "store-key:" + c.name);
        if (!unwrapped)
          return make_error(Errc::no_key, "store " + c.name +
                                              ": cannot unwrap data key: " +
                                              unwrapped.error().message);
        wrapped_keys_[c.name] = wrapped.value();
        data_key = std::move(unwrapped).value();
      }
      auto st = std::make_unique<ColumnStore>(dir_, opts_.replica_id, c,
                                              data_key, provider_.get());
      auto opened = st->open();
      if (!opened) return opened;
      stores_.emplace(c.name, std::move(st));
    }

    for (const auto& cj : j.value("callbacks", ManifestJson::array())) {
      DeclaredCallback cb;
      cb.id = cj["id"].get<std::string>();
      auto stage = stage_from_name(cj.value("stage", std::string("exchange")));
      if (!stage) return stage.error();
      cb.stage = stage.value();
      cb.store_pattern = cj.value("store", std::string("*"));
      cb.role_pattern = cj.value("role", std::string{});
      cb.action = cj["action"];
      auto action = build_callback_action(cb.action);
      if (!action) return action.error();
      CallbackSpec spec;
      spec.id = cb.id;
      spec.stage = cb.stage;
      spec.store_pattern = cb.store_pattern;
      spec.role_pattern = cb.role_pattern;
      spec.action = std::move(action).value();
      auto r = callbacks_.register_callback(std::move(spec));
      if (!r) return r;
      declared_callbacks_[cb.id] = std::move(cb);
    }

    for (const auto& ij : j.value("ingest", ManifestJson::array())) {
      IngestSpec spec;
      spec.source_id = ij["source_id"].get<std::string>();
      spec.poll = ij.value("mode", std::string("push")) == "poll";
      spec.period_ms = ij.value("period_ms", std::int64_t{0});
      spec.address = ij.value("address", std::string{});
      auto r = bind_source_internal(ij["store"].get<std::string>(), spec);
      if (!r) return r;
    }

    for (const auto& lj : j.value("links", ManifestJson::array())) {
      SyncLinkState link;
      link.config.link_id = lj["link_id"].get<std::string>();
      link.config.peer_replica = lj["peer"].get<std::string>();
      auto tier = tier_kind_from_name(lj["peer_tier"].get<std::string>());
      if (!tier) return tier.error();
      link.config.peer_tier = tier.value();
      for (const auto& p : lj.value("stores", ManifestJson::array()))
        link.config.filter.store_patterns.push_back(p.get<std::string>());
      auto range = range_from_json(lj.value("range", ManifestJson()));
      if (range) link.config.filter.range = range.value();
      if (lj.contains("tag"))
        link.config.filter.tag = lj["tag"].get<std::string>();
      if (lj.contains("period_ms"))
        link.config.period_ms = lj["period_ms"].get<std::int64_t>();
      link.config.endpoint = lj.value("endpoint", std::string{});
      auto wrapped = from_hex(lj["key_wrapped_hex"].get<std::string>());
      if (!wrapped) return wrapped.error();
      auto key = unwrap_key(*provider_, opts_.owner_key, wrapped.value(),
                            "link-key:" + link.config.link_id);
      if (!key)
        return make_error(Errc::no_key, "cannot unwrap link key for " +
                                            link.config.link_id);
      link.config.link_key = std::move(key).value();
      auto load_wm = [](const ManifestJson& arr, WatermarkVector& w) {
        for (const auto& e : arr)
          w.advance(e[0].get<std::string>(), e[1].get<std::string>(),
                    e[2].get<std::uint64_t>());
      };
      load_wm(lj.value("received", ManifestJson::array()), link.received);
      load_wm(lj.value("acked", ManifestJson::array()), link.peer_acked);
      links_.emplace(link.config.link_id, std::move(link));
    }

    for (const auto& dj : j.value("deployed", ManifestJson::array()))
      deployed_.insert({dj[0].get<std::string>(), dj[1].get<std::uint64_t>()});

    return {};
  }

  Options opts_;
  std::filesystem::path dir_;
  std::unique_ptr<CryptoProvider> provider_;

  mutable std::recursive_mutex mu_;
  std::map<std::string, std::unique_ptr<ColumnStore>> stores_;
  std::map<std::string, Bytes> wrapped_keys_;
  ModelSet models_;
  PolicySet policy_;
  EventBus bus_;
  CallbackRegistry callbacks_;
  std::map<std::string, DeclaredCallback> declared_callbacks_;
  SourceResolver resolver_;
  IngestManager ingest_;
  std::map<std::string, SyncLinkState> links_;
  std::set<std::string> round_active_;
  std::set<std::pair<std::string, std::uint64_t>> deployed_;
  std::map<std::string, std::map<Txn, std::uint64_t>> commit_counts_;
};

}  // namespace microdb
