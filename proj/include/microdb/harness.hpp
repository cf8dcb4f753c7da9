#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "microdb/database.hpp"
#include "microdb/registry.hpp"
#include "microdb/sync.hpp"

namespace microdb {

struct SourceScript {
  std::string source_id;
  std::vector<Reading> readings;
  std::vector<std::pair<std::int64_t, std::int64_t>> outages;
};

struct TierSpec {
  std::string replica_id;
  TierKind kind = TierKind::local;
  std::vector<ManifestJson> manifests;  // published and deployed at t=0
  std::vector<SourceScript> sources;
};

struct LinkSpec {
  std::string id;
  std::string a;  // initiator of scheduled rounds
  std::string b;
  std::vector<std::pair<std::int64_t, std::int64_t>> outages;  // [down, up)
  std::optional<std::int64_t> period_ms;
  SyncFilter filter;
  Bytes key;
};

enum class StepAction : std::uint8_t {
  append,
  mutate,
  push,
  publish,
  deploy,
  sync_round,
  poll_tick,
  assert_converged,
  assert_event_count,
  assert_denied,
};

inline Result<StepAction> step_action_from_name(std::string_view s) {
  if (s == "append") return StepAction::append;
  if (s == "mutate") return StepAction::mutate;
  if (s == "push") return StepAction::push;
  if (s == "publish") return StepAction::publish;
  if (s == "deploy") return StepAction::deploy;
  if (s == "sync_round") return StepAction::sync_round;
  if (s == "poll_tick") return StepAction::poll_tick;
  if (s == "assert_converged") return StepAction::assert_converged;
  if (s == "assert_event_count") return StepAction::assert_event_count;
  if (s == "assert_denied") return StepAction::assert_denied;
  return make_error(Errc::invalid_spec, "unknown action " + std::string(s));
}

struct ScenarioStep {
  std::int64_t at = 0;
  StepAction action = StepAction::append;
  ManifestJson params;
  std::size_t index = 0;
};

struct TopologySpec {
  std::uint64_t seed = 0;
  std::int64_t horizon_ns = 0;
  std::vector<TierSpec> tiers;
  std::vector<LinkSpec> links;
  std::vector<ScenarioStep> steps;

  static Result<TopologySpec> parse(const ManifestJson& j) {
    TopologySpec spec;
    spec.seed = j.value("seed", std::uint64_t{0});
    spec.horizon_ns = j.value("horizon_ns", std::int64_t{0});
    std::set<std::string> tier_ids;
    std::map<std::string, TierKind> kinds;
    for (const auto& tj : j.value("tiers", ManifestJson::array())) {
      TierSpec t;
      if (!tj.contains("id"))
        return make_error(Errc::invalid_spec, "tier without id");
      t.replica_id = tj["id"].get<std::string>();
      auto kind = tier_kind_from_name(tj.value("kind", std::string{}));
      if (!kind)
        return make_error(Errc::invalid_spec,
                          "tier " + t.replica_id + ": " + kind.error().message);
      t.kind = kind.value();
      if (!tier_ids.insert(t.replica_id).second)
        return make_error(Errc::invalid_spec,
                          "duplicate tier id " + t.replica_id);
      kinds[t.replica_id] = t.kind;
      for (const auto& mj : tj.value("manifests", ManifestJson::array()))
        t.manifests.push_back(mj);
      for (const auto& sj : tj.value("sources", ManifestJson::array())) {
        SourceScript src;
        src.source_id = sj.value("source_id", std::string{});
        if (src.source_id.empty())
          return make_error(Errc::invalid_spec, "source without source_id");
        for (const auto& rj : sj.value("readings", ManifestJson::array())) {
          if (!rj.is_array() || rj.size() != 2)
            return make_error(Errc::invalid_spec,
                              "reading must be [ts, value]");
          auto v = value_from_json(rj[1]);
          if (!v) return make_error(Errc::invalid_spec, v.error().message);
          src.readings.push_back({rj[0].get<std::int64_t>(),
                                  std::move(v).value()});
        }
        for (const auto& oj : sj.value("outages", ManifestJson::array()))
          src.outages.emplace_back(oj[0].get<std::int64_t>(),
                                   oj[1].get<std::int64_t>());
        t.sources.push_back(std::move(src));
      }
      spec.tiers.push_back(std::move(t));
    }
    for (const auto& lj : j.value("links", ManifestJson::array())) {
      LinkSpec l;
      l.id = lj.value("id", std::string{});
      l.a = lj.value("a", std::string{});
      l.b = lj.value("b", std::string{});
      if (l.id.empty() || !tier_ids.contains(l.a) || !tier_ids.contains(l.b))
        return make_error(Errc::invalid_spec,
                          "link " + l.id + " has unknown endpoints");
      if (!tiers_adjacent(kinds[l.a], kinds[l.b]))
        return make_error(Errc::invalid_spec,
                          "link " + l.id + " joins non-adjacent tiers");
      for (const auto& oj : lj.value("outages", ManifestJson::array())) {
        std::int64_t down = oj[0].get<std::int64_t>();
        std::int64_t up = oj[1].get<std::int64_t>();
        if (spec.horizon_ns > 0 && down > spec.horizon_ns)
          return make_error(Errc::invalid_spec,
                            "link " + l.id + " outage beyond horizon");
        l.outages.emplace_back(down, up);
      }
      if (lj.contains("period_ms") && !lj["period_ms"].is_null())
        l.period_ms = lj["period_ms"].get<std::int64_t>();
      for (const auto& st : lj.value("stores", ManifestJson::array()))
        l.filter.store_patterns.push_back(st.get<std::string>());
      if (lj.contains("range")) {
        auto r = range_from_json(lj["range"]);
        if (!r) return make_error(Errc::invalid_spec, r.error().message);
        l.filter.range = r.value();
      }
      if (lj.contains("tag") && !lj["tag"].is_null())
        l.filter.tag = lj["tag"].get<std::string>();
      if (lj.contains("key_hex")) {
        auto k = from_hex(lj["key_hex"].get<std::string>());
        if (!k) return make_error(Errc::invalid_spec, k.error().message);
        l.key = std::move(k).value();
      }
      spec.links.push_back(std::move(l));
    }
    std::int64_t prev = std::numeric_limits<std::int64_t>::min();
    std::size_t index = 0;
    for (const auto& sj : j.value("steps", ManifestJson::array())) {
      ScenarioStep s;
      s.at = sj.value("at", std::int64_t{0});
      if (s.at < prev)
        return make_error(Errc::invalid_spec,
                          "steps must be sorted by time");
      prev = s.at;
      auto action = step_action_from_name(sj.value("action", std::string{}));
      if (!action) return action.error();
      s.action = action.value();
      s.params = sj;
      s.index = index++;
      spec.steps.push_back(std::move(s));
    }
    return spec;
  }
};

struct AssertionResult {
  std::size_t step_index = 0;
  std::string kind;
  bool pass = false;
  std::string detail;
};

struct ScenarioReport {
  std::uint64_t seed = 0;
  bool pass = true;
  std::vector<AssertionResult> assertions;
  // replica -> store -> counters / final hash
  std::map<std::string, std::map<std::string, std::string>> hashes;
  std::map<std::string, std::map<std::string, std::map<std::string, std::uint64_t>>>
      counters;
  std::map<std::string, std::uint64_t> transport_down;
  std::map<std::string, std::uint64_t> rounds_run;
  std::vector<std::string> warnings;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["seed"] = seed;
    j["pass"] = pass;
    auto arr = nlohmann::json::array();
    for (const auto& a : assertions)
      arr.push_back({{"step", a.step_index},
                     {"kind", a.kind},
                     {"pass", a.pass},
                     {"detail", a.detail}});
    j["assertions"] = arr;
    j["hashes"] = hashes;
    j["counters"] = counters;
    j["transport_down"] = transport_down;
    j["rounds_run"] = rounds_run;
    j["warnings"] = warnings;
    return j;
  }

  std::string to_text() const {
    std::string out;
    for (const auto& a : assertions) {
      out += a.pass ? "PASS" : "FAIL";
      out += "\t" + a.kind + "\tstep=" + std::to_string(a.step_index);
      if (!a.detail.empty()) out += "\t" + a.detail;
      out += "\n";
    }
    out += std::string(pass ? "PASS" : "FAIL") + "\ttotal=" +
           std::to_string(assertions.size()) + "\n";
    return out;
  }
};

// In-process deterministic simulator: one microdatabase per tier, in-memory
// transports that frame/deframe exactly as a socket would, a shared virtual
// clock, and scripted link outages. Same spec + seed => identical report.
class Simulation {
 public:
  static Result<std::unique_ptr<Simulation>> load(
      TopologySpec spec, const std::filesystem::path& workdir,
      bool capture_wire = false) {
    auto sim = std::unique_ptr<Simulation>(new Simulation());
    sim->spec_ = std::move(spec);
    sim->capture_wire_ = capture_wire;
    sim->clock_ = std::make_shared<VirtualClock>();
    std::error_code ec;
    std::filesystem::create_directories(workdir, ec);
    if (ec) return make_error(Errc::io_error, ec.message());

    std::uint64_t replica_index = 0;
    for (const auto& tier : sim->spec_.tiers) {
      Microdatabase::Options opts;
      opts.data_dir = workdir;
      opts.replica_id = tier.replica_id;
      opts.tier = tier.kind;
      opts.clock = sim->clock_;
      opts.crypto = "aes-256-gcm";
      auto rng = std::make_shared<std::mt19937_64>(sim->spec_.seed * 0x9e3779b9 +
                                                   replica_index++);
      opts.rng = [rng](std::span<std::uint8_t> out) {
        for (auto& b : out) b = static_cast<std::uint8_t>((*rng)());
      };
      auto db = Microdatabase::open(std::move(opts));
      if (!db)
        return make_error(Errc::invalid_spec, tier.replica_id + ": " +
                                                  db.error().to_string());
      sim->dbs_.emplace(tier.replica_id, std::move(db).value());
    }

    // Scripted sources, catch-all event taps, bootstrap manifests.
    for (const auto& tier : sim->spec_.tiers) {
      auto& db = *sim->dbs_.at(tier.replica_id);
      for (const auto& src : tier.sources) {
        auto scripted = std::make_shared<ScriptedSource>(src.readings);
        for (const auto& [down, up] : src.outages)
          scripted->add_outage(down, up);
        db.resolver().register_source("script:" + src.source_id, scripted);
      }
      auto tap = db.subscribe(SubscriptionFilter{},  db.owner_principal(),
                              std::numeric_limits<std::size_t>::max() / 2);
      if (!tap) return tap.error();
      sim->taps_[tier.replica_id] = std::move(tap).value();
      for (const auto& mj : tier.manifests) {
        auto pos = db.publish_manifest(mj, db.owner_principal());
        if (!pos)
          return make_error(Errc::invalid_spec,
                            tier.replica_id + ": bootstrap publish: " +
                                pos.error().to_string());
        auto manifest = parse_manifest(mj);
        auto dep = db.deploy(manifest.value().manifest_id,
                             manifest.value().version);
        if (!dep)
          return make_error(Errc::invalid_spec,
                            tier.replica_id + ": bootstrap deploy: " +
                                dep.error().to_string());
        if (dep.value().partial)
          return make_error(Errc::invalid_spec,
                            tier.replica_id + ": bootstrap deploy partial");
      }
    }

    // Links: configure both endpoints and wire the transports.
    for (const auto& link : sim->spec_.links) {
      auto& a = *sim->dbs_.at(link.a);
      auto& b = *sim->dbs_.at(link.b);
      SyncLinkConfig ca;
      ca.link_id = link.id;
      ca.peer_replica = link.b;
      ca.peer_tier = b.tier();
      ca.filter = link.filter;
      ca.period_ms = link.period_ms;
      ca.link_key = link.key;
      SyncLinkConfig cb = ca;
      cb.peer_replica = link.a;
      cb.peer_tier = a.tier();
      auto ra = a.configure_link(ca, a.owner_principal());
      if (!ra)
        return make_error(Errc::invalid_spec,
                          "link " + link.id + ": " + ra.error().to_string());
      auto rb = b.configure_link(cb, b.owner_principal());
      if (!rb)
        return make_error(Errc::invalid_spec,
                          "link " + link.id + ": " + rb.error().to_string());
      LinkRuntime rt;
      rt.spec = link;
      rt.transport = std::make_unique<InMemoryTransport>(
          [&b](const SyncFrame& f) { return b.handle_sync_frame(f); });
      Simulation* simp = sim.get();
      const std::string link_id = link.id;
      rt.transport->link_up = [simp, link_id] {
        return !simp->link_down_now(link_id);
      };
      if (capture_wire) rt.transport->capture = &sim->captures_[link.id];
      if (link.period_ms)
        rt.next_round_ns = *link.period_ms * 1'000'000;
      sim->links_.emplace(link.id, std::move(rt));
    }
    return sim;
  }

  Microdatabase& db(const std::string& replica) { return *dbs_.at(replica); }
  VirtualClock& clock() { return *clock_; }
  const std::vector<SyncFrame>& captured(const std::string& link_id) const {
    static const std::vector<SyncFrame> empty;
    auto it = captures_.find(link_id);
    return it == captures_.end() ? empty : it->second;
  }

  bool link_down_now(const std::string& link_id) const {
    auto it = links_.find(link_id);
    if (it == links_.end()) return true;
    std::int64_t now = clock_->now_ns();
    for (const auto& [down, up] : it->second.spec.outages)
      if (now >= down && now < up) return true;
    return false;
  }

  // Advances virtual time to `target`, executing everything due on the way
  // in deterministic order: scenario steps, then poll deadlines, then
  // scheduled sync rounds.
  void step_until(std::int64_t target) {
    while (true) {
      std::int64_t t_step = next_step_time();
      std::int64_t t_poll = next_poll_time();
      std::int64_t t_round = next_round_time();
      std::int64_t t = std::min({t_step, t_poll, t_round});
      if (t > target) break;
      clock_->advance_to(t);
      if (t_step == t) {
        while (step_cursor_ < spec_.steps.size() &&
               spec_.steps[step_cursor_].at == t) {
          execute_step(spec_.steps[step_cursor_]);
          ++step_cursor_;
        }
      }
      if (t_poll == t)
        for (auto& [_, db] : dbs_) {
          auto deadline = db->next_poll_deadline();
          if (deadline && *deadline <= t) db->poll_tick(t);
        }
      if (t_round == t)
        for (auto& [id, rt] : links_)
          if (rt.next_round_ns == t) {
            run_link_round(id, rt);
            rt.next_round_ns += *rt.spec.period_ms * 1'000'000;
          }
    }
    clock_->advance_to(target);
  }

  ScenarioReport run() {
    std::int64_t horizon = spec_.horizon_ns;
    if (!spec_.steps.empty())
      horizon = std::max(horizon, spec_.steps.back().at);
    step_until(horizon);
    finalize_report();
    return report_;
  }

  const ScenarioReport& report() const { return report_; }

  Result<SyncReport> manual_round(const std::string& link_id,
                                  bool registry_only = false) {
    auto it = links_.find(link_id);
    if (it == links_.end()) return make_error(Errc::not_found, link_id);
    rounds_attempted_[link_id]++;
    auto r = dbs_.at(it->second.spec.a)
                 ->sync_round(link_id, *it->second.transport, registry_only);
    if (!r && r.error().code == Errc::transport_down)
      report_.transport_down[link_id]++;
    if (r) {
      report_.rounds_run[link_id]++;
      for (const auto& w : r.value().warnings) note_warning(w);
    }
    return r;
  }

 private:
  struct LinkRuntime {
    LinkSpec spec;
    std::unique_ptr<InMemoryTransport> transport;
    std::int64_t next_round_ns = std::numeric_limits<std::int64_t>::max();
  };

  Simulation() = default;

  std::int64_t next_step_time() const {
    return step_cursor_ < spec_.steps.size()
               ? spec_.steps[step_cursor_].at
               : std::numeric_limits<std::int64_t>::max();
  }

  std::int64_t next_poll_time() const {
    std::int64_t t = std::numeric_limits<std::int64_t>::max();
    for (const auto& [_, db] : dbs_) {
      auto deadline = db->next_poll_deadline();
      if (deadline) t = std::min(t, *deadline);
    }
    return t;
  }

  std::int64_t next_round_time() const {
    std::int64_t t = std::numeric_limits<std::int64_t>::max();
    for (const auto& [_, rt] : links_) t = std::min(t, rt.next_round_ns);
    return t;
  }

  void run_link_round(const std::string& id, LinkRuntime& rt) {
    rounds_attempted_[id]++;
    auto r = dbs_.at(rt.spec.a)->sync_round(id, *rt.transport);
    if (!r) {
      if (r.error().code == Errc::transport_down)
        report_.transport_down[id]++;
      else
        note_warning("round-error:" + id + ":" + r.error().to_string());
      return;
    }
    report_.rounds_run[id]++;
    for (const auto& w : r.value().warnings) note_warning(w);
  }

  void note_warning(const std::string& w) {
    if (std::find(report_.warnings.begin(), report_.warnings.end(), w) ==
        report_.warnings.end())
      report_.warnings.push_back(w);
  }

  Principal step_principal(const Microdatabase& db, const ManifestJson& p) {
    if (p.contains("subject"))
      return Principal{p["subject"].get<std::string>(), "scenario",
                       std::numeric_limits<std::int64_t>::max()};
    return db.owner_principal();
  }

  void record_assertion(const ScenarioStep& step, const std::string& kind,
                        bool pass, std::string detail) {
    report_.assertions.push_back(
        AssertionResult{step.index, kind, pass, std::move(detail)});
    if (!pass) report_.pass = false;
  }

  void execute_step(const ScenarioStep& step) {
    const ManifestJson& p = step.params;
    switch (step.action) {
      case StepAction::append: {
        auto& db = *dbs_.at(p["replica"].get<std::string>());
        auto value = value_from_json(p["value"]);
        if (!value) {
          note_warning("bad-step-value:" + std::to_string(step.index));
          return;
        }
        RecordKey key{p["ts"].get<std::int64_t>(),
                      p.value("seq", std::uint32_t{0})};
        auto r = db.append(p["store"].get<std::string>(), key,
                           std::move(value).value(), step_principal(db, p));
        if (!r) note_warning("append-error:" + r.error().to_string());
        break;
      }
      case StepAction::mutate: {
        auto& db = *dbs_.at(p["replica"].get<std::string>());
        std::optional<Value> value;
        if (p.contains("value") && !p["value"].is_null()) {
          auto v = value_from_json(p["value"]);
          if (!v) {
            note_warning("bad-step-value:" + std::to_string(step.index));
            return;
          }
          value = std::move(v).value();
        }
        RecordKey key{p["ts"].get<std::int64_t>(),
                      p.value("seq", std::uint32_t{0})};
        auto r = db.mutate(p["store"].get<std::string>(), key,
                           std::move(value), step_principal(db, p));
        if (!r) note_warning("mutate-error:" + r.error().to_string());
        break;
      }
      case StepAction::push: {
        auto& db = *dbs_.at(p["replica"].get<std::string>());
        auto value = value_from_json(p["value"]);
        if (!value) {
          note_warning("bad-step-value:" + std::to_string(step.index));
          return;
        }
        db.push_reading(p["source_id"].get<std::string>(),
                        Reading{p["ts"].get<std::int64_t>(),
                                std::move(value).value()});
        break;
      }
      case StepAction::publish: {
        auto& db = *dbs_.at(p["replica"].get<std::string>());
        auto r = db.publish_manifest(p["manifest"], step_principal(db, p));
        if (!r) note_warning("publish-error:" + r.error().to_string());
        break;
      }
      case StepAction::deploy: {
        auto& db = *dbs_.at(p["replica"].get<std::string>());
        auto r = db.deploy(p["manifest_id"].get<std::string>(),
                           p["version"].get<std::uint64_t>());
        if (!r) note_warning("deploy-error:" + r.error().to_string());
        break;
      }
      case StepAction::sync_round: {
        (void)manual_round(p["link"].get<std::string>(),
                           p.value("registry_only", false));
        break;
      }
      case StepAction::poll_tick: {
        dbs_.at(p["replica"].get<std::string>())->poll_tick(clock_->now_ns());
        break;
      }
      case StepAction::assert_converged: {
        std::vector<std::string> replicas;
        if (p.contains("replicas"))
          for (const auto& r : p["replicas"])
            replicas.push_back(r.get<std::string>());
        else
          for (const auto& [id, _] : dbs_) replicas.push_back(id);
        KeyRange range;
        if (p.contains("range")) {
          auto r = range_from_json(p["range"]);
          if (r) range = r.value();
        }
        for (const auto& store : p["stores"]) {
          std::string name = store.get<std::string>();
          std::set<std::string> distinct;
          std::string detail;
          for (const auto& replica : replicas) {
            auto h = dbs_.at(replica)->content_hash(name, range);
            std::string hex = h ? to_hex(h.value()) : "absent";
            distinct.insert(hex);
            detail += replica + "=" + hex.substr(0, 12) + " ";
          }
          record_assertion(step, "converged:" + name, distinct.size() == 1,
                           detail);
        }
        break;
      }
      case StepAction::assert_event_count: {
        auto& db = *dbs_.at(p["replica"].get<std::string>());
        auto txn = txn_from_name(p.value("txn", std::string("create")));
        std::uint64_t expected = p["expected"].get<std::uint64_t>();
        std::uint64_t actual =
            db.bus().emitted(p["store"].get<std::string>(),
                             txn ? txn.value() : Txn::create);
        record_assertion(step, "event-count:" + p["store"].get<std::string>(),
                         actual == expected,
                         "expected=" + std::to_string(expected) +
                             " actual=" + std::to_string(actual));
        break;
      }
      case StepAction::assert_denied: {
        auto& db = *dbs_.at(p["replica"].get<std::string>());
        Principal subject{p["subject"].get<std::string>(), "scenario",
                          std::numeric_limits<std::int64_t>::max()};
        auto iface = interface_from_name(
            p.value("interface", std::string("exchange-read")));
        KeyRange range;
        if (p.contains("range")) {
          auto r = range_from_json(p["range"]);
          if (r) range = r.value();
        }
        auto d = db.authorize(subject, iface ? iface.value()
                                             : Interface::exchange_read,
                              p["store"].get<std::string>(), range);
        record_assertion(step, "denied:" + p["subject"].get<std::string>(),
                         !d.allow, d.reason);
        break;
      }
    }
  }

  void finalize_report() {
    report_.seed = spec_.seed;
    for (auto& [replica, db] : dbs_) {
      for (const auto& store : db->store_names(true)) {
        auto h = db->content_hash(store);
        report_.hashes[replica][store] = h ? to_hex(h.value()) : "absent";
        auto& c = report_.counters[replica][store];
        c["committed_create"] = db->committed_count(store, Txn::create);
        c["committed_update"] = db->committed_count(store, Txn::update);
        c["committed_delete"] = db->committed_count(store, Txn::remove);
        c["events_create"] = db->bus().emitted(store, Txn::create);
        c["events_update"] = db->bus().emitted(store, Txn::update);
        c["events_delete"] = db->bus().emitted(store, Txn::remove);
        c["visible"] = db->visible_count(store);
        c["conflicts"] = db->store_conflicts(store);
      }
      // Event completeness runs on every scenario: one create event per
      // committed create (local or sync-applied), delivered in order.
      auto tap = taps_.at(replica);
      std::map<std::string, std::uint64_t> last_seq;
      std::map<std::string, std::map<Txn, std::uint64_t>> delivered;
      bool ordered = true;
      for (const auto& e : tap->drain()) {
        if (e.event_seq <= last_seq[e.store]) ordered = false;
        last_seq[e.store] = e.event_seq;
        delivered[e.store][e.txn]++;
      }
      bool complete = true;
      std::string detail;
      for (const auto& store : db->store_names(true)) {
        std::uint64_t committed = db->committed_count(store, Txn::create);
        std::uint64_t events = delivered[store][Txn::create];
        if (committed != events) {
          complete = false;
          detail += store + ":committed=" + std::to_string(committed) +
                    ",events=" + std::to_string(events) + " ";
        }
      }
      AssertionResult a;
      a.step_index = spec_.steps.size();
      a.kind = "event-completeness:" + replica;
      a.pass = complete && ordered && !tap->gap();
      a.detail = detail + (ordered ? "" : "out-of-order ") +
                 (tap->gap() ? "gap " : "");
      report_.assertions.push_back(a);
      if (!a.pass) report_.pass = false;
    }
    std::sort(report_.warnings.begin(), report_.warnings.end());
  }

  TopologySpec spec_;
  bool capture_wire_ = false;
  std::shared_ptr<VirtualClock> clock_;
  std::map<std::string, std::unique_ptr<Microdatabase>> dbs_;
  std::map<std::string, std::shared_ptr<Subscription>> taps_;
  std::map<std::string, LinkRuntime> links_;
  std::map<std::string, std::vector<SyncFrame>> captures_;
  std::map<std::string, std::uint64_t> rounds_attempted_;
  std::size_t step_cursor_ = 0;
  ScenarioReport report_;
};

// CLI entry: parse + run + serialize.
inline Result<ScenarioReport> run_scenario_file(
    const std::filesystem::path& scenario_path,
    const std::filesystem::path& workdir,
    std::optional<std::uint64_t> seed_override = std::nullopt) {
  std::ifstream in(scenario_path);
  if (!in)
    return make_error(Errc::io_error,
                      "cannot read " + scenario_path.string());
  ManifestJson j = ManifestJson::parse(in, nullptr, false, true);
  if (j.is_discarded())
    return make_error(Errc::parse_error,
                      scenario_path.string() + ": invalid JSON");
  auto spec = TopologySpec::parse(j);
  if (!spec) return spec.error();
  if (seed_override) spec.value().seed = *seed_override;
  auto sim = Simulation::load(std::move(spec).value(), workdir);
  if (!sim) return sim.error();
  return sim.value()->run();
}

}  // namespace microdb
