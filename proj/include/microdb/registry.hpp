#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "microdb/error.hpp"
#include "microdb/eventbus.hpp"
#include "microdb/infomodel.hpp"
#include "microdb/security.hpp"
#include "microdb/store.hpp"
#include "microdb/sync.hpp"

namespace microdb {

using ManifestJson = nlohmann::ordered_json;

struct ManifestModel {
  std::string model_id;
  std::vector<TypeDef> types;
  std::vector<InstanceDef> instances;
  std::vector<Tag> tags;
};

struct ManifestRole {
  Role role;
  std::vector<std::string> subjects;
};

struct DeclaredCallback {
  std::string id;
  Stage stage = Stage::exchange;
  std::string store_pattern = "*";
  std::string role_pattern;
  ManifestJson action;  // {"kind": ..., params...}
};

struct ManifestIngest {
  std::string store;
  IngestSpec spec;
};

// Declarative deployment unit. Parsed from a JSON document with top-level
// keys manifest_id, version, publisher, model, stores, roles, policies,
// issuers, ingest, sync, callbacks (all sections optional).
struct Manifest {
  std::string manifest_id;
  std::uint64_t version = 0;
  std::string publisher;
  std::optional<ManifestModel> model;
  std::vector<ColumnStoreConfig> stores;
  std::vector<ManifestRole> roles;
  std::vector<SharingPolicy> policies;
  std::vector<TrustedIssuer> issuers;
  std::vector<ManifestIngest> ingest;
  std::vector<SyncLinkConfig> sync;
  std::vector<DeclaredCallback> callbacks;
  ManifestJson doc;
};

inline Result<RecordKey> key_from_json(const ManifestJson& j) {
  if (j.is_number_integer()) return RecordKey{j.get<std::int64_t>(), 0};
  if (j.is_array() && (j.size() == 1 || j.size() == 2)) {
    RecordKey k{j[0].get<std::int64_t>(), 0};
    if (j.size() == 2) k.seq = j[1].get<std::uint32_t>();
    return k;
  }
  return make_error(Errc::parse_error, "record key must be ts or [ts, seq]");
}

inline Result<KeyRange> range_from_json(const ManifestJson& j) {
  KeyRange r;
  if (j.is_null()) return r;
  if (!j.is_object())
    return make_error(Errc::parse_error, "range must be an object");
  if (j.contains("lo")) {
    auto k = key_from_json(j["lo"]);
    if (!k) return k.error();
    r.lo = k.value();
  }
  if (j.contains("hi")) {
    auto k = key_from_json(j["hi"]);
    if (!k) return k.error();
    r.hi = k.value();
  }
  return r;
}

inline ManifestJson range_to_json(const KeyRange& r) {
  ManifestJson j = ManifestJson::object();
  if (r.lo) j["lo"] = ManifestJson::array({r.lo->ts, r.lo->seq});
  if (r.hi) j["hi"] = ManifestJson::array({r.hi->ts, r.hi->seq});
  return j;
}

namespace detail {

inline Result<std::string> req_string(const ManifestJson& j, const char* key) {
  if (!j.contains(key) || !j[key].is_string())
    return make_error(Errc::parse_error,
                      std::string("missing string field ") + key);
  return j[key].get<std::string>();
}

}  // namespace detail

inline Result<Manifest> parse_manifest(const ManifestJson& j) {
  Manifest m;
  m.doc = j;
  auto id = detail::req_string(j, "manifest_id");
  if (!id) return id.error();
  m.manifest_id = std::move(id).value();
  if (!j.contains("version") || !j["version"].is_number_unsigned())
    return make_error(Errc::parse_error, "missing positive version");
  m.version = j["version"].get<std::uint64_t>();
  auto pub = detail::req_string(j, "publisher");
  if (!pub) return pub.error();
  m.publisher = std::move(pub).value();

  if (j.contains("model") && !j["model"].is_null()) {
    const auto& mj = j["model"];
    ManifestModel model;
    auto mid = detail::req_string(mj, "model_id");
    if (!mid) return mid.error();
    model.model_id = std::move(mid).value();
    for (const auto& tj : mj.value("types", ManifestJson::array())) {
      TypeDef t;
      t.model_id = model.model_id;
      auto name = detail::req_string(tj, "name");
      if (!name) return name.error();
      t.name = std::move(name).value();
      t.parent = tj.value("parent", std::string{});
      for (const auto& pj : tj.value("properties", ManifestJson::array())) {
        PropertyDef p;
        auto pname = detail::req_string(pj, "name");
        if (!pname) return pname.error();
        p.name = std::move(pname).value();
        std::string kind = pj.value("type", std::string("float64"));
        if (kind.rfind("object(", 0) == 0 && kind.back() == ')') {
          p.is_object = true;
          p.object_type = kind.substr(7, kind.size() - 8);
        } else {
          auto sk = scalar_kind_from_name(kind);
          if (!sk)
            return make_error(Errc::parse_error,
                              "property " + p.name + ": " + sk.error().message);
          p.scalar = sk.value();
        }
        p.unit = pj.value("unit", std::string{});
        t.properties.push_back(std::move(p));
      }
      model.types.push_back(std::move(t));
    }
    for (const auto& ij : mj.value("instances", ManifestJson::array())) {
      InstanceDef inst;
      inst.model_id = model.model_id;
      auto name = detail::req_string(ij, "name");
      if (!name) return name.error();
      inst.name = std::move(name).value();
      auto type = detail::req_string(ij, "type");
      if (!type) return type.error();
      inst.type = std::move(type).value();
      auto binding = detail::req_string(ij, "binding");
      if (!binding) return binding.error();
      inst.binding = std::move(binding).value();
      model.instances.push_back(std::move(inst));
    }
    for (const auto& gj : mj.value("tags", ManifestJson::array())) {
      Tag t;
      auto label = detail::req_string(gj, "label");
      if (!label) return label.error();
      t.label = std::move(label).value();
      std::string kind = gj.value("subject_kind", std::string("type"));
      if (kind == "type")
        t.subject_kind = TagSubject::type;
      else if (kind == "property")
        t.subject_kind = TagSubject::property;
      else if (kind == "instance")
        t.subject_kind = TagSubject::instance;
      else
        return make_error(Errc::parse_error, "bad tag subject kind " + kind);
      auto subject = detail::req_string(gj, "subject");
      if (!subject) return subject.error();
      t.subject = std::move(subject).value();
      model.tags.push_back(std::move(t));
    }
    m.model = std::move(model);
  }

  for (const auto& sj : j.value("stores", ManifestJson::array())) {
    ColumnStoreConfig c;
    auto name = detail::req_string(sj, "name");
    if (!name) return name.error();
    c.name = std::move(name).value();
    auto mut = mutability_from_name(
        sj.value("mutability", std::string("immutable")));
    if (!mut) return mut.error();
    c.mutability = mut.value();
    if (sj.contains("value_type") && !sj["value_type"].is_null())
      c.value_type = sj["value_type"].get<std::string>();
    c.encrypted = sj.value("encrypted", false);
    if (sj.contains("retention") && !sj["retention"].is_null())
      c.retention = sj["retention"].get<std::uint64_t>();
    if (sj.contains("ingest") && !sj["ingest"].is_null()) {
      const auto& ij = sj["ingest"];
      IngestSpec spec;
      auto sid = detail::req_string(ij, "source_id");
      if (!sid) return sid.error();
      spec.source_id = std::move(sid).value();
      spec.poll = ij.value("mode", std::string("push")) == "poll";
      spec.period_ms = ij.value("period_ms", std::int64_t{0});
      spec.address = ij.value("address", std::string{});
      c.ingest = std::move(spec);
    }
    m.stores.push_back(std::move(c));
  }

  for (const auto& rj : j.value("roles", ManifestJson::array())) {
    ManifestRole mr;
    auto name = detail::req_string(rj, "name");
    if (!name) return name.error();
    mr.role.name = std::move(name).value();
    for (const auto& gj : rj.value("grants", ManifestJson::array())) {
      Grant g;
      auto iface = interface_from_name(
          gj.value("interface", std::string("exchange-read")));
      if (!iface) return iface.error();
      g.iface = iface.value();
      g.store_pattern = gj.value("store", std::string("*"));
      if (gj.contains("range")) {
        auto r = range_from_json(gj["range"]);
        if (!r) return r.error();
        g.range = r.value();
      }
      g.policy_ref = gj.value("policy", std::string{});
      mr.role.grants.push_back(std::move(g));
    }
    for (const auto& subj : rj.value("subjects", ManifestJson::array()))
      mr.subjects.push_back(subj.get<std::string>());
    m.roles.push_back(std::move(mr));
  }

  for (const auto& pj : j.value("policies", ManifestJson::array())) {
    SharingPolicy p;
    auto name = detail::req_string(pj, "name");
    if (!name) return name.error();
    p.name = std::move(name).value();
    auto digest = from_hex(pj.value("eula_digest", std::string(64, '0')));
    if (!digest) return digest.error();
    p.eula_digest = std::move(digest).value();
    p.allow_synchronization = pj.value("allow_synchronization", true);
    for (const auto& tj : pj.value("allowed_tiers", ManifestJson::array())) {
      auto t = tier_kind_from_name(tj.get<std::string>());
      if (!t) return t.error();
      p.allowed_tier_kinds.insert(t.value());
    }
    m.policies.push_back(std::move(p));
  }

  for (const auto& ij : j.value("issuers", ManifestJson::array())) {
    TrustedIssuer iss;
    auto id = detail::req_string(ij, "id");
    if (!id) return id.error();
    iss.id = std::move(id).value();
    auto key = from_hex(ij.value("key_hex", std::string{}));
    if (!key) return key.error();
    iss.key = std::move(key).value();
    m.issuers.push_back(std::move(iss));
  }

  for (const auto& ij : j.value("ingest", ManifestJson::array())) {
    ManifestIngest mi;
    auto store = detail::req_string(ij, "store");
    if (!store) return store.error();
    mi.store = std::move(store).value();
    auto sid = detail::req_string(ij, "source_id");
    if (!sid) return sid.error();
    mi.spec.source_id = std::move(sid).value();
    mi.spec.poll = ij.value("mode", std::string("push")) == "poll";
    mi.spec.period_ms = ij.value("period_ms", std::int64_t{0});
    mi.spec.address = ij.value("address", std::string{});
    m.ingest.push_back(std::move(mi));
  }

  for (const auto& sj : j.value("sync", ManifestJson::array())) {
    SyncLinkConfig link;
    auto id = detail::req_string(sj, "link_id");
    if (!id) return id.error();
    link.link_id = std::move(id).value();
    auto peer = detail::req_string(sj, "peer");
    if (!peer) return peer.error();
    link.peer_replica = std::move(peer).value();
    auto tier = tier_kind_from_name(sj.value("peer_tier", std::string{}));
    if (!tier) return tier.error();
    link.peer_tier = tier.value();
    for (const auto& st : sj.value("stores", ManifestJson::array()))
      link.filter.store_patterns.push_back(st.get<std::string>());
    if (sj.contains("range")) {
      auto r = range_from_json(sj["range"]);
      if (!r) return r.error();
      link.filter.range = r.value();
    }
    if (sj.contains("tag") && !sj["tag"].is_null())
      link.filter.tag = sj["tag"].get<std::string>();
    if (sj.contains("period_ms") && !sj["period_ms"].is_null())
      link.period_ms = sj["period_ms"].get<std::int64_t>();
    if (sj.contains("key_hex")) {
      auto key = from_hex(sj["key_hex"].get<std::string>());
      if (!key) return key.error();
      link.link_key = std::move(key).value();
    }
    link.endpoint = sj.value("endpoint", std::string{});
    m.sync.push_back(std::move(link));
  }

  for (const auto& cj : j.value("callbacks", ManifestJson::array())) {
    DeclaredCallback cb;
    auto id = detail::req_string(cj, "id");
    if (!id) return id.error();
    cb.id = std::move(id).value();
    auto stage = stage_from_name(cj.value("stage", std::string("exchange")));
    if (!stage) return stage.error();
    cb.stage = stage.value();
    cb.store_pattern = cj.value("store", std::string("*"));
    cb.role_pattern = cj.value("role", std::string{});
    if (!cj.contains("action") || !cj["action"].is_object())
      return make_error(Errc::parse_error,
                        "callback " + cb.id + " has no action");
    cb.action = cj["action"];
    m.callbacks.push_back(std::move(cb));
  }

  return m;
}

// Builds an executable action from a declared callback.
inline Result<std::function<CallbackAction(const Record&)>>
build_callback_action(const ManifestJson& action) {
  std::string kind = action.value("kind", std::string{});
  if (kind == "range_clamp") {
    if (!action.contains("min") || !action.contains("max"))
      return make_error(Errc::invalid_config, "range_clamp needs min and max");
    return make_range_clamp(action["min"].get<double>(),
                            action["max"].get<double>());
  }
  if (kind == "unit_scale") {
    if (!action.contains("factor"))
      return make_error(Errc::invalid_config, "unit_scale needs factor");
    return make_unit_scale(action["factor"].get<double>());
  }
  if (kind == "redact_field") {
    if (!action.contains("field"))
      return make_error(Errc::invalid_config, "redact_field needs field");
    return make_redact_field(action["field"].get<std::string>());
  }
  if (kind == "reject_all")
    return make_reject_all(action.value("reason", std::string("rejected")));
  return make_error(Errc::invalid_config, "unknown callback kind " + kind);
}

// What the validator may assume is already deployed locally.
struct DeployedView {
  TierKind tier = TierKind::local;
  std::set<std::string> stores;
  std::set<std::string> models;
  std::set<std::string> types;      // qualified model:Type
  std::set<std::string> instances;  // qualified model:name
  std::set<std::string> roles;
  std::set<std::string> policies;
};

// Static manifest validation. Sound with respect to deployment: anything
// that deploys cleanly also passes here.
inline Result<void> validate_manifest(const Manifest& m,
                                      const DeployedView& view) {
  std::vector<std::string> problems;
  auto flag = [&](std::string p) { problems.push_back(std::move(p)); };

  if (m.manifest_id.empty()) flag("manifest_id is empty");
  if (m.version == 0) flag("version must be positive");
  if (m.publisher.empty()) flag("publisher is empty");

  std::set<std::string> manifest_types;
  std::set<std::string> manifest_instances;
  if (m.model) {
    if (m.model->model_id.empty()) flag("model_id is empty");
    std::set<std::string> defined;
    for (const auto& t : m.model->types) defined.insert(t.name);
    std::set<std::string> declared;
    for (const auto& t : m.model->types) {
      manifest_types.insert(m.model->model_id + ":" + t.name);
      if (!t.parent.empty() && !declared.contains(t.parent) &&
          !view.types.contains(m.model->model_id + ":" + t.parent))
        flag("type " + t.name + " has unknown parent " + t.parent);
      for (const auto& p : t.properties)
        if (p.is_object && !defined.contains(p.object_type) &&
            !view.types.contains(m.model->model_id + ":" + p.object_type))
          flag("property " + t.name + "." + p.name +
               " references unknown type " + p.object_type);
      declared.insert(t.name);
    }
    std::set<std::string> store_names;
    for (const auto& s : m.stores) store_names.insert(s.name);
    for (const auto& inst : m.model->instances) {
      manifest_instances.insert(m.model->model_id + ":" + inst.name);
      if (!defined.contains(inst.type) &&
          !view.types.contains(m.model->model_id + ":" + inst.type))
        flag("instance " + inst.name + " has unknown type " + inst.type);
      if (!store_names.contains(inst.binding) &&
          !view.stores.contains(inst.binding))
        flag("instance " + inst.name + " binds unknown store " + inst.binding);
    }
    for (const auto& t : m.model->tags) {
      if (t.label.empty() || t.label.size() > kMaxTagLabel)
        flag("bad tag label " + t.label);
      bool known = false;
      switch (t.subject_kind) {
        case TagSubject::type:
          known = defined.contains(t.subject) ||
                  view.types.contains(m.model->model_id + ":" + t.subject);
          break;
        case TagSubject::instance:
          known = manifest_instances.contains(m.model->model_id + ":" +
                                              t.subject) ||
                  view.instances.contains(m.model->model_id + ":" + t.subject);
          break;
        case TagSubject::property: {
          auto dot = t.subject.rfind('.');
          known = dot != std::string::npos &&
                  (defined.contains(t.subject.substr(0, dot)) ||
                   view.types.contains(m.model->model_id + ":" +
                                       t.subject.substr(0, dot)));
          break;
        }
      }
      if (!known) flag("tag " + t.label + " targets unknown " + t.subject);
    }
  }

  for (const auto& s : m.stores) {
    if (!valid_store_name(s.name)) flag("bad store name " + s.name);
    if (s.name.rfind("__", 0) == 0) flag("reserved store name " + s.name);
    if (s.value_type) {
      const std::string& ref = *s.value_type;
      std::string qualified = ref;
      if (ref.find(':') == std::string::npos && m.model)
        qualified = m.model->model_id + ":" + ref;
      bool known = manifest_types.contains(qualified) ||
                   view.types.contains(qualified);
      if (!known && ref.find(':') == std::string::npos) {
        // A bare name may still resolve uniquely against deployed models.
        int hits = 0;
        for (const auto& t : view.types)
          if (t.substr(t.find(':') + 1) == ref) ++hits;
        known = hits == 1;
      }
      if (!known)
        flag("store " + s.name + " references unknown type " + ref);
    }
    if (s.ingest && s.ingest->poll && s.ingest->period_ms < 10)
      flag("store " + s.name + " poll period below 10ms");
  }

  for (const auto& r : m.roles) {
    if (r.role.name.empty()) flag("role with empty name");
    if (is_local_role(r.role.name)) flag("reserved role name " + r.role.name);
    if (r.role.grants.empty()) flag("role " + r.role.name + " has no grants");
    for (const auto& g : r.role.grants)
      if (g.range.lo && g.range.hi && !(*g.range.lo < *g.range.hi))
        flag("role " + r.role.name + " grant range is empty");
  }

  for (const auto& p : m.policies)
    if (p.eula_digest.size() != kDigestLen)
      flag("policy " + p.name + " EULA digest must be 32 bytes");

  for (const auto& i : m.issuers)
    if (i.key.empty()) flag("issuer " + i.id + " has no key");

  std::set<std::string> store_names;
  for (const auto& s : m.stores) store_names.insert(s.name);
  for (const auto& mi : m.ingest) {
    if (!store_names.contains(mi.store) && !view.stores.contains(mi.store))
      flag("ingest binding targets unknown store " + mi.store);
    if (mi.spec.poll && mi.spec.period_ms < 10)
      flag("ingest for " + mi.store + " poll period below 10ms");
  }

  for (const auto& link : m.sync) {
    if (link.link_id.empty()) flag("sync link with empty id");
    if (!tiers_adjacent(view.tier, link.peer_tier))
      flag("link " + link.link_id + " peer tier " +
           tier_kind_name(link.peer_tier) + " is not adjacent to " +
           tier_kind_name(view.tier));
    if (!link.filter.has_selector())
      flag("link " + link.link_id + " filter has no selector");
    if (!link.link_key.empty() && link.link_key.size() != kKeyLen)
      flag("link " + link.link_id + " key must be 32 bytes");
  }

  for (const auto& cb : m.callbacks) {
    auto action = build_callback_action(cb.action);
    if (!action) flag("callback " + cb.id + ": " + action.error().message);
  }

  if (!problems.empty()) {
    std::string joined;
    for (const auto& p : problems) {
      if (!joined.empty()) joined += "; ";
      joined += p;
    }
    return make_error(Errc::validation_failure, joined);
  }
  return {};
}

struct RegistryEntry {
  std::string tier_id;  // publisher tier (record origin)
  std::uint64_t seq = 0;
  std::string manifest_id;
  std::uint64_t version = 0;
  std::string publisher;
  ManifestJson doc;
};

inline Value registry_record_value(const Manifest& m) {
  Value::Object obj;
  obj.emplace_back("manifest_id", Value::of(m.manifest_id));
  obj.emplace_back("version",
                   Value::of(static_cast<std::int64_t>(m.version)));
  obj.emplace_back("publisher", Value::of(m.publisher));
  obj.emplace_back("doc", Value::of(m.doc.dump()));
  return Value::of(std::move(obj));
}

inline Result<RegistryEntry> registry_entry_from_record(const Record& r) {
  RegistryEntry e;
  e.tier_id = r.prov.origin_id;
  e.seq = r.prov.origin_seq;
  const Value* id = r.value.field("manifest_id");
  const Value* version = r.value.field("version");
  const Value* publisher = r.value.field("publisher");
  const Value* doc = r.value.field("doc");
  if (id == nullptr || version == nullptr || publisher == nullptr ||
      doc == nullptr)
    return make_error(Errc::decode_error, "malformed registry record");
  e.manifest_id = id->as_text();
  e.version = static_cast<std::uint64_t>(version->as_int());
  e.publisher = publisher->as_text();
  e.doc = ManifestJson::parse(doc->as_text(), nullptr, false);
  if (e.doc.is_discarded())
    return make_error(Errc::decode_error, "malformed registry manifest JSON");
  return e;
}

struct DeploymentItem {
  std::string section;
  std::string name;
  std::string outcome;  // created | replaced | skipped | failed
  std::string message;
};

struct DeploymentReport {
  std::string manifest_id;
  std::uint64_t version = 0;
  bool partial = false;
  std::vector<DeploymentItem> items;

  std::uint64_t count(std::string_view outcome) const {
    std::uint64_t n = 0;
    for (const auto& i : items)
      if (i.outcome == outcome) ++n;
    return n;
  }
};

}  // namespace microdb
