#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "microdb/error.hpp"
#include "microdb/value.hpp"

namespace microdb {

enum class ScalarKind : std::uint8_t {
  boolean,
  integer,
  floating,
  text,
  binary,
};

inline const char* scalar_kind_name(ScalarKind k) {
  switch (k) {
    case ScalarKind::boolean: return "boolean";
    case ScalarKind::integer: return "integer";
    case ScalarKind::floating: return "float64";
    case ScalarKind::text: return "string";
    case ScalarKind::binary: return "bytes";
  }
  return "?";
}

inline Result<ScalarKind> scalar_kind_from_name(std::string_view s) {
  if (s == "boolean" || s == "bool") return ScalarKind::boolean;
  if (s == "integer" || s == "int64") return ScalarKind::integer;
  if (s == "float64" || s == "float") return ScalarKind::floating;
  if (s == "string") return ScalarKind::text;
  if (s == "bytes") return ScalarKind::binary;
  return make_error(Errc::invalid_config, "unknown scalar kind " + std::string(s));
}

struct PropertyDef {
  std::string name;
  bool is_object = false;
  ScalarKind scalar = ScalarKind::floating;  // when !is_object
  std::string object_type;                   // when is_object, a type name
  std::string unit;                          // optional engineering unit

  bool operator==(const PropertyDef&) const = default;

  std::string type_name() const {
    return is_object ? "object(" + object_type + ")"
                     : std::string(scalar_kind_name(scalar));
  }
};

struct TypeDef {
  std::string model_id;
  std::string name;
  std::string parent;  // empty when root
  std::vector<PropertyDef> properties;

  bool operator==(const TypeDef&) const = default;
};

struct InstanceDef {
  std::string model_id;
  std::string name;
  std::string type;
  std::string binding;  // column store name

  bool operator==(const InstanceDef&) const = default;
};

enum class TagSubject : std::uint8_t { type, property, instance };

inline const char* tag_subject_name(TagSubject s) {
  switch (s) {
    case TagSubject::type: return "type";
    case TagSubject::property: return "property";
    case TagSubject::instance: return "instance";
  }
  return "?";
}

struct Tag {
  std::string label;
  TagSubject subject_kind = TagSubject::type;
  std::string subject;  // type name, instance name, or Type.property

  auto operator<=>(const Tag&) const = default;
};

struct BrowseNode {
  std::string kind;
  std::string name;
  std::vector<std::string> tags;

  bool operator==(const BrowseNode&) const = default;

  std::string to_line() const {
    std::string joined;
    for (const auto& t : tags) {
      if (!joined.empty()) joined += ',';
      joined += t;
    }
    return kind + "\t" + name + "\t" + joined;
  }
};

inline constexpr std::size_t kMaxTagLabel = 128;

// One microdatabase's type system: single-inheritance types, instances bound
// to column stores, free-form classification tags.
class InfoModel {
 public:
  InfoModel() = default;
  explicit InfoModel(std::string model_id) : model_id_(std::move(model_id)) {}

  const std::string& model_id() const { return model_id_; }
  const std::map<std::string, TypeDef>& types() const { return types_; }
  const std::map<std::string, InstanceDef>& instances() const {
    return instances_;
  }
  const std::set<Tag>& tags() const { return tags_; }

  Result<void> define_type(const TypeDef& def) {
    if (def.name.empty())
      return make_error(Errc::invalid_config, "empty type name");
    if (types_.contains(def.name))
      return make_error(Errc::duplicate, "type " + def.name);
    if (!def.parent.empty()) {
      if (def.parent == def.name)
        return make_error(Errc::cyclic_inheritance, def.name);
      if (!types_.contains(def.parent))
        return make_error(Errc::unknown_parent, def.parent);
    }
    std::set<std::string> seen;
    for (const auto& p : def.properties) {
      if (!seen.insert(p.name).second)
        return make_error(Errc::duplicate,
                          "property " + p.name + " declared twice");
      if (p.is_object && !types_.contains(p.object_type) &&
          p.object_type != def.name)
        return make_error(Errc::invalid_config,
                          "property " + p.name + " references unknown type " +
                              p.object_type);
    }
    // Inherited names may not be overridden.
    for (std::string cur = def.parent; !cur.empty();) {
      const TypeDef& t = types_.at(cur);
      for (const auto& p : t.properties)
        if (seen.contains(p.name))
          return make_error(Errc::duplicate,
                            "property " + p.name + " already inherited from " +
                                cur);
      cur = t.parent;
    }
    types_.emplace(def.name, def);
    return {};
  }

  Result<void> define_instance(const InstanceDef& def) {
    if (instances_.contains(def.name))
      return make_error(Errc::duplicate, "instance " + def.name);
    if (!types_.contains(def.type))
      return make_error(Errc::invalid_config,
                        "instance " + def.name + " has unknown type " +
                            def.type);
    instances_.emplace(def.name, def);
    return {};
  }

  bool type_in_use(const std::string& name,
                   const std::set<std::string>& store_refs) const {
    if (store_refs.contains(name)) return true;
    for (const auto& [_, inst] : instances_)
      if (inst.type == name) return true;
    for (const auto& [_, t] : types_) {
      if (t.parent == name) return true;
      for (const auto& p : t.properties)
        if (p.is_object && p.object_type == name) return true;
    }
    return false;
  }

  Result<void> classify(const Tag& tag) {
    if (tag.label.empty() || tag.label.size() > kMaxTagLabel)
      return make_error(Errc::invalid_config, "bad tag label");
    if (!subject_exists(tag.subject_kind, tag.subject))
      return make_error(Errc::unknown_subject, tag.subject);
    if (!tags_.insert(tag).second)
      return make_error(Errc::duplicate_tag,
                        tag.label + " on " + tag.subject);
    return {};
  }

  Result<void> unclassify(const Tag& tag) {
    if (tags_.erase(tag) == 0)
      return make_error(Errc::not_found, "tag " + tag.label);
    return {};
  }

  // Properties of a type including everything inherited, base-most first.
  std::vector<PropertyDef> property_closure(const std::string& type) const {
    std::vector<std::string> chain;
    for (std::string cur = type; !cur.empty();) {
      auto it = types_.find(cur);
      if (it == types_.end()) break;
      chain.push_back(cur);
      cur = it->second.parent;
    }
    std::vector<PropertyDef> out;
    for (auto it = chain.rbegin(); it != chain.rend(); ++it)
      for (const auto& p : types_.at(*it).properties) out.push_back(p);
    return out;
  }

  std::vector<std::string> ancestry(const std::string& type) const {
    std::vector<std::string> chain;
    for (std::string cur = type; !cur.empty();) {
      auto it = types_.find(cur);
      if (it == types_.end()) break;
      chain.push_back(cur);
      cur = it->second.parent;
    }
    return chain;
  }

  bool is_same_or_descendant(const std::string& candidate,
                             const std::string& base) const {
    auto chain = ancestry(candidate);
    return std::find(chain.begin(), chain.end(), base) != chain.end();
  }

  std::vector<std::string> direct_tags(TagSubject kind,
                                       const std::string& subject) const {
    std::vector<std::string> out;
    for (const auto& t : tags_)
      if (t.subject_kind == kind && t.subject == subject)
        out.push_back(t.label);
    return out;
  }

  // Tags reported for an instance: its own plus everything on its type and
  // the type's ancestors. Propagation is computed here, never copied.
  std::vector<std::string> instance_tags(const std::string& instance) const {
    std::set<std::string> acc;
    auto it = instances_.find(instance);
    if (it == instances_.end()) return {};
    for (const auto& l : direct_tags(TagSubject::instance, instance))
      acc.insert(l);
    for (const auto& type : ancestry(it->second.type))
      for (const auto& l : direct_tags(TagSubject::type, type)) acc.insert(l);
    return {acc.begin(), acc.end()};
  }

  std::vector<std::string> type_tags(const std::string& type) const {
    std::set<std::string> acc;
    for (const auto& t : ancestry(type))
      for (const auto& l : direct_tags(TagSubject::type, t)) acc.insert(l);
    return {acc.begin(), acc.end()};
  }

  // Validates a value against a type: object values carry exactly the
  // declared property closure, each field kind matching its declaration.
  Result<void> validate(const std::string& type, const Value& value) const {
    auto it = types_.find(type);
    if (it == types_.end())
      return make_error(Errc::schema_violation, "unknown type " + type);
    std::string effective = type;
    if (value.type_ref) {
      std::string ref = *value.type_ref;
      auto colon = ref.find(':');
      if (colon != std::string::npos) {
        if (ref.substr(0, colon) != model_id_)
          return make_error(Errc::schema_violation,
                            "type " + ref + " is not in model " + model_id_);
        ref = ref.substr(colon + 1);
      }
      if (!is_same_or_descendant(ref, type))
        return make_error(Errc::schema_violation,
                          "value type " + ref + " is not a " + type);
      effective = ref;
    }
    if (value.kind() != Value::Kind::object)
      return make_error(Errc::schema_violation,
                        "typed value must be an object");
    auto props = property_closure(effective);
    const auto& fields = value.as_object();
    if (fields.size() != props.size())
      return make_error(Errc::schema_violation,
                        "expected " + std::to_string(props.size()) +
                            " fields, got " + std::to_string(fields.size()));
    for (const auto& p : props) {
      const Value* f = value.field(p.name);
      if (f == nullptr)
        return make_error(Errc::schema_violation, "missing field " + p.name);
      if (p.is_object) {
        auto r = validate(p.object_type, *f);
        if (!r) return r;
        continue;
      }
      bool ok = false;
      switch (p.scalar) {
        case ScalarKind::boolean: ok = f->kind() == Value::Kind::boolean; break;
        case ScalarKind::integer: ok = f->kind() == Value::Kind::integer; break;
        case ScalarKind::floating: ok = f->kind() == Value::Kind::floating; break;
        case ScalarKind::text: ok = f->kind() == Value::Kind::text; break;
        case ScalarKind::binary: ok = f->kind() == Value::Kind::binary; break;
      }
      if (!ok)
        return make_error(Errc::schema_violation,
                          "field " + p.name + " is not " +
                              scalar_kind_name(p.scalar));
    }
    return {};
  }

  Result<std::vector<BrowseNode>> browse(
      const std::string& path,
      const std::optional<std::string>& tag_filter = std::nullopt,
      const std::string& prefix = {}) const {
    std::vector<BrowseNode> out;
    auto matches = [&](const std::vector<std::string>& tags) {
      if (!tag_filter) return true;
      return std::find(tags.begin(), tags.end(), *tag_filter) != tags.end();
    };
    if (path == "/types") {
      for (const auto& [name, _] : types_) {
        auto tags = type_tags(name);
        if (!matches(tags)) continue;
        out.push_back({"type", prefix + name, std::move(tags)});
      }
      return out;
    }
    if (path == "/instances") {
      for (const auto& [name, _] : instances_) {
        auto tags = instance_tags(name);
        if (!matches(tags)) continue;
        out.push_back({"instance", prefix + name, std::move(tags)});
      }
      return out;
    }
    if (path.starts_with("/types/")) {
      std::string name = path.substr(7);
      if (!types_.contains(name))
        return make_error(Errc::bad_path, path);
      for (const auto& p : property_closure(name)) {
        auto tags = direct_tags(TagSubject::property, name + "." + p.name);
        // Tags may sit on the defining ancestor's property.
        for (const auto& anc : ancestry(name))
          for (const auto& l :
               direct_tags(TagSubject::property, anc + "." + p.name))
            if (std::find(tags.begin(), tags.end(), l) == tags.end())
              tags.push_back(l);
        std::sort(tags.begin(), tags.end());
        tags.erase(std::unique(tags.begin(), tags.end()), tags.end());
        if (!matches(tags)) continue;
        out.push_back({"property", prefix + name + "." + p.name + ":" +
                                       p.type_name() +
                                       (p.unit.empty() ? "" : " " + p.unit),
                       std::move(tags)});
      }
      return out;
    }
    if (path.starts_with("/instances/")) {
      std::string name = path.substr(11);
      auto it = instances_.find(name);
      if (it == instances_.end())
        return make_error(Errc::bad_path, path);
      auto tags = instance_tags(name);
      out.push_back({"instance",
                     prefix + name + ":" + it->second.type + "@" +
                         it->second.binding,
                     std::move(tags)});
      for (const auto& p : property_closure(it->second.type))
        out.push_back({"property", prefix + name + "." + p.name + ":" +
                                       p.type_name(),
                       {}});
      return out;
    }
    return make_error(Errc::bad_path, path);
  }

  // Catalog loaders: state restored verbatim, invariants were checked when
  // it was first defined.
  void load_type(TypeDef def) { types_[def.name] = std::move(def); }
  void load_instance(InstanceDef def) {
    instances_[def.name] = std::move(def);
  }
  void load_tag(Tag tag) { tags_.insert(std::move(tag)); }

  Result<void> remove_type(const std::string& name,
                           const std::set<std::string>& store_refs) {
    if (!types_.contains(name))
      return make_error(Errc::not_found, "type " + name);
    if (type_in_use(name, store_refs))
      return make_error(Errc::apply_failure,
                        "type " + name + " is in use and cannot change");
    types_.erase(name);
    std::erase_if(tags_, [&](const Tag& t) {
      if (t.subject_kind == TagSubject::type && t.subject == name) return true;
      return t.subject_kind == TagSubject::property &&
             t.subject.rfind(name + ".", 0) == 0;
    });
    return {};
  }

  Result<void> replace_instance(const InstanceDef& def) {
    if (!types_.contains(def.type))
      return make_error(Errc::invalid_config,
                        "instance " + def.name + " has unknown type " +
                            def.type);
    instances_[def.name] = def;
    return {};
  }

  bool subject_exists(TagSubject kind, const std::string& subject) const {
    switch (kind) {
      case TagSubject::type:
        return types_.contains(subject);
      case TagSubject::instance:
        return instances_.contains(subject);
      case TagSubject::property: {
        auto dot = subject.rfind('.');
        if (dot == std::string::npos) return false;
        auto it = types_.find(subject.substr(0, dot));
        if (it == types_.end()) return false;
        const std::string prop = subject.substr(dot + 1);
        for (const auto& p : it->second.properties)
          if (p.name == prop) return true;
        return false;
      }
    }
    return false;
  }

 private:
  std::string model_id_;
  std::map<std::string, TypeDef> types_;
  std::map<std::string, InstanceDef> instances_;
  std::set<Tag> tags_;
};

// All models deployed in one microdatabase, plus the federated browse that
// disambiguates cross-model name collisions by model prefix.
class ModelSet {
 public:
  InfoModel& model(const std::string& model_id) {
    auto it = models_.find(model_id);
    if (it == models_.end())
      it = models_.emplace(model_id, InfoModel(model_id)).first;
    return it->second;
  }

  const std::map<std::string, InfoModel>& models() const { return models_; }

  const InfoModel* find(const std::string& model_id) const {
    auto it = models_.find(model_id);
    return it == models_.end() ? nullptr : &it->second;
  }

  // "model:Type" is qualified; a bare name must resolve uniquely.
  Result<std::pair<std::string, std::string>> resolve_type(
      const std::string& ref) const {
    auto colon = ref.find(':');
    if (colon != std::string::npos) {
      std::string model_id = ref.substr(0, colon);
      std::string type = ref.substr(colon + 1);
      const InfoModel* m = find(model_id);
      if (m == nullptr || !m->types().contains(type))
        return make_error(Errc::invalid_config, "unknown type " + ref);
      return std::make_pair(model_id, type);
    }
    std::vector<std::string> hits;
    for (const auto& [id, m] : models_)
      if (m.types().contains(ref)) hits.push_back(id);
    if (hits.empty())
      return make_error(Errc::invalid_config, "unknown type " + ref);
    if (hits.size() > 1)
      return make_error(Errc::invalid_config,
                        "ambiguous type " + ref + "; qualify with model id");
    return std::make_pair(hits[0], ref);
  }

  Result<void> validate(const std::string& type_ref, const Value& v) const {
    auto resolved = resolve_type(type_ref);
    if (!resolved) {
      return make_error(Errc::schema_violation, resolved.error().message);
    }
    return find(resolved.value().first)->validate(resolved.value().second, v);
  }

  Result<std::vector<BrowseNode>> federated_browse(
      const std::vector<std::string>& model_ids, const std::string& path,
      const std::optional<std::string>& tag_filter = std::nullopt) const {
    for (const auto& id : model_ids)
      if (!models_.contains(id))
        return make_error(Errc::unknown_model, id);
    if (path == "/models") {
      std::vector<BrowseNode> out;
      for (const auto& id : sorted(model_ids))
        out.push_back({"model", id, {}});
      return out;
    }
    std::vector<BrowseNode> out;
    for (const auto& id : sorted(model_ids)) {
      // Qualified sub-paths (/types/m1:Pump) route to the owning model.
      std::string local_path = path;
      bool detail = false;
      for (std::string_view base : {"/types/", "/instances/"}) {
        if (!path.starts_with(base)) continue;
        detail = true;
        std::string name(path.substr(base.size()));
        auto colon = name.find(':');
        if (colon == std::string::npos || name.substr(0, colon) != id) {
          local_path.clear();
          break;
        }
        local_path = std::string(base) + name.substr(colon + 1);
      }
      if (detail && local_path.empty()) continue;
      auto nodes =
          models_.at(id).browse(local_path, tag_filter, id + ":");
      if (!nodes) {
        if (detail) continue;
        return nodes;
      }
      for (auto& n : nodes.value()) out.push_back(std::move(n));
    }
    if (path.starts_with("/types/") || path.starts_with("/instances/")) {
      if (out.empty()) return make_error(Errc::bad_path, path);
    } else if (path != "/types" && path != "/instances") {
      return make_error(Errc::bad_path, path);
    }
    std::sort(out.begin(), out.end(),
              [](const BrowseNode& a, const BrowseNode& b) {
                return a.name < b.name;
              });
    return out;
  }

  std::vector<std::string> all_model_ids() const {
    std::vector<std::string> out;
    for (const auto& [id, _] : models_) out.push_back(id);
    return out;
  }

 private:
  static std::vector<std::string> sorted(std::vector<std::string> v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    return v;
  }

  std::map<std::string, InfoModel> models_;
};

}  // namespace microdb
