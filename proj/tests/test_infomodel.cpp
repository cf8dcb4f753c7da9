#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "microdb/infomodel.hpp"

using namespace microdb;

namespace {

TypeDef make_type(std::string name, std::string parent = {},
                  std::vector<std::pair<std::string, ScalarKind>> props = {}) {
  TypeDef t;
  t.model_id = "m";
  t.name = std::move(name);
  t.parent = std::move(parent);
  for (auto& [pname, kind] : props) {
    PropertyDef p;
    p.name = pname;
    p.scalar = kind;
    t.properties.push_back(std::move(p));
  }
  return t;
}

}  // namespace

TEST_CASE("defined types are browsable") {
  InfoModel m("m");
  TypeDef pump = make_type("Pump", "", {{"flow", ScalarKind::floating}});
  pump.properties[0].unit = "m3/h";
  REQUIRE(m.define_type(pump).ok());
  auto nodes = m.browse("/types");
  REQUIRE(nodes.ok());
  REQUIRE(nodes.value().size() == 1);
  CHECK(nodes.value()[0].kind == "type");
  CHECK(nodes.value()[0].name == "Pump");
}

TEST_CASE("browse on an empty model is empty") {
  InfoModel m("m");
  auto nodes = m.browse("/types");
  REQUIRE(nodes.ok());
  CHECK(nodes.value().empty());
  CHECK(m.browse("/nope").error().code == Errc::bad_path);
}

TEST_CASE("two-type inheritance cycles are impossible to declare") {
  InfoModel m("m");
  // B extends A before A exists: unknown parent.
  CHECK(m.define_type(make_type("B", "A")).error().code ==
        Errc::unknown_parent);
  REQUIRE(m.define_type(make_type("A")).ok());
  REQUIRE(m.define_type(make_type("B", "A")).ok());
  // Redefining A to extend B would be the 2-cycle; duplicate names make it
  // unreachable, and self-inheritance is rejected outright.
  CHECK(m.define_type(make_type("A", "B")).error().code == Errc::duplicate);
  CHECK(m.define_type(make_type("C", "C")).error().code ==
        Errc::cyclic_inheritance);
}

TEST_CASE("a child may not override an inherited property name") {
  InfoModel m("m");
  REQUIRE(m.define_type(make_type("Base", "",
                                  {{"flow", ScalarKind::floating},
                                   {"name", ScalarKind::text}}))
              .ok());
  REQUIRE(m.define_type(make_type("Mid", "Base",
                                  {{"speed", ScalarKind::floating}}))
              .ok());
  // Oracle: the inherited closure of a child of Mid.
  std::set<std::string> inherited;
  for (const auto& p : m.property_closure("Mid")) inherited.insert(p.name);
  CHECK(inherited == std::set<std::string>{"flow", "name", "speed"});
  for (const auto& name : inherited) {
    auto r = m.define_type(make_type("Leaf", "Mid",
                                     {{name, ScalarKind::integer}}));
    CHECK(r.error().code == Errc::duplicate);
  }
  REQUIRE(m.define_type(make_type("Leaf", "Mid",
                                  {{"fresh", ScalarKind::integer}}))
              .ok());
}

TEST_CASE("type tags propagate to instances at query time") {
  InfoModel m("m");
  REQUIRE(m.define_type(make_type("Pump")).ok());
  REQUIRE(m.define_instance({"m", "p1", "Pump", "temp"}).ok());
  Tag tag{"rotating-equipment", TagSubject::type, "Pump"};
  REQUIRE(m.classify(tag).ok());

  auto tags = m.instance_tags("p1");
  CHECK(std::find(tags.begin(), tags.end(), "rotating-equipment") !=
        tags.end());

  SECTION("same tag twice is duplicate-tag") {
    CHECK(m.classify(tag).error().code == Errc::duplicate_tag);
  }
  SECTION("untag removes the propagated report") {
    REQUIRE(m.unclassify(tag).ok());
    CHECK(m.instance_tags("p1").empty());
  }
  SECTION("unknown subjects are rejected") {
    CHECK(m.classify({"x", TagSubject::type, "Ghost"}).error().code ==
          Errc::unknown_subject);
  }
}

TEST_CASE("instance browse filtering matches a brute-force oracle") {
  std::mt19937_64 rng(42);
  InfoModel m("m");
  std::vector<std::string> types;
  for (int i = 0; i < 10; ++i) {
    std::string name = "T" + std::to_string(i);
    std::string parent = types.empty() || rng() % 3 == 0
                             ? std::string{}
                             : types[rng() % types.size()];
    REQUIRE(m.define_type(make_type(name, parent)).ok());
    types.push_back(name);
  }
  for (int i = 0; i < 30; ++i)
    REQUIRE(m.define_instance({"m", "i" + std::to_string(i),
                               types[rng() % types.size()], "s"})
                .ok());
  std::vector<std::string> labels{"red", "green", "blue"};
  for (int i = 0; i < 12; ++i) {
    Tag t;
    t.label = labels[rng() % labels.size()];
    if (rng() % 2 == 0) {
      t.subject_kind = TagSubject::type;
      t.subject = types[rng() % types.size()];
    } else {
      t.subject_kind = TagSubject::instance;
      t.subject = "i" + std::to_string(rng() % 30);
    }
    (void)m.classify(t);  // duplicates possible, fine
  }

  for (const auto& label : labels) {
    auto nodes = m.browse("/instances", label);
    REQUIRE(nodes.ok());
    std::set<std::string> got;
    for (const auto& n : nodes.value()) got.insert(n.name);
    // Oracle: an instance reports the tag iff it is on the instance, its
    // type, or any ancestor type.
    std::set<std::string> expect;
    for (const auto& [iname, inst] : m.instances()) {
      bool hit = false;
      for (const auto& t : m.tags()) {
        if (t.label != label) continue;
        if (t.subject_kind == TagSubject::instance && t.subject == iname)
          hit = true;
        if (t.subject_kind == TagSubject::type) {
          for (std::string cur = inst.type; !cur.empty();
               cur = m.types().at(cur).parent)
            if (cur == t.subject) hit = true;
        }
      }
      if (hit) expect.insert(iname);
    }
    CHECK(got == expect);
  }
}

TEST_CASE("type detail browse lists the inherited property closure") {
  InfoModel m("m");
  REQUIRE(m.define_type(make_type("A", "", {{"a1", ScalarKind::floating}}))
              .ok());
  REQUIRE(m.define_type(make_type("B", "A", {{"b1", ScalarKind::text}})).ok());
  REQUIRE(m.define_type(make_type("C", "B", {{"c1", ScalarKind::integer}}))
              .ok());
  auto nodes = m.browse("/types/C");
  REQUIRE(nodes.ok());
  // Hand-computed closure for the 3-type fixture: a1, b1, c1 in base-first
  // order.
  REQUIRE(nodes.value().size() == 3);
  CHECK(nodes.value()[0].name.starts_with("C.a1"));
  CHECK(nodes.value()[1].name.starts_with("C.b1"));
  CHECK(nodes.value()[2].name.starts_with("C.c1"));
}

TEST_CASE("browse output is deterministic for identical state") {
  auto build = [] {
    InfoModel m("m");
    REQUIRE(m.define_type(make_type("B")).ok());
    REQUIRE(m.define_type(make_type("A")).ok());
    REQUIRE(m.define_instance({"m", "z", "A", "s"}).ok());
    REQUIRE(m.define_instance({"m", "a", "B", "s"}).ok());
    REQUIRE(m.classify({"t", TagSubject::type, "A"}).ok());
    return m;
  };
  InfoModel m1 = build();
  InfoModel m2 = build();
  for (const char* path : {"/types", "/instances", "/types/A"}) {
    auto n1 = m1.browse(path);
    auto n2 = m2.browse(path);
    REQUIRE(n1.ok());
    REQUIRE(n2.ok());
    std::string s1, s2;
    for (const auto& n : n1.value()) s1 += n.to_line() + "\n";
    for (const auto& n : n2.value()) s2 += n.to_line() + "\n";
    CHECK(s1 == s2);
  }
}

TEST_CASE("propagation soundness holds on random models") {
  std::mt19937_64 rng(77);
  for (int round = 0; round < 20; ++round) {
    InfoModel m("m");
    std::vector<std::string> types;
    int n_types = 1 + static_cast<int>(rng() % 100);
    for (int i = 0; i < n_types; ++i) {
      std::string name = "T" + std::to_string(i);
      std::string parent = types.empty() || rng() % 2 == 0
                               ? std::string{}
                               : types[rng() % types.size()];
      REQUIRE(m.define_type(make_type(name, parent)).ok());
      types.push_back(name);
    }
    for (int i = 0; i < 20; ++i)
      REQUIRE(m.define_instance({"m", "i" + std::to_string(i),
                                 types[rng() % types.size()], "s"})
                  .ok());
    for (int i = 0; i < 10; ++i)
      (void)m.classify({"L" + std::to_string(rng() % 4),
                        rng() % 2 == 0 ? TagSubject::type
                                       : TagSubject::instance,
                        rng() % 2 == 0 ? types[rng() % types.size()]
                                       : "i" + std::to_string(rng() % 20)});
    for (const auto& [iname, inst] : m.instances()) {
      auto reported = m.instance_tags(iname);
      std::set<std::string> expect;
      for (const auto& t : m.tags()) {
        if (t.subject_kind == TagSubject::instance && t.subject == iname)
          expect.insert(t.label);
        if (t.subject_kind == TagSubject::type)
          for (std::string cur = inst.type; !cur.empty();
               cur = m.types().at(cur).parent)
            if (cur == t.subject) expect.insert(t.label);
      }
      CHECK(std::set<std::string>(reported.begin(), reported.end()) == expect);
    }
  }
}

TEST_CASE("federation namespaces models without merging") {
  ModelSet set;
  REQUIRE(set.model("m1").define_type(make_type("Pump")).ok());
  REQUIRE(set.model("m2").define_type(make_type("Pump")).ok());
  REQUIRE(set.model("m1").define_instance({"m1", "p1", "Pump", "s"}).ok());
  REQUIRE(set.model("m2").define_instance({"m2", "q1", "Pump", "s"}).ok());

  auto nodes = set.federated_browse({"m1", "m2"}, "/types");
  REQUIRE(nodes.ok());
  REQUIRE(nodes.value().size() == 2);
  CHECK(nodes.value()[0].name == "m1:Pump");
  CHECK(nodes.value()[1].name == "m2:Pump");

  SECTION("single-model federation is the plain browse modulo prefix") {
    auto fed = set.federated_browse({"m1"}, "/instances");
    auto plain = set.model("m1").browse("/instances");
    REQUIRE(fed.ok());
    REQUIRE(plain.ok());
    REQUIRE(fed.value().size() == plain.value().size());
    for (std::size_t i = 0; i < fed.value().size(); ++i) {
      CHECK(fed.value()[i].name == "m1:" + plain.value()[i].name);
      CHECK(fed.value()[i].tags == plain.value()[i].tags);
    }
  }

  SECTION("tags do not leak across models in the federated view") {
    REQUIRE(set.model("m1").classify({"hot", TagSubject::type, "Pump"}).ok());
    auto tagged = set.federated_browse({"m1", "m2"}, "/instances",
                                       std::optional<std::string>("hot"));
    REQUIRE(tagged.ok());
    // Brute-force oracle over every instance of both models.
    std::set<std::string> expect;
    for (const auto& model_id : {"m1", "m2"}) {
      const InfoModel* m = set.find(model_id);
      for (const auto& [iname, _] : m->instances()) {
        auto tags = m->instance_tags(iname);
        if (std::find(tags.begin(), tags.end(), "hot") != tags.end())
          expect.insert(std::string(model_id) + ":" + iname);
      }
    }
    std::set<std::string> got;
    for (const auto& n : tagged.value()) got.insert(n.name);
    CHECK(got == expect);
    CHECK(got == std::set<std::string>{"m1:p1"});
  }

  SECTION("unknown model ids fail federation") {
    CHECK(set.federated_browse({"m1", "nope"}, "/types").error().code ==
          Errc::unknown_model);
  }
}

TEST_CASE("value validation enforces the declared property closure") {
  InfoModel m("m");
  TypeDef spec = make_type("Spec", "", {{"rpm", ScalarKind::integer}});
  REQUIRE(m.define_type(spec).ok());
  TypeDef pump = make_type("Pump", "", {{"flow", ScalarKind::floating}});
  PropertyDef nested;
  nested.name = "spec";
  nested.is_object = true;
  nested.object_type = "Spec";
  pump.properties.push_back(nested);
  REQUIRE(m.define_type(pump).ok());

  Value::Object spec_obj;
  spec_obj.emplace_back("rpm", Value::of(std::int64_t{1500}));
  Value::Object obj;
  obj.emplace_back("flow", Value::of(3.5));
  obj.emplace_back("spec", Value::of(spec_obj));
  Value good = Value::of(obj);
  CHECK(m.validate("Pump", good).ok());

  Value::Object missing;
  missing.emplace_back("flow", Value::of(3.5));
  CHECK(m.validate("Pump", Value::of(missing)).error().code ==
        Errc::schema_violation);

  Value::Object wrong_kind = obj;
  wrong_kind[0].second = Value::of("fast");
  CHECK(m.validate("Pump", Value::of(wrong_kind)).error().code ==
        Errc::schema_violation);

  Value::Object extra = obj;
  extra.emplace_back("bonus", Value::of(true));
  CHECK(m.validate("Pump", Value::of(extra)).error().code ==
        Errc::schema_violation);

  CHECK(m.validate("Pump", Value::of(std::int64_t{1})).error().code ==
        Errc::schema_violation);
}

TEST_CASE("a value may declare a descendant type") {
  InfoModel m("m");
  REQUIRE(m.define_type(make_type("Asset", "", {{"id", ScalarKind::text}}))
              .ok());
  REQUIRE(m.define_type(
               make_type("Pump", "Asset", {{"flow", ScalarKind::floating}}))
              .ok());
  Value::Object obj;
  obj.emplace_back("id", Value::of("p-1"));
  obj.emplace_back("flow", Value::of(1.0));
  Value v = Value::of(obj);
  v.type_ref = "Pump";
  CHECK(m.validate("Asset", v).ok());
  v.type_ref = "Asset";  // Pump fields against Asset: extra field
  CHECK_FALSE(m.validate("Asset", v).ok());
}
