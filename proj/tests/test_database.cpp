#include <catch2/catch_amalgamated.hpp>

#include <fstream>
#include <random>

#include "microdb/database.hpp"
#include "test_util.hpp"

using namespace microdb;
using microdb::test::TempDir;

namespace {

std::unique_ptr<Microdatabase> open_db(const std::filesystem::path& dir,
                                       const std::string& replica = "r1",
                                       TierKind tier = TierKind::local) {
  Microdatabase::Options opts;
  opts.data_dir = dir;
  opts.replica_id = replica;
  opts.tier = tier;
  opts.clock = std::make_shared<VirtualClock>(1'000'000);
  auto db = Microdatabase::open(std::move(opts));
  REQUIRE(db.ok());
  return std::move(db).value();
}

ColumnStoreConfig cfg(std::string name,
                      Mutability mut = Mutability::immutable) {
  ColumnStoreConfig c;
  c.name = std::move(name);
  c.mutability = mut;
  return c;
}

}  // namespace

TEST_CASE("store lifecycle: create, duplicate, drop, recreate") {
  TempDir dir;
  auto db = open_db(dir.path);
  auto owner = db->owner_principal();

  CHECK(db->store_names().empty());
  REQUIRE(db->create_store(cfg("temp"), owner).ok());
  CHECK(db->store_names() == std::vector<std::string>{"temp"});
  CHECK(db->create_store(cfg("temp"), owner).error().code ==
        Errc::duplicate_name);

  REQUIRE(db->append("temp", {1, 0}, Value::of(1.0), owner).ok());
  REQUIRE(db->drop_store("temp", owner).ok());
  CHECK_FALSE(db->store_exists("temp"));
  CHECK(db->drop_store("temp", owner).error().code == Errc::not_found);

  REQUIRE(db->create_store(cfg("temp"), owner).ok());
  CHECK(db->visible_count("temp") == 0);
}

TEST_CASE("store admin requires an admin grant") {
  TempDir dir;
  auto db = open_db(dir.path);
  auto owner = db->owner_principal();
  // Role matrix: every non-admin interface alone must fail create_store.
  for (int i = 0; i <= static_cast<int>(Interface::sync); ++i) {
    Interface iface = static_cast<Interface>(i);
    std::string subject = "u" + std::to_string(i);
    Role r{"role" + std::to_string(i),
           {Grant{iface, "*", KeyRange::all(), {}}}};
    REQUIRE(db->define_role(r, owner).ok());
    REQUIRE(db->provision(subject, r.name, owner).ok());
    Principal p{subject, "x", INT64_MAX};
    auto result = db->create_store(cfg("s" + std::to_string(i)), p);
    if (iface == Interface::admin) {
      CHECK(result.ok());
    } else {
      CHECK(result.error().code == Errc::unauthorized);
      CHECK_FALSE(db->store_exists("s" + std::to_string(i)));
    }
  }
}

TEST_CASE("reserved registry store rejects direct writes and admin") {
  TempDir dir;
  auto db = open_db(dir.path);
  auto owner = db->owner_principal();
  CHECK(db->store_exists("__registry"));
  CHECK(db->append("__registry", {1, 0}, Value::of(1.0), owner).error().code ==
        Errc::unauthorized);
  CHECK(db->drop_store("__registry", owner).error().code ==
        Errc::invalid_config);
  CHECK(db->create_store(cfg("__mine"), owner).error().code ==
        Errc::invalid_config);
}

TEST_CASE("append validates, authorizes, and auto-increments seq") {
  TempDir dir;
  auto db = open_db(dir.path);
  auto owner = db->owner_principal();
  REQUIRE(db->create_store(cfg("temp"), owner).ok());

  auto r1 = db->append("temp", {100, 0}, Value::of(42.0), owner);
  REQUIRE(r1.ok());
  CHECK(r1.value().key == RecordKey{100, 0});
  CHECK(r1.value().prov.origin_id == "r1");
  CHECK(r1.value().prov.origin_seq == 1);
  auto r2 = db->append("temp", {100, 0}, Value::of(43.0), owner);
  REQUIRE(r2.ok());
  CHECK(r2.value().key == RecordKey{100, 1});

  auto rows = db->read_range("temp", {100, 0}, {101, 0}, 0, owner);
  REQUIRE(rows.ok());
  CHECK(rows.value().size() == 2);
  CHECK(db->append("missing", {1, 0}, Value::of(1.0), owner).error().code ==
        Errc::not_found);

  Principal stranger{"stranger", "x", INT64_MAX};
  CHECK(db->append("temp", {1, 0}, Value::of(1.0), stranger).error().code ==
        Errc::unauthorized);
}

TEST_CASE("typed stores accept exactly what standalone validation accepts") {
  TempDir dir;
  auto db = open_db(dir.path);
  auto owner = db->owner_principal();
  TypeDef t;
  t.model_id = "m";
  t.name = "Reading";
  t.properties.push_back({"v", false, ScalarKind::floating, "", ""});
  t.properties.push_back({"ok", false, ScalarKind::boolean, "", ""});
  REQUIRE(db->define_type(t, owner).ok());
  auto c = cfg("typed");
  c.value_type = "m:Reading";
  REQUIRE(db->create_store(c, owner).ok());

  std::mt19937_64 rng(3);
  InfoModel standalone("m");
  REQUIRE(standalone.define_type(t).ok());
  for (int i = 0; i < 50; ++i) {
    Value::Object obj;
    if (rng() % 2) obj.emplace_back("v", Value::of(1.5));
    if (rng() % 2)
      obj.emplace_back("ok", Value::of(true));
    else if (rng() % 3 == 0)
      obj.emplace_back("ok", Value::of("yes"));
    if (rng() % 4 == 0) obj.emplace_back("extra", Value::of(std::int64_t{1}));
    Value v = Value::of(obj);
    bool standalone_ok = standalone.validate("Reading", v).ok();
    auto appended = db->append("typed", {i, 0}, v, owner);
    CHECK(appended.ok() == standalone_ok);
    if (!appended.ok())
      CHECK(appended.error().code == Errc::schema_violation);
  }
}

TEST_CASE("unknown value_type is invalid-config at store creation") {
  TempDir dir;
  auto db = open_db(dir.path);
  auto c = cfg("typed");
  c.value_type = "nope:Missing";
  CHECK(db->create_store(c, db->owner_principal()).error().code ==
        Errc::invalid_config);
}

TEST_CASE("read_range returns unauthorized-range on grant overflow") {
  TempDir dir;
  auto db = open_db(dir.path);
  auto owner = db->owner_principal();
  REQUIRE(db->create_store(cfg("temp"), owner).ok());
  Role reader{"reader",
              {Grant{Interface::exchange_read, "temp",
                     KeyRange::bounded({0, 0}, {100, 0}),
                     {}}}};
  REQUIRE(db->define_role(reader, owner).ok());
  REQUIRE(db->provision("alice", "reader", owner).ok());
  Principal alice{"alice", "x", INT64_MAX};

  CHECK(db->read_range("temp", {10, 0}, {20, 0}, 0, alice).ok());
  auto overflow = db->read_range("temp", {50, 0}, {150, 0}, 0, alice);
  REQUIRE_FALSE(overflow.ok());
  CHECK(overflow.error().code == Errc::unauthorized_range);
  // Empty requests are trivially satisfiable.
  CHECK(db->read_range("temp", {20, 0}, {10, 0}, 0, alice).ok());
  CHECK(db->read_range("missing", {0, 0}, {1, 0}, 0, alice).error().code ==
        Errc::not_found);
}

TEST_CASE("mutate on an immutable store fails and leaves the hash unchanged") {
  TempDir dir;
  auto db = open_db(dir.path);
  auto owner = db->owner_principal();
  REQUIRE(db->create_store(cfg("ro"), owner).ok());
  REQUIRE(db->append("ro", {1, 0}, Value::of(1.0), owner).ok());
  auto before = db->content_hash("ro").value();
  auto r = db->mutate("ro", {1, 0}, Value::of(2.0), owner);
  REQUIRE_FALSE(r.ok());
  CHECK(r.error().code == Errc::immutable_store);
  CHECK(db->content_hash("ro").value() == before);
}

TEST_CASE("mutable stores update in place and tombstone deletes") {
  TempDir dir;
  auto db = open_db(dir.path);
  auto owner = db->owner_principal();
  REQUIRE(db->create_store(cfg("rw", Mutability::mutable_), owner).ok());
  REQUIRE(db->append("rw", {1, 0}, Value::of(1.0), owner).ok());
  REQUIRE(db->mutate("rw", {1, 0}, Value::of(2.0), owner).ok());
  auto rows = db->read_range("rw", {0, 0}, {10, 0}, 0, owner);
  REQUIRE(rows.ok());
  REQUIRE(rows.value().size() == 1);
  CHECK(rows.value()[0].value.as_float() == 2.0);

  REQUIRE(db->mutate("rw", {1, 0}, std::nullopt, owner).ok());
  CHECK(db->read_range("rw", {0, 0}, {10, 0}, 0, owner).value().empty());
  CHECK(db->mutate("rw", {1, 0}, Value::of(3.0), owner).error().code ==
        Errc::key_not_found);
  CHECK(db->mutate("rw", {9, 9}, Value::of(3.0), owner).error().code ==
        Errc::key_not_found);
}

TEST_CASE("callback rejection surfaces the callback id and emits nothing") {
  TempDir dir;
  auto db = open_db(dir.path);
  auto owner = db->owner_principal();
  REQUIRE(db->create_store(cfg("temp"), owner).ok());
  REQUIRE(db->register_callback({"gatekeeper", Stage::exchange, "temp", "",
                                 make_reject_all("policy says no")},
                                owner)
              .ok());
  auto sub = db->subscribe({}, owner).value();
  auto r = db->append("temp", {1, 0}, Value::of(1.0), owner);
  REQUIRE_FALSE(r.ok());
  CHECK(r.error().code == Errc::rejected_by_callback);
  CHECK(r.error().message.find("gatekeeper") != std::string::npos);
  CHECK(sub->drain().empty());
  CHECK(db->bus().emitted("temp", Txn::create) == 0);
  CHECK(db->committed_count("temp", Txn::create) == 0);
}

TEST_CASE("every committed transaction emits exactly one event") {
  TempDir dir;
  auto db = open_db(dir.path);
  auto owner = db->owner_principal();
  REQUIRE(db->create_store(cfg("rw", Mutability::mutable_), owner).ok());
  auto sub = db->subscribe({}, owner).value();
  REQUIRE(db->append("rw", {1, 0}, Value::of(1.0), owner).ok());
  REQUIRE(db->append("rw", {2, 0}, Value::of(2.0), owner).ok());
  REQUIRE(db->mutate("rw", {1, 0}, Value::of(1.5), owner).ok());
  REQUIRE(db->mutate("rw", {2, 0}, std::nullopt, owner).ok());

  auto events = sub->drain();
  std::vector<std::string> kinds;
  for (const auto& e : events)
    if (e.store == "rw") kinds.push_back(txn_name(e.txn));
  CHECK(kinds == std::vector<std::string>{"create", "create", "update",
                                          "delete"});
  CHECK(db->bus().emitted("rw", Txn::create) ==
        db->committed_count("rw", Txn::create));
  CHECK(db->bus().emitted("rw", Txn::update) == 1);
  CHECK(db->bus().emitted("rw", Txn::remove) == 1);
}

TEST_CASE("subscribe requires a covering grant") {
  TempDir dir;
  auto db = open_db(dir.path);
  auto owner = db->owner_principal();
  REQUIRE(db->create_store(cfg("temp"), owner).ok());
  Role sub_role{"watcher",
                {Grant{Interface::subscribe, "temp", KeyRange::all(), {}}}};
  REQUIRE(db->define_role(sub_role, owner).ok());
  REQUIRE(db->provision("alice", "watcher", owner).ok());
  Principal alice{"alice", "x", INT64_MAX};

  SubscriptionFilter exact;
  exact.store_pattern = "temp";
  CHECK(db->subscribe(exact, alice).ok());
  SubscriptionFilter wild;
  wild.store_pattern = "*";
  auto denied = db->subscribe(wild, alice);
  REQUIRE_FALSE(denied.ok());
  CHECK(denied.error().code == Errc::unauthorized);
}

TEST_CASE("the catalog and logs survive reopen") {
  TempDir dir;
  std::string dump;
  {
    auto db = open_db(dir.path);
    auto owner = db->owner_principal();
    REQUIRE(db->create_store(cfg("temp"), owner).ok());
    auto enc = cfg("vault");
    enc.encrypted = true;
    REQUIRE(db->create_store(enc, owner).ok());
    REQUIRE(db->define_role({"reader",
                             {Grant{Interface::exchange_read, "temp",
                                    KeyRange::all(),
                                    {}}}},
                            owner)
                .ok());
    REQUIRE(db->provision("alice", "reader", owner).ok());
    TypeDef t;
    t.model_id = "m";
    t.name = "T";
    REQUIRE(db->define_type(t, owner).ok());
    REQUIRE(db->append("temp", {1, 0}, Value::of(1.0), owner).ok());
    REQUIRE(db->append("vault", {2, 0}, Value::of("secret"), owner).ok());
    dump = db->config_dump();
  }
  auto db = open_db(dir.path);
  auto owner = db->owner_principal();
  CHECK(db->config_dump() == dump);
  auto rows = db->read_range("temp", {0, 0}, {10, 0}, 0, owner);
  REQUIRE(rows.ok());
  CHECK(rows.value().size() == 1);
  auto vault = db->read_range("vault", {0, 0}, {10, 0}, 0, owner);
  REQUIRE(vault.ok());
  REQUIRE(vault.value().size() == 1);
  CHECK(vault.value()[0].value.as_text() == "secret");
  Principal alice{"alice", "x", INT64_MAX};
  CHECK(db->authorize(alice, Interface::exchange_read, "temp",
                      KeyRange::all())
            .allow);
}

TEST_CASE("an encrypted store's files never contain the sentinel plaintext") {
  TempDir dir;
  std::string sentinel = "SENTINEL-abcdef0";
  REQUIRE(sentinel.size() == 16);
  {
    auto db = open_db(dir.path);
    auto owner = db->owner_principal();
    auto enc = cfg("vault");
    enc.encrypted = true;
    REQUIRE(db->create_store(enc, owner).ok());
    REQUIRE(db->append("vault", {1, 0}, Value::of(sentinel), owner).ok());
  }
  std::ifstream in(dir.path / "r1" / "vault.log", std::ios::binary);
  std::string raw((std::istreambuf_iterator<char>(in)),
                  std::istreambuf_iterator<char>());
  REQUIRE_FALSE(raw.empty());
  CHECK(raw.find(sentinel) == std::string::npos);
}

TEST_CASE("tokens issued by a trusted issuer authenticate against the db") {
  TempDir dir;
  auto db = open_db(dir.path);
  auto owner = db->owner_principal();
  Bytes key = derive_key("issuer", "registry");
  REQUIRE(db->trust_issuer({"registry", key}, owner).ok());
  Principal alice{"alice", "registry", INT64_MAX};
  auto p = db->authenticate(issue_token(alice, key));
  REQUIRE(p.ok());
  CHECK(p.value().subject == "alice");
  auto bad = db->authenticate(issue_token(alice, derive_key("issuer", "evil")));
  CHECK(bad.error().code == Errc::bad_signature);
}

TEST_CASE("write-once: immutable records never change under any op mix") {
  TempDir dir;
  auto db = open_db(dir.path);
  auto owner = db->owner_principal();
  REQUIRE(db->create_store(cfg("ro"), owner).ok());
  std::mt19937_64 rng(99);
  std::map<std::string, std::pair<Value, Provenance>> first_seen;
  for (int i = 0; i < 300; ++i) {
    int op = static_cast<int>(rng() % 3);
    std::int64_t ts = static_cast<std::int64_t>(rng() % 40);
    if (op == 0) {
      auto r = db->append("ro", {ts, 0},
                          Value::of(static_cast<double>(rng() % 100)), owner);
      REQUIRE(r.ok());
    } else if (op == 1) {
      auto r = db->mutate("ro", {ts, 0}, Value::of(-1.0), owner);
      CHECK_FALSE(r.ok());
    }
    auto rows = db->read_range("ro", {INT64_MIN, 0}, {INT64_MAX, 0}, 0, owner);
    REQUIRE(rows.ok());
    for (const auto& rec : rows.value()) {
      std::string k = rec.key.to_string();
      auto it = first_seen.find(k);
      if (it == first_seen.end()) {
        first_seen.emplace(k, std::make_pair(rec.value, rec.prov));
      } else {
        CHECK(it->second.first == rec.value);
        CHECK(it->second.second == rec.prov);
      }
    }
  }
}
