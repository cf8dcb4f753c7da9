#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "microdb/database.hpp"
#include "test_util.hpp"

using namespace microdb;
using microdb::test::TempDir;

namespace {

struct Fixture {
  TempDir dir;
  std::shared_ptr<VirtualClock> clock = std::make_shared<VirtualClock>(0);
  std::unique_ptr<Microdatabase> db;

  explicit Fixture(Mutability mut = Mutability::immutable) {
    Microdatabase::Options opts;
    opts.data_dir = dir.path;
    opts.replica_id = "edge";
    opts.tier = TierKind::device;
    opts.clock = clock;
    auto opened = Microdatabase::open(std::move(opts));
    REQUIRE(opened.ok());
    db = std::move(opened).value();
    ColumnStoreConfig c;
    c.name = "temp";
    c.mutability = mut;
    REQUIRE(db->create_store(c, db->owner_principal()).ok());
  }

  const BindingStatus& status() {
    static BindingStatus snapshot;
    auto all = db->ingest_status();
    REQUIRE(all.size() == 1);
    snapshot = all[0];
    return snapshot;
  }
};

IngestSpec push_spec(std::string source_id) {
  IngestSpec s;
  s.source_id = std::move(source_id);
  return s;
}

IngestSpec poll_spec(std::string source_id, std::int64_t period_ms,
                     std::string address) {
  IngestSpec s;
  s.source_id = std::move(source_id);
  s.poll = true;
  s.period_ms = period_ms;
  s.address = std::move(address);
  return s;
}

}  // namespace

TEST_CASE("bind, double-bind, unbind") {
  Fixture fx;
  auto owner = fx.db->owner_principal();
  REQUIRE(fx.db->bind_source("temp", push_spec("s1"), owner).ok());
  CHECK(fx.status().spec.source_id == "s1");
  CHECK(fx.db->bind_source("temp", push_spec("s2"), owner).error().code ==
        Errc::already_bound);
  CHECK(fx.db->bind_source("missing", push_spec("s2"), owner).error().code ==
        Errc::unknown_store);

  REQUIRE(fx.db->unbind_source("temp", owner).ok());
  fx.db->push_reading("s1", {5, Value::of(1.0)});
  CHECK(fx.db->ingest_unbound_drops() == 1);
  CHECK(fx.db->visible_count("temp") == 0);
}

TEST_CASE("poll bindings need a sane period") {
  Fixture fx;
  auto owner = fx.db->owner_principal();
  CHECK(fx.db->bind_source("temp", poll_spec("s1", 5, "file:x"), owner)
            .error()
            .code == Errc::invalid_config);
  CHECK(fx.db->bind_source("temp", poll_spec("s1", 10, "file:x"), owner).ok());
}

TEST_CASE("push is idempotent by (source ts, value)") {
  Fixture fx;
  auto owner = fx.db->owner_principal();
  REQUIRE(fx.db->bind_source("temp", push_spec("s1"), owner).ok());

  fx.db->push_reading("s1", {5, Value::of(1.0)});
  fx.db->push_reading("s1", {5, Value::of(1.0)});
  CHECK(fx.db->visible_count("temp") == 1);
  CHECK(fx.status().counters.appended == 1);
  CHECK(fx.status().counters.duplicate == 1);

  SECTION("conflicting duplicate on an immutable store is dropped") {
    fx.db->push_reading("s1", {5, Value::of(2.0)});
    CHECK(fx.status().counters.dropped == 1);
    CHECK(fx.status().counters.drop_reasons.at("conflict") == 1);
    auto rows = fx.db->read_range("temp", {5, 0}, {6, 0}, 0, owner);
    CHECK(rows.value()[0].value.as_float() == 1.0);
  }
}

TEST_CASE("conflicting duplicate on a mutable store updates the reading") {
  Fixture fx(Mutability::mutable_);
  auto owner = fx.db->owner_principal();
  REQUIRE(fx.db->bind_source("temp", push_spec("s1"), owner).ok());
  fx.db->push_reading("s1", {5, Value::of(1.0)});
  fx.db->push_reading("s1", {5, Value::of(2.0)});
  auto rows = fx.db->read_range("temp", {5, 0}, {6, 0}, 0, owner);
  REQUIRE(rows.ok());
  REQUIRE(rows.value().size() == 1);
  CHECK(rows.value()[0].value.as_float() == 2.0);
  CHECK(fx.status().counters.appended == 2);
  CHECK(fx.db->bus().emitted("temp", Txn::update) == 1);
}

TEST_CASE("ingest-stage callbacks can drop readings") {
  Fixture fx;
  auto owner = fx.db->owner_principal();
  REQUIRE(fx.db->register_callback({"clamp", Stage::ingest, "temp", "",
                                    make_range_clamp(0.0, 100.0)},
                                   owner)
              .ok());
  REQUIRE(fx.db->bind_source("temp", push_spec("s1"), owner).ok());
  fx.db->push_reading("s1", {1, Value::of(std::nan(""))});
  CHECK(fx.status().counters.dropped == 1);
  CHECK(fx.status().counters.drop_reasons.at("rejected-by-callback") == 1);
  fx.db->push_reading("s1", {2, Value::of(250.0)});  // clamped, not dropped
  CHECK(fx.status().counters.appended == 1);
  auto rows = fx.db->read_range("temp", {2, 0}, {3, 0}, 0, owner);
  CHECK(rows.value()[0].value.as_float() == 100.0);
}

TEST_CASE("pushed readings notify subscribers one-to-one") {
  Fixture fx;
  auto owner = fx.db->owner_principal();
  REQUIRE(fx.db->bind_source("temp", push_spec("s1"), owner).ok());
  auto sub = fx.db->subscribe({}, owner).value();
  for (int i = 0; i < 100; ++i)
    fx.db->push_reading("s1", {i, Value::of(static_cast<double>(i))});
  auto events = sub->drain();
  std::uint64_t creates = 0;
  for (const auto& e : events)
    if (e.store == "temp" && e.txn == Txn::create) {
      ++creates;
      CHECK(e.actor == "ingest:s1");
    }
  CHECK(creates == 100);
}

TEST_CASE("removing the implicit ingest grant drops pushes as unauthorized") {
  Fixture fx;
  auto owner = fx.db->owner_principal();
  REQUIRE(fx.db->bind_source("temp", push_spec("s1"), owner).ok());
  fx.db->push_reading("s1", {1, Value::of(1.0)});
  CHECK(fx.status().counters.appended == 1);
  // The implicit grant is an ordinary local role; dropping it closes the
  // path without unbinding.
  REQUIRE(const_cast<PolicySet&>(fx.db->policy()).drop_role("__ingest:temp")
              .ok());
  fx.db->push_reading("s1", {2, Value::of(2.0)});
  CHECK(fx.status().counters.dropped == 1);
  CHECK(fx.status().counters.drop_reasons.at("unauthorized") == 1);
  CHECK(fx.db->visible_count("temp") == 1);
}

TEST_CASE("poll ticks query due bindings once and advance the deadline") {
  Fixture fx;
  auto owner = fx.db->owner_principal();
  auto source = std::make_shared<ScriptedSource>(std::vector<Reading>{
      {5'000'000, Value::of(1.0)},
      {12'000'000, Value::of(2.0)},
      {14'000'000, Value::of(3.0)},
      {19'000'000, Value::of(4.0)},
  });
  fx.db->resolver().register_source("script:s1", source);
  REQUIRE(fx.db->bind_source("temp", poll_spec("s1", 10, "script:s1"), owner)
              .ok());
  REQUIRE(fx.db->next_poll_deadline().has_value());
  CHECK(*fx.db->next_poll_deadline() == 10'000'000);

  // First tick at t=10ms: only the 5ms reading is available.
  fx.clock->advance_to(10'000'000);
  CHECK(fx.db->poll_tick(10'000'000) == 1);
  CHECK(*fx.db->next_poll_deadline() == 20'000'000);

  // Second tick: the three later readings arrive in ts order.
  fx.clock->advance_to(20'000'000);
  CHECK(fx.db->poll_tick(20'000'000) == 3);
  auto rows =
      fx.db->read_range("temp", {INT64_MIN, 0}, {INT64_MAX, 0}, 0, owner);
  REQUIRE(rows.value().size() == 4);
  for (std::size_t i = 1; i < rows.value().size(); ++i)
    CHECK(rows.value()[i - 1].key < rows.value()[i].key);

  // Nothing new: zero appended, deadline still advances.
  fx.clock->advance_to(30'000'000);
  CHECK(fx.db->poll_tick(30'000'000) == 0);
  CHECK(*fx.db->next_poll_deadline() == 40'000'000);
  CHECK(fx.status().counters.appended == 4);
}

TEST_CASE("an unreachable source is retried and its backlog recovered") {
  Fixture fx;
  auto owner = fx.db->owner_principal();
  auto source = std::make_shared<ScriptedSource>(std::vector<Reading>{
      {11'000'000, Value::of(1.0)},
      {15'000'000, Value::of(2.0)},
      {25'000'000, Value::of(3.0)},
  });
  // Unreachable during the second and third polls.
  source->add_outage(20'000'000, 40'000'000);
  fx.db->resolver().register_source("script:s1", source);
  REQUIRE(fx.db->bind_source("temp", poll_spec("s1", 10, "script:s1"), owner)
              .ok());

  fx.clock->advance_to(10'000'000);
  CHECK(fx.db->poll_tick(10'000'000) == 0);  // nothing yet
  fx.clock->advance_to(20'000'000);
  CHECK(fx.db->poll_tick(20'000'000) == 0);  // outage
  fx.clock->advance_to(30'000'000);
  CHECK(fx.db->poll_tick(30'000'000) == 0);  // outage
  CHECK(fx.status().counters.unreachable == 2);
  fx.clock->advance_to(40'000'000);
  CHECK(fx.db->poll_tick(40'000'000) == 3);  // full backlog on recovery
  CHECK(fx.status().counters.appended == 3);
}

TEST_CASE("no reading loss under any outage schedule") {
  std::mt19937_64 rng(17);
  for (int round = 0; round < 15; ++round) {
    Fixture fx;
    auto owner = fx.db->owner_principal();
    std::vector<Reading> readings;
    std::set<std::int64_t> seen_ts;
    for (int i = 0; i < 40; ++i) {
      std::int64_t ts =
          static_cast<std::int64_t>(1 + rng() % 100) * 1'000'000;
      if (!seen_ts.insert(ts).second) continue;
      readings.push_back({ts, Value::of(static_cast<double>(i))});
    }
    auto source = std::make_shared<ScriptedSource>(readings);
    // Random outage windows; the source retains backlog throughout.
    for (int i = 0; i < 3; ++i) {
      std::int64_t a = static_cast<std::int64_t>(rng() % 100) * 1'000'000;
      source->add_outage(a, a + static_cast<std::int64_t>(rng() % 30) *
                                   1'000'000);
    }
    fx.db->resolver().register_source("script:s", source);
    REQUIRE(
        fx.db->bind_source("temp", poll_spec("s", 10, "script:s"), owner).ok());
    for (std::int64_t t = 10'000'000; t <= 200'000'000; t += 10'000'000) {
      fx.clock->advance_to(t);
      fx.db->poll_tick(t);
    }
    // Brute-force compare stored (ts, value) with the script.
    auto rows =
        fx.db->read_range("temp", {INT64_MIN, 0}, {INT64_MAX, 0}, 0, owner);
    REQUIRE(rows.ok());
    std::set<std::pair<std::int64_t, double>> stored;
    for (const auto& r : rows.value())
      stored.insert({r.key.ts, r.value.as_float()});
    std::set<std::pair<std::int64_t, double>> expect;
    for (const auto& r : readings)
      expect.insert({r.ts, r.value.as_float()});
    CHECK(stored == expect);
  }
}

TEST_CASE("poll never re-appends a previously seen ts") {
  Fixture fx;
  auto owner = fx.db->owner_principal();
  auto source = std::make_shared<ScriptedSource>(std::vector<Reading>{
      {5'000'000, Value::of(1.0)},
  });
  fx.db->resolver().register_source("script:s1", source);
  REQUIRE(fx.db->bind_source("temp", poll_spec("s1", 10, "script:s1"), owner)
              .ok());
  for (std::int64_t t = 10'000'000; t <= 100'000'000; t += 10'000'000) {
    fx.clock->advance_to(t);
    fx.db->poll_tick(t);
  }
  CHECK(fx.db->visible_count("temp") == 1);
  CHECK(fx.status().counters.appended == 1);
  CHECK(fx.status().counters.duplicate == 0);  // never even re-fetched
  CHECK(fx.status().last_seen_ts == 5'000'000);
}

TEST_CASE("scripted source files parse the documented line format") {
  TempDir dir;
  auto path = dir.path / "readings.tsv";
  {
    std::ofstream out(path);
    out << "100\t1.5\n";
    out << "200\ttrue\n";
    out << "300\t\"text\"\n";
    out << "400\t{\"flow\": 2.0}\n";
  }
  auto source = load_source_file(path.string());
  REQUIRE(source.ok());
  auto readings = source.value()->fetch(0, 1'000);
  REQUIRE(readings.ok());
  REQUIRE(readings.value().size() == 4);
  CHECK(readings.value()[0].value.as_float() == 1.5);
  CHECK(readings.value()[1].value.as_bool());
  CHECK(readings.value()[2].value.as_text() == "text");
  CHECK(readings.value()[3].value.field("flow") != nullptr);

  std::ofstream bad(dir.path / "bad.tsv");
  bad << "not-a-ts\t1\n";
  bad.close();
  CHECK(load_source_file((dir.path / "bad.tsv").string()).error().code ==
        Errc::parse_error);
}
