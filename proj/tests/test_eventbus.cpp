#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "microdb/eventbus.hpp"

using namespace microdb;

namespace {

Record num_record(std::int64_t ts, double v) {
  return Record{{ts, 0}, Value::of(v), {"origin", 1, ts}};
}

}  // namespace

TEST_CASE("matching events land in the subscription queue") {
  EventBus bus;
  SubscriptionFilter f;
  f.store_pattern = "temp";
  f.txns = {Txn::create};
  auto sub = bus.subscribe(f);

  bus.emit(Txn::create, "temp", RecordKey{100, 0}, "alice", 1);
  bus.emit(Txn::update, "temp", RecordKey{100, 0}, "alice", 2);  // txn filter
  bus.emit(Txn::create, "other", RecordKey{1, 0}, "alice", 3);   // store filter

  auto events = sub->drain();
  REQUIRE(events.size() == 1);
  CHECK(events[0].store == "temp");
  CHECK(events[0].key == RecordKey{100, 0});
  CHECK(events[0].event_seq == 1);
  CHECK(events[0].actor == "alice");
}

TEST_CASE("unsubscribe stops delivery") {
  EventBus bus;
  auto sub = bus.subscribe({});
  REQUIRE(bus.unsubscribe(sub->id()).ok());
  bus.emit(Txn::create, "temp", RecordKey{1, 0}, "a", 1);
  CHECK(sub->drain().empty());
  CHECK(bus.unsubscribe(sub->id()).error().code ==
        Errc::unknown_subscription);
}

TEST_CASE("all subscribers see the same gapless per-store sequence") {
  EventBus bus;
  auto s1 = bus.subscribe({});
  auto s2 = bus.subscribe({});
  std::vector<std::uint64_t> committed;
  for (int i = 0; i < 100; ++i) {
    Event e = bus.emit(Txn::create, "temp", RecordKey{i, 0}, "a", i);
    committed.push_back(e.event_seq);
  }
  auto seqs = [](const std::vector<Event>& events) {
    std::vector<std::uint64_t> out;
    for (const auto& e : events) out.push_back(e.event_seq);
    return out;
  };
  auto v1 = seqs(s1->drain());
  auto v2 = seqs(s2->drain());
  CHECK(v1 == committed);
  CHECK(v2 == committed);
  for (std::size_t i = 1; i < committed.size(); ++i)
    CHECK(committed[i] == committed[i - 1] + 1);
}

TEST_CASE("overflow drops oldest and raises the gap flag") {
  EventBus bus;
  auto sub = bus.subscribe({}, 4);
  for (int i = 1; i <= 6; ++i)
    bus.emit(Txn::create, "temp", RecordKey{i, 0}, "a", i);
  CHECK(sub->gap());
  auto events = sub->drain();
  REQUIRE(events.size() == 4);
  CHECK(events.front().key == RecordKey{3, 0});  // 1 and 2 dropped
  CHECK(events.back().key == RecordKey{6, 0});
}

TEST_CASE("events never carry record content") {
  EventBus bus;
  auto sub = bus.subscribe({});
  bus.emit(Txn::create, "temp", RecordKey{7, 3}, "alice", 42);
  auto events = sub->drain();
  REQUIRE(events.size() == 1);
  CHECK(events[0].to_line() == "1\tcreate\ttemp\t7,3\talice");
  bus.emit(Txn::create_store, "temp", std::nullopt, "alice", 43);
  auto more = sub->drain();
  REQUIRE(more.size() == 1);
  CHECK(more[0].to_line() == "2\tcreate-store\ttemp\t-\talice");
}

TEST_CASE("key-range subscription filters keyed events only") {
  EventBus bus;
  SubscriptionFilter f;
  f.range = KeyRange::bounded({10, 0}, {20, 0});
  auto sub = bus.subscribe(f);
  bus.emit(Txn::create, "temp", RecordKey{5, 0}, "a", 1);
  bus.emit(Txn::create, "temp", RecordKey{15, 0}, "a", 2);
  bus.emit(Txn::create_store, "temp", std::nullopt, "a", 3);  // keyless passes
  auto events = sub->drain();
  REQUIRE(events.size() == 2);
  CHECK(events[0].key == RecordKey{15, 0});
  CHECK_FALSE(events[1].key.has_value());
}

TEST_CASE("an empty chain is the identity") {
  CallbackRegistry reg;
  Record r = num_record(1, 5.0);
  auto out = reg.run_chain(Stage::exchange, "temp", r, {});
  REQUIRE(out.ok());
  CHECK(out.value() == r);
}

TEST_CASE("transforms compose in registration order") {
  CallbackRegistry reg;
  REQUIRE(reg.register_callback({"x2", Stage::exchange, "*", "",
                                 make_unit_scale(2.0)})
              .ok());
  REQUIRE(reg.register_callback(
                 {"plus1", Stage::exchange, "*", "",
                  [](const Record& r) -> CallbackAction {
                    Record out = r;
                    out.value = Value::of(r.value.numeric() + 1.0);
                    return CallbackTransform{out};
                  }})
              .ok());
  auto out = reg.run_chain(Stage::exchange, "temp", num_record(1, 5.0), {});
  REQUIRE(out.ok());
  // (5 * 2) + 1 = 11; the reversed order would give 12.
  CHECK(out.value().value.as_float() == 11.0);

  CallbackRegistry reversed;
  REQUIRE(reversed
              .register_callback({"plus1", Stage::exchange, "*", "",
                                  [](const Record& r) -> CallbackAction {
                                    Record out = r;
                                    out.value =
                                        Value::of(r.value.numeric() + 1.0);
                                    return CallbackTransform{out};
                                  }})
              .ok());
  REQUIRE(reversed
              .register_callback({"x2", Stage::exchange, "*", "",
                                  make_unit_scale(2.0)})
              .ok());
  auto flipped =
      reversed.run_chain(Stage::exchange, "temp", num_record(1, 5.0), {});
  REQUIRE(flipped.ok());
  CHECK(flipped.value().value.as_float() == 12.0);
}

TEST_CASE("first reject short-circuits the chain") {
  CallbackRegistry reg;
  int later_calls = 0;
  REQUIRE(reg.register_callback({"deny", Stage::exchange, "*", "",
                                 make_reject_all("nope")})
              .ok());
  REQUIRE(reg.register_callback(
                 {"later", Stage::exchange, "*", "",
                  [&](const Record&) -> CallbackAction {
                    ++later_calls;
                    return CallbackAccept{};
                  }})
              .ok());
  auto out = reg.run_chain(Stage::exchange, "temp", num_record(1, 1.0), {});
  REQUIRE_FALSE(out.ok());
  CHECK(out.error().code == Errc::rejected_by_callback);
  CHECK(out.error().message.find("deny") != std::string::npos);
  CHECK(later_calls == 0);
}

TEST_CASE("a transform may not change the record key") {
  CallbackRegistry reg;
  REQUIRE(reg.register_callback(
                 {"bad", Stage::exchange, "*", "",
                  [](const Record& r) -> CallbackAction {
                    Record out = r;
                    out.key.ts += 1;
                    return CallbackTransform{out};
                  }})
              .ok());
  auto out = reg.run_chain(Stage::exchange, "temp", num_record(1, 1.0), {});
  REQUIRE_FALSE(out.ok());
  CHECK(out.error().code == Errc::key_mutation);
}

TEST_CASE("callbacks filter on stage, store and actor roles") {
  CallbackRegistry reg;
  REQUIRE(reg.register_callback({"ingest-only", Stage::ingest, "temp", "",
                                 make_reject_all("ingest")})
              .ok());
  REQUIRE(reg.register_callback({"ops-only", Stage::exchange, "*", "ops",
                                 make_reject_all("ops")})
              .ok());

  // Wrong stage: untouched.
  CHECK(reg.run_chain(Stage::exchange, "temp", num_record(1, 1.0), {}).ok());
  // Right stage, wrong store: untouched.
  CHECK(reg.run_chain(Stage::ingest, "other", num_record(1, 1.0), {}).ok());
  // Right stage and store: rejected.
  CHECK_FALSE(reg.run_chain(Stage::ingest, "temp", num_record(1, 1.0), {})
                  .ok());
  // Role-filtered callback applies only to holders of the role.
  CHECK(reg.run_chain(Stage::exchange, "temp", num_record(1, 1.0),
                      {"viewer"})
            .ok());
  CHECK_FALSE(reg.run_chain(Stage::exchange, "temp", num_record(1, 1.0),
                            {"ops"})
                  .ok());
}

TEST_CASE("built-in clamp bounds numerics and rejects NaN") {
  auto clamp = make_range_clamp(0.0, 100.0);
  Record in_range = num_record(1, 50.0);
  CHECK(std::holds_alternative<CallbackAccept>(clamp(in_range)));
  Record high = num_record(1, 150.0);
  auto action = clamp(high);
  REQUIRE(std::holds_alternative<CallbackTransform>(action));
  CHECK(std::get<CallbackTransform>(action).record.value.as_float() == 100.0);
  Record nan = num_record(1, std::nan(""));
  CHECK(std::holds_alternative<CallbackReject>(clamp(nan)));
  Record text{{1, 0}, Value::of("n/a"), {}};
  CHECK(std::holds_alternative<CallbackAccept>(clamp(text)));
}

TEST_CASE("built-in redact removes one object field") {
  auto redact = make_redact_field("secret");
  Value::Object obj;
  obj.emplace_back("flow", Value::of(1.0));
  obj.emplace_back("secret", Value::of("classified"));
  Record r{{1, 0}, Value::of(obj), {}};
  auto action = redact(r);
  REQUIRE(std::holds_alternative<CallbackTransform>(action));
  const Record& out = std::get<CallbackTransform>(action).record;
  CHECK(out.value.field("flow") != nullptr);
  CHECK(out.value.field("secret") == nullptr);
  Record no_field{{1, 0}, Value::of(Value::Object{}), {}};
  CHECK(std::holds_alternative<CallbackAccept>(redact(no_field)));
}

TEST_CASE("chains are deterministic across runs") {
  auto build = [] {
    CallbackRegistry reg;
    REQUIRE(reg.register_callback({"clamp", Stage::exchange, "*", "",
                                   make_range_clamp(0, 10)})
                .ok());
    REQUIRE(reg.register_callback({"scale", Stage::exchange, "*", "",
                                   make_unit_scale(3.0)})
                .ok());
    return reg;
  };
  CallbackRegistry a = build();
  CallbackRegistry b = build();
  for (double v : {-5.0, 0.0, 3.3, 10.0, 42.0}) {
    auto ra = a.run_chain(Stage::exchange, "s", num_record(1, v), {});
    auto rb = b.run_chain(Stage::exchange, "s", num_record(1, v), {});
    REQUIRE(ra.ok());
    REQUIRE(rb.ok());
    CHECK(ra.value() == rb.value());
  }
}
