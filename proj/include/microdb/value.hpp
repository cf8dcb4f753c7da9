#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <json.hpp>

#include "microdb/error.hpp"
#include "microdb/wire.hpp"

namespace microdb {

// Record value: a scalar or an ordered object. Field order is preserved as
// written; names must be unique within one object.
class Value {
 public:
  enum class Kind : std::uint8_t {
    none = 0x00,  // tombstone placeholder, never a client-visible value
    boolean = 0x01,
    integer = 0x02,
    floating = 0x03,
    text = 0x04,
    binary = 0x05,
    object = 0x06,
  };

  using Object = std::vector<std::pair<std::string, Value>>;

  Value() = default;
  static Value none() { return Value(); }
  static Value of(bool v) { return Value(Data(std::in_place_index<1>, v)); }
  static Value of(std::int64_t v) {
    return Value(Data(std::in_place_index<2>, v));
  }
  static Value of(double v) { return Value(Data(std::in_place_index<3>, v)); }
  static Value of(std::string v) {
    return Value(Data(std::in_place_index<4>, std::move(v)));
  }
  static Value of(const char* v) { return of(std::string(v)); }
  static Value of(Bytes v) {
    return Value(Data(std::in_place_index<5>, std::move(v)));
  }
  static Value of(Object v) {
    return Value(Data(std::in_place_index<6>, std::move(v)));
  }

  Kind kind() const { return static_cast<Kind>(data_.index()); }
  bool is_none() const { return kind() == Kind::none; }
  bool is_numeric() const {
    return kind() == Kind::integer || kind() == Kind::floating;
  }

  bool as_bool() const { return std::get<1>(data_); }
  std::int64_t as_int() const { return std::get<2>(data_); }
  double as_float() const { return std::get<3>(data_); }
  const std::string& as_text() const { return std::get<4>(data_); }
  const Bytes& as_bytes() const { return std::get<5>(data_); }
  const Object& as_object() const { return std::get<6>(data_); }
  Object& as_object() { return std::get<6>(data_); }

  double numeric() const {
    return kind() == Kind::integer ? static_cast<double>(as_int())
                                   : as_float();
  }

  const Value* field(std::string_view name) const {
    if (kind() != Kind::object) return nullptr;
    for (const auto& [k, v] : as_object())
      if (k == name) return &v;
    return nullptr;
  }

  std::optional<std::string> type_ref;

  bool operator==(const Value& o) const {
    return type_ref == o.type_ref && data_ == o.data_;
  }

  void encode(Encoder& e) const {
    e.u8(type_ref ? 1 : 0);
    if (type_ref) e.str(*type_ref);
    e.u8(static_cast<std::uint8_t>(kind()));
    switch (kind()) {
      case Kind::none:
        break;
      case Kind::boolean:
        e.u8(as_bool() ? 1 : 0);
        break;
      case Kind::integer:
        e.i64(as_int());
        break;
      case Kind::floating:
        e.f64(as_float());
        break;
      case Kind::text:
        e.str(as_text());
        break;
      case Kind::binary:
        e.bytes(as_bytes());
        break;
      case Kind::object: {
        const Object& obj = as_object();
        e.u32(static_cast<std::uint32_t>(obj.size()));
        for (const auto& [name, v] : obj) {
          e.str(name);
          v.encode(e);
        }
        break;
      }
    }
  }

  static Result<Value> decode(Decoder& d) {
    auto has_ref = d.u8();
    if (!has_ref) return has_ref.error();
    std::optional<std::string> ref;
    if (has_ref.value()) {
      auto s = d.str();
      if (!s) return s.error();
      ref = std::move(s).value();
    }
    auto kind = d.u8();
    if (!kind) return kind.error();
    Value v;
    switch (static_cast<Kind>(kind.value())) {
      case Kind::none:
        break;
      case Kind::boolean: {
        auto b = d.u8();
        if (!b) return b.error();
        v = of(b.value() != 0);
        break;
      }
      case Kind::integer: {
        auto i = d.i64();
        if (!i) return i.error();
        v = of(i.value());
        break;
      }
      case Kind::floating: {
        auto f = d.f64();
        if (!f) return f.error();
        v = of(f.value());
        break;
      }
      case Kind::text: {
        auto s = d.str();
        if (!s) return s.error();
        v = of(std::move(s).value());
        break;
      }
      case Kind::binary: {
        auto b = d.bytes();
        if (!b) return b.error();
        v = of(std::move(b).value());
        break;
      }
      case Kind::object: {
        auto n = d.u32();
        if (!n) return n.error();
        Object obj;
        obj.reserve(n.value());
        for (std::uint32_t i = 0; i < n.value(); ++i) {
          auto name = d.str();
          if (!name) return name.error();
          auto fv = decode(d);
          if (!fv) return fv.error();
          for (const auto& [existing, _] : obj)
            if (existing == name.value())
              return make_error(Errc::decode_error, "duplicate object field");
          obj.emplace_back(std::move(name).value(), std::move(fv).value());
        }
        v = of(std::move(obj));
        break;
      }
      default:
        return make_error(Errc::decode_error, "unknown value kind");
    }
    v.type_ref = std::move(ref);
    return v;
  }

 private:
  using Data = std::variant<std::monostate, bool, std::int64_t, double,
                            std::string, Bytes, Object>;

  explicit Value(Data d) : data_(std::move(d)) {}

  Data data_;
};

// JSON mapping used by manifests, scenario files and scripted sources.
// Byte strings have no JSON form; they are spelled {"$bytes": "<hex>"}.
inline nlohmann::ordered_json value_to_json(const Value& v) {
  using json = nlohmann::ordered_json;
  switch (v.kind()) {
    case Value::Kind::none:
      return nullptr;
    case Value::Kind::boolean:
      return v.as_bool();
    case Value::Kind::integer:
      return v.as_int();
    case Value::Kind::floating:
      return v.as_float();
    case Value::Kind::text:
      return v.as_text();
    case Value::Kind::binary:
      return json{{"$bytes", to_hex(v.as_bytes())}};
    case Value::Kind::object: {
      json obj = json::object();
      for (const auto& [k, f] : v.as_object()) obj[k] = value_to_json(f);
      if (v.type_ref) obj["$type"] = *v.type_ref;
      return obj;
    }
  }
  return nullptr;
}

inline Result<Value> value_from_json(const nlohmann::ordered_json& j) {
  using json = nlohmann::ordered_json;
  if (j.is_null()) return Value::none();
  if (j.is_boolean()) return Value::of(j.get<bool>());
  if (j.is_number_integer()) return Value::of(j.get<std::int64_t>());
  if (j.is_number_float()) return Value::of(j.get<double>());
  if (j.is_string()) return Value::of(j.get<std::string>());
  if (j.is_object()) {
    if (j.size() == 1 && j.contains("$bytes")) {
      auto b = from_hex(j["$bytes"].get<std::string>());
      if (!b) return b.error();
      return Value::of(std::move(b).value());
    }
    Value::Object obj;
    std::optional<std::string> type_ref;
    for (const auto& [k, fv] : j.items()) {
      if (k == "$type") {
        type_ref = fv.get<std::string>();
        continue;
      }
      auto parsed = value_from_json(fv);
      if (!parsed) return parsed.error();
      for (const auto& [existing, _] : obj)
        if (existing == k)
          return make_error(Errc::malformed, "duplicate object field " + k);
      obj.emplace_back(k, std::move(parsed).value());
    }
    Value v = Value::of(std::move(obj));
    v.type_ref = std::move(type_ref);
    return v;
  }
  return make_error(Errc::malformed, "unsupported JSON value");
}

inline Result<Value> value_from_literal(std::string_view literal) {
  nlohmann::ordered_json j = nlohmann::ordered_json::parse(
      literal.begin(), literal.end(), nullptr, false);
  if (j.is_discarded())
    return make_error(Errc::parse_error,
                      "bad value literal: " + std::string(literal));
  return value_from_json(j);
}

}  // namespace microdb
