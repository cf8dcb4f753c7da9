#pragma once

#include <optional>
#include <string>
#include <utility>
#include <variant>

namespace microdb {

enum class Errc {
  ok = 0,
  // store
  duplicate_name,
  not_found,
  invalid_config,
  schema_violation,
  rejected_by_callback,
  unauthorized,
  unauthorized_range,
  immutable_store,
  key_not_found,
  // security
  bad_signature,
  expired,
  malformed,
  unknown_role,
  invalid_grant,
  no_key,
  auth_failure,
  // infomodel
  duplicate,
  cyclic_inheritance,
  unknown_parent,
  unknown_subject,
  duplicate_tag,
  bad_path,
  unknown_model,
  // eventbus
  unknown_subscription,
  key_mutation,
  // ingest
  already_bound,
  unknown_store,
  source_unreachable,
  // sync
  non_adjacent_tier,
  policy_blocked,
  transport_down,
  decode_error,
  // registry
  stale_version,
  validation_failure,
  apply_failure,
  // harness / cli
  invalid_spec,
  parse_error,
  assertion_failure,
  io_error,
  invalid_argument,
};

inline const char* errc_name(Errc c) {
  switch (c) {
    case Errc::ok: return "ok";
    case Errc::duplicate_name: return "duplicate-name";
    case Errc::not_found: return "not-found";
    case Errc::invalid_config: return "invalid-config";
    case Errc::schema_violation: return "schema-violation";
    case Errc::rejected_by_callback: return "rejected-by-callback";
    case Errc::unauthorized: return "unauthorized";
    case Errc::unauthorized_range: return "unauthorized-range";
    case Errc::immutable_store: return "immutable-store";
    case Errc::key_not_found: return "key-not-found";
    case Errc::bad_signature: return "bad-signature";
    case Errc::expired: return "expired";
    case Errc::malformed: return "malformed";
    case Errc::unknown_role: return "unknown-role";
    case Errc::invalid_grant: return "invalid-grant";
    case Errc::no_key: return "no-key";
    case Errc::auth_failure: return "auth-failure";
    case Errc::duplicate: return "duplicate";
    case Errc::cyclic_inheritance: return "cyclic-inheritance";
    case Errc::unknown_parent: return "unknown-parent";
    case Errc::unknown_subject: return "unknown-subject";
    case Errc::duplicate_tag: return "duplicate-tag";
    case Errc::bad_path: return "bad-path";
    case Errc::unknown_model: return "unknown-model";
    case Errc::unknown_subscription: return "unknown-subscription";
    case Errc::key_mutation: return "key-mutation";
    case Errc::already_bound: return "already-bound";
    case Errc::unknown_store: return "unknown-store";
    case Errc::source_unreachable: return "source-unreachable";
    case Errc::non_adjacent_tier: return "non-adjacent-tier";
    case Errc::policy_blocked: return "policy-blocked";
    case Errc::transport_down: return "transport-down";
    case Errc::decode_error: return "decode-error";
    case Errc::stale_version: return "stale-version";
    case Errc::validation_failure: return "validation-failure";
    case Errc::apply_failure: return "apply-failure";
    case Errc::invalid_spec: return "invalid-spec";
    case Errc::parse_error: return "parse-error";
    case Errc::assertion_failure: return "assertion-failure";
    case Errc::io_error: return "io-error";
    case Errc::invalid_argument: return "invalid-argument";
  }
  return "unknown";
}

struct Error {
  Errc code = Errc::ok;
  std::string message;

  std::string to_string() const {
    std::string s = errc_name(code);
    if (!message.empty()) {
      s += ": ";
      s += message;
    }
    return s;
  }
};

inline Error make_error(Errc code, std::string message = {}) {
  return Error{code, std::move(message)};
}

template <typename T>
class [[nodiscard]] Result {
 public:
  Result(T value) : v_(std::move(value)) {}
  Result(Error e) : v_(std::move(e)) {}

  bool ok() const { return std::holds_alternative<T>(v_); }
  explicit operator bool() const { return ok(); }

  T& value() & { return std::get<T>(v_); }
  const T& value() const& { return std::get<T>(v_); }
  T&& value() && { return std::get<T>(std::move(v_)); }

  const Error& error() const { return std::get<Error>(v_); }
  Errc code() const { return ok() ? Errc::ok : error().code; }

  T value_or(T fallback) const {
    return ok() ? std::get<T>(v_) : std::move(fallback);
  }

 private:
  std::variant<T, Error> v_;
};

template <>
class [[nodiscard]] Result<void> {
 public:
  Result() = default;
  Result(Error e) : err_(std::move(e)) {}

  bool ok() const { return !err_.has_value(); }
  explicit operator bool() const { return ok(); }

  const Error& error() const { return *err_; }
  Errc code() const { return ok() ? Errc::ok : err_->code; }

 private:
  std::optional<Error> err_;
};

}  // namespace microdb
