#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "microdb/clock.hpp"
#include "microdb/crypto.hpp"
#include "microdb/error.hpp"
#include "microdb/record.hpp"

namespace microdb {

enum class Interface : std::uint8_t {
  exchange_create = 0,
  exchange_read = 1,
  exchange_update = 2,
  exchange_delete = 3,
  subscribe = 4,
  admin = 5,
  sync = 6,
};

inline const char* interface_name(Interface i) {
  switch (i) {
    case Interface::exchange_create: return "exchange-create";
    case Interface::exchange_read: return "exchange-read";
    case Interface::exchange_update: return "exchange-update";
    case Interface::exchange_delete: return "exchange-delete";
    case Interface::subscribe: return "subscribe";
    case Interface::admin: return "admin";
    case Interface::sync: return "sync";
  }
  return "?";
}

inline Result<Interface> interface_from_name(std::string_view s) {
  if (s == "exchange-create") return Interface::exchange_create;
  if (s == "exchange-read") return Interface::exchange_read;
  if (s == "exchange-update") return Interface::exchange_update;
  if (s == "exchange-delete") return Interface::exchange_delete;
  if (s == "subscribe") return Interface::subscribe;
  if (s == "admin") return Interface::admin;
  if (s == "sync") return Interface::sync;
  return make_error(Errc::invalid_grant, "unknown interface " + std::string(s));
}

enum class TierKind : std::uint8_t { device = 0, local = 1, regional = 2, global = 3 };

inline const char* tier_kind_name(TierKind t) {
  switch (t) {
    case TierKind::device: return "device";
    case TierKind::local: return "local";
    case TierKind::regional: return "regional";
    case TierKind::global: return "global";
  }
  return "?";
}

inline Result<TierKind> tier_kind_from_name(std::string_view s) {
  if (s == "device") return TierKind::device;
  if (s == "local") return TierKind::local;
  if (s == "regional") return TierKind::regional;
  if (s == "global") return TierKind::global;
  return make_error(Errc::invalid_config, "unknown tier kind " + std::string(s));
}

inline bool tiers_adjacent(TierKind a, TierKind b) {
  int d = static_cast<int>(a) - static_cast<int>(b);
  return d == 1 || d == -1;
}

struct Principal {
  std::string subject;
  std::string issuer;
  std::int64_t expiry_ns = 0;

  bool operator==(const Principal&) const = default;
};

// Store patterns are an exact name or "*".
inline bool store_pattern_matches(const std::string& pattern,
                                  const std::string& store) {
  return pattern == "*" || pattern == store;
}

// True when every store `inner` can name is also matched by `outer`.
inline bool store_pattern_covers(const std::string& outer,
                                 const std::string& inner) {
  return outer == "*" || outer == inner;
}

struct Grant {
  Interface iface = Interface::exchange_read;
  std::string store_pattern = "*";
  KeyRange range;            // unbounded by default
  std::string policy_ref;    // optional SharingPolicy name

  bool operator==(const Grant&) const = default;
};

struct Role {
  std::string name;
  std::vector<Grant> grants;

  bool operator==(const Role&) const = default;
};

struct SharingPolicy {
  std::string name;
  Bytes eula_digest;  // 32 bytes
  bool allow_synchronization = true;
  std::set<TierKind> allowed_tier_kinds;

  bool operator==(const SharingPolicy&) const = default;
};

struct TrustedIssuer {
  std::string id;
  Bytes key;

  bool operator==(const TrustedIssuer&) const = default;
};

struct Decision {
  bool allow = false;
  std::string reason;
};

struct PolicyBundle {
  std::uint64_t policy_seq = 0;
  std::string origin_id;
  std::vector<Role> roles;
  std::vector<std::pair<std::string, std::string>> bindings;  // subject, role
  std::vector<SharingPolicy> policies;
  std::vector<TrustedIssuer> issuers;
};

// Role names starting "__" are local bootstrap plumbing (the owner role and
// per-source ingest grants); they never travel in policy bundles.
inline bool is_local_role(const std::string& name) {
  return name.rfind("__", 0) == 0;
}

class PolicySet {
 public:
  using AuditHook = std::function<void(const Principal&, Interface,
                                       const std::string&, const KeyRange&,
                                       const Decision&)>;

  void set_owner(std::string subject) {
    owner_subject_ = std::move(subject);
    Role owner{"__owner", {}};
    for (int i = 0; i <= static_cast<int>(Interface::sync); ++i)
      owner.grants.push_back(
          Grant{static_cast<Interface>(i), "*", KeyRange::all(), {}});
    roles_["__owner"] = std::move(owner);
    bindings_[owner_subject_].insert("__owner");
  }

  const std::string& owner_subject() const { return owner_subject_; }
  std::uint64_t policy_seq() const { return policy_seq_; }
  void set_audit_hook(AuditHook hook) { audit_ = std::move(hook); }

  Result<void> define_role(const Role& role) {
    if (role.name.empty())
      return make_error(Errc::invalid_grant, "empty role name");
    if (role.grants.empty())
      return make_error(Errc::invalid_grant,
                        "role " + role.name + " has no grants");
    for (const auto& g : role.grants) {
      if (g.range.lo && g.range.hi && !(*g.range.lo < *g.range.hi))
        return make_error(Errc::invalid_grant,
                          "grant range lo must precede hi");
      if (g.store_pattern.empty())
        return make_error(Errc::invalid_grant, "empty store pattern");
    }
    roles_[role.name] = role;
    if (!is_local_role(role.name)) bump();
    return {};
  }

  Result<void> drop_role(const std::string& name) {
    if (roles_.erase(name) == 0)
      return make_error(Errc::unknown_role, name);
    for (auto& [_, set] : bindings_) set.erase(name);
    if (!is_local_role(name)) bump();
    return {};
  }

  const std::map<std::string, Role>& roles() const { return roles_; }

  Result<void> provision(const std::string& subject,
                         const std::string& role_name) {
    if (!roles_.contains(role_name))
      return make_error(Errc::unknown_role, role_name);
    bindings_[subject].insert(role_name);
    if (!is_local_role(role_name)) bump();
    return {};
  }

  // Re-provision: replaces the subject's whole binding set atomically.
  Result<void> provision_exclusive(const std::string& subject,
                                   const std::string& role_name) {
    if (!roles_.contains(role_name))
      return make_error(Errc::unknown_role, role_name);
    bindings_[subject] = {role_name};
    if (!is_local_role(role_name)) bump();
    return {};
  }

  void revoke(const std::string& subject, const std::string& role_name) {
    auto it = bindings_.find(subject);
    if (it == bindings_.end()) return;
    it->second.erase(role_name);
    if (it->second.empty()) bindings_.erase(it);
    if (!is_local_role(role_name)) bump();
  }

  const std::map<std::string, std::set<std::string>>& bindings() const {
    return bindings_;
  }

  std::set<std::string> roles_of(const std::string& subject) const {
    auto it = bindings_.find(subject);
    return it == bindings_.end() ? std::set<std::string>{} : it->second;
  }

  Result<void> define_policy(const SharingPolicy& p) {
    if (p.eula_digest.size() != kDigestLen)
      return make_error(Errc::invalid_config,
                        "EULA digest must be 32 bytes");
    policies_[p.name] = p;
    bump();
    return {};
  }

  const std::map<std::string, SharingPolicy>& policies() const {
    return policies_;
  }

  void trust_issuer(const TrustedIssuer& issuer) {
    issuers_[issuer.id] = issuer;
    bump();
  }

  const std::map<std::string, TrustedIssuer>& issuers() const {
    return issuers_;
  }

  // Pure decision: allow iff some grant of some bound role covers the
  // interface, matches the store, and contains the requested range.
  Decision authorize(const Principal& p, Interface iface,
                     const std::string& store, const KeyRange& range) const {
    Decision d = decide(p, iface, store, range);
    if (audit_) audit_(p, iface, store, range, d);
    return d;
  }

  // Pattern-level check (subscriptions, link configuration): some grant must
  // cover every store the pattern could name.
  Decision authorize_pattern(const Principal& p, Interface iface,
                             const std::string& store_pattern,
                             const KeyRange& range) const {
    auto bound = bindings_.find(p.subject);
    if (bound == bindings_.end())
      return {false, "no roles bound to " + p.subject};
    for (const auto& role_name : bound->second) {
      auto rit = roles_.find(role_name);
      if (rit == roles_.end()) continue;
      for (const auto& g : rit->second.grants) {
        if (g.iface != iface) continue;
        if (!store_pattern_covers(g.store_pattern, store_pattern)) continue;
        if (!g.range.contains(range)) continue;
        return {true, "grant in role " + role_name};
      }
    }
    return {false, std::string("no grant covers ") + interface_name(iface) +
                       " on pattern " + store_pattern};
  }

  void force_policy_seq(std::uint64_t seq) { policy_seq_ = seq; }

  // The sharing policies governing a store: policy_refs of sync-interface
  // grants whose pattern matches it. Every governing policy must allow the
  // peer tier; an ungoverned store may sync freely.
  std::vector<const SharingPolicy*> sharing_for(const std::string& store) const {
    std::set<std::string> names;
    for (const auto& [_, role] : roles_) {
      if (is_local_role(role.name)) continue;
      for (const auto& g : role.grants)
        if (g.iface == Interface::sync && !g.policy_ref.empty() &&
            store_pattern_matches(g.store_pattern, store))
          names.insert(g.policy_ref);
    }
    std::vector<const SharingPolicy*> out;
    for (const auto& n : names) {
      auto it = policies_.find(n);
      if (it != policies_.end()) out.push_back(&it->second);
    }
    return out;
  }

  // Empty result means the store may be offered to that tier.
  std::optional<std::string> sync_blocked_reason(const std::string& store,
                                                 TierKind peer) const {
    for (const SharingPolicy* p : sharing_for(store)) {
      if (!p->allow_synchronization)
        return "policy " + p->name + " forbids synchronization of " + store;
      if (!p->allowed_tier_kinds.empty() && !p->allowed_tier_kinds.contains(peer))
        return "policy " + p->name + " does not admit tier " +
               tier_kind_name(peer) + " for " + store;
    }
    return std::nullopt;
  }

  PolicyBundle bundle(const std::string& origin_id) const {
    PolicyBundle b;
    b.policy_seq = policy_seq_;
    b.origin_id = origin_id;
    for (const auto& [name, role] : roles_)
      if (!is_local_role(name)) b.roles.push_back(role);
    for (const auto& [subject, set] : bindings_)
      for (const auto& role : set)
        if (!is_local_role(role)) b.bindings.emplace_back(subject, role);
    for (const auto& [_, p] : policies_) b.policies.push_back(p);
    for (const auto& [_, i] : issuers_) b.issuers.push_back(i);
    return b;
  }

  // Adopts the bundle when it is strictly newer by (policy_seq, origin_id).
  // Local "__" roles and their bindings survive the swap.
  bool apply_bundle(const PolicyBundle& b, const std::string& self_id) {
    auto newer = std::pair(b.policy_seq, b.origin_id) >
                 std::pair(policy_seq_, self_id);
    if (b.policy_seq < policy_seq_ || (b.policy_seq == policy_seq_ && !newer))
      return false;
    if (b.policy_seq == policy_seq_ && bundle_equal(b)) return false;
    std::map<std::string, Role> roles;
    std::map<std::string, std::set<std::string>> bindings;
    for (const auto& [name, role] : roles_)
      if (is_local_role(name)) roles.emplace(name, role);
    for (const auto& [subject, set] : bindings_)
      for (const auto& role : set)
        if (is_local_role(role)) bindings[subject].insert(role);
    for (const auto& role : b.roles) roles[role.name] = role;
    for (const auto& [subject, role] : b.bindings) bindings[subject].insert(role);
    roles_ = std::move(roles);
    bindings_ = std::move(bindings);
    policies_.clear();
    for (const auto& p : b.policies) policies_[p.name] = p;
    issuers_.clear();
    for (const auto& i : b.issuers) issuers_[i.id] = i;
    policy_seq_ = b.policy_seq;
    return true;
  }

 private:
  bool bundle_equal(const PolicyBundle& b) const {
    PolicyBundle mine = bundle("");
    auto key_roles = [](std::vector<Role> r) {
      std::sort(r.begin(), r.end(),
                [](const Role& a, const Role& b) { return a.name < b.name; });
      return r;
    };
    auto sorted_bind = [](std::vector<std::pair<std::string, std::string>> v) {
      std::sort(v.begin(), v.end());
      return v;
    };
    auto sorted_pol = [](std::vector<SharingPolicy> p) {
      std::sort(p.begin(), p.end(),
                [](const SharingPolicy& a, const SharingPolicy& b) {
                  return a.name < b.name;
                });
      return p;
    };
    auto sorted_iss = [](std::vector<TrustedIssuer> i) {
      std::sort(i.begin(), i.end(),
                [](const TrustedIssuer& a, const TrustedIssuer& b) {
                  return a.id < b.id;
                });
      return i;
    };
    return key_roles(mine.roles) == key_roles(b.roles) &&
           sorted_bind(mine.bindings) == sorted_bind(b.bindings) &&
           sorted_pol(mine.policies) == sorted_pol(b.policies) &&
           sorted_iss(mine.issuers) == sorted_iss(b.issuers);
  }

  Decision decide(const Principal& p, Interface iface,
                  const std::string& store, const KeyRange& range) const {
    // Replication commits run as "sync:<origin>"; they came through the
    // origin's own authorization and the link's policy gate.
    if (p.subject.rfind("sync:", 0) == 0 &&
        (iface == Interface::exchange_create ||
         iface == Interface::exchange_update ||
         iface == Interface::exchange_delete))
      return {true, "replication actor"};
    auto bound = bindings_.find(p.subject);
    if (bound == bindings_.end())
      return {false, "no roles bound to " + p.subject};
    for (const auto& role_name : bound->second) {
      auto rit = roles_.find(role_name);
      if (rit == roles_.end()) continue;
      for (const auto& g : rit->second.grants) {
        if (g.iface != iface) continue;
        if (!store_pattern_matches(g.store_pattern, store)) continue;
        if (!g.range.contains(range)) continue;
        return {true, "grant in role " + role_name};
      }
    }
    return {false, std::string("no grant covers ") + interface_name(iface) +
                       " on " + store + " " + range.to_string()};
  }

  void bump() { ++policy_seq_; }

  std::string owner_subject_;
  std::map<std::string, Role> roles_;
  std::map<std::string, std::set<std::string>> bindings_;
  std::map<std::string, SharingPolicy> policies_;
  std::map<std::string, TrustedIssuer> issuers_;
  std::uint64_t policy_seq_ = 0;
  AuditHook audit_;
};

// Bearer token: base64(payload || HMAC-SHA256(issuer key, payload)).
// Payload: subject str | issuer str | expiry i64 in canonical serialization.
inline std::string issue_token(const Principal& p,
                               std::span<const std::uint8_t> issuer_key) {
  Encoder e;
  e.str(p.subject);
  e.str(p.issuer);
  e.i64(p.expiry_ns);
  Bytes payload = e.take();
  Bytes mac = hmac_sha256(issuer_key, payload);
  payload.insert(payload.end(), mac.begin(), mac.end());
  return base64_encode(payload);
}

inline Result<Principal> authenticate(
    std::string_view token, const std::map<std::string, TrustedIssuer>& issuers,
    const Clock& clock) {
  auto raw = base64_decode(token);
  if (!raw) return make_error(Errc::malformed, raw.error().message);
  const Bytes& data = raw.value();
  if (data.size() <= kDigestLen)
    return make_error(Errc::malformed, "token too short");
  std::span<const std::uint8_t> payload(data.data(),
                                        data.size() - kDigestLen);
  std::span<const std::uint8_t> mac(data.data() + payload.size(), kDigestLen);
  Decoder d(payload);
  Principal p;
  auto subject = d.str();
  if (!subject) return make_error(Errc::malformed, "bad token payload");
  auto issuer = d.str();
  if (!issuer) return make_error(Errc::malformed, "bad token payload");
  auto expiry = d.i64();
  if (!expiry || !d.done())
    return make_error(Errc::malformed, "bad token payload");
  p.subject = std::move(subject).value();
  p.issuer = std::move(issuer).value();
  p.expiry_ns = expiry.value();
  auto it = issuers.find(p.issuer);
  if (it == issuers.end())
    return make_error(Errc::bad_signature, "untrusted issuer " + p.issuer);
  Bytes expect = hmac_sha256(it->second.key, payload);
  if (!constant_time_eq(mac, expect))
    return make_error(Errc::bad_signature, "token MAC mismatch");
  if (p.expiry_ns <= clock.now_ns())
    return make_error(Errc::expired, "token expired");
  return p;
}

// -- policy bundle canonical serialization (POLICY sync frames) --

inline void encode_policy_bundle(Encoder& e, const PolicyBundle& b) {
  e.u64(b.policy_seq);
  e.str(b.origin_id);
  e.u32(static_cast<std::uint32_t>(b.roles.size()));
  for (const auto& role : b.roles) {
    e.str(role.name);
    e.u32(static_cast<std::uint32_t>(role.grants.size()));
    for (const auto& g : role.grants) {
      e.u8(static_cast<std::uint8_t>(g.iface));
      e.str(g.store_pattern);
      encode_key_range(e, g.range);
      e.str(g.policy_ref);
    }
  }
  e.u32(static_cast<std::uint32_t>(b.bindings.size()));
  for (const auto& [subject, role] : b.bindings) {
    e.str(subject);
    e.str(role);
  }
  e.u32(static_cast<std::uint32_t>(b.policies.size()));
  for (const auto& p : b.policies) {
    e.str(p.name);
    e.bytes(p.eula_digest);
    e.u8(p.allow_synchronization ? 1 : 0);
    std::uint8_t mask = 0;
    for (TierKind t : p.allowed_tier_kinds)
      mask |= static_cast<std::uint8_t>(1u << static_cast<int>(t));
    e.u8(mask);
  }
  e.u32(static_cast<std::uint32_t>(b.issuers.size()));
  for (const auto& i : b.issuers) {
    e.str(i.id);
    e.bytes(i.key);
  }
}

inline Result<PolicyBundle> decode_policy_bundle(Decoder& d) {
  PolicyBundle b;
  auto seq = d.u64();
  if (!seq) return seq.error();
  b.policy_seq = seq.value();
  auto origin = d.str();
  if (!origin) return origin.error();
  b.origin_id = std::move(origin).value();
  auto nroles = d.u32();
  if (!nroles) return nroles.error();
  for (std::uint32_t i = 0; i < nroles.value(); ++i) {
    Role role;
    auto name = d.str();
    if (!name) return name.error();
    role.name = std::move(name).value();
    auto ngrants = d.u32();
    if (!ngrants) return ngrants.error();
    for (std::uint32_t j = 0; j < ngrants.value(); ++j) {
      Grant g;
      auto iface = d.u8();
      if (!iface) return iface.error();
      if (iface.value() > static_cast<std::uint8_t>(Interface::sync))
        return make_error(Errc::decode_error, "bad interface");
      g.iface = static_cast<Interface>(iface.value());
      auto pattern = d.str();
      if (!pattern) return pattern.error();
      g.store_pattern = std::move(pattern).value();
      auto range = decode_key_range(d);
      if (!range) return range.error();
      g.range = range.value();
      auto ref = d.str();
      if (!ref) return ref.error();
      g.policy_ref = std::move(ref).value();
      role.grants.push_back(std::move(g));
    }
    b.roles.push_back(std::move(role));
  }
  auto nbind = d.u32();
  if (!nbind) return nbind.error();
  for (std::uint32_t i = 0; i < nbind.value(); ++i) {
    auto subject = d.str();
    if (!subject) return subject.error();
    auto role = d.str();
    if (!role) return role.error();
    b.bindings.emplace_back(std::move(subject).value(),
                            std::move(role).value());
  }
  auto npol = d.u32();
  if (!npol) return npol.error();
  for (std::uint32_t i = 0; i < npol.value(); ++i) {
    SharingPolicy p;
    auto name = d.str();
    if (!name) return name.error();
    p.name = std::move(name).value();
    auto digest = d.bytes();
    if (!digest) return digest.error();
    p.eula_digest = std::move(digest).value();
    auto allow = d.u8();
    if (!allow) return allow.error();
    p.allow_synchronization = allow.value() != 0;
    auto mask = d.u8();
    if (!mask) return mask.error();
    for (int t = 0; t < 4; ++t)
      if (mask.value() & (1u << t))
        p.allowed_tier_kinds.insert(static_cast<TierKind>(t));
    b.policies.push_back(std::move(p));
  }
  auto niss = d.u32();
  if (!niss) return niss.error();
  for (std::uint32_t i = 0; i < niss.value(); ++i) {
    TrustedIssuer iss;
    auto id = d.str();
    if (!id) return id.error();
    iss.id = std::move(id).value();
    auto key = d.bytes();
    if (!key) return key.error();
    iss.key = std::move(key).value();
    b.issuers.push_back(std::move(iss));
  }
  return b;
}

}  // namespace microdb
