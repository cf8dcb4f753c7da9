#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>

#include <openssl/evp.h>
#include <openssl/hmac.h>
#include <openssl/rand.h>
#include <openssl/sha.h>

#include "microdb/error.hpp"
#include "microdb/wire.hpp"

namespace microdb {

inline constexpr std::size_t kKeyLen = 32;
inline constexpr std::size_t kNonceLen = 12;
inline constexpr std::size_t kTagLen = 16;
inline constexpr std::size_t kDigestLen = 32;

using RandomFn = std::function<void(std::span<std::uint8_t>)>;

inline void os_random(std::span<std::uint8_t> out) {
  RAND_bytes(out.data(), static_cast<int>(out.size()));
}

inline Bytes sha256(std::span<const std::uint8_t> data) {
  Bytes out(kDigestLen);
  SHA256(data.data(), data.size(), out.data());
  return out;
}

inline Bytes sha256(std::string_view s) {
  return sha256(std::span<const std::uint8_t>(
      reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
}

inline Bytes hmac_sha256(std::span<const std::uint8_t> key,
                         std::span<const std::uint8_t> data) {
  Bytes out(kDigestLen);
  unsigned int len = 0;
  HMAC(EVP_sha256(), key.data(), static_cast<int>(key.size()), data.data(),
       data.size(), out.data(), &len);
  out.resize(len);
  return out;
}

inline bool constant_time_eq(std::span<const std::uint8_t> a,
                             std::span<const std::uint8_t> b) {
  if (a.size() != b.size()) return false;
  std::uint8_t acc = 0;
  for (std::size_t i = 0; i < a.size(); ++i) acc |= a[i] ^ b[i];
  return acc == 0;
}

inline std::string base64_encode(std::span<const std::uint8_t> data) {
  static constexpr char kTable[] =
      "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  out.reserve((data.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 3 <= data.size(); i += 3) {
    std::uint32_t n = (data[i] << 16) | (data[i + 1] << 8) | data[i + 2];
    out.push_back(kTable[(n >> 18) & 63]);
    out.push_back(kTable[(n >> 12) & 63]);
    out.push_back(kTable[(n >> 6) & 63]);
    out.push_back(kTable[n & 63]);
  }
  if (i + 1 == data.size()) {
    std::uint32_t n = data[i] << 16;
    out.push_back(kTable[(n >> 18) & 63]);
    out.push_back(kTable[(n >> 12) & 63]);
    out += "==";
  } else if (i + 2 == data.size()) {
    std::uint32_t n = (data[i] << 16) | (data[i + 1] << 8);
    out.push_back(kTable[(n >> 18) & 63]);
    out.push_back(kTable[(n >> 12) & 63]);
    out.push_back(kTable[(n >> 6) & 63]);
    out += "=";
  }
  return out;
}

inline Result<Bytes> base64_decode(std::string_view text) {
  auto val = [](char c) -> int {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
  };
  if (text.size() % 4 != 0)
    return make_error(Errc::malformed, "bad base64 length");
  Bytes out;
  out.reserve(text.size() / 4 * 3);
  for (std::size_t i = 0; i < text.size(); i += 4) {
    int pad = 0;
    std::uint32_t n = 0;
    for (int j = 0; j < 4; ++j) {
      char c = text[i + j];
      if (c == '=') {
        if (i + 4 != text.size() || j < 2)
          return make_error(Errc::malformed, "bad base64 padding");
        ++pad;
        n <<= 6;
        continue;
      }
      if (pad > 0) return make_error(Errc::malformed, "bad base64 padding");
      int v = val(c);
      if (v < 0) return make_error(Errc::malformed, "bad base64 character");
      n = (n << 6) | static_cast<std::uint32_t>(v);
    }
    out.push_back(static_cast<std::uint8_t>(n >> 16));
    if (pad < 2) out.push_back(static_cast<std::uint8_t>(n >> 8));
    if (pad < 1) out.push_back(static_cast<std::uint8_t>(n));
  }
  return out;
}

// Authenticated encryption behind one interface so fixtures can swap in the
// deterministic stand-in. Sealed frame layout is shared by both providers:
// 12-byte nonce | ciphertext | 16-byte tag.
class CryptoProvider {
 public:
  virtual ~CryptoProvider() = default;
  virtual std::string name() const = 0;
  virtual Bytes seal(std::span<const std::uint8_t> key,
                     std::span<const std::uint8_t> plaintext,
                     std::span<const std::uint8_t> aad) = 0;
  virtual Result<Bytes> open(std::span<const std::uint8_t> key,
                             std::span<const std::uint8_t> frame,
                             std::span<const std::uint8_t> aad) = 0;
};

class AesGcmProvider final : public CryptoProvider {
 public:
  explicit AesGcmProvider(RandomFn rng = os_random) : rng_(std::move(rng)) {}

  std::string name() const override { return "aes-256-gcm"; }

  Bytes seal(std::span<const std::uint8_t> key,
             std::span<const std::uint8_t> plaintext,
             std::span<const std::uint8_t> aad) override {
    Bytes out(kNonceLen + plaintext.size() + kTagLen);
    rng_(std::span(out.data(), kNonceLen));
    EVP_CIPHER_CTX* ctx = EVP_CIPHER_CTX_new();
    EVP_EncryptInit_ex(ctx, EVP_aes_256_gcm(), nullptr, nullptr, nullptr);
    EVP_CIPHER_CTX_ctrl(ctx, EVP_CTRL_GCM_SET_IVLEN, kNonceLen, nullptr);
    EVP_EncryptInit_ex(ctx, nullptr, nullptr, key.data(), out.data());
    int len = 0;
    if (!aad.empty())
      EVP_EncryptUpdate(ctx, nullptr, &len, aad.data(),
                        static_cast<int>(aad.size()));
    EVP_EncryptUpdate(ctx, out.data() + kNonceLen, &len, plaintext.data(),
                      static_cast<int>(plaintext.size()));
    int fin = 0;
    EVP_EncryptFinal_ex(ctx, out.data() + kNonceLen + len, &fin);
    EVP_CIPHER_CTX_ctrl(ctx, EVP_CTRL_GCM_GET_TAG, kTagLen,
                        out.data() + kNonceLen + plaintext.size());
    EVP_CIPHER_CTX_free(ctx);
    return out;
  }

  Result<Bytes> open(std::span<const std::uint8_t> key,
                     std::span<const std::uint8_t> frame,
                     std::span<const std::uint8_t> aad) override {
    if (frame.size() < kNonceLen + kTagLen)
      return make_error(Errc::auth_failure, "sealed frame too short");
    const std::size_t ct_len = frame.size() - kNonceLen - kTagLen;
    Bytes out(ct_len);
    EVP_CIPHER_CTX* ctx = EVP_CIPHER_CTX_new();
    EVP_DecryptInit_ex(ctx, EVP_aes_256_gcm(), nullptr, nullptr, nullptr);
    EVP_CIPHER_CTX_ctrl(ctx, EVP_CTRL_GCM_SET_IVLEN, kNonceLen, nullptr);
    EVP_DecryptInit_ex(ctx, nullptr, nullptr, key.data(), frame.data());
    int len = 0;
    if (!aad.empty())
      EVP_DecryptUpdate(ctx, nullptr, &len, aad.data(),
                        static_cast<int>(aad.size()));
    EVP_DecryptUpdate(ctx, out.data(), &len, frame.data() + kNonceLen,
                      static_cast<int>(ct_len));
    Bytes tag(frame.end() - kTagLen, frame.end());
    EVP_CIPHER_CTX_ctrl(ctx, EVP_CTRL_GCM_SET_TAG, kTagLen, tag.data());
    int fin = 0;
    int ok = EVP_DecryptFinal_ex(ctx, out.data() + len, &fin);
    EVP_CIPHER_CTX_free(ctx);
    if (ok != 1)
      return make_error(Errc::auth_failure, "authentication failed");
    return out;
  }

 private:
  RandomFn rng_;
};

// Keystream-XOR cipher with an HMAC tag. Not for production data; it exists
// so fixtures get reproducible sealed bytes from a seeded nonce source.
class XorMacProvider final : public CryptoProvider {
 public:
  explicit XorMacProvider(RandomFn rng = os_random) : rng_(std::move(rng)) {}

  std::string name() const override { return "xor-mac"; }

  Bytes seal(std::span<const std::uint8_t> key,
             std::span<const std::uint8_t> plaintext,
             std::span<const std::uint8_t> aad) override {
    Bytes out(kNonceLen + plaintext.size() + kTagLen);
    rng_(std::span(out.data(), kNonceLen));
    keystream_xor(key, std::span(out.data(), kNonceLen), plaintext,
                  std::span(out.data() + kNonceLen, plaintext.size()));
    Bytes tag = compute_tag(
        key, std::span<const std::uint8_t>(out.data(), kNonceLen),
        std::span<const std::uint8_t>(out.data() + kNonceLen,
                                      plaintext.size()),
        aad);
    std::memcpy(out.data() + kNonceLen + plaintext.size(), tag.data(),
                kTagLen);
    return out;
  }

  Result<Bytes> open(std::span<const std::uint8_t> key,
                     std::span<const std::uint8_t> frame,
                     std::span<const std::uint8_t> aad) override {
    if (frame.size() < kNonceLen + kTagLen)
      return make_error(Errc::auth_failure, "sealed frame too short");
    const std::size_t ct_len = frame.size() - kNonceLen - kTagLen;
    auto nonce = frame.subspan(0, kNonceLen);
    auto ct = frame.subspan(kNonceLen, ct_len);
    Bytes expect = compute_tag(key, nonce, ct, aad);
    if (!constant_time_eq(frame.subspan(kNonceLen + ct_len, kTagLen),
                          std::span<const std::uint8_t>(expect)))
      return make_error(Errc::auth_failure, "authentication failed");
    Bytes out(ct_len);
    keystream_xor(key, nonce, ct, out);
    return out;
  }

 private:
  static void keystream_xor(std::span<const std::uint8_t> key,
                            std::span<const std::uint8_t> nonce,
                            std::span<const std::uint8_t> in,
                            std::span<std::uint8_t> out) {
    Bytes block;
    std::uint64_t counter = 0;
    for (std::size_t i = 0; i < in.size(); ++i) {
      if (i % kDigestLen == 0) {
        Encoder e;
        e.bytes(key);
        e.bytes(nonce);
        e.u64(counter++);
        block = sha256(e.data());
      }
      out[i] = in[i] ^ block[i % kDigestLen];
    }
  }

  static Bytes compute_tag(std::span<const std::uint8_t> key,
                           std::span<const std::uint8_t> nonce,
                           std::span<const std::uint8_t> ct,
                           std::span<const std::uint8_t> aad) {
    Encoder e;
    e.bytes(nonce);
    e.bytes(aad);
    e.bytes(ct);
    Bytes mac = hmac_sha256(key, e.data());
    mac.resize(kTagLen);
    return mac;
  }

  RandomFn rng_;
};

inline Bytes derive_key(std::string_view label, std::string_view id) {
  Encoder e;
  e.str(std::string(label));
  e.str(std::string(id));
  return sha256(e.data());
}

// A store data key at rest is wrapped (sealed) by the owner key.
inline Bytes wrap_key(CryptoProvider& provider,
                      std::span<const std::uint8_t> owner_key,
                      std::span<const std::uint8_t> data_key,
                      std::string_view scope) {
  Bytes aad(scope.begin(), scope.end());
  return provider.seal(owner_key, data_key, aad);
}

inline Result<Bytes> unwrap_key(CryptoProvider& provider,
                                std::span<const std::uint8_t> owner_key,
                                std::span<const std::uint8_t> wrapped,
                                std::string_view scope) {
  Bytes aad(scope.begin(), scope.end());
  return provider.open(owner_key, wrapped, aad);
}

}  // namespace microdb
