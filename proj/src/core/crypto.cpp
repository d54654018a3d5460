#include "ecig/core/crypto.hpp"

#include <openssl/evp.h>
#include <openssl/hmac.h>
#include <openssl/rand.h>

#include <memory>

#include "ecig/core/error.hpp"

namespace ecig::crypto {
namespace {

struct CipherCtxDeleter {
  void operator()(EVP_CIPHER_CTX* ctx) const { EVP_CIPHER_CTX_free(ctx); }
};
using CipherCtx = std::unique_ptr<EVP_CIPHER_CTX, CipherCtxDeleter>;

const EVP_MD* md_for(HashAlgorithm algo) {
  return algo == HashAlgorithm::Sha1 ? EVP_sha1() : EVP_sha256();
}

CipherCtx new_cipher_ctx() {
  CipherCtx ctx(EVP_CIPHER_CTX_new());
  if (!ctx) throw Error(Errc::StorageError, "EVP_CIPHER_CTX_new failed");
  return ctx;
}

}  // namespace

const char* to_string(HashAlgorithm algo) noexcept {
  return algo == HashAlgorithm::Sha1 ? "sha1" : "sha256";
}

HashAlgorithm hash_algorithm_from_string(std::string_view name) {
  if (name == "sha1") return HashAlgorithm::Sha1;
  if (name == "sha256") return HashAlgorithm::Sha256;
  throw Error(Errc::BadConfig, "unknown hash algorithm '" + std::string(name) + "'");
}

std::size_t digest_size(HashAlgorithm algo) noexcept {
  return algo == HashAlgorithm::Sha1 ? 20 : 32;
}

Bytes digest(HashAlgorithm algo, ByteView data) {
  Bytes out(EVP_MAX_MD_SIZE);
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), out.data(), &len, md_for(algo), nullptr) != 1) {
    throw Error(Errc::StorageError, "EVP_Digest failed");
  }
  out.resize(len);
  return out;
}

Bytes sha1(ByteView data) { return digest(HashAlgorithm::Sha1, data); }

Bytes sha256(ByteView data) { return digest(HashAlgorithm::Sha256, data); }

Bytes hmac_sha256(ByteView key, ByteView data) {
  Bytes out(EVP_MAX_MD_SIZE);
  unsigned int len = 0;
  if (HMAC(EVP_sha256(), key.data(), static_cast<int>(key.size()), data.data(), data.size(),
           out.data(), &len) == nullptr) {
    throw Error(Errc::StorageError, "HMAC failed");
  }
  out.resize(len);
  return out;
}

Bytes random_bytes(std::size_t n) {
  Bytes out(n);
  if (n > 0 && RAND_bytes(out.data(), static_cast<int>(n)) != 1) {
    throw Error(Errc::StorageError, "RAND_bytes failed");
  }
  return out;
}

bool constant_time_equal(ByteView a, ByteView b) noexcept {
  const std::size_t n = a.size() > b.size() ? a.size() : b.size();
  std::uint8_t diff = a.size() == b.size() ? 0 : 1;
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint8_t x = i < a.size() ? a[i] : 0;
    const std::uint8_t y = i < b.size() ? b[i] : 0;
    diff |= static_cast<std::uint8_t>(x ^ y);
  }
  return diff == 0;
}

Bytes seal(ByteView key, ByteView plaintext, ByteView aad) {
  if (key.size() != kAeadKeySize) throw Error(Errc::NoStorageKey, "key must be 32 bytes");
  Bytes out = random_bytes(kAeadNonceSize);
  out.resize(kAeadNonceSize + plaintext.size() + kAeadTagSize);

  auto ctx = new_cipher_ctx();
  int len = 0;
  bool ok = EVP_EncryptInit_ex(ctx.get(), EVP_aes_256_gcm(), nullptr, nullptr, nullptr) == 1 &&
            EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_SET_IVLEN, kAeadNonceSize, nullptr) == 1 &&
            EVP_EncryptInit_ex(ctx.get(), nullptr, nullptr, key.data(), out.data()) == 1;
  if (ok && !aad.empty()) {
    ok = EVP_EncryptUpdate(ctx.get(), nullptr, &len, aad.data(), static_cast<int>(aad.size())) == 1;
  }
  std::uint8_t* ct = out.data() + kAeadNonceSize;
  int written = 0;
  if (ok && !plaintext.empty()) {
    ok = EVP_EncryptUpdate(ctx.get(), ct, &len, plaintext.data(),
                           static_cast<int>(plaintext.size())) == 1;
    written = len;
  }
  ok = ok && EVP_EncryptFinal_ex(ctx.get(), ct + written, &len) == 1;
  ok = ok && EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_GET_TAG, kAeadTagSize,
                                 ct + plaintext.size()) == 1;
  if (!ok) throw Error(Errc::StorageError, "AES-GCM encryption failed");
  return out;
}

Bytes open(ByteView key, ByteView sealed, ByteView aad) {
  if (key.size() != kAeadKeySize) throw Error(Errc::NoStorageKey, "key must be 32 bytes");
  if (sealed.size() < kAeadNonceSize + kAeadTagSize) {
    throw Error(Errc::DecryptFailure, "sealed blob too short");
  }
  const std::size_t ct_len = sealed.size() - kAeadNonceSize - kAeadTagSize;
  const std::uint8_t* nonce = sealed.data();
  const std::uint8_t* ct = nonce + kAeadNonceSize;
  Bytes tag(ct + ct_len, ct + ct_len + kAeadTagSize);
  Bytes out(ct_len);

  auto ctx = new_cipher_ctx();
  int len = 0;
  bool ok = EVP_DecryptInit_ex(ctx.get(), EVP_aes_256_gcm(), nullptr, nullptr, nullptr) == 1 &&
            EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_SET_IVLEN, kAeadNonceSize, nullptr) == 1 &&
            EVP_DecryptInit_ex(ctx.get(), nullptr, nullptr, key.data(), nonce) == 1;
  if (ok && !aad.empty()) {
    ok = EVP_DecryptUpdate(ctx.get(), nullptr, &len, aad.data(), static_cast<int>(aad.size())) == 1;
  }
  int written = 0;
  if (ok && ct_len > 0) {
    ok = EVP_DecryptUpdate(ctx.get(), out.data(), &len, ct, static_cast<int>(ct_len)) == 1;
    written = len;
  }
  ok = ok && EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_SET_TAG, kAeadTagSize, tag.data()) == 1;
  ok = ok && EVP_DecryptFinal_ex(ctx.get(), out.data() + written, &len) == 1;
  if (!ok) throw Error(Errc::DecryptFailure, "authentication tag mismatch");
  return out;
}

Bytes pbkdf2_sha256(std::string_view password, ByteView salt, int iterations,
                    std::size_t length) {
  Bytes out(length);
  if (PKCS5_PBKDF2_HMAC(password.data(), static_cast<int>(password.size()), salt.data(),
                        static_cast<int>(salt.size()), iterations, EVP_sha256(),
                        static_cast<int>(length), out.data()) != 1) {
    throw Error(Errc::StorageError, "PBKDF2 failed");
  }
  return out;
}

}  // namespace ecig::crypto
