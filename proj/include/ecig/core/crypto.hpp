#pragma once

#include <cstddef>
#include <string>
#include <string_view>

#include "ecig/core/bytes.hpp"

// Thin wrappers over OpenSSL libcrypto.
namespace ecig::crypto {

enum class HashAlgorithm { Sha1, Sha256 };

const char* to_string(HashAlgorithm algo) noexcept;
HashAlgorithm hash_algorithm_from_string(std::string_view name);  // throws BadConfig
std::size_t digest_size(HashAlgorithm algo) noexcept;

Bytes digest(HashAlgorithm algo, ByteView data);
Bytes sha1(ByteView data);
Bytes sha256(ByteView data);
Bytes hmac_sha256(ByteView key, ByteView data);

Bytes random_bytes(std::size_t n);

// Walks the full length of both inputs whatever the first mismatching byte.
bool constant_time_equal(ByteView a, ByteView b) noexcept;

constexpr std::size_t kAeadKeySize = 32;
constexpr std::size_t kAeadNonceSize = 12;
constexpr std::size_t kAeadTagSize = 16;

// AES-256-GCM. Output layout: nonce(12) || ciphertext || tag(16). A fresh
// random nonce is drawn for every call.
Bytes seal(ByteView key, ByteView plaintext, ByteView aad);

// Throws Error(DecryptFailure) when authentication fails.
Bytes open(ByteView key, ByteView sealed, ByteView aad);

Bytes pbkdf2_sha256(std::string_view password, ByteView salt, int iterations,
                    std::size_t length);

}  // namespace ecig::crypto
