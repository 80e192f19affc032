#pragma once

// Ed25519 signing and SHA-256 digests, backed by libsodium. Key generation
// is deterministic for a fixed 32-byte seed so simulations are reproducible.

#include <spay/bytes.hpp>

#include <cstdint>

namespace spay::crypto {

inline constexpr std::size_t kSeedSize = 32;
inline constexpr std::size_t kPublicKeySize = 32;
inline constexpr std::size_t kSecretKeySize = 64;
inline constexpr std::size_t kSignatureSize = 64;

struct KeyPair {
    Bytes public_key;
    Bytes secret_key;
};

using Seed = std::array<Byte, kSeedSize>;

// Seeded Ed25519 keypair; one seed always yields the same pair.
KeyPair generate_keypair(const Seed& seed);

// Convenience for tests/harnesses: seed derived as sha256(label).
KeyPair keypair_from_label(std::string_view label);

Bytes sign(const Bytes& secret_key, const Bytes& message);
bool verify(const Bytes& public_key, const Bytes& message, const Bytes& signature);

Hash32 sha256(const Bytes& data);
Hash32 sha256(const Byte* data, std::size_t len);

// First 20 bytes of sha256(data), hex-encoded. Wallet identifiers use this.
std::string hash20_hex(const Bytes& data);

}  // namespace spay::crypto
