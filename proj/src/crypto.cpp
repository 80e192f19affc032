#include <spay/crypto.hpp>

#include <sodium.h>

#include <mutex>
#include <stdexcept>

namespace spay::crypto {

namespace {

void ensure_sodium() {
    static std::once_flag once;
    std::call_once(once, [] {
        if (sodium_init() < 0) throw std::runtime_error("sodium_init failed");
    });
}

}  // namespace

KeyPair generate_keypair(const Seed& seed) {
    ensure_sodium();
    KeyPair kp;
    kp.public_key.resize(kPublicKeySize);
    kp.secret_key.resize(kSecretKeySize);
    crypto_sign_seed_keypair(kp.public_key.data(), kp.secret_key.data(), seed.data());
    return kp;
}

KeyPair keypair_from_label(std::string_view label) {
    Bytes b(label.begin(), label.end());
    Hash32 h = sha256(b);
    Seed seed;
    std::copy(h.begin(), h.end(), seed.begin());
    return generate_keypair(seed);
}

Bytes sign(const Bytes& secret_key, const Bytes& message) {
    ensure_sodium();
    if (secret_key.size() != kSecretKeySize) throw std::invalid_argument("bad secret key size");
    Bytes sig(kSignatureSize);
    crypto_sign_detached(sig.data(), nullptr, message.data(), message.size(), secret_key.data());
    return sig;
}

bool verify(const Bytes& public_key, const Bytes& message, const Bytes& signature) {
    ensure_sodium();
    if (public_key.size() != kPublicKeySize || signature.size() != kSignatureSize) return false;
    return crypto_sign_verify_detached(signature.data(), message.data(), message.size(),
                                       public_key.data()) == 0;
}

Hash32 sha256(const Byte* data, std::size_t len) {
    ensure_sodium();
    Hash32 out;
    crypto_hash_sha256(out.data(), data, len);
    return out;
}

Hash32 sha256(const Bytes& data) { return sha256(data.data(), data.size()); }

std::string hash20_hex(const Bytes& data) {
    Hash32 h = sha256(data);
    return to_hex(h.data(), 20);
}

}  // namespace spay::crypto
