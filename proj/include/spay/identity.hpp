#pragma once

// Actor identity layer: role-bound certificates issued by a root authority
// (banks act as sub-issuers for wallet-holder certificates), plus the
// CBDC-side registry that binds platform user ids to wallet ids. The
// binding never leaves this registry; chain and platform records see only
// wallet ids.

#include <spay/bytes.hpp>
#include <spay/crypto.hpp>
#include <spay/result.hpp>

#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace spay {

enum class Role : std::uint8_t {
    Buyer = 0,
    Merchant = 1,
    Courier = 2,
    Bank = 3,
    Platform = 4,
    OrderingNode = 5,
    CentralAuthority = 6,
};

const char* to_string(Role r);

struct Certificate {
    std::string subject_id;
    Role role = Role::Buyer;
    Bytes public_key;
    std::string issuer_id;
    Bytes issuer_signature;  // over signing_bytes()

    // Canonical layout: subject_id, u8 role, public_key. The issuer signs
    // exactly these bytes, so certificates are reproducible across runs.
    Bytes signing_bytes() const;
    Bytes serialize() const;
    static std::optional<Certificate> deserialize(const Bytes& buf);

    bool operator==(const Certificate& other) const = default;
};

struct Actor {
    std::string id;
    crypto::KeyPair keys;
    Certificate cert;
};

// Issues a certificate for subject_public_key under the authority's key.
// CentralAuthority may issue any role; a Bank may issue wallet-holder
// certificates (Buyer, Merchant, Courier) only.
Result<Certificate> issue_certificate(const Actor& authority, const Bytes& subject_public_key,
                                      const std::string& subject_id, Role role);

// Single-issuer check: issuer_signature valid under authority_public_key
// and the certificate names that issuer.
bool verify_certificate(const Certificate& cert, const std::string& authority_id,
                        const Bytes& authority_public_key);

// The set of certificates a chain participant accepts ops from: one root
// plus bank sub-issuers. verify() walks at most one issuer hop.
class TrustStore {
public:
    void set_root(const Certificate& root_cert);
    void add_issuer(const Certificate& bank_cert);

    bool verify(const Certificate& cert) const;
    std::optional<Certificate> issuer(const std::string& issuer_id) const;
    const Certificate& root() const { return root_; }

private:
    Certificate root_;
    std::map<std::string, Certificate> issuers_;
};

struct WalletBinding {
    std::string platform_user_id;
    std::string wallet_id;  // first 20 bytes of sha256(public_key), hex
    std::string registered_bank;
};

// CBDC-side registry. Holds the user-to-wallet indirection and custodies
// wallet keys on behalf of the registering bank. Exclusive writes,
// concurrent reads.
class WalletRegistry {
public:
    Result<WalletBinding> register_wallet(const std::string& platform_user_id,
                                          const std::string& bank_id,
                                          const crypto::KeyPair& keys);

    std::optional<WalletBinding> binding_for_user(const std::string& bank_id,
                                                  const std::string& platform_user_id) const;
    std::optional<std::string> bank_of(const std::string& wallet_id) const;
    std::optional<Bytes> wallet_public_key(const std::string& wallet_id) const;
    std::optional<crypto::KeyPair> custodial_keys(const std::string& wallet_id) const;

    // wallet_id -> registering bank, for deriving endorsement sets.
    std::map<std::string, std::string> bank_directory() const;

    static std::string wallet_id_for(const Bytes& public_key);

private:
    struct Entry {
        WalletBinding binding;
        crypto::KeyPair keys;
    };

    mutable std::mutex mu_;
    std::map<std::string, Entry> by_wallet_;
    std::map<std::string, std::string> user_to_wallet_;  // key: bank_id + "/" + user_id
};

}  // namespace spay
