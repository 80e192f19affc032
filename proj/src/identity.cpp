#include <spay/identity.hpp>

namespace spay {

const char* to_string(Role r) {
    switch (r) {
        case Role::Buyer: return "Buyer";
        case Role::Merchant: return "Merchant";
        case Role::Courier: return "Courier";
        case Role::Bank: return "Bank";
        case Role::Platform: return "Platform";
        case Role::OrderingNode: return "OrderingNode";
        case Role::CentralAuthority: return "CentralAuthority";
    }
    return "Unknown";
}

Bytes Certificate::signing_bytes() const {
    Encoder e;
    e.str(subject_id);
    e.u8(static_cast<std::uint8_t>(role));
    e.bytes(public_key);
    return e.move();
}

Bytes Certificate::serialize() const {
    Encoder e;
    e.str(subject_id);
    e.u8(static_cast<std::uint8_t>(role));
    e.bytes(public_key);
    e.str(issuer_id);
    e.bytes(issuer_signature);
    return e.move();
}

std::optional<Certificate> Certificate::deserialize(const Bytes& buf) {
    try {
        Decoder d(buf);
        Certificate c;
        c.subject_id = d.str();
        c.role = static_cast<Role>(d.u8());
        c.public_key = d.bytes();
        c.issuer_id = d.str();
        c.issuer_signature = d.bytes();
        if (!d.done()) return std::nullopt;
        return c;
    } catch (const std::out_of_range&) {
        return std::nullopt;
    }
}

Result<Certificate> issue_certificate(const Actor& authority, const Bytes& subject_public_key,
                                      const std::string& subject_id, Role role) {
    bool allowed = authority.cert.role == Role::CentralAuthority ||
                   (authority.cert.role == Role::Bank &&
                    (role == Role::Buyer || role == Role::Merchant || role == Role::Courier));
    if (!allowed) return Err::UnauthorizedIssuer;

    Certificate cert;
    cert.subject_id = subject_id;
    cert.role = role;
    cert.public_key = subject_public_key;
    cert.issuer_id = authority.id;
    cert.issuer_signature = crypto::sign(authority.keys.secret_key, cert.signing_bytes());
    return cert;
}

bool verify_certificate(const Certificate& cert, const std::string& authority_id,
                        const Bytes& authority_public_key) {
    if (cert.issuer_id != authority_id) return false;
    return crypto::verify(authority_public_key, cert.signing_bytes(), cert.issuer_signature);
}

void TrustStore::set_root(const Certificate& root_cert) { root_ = root_cert; }

void TrustStore::add_issuer(const Certificate& bank_cert) {
    issuers_[bank_cert.subject_id] = bank_cert;
}

bool TrustStore::verify(const Certificate& cert) const {
    if (cert.issuer_id == root_.subject_id) {
        return verify_certificate(cert, root_.subject_id, root_.public_key);
    }
    auto it = issuers_.find(cert.issuer_id);
    if (it == issuers_.end()) return false;
    const Certificate& bank = it->second;
    // The sub-issuer itself must hold a root-issued Bank certificate.
    if (bank.role != Role::Bank) return false;
    if (!verify_certificate(bank, root_.subject_id, root_.public_key)) return false;
    return verify_certificate(cert, bank.subject_id, bank.public_key);
}

std::optional<Certificate> TrustStore::issuer(const std::string& issuer_id) const {
    if (issuer_id == root_.subject_id) return root_;
    auto it = issuers_.find(issuer_id);
    if (it == issuers_.end()) return std::nullopt;
    return it->second;
}

std::string WalletRegistry::wallet_id_for(const Bytes& public_key) {
    return crypto::hash20_hex(public_key);
}

Result<WalletBinding> WalletRegistry::register_wallet(const std::string& platform_user_id,
                                                      const std::string& bank_id,
                                                      const crypto::KeyPair& keys) {
    std::lock_guard lock(mu_);
    std::string user_key = bank_id + "/" + platform_user_id;
    if (user_to_wallet_.count(user_key)) return Err::DuplicateRegistration;

    WalletBinding binding;
    binding.platform_user_id = platform_user_id;
    binding.wallet_id = wallet_id_for(keys.public_key);
    binding.registered_bank = bank_id;

    by_wallet_[binding.wallet_id] = Entry{binding, keys};
    user_to_wallet_[user_key] = binding.wallet_id;
    return binding;
}

std::optional<WalletBinding> WalletRegistry::binding_for_user(
    const std::string& bank_id, const std::string& platform_user_id) const {
    std::lock_guard lock(mu_);
    auto it = user_to_wallet_.find(bank_id + "/" + platform_user_id);
    if (it == user_to_wallet_.end()) return std::nullopt;
    return by_wallet_.at(it->second).binding;
}

std::optional<std::string> WalletRegistry::bank_of(const std::string& wallet_id) const {
    std::lock_guard lock(mu_);
    auto it = by_wallet_.find(wallet_id);
    if (it == by_wallet_.end()) return std::nullopt;
    return it->second.binding.registered_bank;
}

std::optional<Bytes> WalletRegistry::wallet_public_key(const std::string& wallet_id) const {
    std::lock_guard lock(mu_);
    auto it = by_wallet_.find(wallet_id);
    if (it == by_wallet_.end()) return std::nullopt;
    return it->second.keys.public_key;
}

std::optional<crypto::KeyPair> WalletRegistry::custodial_keys(const std::string& wallet_id) const {
    std::lock_guard lock(mu_);
    auto it = by_wallet_.find(wallet_id);
    if (it == by_wallet_.end()) return std::nullopt;
    return it->second.keys;
}

std::map<std::string, std::string> WalletRegistry::bank_directory() const {
    std::lock_guard lock(mu_);
    std::map<std::string, std::string> out;
    for (const auto& [wallet, entry] : by_wallet_) out[wallet] = entry.binding.registered_bank;
    return out;
}

}  // namespace spay
