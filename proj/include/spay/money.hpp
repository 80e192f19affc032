#pragma once

// Shared money-layer vocabulary: integer amounts in minor currency units,
// the settlement and dispute split rules, and the identity-free payment
// confirmation token a bank hands out when funds are locked.

#include <spay/bytes.hpp>
#include <spay/crypto.hpp>

#include <cstdint>
#include <optional>
#include <string>

namespace spay {

using Amount = std::int64_t;

// Commission expressed in basis points (1/10000), so splits stay exact
// in integer units. 500 bp = 5%.
inline constexpr std::uint32_t kDefaultCommissionBp = 500;

struct SettlementSplit {
    Amount merchant_amount = 0;
    Amount platform_amount = 0;
};

inline SettlementSplit settlement_split(Amount price, std::uint32_t commission_bp) {
    Amount commission = price * static_cast<Amount>(commission_bp) / 10000;
    return SettlementSplit{price - commission, commission};
}

struct DisputeSplit {
    Amount winner_amount = 0;    // own deposit back plus floor(deposit/2)
    Amount platform_amount = 0;  // remainder, so the two sum to 2*deposit
};

inline DisputeSplit dispute_split(Amount deposit) {
    Amount winner = deposit + deposit / 2;
    return DisputeSplit{winner, 2 * deposit - winner};
}

enum class LockPurpose : std::uint8_t {
    Escrow = 0,
    BuyerDeposit = 1,
    CourierDeposit = 2,
};

const char* to_string(LockPurpose p);

// Proof of payment a bank signs when it locks funds for a transaction.
// Carries no wallet or user identity: the platform can check that tx_id
// was paid for the right amount and nothing else.
struct PaymentToken {
    std::string tx_id;
    LockPurpose purpose = LockPurpose::Escrow;
    Amount amount = 0;
    std::string lock_id;
    std::string bank_id;
    Bytes bank_signature;  // over signing_bytes()

    Bytes signing_bytes() const;
    Bytes serialize() const;
    static std::optional<PaymentToken> deserialize(const Bytes& buf);

    bool verify(const Bytes& bank_public_key) const;
};

}  // namespace spay
