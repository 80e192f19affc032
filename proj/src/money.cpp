#include <spay/money.hpp>

namespace spay {

const char* to_string(LockPurpose p) {
    switch (p) {
        case LockPurpose::Escrow: return "Escrow";
        case LockPurpose::BuyerDeposit: return "BuyerDeposit";
        case LockPurpose::CourierDeposit: return "CourierDeposit";
    }
    return "Unknown";
}

Bytes PaymentToken::signing_bytes() const {
    Encoder e;
    e.str(tx_id);
    e.u8(static_cast<std::uint8_t>(purpose));
    e.i64(amount);
    e.str(lock_id);
    e.str(bank_id);
    return e.move();
}

Bytes PaymentToken::serialize() const {
    Encoder e;
    e.str(tx_id);
    e.u8(static_cast<std::uint8_t>(purpose));
    e.i64(amount);
    e.str(lock_id);
    e.str(bank_id);
    e.bytes(bank_signature);
    return e.move();
}

std::optional<PaymentToken> PaymentToken::deserialize(const Bytes& buf) {
    try {
        Decoder d(buf);
        PaymentToken t;
        t.tx_id = d.str();
        t.purpose = static_cast<LockPurpose>(d.u8());
        t.amount = d.i64();
        t.lock_id = d.str();
        t.bank_id = d.str();
        t.bank_signature = d.bytes();
        if (!d.done()) return std::nullopt;
        return t;
    } catch (const std::out_of_range&) {
        return std::nullopt;
    }
}

bool PaymentToken::verify(const Bytes& bank_public_key) const {
    return crypto::verify(bank_public_key, signing_bytes(), bank_signature);
}

}  // namespace spay
