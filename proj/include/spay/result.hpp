#pragma once

#include <string>
#include <utility>
#include <variant>

namespace spay {

enum class Err {
    // identity
    InvalidSignature,
    UnauthorizedIssuer,
    DuplicateRegistration,
    // chain
    DuplicateOp,
    UnknownCertificate,
    EmptyMempool,
    NotFound,
    // escrow contract
    DuplicateTxId,
    NonPositivePrice,
    NotRequiredEndorser,
    AlreadyEndorsed,
    WrongPhase,
    WrongRole,
    DepositMismatch,
    MissingDeposit,
    // cbdc ledger
    UnauthorizedMint,
    UnknownNote,
    DoubleSpend,
    ValueMismatch,
    InsufficientFunds,
    LockConsumed,
    InvalidChainProof,
    UnauthorizedRelease,
    Unauthorized,
    // bridge
    NotPayee,
    // bench
    ConfigInvalid,
    IoError,
};

const char* to_string(Err e);

// Minimal expected-style carrier: a value or an Err, never both.
template <typename T>
class Result {
public:
    Result(T value) : inner_(std::move(value)) {}
    Result(Err e) : inner_(e) {}

    bool ok() const { return std::holds_alternative<T>(inner_); }
    explicit operator bool() const { return ok(); }

    const T& value() const& { return std::get<T>(inner_); }
    T& value() & { return std::get<T>(inner_); }
    T&& value() && { return std::get<T>(std::move(inner_)); }

    Err error() const { return std::get<Err>(inner_); }

private:
    std::variant<T, Err> inner_;
};

struct Unit {};
using Status = Result<Unit>;

inline Status ok_status() { return Status(Unit{}); }

}  // namespace spay
