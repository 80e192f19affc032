#include <spay/result.hpp>

namespace spay {

const char* to_string(Err e) {
    switch (e) {
        case Err::InvalidSignature: return "InvalidSignature";
        case Err::UnauthorizedIssuer: return "UnauthorizedIssuer";
        case Err::DuplicateRegistration: return "DuplicateRegistration";
        case Err::DuplicateOp: return "DuplicateOp";
        case Err::UnknownCertificate: return "UnknownCertificate";
        case Err::EmptyMempool: return "EmptyMempool";
        case Err::NotFound: return "NotFound";
        case Err::DuplicateTxId: return "DuplicateTxId";
        case Err::NonPositivePrice: return "NonPositivePrice";
        case Err::NotRequiredEndorser: return "NotRequiredEndorser";
        case Err::AlreadyEndorsed: return "AlreadyEndorsed";
        case Err::WrongPhase: return "WrongPhase";
        case Err::WrongRole: return "WrongRole";
        case Err::DepositMismatch: return "DepositMismatch";
        case Err::MissingDeposit: return "MissingDeposit";
        case Err::UnauthorizedMint: return "UnauthorizedMint";
        case Err::UnknownNote: return "UnknownNote";
        case Err::DoubleSpend: return "DoubleSpend";
        case Err::ValueMismatch: return "ValueMismatch";
        case Err::InsufficientFunds: return "InsufficientFunds";
        case Err::LockConsumed: return "LockConsumed";
        case Err::InvalidChainProof: return "InvalidChainProof";
        case Err::UnauthorizedRelease: return "UnauthorizedRelease";
        case Err::Unauthorized: return "Unauthorized";
        case Err::NotPayee: return "NotPayee";
        case Err::ConfigInvalid: return "ConfigInvalid";
        case Err::IoError: return "IoError";
    }
    return "UnknownError";
}

}  // namespace spay
