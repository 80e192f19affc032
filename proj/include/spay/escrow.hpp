#pragma once

// Per-transaction escrow contract: proposal intake, four-party endorsement
// evaluation, delivery attestation, buyer confirmation, the dispute branch,
// and emission of the settlement/refund/payout instructions the off-chain
// money layer executes.
//
// Legal transitions:
//   Proposed -> Endorsing -> {Locked, Rejected}
//   Locked -> Delivered -> {Confirmed, Disputed}
//   Disputed -> {Confirmed, Refunded}
//   Confirmed -> Settled
//   Rejected -> Refunded
// Settled and Refunded are absorbing.

#include <spay/bytes.hpp>
#include <spay/identity.hpp>
#include <spay/money.hpp>
#include <spay/result.hpp>

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace spay {

enum class ContractState : std::uint8_t {
    Proposed = 0,
    Endorsing = 1,
    Locked = 2,
    Delivered = 3,
    Disputed = 4,
    Confirmed = 5,
    Settled = 6,
    Rejected = 7,
    Refunded = 8,
};

const char* to_string(ContractState s);
bool is_absorbing(ContractState s);
bool is_legal_transition(ContractState from, ContractState to);

struct TransactionProposal {
    std::string tx_id;
    std::string product_id;
    Amount price = 0;
    std::string merchant_wallet;
    std::string buyer_wallet;
    std::string platform_id;
    Bytes buyer_signature;  // over signing_bytes()

    Bytes signing_bytes() const;
    Bytes serialize() const;
    static std::optional<TransactionProposal> deserialize(const Bytes& buf);
    Hash32 digest() const;  // sha256 of the full serialized proposal
};

struct EndorsementRequest {
    std::string tx_id;
    Hash32 proposal_digest{};
    std::vector<std::string> required_endorsers;  // sorted, unique
};

enum class Verdict : std::uint8_t { Approve = 0, Reject = 1 };

struct Endorsement {
    std::string tx_id;
    Certificate endorser_cert;
    Verdict verdict = Verdict::Approve;
    Hash32 proposal_digest{};
    Bytes signature;  // over signing_bytes(), by the endorser

    Bytes signing_bytes() const;
    Bytes serialize() const;
    static std::optional<Endorsement> deserialize(const Bytes& buf);
};

Endorsement make_endorsement(const Actor& endorser, const std::string& tx_id, Verdict verdict,
                             const Hash32& proposal_digest);

enum class BuyerDecision : std::uint8_t { Pending = 0, Confirmed = 1, Null = 2 };
enum class DisputeWinner : std::uint8_t { Buyer = 0, Courier = 1 };

const char* to_string(DisputeWinner w);

struct DisputeCase {
    std::string tx_id;
    Amount buyer_deposit = 0;    // equals the product price
    Amount courier_deposit = 0;  // equals the product price
    std::string buyer_lock_id;
    std::string courier_lock_id;
    std::optional<DisputeWinner> winner;
    Amount winner_amount = 0;    // deposit + floor(deposit/2)
    Amount platform_amount = 0;  // 2*deposit - winner_amount
    bool resolved = false;

    Bytes serialize() const;
};

struct SettlementInstruction {
    std::string merchant_wallet;
    Amount merchant_amount = 0;
    std::string platform_wallet;
    Amount platform_amount = 0;

    Bytes serialize() const;
};

struct LockPayout {
    std::string lock_id;
    std::vector<std::pair<std::string, Amount>> outputs;  // (wallet, amount)
};

// Side effects a transition hands to the settlement watcher. Executed
// verbatim off-chain; the contract is the single source of truth for
// every amount.
//
// RecordRefund asks the bank to commit a RefundDone update on-chain; the
// committed update is then the evidence the ledger demands before the
// actual Refund moves money. A rejection caused by mismatched digests has
// no single prior op proving it, so the recorded update is the proof.
struct Instruction {
    enum class Kind : std::uint8_t { EnsureLock, RecordRefund, Refund, Settle, DisputePayout };

    Kind kind = Kind::EnsureLock;
    std::string tx_id;
    // EnsureLock
    std::string buyer_wallet;
    Amount amount = 0;
    // Settle
    SettlementInstruction settle;
    // DisputePayout
    std::vector<LockPayout> payouts;
};

const char* to_string(Instruction::Kind k);

// ContractUpdate payload: bank- or platform-recorded events that move a
// contract through its settlement tail.
enum class UpdateKind : std::uint8_t {
    EndorsementTimeout = 0,  // platform/orderer: endorsement window expired
    SettlementDone = 1,      // bank: escrow released, cites the proof
    RefundDone = 2,          // bank: escrow refunded
    ProofRecord = 3,         // bank: full settlement proof uploaded on-chain
};

struct ContractUpdate {
    UpdateKind kind = UpdateKind::EndorsementTimeout;
    std::string proof_id;
    Bytes proof_record;

    Bytes serialize() const;
    static std::optional<ContractUpdate> deserialize(const Bytes& buf);
};

struct EscrowContract {
    TransactionProposal proposal;
    ContractState state = ContractState::Proposed;
    std::vector<std::string> required_endorsers;
    std::map<std::string, Endorsement> endorsements;  // endorser id -> vote
    std::optional<std::string> courier_wallet;        // set by delivery attestation
    std::string courier_id;
    BuyerDecision buyer_confirmation = BuyerDecision::Pending;
    std::optional<DisputeCase> dispute;
    std::optional<SettlementInstruction> settlement_instruction;
    std::string settlement_proof_id;  // cited by the SettlementDone update

    // Canonical structured record, used for the world-state digest and
    // the audit export. Carries no clock values: the world state must be
    // a pure function of the block sequence.
    Bytes serialize() const;
};

using ContractStore = std::map<std::string, EscrowContract>;

struct EngineConfig {
    std::uint32_t commission_rate_bp = kDefaultCommissionBp;
    std::uint64_t endorse_timeout_ms = 30'000;
    std::map<std::string, std::string> wallet_banks;      // wallet_id -> bank actor id
    std::map<std::string, std::string> platform_wallets;  // platform id -> wallet_id
    TrustStore trust;                                     // for deposit-token verification
};

// Outcome of folding one chain op into the store. Illegal ops leave state
// unchanged; the rejection is data, not an exception.
struct ApplyResult {
    bool accepted = false;
    Err error = Err::NotFound;
    std::optional<ContractState> state;
    std::vector<Instruction> instructions;
};

// Pure single-writer state machine over a ContractStore. The chain owns
// one instance and serializes all calls; distinct stores may fold in
// parallel.
class ContractEngine {
public:
    explicit ContractEngine(EngineConfig config) : config_(std::move(config)) {}

    const EngineConfig& config() const { return config_; }

    Result<EndorsementRequest> propose(ContractStore& store, const TransactionProposal& proposal,
                                       const Certificate& submitter) const;

    Result<ContractState> record_endorsement(ContractStore& store, const Endorsement& endorsement,
                                             std::vector<Instruction>& out) const;

    Result<ContractState> courier_attest(ContractStore& store, const std::string& tx_id,
                                         const Certificate& courier) const;

    Result<ContractState> buyer_confirm(ContractStore& store, const std::string& tx_id,
                                        BuyerDecision decision, const Certificate& submitter,
                                        std::vector<Instruction>& out) const;

    Result<ContractState> open_dispute(ContractStore& store, const std::string& tx_id,
                                       const std::optional<PaymentToken>& buyer_token,
                                       const std::optional<PaymentToken>& courier_token,
                                       const Certificate& submitter) const;

    Result<ContractState> resolve_dispute(ContractStore& store, const std::string& tx_id,
                                          DisputeWinner winner, const Certificate& submitter,
                                          std::vector<Instruction>& out) const;

    Result<ContractState> apply_update(ContractStore& store, const std::string& tx_id,
                                       const ContractUpdate& update, const Certificate& submitter,
                                       std::vector<Instruction>& out) const;

    // Derives {buyer's bank, merchant's bank, merchant, platform}; three
    // members when both parties use the same bank.
    Result<EndorsementRequest> endorsement_request(const TransactionProposal& proposal) const;

private:
    Result<ContractState> finish_endorsement(EscrowContract& c,
                                             std::vector<Instruction>& out) const;

    EngineConfig config_;
};

}  // namespace spay
