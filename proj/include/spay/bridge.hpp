#pragma once

// Connects the two worlds. The Gateway is the actor-facing CBDC API
// (register, query, transfer, redeem, escrow payment) with the privacy
// gate in front of balances. The SettlementWatcher is the bank-side
// consumer of chain commits: it drives locks, releases, refunds, and
// dispute payouts idempotently, records contract-tail updates on-chain,
// and answers merchant challenges with proofs or compensation.

#include <spay/cbdc.hpp>
#include <spay/chain.hpp>
#include <spay/identity.hpp>

#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace spay {

enum class SettlementAction : std::uint8_t { Lock, Release, Refund, DisputePayout };
enum class TaskStatus : std::uint8_t { Pending, Done, Failed };

const char* to_string(SettlementAction a);
const char* to_string(TaskStatus s);

struct SettlementTask {
    std::string tx_id;
    SettlementAction action = SettlementAction::Lock;
    TaskStatus status = TaskStatus::Pending;
    std::string reason;    // failure detail
    std::string citation;  // lock id, proof id, or refund marker
    std::uint64_t trigger_height = 0;

    std::string idempotency_key() const {
        return tx_id + "/" + to_string(action);
    }
};

enum class ChallengeOutcome : std::uint8_t { ProofSupplied, Compensated };

struct ChallengeCase {
    std::string tx_id;
    std::string merchant_id;
    ChallengeOutcome outcome = ChallengeOutcome::ProofSupplied;
    std::string proof_id;
    Amount amount = 0;
};

enum class FaultMode : std::uint8_t { SkipTx, WrongAmount };

struct FaultSpec {
    FaultMode mode = FaultMode::SkipTx;
    std::string tx_id;  // empty: applies to the next matching release
};

struct GatewayRequest {
    enum class Kind : std::uint8_t {
        Register,
        QueryBalance,
        QueryHistory,
        Transfer,
        Redeem,
        PayEscrow,
        VerifyToken,
    };

    Kind kind = Kind::QueryBalance;
    // Register
    std::string platform_user_id;
    std::string bank_id;
    std::optional<crypto::KeyPair> wallet_keys;
    // Query / Redeem
    std::string wallet_id;
    Amount amount = 0;
    // Transfer
    std::optional<TransferIntent> intent;
    // PayEscrow
    std::string tx_id;
    LockPurpose purpose = LockPurpose::Escrow;
    // VerifyToken
    std::optional<PaymentToken> token;
};

struct GatewayResponse {
    bool ok = false;
    Err error = Err::Unauthorized;
    std::optional<WalletBinding> binding;
    Amount amount = 0;
    std::vector<JournalRecord> history;
    std::optional<PaymentToken> token;
    bool token_valid = false;
    std::string token_tx_id;
    Amount token_amount = 0;
};

class Gateway {
public:
    Gateway(WalletRegistry& registry, CbdcLedger& ledger, TrustStore trust)
        : registry_(registry), ledger_(ledger), trust_(std::move(trust)) {}

    GatewayResponse api(const Certificate& caller, const GatewayRequest& request);

private:
    WalletRegistry& registry_;
    CbdcLedger& ledger_;
    TrustStore trust_;
};

class SettlementWatcher {
public:
    SettlementWatcher(Chain& chain, CbdcLedger& ledger, const WalletRegistry& registry,
                      std::vector<Actor> consortium_banks, bool upload_proof_records);

    // Pre-funded per-bank wallet that pays merchant compensation.
    void set_ops_wallet(const std::string& bank_id, const std::string& wallet_id);

    // Test/bench only: deliberately skip or mis-size a release so the
    // challenge protocol has a discrepancy to catch.
    void inject_settlement_fault(FaultMode mode, const std::string& tx_id = "");

    // Drains new commit events and executes their instructions. Tasks are
    // idempotent: re-running over the same prefix moves no money twice.
    void poll(std::uint64_t now_ms);

    Result<ChallengeCase> challenge(const std::string& tx_id, const Certificate& merchant_cert);

    const std::map<std::string, SettlementTask>& tasks() const { return tasks_; }
    const std::vector<ChallengeCase>& challenge_cases() const { return cases_; }
    const std::set<std::string>& faulted_txs() const { return faulted_txs_; }

    // Checkpoint/restore of the commit cursor; restart resumes from the
    // checkpoint and relies on idempotency keys for the overlap.
    std::size_t checkpoint() const { return cursor_; }
    void restore(std::size_t cursor) { cursor_ = cursor; }

private:
    void sync_headers();
    void handle_instruction(const CommitEvent& event, const Instruction& instr,
                            std::uint64_t now_ms);
    SettlementTask& task_slot(const std::string& tx_id, SettlementAction action,
                              std::uint64_t height);
    std::optional<Actor> bank_for_wallet(const std::string& wallet_id) const;
    std::optional<Actor> other_bank(const std::string& bank_id) const;
    std::optional<FaultSpec> match_fault(const std::string& tx_id);
    void submit_update(const Actor& bank, const std::string& tx_id, const ContractUpdate& update,
                       std::uint64_t now_ms);

    Chain& chain_;
    CbdcLedger& ledger_;
    const WalletRegistry& registry_;
    std::map<std::string, Actor> banks_;
    bool upload_proof_records_;

    std::size_t cursor_ = 0;
    std::size_t synced_blocks_ = 0;
    std::map<std::string, SettlementTask> tasks_;  // by idempotency key
    std::vector<ChallengeCase> cases_;
    std::map<std::string, std::string> ops_wallets_;  // bank -> wallet
    std::deque<FaultSpec> faults_;
    std::set<std::string> faulted_txs_;
};

}  // namespace spay
