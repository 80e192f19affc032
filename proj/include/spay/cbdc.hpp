#pragma once

// Off-chain CBDC money layer: wallets over an unspent-note set partitioned
// into logical shards, two-phase-commit transfers, programmable escrow
// locks whose release authority is a committed chain op (never a key),
// refunds, dispute deposits, verifiable settlement proofs, and fund
// tracing over an append-only journal.

#include <spay/chain.hpp>
#include <spay/identity.hpp>
#include <spay/money.hpp>
#include <spay/result.hpp>

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace spay {

struct FundNote {
    Hash32 note_id{};
    Amount amount = 0;
    std::string owner;  // wallet_id, or "lock:<lock_id>" while escrowed
};

struct TransferIntent {
    std::string from_wallet;
    std::vector<Hash32> inputs;
    std::vector<std::pair<std::string, Amount>> outputs;
    Bytes signature;  // by the owning wallet's key, over signing_bytes()

    Bytes signing_bytes() const;
};

TransferIntent make_transfer_intent(const std::string& from_wallet,
                                    std::vector<Hash32> inputs,
                                    std::vector<std::pair<std::string, Amount>> outputs,
                                    const crypto::KeyPair& keys);

struct EscrowLock {
    std::string lock_id;
    std::string tx_id;
    LockPurpose purpose = LockPurpose::Escrow;
    Amount amount = 0;
    std::string funded_from;
    std::vector<Hash32> note_ids;  // notes currently held by the lock
    bool consumed = false;
    std::string consumed_by;  // proof_id or "refund"
};

// Self-contained settlement evidence (the redeemable payment proof): the
// consumed lock, the exact outputs, and the committed chain op that
// authorized the release, all under one bank signature. Verifies offline
// against the ledger journal plus block headers.
struct SettlementProof {
    std::string proof_id;
    std::string tx_id;
    std::string lock_id;
    std::vector<std::pair<std::string, Amount>> outputs;
    std::uint64_t block_height = 0;
    ChainProof evidence;
    std::string bank_id;
    Bytes bank_signature;  // over signing_bytes()

    Bytes signing_bytes() const;
    Bytes serialize() const;
    static std::optional<SettlementProof> deserialize(const Bytes& buf);
};

struct JournalRecord {
    enum class Kind : std::uint8_t { Mint, Transfer, Lock, Release, Refund, Redeem };

    Kind kind = Kind::Mint;
    std::string tx_id;
    std::string lock_id;
    LockPurpose purpose = LockPurpose::Escrow;
    std::string wallet;  // mint target / lock funder / refund recipient / redeem wallet
    Amount amount = 0;
    std::vector<Hash32> inputs;
    std::vector<std::pair<std::string, Amount>> outputs;
    std::string proof_id;

    Bytes serialize() const;
};

const char* to_string(JournalRecord::Kind k);

struct FlowEdge {
    std::string from;
    std::string to;
    Amount amount = 0;
};

struct FundFlow {
    std::string tx_id;
    std::vector<FlowEdge> edges;
    bool conserved = false;  // lock inflow equals lock outflow
};

struct ConservationTotals {
    Amount spendable = 0;
    Amount locked = 0;
    Amount minted = 0;
    Amount redeemed = 0;

    bool holds() const { return spendable + locked == minted - redeemed; }
};

// Offline verification of a settlement proof against an exported journal
// and a header view; the in-ledger verify delegates here.
bool verify_proof_record(const SettlementProof& proof,
                         const std::vector<JournalRecord>& journal,
                         const std::map<std::uint64_t, BlockHeader>& headers,
                         std::uint32_t commission_rate_bp,
                         const std::function<std::optional<Bytes>(const std::string&)>& bank_key);

class CbdcLedger {
public:
    CbdcLedger(std::size_t shard_count, const WalletRegistry* registry, TrustStore trust,
               std::uint32_t commission_rate_bp);

    void add_bank(const Actor& bank);

    // Header view of the permissioned chain, fed by the bridge. Locks can
    // only be consumed against ops provable in these headers.
    void put_header(const BlockHeader& header);

    Result<FundNote> mint(const std::string& wallet_id, Amount amount,
                          const Certificate& caller);

    // Phase 1 locks every input note on its shard in canonical note order
    // (all-or-nothing); phase 2 deletes inputs and inserts outputs. Any
    // phase-1 failure rolls back acquired marks and aborts atomically.
    Result<std::vector<FundNote>> transfer_2pc(const TransferIntent& intent);

    Result<std::pair<EscrowLock, PaymentToken>> lock_escrow(const std::string& tx_id,
                                                            const std::string& wallet_id,
                                                            Amount amount, LockPurpose purpose);

    // Ordinary wallet-to-wallet payment using the custodied key; note
    // selection and change handling included.
    Result<std::vector<FundNote>> pay(const std::string& from_wallet,
                                      const std::string& to_wallet, Amount amount);

    // Releases only against a committed-op proof satisfying the lock's
    // predicate. A bare bank signature is never sufficient: without a
    // valid proof the call fails even for the custodying bank.
    Result<SettlementProof> release_escrow(
        const std::string& lock_id, const std::optional<ChainProof>& chain_proof,
        const std::vector<std::pair<std::string, Amount>>& beneficiaries);

    Result<JournalRecord> refund_escrow(const std::string& lock_id,
                                        const std::optional<ChainProof>& chain_proof);

    bool verify_settlement_proof(const SettlementProof& proof) const;

    Result<FundFlow> trace(const std::string& tx_id) const;

    // Owner or the registering bank only; everyone else (including the
    // platform) gets Unauthorized.
    Result<Amount> query_balance(const std::string& wallet_id, const Certificate& caller) const;
    Result<std::vector<JournalRecord>> query_history(const std::string& wallet_id,
                                                     const Certificate& caller) const;

    Result<JournalRecord> redeem(const std::string& wallet_id, Amount amount,
                                 const Certificate& caller);

    ConservationTotals conservation() const;
    std::map<std::string, Amount> balances() const;  // real wallets only

    std::optional<EscrowLock> find_lock(const std::string& tx_id, LockPurpose purpose) const;
    std::optional<EscrowLock> lock_by_id(const std::string& lock_id) const;
    std::vector<EscrowLock> locks() const;
    std::optional<SettlementProof> find_proof(const std::string& tx_id,
                                              LockPurpose purpose) const;
    std::vector<JournalRecord> journal() const;
    std::map<std::uint64_t, BlockHeader> headers() const;
    std::size_t shard_count() const { return shards_.size(); }
    std::uint32_t commission_rate_bp() const { return commission_rate_bp_; }

    static std::string lock_wallet_name(const std::string& lock_id) { return "lock:" + lock_id; }
    static bool is_lock_wallet(const std::string& wallet_id) {
        return wallet_id.rfind("lock:", 0) == 0;
    }

private:
    struct Shard {
        std::map<Hash32, FundNote> unspent;
        std::set<Hash32> phase1;  // notes reserved by an in-flight transfer
        mutable std::mutex mu;
    };

    Shard& shard_of(const Hash32& note_id) { return *shards_[note_id[0] % shards_.size()]; }
    const Shard& shard_of(const Hash32& note_id) const {
        return *shards_[note_id[0] % shards_.size()];
    }

    // Callers hold commit_mu_.
    void insert_note(const FundNote& note);
    void remove_note(const Hash32& note_id);
    std::optional<Bytes> bank_public_key(const std::string& bank_id) const;
    Result<std::vector<Hash32>> select_notes(const std::string& wallet_id, Amount amount,
                                             Amount& total) const;
    Status check_release_predicate(const EscrowLock& lock, const ChainProof& proof,
                                   bool for_refund) const;
    std::vector<FundNote> consume_lock(EscrowLock& lock,
                                       const std::vector<std::pair<std::string, Amount>>& outputs,
                                       const std::string& tag);

    std::vector<std::unique_ptr<Shard>> shards_;
    const WalletRegistry* registry_;
    TrustStore trust_;
    std::uint32_t commission_rate_bp_;

    mutable std::mutex commit_mu_;
    std::map<std::string, std::set<Hash32>> wallet_notes_;  // spendable index
    std::set<Hash32> spent_;
    std::map<std::string, EscrowLock> locks_;
    std::map<std::string, SettlementProof> proofs_;
    std::map<std::uint64_t, BlockHeader> headers_;
    std::vector<JournalRecord> journal_;
    std::map<std::string, Actor> banks_;
    Amount minted_ = 0;
    Amount redeemed_ = 0;
    std::uint64_t mint_seq_ = 0;
};

}  // namespace spay
