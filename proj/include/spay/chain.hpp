#pragma once

// The permissioned ledger. A single logical sequencer: signed ops enter a
// FIFO mempool, get cut into blocks of at most batch_size, and fold into
// the world state through the contract engine. Commit events stream to
// cursor-based subscribers in block order, exactly once.

#include <spay/escrow.hpp>
#include <spay/identity.hpp>
#include <spay/result.hpp>

#include <cstdint>
#include <deque>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace spay {

enum class OpKind : std::uint8_t {
    SubmitProposal = 0,
    SubmitEndorsement = 1,
    CourierAttest = 2,
    BuyerConfirm = 3,
    DisputeOpen = 4,
    DisputeResolve = 5,
    ContractUpdate = 6,
};

const char* to_string(OpKind k);

struct ChainOp {
    OpKind kind = OpKind::SubmitProposal;
    std::string tx_id;
    Bytes payload;  // canonical bytes, schema per op_kind
    Certificate submitter_cert;
    Bytes signature;  // over signing_bytes(), by the submitter

    Bytes signing_bytes() const;
    Bytes serialize() const;
    static std::optional<ChainOp> deserialize(const Bytes& buf);
    Hash32 digest() const;  // sha256 of the full serialized op

    // Dedup key: one committed entry per (kind, tx, submitter).
    std::string dedup_key() const;
};

ChainOp make_op(const Actor& submitter, OpKind kind, const std::string& tx_id, Bytes payload);

// Payload constructors/parsers, one per op kind.
Bytes encode_buyer_confirm(BuyerDecision decision);
std::optional<BuyerDecision> decode_buyer_confirm(const Bytes& payload);
Bytes encode_dispute_open(const std::optional<PaymentToken>& buyer_token,
                          const std::optional<PaymentToken>& courier_token);
bool decode_dispute_open(const Bytes& payload, std::optional<PaymentToken>& buyer_token,
                         std::optional<PaymentToken>& courier_token);
Bytes encode_dispute_resolve(DisputeWinner winner);
std::optional<DisputeWinner> decode_dispute_resolve(const Bytes& payload);

// Merkle tree over op digests; odd layers duplicate the last node.
Hash32 merkle_root(const std::vector<Hash32>& leaves);
std::vector<Hash32> merkle_path(const std::vector<Hash32>& leaves, std::size_t index);
bool merkle_verify(const Hash32& leaf, std::size_t index, const std::vector<Hash32>& path,
                   const Hash32& root);

struct Block {
    std::uint64_t height = 0;
    Hash32 prev_hash{};
    Hash32 ops_root{};
    std::vector<ChainOp> ops;
    Hash32 block_hash{};

    Bytes header_bytes() const;  // enc(height, prev_hash, ops_root)
    Hash32 compute_hash() const;
    Hash32 compute_ops_root() const;
    Bytes serialize() const;
    static std::optional<Block> deserialize(const Bytes& buf);
};

struct BlockHeader {
    std::uint64_t height = 0;
    Hash32 block_hash{};
    Hash32 prev_hash{};
    Hash32 ops_root{};
};

// Self-contained evidence that an op committed: block header fields plus
// the full op bytes and its merkle inclusion path. Verifiable against a
// header view alone.
struct ChainProof {
    std::uint64_t height = 0;
    Hash32 block_hash{};
    Bytes op_bytes;
    std::uint32_t op_index = 0;
    std::vector<Hash32> path;

    Bytes serialize() const;
    static std::optional<ChainProof> deserialize(const Bytes& buf);
};

struct CommitEvent {
    std::uint64_t height = 0;
    std::uint64_t time_ms = 0;
    std::uint32_t op_index = 0;
    ChainOp op;
    bool accepted = false;
    Err error = Err::NotFound;  // meaningful when !accepted
    std::optional<ContractState> state;
    std::vector<Instruction> instructions;
};

struct WorldState {
    ContractStore contracts;
    std::map<std::string, std::vector<ChainOp>> op_logs;
    std::uint64_t height = 0;  // number of committed blocks

    Bytes serialize() const;  // canonical, sorted by tx_id
    Hash32 digest() const;
};

struct ChainConfig {
    std::size_t batch_size = 20;
    std::uint64_t block_timer_ms = 500;
};

struct SubmitAck {
    std::string tx_id;
    std::size_t mempool_position = 0;
};

class Chain {
public:
    Chain(ChainConfig config, TrustStore trust, EngineConfig engine_config);

    // Thread-safe; ordering and block cutting remain single-writer.
    Result<SubmitAck> submit(const ChainOp& op, std::uint64_t now_ms);

    // Cuts a block when the mempool is non-empty AND (it holds at least
    // batch_size ops OR the cut timer expired). EmptyMempool otherwise.
    bool cut_due(std::uint64_t now_ms) const;
    Result<Block> cut_block(std::uint64_t now_ms);

    Result<EscrowContract> query_state(const std::string& tx_id) const;

    // Cursor-based commit subscription: every committed op is delivered
    // exactly once per cursor, in block order.
    std::size_t subscribe_commits() const { return 0; }
    std::vector<CommitEvent> poll_commits(std::size_t& cursor) const;

    const std::vector<Block>& blocks() const { return blocks_; }
    const WorldState& world() const { return world_; }
    std::vector<BlockHeader> headers() const;
    std::size_t mempool_size() const;
    std::uint64_t last_cut_ms() const { return last_cut_ms_; }

    ChainProof make_proof(std::uint64_t height, std::uint32_t op_index) const;

    // Block log: magic "SPAY", version u16, length-prefixed block records.
    Status save_log(const std::string& path) const;
    static Result<std::vector<Block>> load_log(const std::string& path);

    // Recompute hashes and prev links; false on any mutation.
    static bool verify_blocks(const std::vector<Block>& blocks);

    // Deterministic fold of a block sequence into a fresh world state.
    static WorldState replay(const std::vector<Block>& blocks, const EngineConfig& engine_config);

    const ContractEngine& engine() const { return engine_; }

private:
    void apply_op(WorldState& world, const ChainOp& op, std::uint64_t height, std::uint64_t now_ms,
                  std::uint32_t op_index);
    static void fold_op(const ContractEngine& engine, WorldState& world, const ChainOp& op,
                        std::uint64_t now_ms, CommitEvent& ev);

    struct Pending {
        ChainOp op;
        std::uint64_t arrival_ms = 0;
        std::uint64_t seq = 0;
    };

    ChainConfig config_;
    TrustStore trust_;
    ContractEngine engine_;

    mutable std::mutex mu_;
    std::deque<Pending> mempool_;
    std::set<std::string> seen_keys_;  // dedup across mempool + committed
    std::uint64_t submit_seq_ = 0;
    std::uint64_t last_cut_ms_ = 0;

    std::vector<Block> blocks_;
    WorldState world_;
    std::vector<CommitEvent> events_;
};

}  // namespace spay
