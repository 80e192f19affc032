#include <spay/chain.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>

namespace spay {

const char* to_string(OpKind k) {
    switch (k) {
        case OpKind::SubmitProposal: return "SubmitProposal";
        case OpKind::SubmitEndorsement: return "SubmitEndorsement";
        case OpKind::CourierAttest: return "CourierAttest";
        case OpKind::BuyerConfirm: return "BuyerConfirm";
        case OpKind::DisputeOpen: return "DisputeOpen";
        case OpKind::DisputeResolve: return "DisputeResolve";
        case OpKind::ContractUpdate: return "ContractUpdate";
    }
    return "Unknown";
}

Bytes ChainOp::signing_bytes() const {
    Encoder e;
    e.u8(static_cast<std::uint8_t>(kind));
    e.str(tx_id);
    e.bytes(payload);
    return e.move();
}

Bytes ChainOp::serialize() const {
    Encoder e;
    e.u8(static_cast<std::uint8_t>(kind));
    e.str(tx_id);
    e.bytes(payload);
    e.bytes(submitter_cert.serialize());
    e.bytes(signature);
    return e.move();
}

std::optional<ChainOp> ChainOp::deserialize(const Bytes& buf) {
    try {
        Decoder d(buf);
        ChainOp op;
        op.kind = static_cast<OpKind>(d.u8());
        op.tx_id = d.str();
        op.payload = d.bytes();
        auto cert = Certificate::deserialize(d.bytes());
        if (!cert) return std::nullopt;
        op.submitter_cert = *cert;
        op.signature = d.bytes();
        if (!d.done()) return std::nullopt;
        return op;
    } catch (const std::out_of_range&) {
        return std::nullopt;
    }
}

Hash32 ChainOp::digest() const { return crypto::sha256(serialize()); }

std::string ChainOp::dedup_key() const {
    return std::to_string(static_cast<int>(kind)) + "|" + tx_id + "|" +
           submitter_cert.subject_id;
}

ChainOp make_op(const Actor& submitter, OpKind kind, const std::string& tx_id, Bytes payload) {
    ChainOp op;
    op.kind = kind;
    op.tx_id = tx_id;
    op.payload = std::move(payload);
    op.submitter_cert = submitter.cert;
    op.signature = crypto::sign(submitter.keys.secret_key, op.signing_bytes());
    return op;
}

Bytes encode_buyer_confirm(BuyerDecision decision) {
    Encoder e;
    e.u8(static_cast<std::uint8_t>(decision));
    return e.move();
}

std::optional<BuyerDecision> decode_buyer_confirm(const Bytes& payload) {
    try {
        Decoder d(payload);
        auto v = static_cast<BuyerDecision>(d.u8());
        if (!d.done()) return std::nullopt;
        if (v != BuyerDecision::Confirmed && v != BuyerDecision::Null) return std::nullopt;
        return v;
    } catch (const std::out_of_range&) {
        return std::nullopt;
    }
}

Bytes encode_dispute_open(const std::optional<PaymentToken>& buyer_token,
                          const std::optional<PaymentToken>& courier_token) {
    Encoder e;
    e.bytes(buyer_token ? buyer_token->serialize() : Bytes{});
    e.bytes(courier_token ? courier_token->serialize() : Bytes{});
    return e.move();
}

bool decode_dispute_open(const Bytes& payload, std::optional<PaymentToken>& buyer_token,
                         std::optional<PaymentToken>& courier_token) {
    try {
        Decoder d(payload);
        Bytes b = d.bytes();
        Bytes c = d.bytes();
        if (!d.done()) return false;
        buyer_token = b.empty() ? std::nullopt : PaymentToken::deserialize(b);
        courier_token = c.empty() ? std::nullopt : PaymentToken::deserialize(c);
        return true;
    } catch (const std::out_of_range&) {
        return false;
    }
}

Bytes encode_dispute_resolve(DisputeWinner winner) {
    Encoder e;
    e.u8(static_cast<std::uint8_t>(winner));
    return e.move();
}

std::optional<DisputeWinner> decode_dispute_resolve(const Bytes& payload) {
    try {
        Decoder d(payload);
        auto v = static_cast<DisputeWinner>(d.u8());
        if (!d.done()) return std::nullopt;
        if (v != DisputeWinner::Buyer && v != DisputeWinner::Courier) return std::nullopt;
        return v;
    } catch (const std::out_of_range&) {
        return std::nullopt;
    }
}

namespace {

Hash32 hash_pair(const Hash32& a, const Hash32& b) {
    Bytes buf;
    buf.reserve(64);
    buf.insert(buf.end(), a.begin(), a.end());
    buf.insert(buf.end(), b.begin(), b.end());
    return crypto::sha256(buf);
}

}  // namespace

Hash32 merkle_root(const std::vector<Hash32>& leaves) {
    if (leaves.empty()) return Hash32{};
    std::vector<Hash32> level = leaves;
    while (level.size() > 1) {
        if (level.size() % 2 != 0) level.push_back(level.back());
        std::vector<Hash32> next;
        next.reserve(level.size() / 2);
        for (std::size_t i = 0; i < level.size(); i += 2)
            next.push_back(hash_pair(level[i], level[i + 1]));
        level = std::move(next);
    }
    return level[0];
}

std::vector<Hash32> merkle_path(const std::vector<Hash32>& leaves, std::size_t index) {
    std::vector<Hash32> path;
    std::vector<Hash32> level = leaves;
    std::size_t pos = index;
    while (level.size() > 1) {
        if (level.size() % 2 != 0) level.push_back(level.back());
        std::size_t sibling = pos ^ 1;
        path.push_back(level[sibling]);
        std::vector<Hash32> next;
        next.reserve(level.size() / 2);
        for (std::size_t i = 0; i < level.size(); i += 2)
            next.push_back(hash_pair(level[i], level[i + 1]));
        level = std::move(next);
        pos /= 2;
    }
    return path;
}

bool merkle_verify(const Hash32& leaf, std::size_t index, const std::vector<Hash32>& path,
                   const Hash32& root) {
    Hash32 acc = leaf;
    std::size_t pos = index;
    for (const Hash32& sibling : path) {
        acc = (pos % 2 == 0) ? hash_pair(acc, sibling) : hash_pair(sibling, acc);
        pos /= 2;
    }
    return acc == root;
}

Bytes Block::header_bytes() const {
    Encoder e;
    e.u64(height);
    e.hash(prev_hash);
    e.hash(ops_root);
    return e.move();
}

Hash32 Block::compute_hash() const { return crypto::sha256(header_bytes()); }

Hash32 Block::compute_ops_root() const {
    std::vector<Hash32> leaves;
    leaves.reserve(ops.size());
    for (const auto& op : ops) leaves.push_back(op.digest());
    return merkle_root(leaves);
}

Bytes Block::serialize() const {
    Encoder e;
    e.u64(height);
    e.hash(prev_hash);
    e.hash(ops_root);
    e.hash(block_hash);
    e.u32(static_cast<std::uint32_t>(ops.size()));
    for (const auto& op : ops) e.bytes(op.serialize());
    return e.move();
}

std::optional<Block> Block::deserialize(const Bytes& buf) {
    try {
        Decoder d(buf);
        Block b;
        b.height = d.u64();
        b.prev_hash = d.hash();
        b.ops_root = d.hash();
        b.block_hash = d.hash();
        std::uint32_t n = d.u32();
        b.ops.reserve(n);
        for (std::uint32_t i = 0; i < n; ++i) {
            auto op = ChainOp::deserialize(d.bytes());
            if (!op) return std::nullopt;
            b.ops.push_back(*op);
        }
        if (!d.done()) return std::nullopt;
        return b;
    } catch (const std::out_of_range&) {
        return std::nullopt;
    }
}

Bytes ChainProof::serialize() const {
    Encoder e;
    e.u64(height);
    e.hash(block_hash);
    e.bytes(op_bytes);
    e.u32(op_index);
    e.u32(static_cast<std::uint32_t>(path.size()));
    for (const auto& h : path) e.hash(h);
    return e.move();
}

std::optional<ChainProof> ChainProof::deserialize(const Bytes& buf) {
    try {
        Decoder d(buf);
        ChainProof p;
        p.height = d.u64();
        p.block_hash = d.hash();
        p.op_bytes = d.bytes();
        p.op_index = d.u32();
        std::uint32_t n = d.u32();
        p.path.reserve(n);
        for (std::uint32_t i = 0; i < n; ++i) p.path.push_back(d.hash());
        if (!d.done()) return std::nullopt;
        return p;
    } catch (const std::out_of_range&) {
        return std::nullopt;
    }
}

Bytes WorldState::serialize() const {
    Encoder e;
    e.u64(height);
    e.u32(static_cast<std::uint32_t>(contracts.size()));
    for (const auto& [tx, contract] : contracts) {
        e.str(tx);
        e.bytes(contract.serialize());
    }
    e.u32(static_cast<std::uint32_t>(op_logs.size()));
    for (const auto& [tx, ops] : op_logs) {
        e.str(tx);
        e.u32(static_cast<std::uint32_t>(ops.size()));
        for (const auto& op : ops) e.bytes(op.serialize());
    }
    return e.move();
}

Hash32 WorldState::digest() const { return crypto::sha256(serialize()); }

Chain::Chain(ChainConfig config, TrustStore trust, EngineConfig engine_config)
    : config_(config), trust_(std::move(trust)), engine_(std::move(engine_config)) {}

Result<SubmitAck> Chain::submit(const ChainOp& op, std::uint64_t now_ms) {
    std::lock_guard lock(mu_);
    if (!trust_.verify(op.submitter_cert)) return Err::UnknownCertificate;
    if (!crypto::verify(op.submitter_cert.public_key, op.signing_bytes(), op.signature))
        return Err::InvalidSignature;
    if (!seen_keys_.insert(op.dedup_key()).second) return Err::DuplicateOp;

    mempool_.push_back(Pending{op, now_ms, submit_seq_++});
    return SubmitAck{op.tx_id, mempool_.size() - 1};
}

bool Chain::cut_due(std::uint64_t now_ms) const {
    std::lock_guard lock(mu_);
    if (mempool_.empty()) return false;
    return mempool_.size() >= config_.batch_size ||
           now_ms >= last_cut_ms_ + config_.block_timer_ms;
}

Result<Block> Chain::cut_block(std::uint64_t now_ms) {
    std::lock_guard lock(mu_);
    if (mempool_.empty()) return Err::EmptyMempool;

    std::size_t take = std::min(config_.batch_size, mempool_.size());
    std::vector<Pending> chosen(mempool_.begin(), mempool_.begin() + take);
    mempool_.erase(mempool_.begin(), mempool_.begin() + take);

    // FIFO by arrival; ops landing in the same scheduler tick order by
    // (tx_id, kind, submitter) so block contents are deterministic.
    std::stable_sort(chosen.begin(), chosen.end(), [](const Pending& a, const Pending& b) {
        if (a.arrival_ms != b.arrival_ms) return a.arrival_ms < b.arrival_ms;
        if (a.op.tx_id != b.op.tx_id) return a.op.tx_id < b.op.tx_id;
        if (a.op.kind != b.op.kind) return a.op.kind < b.op.kind;
        return a.op.submitter_cert.subject_id < b.op.submitter_cert.subject_id;
    });

    Block block;
    block.height = blocks_.size();
    block.prev_hash = blocks_.empty() ? Hash32{} : blocks_.back().block_hash;
    for (auto& p : chosen) block.ops.push_back(std::move(p.op));
    block.ops_root = block.compute_ops_root();
    block.block_hash = block.compute_hash();

    for (std::uint32_t i = 0; i < block.ops.size(); ++i)
        apply_op(world_, block.ops[i], block.height, now_ms, i);
    world_.height = block.height + 1;

    blocks_.push_back(block);
    last_cut_ms_ = now_ms;
    return block;
}

void Chain::apply_op(WorldState& world, const ChainOp& op, std::uint64_t height,
                     std::uint64_t now_ms, std::uint32_t op_index) {
    CommitEvent ev;
    ev.height = height;
    ev.time_ms = now_ms;
    ev.op_index = op_index;
    ev.op = op;
    fold_op(engine_, world, op, now_ms, ev);
    if (ev.accepted) world.op_logs[op.tx_id].push_back(op);
    events_.push_back(std::move(ev));
}

void Chain::fold_op(const ContractEngine& engine, WorldState& world, const ChainOp& op,
                    std::uint64_t now_ms, CommitEvent& ev) {
    (void)now_ms;
    auto fail = [&](Err e) {
        ev.accepted = false;
        ev.error = e;
    };
    auto done = [&](ContractState s) {
        ev.accepted = true;
        ev.state = s;
    };

    switch (op.kind) {
        case OpKind::SubmitProposal: {
            auto proposal = TransactionProposal::deserialize(op.payload);
            if (!proposal || proposal->tx_id != op.tx_id) return fail(Err::InvalidSignature);
            auto r = engine.propose(world.contracts, *proposal, op.submitter_cert);
            if (!r.ok()) return fail(r.error());
            return done(ContractState::Endorsing);
        }
        case OpKind::SubmitEndorsement: {
            auto endorsement = Endorsement::deserialize(op.payload);
            if (!endorsement || endorsement->tx_id != op.tx_id) return fail(Err::InvalidSignature);
            auto r = engine.record_endorsement(world.contracts, *endorsement,
                                                       ev.instructions);
            if (!r.ok()) return fail(r.error());
            return done(r.value());
        }
        case OpKind::CourierAttest: {
            auto r = engine.courier_attest(world.contracts, op.tx_id, op.submitter_cert);
            if (!r.ok()) return fail(r.error());
            return done(r.value());
        }
        case OpKind::BuyerConfirm: {
            auto decision = decode_buyer_confirm(op.payload);
            if (!decision) return fail(Err::InvalidSignature);
            auto r = engine.buyer_confirm(world.contracts, op.tx_id, *decision,
                                                  op.submitter_cert, ev.instructions);
            if (!r.ok()) return fail(r.error());
            return done(r.value());
        }
        case OpKind::DisputeOpen: {
            std::optional<PaymentToken> buyer_token, courier_token;
            if (!decode_dispute_open(op.payload, buyer_token, courier_token))
                return fail(Err::MissingDeposit);
            auto r = engine.open_dispute(world.contracts, op.tx_id, buyer_token,
                                                 courier_token, op.submitter_cert);
            if (!r.ok()) return fail(r.error());
            return done(r.value());
        }
        case OpKind::DisputeResolve: {
            auto winner = decode_dispute_resolve(op.payload);
            if (!winner) return fail(Err::WrongPhase);
            auto r = engine.resolve_dispute(world.contracts, op.tx_id, *winner,
                                                    op.submitter_cert, ev.instructions);
            if (!r.ok()) return fail(r.error());
            return done(r.value());
        }
        case OpKind::ContractUpdate: {
            auto update = ContractUpdate::deserialize(op.payload);
            if (!update) return fail(Err::WrongPhase);
            auto r = engine.apply_update(world.contracts, op.tx_id, *update,
                                                 op.submitter_cert, ev.instructions);
            if (!r.ok()) return fail(r.error());
            return done(r.value());
        }
    }
    fail(Err::NotFound);
}

Result<EscrowContract> Chain::query_state(const std::string& tx_id) const {
    std::lock_guard lock(mu_);
    auto it = world_.contracts.find(tx_id);
    if (it == world_.contracts.end()) return Err::NotFound;
    return it->second;
}

std::vector<CommitEvent> Chain::poll_commits(std::size_t& cursor) const {
    std::lock_guard lock(mu_);
    std::vector<CommitEvent> out;
    while (cursor < events_.size()) out.push_back(events_[cursor++]);
    return out;
}

std::vector<BlockHeader> Chain::headers() const {
    std::lock_guard lock(mu_);
    std::vector<BlockHeader> out;
    out.reserve(blocks_.size());
    for (const auto& b : blocks_)
        out.push_back(BlockHeader{b.height, b.block_hash, b.prev_hash, b.ops_root});
    return out;
}

std::size_t Chain::mempool_size() const {
    std::lock_guard lock(mu_);
    return mempool_.size();
}

ChainProof Chain::make_proof(std::uint64_t height, std::uint32_t op_index) const {
    std::lock_guard lock(mu_);
    const Block& b = blocks_.at(height);
    std::vector<Hash32> leaves;
    leaves.reserve(b.ops.size());
    for (const auto& op : b.ops) leaves.push_back(op.digest());

    ChainProof p;
    p.height = height;
    p.block_hash = b.block_hash;
    p.op_bytes = b.ops.at(op_index).serialize();
    p.op_index = op_index;
    p.path = merkle_path(leaves, op_index);
    return p;
}

Status Chain::save_log(const std::string& path) const {
    std::lock_guard lock(mu_);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) return Err::IoError;
    Encoder e;
    e.u8('S');
    e.u8('P');
    e.u8('A');
    e.u8('Y');
    e.u16(1);  // format version
    for (const auto& b : blocks_) e.bytes(b.serialize());
    const Bytes& buf = e.take();
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size()));
    return out.good() ? ok_status() : Status(Err::IoError);
}

Result<std::vector<Block>> Chain::load_log(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return Err::IoError;
    Bytes buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    try {
        Decoder d(buf);
        if (d.u8() != 'S' || d.u8() != 'P' || d.u8() != 'A' || d.u8() != 'Y') return Err::IoError;
        if (d.u16() != 1) return Err::IoError;
        std::vector<Block> out;
        while (!d.done()) {
            auto b = Block::deserialize(d.bytes());
            if (!b) return Err::IoError;
            out.push_back(*b);
        }
        return out;
    } catch (const std::out_of_range&) {
        return Err::IoError;
    }
}

bool Chain::verify_blocks(const std::vector<Block>& blocks) {
    Hash32 prev{};
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        const Block& b = blocks[i];
        if (b.height != i) return false;
        if (b.prev_hash != prev) return false;
        if (b.compute_ops_root() != b.ops_root) return false;
        if (b.compute_hash() != b.block_hash) return false;
        if (b.ops.empty()) return false;
        prev = b.block_hash;
    }
    return true;
}

WorldState Chain::replay(const std::vector<Block>& blocks, const EngineConfig& engine_config) {
    ContractEngine engine(engine_config);
    WorldState world;
    for (const auto& b : blocks) {
        for (std::uint32_t i = 0; i < b.ops.size(); ++i) {
            CommitEvent ev;
            fold_op(engine, world, b.ops[i], 0, ev);
            if (ev.accepted) world.op_logs[b.ops[i].tx_id].push_back(b.ops[i]);
        }
        world.height = b.height + 1;
    }
    return world;
}

}  // namespace spay
