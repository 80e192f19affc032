#include <spay/cbdc.hpp>

#include <algorithm>

namespace spay {

const char* to_string(JournalRecord::Kind k) {
    switch (k) {
        case JournalRecord::Kind::Mint: return "Mint";
        case JournalRecord::Kind::Transfer: return "Transfer";
        case JournalRecord::Kind::Lock: return "Lock";
        case JournalRecord::Kind::Release: return "Release";
        case JournalRecord::Kind::Refund: return "Refund";
        case JournalRecord::Kind::Redeem: return "Redeem";
    }
    return "Unknown";
}

Bytes TransferIntent::signing_bytes() const {
    Encoder e;
    e.str(from_wallet);
    e.u32(static_cast<std::uint32_t>(inputs.size()));
    for (const auto& n : inputs) e.hash(n);
    e.u32(static_cast<std::uint32_t>(outputs.size()));
    for (const auto& [owner, amount] : outputs) {
        e.str(owner);
        e.i64(amount);
    }
    return e.move();
}

TransferIntent make_transfer_intent(const std::string& from_wallet, std::vector<Hash32> inputs,
                                    std::vector<std::pair<std::string, Amount>> outputs,
                                    const crypto::KeyPair& keys) {
    TransferIntent intent;
    intent.from_wallet = from_wallet;
    intent.inputs = std::move(inputs);
    intent.outputs = std::move(outputs);
    intent.signature = crypto::sign(keys.secret_key, intent.signing_bytes());
    return intent;
}

Bytes SettlementProof::signing_bytes() const {
    Encoder e;
    e.str(proof_id);
    e.str(tx_id);
    e.str(lock_id);
    e.u32(static_cast<std::uint32_t>(outputs.size()));
    for (const auto& [owner, amount] : outputs) {
        e.str(owner);
        e.i64(amount);
    }
    e.u64(block_height);
    e.bytes(evidence.serialize());
    e.str(bank_id);
    return e.move();
}

Bytes SettlementProof::serialize() const {
    Bytes body = signing_bytes();
    Encoder e;
    e.bytes(body);
    e.bytes(bank_signature);
    return e.move();
}

std::optional<SettlementProof> SettlementProof::deserialize(const Bytes& buf) {
    try {
        Decoder outer(buf);
        Bytes body = outer.bytes();
        Bytes sig = outer.bytes();
        if (!outer.done()) return std::nullopt;

        Decoder d(body);
        SettlementProof p;
        p.proof_id = d.str();
        p.tx_id = d.str();
        p.lock_id = d.str();
        std::uint32_t n = d.u32();
        for (std::uint32_t i = 0; i < n; ++i) {
            std::string owner = d.str();
            Amount amount = d.i64();
            p.outputs.emplace_back(std::move(owner), amount);
        }
        p.block_height = d.u64();
        auto ev = ChainProof::deserialize(d.bytes());
        if (!ev) return std::nullopt;
        p.evidence = *ev;
        p.bank_id = d.str();
        if (!d.done()) return std::nullopt;
        p.bank_signature = std::move(sig);
        return p;
    } catch (const std::out_of_range&) {
        return std::nullopt;
    }
}

Bytes JournalRecord::serialize() const {
    Encoder e;
    e.u8(static_cast<std::uint8_t>(kind));
    e.str(tx_id);
    e.str(lock_id);
    e.u8(static_cast<std::uint8_t>(purpose));
    e.str(wallet);
    e.i64(amount);
    e.u32(static_cast<std::uint32_t>(inputs.size()));
    for (const auto& n : inputs) e.hash(n);
    e.u32(static_cast<std::uint32_t>(outputs.size()));
    for (const auto& [owner, amt] : outputs) {
        e.str(owner);
        e.i64(amt);
    }
    e.str(proof_id);
    return e.move();
}

namespace {

std::string derive_lock_id(const std::string& tx_id, LockPurpose purpose,
                           const std::string& wallet) {
    Encoder e;
    e.str(tx_id);
    e.u8(static_cast<std::uint8_t>(purpose));
    e.str(wallet);
    return to_hex(crypto::sha256(e.take())).substr(0, 24);
}

std::string derive_proof_id(const std::string& tx_id, const std::string& lock_id,
                            const std::vector<std::pair<std::string, Amount>>& outputs,
                            std::uint64_t height) {
    Encoder e;
    e.str(tx_id);
    e.str(lock_id);
    e.u32(static_cast<std::uint32_t>(outputs.size()));
    for (const auto& [owner, amount] : outputs) {
        e.str(owner);
        e.i64(amount);
    }
    e.u64(height);
    return to_hex(crypto::sha256(e.take())).substr(0, 24);
}

Hash32 derive_note_id(const char* tag, const Bytes& context, std::uint32_t index, Amount amount,
                      const std::string& owner) {
    Encoder e;
    e.str(tag);
    e.bytes(context);
    e.u32(index);
    e.i64(amount);
    e.str(owner);
    return crypto::sha256(e.take());
}

// The committed op a proof cites must actually authorize the movement the
// lock performs. Returns the multiset of expected output amounts, or
// nullopt when the op does not satisfy the lock's predicate.
std::optional<std::vector<Amount>> expected_amounts(const EscrowLock& lock, const ChainOp& op,
                                                    std::uint32_t commission_rate_bp,
                                                    bool for_refund) {
    if (op.tx_id != lock.tx_id) return std::nullopt;

    if (for_refund) {
        if (lock.purpose != LockPurpose::Escrow) return std::nullopt;
        // Rejected contracts reach Refunded through a bank-recorded
        // RefundDone update; buyer-won disputes refund off the resolve op.
        bool refund_recorded = op.kind == OpKind::ContractUpdate && [&] {
            auto u = ContractUpdate::deserialize(op.payload);
            return u && u->kind == UpdateKind::RefundDone;
        }();
        bool buyer_won = op.kind == OpKind::DisputeResolve &&
                         decode_dispute_resolve(op.payload) == DisputeWinner::Buyer;
        if (!refund_recorded && !buyer_won) return std::nullopt;
        return std::vector<Amount>{lock.amount};
    }

    switch (lock.purpose) {
        case LockPurpose::Escrow: {
            bool confirmed = op.kind == OpKind::BuyerConfirm &&
                             decode_buyer_confirm(op.payload) == BuyerDecision::Confirmed;
            bool courier_won = op.kind == OpKind::DisputeResolve &&
                               decode_dispute_resolve(op.payload) == DisputeWinner::Courier;
            if (!confirmed && !courier_won) return std::nullopt;
            auto split = settlement_split(lock.amount, commission_rate_bp);
            std::vector<Amount> expected;
            if (split.merchant_amount > 0) expected.push_back(split.merchant_amount);
            if (split.platform_amount > 0) expected.push_back(split.platform_amount);
            return expected;
        }
        case LockPurpose::BuyerDeposit:
        case LockPurpose::CourierDeposit: {
            std::optional<DisputeWinner> winner;
            if (op.kind == OpKind::DisputeResolve) winner = decode_dispute_resolve(op.payload);
            if (!winner) return std::nullopt;
            bool winners_own = (lock.purpose == LockPurpose::BuyerDeposit &&
                                *winner == DisputeWinner::Buyer) ||
                               (lock.purpose == LockPurpose::CourierDeposit &&
                                *winner == DisputeWinner::Courier);
            std::vector<Amount> expected;
            if (winners_own) {
                expected.push_back(lock.amount);
            } else {
                Amount half = lock.amount / 2;
                if (half > 0) expected.push_back(half);
                expected.push_back(lock.amount - half);
            }
            return expected;
        }
    }
    return std::nullopt;
}

bool amounts_match(const std::vector<Amount>& expected,
                   const std::vector<std::pair<std::string, Amount>>& outputs) {
    std::vector<Amount> got;
    got.reserve(outputs.size());
    for (const auto& [owner, amount] : outputs) got.push_back(amount);
    std::vector<Amount> want = expected;
    std::sort(got.begin(), got.end());
    std::sort(want.begin(), want.end());
    return got == want;
}

bool evidence_checks_out(const ChainProof& proof,
                         const std::map<std::uint64_t, BlockHeader>& headers, ChainOp& op_out) {
    auto it = headers.find(proof.height);
    if (it == headers.end()) return false;
    const BlockHeader& header = it->second;
    if (header.block_hash != proof.block_hash) return false;
    Hash32 leaf = crypto::sha256(proof.op_bytes);
    if (!merkle_verify(leaf, proof.op_index, proof.path, header.ops_root)) return false;
    auto op = ChainOp::deserialize(proof.op_bytes);
    if (!op) return false;
    op_out = std::move(*op);
    return true;
}

}  // namespace

bool verify_proof_record(
    const SettlementProof& proof, const std::vector<JournalRecord>& journal,
    const std::map<std::uint64_t, BlockHeader>& headers, std::uint32_t commission_rate_bp,
    const std::function<std::optional<Bytes>(const std::string&)>& bank_key) {
    auto pk = bank_key(proof.bank_id);
    if (!pk) return false;
    if (!crypto::verify(*pk, proof.signing_bytes(), proof.bank_signature)) return false;
    if (proof.proof_id !=
        derive_proof_id(proof.tx_id, proof.lock_id, proof.outputs, proof.block_height))
        return false;
    if (proof.block_height != proof.evidence.height) return false;

    // The journal must contain both the lock funding and this exact release.
    const JournalRecord* lock_rec = nullptr;
    const JournalRecord* release_rec = nullptr;
    for (const auto& rec : journal) {
        if (rec.kind == JournalRecord::Kind::Lock && rec.lock_id == proof.lock_id)
            lock_rec = &rec;
        if (rec.kind == JournalRecord::Kind::Release && rec.proof_id == proof.proof_id)
            release_rec = &rec;
    }
    if (!lock_rec || !release_rec) return false;
    if (lock_rec->tx_id != proof.tx_id) return false;
    if (release_rec->lock_id != proof.lock_id || release_rec->outputs != proof.outputs)
        return false;

    ChainOp op;
    if (!evidence_checks_out(proof.evidence, headers, op)) return false;

    EscrowLock lock;
    lock.lock_id = proof.lock_id;
    lock.tx_id = lock_rec->tx_id;
    lock.purpose = lock_rec->purpose;
    lock.amount = lock_rec->amount;
    auto expected = expected_amounts(lock, op, commission_rate_bp, /*for_refund=*/false);
    if (!expected) return false;
    return amounts_match(*expected, proof.outputs);
}

CbdcLedger::CbdcLedger(std::size_t shard_count, const WalletRegistry* registry, TrustStore trust,
                       std::uint32_t commission_rate_bp)
    : registry_(registry), trust_(std::move(trust)), commission_rate_bp_(commission_rate_bp) {
    if (shard_count == 0) shard_count = 1;
    for (std::size_t i = 0; i < shard_count; ++i) shards_.push_back(std::make_unique<Shard>());
}

void CbdcLedger::add_bank(const Actor& bank) {
    std::lock_guard lock(commit_mu_);
    banks_[bank.id] = bank;
}

void CbdcLedger::put_header(const BlockHeader& header) {
    std::lock_guard lock(commit_mu_);
    headers_[header.height] = header;
}

void CbdcLedger::insert_note(const FundNote& note) {
    Shard& shard = shard_of(note.note_id);
    {
        std::lock_guard lock(shard.mu);
        shard.unspent[note.note_id] = note;
    }
    wallet_notes_[note.owner].insert(note.note_id);
}

void CbdcLedger::remove_note(const Hash32& note_id) {
    Shard& shard = shard_of(note_id);
    std::string owner;
    {
        std::lock_guard lock(shard.mu);
        auto it = shard.unspent.find(note_id);
        if (it == shard.unspent.end()) return;
        owner = it->second.owner;
        shard.unspent.erase(it);
        shard.phase1.erase(note_id);
    }
    auto wit = wallet_notes_.find(owner);
    if (wit != wallet_notes_.end()) {
        wit->second.erase(note_id);
        if (wit->second.empty()) wallet_notes_.erase(wit);
    }
    spent_.insert(note_id);
}

std::optional<Bytes> CbdcLedger::bank_public_key(const std::string& bank_id) const {
    auto cert = trust_.issuer(bank_id);
    if (cert && cert->role == Role::Bank) return cert->public_key;
    return std::nullopt;
}

Result<FundNote> CbdcLedger::mint(const std::string& wallet_id, Amount amount,
                                  const Certificate& caller) {
    if (caller.role != Role::CentralAuthority || !trust_.verify(caller))
        return Err::UnauthorizedMint;
    if (amount <= 0) return Err::ValueMismatch;

    std::lock_guard lock(commit_mu_);
    FundNote note;
    Encoder ctx;
    ctx.u64(mint_seq_++);
    note.note_id = derive_note_id("mint", ctx.take(), 0, amount, wallet_id);
    note.amount = amount;
    note.owner = wallet_id;
    insert_note(note);
    minted_ += amount;

    JournalRecord rec;
    rec.kind = JournalRecord::Kind::Mint;
    rec.wallet = wallet_id;
    rec.amount = amount;
    rec.outputs.emplace_back(wallet_id, amount);
    journal_.push_back(rec);
    return note;
}

Result<std::vector<FundNote>> CbdcLedger::transfer_2pc(const TransferIntent& intent) {
    if (intent.inputs.empty()) return Err::UnknownNote;
    for (const auto& [owner, amount] : intent.outputs)
        if (amount <= 0) return Err::ValueMismatch;

    auto signer_pk = registry_ ? registry_->wallet_public_key(intent.from_wallet) : std::nullopt;
    if (!signer_pk) return Err::Unauthorized;
    if (!crypto::verify(*signer_pk, intent.signing_bytes(), intent.signature))
        return Err::InvalidSignature;

    // Phase 1: reserve inputs shard by shard in canonical note order.
    std::vector<Hash32> order = intent.inputs;
    std::sort(order.begin(), order.end());
    if (std::adjacent_find(order.begin(), order.end()) != order.end()) return Err::DoubleSpend;

    std::vector<Hash32> acquired;
    acquired.reserve(order.size());
    Amount in_sum = 0;
    Err failure = Err::UnknownNote;
    bool failed = false;
    for (const auto& note_id : order) {
        Shard& shard = shard_of(note_id);
        std::lock_guard lock(shard.mu);
        auto it = shard.unspent.find(note_id);
        if (it == shard.unspent.end()) {
            failed = true;
            failure = Err::UnknownNote;  // refined against spent_ below
            break;
        }
        if (shard.phase1.count(note_id)) {
            failed = true;
            failure = Err::DoubleSpend;
            break;
        }
        if (it->second.owner != intent.from_wallet) {
            failed = true;
            failure = Err::Unauthorized;
            break;
        }
        shard.phase1.insert(note_id);
        acquired.push_back(note_id);
        in_sum += it->second.amount;
    }

    Amount out_sum = 0;
    for (const auto& [owner, amount] : intent.outputs) out_sum += amount;
    if (!failed && in_sum != out_sum) {
        failed = true;
        failure = Err::ValueMismatch;
    }

    if (failed) {
        for (const auto& note_id : acquired) {
            Shard& shard = shard_of(note_id);
            std::lock_guard lock(shard.mu);
            shard.phase1.erase(note_id);
        }
        if (failure == Err::UnknownNote) {
            std::lock_guard lock(commit_mu_);
            if (spent_.count(order.front()) ||
                std::any_of(order.begin(), order.end(),
                            [&](const Hash32& n) { return spent_.count(n); }))
                return Err::DoubleSpend;
        }
        return failure;
    }

    // Phase 2: the reserved notes are exclusively ours; apply atomically.
    std::lock_guard lock(commit_mu_);
    for (const auto& note_id : order) remove_note(note_id);

    Hash32 ctx_hash = crypto::sha256(intent.signing_bytes());
    Bytes context(ctx_hash.begin(), ctx_hash.end());
    std::vector<FundNote> created;
    for (std::uint32_t i = 0; i < intent.outputs.size(); ++i) {
        const auto& [owner, amount] = intent.outputs[i];
        FundNote note;
        note.note_id = derive_note_id("xfer", context, i, amount, owner);
        note.amount = amount;
        note.owner = owner;
        insert_note(note);
        created.push_back(note);
    }

    JournalRecord rec;
    rec.kind = JournalRecord::Kind::Transfer;
    rec.wallet = intent.from_wallet;
    rec.amount = in_sum;
    rec.inputs = order;
    rec.outputs = intent.outputs;
    journal_.push_back(rec);
    return created;
}

Result<std::vector<Hash32>> CbdcLedger::select_notes(const std::string& wallet_id, Amount amount,
                                                     Amount& total) const {
    auto it = wallet_notes_.find(wallet_id);
    if (it == wallet_notes_.end()) return Err::InsufficientFunds;
    std::vector<Hash32> picked;
    total = 0;
    for (const auto& note_id : it->second) {
        const Shard& shard = shard_of(note_id);
        std::lock_guard lock(shard.mu);
        auto nit = shard.unspent.find(note_id);
        if (nit == shard.unspent.end()) continue;
        picked.push_back(note_id);
        total += nit->second.amount;
        if (total >= amount) return picked;
    }
    return Err::InsufficientFunds;
}

Result<std::pair<EscrowLock, PaymentToken>> CbdcLedger::lock_escrow(const std::string& tx_id,
                                                                    const std::string& wallet_id,
                                                                    Amount amount,
                                                                    LockPurpose purpose) {
    if (amount <= 0) return Err::ValueMismatch;
    auto keys = registry_ ? registry_->custodial_keys(wallet_id) : std::nullopt;
    auto bank_id = registry_ ? registry_->bank_of(wallet_id) : std::nullopt;
    if (!keys || !bank_id) return Err::Unauthorized;

    const std::string lock_id = derive_lock_id(tx_id, purpose, wallet_id);
    std::vector<Hash32> picked;
    Amount picked_total = 0;
    {
        std::lock_guard lock(commit_mu_);
        auto existing = locks_.find(lock_id);
        if (existing != locks_.end()) {
            // Funds for this (tx, purpose, wallet) are already set aside;
            // re-issuing the token is harmless and charge-free.
            if (existing->second.consumed) return Err::LockConsumed;
            PaymentToken token;
            token.tx_id = tx_id;
            token.purpose = purpose;
            token.amount = existing->second.amount;
            token.lock_id = lock_id;
            token.bank_id = *bank_id;
            auto bit = banks_.find(*bank_id);
            if (bit == banks_.end()) return Err::Unauthorized;
            token.bank_signature =
                crypto::sign(bit->second.keys.secret_key, token.signing_bytes());
            return std::make_pair(existing->second, token);
        }
        auto sel = select_notes(wallet_id, amount, picked_total);
        if (!sel.ok()) return sel.error();
        picked = sel.value();
    }

    std::vector<std::pair<std::string, Amount>> outputs;
    outputs.emplace_back(lock_wallet_name(lock_id), amount);
    if (picked_total > amount) outputs.emplace_back(wallet_id, picked_total - amount);

    auto intent = make_transfer_intent(wallet_id, picked, outputs, *keys);
    auto moved = transfer_2pc(intent);
    if (!moved.ok()) return moved.error();

    std::lock_guard lock(commit_mu_);
    EscrowLock el;
    el.lock_id = lock_id;
    el.tx_id = tx_id;
    el.purpose = purpose;
    el.amount = amount;
    el.funded_from = wallet_id;
    for (const auto& note : moved.value())
        if (note.owner == lock_wallet_name(lock_id)) el.note_ids.push_back(note.note_id);
    locks_[lock_id] = el;

    PaymentToken token;
    token.tx_id = tx_id;
    token.purpose = purpose;
    token.amount = amount;
    token.lock_id = lock_id;
    token.bank_id = *bank_id;
    auto bit = banks_.find(*bank_id);
    if (bit == banks_.end()) return Err::Unauthorized;
    token.bank_signature = crypto::sign(bit->second.keys.secret_key, token.signing_bytes());

    JournalRecord rec;
    rec.kind = JournalRecord::Kind::Lock;
    rec.tx_id = tx_id;
    rec.lock_id = lock_id;
    rec.purpose = purpose;
    rec.wallet = wallet_id;
    rec.amount = amount;
    journal_.push_back(rec);
    return std::make_pair(el, token);
}

Result<std::vector<FundNote>> CbdcLedger::pay(const std::string& from_wallet,
                                              const std::string& to_wallet, Amount amount) {
    if (amount <= 0) return Err::ValueMismatch;
    auto keys = registry_ ? registry_->custodial_keys(from_wallet) : std::nullopt;
    if (!keys) return Err::Unauthorized;

    std::vector<Hash32> picked;
    Amount picked_total = 0;
    {
        std::lock_guard lock(commit_mu_);
        auto sel = select_notes(from_wallet, amount, picked_total);
        if (!sel.ok()) return sel.error();
        picked = sel.value();
    }
    std::vector<std::pair<std::string, Amount>> outputs;
    outputs.emplace_back(to_wallet, amount);
    if (picked_total > amount) outputs.emplace_back(from_wallet, picked_total - amount);
    return transfer_2pc(make_transfer_intent(from_wallet, picked, outputs, *keys));
}

Status CbdcLedger::check_release_predicate(const EscrowLock& lock, const ChainProof& proof,
                                           bool for_refund) const {
    ChainOp op;
    if (!evidence_checks_out(proof, headers_, op)) return Err::InvalidChainProof;
    if (!expected_amounts(lock, op, commission_rate_bp_, for_refund))
        return Err::InvalidChainProof;
    return ok_status();
}

std::vector<FundNote> CbdcLedger::consume_lock(
    EscrowLock& lock, const std::vector<std::pair<std::string, Amount>>& outputs,
    const std::string& tag) {
    for (const auto& note_id : lock.note_ids) remove_note(note_id);
    Encoder ctx;
    ctx.str(lock.lock_id);
    std::vector<FundNote> created;
    for (std::uint32_t i = 0; i < outputs.size(); ++i) {
        const auto& [owner, amount] = outputs[i];
        FundNote note;
        note.note_id = derive_note_id("rel", ctx.take(), i, amount, owner);
        note.amount = amount;
        note.owner = owner;
        insert_note(note);
        created.push_back(note);
    }
    lock.consumed = true;
    lock.consumed_by = tag;
    return created;
}

Result<SettlementProof> CbdcLedger::release_escrow(
    const std::string& lock_id, const std::optional<ChainProof>& chain_proof,
    const std::vector<std::pair<std::string, Amount>>& beneficiaries) {
    std::lock_guard lock_guard_(commit_mu_);
    auto it = locks_.find(lock_id);
    if (it == locks_.end()) return Err::NotFound;
    EscrowLock& lock = it->second;
    if (lock.consumed) return Err::LockConsumed;

    // The release predicate is the authority here. No proof, no release —
    // a bank signature alone never moves escrowed funds.
    if (!chain_proof) return Err::UnauthorizedRelease;
    auto pred = check_release_predicate(lock, *chain_proof, /*for_refund=*/false);
    if (!pred.ok()) return pred.error();

    Amount out_sum = 0;
    for (const auto& [owner, amount] : beneficiaries) {
        if (amount <= 0) return Err::ValueMismatch;
        out_sum += amount;
    }
    if (out_sum != lock.amount) return Err::ValueMismatch;

    auto bank_id = registry_ ? registry_->bank_of(lock.funded_from) : std::nullopt;
    if (!bank_id || !banks_.count(*bank_id)) return Err::Unauthorized;

    SettlementProof proof;
    proof.proof_id = derive_proof_id(lock.tx_id, lock_id, beneficiaries, chain_proof->height);
    proof.tx_id = lock.tx_id;
    proof.lock_id = lock_id;
    proof.outputs = beneficiaries;
    proof.block_height = chain_proof->height;
    proof.evidence = *chain_proof;
    proof.bank_id = *bank_id;
    proof.bank_signature =
        crypto::sign(banks_.at(*bank_id).keys.secret_key, proof.signing_bytes());

    consume_lock(lock, beneficiaries, proof.proof_id);
    proofs_[proof.proof_id] = proof;

    JournalRecord rec;
    rec.kind = JournalRecord::Kind::Release;
    rec.tx_id = lock.tx_id;
    rec.lock_id = lock_id;
    rec.purpose = lock.purpose;
    rec.wallet = lock.funded_from;
    rec.amount = lock.amount;
    rec.outputs = beneficiaries;
    rec.proof_id = proof.proof_id;
    journal_.push_back(rec);
    return proof;
}

Result<JournalRecord> CbdcLedger::refund_escrow(const std::string& lock_id,
                                                const std::optional<ChainProof>& chain_proof) {
    std::lock_guard lock_guard_(commit_mu_);
    auto it = locks_.find(lock_id);
    if (it == locks_.end()) return Err::NotFound;
    EscrowLock& lock = it->second;
    if (lock.consumed) return Err::LockConsumed;

    if (!chain_proof) return Err::UnauthorizedRelease;
    auto pred = check_release_predicate(lock, *chain_proof, /*for_refund=*/true);
    if (!pred.ok()) return pred.error();

    std::vector<std::pair<std::string, Amount>> outputs{{lock.funded_from, lock.amount}};
    consume_lock(lock, outputs, "refund");

    JournalRecord rec;
    rec.kind = JournalRecord::Kind::Refund;
    rec.tx_id = lock.tx_id;
    rec.lock_id = lock_id;
    rec.purpose = lock.purpose;
    rec.wallet = lock.funded_from;
    rec.amount = lock.amount;
    rec.outputs = outputs;
    journal_.push_back(rec);
    return rec;
}

bool CbdcLedger::verify_settlement_proof(const SettlementProof& proof) const {
    std::lock_guard lock(commit_mu_);
    return verify_proof_record(
        proof, journal_, headers_, commission_rate_bp_,
        [this](const std::string& bank_id) { return bank_public_key(bank_id); });
}

Result<FundFlow> CbdcLedger::trace(const std::string& tx_id) const {
    std::lock_guard lock(commit_mu_);
    const JournalRecord* lock_rec = nullptr;
    for (const auto& rec : journal_)
        if (rec.kind == JournalRecord::Kind::Lock && rec.tx_id == tx_id &&
            rec.purpose == LockPurpose::Escrow) {
            lock_rec = &rec;
            break;
        }
    if (!lock_rec) return Err::NotFound;

    FundFlow flow;
    flow.tx_id = tx_id;
    const std::string lock_node = lock_wallet_name(lock_rec->lock_id);

    for (const auto& rec : journal_)
        if (rec.kind == JournalRecord::Kind::Mint && rec.wallet == lock_rec->wallet) {
            flow.edges.push_back(FlowEdge{"mint", rec.wallet, rec.amount});
            break;
        }
    flow.edges.push_back(FlowEdge{lock_rec->wallet, lock_node, lock_rec->amount});

    Amount outflow = 0;
    bool consumed = false;
    for (const auto& rec : journal_) {
        if (rec.lock_id != lock_rec->lock_id) continue;
        if (rec.kind == JournalRecord::Kind::Release || rec.kind == JournalRecord::Kind::Refund) {
            consumed = true;
            for (const auto& [owner, amount] : rec.outputs) {
                flow.edges.push_back(FlowEdge{lock_node, owner, amount});
                outflow += amount;
            }
        }
    }
    flow.conserved = !consumed || outflow == lock_rec->amount;
    return flow;
}

Result<Amount> CbdcLedger::query_balance(const std::string& wallet_id,
                                         const Certificate& caller) const {
    std::lock_guard lock(commit_mu_);
    bool owner = WalletRegistry::wallet_id_for(caller.public_key) == wallet_id;
    bool their_bank = caller.role == Role::Bank && registry_ &&
                      registry_->bank_of(wallet_id) == caller.subject_id;
    if (!owner && !their_bank) return Err::Unauthorized;

    Amount total = 0;
    auto it = wallet_notes_.find(wallet_id);
    if (it != wallet_notes_.end()) {
        for (const auto& note_id : it->second) {
            const Shard& shard = shard_of(note_id);
            std::lock_guard slock(shard.mu);
            auto nit = shard.unspent.find(note_id);
            if (nit != shard.unspent.end()) total += nit->second.amount;
        }
    }
    return total;
}

Result<std::vector<JournalRecord>> CbdcLedger::query_history(const std::string& wallet_id,
                                                             const Certificate& caller) const {
    std::lock_guard lock(commit_mu_);
    bool owner = WalletRegistry::wallet_id_for(caller.public_key) == wallet_id;
    bool their_bank = caller.role == Role::Bank && registry_ &&
                      registry_->bank_of(wallet_id) == caller.subject_id;
    if (!owner && !their_bank) return Err::Unauthorized;

    std::vector<JournalRecord> out;
    for (const auto& rec : journal_) {
        bool touches = rec.wallet == wallet_id;
        for (const auto& [owner_id, amount] : rec.outputs)
            if (owner_id == wallet_id) touches = true;
        if (touches) out.push_back(rec);
    }
    return out;
}

Result<JournalRecord> CbdcLedger::redeem(const std::string& wallet_id, Amount amount,
                                         const Certificate& caller) {
    if (amount <= 0) return Err::ValueMismatch;
    if (WalletRegistry::wallet_id_for(caller.public_key) != wallet_id) return Err::Unauthorized;
    auto keys = registry_ ? registry_->custodial_keys(wallet_id) : std::nullopt;
    if (!keys) return Err::Unauthorized;

    std::lock_guard lock(commit_mu_);
    Amount picked_total = 0;
    auto sel = select_notes(wallet_id, amount, picked_total);
    if (!sel.ok()) return sel.error();

    for (const auto& note_id : sel.value()) remove_note(note_id);
    if (picked_total > amount) {
        FundNote change;
        Encoder ctx;
        ctx.u64(mint_seq_++);  // reuse the monotonic counter for uniqueness
        change.note_id = derive_note_id("chg", ctx.take(), 0, picked_total - amount, wallet_id);
        change.amount = picked_total - amount;
        change.owner = wallet_id;
        insert_note(change);
    }
    redeemed_ += amount;

    JournalRecord rec;
    rec.kind = JournalRecord::Kind::Redeem;
    rec.wallet = wallet_id;
    rec.amount = amount;
    rec.inputs = sel.value();
    journal_.push_back(rec);
    return rec;
}

ConservationTotals CbdcLedger::conservation() const {
    std::lock_guard lock(commit_mu_);
    ConservationTotals t;
    t.minted = minted_;
    t.redeemed = redeemed_;
    for (const auto& [wallet, notes] : wallet_notes_) {
        if (is_lock_wallet(wallet)) continue;
        for (const auto& note_id : notes) {
            const Shard& shard = shard_of(note_id);
            std::lock_guard slock(shard.mu);
            auto nit = shard.unspent.find(note_id);
            if (nit != shard.unspent.end()) t.spendable += nit->second.amount;
        }
    }
    for (const auto& [lock_id, lock] : locks_)
        if (!lock.consumed) t.locked += lock.amount;
    return t;
}

std::map<std::string, Amount> CbdcLedger::balances() const {
    std::lock_guard lock(commit_mu_);
    std::map<std::string, Amount> out;
    for (const auto& [wallet, notes] : wallet_notes_) {
        if (is_lock_wallet(wallet)) continue;
        Amount total = 0;
        for (const auto& note_id : notes) {
            const Shard& shard = shard_of(note_id);
            std::lock_guard slock(shard.mu);
            auto nit = shard.unspent.find(note_id);
            if (nit != shard.unspent.end()) total += nit->second.amount;
        }
        out[wallet] = total;
    }
    return out;
}

std::optional<EscrowLock> CbdcLedger::find_lock(const std::string& tx_id,
                                                LockPurpose purpose) const {
    std::lock_guard lock(commit_mu_);
    for (const auto& [lock_id, el] : locks_)
        if (el.tx_id == tx_id && el.purpose == purpose) return el;
    return std::nullopt;
}

std::optional<EscrowLock> CbdcLedger::lock_by_id(const std::string& lock_id) const {
    std::lock_guard lock(commit_mu_);
    auto it = locks_.find(lock_id);
    if (it == locks_.end()) return std::nullopt;
    return it->second;
}

std::vector<EscrowLock> CbdcLedger::locks() const {
    std::lock_guard lock(commit_mu_);
    std::vector<EscrowLock> out;
    out.reserve(locks_.size());
    for (const auto& [lock_id, el] : locks_) out.push_back(el);
    return out;
}

std::optional<SettlementProof> CbdcLedger::find_proof(const std::string& tx_id,
                                                      LockPurpose purpose) const {
    std::lock_guard lock(commit_mu_);
    for (const auto& [proof_id, proof] : proofs_) {
        auto lit = locks_.find(proof.lock_id);
        if (lit != locks_.end() && proof.tx_id == tx_id && lit->second.purpose == purpose)
            return proof;
    }
    return std::nullopt;
}

std::vector<JournalRecord> CbdcLedger::journal() const {
    std::lock_guard lock(commit_mu_);
    return journal_;
}

std::map<std::uint64_t, BlockHeader> CbdcLedger::headers() const {
    std::lock_guard lock(commit_mu_);
    return headers_;
}

}  // namespace spay
