#include <spay/escrow.hpp>

#include <algorithm>
#include <set>

namespace spay {

const char* to_string(ContractState s) {
    switch (s) {
        case ContractState::Proposed: return "Proposed";
        case ContractState::Endorsing: return "Endorsing";
        case ContractState::Locked: return "Locked";
        case ContractState::Delivered: return "Delivered";
        case ContractState::Disputed: return "Disputed";
        case ContractState::Confirmed: return "Confirmed";
        case ContractState::Settled: return "Settled";
        case ContractState::Rejected: return "Rejected";
        case ContractState::Refunded: return "Refunded";
    }
    return "Unknown";
}

const char* to_string(DisputeWinner w) {
    return w == DisputeWinner::Buyer ? "Buyer" : "Courier";
}

const char* to_string(Instruction::Kind k) {
    switch (k) {
        case Instruction::Kind::EnsureLock: return "EnsureLock";
        case Instruction::Kind::RecordRefund: return "RecordRefund";
        case Instruction::Kind::Refund: return "Refund";
        case Instruction::Kind::Settle: return "Settle";
        case Instruction::Kind::DisputePayout: return "DisputePayout";
    }
    return "Unknown";
}

bool is_absorbing(ContractState s) {
    return s == ContractState::Settled || s == ContractState::Refunded;
}

bool is_legal_transition(ContractState from, ContractState to) {
    using S = ContractState;
    switch (from) {
        case S::Proposed: return to == S::Endorsing;
        case S::Endorsing: return to == S::Locked || to == S::Rejected;
        case S::Locked: return to == S::Delivered;
        case S::Delivered: return to == S::Confirmed || to == S::Disputed;
        case S::Disputed: return to == S::Confirmed || to == S::Refunded;
        case S::Confirmed: return to == S::Settled;
        case S::Rejected: return to == S::Refunded;
        case S::Settled:
        case S::Refunded: return false;
    }
    return false;
}

Bytes TransactionProposal::signing_bytes() const {
    Encoder e;
    e.str(tx_id);
    e.str(product_id);
    e.i64(price);
    e.str(merchant_wallet);
    e.str(buyer_wallet);
    e.str(platform_id);
    return e.move();
}

Bytes TransactionProposal::serialize() const {
    Encoder e;
    e.str(tx_id);
    e.str(product_id);
    e.i64(price);
    e.str(merchant_wallet);
    e.str(buyer_wallet);
    e.str(platform_id);
    e.bytes(buyer_signature);
    return e.move();
}

std::optional<TransactionProposal> TransactionProposal::deserialize(const Bytes& buf) {
    try {
        Decoder d(buf);
        TransactionProposal p;
        p.tx_id = d.str();
        p.product_id = d.str();
        p.price = d.i64();
        p.merchant_wallet = d.str();
        p.buyer_wallet = d.str();
        p.platform_id = d.str();
        p.buyer_signature = d.bytes();
        if (!d.done()) return std::nullopt;
        return p;
    } catch (const std::out_of_range&) {
        return std::nullopt;
    }
}

Hash32 TransactionProposal::digest() const { return crypto::sha256(serialize()); }

Bytes Endorsement::signing_bytes() const {
    Encoder e;
    e.str(tx_id);
    e.u8(static_cast<std::uint8_t>(verdict));
    e.hash(proposal_digest);
    return e.move();
}

Bytes Endorsement::serialize() const {
    Encoder e;
    e.str(tx_id);
    e.u8(static_cast<std::uint8_t>(verdict));
    e.hash(proposal_digest);
    e.bytes(endorser_cert.serialize());
    e.bytes(signature);
    return e.move();
}

std::optional<Endorsement> Endorsement::deserialize(const Bytes& buf) {
    try {
        Decoder d(buf);
        Endorsement en;
        en.tx_id = d.str();
        en.verdict = static_cast<Verdict>(d.u8());
        en.proposal_digest = d.hash();
        auto cert = Certificate::deserialize(d.bytes());
        if (!cert) return std::nullopt;
        en.endorser_cert = *cert;
        en.signature = d.bytes();
        if (!d.done()) return std::nullopt;
        return en;
    } catch (const std::out_of_range&) {
        return std::nullopt;
    }
}

Endorsement make_endorsement(const Actor& endorser, const std::string& tx_id, Verdict verdict,
                             const Hash32& proposal_digest) {
    Endorsement en;
    en.tx_id = tx_id;
    en.endorser_cert = endorser.cert;
    en.verdict = verdict;
    en.proposal_digest = proposal_digest;
    en.signature = crypto::sign(endorser.keys.secret_key, en.signing_bytes());
    return en;
}

Bytes DisputeCase::serialize() const {
    Encoder e;
    e.str(tx_id);
    e.i64(buyer_deposit);
    e.i64(courier_deposit);
    e.str(buyer_lock_id);
    e.str(courier_lock_id);
    e.u8(winner ? static_cast<std::uint8_t>(*winner) + 1 : 0);
    e.i64(winner_amount);
    e.i64(platform_amount);
    e.u8(resolved ? 1 : 0);
    return e.move();
}

Bytes SettlementInstruction::serialize() const {
    Encoder e;
    e.str(merchant_wallet);
    e.i64(merchant_amount);
    e.str(platform_wallet);
    e.i64(platform_amount);
    return e.move();
}

Bytes ContractUpdate::serialize() const {
    Encoder e;
    e.u8(static_cast<std::uint8_t>(kind));
    e.str(proof_id);
    e.bytes(proof_record);
    return e.move();
}

std::optional<ContractUpdate> ContractUpdate::deserialize(const Bytes& buf) {
    try {
        Decoder d(buf);
        ContractUpdate u;
        u.kind = static_cast<UpdateKind>(d.u8());
        u.proof_id = d.str();
        u.proof_record = d.bytes();
        if (!d.done()) return std::nullopt;
        return u;
    } catch (const std::out_of_range&) {
        return std::nullopt;
    }
}

Bytes EscrowContract::serialize() const {
    Encoder e;
    e.bytes(proposal.serialize());
    e.u8(static_cast<std::uint8_t>(state));
    e.u32(static_cast<std::uint32_t>(required_endorsers.size()));
    for (const auto& id : required_endorsers) e.str(id);
    e.u32(static_cast<std::uint32_t>(endorsements.size()));
    for (const auto& [id, en] : endorsements) {
        e.str(id);
        e.bytes(en.serialize());
    }
    e.str(courier_wallet.value_or(""));
    e.str(courier_id);
    e.u8(static_cast<std::uint8_t>(buyer_confirmation));
    e.u8(dispute ? 1 : 0);
    if (dispute) e.bytes(dispute->serialize());
    e.u8(settlement_instruction ? 1 : 0);
    if (settlement_instruction) e.bytes(settlement_instruction->serialize());
    e.str(settlement_proof_id);
    return e.move();
}

Result<EndorsementRequest> ContractEngine::endorsement_request(
    const TransactionProposal& proposal) const {
    auto buyer_bank = config_.wallet_banks.find(proposal.buyer_wallet);
    auto merchant_bank = config_.wallet_banks.find(proposal.merchant_wallet);
    if (buyer_bank == config_.wallet_banks.end() || merchant_bank == config_.wallet_banks.end())
        return Err::NotFound;

    std::set<std::string> required;
    required.insert(buyer_bank->second);
    required.insert(merchant_bank->second);
    required.insert("w:" + proposal.merchant_wallet);
    required.insert(proposal.platform_id);

    EndorsementRequest req;
    req.tx_id = proposal.tx_id;
    req.proposal_digest = proposal.digest();
    req.required_endorsers.assign(required.begin(), required.end());
    return req;
}

Result<EndorsementRequest> ContractEngine::propose(ContractStore& store,
                                                   const TransactionProposal& proposal,
                                                   const Certificate& submitter) const {
    if (store.count(proposal.tx_id)) return Err::DuplicateTxId;
    if (proposal.price <= 0) return Err::NonPositivePrice;
    if (!crypto::verify(submitter.public_key, proposal.signing_bytes(), proposal.buyer_signature))
        return Err::InvalidSignature;
    // The proposal must be signed by the wallet it spends from.
    if (WalletRegistry::wallet_id_for(submitter.public_key) != proposal.buyer_wallet)
        return Err::InvalidSignature;
    if (!config_.platform_wallets.count(proposal.platform_id)) return Err::NotFound;

    auto req = endorsement_request(proposal);
    if (!req.ok()) return req.error();

    EscrowContract c;
    c.proposal = proposal;
    c.state = ContractState::Endorsing;  // Proposed -> Endorsing on intake
    c.required_endorsers = req.value().required_endorsers;
    store.emplace(proposal.tx_id, std::move(c));
    return req;
}

Result<ContractState> ContractEngine::finish_endorsement(EscrowContract& c,
                                                          std::vector<Instruction>& out) const {
    const Hash32 expected = c.proposal.digest();
    bool all_approve_matching = true;
    for (const auto& [id, en] : c.endorsements) {
        if (en.verdict != Verdict::Approve || en.proposal_digest != expected) {
            all_approve_matching = false;
            break;
        }
    }
    if (all_approve_matching) {
        c.state = ContractState::Locked;
        Instruction instr;
        instr.kind = Instruction::Kind::EnsureLock;
        instr.tx_id = c.proposal.tx_id;
        instr.buyer_wallet = c.proposal.buyer_wallet;
        instr.amount = c.proposal.price;
        out.push_back(std::move(instr));
    } else {
        c.state = ContractState::Rejected;
        Instruction instr;
        instr.kind = Instruction::Kind::RecordRefund;
        instr.tx_id = c.proposal.tx_id;
        out.push_back(std::move(instr));
    }
    return c.state;
}

Result<ContractState> ContractEngine::record_endorsement(ContractStore& store,
                                                         const Endorsement& endorsement,
                                                         std::vector<Instruction>& out) const {
    auto it = store.find(endorsement.tx_id);
    if (it == store.end()) return Err::NotFound;
    EscrowContract& c = it->second;
    if (c.state != ContractState::Endorsing) return Err::WrongPhase;

    const std::string& endorser = endorsement.endorser_cert.subject_id;
    if (std::find(c.required_endorsers.begin(), c.required_endorsers.end(), endorser) ==
        c.required_endorsers.end())
        return Err::NotRequiredEndorser;
    if (c.endorsements.count(endorser)) return Err::AlreadyEndorsed;
    if (!crypto::verify(endorsement.endorser_cert.public_key, endorsement.signing_bytes(),
                        endorsement.signature))
        return Err::InvalidSignature;

    c.endorsements.emplace(endorser, endorsement);
    if (c.endorsements.size() == c.required_endorsers.size()) return finish_endorsement(c, out);
    return c.state;
}

Result<ContractState> ContractEngine::courier_attest(ContractStore& store,
                                                     const std::string& tx_id,
                                                     const Certificate& courier) const {
    auto it = store.find(tx_id);
    if (it == store.end()) return Err::NotFound;
    EscrowContract& c = it->second;
    if (c.state != ContractState::Locked) return Err::WrongPhase;
    if (courier.role != Role::Courier) return Err::WrongRole;

    c.state = ContractState::Delivered;
    c.courier_wallet = WalletRegistry::wallet_id_for(courier.public_key);
    c.courier_id = courier.subject_id;
    c.buyer_confirmation = BuyerDecision::Pending;
    return c.state;
}

Result<ContractState> ContractEngine::buyer_confirm(ContractStore& store,
                                                    const std::string& tx_id,
                                                    BuyerDecision decision,
                                                    const Certificate& submitter,
                                                    std::vector<Instruction>& out) const {
    auto it = store.find(tx_id);
    if (it == store.end()) return Err::NotFound;
    EscrowContract& c = it->second;
    if (c.state != ContractState::Delivered) return Err::WrongPhase;
    if (decision != BuyerDecision::Confirmed && decision != BuyerDecision::Null)
        return Err::WrongPhase;
    // Confirmation must come from the buying wallet itself.
    if (WalletRegistry::wallet_id_for(submitter.public_key) != c.proposal.buyer_wallet)
        return Err::InvalidSignature;

    c.buyer_confirmation = decision;
    if (decision == BuyerDecision::Confirmed) {
        c.state = ContractState::Confirmed;
        auto split = settlement_split(c.proposal.price, config_.commission_rate_bp);
        SettlementInstruction si;
        si.merchant_wallet = c.proposal.merchant_wallet;
        si.merchant_amount = split.merchant_amount;
        si.platform_wallet = config_.platform_wallets.at(c.proposal.platform_id);
        si.platform_amount = split.platform_amount;
        c.settlement_instruction = si;

        Instruction instr;
        instr.kind = Instruction::Kind::Settle;
        instr.tx_id = tx_id;
        instr.settle = si;
        out.push_back(std::move(instr));
    } else {
        c.state = ContractState::Disputed;
    }
    return c.state;
}

Result<ContractState> ContractEngine::open_dispute(ContractStore& store, const std::string& tx_id,
                                                   const std::optional<PaymentToken>& buyer_token,
                                                   const std::optional<PaymentToken>& courier_token,
                                                   const Certificate& submitter) const {
    auto it = store.find(tx_id);
    if (it == store.end()) return Err::NotFound;
    EscrowContract& c = it->second;
    if (c.state != ContractState::Disputed || c.dispute.has_value()) return Err::WrongPhase;
    if (submitter.subject_id != c.proposal.platform_id) return Err::WrongRole;

    auto valid_deposit = [&](const std::optional<PaymentToken>& t, LockPurpose purpose) {
        if (!t) return false;
        if (t->tx_id != tx_id || t->purpose != purpose) return false;
        auto bank = config_.trust.issuer(t->bank_id);
        return bank && bank->role == Role::Bank && t->verify(bank->public_key);
    };

    if (!valid_deposit(buyer_token, LockPurpose::BuyerDeposit) ||
        !valid_deposit(courier_token, LockPurpose::CourierDeposit))
        return Err::MissingDeposit;
    if (buyer_token->amount != c.proposal.price || courier_token->amount != c.proposal.price)
        return Err::DepositMismatch;

    DisputeCase d;
    d.tx_id = tx_id;
    d.buyer_deposit = buyer_token->amount;
    d.courier_deposit = courier_token->amount;
    d.buyer_lock_id = buyer_token->lock_id;
    d.courier_lock_id = courier_token->lock_id;
    c.dispute = std::move(d);
    return c.state;
}

Result<ContractState> ContractEngine::resolve_dispute(ContractStore& store,
                                                      const std::string& tx_id,
                                                      DisputeWinner winner,
                                                      const Certificate& submitter,
                                                      std::vector<Instruction>& out) const {
    auto it = store.find(tx_id);
    if (it == store.end()) return Err::NotFound;
    EscrowContract& c = it->second;
    if (c.state != ContractState::Disputed || !c.dispute || c.dispute->resolved)
        return Err::WrongPhase;
    if (submitter.subject_id != c.proposal.platform_id) return Err::WrongRole;
    if (!c.courier_wallet) return Err::WrongPhase;

    DisputeCase& d = *c.dispute;
    const Amount deposit = d.buyer_deposit;
    auto split = dispute_split(deposit);
    d.winner = winner;
    d.winner_amount = split.winner_amount;
    d.platform_amount = split.platform_amount;
    d.resolved = true;

    const std::string platform_wallet = config_.platform_wallets.at(c.proposal.platform_id);
    const std::string winner_wallet =
        winner == DisputeWinner::Courier ? *c.courier_wallet : c.proposal.buyer_wallet;
    const std::string& winner_lock =
        winner == DisputeWinner::Courier ? d.courier_lock_id : d.buyer_lock_id;
    const std::string& loser_lock =
        winner == DisputeWinner::Courier ? d.buyer_lock_id : d.courier_lock_id;

    Instruction payout;
    payout.kind = Instruction::Kind::DisputePayout;
    payout.tx_id = tx_id;
    // Winner's own deposit returns whole; the loser's deposit is split
    // floor-half to the winner, remainder to the platform.
    payout.payouts.push_back(LockPayout{winner_lock, {{winner_wallet, deposit}}});
    LockPayout loser;
    loser.lock_id = loser_lock;
    if (deposit / 2 > 0) loser.outputs.emplace_back(winner_wallet, deposit / 2);
    loser.outputs.emplace_back(platform_wallet, deposit - deposit / 2);
    payout.payouts.push_back(std::move(loser));
    out.push_back(std::move(payout));

    if (winner == DisputeWinner::Courier) {
        // Honest delivery: proceed to confirmation and settle the escrow.
        c.state = ContractState::Confirmed;
        auto ssplit = settlement_split(c.proposal.price, config_.commission_rate_bp);
        SettlementInstruction si;
        si.merchant_wallet = c.proposal.merchant_wallet;
        si.merchant_amount = ssplit.merchant_amount;
        si.platform_wallet = platform_wallet;
        si.platform_amount = ssplit.platform_amount;
        c.settlement_instruction = si;

        Instruction instr;
        instr.kind = Instruction::Kind::Settle;
        instr.tx_id = tx_id;
        instr.settle = si;
        out.push_back(std::move(instr));
    } else {
        // Buyer prevails: annul the purchase, escrow principal flows back.
        c.state = ContractState::Refunded;
        Instruction instr;
        instr.kind = Instruction::Kind::Refund;
        instr.tx_id = tx_id;
        out.push_back(std::move(instr));
    }
    return c.state;
}

Result<ContractState> ContractEngine::apply_update(ContractStore& store, const std::string& tx_id,
                                                   const ContractUpdate& update,
                                                   const Certificate& submitter,
                                                   std::vector<Instruction>& out) const {
    auto it = store.find(tx_id);
    if (it == store.end()) return Err::NotFound;
    EscrowContract& c = it->second;

    switch (update.kind) {
        case UpdateKind::EndorsementTimeout: {
            if (submitter.role != Role::Platform && submitter.role != Role::OrderingNode)
                return Err::WrongRole;
            if (c.state != ContractState::Endorsing) return Err::WrongPhase;
            c.state = ContractState::Rejected;
            Instruction instr;
            instr.kind = Instruction::Kind::RecordRefund;
            instr.tx_id = tx_id;
            out.push_back(std::move(instr));
            return c.state;
        }
        case UpdateKind::SettlementDone: {
            if (submitter.role != Role::Bank) return Err::WrongRole;
            if (c.state != ContractState::Confirmed) return Err::WrongPhase;
            c.state = ContractState::Settled;
            c.settlement_proof_id = update.proof_id;
            return c.state;
        }
        case UpdateKind::RefundDone: {
            if (submitter.role != Role::Bank) return Err::WrongRole;
            if (c.state != ContractState::Rejected) return Err::WrongPhase;
            c.state = ContractState::Refunded;
            Instruction instr;
            instr.kind = Instruction::Kind::Refund;
            instr.tx_id = tx_id;
            out.push_back(std::move(instr));
            return c.state;
        }
        case UpdateKind::ProofRecord: {
            if (submitter.role != Role::Bank) return Err::WrongRole;
            if (c.state != ContractState::Confirmed && c.state != ContractState::Settled)
                return Err::WrongPhase;
            // Record-only op; the proof bytes live in the block.
            return c.state;
        }
    }
    return Err::WrongPhase;
}

}  // namespace spay
