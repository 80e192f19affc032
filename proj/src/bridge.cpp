#include <spay/bridge.hpp>

#include <algorithm>

namespace spay {

const char* to_string(SettlementAction a) {
    switch (a) {
        case SettlementAction::Lock: return "Lock";
        case SettlementAction::Release: return "Release";
        case SettlementAction::Refund: return "Refund";
        case SettlementAction::DisputePayout: return "DisputePayout";
    }
    return "Unknown";
}

const char* to_string(TaskStatus s) {
    switch (s) {
        case TaskStatus::Pending: return "Pending";
        case TaskStatus::Done: return "Done";
        case TaskStatus::Failed: return "Failed";
    }
    return "Unknown";
}

GatewayResponse Gateway::api(const Certificate& caller, const GatewayRequest& request) {
    GatewayResponse resp;
    auto fail = [&](Err e) {
        resp.ok = false;
        resp.error = e;
        return resp;
    };

    if (!trust_.verify(caller)) return fail(Err::UnknownCertificate);

    switch (request.kind) {
        case GatewayRequest::Kind::Register: {
            // Banks register their own customers.
            if (caller.role != Role::Bank || caller.subject_id != request.bank_id)
                return fail(Err::Unauthorized);
            if (!request.wallet_keys) return fail(Err::Unauthorized);
            auto r = registry_.register_wallet(request.platform_user_id, request.bank_id,
                                               *request.wallet_keys);
            if (!r.ok()) return fail(r.error());
            resp.ok = true;
            resp.binding = r.value();
            return resp;
        }
        case GatewayRequest::Kind::QueryBalance: {
            auto r = ledger_.query_balance(request.wallet_id, caller);
            if (!r.ok()) return fail(r.error());
            resp.ok = true;
            resp.amount = r.value();
            return resp;
        }
        case GatewayRequest::Kind::QueryHistory: {
            auto r = ledger_.query_history(request.wallet_id, caller);
            if (!r.ok()) return fail(r.error());
            resp.ok = true;
            resp.history = r.value();
            return resp;
        }
        case GatewayRequest::Kind::Transfer: {
            if (!request.intent) return fail(Err::ValueMismatch);
            if (WalletRegistry::wallet_id_for(caller.public_key) != request.intent->from_wallet)
                return fail(Err::Unauthorized);
            auto r = ledger_.transfer_2pc(*request.intent);
            if (!r.ok()) return fail(r.error());
            resp.ok = true;
            return resp;
        }
        case GatewayRequest::Kind::Redeem: {
            auto r = ledger_.redeem(request.wallet_id, request.amount, caller);
            if (!r.ok()) return fail(r.error());
            resp.ok = true;
            resp.amount = request.amount;
            return resp;
        }
        case GatewayRequest::Kind::PayEscrow: {
            std::string wallet = WalletRegistry::wallet_id_for(caller.public_key);
            if (!registry_.bank_of(wallet)) return fail(Err::Unauthorized);
            auto r = ledger_.lock_escrow(request.tx_id, wallet, request.amount, request.purpose);
            if (!r.ok()) return fail(r.error());
            resp.ok = true;
            resp.token = r.value().second;
            return resp;
        }
        case GatewayRequest::Kind::VerifyToken: {
            // Payment confirmation without identity: anyone holding the
            // token learns (tx, amount) validity, nothing about the payer.
            if (!request.token) return fail(Err::ValueMismatch);
            auto bank = trust_.issuer(request.token->bank_id);
            resp.ok = true;
            resp.token_valid = bank && bank->role == Role::Bank &&
                               request.token->verify(bank->public_key);
            resp.token_tx_id = request.token->tx_id;
            resp.token_amount = request.token->amount;
            return resp;
        }
    }
    return fail(Err::Unauthorized);
}

SettlementWatcher::SettlementWatcher(Chain& chain, CbdcLedger& ledger,
                                     const WalletRegistry& registry,
                                     std::vector<Actor> consortium_banks,
                                     bool upload_proof_records)
    : chain_(chain),
      ledger_(ledger),
      registry_(registry),
      upload_proof_records_(upload_proof_records) {
    for (auto& bank : consortium_banks) banks_[bank.id] = std::move(bank);
}

void SettlementWatcher::set_ops_wallet(const std::string& bank_id, const std::string& wallet_id) {
    ops_wallets_[bank_id] = wallet_id;
}

void SettlementWatcher::inject_settlement_fault(FaultMode mode, const std::string& tx_id) {
    faults_.push_back(FaultSpec{mode, tx_id});
}

std::optional<Actor> SettlementWatcher::bank_for_wallet(const std::string& wallet_id) const {
    auto bank_id = registry_.bank_of(wallet_id);
    if (!bank_id) return std::nullopt;
    auto it = banks_.find(*bank_id);
    if (it == banks_.end()) return std::nullopt;
    return it->second;
}

std::optional<Actor> SettlementWatcher::other_bank(const std::string& bank_id) const {
    for (const auto& [id, actor] : banks_)
        if (id != bank_id) return actor;
    return std::nullopt;
}

std::optional<FaultSpec> SettlementWatcher::match_fault(const std::string& tx_id) {
    for (auto it = faults_.begin(); it != faults_.end(); ++it) {
        if (it->tx_id.empty() || it->tx_id == tx_id) {
            FaultSpec spec = *it;
            faults_.erase(it);
            return spec;
        }
    }
    return std::nullopt;
}

void SettlementWatcher::submit_update(const Actor& bank, const std::string& tx_id,
                                      const ContractUpdate& update, std::uint64_t now_ms) {
    ChainOp op = make_op(bank, OpKind::ContractUpdate, tx_id, update.serialize());
    chain_.submit(op, now_ms);  // DuplicateOp on replay is expected and benign
}

void SettlementWatcher::sync_headers() {
    const auto& blocks = chain_.blocks();
    for (; synced_blocks_ < blocks.size(); ++synced_blocks_) {
        const Block& b = blocks[synced_blocks_];
        ledger_.put_header(BlockHeader{b.height, b.block_hash, b.prev_hash, b.ops_root});
    }
}

SettlementTask& SettlementWatcher::task_slot(const std::string& tx_id, SettlementAction action,
                                             std::uint64_t height) {
    SettlementTask probe;
    probe.tx_id = tx_id;
    probe.action = action;
    auto [it, inserted] = tasks_.try_emplace(probe.idempotency_key(), probe);
    if (inserted) it->second.trigger_height = height;
    return it->second;
}

void SettlementWatcher::poll(std::uint64_t now_ms) {
    sync_headers();
    auto events = chain_.poll_commits(cursor_);
    for (const auto& event : events) {
        if (!event.accepted) continue;
        for (const auto& instr : event.instructions) handle_instruction(event, instr, now_ms);
        sync_headers();
    }
}

void SettlementWatcher::handle_instruction(const CommitEvent& event, const Instruction& instr,
                                           std::uint64_t now_ms) {
    switch (instr.kind) {
        case Instruction::Kind::EnsureLock: {
            SettlementTask& task = task_slot(instr.tx_id, SettlementAction::Lock, event.height);
            if (task.status == TaskStatus::Done) return;
            if (auto lock = ledger_.find_lock(instr.tx_id, LockPurpose::Escrow)) {
                task.status = TaskStatus::Done;
                task.citation = lock->lock_id;
                return;
            }
            auto r = ledger_.lock_escrow(instr.tx_id, instr.buyer_wallet, instr.amount,
                                         LockPurpose::Escrow);
            if (r.ok()) {
                task.status = TaskStatus::Done;
                task.citation = r.value().first.lock_id;
            } else {
                task.status = TaskStatus::Failed;
                task.reason = to_string(r.error());
            }
            return;
        }
        case Instruction::Kind::RecordRefund: {
            auto contract = chain_.query_state(instr.tx_id);
            if (!contract.ok()) return;
            auto bank = bank_for_wallet(contract.value().proposal.buyer_wallet);
            if (!bank) return;
            ContractUpdate update;
            update.kind = UpdateKind::RefundDone;
            submit_update(*bank, instr.tx_id, update, now_ms);
            return;
        }
        case Instruction::Kind::Refund: {
            SettlementTask& task = task_slot(instr.tx_id, SettlementAction::Refund, event.height);
            if (task.status == TaskStatus::Done) return;
            auto lock = ledger_.find_lock(instr.tx_id, LockPurpose::Escrow);
            if (!lock) {
                task.status = TaskStatus::Failed;
                task.reason = "no escrow lock to refund";
                return;
            }
            if (lock->consumed) {
                // A previous pass already moved the money.
                task.status = TaskStatus::Done;
                task.citation = lock->consumed_by;
                return;
            }
            ChainProof proof = chain_.make_proof(event.height, event.op_index);
            auto r = ledger_.refund_escrow(lock->lock_id, proof);
            if (r.ok()) {
                task.status = TaskStatus::Done;
                task.citation = "refund:" + lock->lock_id;
            } else {
                task.status = TaskStatus::Failed;
                task.reason = to_string(r.error());
            }
            return;
        }
        case Instruction::Kind::Settle: {
            SettlementTask& task = task_slot(instr.tx_id, SettlementAction::Release, event.height);
            if (task.status == TaskStatus::Done) return;
            if (auto fault = match_fault(instr.tx_id)) {
                if (fault->mode == FaultMode::SkipTx) {
                    faulted_txs_.insert(instr.tx_id);
                    task.status = TaskStatus::Failed;
                    task.reason = "fault: settlement skipped";
                    return;
                }
                // WrongAmount falls through below with a distorted split.
                faulted_txs_.insert(instr.tx_id);
                task.reason = "fault: stale split";
            }

            auto lock = ledger_.find_lock(instr.tx_id, LockPurpose::Escrow);
            if (!lock) {
                task.status = TaskStatus::Failed;
                task.reason = "no escrow lock to release";
                return;
            }
            if (lock->consumed) {
                task.status = TaskStatus::Done;
                task.citation = lock->consumed_by;
                return;
            }

            const SettlementInstruction& si = instr.settle;
            Amount merchant_amount = si.merchant_amount;
            Amount platform_amount = si.platform_amount;
            if (task.reason == "fault: stale split" && merchant_amount > 1) {
                merchant_amount -= 1;
                platform_amount += 1;
            }
            std::vector<std::pair<std::string, Amount>> beneficiaries;
            if (merchant_amount > 0) beneficiaries.emplace_back(si.merchant_wallet, merchant_amount);
            if (platform_amount > 0) beneficiaries.emplace_back(si.platform_wallet, platform_amount);

            ChainProof proof = chain_.make_proof(event.height, event.op_index);
            auto r = ledger_.release_escrow(lock->lock_id, proof, beneficiaries);
            if (!r.ok()) {
                task.status = TaskStatus::Failed;
                task.reason = to_string(r.error());
                return;
            }
            task.status = TaskStatus::Done;
            task.citation = r.value().proof_id;

            auto settle_bank = bank_for_wallet(lock->funded_from);
            if (settle_bank) {
                ContractUpdate update;
                update.kind = UpdateKind::SettlementDone;
                update.proof_id = r.value().proof_id;
                submit_update(*settle_bank, instr.tx_id, update, now_ms);

                if (upload_proof_records_) {
                    // The counterparty bank publishes the full proof record;
                    // the dedup rule allows one update per submitter.
                    auto uploader = bank_for_wallet(si.merchant_wallet);
                    if (!uploader || uploader->id == settle_bank->id)
                        uploader = other_bank(settle_bank->id);
                    if (uploader) {
                        ContractUpdate record;
                        record.kind = UpdateKind::ProofRecord;
                        record.proof_id = r.value().proof_id;
                        record.proof_record = r.value().serialize();
                        submit_update(*uploader, instr.tx_id, record, now_ms);
                    }
                }
            }
            return;
        }
        case Instruction::Kind::DisputePayout: {
            SettlementTask& task =
                task_slot(instr.tx_id, SettlementAction::DisputePayout, event.height);
            if (task.status == TaskStatus::Done) return;
            ChainProof proof = chain_.make_proof(event.height, event.op_index);
            bool all_ok = true;
            std::string citation;
            for (const auto& payout : instr.payouts) {
                auto lock = ledger_.lock_by_id(payout.lock_id);
                if (lock && lock->consumed) {
                    citation += (citation.empty() ? "" : ",") + lock->consumed_by;
                    continue;
                }
                auto r = ledger_.release_escrow(payout.lock_id, proof, payout.outputs);
                if (r.ok()) {
                    citation += (citation.empty() ? "" : ",") + r.value().proof_id;
                } else {
                    all_ok = false;
                    task.reason = to_string(r.error());
                }
            }
            task.status = all_ok ? TaskStatus::Done : TaskStatus::Failed;
            task.citation = citation;
            return;
        }
    }
}

Result<ChallengeCase> SettlementWatcher::challenge(const std::string& tx_id,
                                                   const Certificate& merchant_cert) {
    for (const auto& existing : cases_)
        if (existing.tx_id == tx_id) return existing;  // one verdict per tx

    auto contract = chain_.query_state(tx_id);
    if (!contract.ok()) return Err::NotFound;
    const EscrowContract& c = contract.value();
    if (c.state != ContractState::Confirmed && c.state != ContractState::Settled)
        return Err::WrongPhase;
    if (WalletRegistry::wallet_id_for(merchant_cert.public_key) != c.proposal.merchant_wallet)
        return Err::NotPayee;

    ChallengeCase result;
    result.tx_id = tx_id;
    result.merchant_id = merchant_cert.subject_id;

    auto proof = ledger_.find_proof(tx_id, LockPurpose::Escrow);
    if (proof && ledger_.verify_settlement_proof(*proof)) {
        result.outcome = ChallengeOutcome::ProofSupplied;
        result.proof_id = proof->proof_id;
        cases_.push_back(result);
        return result;
    }

    // No verifying proof: the merchant's bank owes them their entitlement,
    // paid from its pre-funded operational wallet.
    if (!c.settlement_instruction) return Err::WrongPhase;
    Amount entitlement = c.settlement_instruction->merchant_amount;

    auto bank_id = registry_.bank_of(c.proposal.merchant_wallet);
    if (!bank_id || !ops_wallets_.count(*bank_id)) return Err::NotFound;
    auto paid = ledger_.pay(ops_wallets_.at(*bank_id), c.proposal.merchant_wallet, entitlement);
    if (!paid.ok()) return paid.error();

    result.outcome = ChallengeOutcome::Compensated;
    result.amount = entitlement;
    cases_.push_back(result);
    return result;
}

}  // namespace spay
