#include <spay/bench.hpp>

#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <random>
#include <sstream>

namespace spay::bench {

using ordered_json = nlohmann::ordered_json;

const char* to_string(ScenarioKind k) {
    switch (k) {
        case ScenarioKind::Normal: return "normal";
        case ScenarioKind::ReshippingDispute: return "dispute";
        case ScenarioKind::ProofPerSettlement: return "proof";
        case ScenarioKind::BatchSweep: return "sweep";
    }
    return "unknown";
}

std::optional<ScenarioKind> scenario_from_string(const std::string& name) {
    if (name == "normal") return ScenarioKind::Normal;
    if (name == "dispute") return ScenarioKind::ReshippingDispute;
    if (name == "proof") return ScenarioKind::ProofPerSettlement;
    if (name == "sweep") return ScenarioKind::BatchSweep;
    return std::nullopt;
}

Status ScenarioConfig::validate() const {
    if (num_transactions == 0 || batch_size == 0 || block_timer_ms == 0 || tick_ms == 0)
        return Err::ConfigInvalid;
    if (num_buyers == 0 || num_merchants == 0 || num_couriers == 0 || num_banks == 0)
        return Err::ConfigInvalid;
    if (price_min <= 0 || price_max < price_min) return Err::ConfigInvalid;
    if (commission_rate_bp >= 10'000) return Err::ConfigInvalid;
    if (shard_count == 0) return Err::ConfigInvalid;
    if (scenario == ScenarioKind::BatchSweep && sweep_sizes.empty()) return Err::ConfigInvalid;
    if (scenario == ScenarioKind::ProofPerSettlement && num_banks < 2) return Err::ConfigInvalid;
    return ok_status();
}

bool ScenarioConfig::apply_key_value(const std::string& key, const std::string& value) {
    auto to_u64 = [&](std::uint64_t& out) {
        try {
            out = std::stoull(value);
            return true;
        } catch (...) {
            return false;
        }
    };
    std::uint64_t n = 0;
    if (key == "scenario") {
        auto k = scenario_from_string(value);
        if (!k) return false;
        scenario = *k;
        return true;
    }
    if (key == "num_transactions" && to_u64(n)) { num_transactions = static_cast<std::uint32_t>(n); return true; }
    if (key == "batch_size" && to_u64(n)) { batch_size = n; return true; }
    if (key == "block_timer_ms" && to_u64(n)) { block_timer_ms = n; return true; }
    if (key == "num_buyers" && to_u64(n)) { num_buyers = static_cast<std::uint32_t>(n); return true; }
    if (key == "num_merchants" && to_u64(n)) { num_merchants = static_cast<std::uint32_t>(n); return true; }
    if (key == "num_couriers" && to_u64(n)) { num_couriers = static_cast<std::uint32_t>(n); return true; }
    if (key == "num_banks" && to_u64(n)) { num_banks = static_cast<std::uint32_t>(n); return true; }
    if (key == "commission_rate_bp" && to_u64(n)) { commission_rate_bp = static_cast<std::uint32_t>(n); return true; }
    if (key == "rng_seed" && to_u64(n)) { rng_seed = n; return true; }
    if (key == "price_min" && to_u64(n)) { price_min = static_cast<Amount>(n); return true; }
    if (key == "price_max" && to_u64(n)) { price_max = static_cast<Amount>(n); return true; }
    if (key == "endorse_timeout_ms" && to_u64(n)) { endorse_timeout_ms = n; return true; }
    if (key == "shard_count" && to_u64(n)) { shard_count = n; return true; }
    if (key == "tick_ms" && to_u64(n)) { tick_ms = n; return true; }
    if (key == "sweep_sizes") {
        sweep_sizes.clear();
        std::stringstream ss(value);
        std::string item;
        while (std::getline(ss, item, ',')) {
            try {
                sweep_sizes.push_back(std::stoull(item));
            } catch (...) {
                return false;
            }
        }
        return !sweep_sizes.empty();
    }
    if (key == "fault") {
        auto colon = value.find(':');
        std::string mode = value.substr(0, colon);
        std::string tx = colon == std::string::npos ? "" : value.substr(colon + 1);
        if (mode == "skip") { faults.push_back({FaultMode::SkipTx, tx}); return true; }
        if (mode == "wrong") { faults.push_back({FaultMode::WrongAmount, tx}); return true; }
        return false;
    }
    if (key == "wall_clock") { wall_clock = (value == "1" || value == "true"); return true; }
    return false;
}

Result<ScenarioConfig> ScenarioConfig::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) return Err::IoError;
    ScenarioConfig cfg;
    std::string line;
    while (std::getline(in, line)) {
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        auto trim = [](std::string s) {
            auto b = s.find_first_not_of(" \t\r");
            auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (key.empty()) continue;
        if (!cfg.apply_key_value(key, value)) return Err::ConfigInvalid;
    }
    return cfg;
}

Result<std::vector<PurchaseIntent>> workload_gen(const ScenarioConfig& config) {
    if (!config.validate().ok()) return Err::ConfigInvalid;
    std::mt19937_64 rng(config.rng_seed);
    std::uniform_int_distribution<Amount> price(config.price_min, config.price_max);
    std::uniform_int_distribution<std::uint32_t> buyer(0, config.num_buyers - 1);
    std::uniform_int_distribution<std::uint32_t> merchant(0, config.num_merchants - 1);
    std::uniform_int_distribution<std::uint32_t> courier(0, config.num_couriers - 1);

    std::vector<PurchaseIntent> out;
    out.reserve(config.num_transactions);
    for (std::uint32_t i = 0; i < config.num_transactions; ++i) {
        PurchaseIntent intent;
        char buf[32];
        std::snprintf(buf, sizeof(buf), "tx-%llu-%06u",
                      static_cast<unsigned long long>(config.rng_seed), i);
        intent.tx_id = buf;
        std::snprintf(buf, sizeof(buf), "sku-%04u", static_cast<std::uint32_t>(rng() % 10'000));
        intent.product_id = buf;
        intent.buyer = buyer(rng);
        intent.merchant = merchant(rng);
        intent.courier = courier(rng);
        intent.price = price(rng);
        out.push_back(std::move(intent));
    }
    return out;
}

namespace {

crypto::KeyPair keys_for(std::uint64_t seed, const std::string& label) {
    return crypto::keypair_from_label("spay/" + std::to_string(seed) + "/" + label);
}

struct Party {
    std::string user_id;
    crypto::KeyPair wallet_keys;
    std::string wallet;
    Actor chain_actor;  // pseudonymous: subject "w:<wallet_id>"
    std::uint32_t bank = 0;
};

enum class RunMode { Full, ProposalStage, EndorseStage, EscrowStage };

struct TxTrack {
    std::size_t intent = 0;
    std::uint64_t submit_ms = 0;
    std::uint64_t endorsing_ms = 0;
    std::uint64_t locked_ms = 0;
    std::uint64_t absorbed_ms = 0;
    bool have_endorsing = false;
    bool have_locked = false;
    bool done = false;
};

class Simulation {
public:
    explicit Simulation(const ScenarioConfig& cfg) : cfg_(cfg) {}

    Status setup();
    Result<MetricsReport> run_full();
    Result<StageMetrics> run_stage(const std::string& stage);

private:
    void at(std::uint64_t t, std::function<void(std::uint64_t)> fn) {
        schedule_.emplace(std::make_pair(t, seq_++), std::move(fn));
    }

    void submit_intent(std::size_t idx, std::uint64_t now);
    void schedule_endorsements(const std::string& tx_id, std::uint64_t now);
    void submit_confirm(const std::string& tx_id, std::uint64_t now);
    void open_dispute_flow(const std::string& tx_id, std::uint64_t now);
    void process_commits(std::uint64_t now);
    void pump(std::uint64_t& now, const std::function<bool()>& finished);
    void watch_fault_tasks(std::uint64_t now);
    void run_challenge(const std::string& tx_id, std::uint64_t now);

    std::vector<InvariantCheck> audit();
    StageMetrics stage_metrics(const std::string& stage) const;

    ScenarioConfig cfg_;
    std::vector<PurchaseIntent> intents_;

    Actor ca_;
    Actor platform_;
    std::vector<Actor> banks_;
    std::vector<Party> buyers_, merchants_, couriers_;
    std::string platform_wallet_;
    std::vector<std::string> ops_wallets_;
    std::map<std::string, Actor> endorser_actors_;

    WalletRegistry registry_;
    TrustStore trust_;
    std::unique_ptr<CbdcLedger> ledger_;
    std::unique_ptr<Gateway> gateway_;
    std::unique_ptr<Chain> chain_;
    std::unique_ptr<SettlementWatcher> watcher_;

    std::multimap<std::pair<std::uint64_t, std::uint64_t>, std::function<void(std::uint64_t)>>
        schedule_;
    std::uint64_t seq_ = 0;
    std::size_t commit_cursor_ = 0;

    std::map<std::string, TxTrack> tracks_;
    std::vector<std::deque<std::size_t>> buyer_queues_;
    std::uint64_t completed_ = 0;
    std::uint64_t proposals_committed_ = 0;
    std::uint64_t locked_count_ = 0;
    bool conservation_each_block_ = true;
    std::uint64_t end_ms_ = 0;

    bool endorse_auto_ = true;
    bool courier_auto_ = true;
    bool confirm_auto_ = true;
    std::uint64_t stage_start_ms_ = 0;
    std::set<std::string> challenge_scheduled_;
};

Status Simulation::setup() {
    auto v = cfg_.validate();
    if (!v.ok()) return v;
    auto gen = workload_gen(cfg_);
    if (!gen.ok()) return gen.error();
    intents_ = gen.value();

    // Root authority, self-certified.
    ca_.id = "central-authority";
    ca_.keys = keys_for(cfg_.rng_seed, "ca");
    ca_.cert.subject_id = ca_.id;
    ca_.cert.role = Role::CentralAuthority;
    ca_.cert.public_key = ca_.keys.public_key;
    ca_.cert.issuer_id = ca_.id;
    ca_.cert.issuer_signature = crypto::sign(ca_.keys.secret_key, ca_.cert.signing_bytes());
    trust_.set_root(ca_.cert);

    for (std::uint32_t i = 0; i < cfg_.num_banks; ++i) {
        Actor bank;
        bank.id = "bank-" + std::to_string(i);
        bank.keys = keys_for(cfg_.rng_seed, "bank/" + std::to_string(i));
        auto cert = issue_certificate(ca_, bank.keys.public_key, bank.id, Role::Bank);
        bank.cert = cert.value();
        trust_.add_issuer(bank.cert);
        banks_.push_back(std::move(bank));
    }

    platform_.id = "platform-0";
    platform_.keys = keys_for(cfg_.rng_seed, "platform");
    platform_.cert =
        issue_certificate(ca_, platform_.keys.public_key, platform_.id, Role::Platform).value();

    ledger_ = std::make_unique<CbdcLedger>(cfg_.shard_count, &registry_, trust_,
                                           cfg_.commission_rate_bp);
    for (const auto& bank : banks_) ledger_->add_bank(bank);
    gateway_ = std::make_unique<Gateway>(registry_, *ledger_, trust_);

    auto register_party = [&](const std::string& user_id, const std::string& label,
                              std::uint32_t bank_index, Role role,
                              bool courier_cert) -> Result<Party> {
        Party p;
        p.user_id = user_id;
        p.wallet_keys = keys_for(cfg_.rng_seed, label);
        p.bank = bank_index;
        GatewayRequest req;
        req.kind = GatewayRequest::Kind::Register;
        req.platform_user_id = user_id;
        req.bank_id = banks_[bank_index].id;
        req.wallet_keys = p.wallet_keys;
        auto resp = gateway_->api(banks_[bank_index].cert, req);
        if (!resp.ok) return resp.error;
        p.wallet = resp.binding->wallet_id;
        p.chain_actor.id = "w:" + p.wallet;
        p.chain_actor.keys = p.wallet_keys;
        // Wallet-holder chain certificates come from the registering bank;
        // courier credentials come from the root authority.
        const Actor& issuer = courier_cert ? ca_ : banks_[bank_index];
        auto cert = issue_certificate(issuer, p.wallet_keys.public_key, p.chain_actor.id, role);
        if (!cert.ok()) return cert.error();
        p.chain_actor.cert = cert.value();
        return p;
    };

    for (std::uint32_t i = 0; i < cfg_.num_buyers; ++i) {
        auto p = register_party("user-" + std::to_string(i) + "@shop",
                                "buyer/" + std::to_string(i), i % cfg_.num_banks, Role::Buyer,
                                false);
        if (!p.ok()) return p.error();
        buyers_.push_back(p.value());
    }
    for (std::uint32_t i = 0; i < cfg_.num_merchants; ++i) {
        auto p = register_party("merchant-" + std::to_string(i) + "@shop",
                                "merchant/" + std::to_string(i), i % cfg_.num_banks,
                                Role::Merchant, false);
        if (!p.ok()) return p.error();
        merchants_.push_back(p.value());
        endorser_actors_[p.value().chain_actor.id] = p.value().chain_actor;
    }
    for (std::uint32_t i = 0; i < cfg_.num_couriers; ++i) {
        auto p = register_party("courier-" + std::to_string(i) + "@fleet",
                                "courier/" + std::to_string(i), i % cfg_.num_banks, Role::Courier,
                                true);
        if (!p.ok()) return p.error();
        couriers_.push_back(p.value());
    }

    // Platform settlement wallet and per-bank operational wallets.
    {
        crypto::KeyPair keys = keys_for(cfg_.rng_seed, "platform-wallet");
        GatewayRequest req;
        req.kind = GatewayRequest::Kind::Register;
        req.platform_user_id = "ops@platform-0";
        req.bank_id = banks_[0].id;
        req.wallet_keys = keys;
        auto resp = gateway_->api(banks_[0].cert, req);
        if (!resp.ok) return resp.error;
        platform_wallet_ = resp.binding->wallet_id;
    }
    for (std::uint32_t i = 0; i < cfg_.num_banks; ++i) {
        crypto::KeyPair keys = keys_for(cfg_.rng_seed, "bank-ops/" + std::to_string(i));
        GatewayRequest req;
        req.kind = GatewayRequest::Kind::Register;
        req.platform_user_id = "ops@bank-" + std::to_string(i);
        req.bank_id = banks_[i].id;
        req.wallet_keys = keys;
        auto resp = gateway_->api(banks_[i].cert, req);
        if (!resp.ok) return resp.error;
        ops_wallets_.push_back(resp.binding->wallet_id);
    }

    for (const auto& bank : banks_) endorser_actors_[bank.id] = bank;
    endorser_actors_[platform_.id] = platform_;

    EngineConfig engine;
    engine.commission_rate_bp = cfg_.commission_rate_bp;
    engine.endorse_timeout_ms = cfg_.endorse_timeout_ms;
    engine.wallet_banks = registry_.bank_directory();
    engine.platform_wallets[platform_.id] = platform_wallet_;
    engine.trust = trust_;

    chain_ = std::make_unique<Chain>(ChainConfig{cfg_.batch_size, cfg_.block_timer_ms}, trust_,
                                     engine);

    watcher_ = std::make_unique<SettlementWatcher>(
        *chain_, *ledger_, registry_, banks_,
        cfg_.scenario == ScenarioKind::ProofPerSettlement);
    for (std::uint32_t i = 0; i < cfg_.num_banks; ++i)
        watcher_->set_ops_wallet(banks_[i].id, ops_wallets_[i]);
    for (const auto& fault : cfg_.faults) watcher_->inject_settlement_fault(fault.mode, fault.tx_id);

    // Fund the world: buyers carry escrow plus worst-case dispute deposit,
    // couriers their possible deposits, ops wallets the compensation pool.
    std::vector<Amount> buyer_need(cfg_.num_buyers, 0);
    std::vector<Amount> courier_need(cfg_.num_couriers, 0);
    Amount total_price = 0;
    for (const auto& intent : intents_) {
        buyer_need[intent.buyer] += 2 * intent.price;
        courier_need[intent.courier] += intent.price;
        total_price += intent.price;
    }
    for (std::uint32_t i = 0; i < cfg_.num_buyers; ++i)
        if (buyer_need[i] > 0) {
            auto r = ledger_->mint(buyers_[i].wallet, buyer_need[i], ca_.cert);
            if (!r.ok()) return r.error();
        }
    for (std::uint32_t i = 0; i < cfg_.num_couriers; ++i)
        if (courier_need[i] > 0) {
            auto r = ledger_->mint(couriers_[i].wallet, courier_need[i], ca_.cert);
            if (!r.ok()) return r.error();
        }
    for (const auto& ops : ops_wallets_) {
        auto r = ledger_->mint(ops, total_price > 0 ? total_price : 1, ca_.cert);
        if (!r.ok()) return r.error();
    }

    buyer_queues_.assign(cfg_.num_buyers, {});
    for (std::size_t i = 0; i < intents_.size(); ++i)
        buyer_queues_[intents_[i].buyer].push_back(i);
    return ok_status();
}

void Simulation::submit_intent(std::size_t idx, std::uint64_t now) {
    const PurchaseIntent& intent = intents_[idx];
    Party& buyer = buyers_[intent.buyer];
    const Party& merchant = merchants_[intent.merchant];

    TransactionProposal p;
    p.tx_id = intent.tx_id;
    p.product_id = intent.product_id;
    p.price = intent.price;
    p.merchant_wallet = merchant.wallet;
    p.buyer_wallet = buyer.wallet;
    p.platform_id = platform_.id;
    p.buyer_signature = crypto::sign(buyer.wallet_keys.secret_key, p.signing_bytes());

    chain_->submit(make_op(buyer.chain_actor, OpKind::SubmitProposal, intent.tx_id, p.serialize()),
                   now);

    TxTrack track;
    track.intent = idx;
    track.submit_ms = now;
    tracks_[intent.tx_id] = track;

    // Pay into escrow right away; the banks verify the lock when endorsing.
    GatewayRequest pay;
    pay.kind = GatewayRequest::Kind::PayEscrow;
    pay.tx_id = intent.tx_id;
    pay.amount = intent.price;
    pay.purpose = LockPurpose::Escrow;
    gateway_->api(buyer.chain_actor.cert, pay);

    // Endorsement window: if the contract is still collecting votes past
    // the deadline, the platform records the timeout.
    at(now + cfg_.endorse_timeout_ms, [this, tx = intent.tx_id](std::uint64_t t) {
        auto c = chain_->query_state(tx);
        if (c.ok() && c.value().state == ContractState::Endorsing) {
            ContractUpdate update;
            update.kind = UpdateKind::EndorsementTimeout;
            chain_->submit(make_op(platform_, OpKind::ContractUpdate, tx, update.serialize()), t);
        }
    });
}

void Simulation::schedule_endorsements(const std::string& tx_id, std::uint64_t now) {
    auto contract = chain_->query_state(tx_id);
    if (!contract.ok()) return;
    const EscrowContract& c = contract.value();
    const Hash32 digest = c.proposal.digest();
    const Amount price = c.proposal.price;

    for (const auto& endorser_id : c.required_endorsers) {
        auto it = endorser_actors_.find(endorser_id);
        if (it == endorser_actors_.end()) continue;
        Actor actor = it->second;
        at(now + cfg_.tick_ms, [this, tx_id, actor, digest, price](std::uint64_t t) {
            Verdict verdict = Verdict::Approve;
            if (actor.cert.role == Role::Bank) {
                // Both banks check the escrow wallet before endorsing.
                auto lock = ledger_->find_lock(tx_id, LockPurpose::Escrow);
                if (!lock || lock->amount != price) verdict = Verdict::Reject;
            }
            Endorsement en = make_endorsement(actor, tx_id, verdict, digest);
            chain_->submit(make_op(actor, OpKind::SubmitEndorsement, tx_id, en.serialize()), t);
        });
    }
}

void Simulation::submit_confirm(const std::string& tx_id, std::uint64_t now) {
    const PurchaseIntent& intent = intents_[tracks_[tx_id].intent];
    Party& buyer = buyers_[intent.buyer];
    BuyerDecision decision = cfg_.scenario == ScenarioKind::ReshippingDispute
                                 ? BuyerDecision::Null
                                 : BuyerDecision::Confirmed;
    chain_->submit(
        make_op(buyer.chain_actor, OpKind::BuyerConfirm, tx_id, encode_buyer_confirm(decision)),
        now);
}

void Simulation::open_dispute_flow(const std::string& tx_id, std::uint64_t now) {
    const PurchaseIntent& intent = intents_[tracks_[tx_id].intent];
    Party& buyer = buyers_[intent.buyer];
    Party& courier = couriers_[intent.courier];

    GatewayRequest dep;
    dep.kind = GatewayRequest::Kind::PayEscrow;
    dep.tx_id = tx_id;
    dep.amount = intent.price;
    dep.purpose = LockPurpose::BuyerDeposit;
    auto buyer_resp = gateway_->api(buyer.chain_actor.cert, dep);
    dep.purpose = LockPurpose::CourierDeposit;
    auto courier_resp = gateway_->api(courier.chain_actor.cert, dep);
    if (!buyer_resp.ok || !courier_resp.ok) return;

    Bytes payload = encode_dispute_open(buyer_resp.token, courier_resp.token);
    chain_->submit(make_op(platform_, OpKind::DisputeOpen, tx_id, std::move(payload)), now);
}

void Simulation::run_challenge(const std::string& tx_id, std::uint64_t now) {
    (void)now;
    const PurchaseIntent& intent = intents_[tracks_[tx_id].intent];
    watcher_->challenge(tx_id, merchants_[intent.merchant].chain_actor.cert);
}

void Simulation::process_commits(std::uint64_t now) {
    auto events = chain_->poll_commits(commit_cursor_);
    for (const auto& event : events) {
        if (!event.accepted || !event.state) continue;
        auto tit = tracks_.find(event.op.tx_id);
        if (tit == tracks_.end()) continue;
        TxTrack& track = tit->second;
        const std::string tx_id = event.op.tx_id;

        switch (*event.state) {
            case ContractState::Endorsing:
                if (event.op.kind == OpKind::SubmitProposal && !track.have_endorsing) {
                    track.have_endorsing = true;
                    track.endorsing_ms = now;
                    ++proposals_committed_;
                    if (endorse_auto_) schedule_endorsements(tx_id, now);
                }
                break;
            case ContractState::Locked:
                if (!track.have_locked) {
                    track.have_locked = true;
                    track.locked_ms = now;
                    ++locked_count_;
                    if (courier_auto_) {
                        const PurchaseIntent& intent = intents_[track.intent];
                        Actor courier = couriers_[intent.courier].chain_actor;
                        at(now + 2 * cfg_.tick_ms, [this, tx_id, courier](std::uint64_t t) {
                            chain_->submit(make_op(courier, OpKind::CourierAttest, tx_id, {}), t);
                        });
                    }
                }
                break;
            case ContractState::Delivered:
                if (confirm_auto_)
                    at(now + cfg_.tick_ms,
                       [this, tx_id](std::uint64_t t) { submit_confirm(tx_id, t); });
                break;
            case ContractState::Disputed:
                if (event.op.kind == OpKind::BuyerConfirm) {
                    at(now + cfg_.tick_ms,
                       [this, tx_id](std::uint64_t t) { open_dispute_flow(tx_id, t); });
                } else if (event.op.kind == OpKind::DisputeOpen) {
                    at(now + cfg_.tick_ms, [this, tx_id](std::uint64_t t) {
                        // Couriers hold verifiable delivery proof, so the
                        // platform finds for the courier and settlement runs.
                        chain_->submit(make_op(platform_, OpKind::DisputeResolve, tx_id,
                                               encode_dispute_resolve(DisputeWinner::Courier)),
                                       t);
                    });
                }
                break;
            case ContractState::Settled:
            case ContractState::Refunded:
                if (!track.done) {
                    track.done = true;
                    track.absorbed_ms = now;
                    ++completed_;
                    if (watcher_->faulted_txs().count(tx_id) && !challenge_scheduled_.count(tx_id)) {
                        challenge_scheduled_.insert(tx_id);
                        at(now + cfg_.tick_ms,
                           [this, tx_id](std::uint64_t t) { run_challenge(tx_id, t); });
                    }
                    const PurchaseIntent& intent = intents_[track.intent];
                    auto& queue = buyer_queues_[intent.buyer];
                    if (!queue.empty() && queue.front() == track.intent) queue.pop_front();
                    if (!queue.empty()) {
                        std::size_t next = queue.front();
                        at(now + cfg_.tick_ms,
                           [this, next](std::uint64_t t) { submit_intent(next, t); });
                    }
                }
                break;
            default:
                break;
        }
    }
}

void Simulation::watch_fault_tasks(std::uint64_t now) {
    for (const auto& [key, task] : watcher_->tasks()) {
        if (task.action != SettlementAction::Release || task.status != TaskStatus::Failed)
            continue;
        if (task.reason.rfind("fault:", 0) != 0) continue;
        if (challenge_scheduled_.count(task.tx_id)) continue;
        challenge_scheduled_.insert(task.tx_id);
        std::string tx_id = task.tx_id;
        at(now + 2 * cfg_.tick_ms, [this, tx_id](std::uint64_t t) { run_challenge(tx_id, t); });
        // A skipped settlement never reaches Settled; the compensation
        // closes the transaction for completion accounting.
        auto& track = tracks_[tx_id];
        if (!track.done) {
            track.done = true;
            track.absorbed_ms = now;
            ++completed_;
            const PurchaseIntent& intent = intents_[track.intent];
            auto& queue = buyer_queues_[intent.buyer];
            if (!queue.empty() && queue.front() == track.intent) queue.pop_front();
            if (!queue.empty()) {
                std::size_t next = queue.front();
                at(now + cfg_.tick_ms, [this, next](std::uint64_t t) { submit_intent(next, t); });
            }
        }
    }
}

void Simulation::pump(std::uint64_t& now, const std::function<bool()>& finished) {
    const std::uint64_t horizon =
        now + (static_cast<std::uint64_t>(cfg_.num_transactions) * 40 + 4000) * cfg_.tick_ms +
        cfg_.endorse_timeout_ms * 4;
    while (!finished() && now < horizon) {
        while (!schedule_.empty() && schedule_.begin()->first.first <= now) {
            auto it = schedule_.begin();
            auto fn = std::move(it->second);
            schedule_.erase(it);
            fn(now);
        }
        if (chain_->cut_due(now)) {
            chain_->cut_block(now);
            if (!ledger_->conservation().holds()) conservation_each_block_ = false;
            process_commits(now);
            watcher_->poll(now);
            watch_fault_tasks(now);
            process_commits(now);
        }
        if (finished()) break;
        now += cfg_.tick_ms;
    }
    end_ms_ = now;
}

StageMetrics Simulation::stage_metrics(const std::string& stage) const {
    StageMetrics m;
    m.stage = stage;
    std::uint64_t entry_min = UINT64_MAX, exit_max = 0;
    double latency_sum = 0;
    std::uint64_t n = 0;
    for (const auto& [tx, t] : tracks_) {
        std::uint64_t entry = 0, exit = 0;
        if (stage == "proposal") {
            if (!t.have_endorsing) continue;
            entry = t.submit_ms;
            exit = t.endorsing_ms;
        } else if (stage == "endorsement") {
            if (!t.have_locked) continue;
            entry = stage_start_ms_ ? std::max(stage_start_ms_, t.endorsing_ms) : t.endorsing_ms;
            exit = t.locked_ms;
        } else {
            if (!t.done) continue;
            entry = stage_start_ms_ ? std::max(stage_start_ms_, t.locked_ms) : t.locked_ms;
            exit = t.absorbed_ms;
        }
        if (exit < entry) continue;
        entry_min = std::min(entry_min, entry);
        exit_max = std::max(exit_max, exit);
        latency_sum += static_cast<double>(exit - entry) / 1000.0;
        ++n;
    }
    m.completed = n;
    if (n > 0) {
        m.avg_latency_s = latency_sum / static_cast<double>(n);
        double span = static_cast<double>(exit_max - entry_min) / 1000.0;
        m.tps = span > 0 ? static_cast<double>(n) / span : static_cast<double>(n);
    }
    return m;
}

Result<MetricsReport> Simulation::run_full() {
    auto wall_start = std::chrono::steady_clock::now();
    std::uint64_t now = 0;

    for (std::uint32_t b = 0; b < cfg_.num_buyers; ++b)
        if (!buyer_queues_[b].empty()) {
            std::size_t first = buyer_queues_[b].front();
            at(0, [this, first](std::uint64_t t) { submit_intent(first, t); });
        }

    pump(now, [this] { return completed_ >= intents_.size(); });

    // Post-run: a deterministic sample of clean settled transactions is
    // challenged to confirm proofs are supplied, never compensation.
    std::size_t sampled = 0;
    for (const auto& [tx, track] : tracks_) {
        if (sampled >= 5) break;
        if (!track.done || watcher_->faulted_txs().count(tx)) continue;
        auto c = chain_->query_state(tx);
        if (!c.ok() || c.value().state != ContractState::Settled) continue;
        run_challenge(tx, now);
        ++sampled;
    }

    auto wall_end = std::chrono::steady_clock::now();

    MetricsReport report;
    report.scenario = to_string(cfg_.scenario);
    report.num_transactions = cfg_.num_transactions;
    report.batch_size = cfg_.batch_size;
    report.rng_seed = cfg_.rng_seed;
    report.commission_rate_bp = cfg_.commission_rate_bp;
    report.completed = completed_;
    report.wall_seconds =
        std::chrono::duration<double>(wall_end - wall_start).count();
    report.sim_seconds = static_cast<double>(end_ms_) / 1000.0;
    report.blocks = chain_->blocks().size();
    for (const auto& b : chain_->blocks()) report.committed_ops += b.ops.size();

    std::uint64_t first_submit = UINT64_MAX, last_absorb = 0;
    double latency_sum = 0;
    std::uint64_t latency_n = 0;
    for (const auto& [tx, t] : tracks_) {
        if (!t.done) continue;
        first_submit = std::min(first_submit, t.submit_ms);
        last_absorb = std::max(last_absorb, t.absorbed_ms);
        latency_sum += static_cast<double>(t.absorbed_ms - t.submit_ms) / 1000.0;
        ++latency_n;
    }
    if (latency_n > 0) {
        report.avg_latency_s = latency_sum / static_cast<double>(latency_n);
        double span = static_cast<double>(last_absorb - first_submit) / 1000.0;
        report.throughput_tps =
            span > 0 ? static_cast<double>(latency_n) / span : static_cast<double>(latency_n);
        if (cfg_.wall_clock && report.wall_seconds > 0)
            report.throughput_tps = static_cast<double>(latency_n) / report.wall_seconds;
    }

    report.stages.push_back(stage_metrics("proposal"));
    report.stages.push_back(stage_metrics("endorsement"));
    report.stages.push_back(stage_metrics("escrow"));

    for (const auto& c : watcher_->challenge_cases()) {
        if (c.outcome == ChallengeOutcome::ProofSupplied)
            ++report.challenges_proof_supplied;
        else
            ++report.challenges_compensated;
    }

    report.invariants = audit();
    report.world_digest = to_hex(chain_->world().digest());
    {
        Encoder e;
        for (const auto& [wallet, amount] : ledger_->balances()) {
            e.str(wallet);
            e.i64(amount);
        }
        report.balances_digest = to_hex(crypto::sha256(e.take()));
    }
    {
        Encoder e;
        for (const auto& b : chain_->blocks()) e.bytes(b.serialize());
        report.block_log_digest = to_hex(crypto::sha256(e.take()));
    }
    return report;
}

Result<StageMetrics> Simulation::run_stage(const std::string& stage) {
    std::uint64_t now = 0;

    if (stage == "proposal") {
        endorse_auto_ = courier_auto_ = confirm_auto_ = false;
        for (std::size_t i = 0; i < intents_.size(); ++i)
            at(0, [this, i](std::uint64_t t) { submit_intent(i, t); });
        pump(now, [this] { return proposals_committed_ >= intents_.size(); });
        return stage_metrics("proposal");
    }

    if (stage == "endorsement") {
        endorse_auto_ = courier_auto_ = confirm_auto_ = false;
        for (std::size_t i = 0; i < intents_.size(); ++i)
            at(0, [this, i](std::uint64_t t) { submit_intent(i, t); });
        pump(now, [this] { return proposals_committed_ >= intents_.size(); });

        stage_start_ms_ = now;
        for (const auto& [tx, track] : tracks_) schedule_endorsements(tx, now);
        pump(now, [this] { return locked_count_ >= intents_.size(); });
        return stage_metrics("endorsement");
    }

    if (stage == "escrow") {
        endorse_auto_ = true;
        courier_auto_ = false;
        confirm_auto_ = true;
        for (std::size_t i = 0; i < intents_.size(); ++i)
            at(0, [this, i](std::uint64_t t) { submit_intent(i, t); });
        pump(now, [this] { return locked_count_ >= intents_.size(); });

        stage_start_ms_ = now;
        for (const auto& [tx, track] : tracks_) {
            Actor courier = couriers_[intents_[track.intent].courier].chain_actor;
            std::string tx_id = tx;
            at(now, [this, tx_id, courier](std::uint64_t t) {
                chain_->submit(make_op(courier, OpKind::CourierAttest, tx_id, {}), t);
            });
        }
        pump(now, [this] { return completed_ >= intents_.size(); });
        return stage_metrics("escrow");
    }

    return Err::ConfigInvalid;
}

std::vector<InvariantCheck> Simulation::audit() {
    std::vector<InvariantCheck> checks;
    auto add = [&](const std::string& name, bool pass, std::string detail) {
        checks.push_back(InvariantCheck{name, pass, std::move(detail)});
    };

    // Money is conserved after every block and at the end.
    auto totals = ledger_->conservation();
    add("conservation", conservation_each_block_ && totals.holds(),
        "spendable=" + std::to_string(totals.spendable) + " locked=" +
            std::to_string(totals.locked) + " minted=" + std::to_string(totals.minted) +
            " redeemed=" + std::to_string(totals.redeemed));

    add("hash-chain", Chain::verify_blocks(chain_->blocks()),
        std::to_string(chain_->blocks().size()) + " blocks");

    bool batch_ok = true;
    std::size_t max_ops = 0;
    for (const auto& b : chain_->blocks()) {
        batch_ok = batch_ok && b.ops.size() <= cfg_.batch_size && !b.ops.empty();
        max_ops = std::max(max_ops, b.ops.size());
    }
    add("batch-bound", batch_ok, "max block ops " + std::to_string(max_ops));

    {
        std::set<std::string> keys;
        bool unique = true;
        for (const auto& b : chain_->blocks())
            for (const auto& op : b.ops) unique = unique && keys.insert(op.dedup_key()).second;
        add("exactly-once-commit", unique, std::to_string(keys.size()) + " distinct ops");
    }

    {
        std::string path = "/tmp/spay-replay-" + std::to_string(cfg_.rng_seed) + "-" +
                           to_string(cfg_.scenario) + ".log";
        bool ok = chain_->save_log(path).ok();
        if (ok) {
            auto loaded = Chain::load_log(path);
            ok = loaded.ok() && Chain::verify_blocks(loaded.value());
            if (ok) {
                WorldState replayed = Chain::replay(loaded.value(), chain_->engine().config());
                ok = replayed.serialize() == chain_->world().serialize();
            }
        }
        std::remove(path.c_str());
        add("determinism-replay", ok, "block log round-trip + fold");
    }

    {
        bool complete = true;
        std::uint64_t absorbed = 0;
        for (const auto& intent : intents_) {
            auto c = chain_->query_state(intent.tx_id);
            bool tx_ok = c.ok() && (is_absorbing(c.value().state) ||
                                    (watcher_->faulted_txs().count(intent.tx_id) &&
                                     challenge_scheduled_.count(intent.tx_id)));
            complete = complete && tx_ok;
            if (c.ok() && is_absorbing(c.value().state)) ++absorbed;
        }
        add("completion", complete,
            std::to_string(absorbed) + "/" + std::to_string(intents_.size()) + " absorbing");
    }

    {
        bool ok = true;
        for (const auto& [tx, contract] : chain_->world().contracts) {
            bool all_approve = contract.endorsements.size() == contract.required_endorsers.size();
            const Hash32 digest = contract.proposal.digest();
            for (const auto& [id, en] : contract.endorsements)
                all_approve = all_approve && en.verdict == Verdict::Approve &&
                              en.proposal_digest == digest;
            bool locked = tracks_.count(tx) ? tracks_[tx].have_locked
                                            : contract.state != ContractState::Rejected &&
                                                  contract.state != ContractState::Endorsing;
            ok = ok && (locked == all_approve);
        }
        add("endorsement-completeness", ok, "locked iff unanimous approval");
    }

    {
        bool ok = true;
        for (const auto& [tx, contract] : chain_->world().contracts) {
            if (!contract.settlement_instruction) continue;
            bool justified = false;
            auto lit = chain_->world().op_logs.find(tx);
            if (lit != chain_->world().op_logs.end())
                for (const auto& op : lit->second) {
                    if (op.kind == OpKind::BuyerConfirm &&
                        decode_buyer_confirm(op.payload) == BuyerDecision::Confirmed)
                        justified = true;
                    if (op.kind == OpKind::DisputeResolve &&
                        decode_dispute_resolve(op.payload) == DisputeWinner::Courier)
                        justified = true;
                }
            ok = ok && justified;
        }
        add("no-settlement-without-confirmation", ok, "instructions backed by committed ops");
    }

    {
        bool ok = true;
        std::uint64_t disputes = 0;
        for (const auto& [tx, contract] : chain_->world().contracts) {
            if (!contract.dispute || !contract.dispute->resolved) continue;
            ++disputes;
            const DisputeCase& d = *contract.dispute;
            Amount p = contract.proposal.price;
            ok = ok && d.buyer_deposit == p && d.courier_deposit == p;
            ok = ok && d.winner_amount == p + p / 2;
            ok = ok && d.winner_amount + d.platform_amount == 2 * p;
        }
        add("dispute-arithmetic", ok, std::to_string(disputes) + " disputes");
    }

    {
        bool ok = true;
        std::uint64_t proofs = 0;
        for (const auto& [tx, contract] : chain_->world().contracts) {
            if (contract.state != ContractState::Settled) continue;
            if (watcher_->faulted_txs().count(tx)) continue;
            auto proof = ledger_->find_proof(tx, LockPurpose::Escrow);
            bool good = proof && ledger_->verify_settlement_proof(*proof);
            if (good && contract.settlement_instruction) {
                // On-/off-chain agreement: credited amounts match the
                // instruction exactly.
                const auto& si = *contract.settlement_instruction;
                Amount merchant_credit = 0, platform_credit = 0;
                for (const auto& [owner, amount] : proof->outputs) {
                    if (owner == si.merchant_wallet) merchant_credit += amount;
                    if (owner == si.platform_wallet) platform_credit += amount;
                }
                good = merchant_credit == si.merchant_amount &&
                       platform_credit == si.platform_amount;
            }
            ok = ok && good;
            if (good) ++proofs;
        }
        add("settlement-proofs", ok, std::to_string(proofs) + " proofs verified");
    }

    {
        // Privacy partition: no buyer platform identity in any chain byte
        // or platform-visible artifact; platform balance queries denied.
        Bytes corpus;
        for (const auto& b : chain_->blocks()) {
            Bytes bb = b.serialize();
            corpus.insert(corpus.end(), bb.begin(), bb.end());
        }
        Bytes ws = chain_->world().serialize();
        corpus.insert(corpus.end(), ws.begin(), ws.end());
        for (const auto& c : watcher_->challenge_cases()) {
            corpus.insert(corpus.end(), c.tx_id.begin(), c.tx_id.end());
            corpus.insert(corpus.end(), c.merchant_id.begin(), c.merchant_id.end());
        }
        std::string corpus_str(corpus.begin(), corpus.end());
        bool leak_free = true;
        for (const auto& buyer : buyers_)
            if (corpus_str.find(buyer.user_id) != std::string::npos) leak_free = false;

        bool denied = true;
        std::size_t trials = 0;
        for (const auto& buyer : buyers_) {
            auto r = ledger_->query_balance(buyer.wallet, platform_.cert);
            denied = denied && !r.ok() && r.error() == Err::Unauthorized;
            ++trials;
        }
        add("privacy-partition", leak_free && denied,
            std::to_string(trials) + " platform queries denied; no user id bytes on chain");
    }

    {
        // Fund security: releasing without (or with forged) chain proof
        // must never move money, even through the custodying bank's path.
        std::size_t attempts = 0, successes = 0;
        auto all_locks = ledger_->locks();
        for (const auto& lock : all_locks) {
            if (attempts >= 400) break;
            std::vector<std::pair<std::string, Amount>> outs{{lock.funded_from, lock.amount}};
            auto r1 = ledger_->release_escrow(lock.lock_id, std::nullopt, outs);
            if (r1.ok()) ++successes;
            ChainProof forged;
            forged.height = 0;
            forged.op_bytes = {0x01, 0x02, 0x03};
            auto r2 = ledger_->release_escrow(lock.lock_id, forged, outs);
            if (r2.ok()) ++successes;
            attempts += 2;
        }
        add("escrow-safety", successes == 0,
            std::to_string(attempts) + " adversarial release attempts, " +
                std::to_string(successes) + " succeeded");
    }

    {
        bool ok = true;
        for (const auto& [tx, contract] : chain_->world().contracts) {
            if (contract.state != ContractState::Confirmed &&
                contract.state != ContractState::Settled)
                continue;
            std::string key = tx + "/Release";
            auto it = watcher_->tasks().find(key);
            bool released = it != watcher_->tasks().end() && it->second.status == TaskStatus::Done;
            bool compensated = false;
            for (const auto& c : watcher_->challenge_cases())
                if (c.tx_id == tx && c.outcome == ChallengeOutcome::Compensated)
                    compensated = true;
            ok = ok && (released || compensated);
        }
        add("eventual-settlement", ok, "every confirmed contract released or compensated");
    }

    {
        bool ok = true;
        for (const auto& c : watcher_->challenge_cases()) {
            bool faulted = watcher_->faulted_txs().count(c.tx_id) > 0;
            if (c.outcome == ChallengeOutcome::Compensated && !faulted) ok = false;
            if (c.outcome == ChallengeOutcome::ProofSupplied && faulted) ok = false;
        }
        add("challenge-soundness", ok,
            std::to_string(watcher_->challenge_cases().size()) + " challenges");
    }

    return checks;
}

}  // namespace

Result<MetricsReport> run_scenario(const ScenarioConfig& config) {
    if (config.scenario == ScenarioKind::BatchSweep) return Err::ConfigInvalid;
    Simulation sim(config);
    auto s = sim.setup();
    if (!s.ok()) return s.error();
    return sim.run_full();
}

Result<SweepTable> run_batch_sweep(const ScenarioConfig& config) {
    auto v = config.validate();
    if (!v.ok()) return v.error();

    SweepTable table;
    for (std::size_t size : config.sweep_sizes) {
        for (const char* stage : {"proposal", "endorsement", "escrow"}) {
            ScenarioConfig stage_cfg = config;
            stage_cfg.scenario = ScenarioKind::Normal;
            stage_cfg.batch_size = size;
            stage_cfg.faults.clear();
            Simulation sim(stage_cfg);
            auto s = sim.setup();
            if (!s.ok()) return s.error();
            auto m = sim.run_stage(stage);
            if (!m.ok()) return m.error();
            SweepRow row;
            row.batch_size = size;
            row.stage = m.value().stage;
            row.tps = m.value().tps;
            row.avg_latency_s = m.value().avg_latency_s;
            row.completed = m.value().completed;
            table.rows.push_back(row);
        }
    }
    return table;
}

bool MetricsReport::all_invariants_pass() const {
    for (const auto& check : invariants)
        if (!check.pass) return false;
    return true;
}

std::string MetricsReport::to_json() const {
    ordered_json j;
    j["scenario"] = scenario;
    j["num_transactions"] = num_transactions;
    j["batch_size"] = batch_size;
    j["rng_seed"] = rng_seed;
    j["commission_rate_bp"] = commission_rate_bp;
    j["throughput_tps"] = throughput_tps;
    j["avg_latency_s"] = avg_latency_s;
    j["completed"] = completed;
    j["sim_seconds"] = sim_seconds;
    j["wall_seconds"] = wall_seconds;
    j["blocks"] = blocks;
    j["committed_ops"] = committed_ops;
    j["stages"] = ordered_json::array();
    for (const auto& s : stages) {
        ordered_json js;
        js["stage"] = s.stage;
        js["tps"] = s.tps;
        js["avg_latency_s"] = s.avg_latency_s;
        js["completed"] = s.completed;
        j["stages"].push_back(js);
    }
    j["invariants"] = ordered_json::array();
    for (const auto& c : invariants) {
        ordered_json jc;
        jc["name"] = c.name;
        jc["pass"] = c.pass;
        jc["detail"] = c.detail;
        j["invariants"].push_back(jc);
    }
    j["challenges_proof_supplied"] = challenges_proof_supplied;
    j["challenges_compensated"] = challenges_compensated;
    j["world_digest"] = world_digest;
    j["balances_digest"] = balances_digest;
    j["block_log_digest"] = block_log_digest;
    return j.dump();
}

const char* MetricsReport::csv_header() {
    return "scenario,num_transactions,batch_size,rng_seed,stage,tps,avg_latency_s,completed,"
           "invariants_pass";
}

std::string MetricsReport::to_csv() const {
    std::ostringstream out;
    out << csv_header() << "\n";
    auto row = [&](const std::string& stage, double tps, double lat, std::uint64_t n) {
        out << scenario << ',' << num_transactions << ',' << batch_size << ',' << rng_seed << ','
            << stage << ',' << tps << ',' << lat << ',' << n << ','
            << (all_invariants_pass() ? "1" : "0") << "\n";
    };
    row("all", throughput_tps, avg_latency_s, completed);
    for (const auto& s : stages) row(s.stage, s.tps, s.avg_latency_s, s.completed);
    return out.str();
}

std::string MetricsReport::to_human() const {
    std::ostringstream out;
    out << "scenario " << scenario << "  (" << num_transactions << " tx, batch " << batch_size
        << ", seed " << rng_seed << ")\n";
    out << "  throughput: " << throughput_tps << " tx/s   avg latency: " << avg_latency_s
        << " s   completed: " << completed << "\n";
    out << "  blocks: " << blocks << "  ops: " << committed_ops
        << "  sim: " << sim_seconds << " s  wall: " << wall_seconds << " s\n";
    out << "  stages:\n";
    for (const auto& s : stages)
        out << "    " << s.stage << ": " << s.tps << " tx/s, " << s.avg_latency_s << " s avg\n";
    out << "  challenges: " << challenges_proof_supplied << " proof-supplied, "
        << challenges_compensated << " compensated\n";
    out << "  invariants:\n";
    for (const auto& c : invariants)
        out << "    [" << (c.pass ? "PASS" : "FAIL") << "] " << c.name << " — " << c.detail
            << "\n";
    return out.str();
}

std::string SweepTable::to_json() const {
    ordered_json j = ordered_json::array();
    for (const auto& r : rows) {
        ordered_json jr;
        jr["batch_size"] = r.batch_size;
        jr["stage"] = r.stage;
        jr["tps"] = r.tps;
        jr["avg_latency_s"] = r.avg_latency_s;
        jr["completed"] = r.completed;
        j.push_back(jr);
    }
    return j.dump();
}

std::string SweepTable::to_csv() const {
    std::ostringstream out;
    out << "batch_size,stage,tps,avg_latency_s,completed\n";
    for (const auto& r : rows)
        out << r.batch_size << ',' << r.stage << ',' << r.tps << ',' << r.avg_latency_s << ','
            << r.completed << "\n";
    return out.str();
}

std::string SweepTable::to_human() const {
    std::ostringstream out;
    out << "batch-size sweep (per-stage, isolated runs)\n";
    for (const auto& r : rows)
        out << "  batch " << r.batch_size << "  " << r.stage << ": " << r.tps << " tx/s, "
            << r.avg_latency_s << " s avg (" << r.completed << " done)\n";
    return out.str();
}

std::optional<ReportFormat> format_from_string(const std::string& name) {
    if (name == "jsonl" || name == "json") return ReportFormat::JsonLines;
    if (name == "csv") return ReportFormat::Csv;
    if (name == "human") return ReportFormat::Human;
    return std::nullopt;
}

Status emit_report(const std::string& content, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) return Err::IoError;
    out << content;
    if (!content.empty() && content.back() != '\n') out << '\n';
    return out.good() ? ok_status() : Status(Err::IoError);
}

}  // namespace spay::bench
