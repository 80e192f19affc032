#include <gtest/gtest.h>

#include <spay/escrow.hpp>

#include <random>

using namespace spay;

namespace {

crypto::Seed seed_of(std::uint8_t fill) {
    crypto::Seed s{};
    s.fill(fill);
    return s;
}

struct World {
    Actor ca, bank0, bank1, platform, buyer, merchant, courier;
    std::string buyer_wallet, merchant_wallet, platform_wallet;
    ContractEngine engine{EngineConfig{}};

    World() : engine(make_engine()) {}

    static Actor root() {
        Actor ca;
        ca.id = "central-authority";
        ca.keys = crypto::generate_keypair(seed_of(1));
        ca.cert.subject_id = ca.id;
        ca.cert.role = Role::CentralAuthority;
        ca.cert.public_key = ca.keys.public_key;
        ca.cert.issuer_id = ca.id;
        ca.cert.issuer_signature = crypto::sign(ca.keys.secret_key, ca.cert.signing_bytes());
        return ca;
    }

    Actor party(std::uint8_t seed, Role role, const Actor& issuer, const std::string& name = "") {
        Actor a;
        a.keys = crypto::generate_keypair(seed_of(seed));
        a.id = name.empty() ? "w:" + crypto::hash20_hex(a.keys.public_key) : name;
        a.cert = issue_certificate(issuer, a.keys.public_key, a.id, role).value();
        return a;
    }

    EngineConfig make_engine() {
        ca = root();
        bank0 = party(2, Role::Bank, ca, "bank-0");
        bank1 = party(3, Role::Bank, ca, "bank-1");
        platform = party(4, Role::Platform, ca, "platform-0");
        buyer = party(5, Role::Buyer, bank0);
        merchant = party(6, Role::Merchant, bank1);
        courier = party(7, Role::Courier, ca);
        buyer_wallet = crypto::hash20_hex(buyer.keys.public_key);
        merchant_wallet = crypto::hash20_hex(merchant.keys.public_key);
        platform_wallet = "feedfacefeedfacefeedfacefeedfacefeedface";

        EngineConfig cfg;
        cfg.commission_rate_bp = 500;
        cfg.wallet_banks[buyer_wallet] = bank0.id;
        cfg.wallet_banks[merchant_wallet] = bank1.id;
        cfg.platform_wallets[platform.id] = platform_wallet;
        cfg.trust.set_root(ca.cert);
        cfg.trust.add_issuer(bank0.cert);
        cfg.trust.add_issuer(bank1.cert);
        return cfg;
    }

    TransactionProposal proposal(const std::string& tx, Amount price) const {
        TransactionProposal p;
        p.tx_id = tx;
        p.product_id = "sku-1";
        p.price = price;
        p.merchant_wallet = merchant_wallet;
        p.buyer_wallet = buyer_wallet;
        p.platform_id = platform.id;
        p.buyer_signature = crypto::sign(buyer.keys.secret_key, p.signing_bytes());
        return p;
    }

    PaymentToken token(const std::string& tx, LockPurpose purpose, Amount amount) const {
        PaymentToken t;
        t.tx_id = tx;
        t.purpose = purpose;
        t.amount = amount;
        t.lock_id = "lock-" + std::to_string(static_cast<int>(purpose));
        t.bank_id = bank0.id;
        t.bank_signature = crypto::sign(bank0.keys.secret_key, t.signing_bytes());
        return t;
    }

    // Drives a contract to Delivered.
    void to_delivered(ContractStore& store, const std::string& tx, Amount price,
                      std::vector<Instruction>& out) {
        auto req = engine.propose(store, proposal(tx, price), buyer.cert);
        ASSERT_TRUE(req.ok());
        for (const auto& id : req.value().required_endorsers) {
            const Actor& actor = id == bank0.id      ? bank0
                                 : id == bank1.id    ? bank1
                                 : id == platform.id ? platform
                                                     : merchant;
            auto r = engine.record_endorsement(
                store, make_endorsement(actor, tx, Verdict::Approve, req.value().proposal_digest),
                out);
            ASSERT_TRUE(r.ok());
        }
        ASSERT_EQ(store.at(tx).state, ContractState::Locked);
        ASSERT_TRUE(engine.courier_attest(store, tx, courier.cert).ok());
    }
};

}  // namespace

TEST(Propose, FourRequiredEndorsers) {
    World w;
    ContractStore store;
    auto req = w.engine.propose(store, w.proposal("t1", 100), w.buyer.cert);
    ASSERT_TRUE(req.ok());
    EXPECT_EQ(req.value().required_endorsers.size(), 4u);
    EXPECT_EQ(store.at("t1").state, ContractState::Endorsing);
}

TEST(Propose, SharedBankShrinksRequiredSetToThree) {
    World w;
    // Re-register the merchant wallet at the buyer's bank.
    EngineConfig cfg = w.engine.config();
    cfg.wallet_banks[w.merchant_wallet] = w.bank0.id;
    ContractEngine engine(cfg);
    ContractStore store;
    auto req = engine.propose(store, w.proposal("t1", 100), w.buyer.cert);
    ASSERT_TRUE(req.ok());
    EXPECT_EQ(req.value().required_endorsers.size(), 3u);
}

TEST(Propose, RejectsZeroPriceAndDuplicates) {
    World w;
    ContractStore store;
    auto bad = w.engine.propose(store, w.proposal("t1", 0), w.buyer.cert);
    ASSERT_FALSE(bad.ok());
    EXPECT_EQ(bad.error(), Err::NonPositivePrice);

    ASSERT_TRUE(w.engine.propose(store, w.proposal("t1", 100), w.buyer.cert).ok());
    auto dup = w.engine.propose(store, w.proposal("t1", 100), w.buyer.cert);
    ASSERT_FALSE(dup.ok());
    EXPECT_EQ(dup.error(), Err::DuplicateTxId);
}

TEST(Endorsement, UnanimousApproveLocksAndEmitsLock) {
    World w;
    ContractStore store;
    std::vector<Instruction> out;
    auto req = w.engine.propose(store, w.proposal("t1", 100), w.buyer.cert);
    ASSERT_TRUE(req.ok());
    for (const Actor* actor : {&w.bank0, &w.bank1, &w.merchant, &w.platform}) {
        auto r = w.engine.record_endorsement(
            store, make_endorsement(*actor, "t1", Verdict::Approve, req.value().proposal_digest),
            out);
        ASSERT_TRUE(r.ok());
    }
    EXPECT_EQ(store.at("t1").state, ContractState::Locked);
    ASSERT_EQ(out.size(), 1u);
    EXPECT_EQ(out[0].kind, Instruction::Kind::EnsureLock);
    EXPECT_EQ(out[0].amount, 100);
}

TEST(Endorsement, PlatformRejectRejectsContract) {
    World w;
    ContractStore store;
    std::vector<Instruction> out;
    auto req = w.engine.propose(store, w.proposal("t1", 100), w.buyer.cert);
    ASSERT_TRUE(req.ok());
    const Hash32 digest = req.value().proposal_digest;
    for (const Actor* actor : {&w.bank0, &w.bank1, &w.merchant})
        ASSERT_TRUE(w.engine
                        .record_endorsement(store,
                                            make_endorsement(*actor, "t1", Verdict::Approve, digest),
                                            out)
                        .ok());
    ASSERT_TRUE(w.engine
                    .record_endorsement(
                        store, make_endorsement(w.platform, "t1", Verdict::Reject, digest), out)
                    .ok());
    EXPECT_EQ(store.at("t1").state, ContractState::Rejected);
    ASSERT_EQ(out.size(), 1u);
    EXPECT_EQ(out[0].kind, Instruction::Kind::RecordRefund);
}

TEST(Endorsement, MerchantAbsentTimeoutRejects) {
    World w;
    ContractStore store;
    std::vector<Instruction> out;
    auto req = w.engine.propose(store, w.proposal("t1", 100), w.buyer.cert);
    ASSERT_TRUE(req.ok());
    const Hash32 digest = req.value().proposal_digest;
    for (const Actor* actor : {&w.bank0, &w.bank1, &w.platform})
        ASSERT_TRUE(w.engine
                        .record_endorsement(store,
                                            make_endorsement(*actor, "t1", Verdict::Approve, digest),
                                            out)
                        .ok());
    EXPECT_EQ(store.at("t1").state, ContractState::Endorsing);

    ContractUpdate timeout;
    timeout.kind = UpdateKind::EndorsementTimeout;
    auto r = w.engine.apply_update(store, "t1", timeout, w.platform.cert, out);
    ASSERT_TRUE(r.ok());
    EXPECT_EQ(store.at("t1").state, ContractState::Rejected);
    ASSERT_EQ(out.size(), 1u);
    EXPECT_EQ(out[0].kind, Instruction::Kind::RecordRefund);
}

TEST(Endorsement, MismatchedDigestRejects) {
    World w;
    ContractStore store;
    std::vector<Instruction> out;
    auto req = w.engine.propose(store, w.proposal("t1", 100), w.buyer.cert);
    ASSERT_TRUE(req.ok());
    const Hash32 digest = req.value().proposal_digest;
    Hash32 wrong = digest;
    wrong[0] ^= 0xff;
    for (const Actor* actor : {&w.bank0, &w.bank1, &w.merchant})
        ASSERT_TRUE(w.engine
                        .record_endorsement(store,
                                            make_endorsement(*actor, "t1", Verdict::Approve, digest),
                                            out)
                        .ok());
    ASSERT_TRUE(w.engine
                    .record_endorsement(
                        store, make_endorsement(w.platform, "t1", Verdict::Approve, wrong), out)
                    .ok());
    EXPECT_EQ(store.at("t1").state, ContractState::Rejected);
}

TEST(Endorsement, GateErrors) {
    World w;
    ContractStore store;
    std::vector<Instruction> out;
    auto req = w.engine.propose(store, w.proposal("t1", 100), w.buyer.cert);
    ASSERT_TRUE(req.ok());
    const Hash32 digest = req.value().proposal_digest;

    auto stranger = w.engine.record_endorsement(
        store, make_endorsement(w.courier, "t1", Verdict::Approve, digest), out);
    ASSERT_FALSE(stranger.ok());
    EXPECT_EQ(stranger.error(), Err::NotRequiredEndorser);

    ASSERT_TRUE(w.engine
                    .record_endorsement(
                        store, make_endorsement(w.bank0, "t1", Verdict::Approve, digest), out)
                    .ok());
    auto twice = w.engine.record_endorsement(
        store, make_endorsement(w.bank0, "t1", Verdict::Approve, digest), out);
    ASSERT_FALSE(twice.ok());
    EXPECT_EQ(twice.error(), Err::AlreadyEndorsed);
}

TEST(Delivery, AttestationGates) {
    World w;
    ContractStore store;
    std::vector<Instruction> out;
    auto req = w.engine.propose(store, w.proposal("t1", 100), w.buyer.cert);
    ASSERT_TRUE(req.ok());

    auto early = w.engine.courier_attest(store, "t1", w.courier.cert);
    ASSERT_FALSE(early.ok());
    EXPECT_EQ(early.error(), Err::WrongPhase);

    for (const Actor* actor : {&w.bank0, &w.bank1, &w.merchant, &w.platform})
        ASSERT_TRUE(w.engine
                        .record_endorsement(store,
                                            make_endorsement(*actor, "t1", Verdict::Approve,
                                                             req.value().proposal_digest),
                                            out)
                        .ok());

    auto merchant_attest = w.engine.courier_attest(store, "t1", w.merchant.cert);
    ASSERT_FALSE(merchant_attest.ok());
    EXPECT_EQ(merchant_attest.error(), Err::WrongRole);

    auto ok = w.engine.courier_attest(store, "t1", w.courier.cert);
    ASSERT_TRUE(ok.ok());
    EXPECT_EQ(ok.value(), ContractState::Delivered);
}

TEST(Confirmation, SettlementSplitAtFivePercent) {
    World w;
    ContractStore store;
    std::vector<Instruction> out;
    w.to_delivered(store, "t1", 100, out);
    out.clear();

    auto r = w.engine.buyer_confirm(store, "t1", BuyerDecision::Confirmed, w.buyer.cert, out);
    ASSERT_TRUE(r.ok());
    EXPECT_EQ(r.value(), ContractState::Confirmed);
    ASSERT_EQ(out.size(), 1u);
    EXPECT_EQ(out[0].kind, Instruction::Kind::Settle);
    EXPECT_EQ(out[0].settle.merchant_amount, 95);
    EXPECT_EQ(out[0].settle.platform_amount, 5);

    auto twice = w.engine.buyer_confirm(store, "t1", BuyerDecision::Confirmed, w.buyer.cert, out);
    ASSERT_FALSE(twice.ok());
    EXPECT_EQ(twice.error(), Err::WrongPhase);
}

TEST(Confirmation, NullOpensDispute) {
    World w;
    ContractStore store;
    std::vector<Instruction> out;
    w.to_delivered(store, "t1", 100, out);
    out.clear();
    auto r = w.engine.buyer_confirm(store, "t1", BuyerDecision::Null, w.buyer.cert, out);
    ASSERT_TRUE(r.ok());
    EXPECT_EQ(r.value(), ContractState::Disputed);
    EXPECT_TRUE(out.empty());
}

TEST(Dispute, DepositValidation) {
    World w;
    ContractStore store;
    std::vector<Instruction> out;
    w.to_delivered(store, "t1", 100, out);
    ASSERT_TRUE(w.engine.buyer_confirm(store, "t1", BuyerDecision::Null, w.buyer.cert, out).ok());

    auto early = w.engine.resolve_dispute(store, "t1", DisputeWinner::Courier, w.platform.cert, out);
    ASSERT_FALSE(early.ok());
    EXPECT_EQ(early.error(), Err::WrongPhase);

    auto missing = w.engine.open_dispute(store, "t1",
                                         w.token("t1", LockPurpose::BuyerDeposit, 100),
                                         std::nullopt, w.platform.cert);
    ASSERT_FALSE(missing.ok());
    EXPECT_EQ(missing.error(), Err::MissingDeposit);

    auto short_dep = w.engine.open_dispute(store, "t1",
                                           w.token("t1", LockPurpose::BuyerDeposit, 100),
                                           w.token("t1", LockPurpose::CourierDeposit, 99),
                                           w.platform.cert);
    ASSERT_FALSE(short_dep.ok());
    EXPECT_EQ(short_dep.error(), Err::DepositMismatch);

    auto open = w.engine.open_dispute(store, "t1", w.token("t1", LockPurpose::BuyerDeposit, 100),
                                      w.token("t1", LockPurpose::CourierDeposit, 100),
                                      w.platform.cert);
    ASSERT_TRUE(open.ok());
    ASSERT_TRUE(store.at("t1").dispute.has_value());
}

TEST(Dispute, CourierWinPayoutAndSettlement) {
    World w;
    ContractStore store;
    std::vector<Instruction> out;
    w.to_delivered(store, "t1", 100, out);
    ASSERT_TRUE(w.engine.buyer_confirm(store, "t1", BuyerDecision::Null, w.buyer.cert, out).ok());
    ASSERT_TRUE(w.engine
                    .open_dispute(store, "t1", w.token("t1", LockPurpose::BuyerDeposit, 100),
                                  w.token("t1", LockPurpose::CourierDeposit, 100), w.platform.cert)
                    .ok());
    out.clear();

    auto r = w.engine.resolve_dispute(store, "t1", DisputeWinner::Courier, w.platform.cert, out);
    ASSERT_TRUE(r.ok());
    EXPECT_EQ(r.value(), ContractState::Confirmed);

    const DisputeCase& d = *store.at("t1").dispute;
    EXPECT_EQ(d.winner_amount, 150);
    EXPECT_EQ(d.platform_amount, 50);

    // Payout plus the escrow settlement follow-through.
    ASSERT_EQ(out.size(), 2u);
    EXPECT_EQ(out[0].kind, Instruction::Kind::DisputePayout);
    Amount courier_total = 0, platform_total = 0;
    for (const auto& payout : out[0].payouts)
        for (const auto& [wallet, amount] : payout.outputs) {
            if (wallet == w.platform_wallet) platform_total += amount;
            else courier_total += amount;
        }
    EXPECT_EQ(courier_total, 150);
    EXPECT_EQ(platform_total, 50);
    EXPECT_EQ(out[1].kind, Instruction::Kind::Settle);
    EXPECT_EQ(out[1].settle.merchant_amount, 95);
    EXPECT_EQ(out[1].settle.platform_amount, 5);
}

TEST(Dispute, BuyerWinOddPriceRefunds) {
    World w;
    ContractStore store;
    std::vector<Instruction> out;
    w.to_delivered(store, "t1", 101, out);
    ASSERT_TRUE(w.engine.buyer_confirm(store, "t1", BuyerDecision::Null, w.buyer.cert, out).ok());
    ASSERT_TRUE(w.engine
                    .open_dispute(store, "t1", w.token("t1", LockPurpose::BuyerDeposit, 101),
                                  w.token("t1", LockPurpose::CourierDeposit, 101), w.platform.cert)
                    .ok());
    out.clear();

    auto r = w.engine.resolve_dispute(store, "t1", DisputeWinner::Buyer, w.platform.cert, out);
    ASSERT_TRUE(r.ok());
    EXPECT_EQ(r.value(), ContractState::Refunded);

    const DisputeCase& d = *store.at("t1").dispute;
    EXPECT_EQ(d.winner_amount, 151);   // 101 + floor(101/2)
    EXPECT_EQ(d.platform_amount, 51);  // remainder to the platform

    ASSERT_EQ(out.size(), 2u);
    EXPECT_EQ(out[0].kind, Instruction::Kind::DisputePayout);
    EXPECT_EQ(out[1].kind, Instruction::Kind::Refund);
}

TEST(Arithmetic, PayoutConservationProperty) {
    std::mt19937_64 rng(7);
    for (int i = 0; i < 10'000; ++i) {
        Amount p = 1 + static_cast<Amount>(rng() % 1'000'000);
        auto split = dispute_split(p);
        EXPECT_EQ(split.winner_amount, p + p / 2);
        EXPECT_EQ(split.winner_amount + split.platform_amount, 2 * p);
    }
}

TEST(Arithmetic, SettlementSplitExactForAllRates) {
    std::mt19937_64 rng(8);
    for (int i = 0; i < 10'000; ++i) {
        Amount p = 1 + static_cast<Amount>(rng() % 1'000'000);
        std::uint32_t bp = static_cast<std::uint32_t>(rng() % 10'000);
        auto split = settlement_split(p, bp);
        EXPECT_EQ(split.merchant_amount + split.platform_amount, p);
        EXPECT_GE(split.merchant_amount, 0);
        EXPECT_GE(split.platform_amount, 0);
    }
}

TEST(StateMachine, RandomOpSequencesStayLegal) {
    World w;
    std::mt19937_64 rng(99);
    for (int trial = 0; trial < 200; ++trial) {
        ContractStore store;
        std::vector<Instruction> out;
        std::string tx = "t" + std::to_string(trial);
        Amount price = 1 + static_cast<Amount>(rng() % 1000);

        auto state_of = [&]() -> std::optional<ContractState> {
            auto it = store.find(tx);
            if (it == store.end()) return std::nullopt;
            return it->second.state;
        };

        for (int step = 0; step < 40; ++step) {
            auto before = state_of();
            switch (rng() % 8) {
                case 0: w.engine.propose(store, w.proposal(tx, price), w.buyer.cert); break;
                case 1: {
                    const Actor* actors[] = {&w.bank0, &w.bank1, &w.merchant, &w.platform};
                    Hash32 digest{};
                    if (auto it = store.find(tx); it != store.end())
                        digest = it->second.proposal.digest();
                    w.engine.record_endorsement(
                        store,
                        make_endorsement(*actors[rng() % 4], tx,
                                         rng() % 4 == 0 ? Verdict::Reject : Verdict::Approve,
                                         digest),
                        out);
                    break;
                }
                case 2: w.engine.courier_attest(store, tx, w.courier.cert); break;
                case 3:
                    w.engine.buyer_confirm(store, tx,
                                           rng() % 2 ? BuyerDecision::Confirmed : BuyerDecision::Null,
                                           w.buyer.cert, out);
                    break;
                case 4:
                    w.engine.open_dispute(store, tx, w.token(tx, LockPurpose::BuyerDeposit, price),
                                          w.token(tx, LockPurpose::CourierDeposit, price),
                                          w.platform.cert);
                    break;
                case 5:
                    w.engine.resolve_dispute(
                        store, tx, rng() % 2 ? DisputeWinner::Buyer : DisputeWinner::Courier,
                        w.platform.cert, out);
                    break;
                case 6: {
                    ContractUpdate u;
                    u.kind = static_cast<UpdateKind>(rng() % 4);
                    const Actor& submitter = u.kind == UpdateKind::EndorsementTimeout
                                                 ? w.platform
                                                 : w.bank0;
                    w.engine.apply_update(store, tx, u, submitter.cert, out);
                    break;
                }
                default: break;
            }
            auto after = state_of();
            if (before && after && *before != *after) {
                EXPECT_TRUE(is_legal_transition(*before, *after))
                    << to_string(*before) << " -> " << to_string(*after);
                EXPECT_FALSE(is_absorbing(*before));
            }
        }
    }
}
