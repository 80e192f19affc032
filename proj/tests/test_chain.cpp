#include <gtest/gtest.h>

#include <spay/chain.hpp>

#include <cstdio>
#include <fstream>
#include <random>

using namespace spay;

namespace {

crypto::Seed seed_of(std::uint8_t fill) {
    crypto::Seed s{};
    s.fill(fill);
    return s;
}

struct ChainWorld {
    Actor ca, bank0, bank1, platform, buyer, merchant, courier;
    std::string buyer_wallet, merchant_wallet;
    TrustStore trust;
    EngineConfig engine;

    ChainWorld() {
        ca.id = "central-authority";
        ca.keys = crypto::generate_keypair(seed_of(1));
        ca.cert.subject_id = ca.id;
        ca.cert.role = Role::CentralAuthority;
        ca.cert.public_key = ca.keys.public_key;
        ca.cert.issuer_id = ca.id;
        ca.cert.issuer_signature = crypto::sign(ca.keys.secret_key, ca.cert.signing_bytes());

        auto party = [&](std::uint8_t seed, Role role, const Actor& issuer, std::string name) {
            Actor a;
            a.keys = crypto::generate_keypair(seed_of(seed));
            a.id = name.empty() ? "w:" + crypto::hash20_hex(a.keys.public_key) : name;
            a.cert = issue_certificate(issuer, a.keys.public_key, a.id, role).value();
            return a;
        };
        bank0 = party(2, Role::Bank, ca, "bank-0");
        bank1 = party(3, Role::Bank, ca, "bank-1");
        platform = party(4, Role::Platform, ca, "platform-0");
        buyer = party(5, Role::Buyer, bank0, "");
        merchant = party(6, Role::Merchant, bank1, "");
        courier = party(7, Role::Courier, ca, "");
        buyer_wallet = crypto::hash20_hex(buyer.keys.public_key);
        merchant_wallet = crypto::hash20_hex(merchant.keys.public_key);

        trust.set_root(ca.cert);
        trust.add_issuer(bank0.cert);
        trust.add_issuer(bank1.cert);

        engine.commission_rate_bp = 500;
        engine.wallet_banks[buyer_wallet] = bank0.id;
        engine.wallet_banks[merchant_wallet] = bank1.id;
        engine.platform_wallets[platform.id] = "feedfacefeedfacefeedfacefeedfacefeedface";
        engine.trust = trust;
    }

    Chain make_chain(std::size_t batch = 20, std::uint64_t timer = 500) const {
        return Chain(ChainConfig{batch, timer}, trust, engine);
    }

    ChainOp proposal_op(const std::string& tx, Amount price) const {
        TransactionProposal p;
        p.tx_id = tx;
        p.product_id = "sku-9";
        p.price = price;
        p.merchant_wallet = merchant_wallet;
        p.buyer_wallet = buyer_wallet;
        p.platform_id = platform.id;
        p.buyer_signature = crypto::sign(buyer.keys.secret_key, p.signing_bytes());
        return make_op(buyer, OpKind::SubmitProposal, tx, p.serialize());
    }

    ChainOp endorse_op(const Actor& actor, const std::string& tx, const Hash32& digest) const {
        Endorsement en = make_endorsement(actor, tx, Verdict::Approve, digest);
        return make_op(actor, OpKind::SubmitEndorsement, tx, en.serialize());
    }

    // Drives one transaction to Settled through chain ops alone.
    void run_happy_path(Chain& chain, const std::string& tx, Amount price) const {
        ASSERT_TRUE(chain.submit(proposal_op(tx, price), 0).ok());
        ASSERT_TRUE(chain.cut_block(0).ok());
        Hash32 digest = chain.query_state(tx).value().proposal.digest();
        for (const Actor* a : {&bank0, &bank1, &merchant, &platform})
            ASSERT_TRUE(chain.submit(endorse_op(*a, tx, digest), 1).ok());
        ASSERT_TRUE(chain.cut_block(1).ok());
        ASSERT_EQ(chain.query_state(tx).value().state, ContractState::Locked);
        ASSERT_TRUE(chain.submit(make_op(courier, OpKind::CourierAttest, tx, {}), 2).ok());
        ASSERT_TRUE(chain.cut_block(2).ok());
        ASSERT_TRUE(chain
                        .submit(make_op(buyer, OpKind::BuyerConfirm, tx,
                                        encode_buyer_confirm(BuyerDecision::Confirmed)),
                                3)
                        .ok());
        ASSERT_TRUE(chain.cut_block(3).ok());
        ContractUpdate done;
        done.kind = UpdateKind::SettlementDone;
        done.proof_id = "p-" + tx;
        ASSERT_TRUE(
            chain.submit(make_op(bank0, OpKind::ContractUpdate, tx, done.serialize()), 4).ok());
        ASSERT_TRUE(chain.cut_block(4).ok());
    }
};

}  // namespace

TEST(Submit, AckPositionsAndValidation) {
    ChainWorld w;
    Chain chain = w.make_chain();

    auto ack = chain.submit(w.proposal_op("t1", 100), 0);
    ASSERT_TRUE(ack.ok());
    EXPECT_EQ(ack.value().mempool_position, 0u);

    auto dup = chain.submit(w.proposal_op("t1", 100), 0);
    ASSERT_FALSE(dup.ok());
    EXPECT_EQ(dup.error(), Err::DuplicateOp);

    // Signed with a key that does not match the certificate.
    ChainOp bad = w.proposal_op("t2", 100);
    bad.signature = crypto::sign(w.merchant.keys.secret_key, bad.signing_bytes());
    auto r = chain.submit(bad, 0);
    ASSERT_FALSE(r.ok());
    EXPECT_EQ(r.error(), Err::InvalidSignature);

    // Unknown issuer.
    Actor rogue;
    rogue.id = "w:rogue";
    rogue.keys = crypto::generate_keypair(seed_of(42));
    rogue.cert.subject_id = rogue.id;
    rogue.cert.role = Role::Buyer;
    rogue.cert.public_key = rogue.keys.public_key;
    rogue.cert.issuer_id = "bank-9";
    rogue.cert.issuer_signature = crypto::sign(rogue.keys.secret_key, rogue.cert.signing_bytes());
    auto unknown = chain.submit(make_op(rogue, OpKind::CourierAttest, "t3", {}), 0);
    ASSERT_FALSE(unknown.ok());
    EXPECT_EQ(unknown.error(), Err::UnknownCertificate);
}

TEST(CutBlock, BatchBoundAndRemainder) {
    ChainWorld w;
    Chain chain = w.make_chain(20, 500);
    for (int i = 0; i < 25; ++i)
        ASSERT_TRUE(chain.submit(w.proposal_op("t" + std::to_string(i), 100), 0).ok());

    auto block = chain.cut_block(0);
    ASSERT_TRUE(block.ok());
    EXPECT_EQ(block.value().ops.size(), 20u);
    EXPECT_EQ(chain.mempool_size(), 5u);
}

TEST(CutBlock, TimerPathAndEmptyMempool) {
    ChainWorld w;
    Chain chain = w.make_chain(20, 500);
    auto empty = chain.cut_block(0);
    ASSERT_FALSE(empty.ok());
    EXPECT_EQ(empty.error(), Err::EmptyMempool);

    for (int i = 0; i < 5; ++i)
        ASSERT_TRUE(chain.submit(w.proposal_op("t" + std::to_string(i), 100), 10).ok());
    EXPECT_FALSE(chain.cut_due(10));  // below batch, timer not expired
    EXPECT_TRUE(chain.cut_due(510));  // timer expired
    auto block = chain.cut_block(510);
    ASSERT_TRUE(block.ok());
    EXPECT_EQ(block.value().ops.size(), 5u);
}

TEST(CutBlock, SameTickTieBreakIsDeterministic) {
    ChainWorld w;
    Chain a = w.make_chain();
    Chain b = w.make_chain();
    // Same ops, opposite submission order, same arrival tick.
    ASSERT_TRUE(a.submit(w.proposal_op("t1", 100), 0).ok());
    ASSERT_TRUE(a.submit(w.proposal_op("t2", 100), 0).ok());
    ASSERT_TRUE(b.submit(w.proposal_op("t2", 100), 0).ok());
    ASSERT_TRUE(b.submit(w.proposal_op("t1", 100), 0).ok());
    auto ba = a.cut_block(0);
    auto bb = b.cut_block(0);
    ASSERT_TRUE(ba.ok() && bb.ok());
    EXPECT_EQ(ba.value().block_hash, bb.value().block_hash);
}

TEST(Query, StatesAndNotFound) {
    ChainWorld w;
    Chain chain = w.make_chain();
    EXPECT_EQ(chain.query_state("nope").error(), Err::NotFound);

    ASSERT_TRUE(chain.submit(w.proposal_op("t1", 100), 0).ok());
    ASSERT_TRUE(chain.cut_block(0).ok());
    auto c = chain.query_state("t1");
    ASSERT_TRUE(c.ok());
    EXPECT_EQ(c.value().state, ContractState::Endorsing);
    EXPECT_EQ(c.value().proposal.price, 100);
}

TEST(Query, HappyPathEndsSettled) {
    ChainWorld w;
    Chain chain = w.make_chain();
    w.run_happy_path(chain, "t1", 100);
    auto c = chain.query_state("t1");
    ASSERT_TRUE(c.ok());
    EXPECT_EQ(c.value().state, ContractState::Settled);
    ASSERT_TRUE(c.value().settlement_instruction.has_value());
    EXPECT_EQ(c.value().settlement_instruction->merchant_amount, 95);
}

TEST(Commits, SubscribersSeeIdenticalOrderedEvents) {
    ChainWorld w;
    Chain chain = w.make_chain();
    for (int i = 0; i < 3; ++i)
        ASSERT_TRUE(chain.submit(w.proposal_op("t" + std::to_string(i), 100), 0).ok());
    ASSERT_TRUE(chain.cut_block(0).ok());

    std::size_t cur1 = chain.subscribe_commits();
    std::size_t cur2 = chain.subscribe_commits();
    auto ev1 = chain.poll_commits(cur1);
    auto ev2 = chain.poll_commits(cur2);
    ASSERT_EQ(ev1.size(), 3u);
    ASSERT_EQ(ev2.size(), 3u);
    for (std::size_t i = 0; i < ev1.size(); ++i) {
        EXPECT_EQ(ev1[i].op.digest(), ev2[i].op.digest());
        EXPECT_EQ(ev1[i].op_index, i);
    }
    // Nothing more until the next block.
    EXPECT_TRUE(chain.poll_commits(cur1).empty());
}

TEST(Replay, FoldReproducesWorldByteForByte) {
    ChainWorld w;
    Chain chain = w.make_chain();
    w.run_happy_path(chain, "t1", 100);
    w.run_happy_path(chain, "t2", 333);

    WorldState replayed = Chain::replay(chain.blocks(), w.engine);
    EXPECT_EQ(replayed.serialize(), chain.world().serialize());
    EXPECT_EQ(replayed.digest(), chain.world().digest());
}

TEST(Replay, BlockLogRoundTripWithMagic) {
    ChainWorld w;
    Chain chain = w.make_chain();
    w.run_happy_path(chain, "t1", 100);

    std::string path = "/tmp/spay-test-log.bin";
    ASSERT_TRUE(chain.save_log(path).ok());
    {
        std::ifstream in(path, std::ios::binary);
        char magic[4];
        in.read(magic, 4);
        EXPECT_EQ(std::string(magic, 4), "SPAY");
    }
    auto loaded = Chain::load_log(path);
    ASSERT_TRUE(loaded.ok());
    ASSERT_TRUE(Chain::verify_blocks(loaded.value()));
    WorldState replayed = Chain::replay(loaded.value(), w.engine);
    EXPECT_EQ(replayed.serialize(), chain.world().serialize());
    std::remove(path.c_str());
}

TEST(Integrity, AnyMutationBreaksVerification) {
    ChainWorld w;
    Chain chain = w.make_chain();
    w.run_happy_path(chain, "t1", 100);
    ASSERT_TRUE(Chain::verify_blocks(chain.blocks()));

    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        auto blocks = chain.blocks();
        Block& victim = blocks[rng() % blocks.size()];
        switch (rng() % 4) {
            case 0: victim.prev_hash[rng() % 32] ^= 0x01; break;
            case 1: victim.block_hash[rng() % 32] ^= 0x01; break;
            case 2: victim.ops_root[rng() % 32] ^= 0x01; break;
            default: {
                ChainOp& op = victim.ops[rng() % victim.ops.size()];
                if (op.payload.empty()) op.tx_id += "x";
                else op.payload[rng() % op.payload.size()] ^= 0x01;
                break;
            }
        }
        EXPECT_FALSE(Chain::verify_blocks(blocks));
    }
}

TEST(Proofs, MerkleInclusionRoundTrip) {
    ChainWorld w;
    Chain chain = w.make_chain();
    for (int i = 0; i < 7; ++i)
        ASSERT_TRUE(chain.submit(w.proposal_op("t" + std::to_string(i), 100), 0).ok());
    ASSERT_TRUE(chain.cut_block(0).ok());

    const Block& b = chain.blocks()[0];
    for (std::uint32_t i = 0; i < b.ops.size(); ++i) {
        ChainProof p = chain.make_proof(0, i);
        Hash32 leaf = crypto::sha256(p.op_bytes);
        EXPECT_TRUE(merkle_verify(leaf, p.op_index, p.path, b.ops_root));
        // Wrong index or tampered op bytes must not verify.
        EXPECT_FALSE(merkle_verify(leaf, p.op_index + 1, p.path, b.ops_root));
        Bytes bad = p.op_bytes;
        bad[0] ^= 0x01;
        EXPECT_FALSE(merkle_verify(crypto::sha256(bad), p.op_index, p.path, b.ops_root));
    }
}

TEST(Commits, ExactlyOnePerDedupKey) {
    ChainWorld w;
    Chain chain = w.make_chain();
    w.run_happy_path(chain, "t1", 100);
    std::set<std::string> keys;
    for (const auto& b : chain.blocks())
        for (const auto& op : b.ops) EXPECT_TRUE(keys.insert(op.dedup_key()).second);
}
