#include <gtest/gtest.h>

#include <spay/crypto.hpp>
#include <spay/identity.hpp>

#include <random>

using namespace spay;

namespace {

crypto::Seed seed_of(std::uint8_t fill) {
    crypto::Seed s{};
    s.fill(fill);
    return s;
}

Actor make_root() {
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

}  // namespace

TEST(Keypair, ZeroSeedGoldenPublicKey) {
    auto kp = crypto::generate_keypair(seed_of(0));
    // Pinned output of the signature scheme for the all-zero seed.
    EXPECT_EQ(to_hex(kp.public_key),
              "3b6a27bcceb6a42d62a3a8d02a6f0d73653215771de243a63ac048a18b59da29");
}

TEST(Keypair, DeterministicForFixedSeed) {
    auto a = crypto::generate_keypair(seed_of(7));
    auto b = crypto::generate_keypair(seed_of(7));
    EXPECT_EQ(a.public_key, b.public_key);
    EXPECT_EQ(a.secret_key, b.secret_key);
}

TEST(Keypair, DistinctSeedsDistinctKeys) {
    auto a = crypto::generate_keypair(seed_of(1));
    auto b = crypto::generate_keypair(seed_of(2));
    EXPECT_NE(a.public_key, b.public_key);
}

TEST(Signatures, RoundTripAndMutationProperty) {
    std::mt19937_64 rng(1234);
    auto kp = crypto::generate_keypair(seed_of(9));
    for (int trial = 0; trial < 50; ++trial) {
        Bytes msg(1 + rng() % 200);
        for (auto& b : msg) b = static_cast<Byte>(rng());
        Bytes sig = crypto::sign(kp.secret_key, msg);
        ASSERT_TRUE(crypto::verify(kp.public_key, msg, sig));

        // Any single-bit mutation of message or signature must fail.
        Bytes bad_msg = msg;
        bad_msg[rng() % bad_msg.size()] ^= static_cast<Byte>(1 << (rng() % 8));
        EXPECT_FALSE(crypto::verify(kp.public_key, bad_msg, sig));

        Bytes bad_sig = sig;
        bad_sig[rng() % bad_sig.size()] ^= static_cast<Byte>(1 << (rng() % 8));
        EXPECT_FALSE(crypto::verify(kp.public_key, msg, bad_sig));
    }
}

TEST(Certificates, IssueAndVerifyRoundTrip) {
    Actor ca = make_root();
    auto subject = crypto::generate_keypair(seed_of(3));
    auto cert = issue_certificate(ca, subject.public_key, "buyer-1", Role::Buyer);
    ASSERT_TRUE(cert.ok());
    EXPECT_TRUE(verify_certificate(cert.value(), ca.id, ca.keys.public_key));
}

TEST(Certificates, BuyerMayNotIssue) {
    Actor ca = make_root();
    auto subject = crypto::generate_keypair(seed_of(3));
    Actor buyer;
    buyer.id = "buyer-1";
    buyer.keys = subject;
    buyer.cert = issue_certificate(ca, subject.public_key, buyer.id, Role::Buyer).value();

    auto other = crypto::generate_keypair(seed_of(4));
    auto r = issue_certificate(buyer, other.public_key, "someone", Role::Merchant);
    ASSERT_FALSE(r.ok());
    EXPECT_EQ(r.error(), Err::UnauthorizedIssuer);
}

TEST(Certificates, TamperedSignatureFails) {
    Actor ca = make_root();
    auto subject = crypto::generate_keypair(seed_of(3));
    auto cert = issue_certificate(ca, subject.public_key, "buyer-1", Role::Buyer).value();
    cert.issuer_signature[5] ^= 0x01;
    EXPECT_FALSE(verify_certificate(cert, ca.id, ca.keys.public_key));
}

TEST(Certificates, SerializationRoundTrip) {
    Actor ca = make_root();
    auto subject = crypto::generate_keypair(seed_of(5));
    auto cert = issue_certificate(ca, subject.public_key, "merchant-2", Role::Merchant).value();
    auto back = Certificate::deserialize(cert.serialize());
    ASSERT_TRUE(back.has_value());
    EXPECT_EQ(*back, cert);
}

TEST(TrustStoreTest, BankSubIssuerChainAndForgery) {
    Actor ca = make_root();
    Actor bank;
    bank.id = "bank-0";
    bank.keys = crypto::generate_keypair(seed_of(10));
    bank.cert = issue_certificate(ca, bank.keys.public_key, bank.id, Role::Bank).value();

    TrustStore trust;
    trust.set_root(ca.cert);
    trust.add_issuer(bank.cert);

    auto wallet = crypto::generate_keypair(seed_of(11));
    auto cert = issue_certificate(bank, wallet.public_key, "w:deadbeef", Role::Buyer).value();
    EXPECT_TRUE(trust.verify(cert));

    // Forged issuers must fail across randomized attempts.
    std::mt19937_64 rng(99);
    for (int i = 0; i < 100; ++i) {
        crypto::Seed s{};
        for (auto& b : s) b = static_cast<Byte>(rng());
        Actor rogue;
        rogue.id = "bank-0";  // impersonation: right name, wrong key
        rogue.keys = crypto::generate_keypair(s);
        rogue.cert = bank.cert;
        Certificate forged;
        forged.subject_id = "w:evil";
        forged.role = Role::Buyer;
        forged.public_key = wallet.public_key;
        forged.issuer_id = rogue.id;
        forged.issuer_signature = crypto::sign(rogue.keys.secret_key, forged.signing_bytes());
        EXPECT_FALSE(trust.verify(forged));
    }
}

TEST(Registry, RegisterDeriveAndDuplicate) {
    WalletRegistry registry;
    auto keys = crypto::generate_keypair(seed_of(20));
    auto binding = registry.register_wallet("user-1@shop", "bank-0", keys);
    ASSERT_TRUE(binding.ok());
    // wallet id is the 20-byte hash prefix of the public key.
    EXPECT_EQ(binding.value().wallet_id, crypto::hash20_hex(keys.public_key));
    EXPECT_EQ(binding.value().wallet_id.size(), 40u);

    auto again = registry.register_wallet("user-1@shop", "bank-0", keys);
    ASSERT_FALSE(again.ok());
    EXPECT_EQ(again.error(), Err::DuplicateRegistration);

    // Same user at a different bank is a distinct registration.
    auto keys2 = crypto::generate_keypair(seed_of(21));
    EXPECT_TRUE(registry.register_wallet("user-1@shop", "bank-1", keys2).ok());

    EXPECT_EQ(registry.bank_of(binding.value().wallet_id).value_or(""), "bank-0");
    EXPECT_TRUE(registry.wallet_public_key(binding.value().wallet_id).has_value());
    EXPECT_FALSE(registry.bank_of("unknown").has_value());
}
