#include <gtest/gtest.h>

#include "planner/errors.h"
#include "planner/primitives.h"
#include "test_support.h"

namespace planner {
namespace {

using testing::code_of;

TEST(Keygen, SameSeedSameKeys) {
  KeyPair a = keygen(7);
  KeyPair b = keygen(7);
  EXPECT_EQ(a.public_key, b.public_key);
  EXPECT_EQ(a.secret_key, b.secret_key);
}

TEST(Keygen, DistinctSeedsDistinctKeys) {
  EXPECT_NE(keygen(7).public_key, keygen(8).public_key);
}

TEST(Signatures, RoundTrip) {
  KeyPair k = keygen(7);
  Bytes m = to_bytes("nonce-1");
  EXPECT_TRUE(verify(k.public_key, m, sign(k.secret_key, m)));
}

TEST(Signatures, FlippedMessageByteFails) {
  KeyPair k = keygen(7);
  Bytes m = to_bytes("nonce-1");
  Signature s = sign(k.secret_key, m);
  m[0] ^= 0x01;
  EXPECT_FALSE(verify(k.public_key, m, s));
}

TEST(Signatures, WrongKeyFails) {
  Bytes m = to_bytes("nonce-1");
  EXPECT_FALSE(verify(keygen(8).public_key, m, sign(keygen(7).secret_key, m)));
}

TEST(Hash, EmptyInputIsSha256OfNothing) {
  // FIPS 180-4 test vector.
  EXPECT_EQ(to_hex(hash(std::string_view(""))),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST(Hash, AbcVector) {
  EXPECT_EQ(to_hex(hash(std::string_view("abc"))),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Hash, AppendedZeroChangesDigest) {
  Bytes b = to_bytes("block");
  Bytes b0 = b;
  b0.push_back(0);
  EXPECT_EQ(hash(b), hash(b));
  EXPECT_NE(hash(b), hash(b0));
}

TEST(Hex, RoundTripAndRejects) {
  Bytes raw{0x00, 0x7f, 0xff, 0x10};
  EXPECT_EQ(to_hex(raw), "007fff10");
  EXPECT_EQ(from_hex("007fff10"), raw);
  EXPECT_EQ(from_hex("007FFF10"), raw);
  EXPECT_THROW(from_hex("abc"), std::invalid_argument);
  EXPECT_THROW(from_hex("zz"), std::invalid_argument);
  EXPECT_THROW(fixed_from_hex<Nonce>("00"), std::invalid_argument);
}

TEST(DiffieHellman, BothSidesAgree) {
  KeyPair a = keygen(11);
  KeyPair b = keygen(12);
  EXPECT_EQ(dh_shared(a.secret_key, b.public_key), dh_shared(b.secret_key, a.public_key));
  EXPECT_NE(dh_shared(a.secret_key, b.public_key), dh_shared(a.secret_key, keygen(13).public_key));
}

TEST(Aead, UpdateVectorRoundTrip) {
  PartyRng rng(1, "aead");
  SymmetricKey key = rng.symmetric_key();
  Nonce nonce = rng.nonce();
  std::vector<double> update{0.5, -1.25, 3.0, 1e-300};
  Bytes plain = CanonicalWriter().doubles(update).bytes();
  AeadBox box = aead_encrypt(key, nonce, plain);
  Bytes back = aead_decrypt(key, nonce, box.ciphertext, box.mac);
  CanonicalReader r(back);
  EXPECT_EQ(r.doubles(), update);
}

TEST(Aead, TamperingRaisesMacFailure) {
  PartyRng rng(2, "aead");
  SymmetricKey key = rng.symmetric_key();
  Nonce nonce = rng.nonce();
  AeadBox box = aead_encrypt(key, nonce, to_bytes("payload"));

  AeadBox flipped = box;
  flipped.ciphertext[0] ^= 0x01;
  EXPECT_EQ(code_of([&] { aead_decrypt(key, nonce, flipped.ciphertext, flipped.mac); }),
            Errc::kMacFailure);

  AeadBox bad_tag = box;
  bad_tag.mac.bytes[3] ^= 0x80;
  EXPECT_EQ(code_of([&] { aead_decrypt(key, nonce, bad_tag.ciphertext, bad_tag.mac); }),
            Errc::kMacFailure);

  Nonce other = nonce;
  other.bytes[0] ^= 0x01;
  EXPECT_EQ(code_of([&] { aead_decrypt(key, other, box.ciphertext, box.mac); }),
            Errc::kMacFailure);
}

TEST(Mac, VerifiesOnlyExactData) {
  SymmetricKey key = PartyRng(3, "mac").symmetric_key();
  Bytes data = to_bytes("control");
  Mac tag = mac_compute(key, data);
  EXPECT_TRUE(mac_verify(key, data, tag));
  data.back() ^= 0x01;
  EXPECT_FALSE(mac_verify(key, data, tag));
}

TEST(PartyRng, StreamsAreIndependentAndReproducible) {
  PartyRng a(5, "x", 0);
  PartyRng b(5, "x", 0);
  PartyRng c(5, "x", 1);
  PartyRng d(5, "y", 0);
  std::uint64_t va = a();
  EXPECT_EQ(va, b());
  EXPECT_NE(va, c());
  EXPECT_NE(va, d());
}

TEST(Canonical, LengthPrefixedBigEndianLayout) {
  Bytes got = CanonicalWriter().field(std::string_view("ab")).u64(258).bytes();
  Bytes want{0, 0, 0, 2, 'a', 'b', 0, 0, 0, 8, 0, 0, 0, 0, 0, 0, 1, 2};
  EXPECT_EQ(got, want);
}

TEST(Canonical, IndicesAreSortedBeforeEncoding) {
  ClientList a{7, 1, 3};
  ClientList b{1, 3, 7};
  EXPECT_EQ(CanonicalWriter().indices(a).bytes(), CanonicalWriter().indices(b).bytes());
  Bytes want{0, 0, 0, 12, 0, 0, 0, 1, 0, 0, 0, 3, 0, 0, 0, 7};
  EXPECT_EQ(CanonicalWriter().indices(a).bytes(), want);
}

TEST(Canonical, ReaderInvertsWriter) {
  CanonicalWriter w;
  w.field(std::string_view("hello")).u64(42).f64(-0.5).indices(ClientList{2, 9});
  CanonicalReader r(w.bytes());
  EXPECT_EQ(r.text(), "hello");
  EXPECT_EQ(r.u64(), 42u);
  EXPECT_EQ(r.f64(), -0.5);
  EXPECT_EQ(r.indices(), (ClientList{2, 9}));
  EXPECT_TRUE(r.done());
}

TEST(Canonical, TruncatedInputThrows) {
  Bytes b = CanonicalWriter().field(std::string_view("hello")).bytes();
  b.pop_back();
  CanonicalReader r(b);
  EXPECT_THROW(r.field(), std::out_of_range);
}

TEST(Attestation, QuoteVerifiesForMatchingCodeId) {
  TeePlatform tee(1);
  Quote q = tee.attest(planner_code_id(), to_bytes("p"));
  EXPECT_TRUE(verify_quote(q, planner_code_id(), tee.manufacturer_public_key()));
}

TEST(Attestation, TamperedPayloadFails) {
  TeePlatform tee(1);
  Quote q = tee.attest(planner_code_id(), to_bytes("p"));
  q.payload = to_bytes("q");
  EXPECT_FALSE(verify_quote(q, planner_code_id(), tee.manufacturer_public_key()));
}

TEST(Attestation, NonManufacturerKeyFails) {
  TeePlatform tee(1);
  TeePlatform rogue(2);
  Quote q = rogue.attest(planner_code_id(), to_bytes("p"));
  EXPECT_FALSE(verify_quote(q, planner_code_id(), tee.manufacturer_public_key()));
}

TEST(Attestation, OtherCodeIdFails) {
  TeePlatform tee(1);
  Digest other = hash(std::string_view("other-binary"));
  Quote q = tee.attest(other, to_bytes("p"));
  EXPECT_FALSE(verify_quote(q, planner_code_id(), tee.manufacturer_public_key()));
}

TEST(Sealing, RoundTrip) {
  TeePlatform tee(4);
  Bytes state = to_bytes("sealed state");
  EXPECT_EQ(tee.unseal(planner_code_id(), tee.seal(planner_code_id(), state)), state);
}

TEST(Sealing, WrongCodeIdentity) {
  TeePlatform tee(4);
  SealedBlob blob = tee.seal(planner_code_id(), to_bytes("s"));
  Digest other = hash(std::string_view("other-binary"));
  EXPECT_EQ(code_of([&] { tee.unseal(other, blob); }), Errc::kWrongCodeIdentity);
}

TEST(Sealing, TamperedBlobIsCorrupted) {
  TeePlatform tee(4);
  SealedBlob blob = tee.seal(planner_code_id(), to_bytes("state"));
  blob.ciphertext.back() ^= 0x01;
  EXPECT_EQ(code_of([&] { tee.unseal(planner_code_id(), blob); }), Errc::kSealCorrupted);
}

TEST(Sealing, OldBlobStillUnseals) {
  // Staleness is not the platform's business.
  TeePlatform tee(4);
  SealedBlob v1 = tee.seal(planner_code_id(), to_bytes("v1"));
  SealedBlob v2 = tee.seal(planner_code_id(), to_bytes("v2"));
  EXPECT_EQ(tee.unseal(planner_code_id(), v2), to_bytes("v2"));
  EXPECT_EQ(tee.unseal(planner_code_id(), v1), to_bytes("v1"));
}

TEST(Errors, NamesAreStable) {
  EXPECT_EQ(errc_name(Errc::kQuorumNotReached), "QuorumNotReached");
  ProtocolError e(Errc::kMacFailure, "sender 3");
  EXPECT_EQ(std::string(e.what()), "MacFailure: sender 3");
  EXPECT_EQ(e.code(), Errc::kMacFailure);
}

}  // namespace
}  // namespace planner
