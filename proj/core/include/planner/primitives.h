#pragma once

// Deterministic, seedable stand-ins for the cryptography a planner deployment
// relies on. The algorithms are real (libsodium) so message sizes mean
// something; key material is derived from 64-bit seeds so whole runs replay
// byte-for-byte.

#include <algorithm>
#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace planner {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

using ClientId = std::uint32_t;
using ClientList = std::vector<ClientId>;

template <std::size_t N, typename Tag>
struct FixedBytes {
  static constexpr std::size_t kSize = N;
  std::array<std::uint8_t, N> bytes{};

  ByteView view() const { return {bytes.data(), bytes.size()}; }
  bool is_zero() const {
    return std::all_of(bytes.begin(), bytes.end(),
                       [](std::uint8_t b) { return b == 0; });
  }
  auto operator<=>(const FixedBytes&) const = default;
};

struct DigestTag {};
struct NonceTag {};
struct SignatureTag {};
struct PublicKeyTag {};
struct SecretKeyTag {};
struct SymmetricKeyTag {};
struct MacTag {};

using Digest = FixedBytes<32, DigestTag>;
using Nonce = FixedBytes<16, NonceTag>;
using Signature = FixedBytes<64, SignatureTag>;
using PublicKey = FixedBytes<32, PublicKeyTag>;
using SecretKey = FixedBytes<64, SecretKeyTag>;
using SymmetricKey = FixedBytes<32, SymmetricKeyTag>;
using Mac = FixedBytes<32, MacTag>;

std::string to_hex(ByteView data);
template <std::size_t N, typename Tag>
std::string to_hex(const FixedBytes<N, Tag>& value) {
  return to_hex(value.view());
}
// Throws std::invalid_argument on odd length or non-hex characters.
Bytes from_hex(std::string_view hex);
template <typename Fixed>
Fixed fixed_from_hex(std::string_view hex) {
  Bytes raw = from_hex(hex);
  if (raw.size() != Fixed::kSize) {
    throw std::invalid_argument("hex value has wrong width");
  }
  Fixed out;
  std::copy(raw.begin(), raw.end(), out.bytes.begin());
  return out;
}

Bytes to_bytes(std::string_view text);

struct KeyPair {
  PublicKey public_key;
  SecretKey secret_key;
  std::uint64_t owner_id = 0;
};

KeyPair keygen(std::uint64_t seed, std::uint64_t owner_id = 0);
Signature sign(const SecretKey& sk, ByteView message);
bool verify(const PublicKey& pk, ByteView message, const Signature& sig);

Digest hash(ByteView data);
inline Digest hash(std::string_view text) {
  return hash(ByteView(reinterpret_cast<const std::uint8_t*>(text.data()),
                       text.size()));
}

SymmetricKey dh_shared(const SecretKey& my_sk, const PublicKey& peer_pk);

struct AeadBox {
  Bytes ciphertext;
  FixedBytes<16, MacTag> mac;
};
AeadBox aead_encrypt(const SymmetricKey& key, const Nonce& nonce,
                     ByteView plaintext);
// Throws ProtocolError(kMacFailure) when any of key, nonce, ciphertext or
// mac has been altered.
Bytes aead_decrypt(const SymmetricKey& key, const Nonce& nonce,
                   ByteView ciphertext, const FixedBytes<16, MacTag>& mac);

Mac mac_compute(const SymmetricKey& key, ByteView data);
bool mac_verify(const SymmetricKey& key, ByteView data, const Mac& tag);

// Party-local generator. Streams are split from a master seed by a label
// and an index, so one party's draws never shift another party's.
class PartyRng {
 public:
  using result_type = std::uint64_t;

  PartyRng(std::uint64_t master_seed, std::string_view label,
           std::uint64_t index = 0);

  static constexpr result_type min() { return std::mt19937_64::min(); }
  static constexpr result_type max() { return std::mt19937_64::max(); }
  result_type operator()() { return engine_(); }

  Nonce nonce();
  SymmetricKey symmetric_key();
  std::uint64_t seed() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

// Field-ordered, length-prefixed encoding used for every hash, signature and
// quote payload: each field is a 4-byte big-endian length and its raw bytes.
class CanonicalWriter {
 public:
  CanonicalWriter& field(ByteView data);
  CanonicalWriter& field(std::string_view text);
  template <std::size_t N, typename Tag>
  CanonicalWriter& field(const FixedBytes<N, Tag>& value) {
    return field(value.view());
  }
  CanonicalWriter& u64(std::uint64_t value);
  CanonicalWriter& f64(double value);
  // Client lists are sorted before encoding so digests ignore input order.
  CanonicalWriter& indices(std::span<const ClientId> ids);
  CanonicalWriter& doubles(std::span<const double> values);

  const Bytes& bytes() const& { return out_; }
  Bytes bytes() && { return std::move(out_); }

 private:
  Bytes out_;
};

// Inverse of CanonicalWriter. Throws std::out_of_range on truncated input.
class CanonicalReader {
 public:
  explicit CanonicalReader(ByteView data) : data_(data) {}

  ByteView field();
  std::string text();
  template <typename Fixed>
  Fixed fixed() {
    ByteView raw = field();
    if (raw.size() != Fixed::kSize) {
      throw std::out_of_range("fixed-width field has wrong length");
    }
    Fixed out;
    std::copy(raw.begin(), raw.end(), out.bytes.begin());
    return out;
  }
  std::uint64_t u64();
  double f64();
  ClientList indices();
  std::vector<double> doubles();
  bool done() const { return pos_ == data_.size(); }

 private:
  ByteView data_;
  std::size_t pos_ = 0;
};

struct Quote {
  Digest code_id;
  Bytes payload;
  Signature signature;

  bool operator==(const Quote&) const = default;
};

struct SealedBlob {
  Digest code_id;
  Bytes ciphertext;  // 16-byte nonce followed by the encrypted state
  FixedBytes<16, MacTag> tag;

  bool operator==(const SealedBlob&) const = default;
};

// Code identity of the planner enclave binary.
const Digest& planner_code_id();

bool verify_quote(const Quote& quote, const Digest& expected_code_id,
                  const PublicKey& manufacturer_pk);

// The TEE hardware: one manufacturer-endorsed attestation key and one
// sealing root. Anything that holds a SealedBlob can replay it; staleness is
// the protocol's problem, not the platform's.
class TeePlatform {
 public:
  explicit TeePlatform(std::uint64_t seed);

  const PublicKey& manufacturer_public_key() const {
    return attestation_key_.public_key;
  }

  Quote attest(const Digest& code_id, ByteView payload) const;
  SealedBlob seal(const Digest& code_id, ByteView state) const;
  // Throws ProtocolError(kWrongCodeIdentity) or (kSealCorrupted).
  Bytes unseal(const Digest& code_id, const SealedBlob& blob) const;

 private:
  SymmetricKey sealing_key(const Digest& code_id) const;

  KeyPair attestation_key_;
  SymmetricKey seal_root_;
};

}  // namespace planner
