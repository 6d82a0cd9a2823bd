#include "planner/primitives.h"

#include <sodium.h>

#include <bit>
#include <cstring>
#include <mutex>

#include "planner/errors.h"

namespace planner {
namespace {

void ensure_sodium() {
  static std::once_flag once;
  std::call_once(once, [] {
    if (sodium_init() < 0) throw std::runtime_error("libsodium init failed");
  });
}

constexpr char kHexDigits[] = "0123456789abcdef";

int hex_value(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}

void put_u32(Bytes& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) |
         (std::uint32_t{p[2]} << 8) | std::uint32_t{p[3]};
}

Bytes u64_bytes(std::uint64_t v) {
  Bytes out(8);
  for (int i = 7; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(v);
    v >>= 8;
  }
  return out;
}

std::uint64_t bytes_u64(ByteView raw) {
  if (raw.size() != 8) throw std::out_of_range("u64 field has wrong length");
  std::uint64_t v = 0;
  for (std::uint8_t b : raw) v = (v << 8) | b;
  return v;
}

std::array<std::uint8_t, 24> xnonce(const Nonce& nonce) {
  std::array<std::uint8_t, 24> out{};
  std::copy(nonce.bytes.begin(), nonce.bytes.end(), out.begin());
  return out;
}

}  // namespace

std::string to_hex(ByteView data) {
  std::string out;
  out.reserve(data.size() * 2);
  for (std::uint8_t b : data) {
    out.push_back(kHexDigits[b >> 4]);
    out.push_back(kHexDigits[b & 0x0f]);
  }
  return out;
}

Bytes from_hex(std::string_view hex) {
  if (hex.size() % 2 != 0) throw std::invalid_argument("odd-length hex");
  Bytes out(hex.size() / 2);
  for (std::size_t i = 0; i < out.size(); ++i) {
    int hi = hex_value(hex[2 * i]);
    int lo = hex_value(hex[2 * i + 1]);
    if (hi < 0 || lo < 0) throw std::invalid_argument("bad hex digit");
    out[i] = static_cast<std::uint8_t>((hi << 4) | lo);
  }
  return out;
}

Bytes to_bytes(std::string_view text) { return Bytes(text.begin(), text.end()); }

KeyPair keygen(std::uint64_t seed, std::uint64_t owner_id) {
  ensure_sodium();
  Digest material =
      hash(CanonicalWriter().field(std::string_view("keygen")).u64(seed).bytes());
  KeyPair kp;
  kp.owner_id = owner_id;
  crypto_sign_seed_keypair(kp.public_key.bytes.data(), kp.secret_key.bytes.data(),
                           material.bytes.data());
  return kp;
}

Signature sign(const SecretKey& sk, ByteView message) {
  ensure_sodium();
  Signature sig;
  crypto_sign_detached(sig.bytes.data(), nullptr, message.data(), message.size(),
                       sk.bytes.data());
  return sig;
}

bool verify(const PublicKey& pk, ByteView message, const Signature& sig) {
  ensure_sodium();
  return crypto_sign_verify_detached(sig.bytes.data(), message.data(),
                                     message.size(), pk.bytes.data()) == 0;
}

Digest hash(ByteView data) {
  ensure_sodium();
  Digest d;
  crypto_hash_sha256(d.bytes.data(), data.data(), data.size());
  return d;
}

SymmetricKey dh_shared(const SecretKey& my_sk, const PublicKey& peer_pk) {
  ensure_sodium();
  std::array<std::uint8_t, crypto_scalarmult_curve25519_BYTES> x_sk{}, x_pk{},
      shared{};
  crypto_sign_ed25519_sk_to_curve25519(x_sk.data(), my_sk.bytes.data());
  if (crypto_sign_ed25519_pk_to_curve25519(x_pk.data(), peer_pk.bytes.data()) !=
          0 ||
      crypto_scalarmult(shared.data(), x_sk.data(), x_pk.data()) != 0) {
    sodium_memzero(x_sk.data(), x_sk.size());
    throw ProtocolError(Errc::kMacFailure, "peer public key rejected");
  }
  sodium_memzero(x_sk.data(), x_sk.size());
  Digest d = hash(CanonicalWriter()
                      .field(std::string_view("dh"))
                      .field(ByteView(shared.data(), shared.size()))
                      .bytes());
  SymmetricKey key;
  key.bytes = d.bytes;
  return key;
}

AeadBox aead_encrypt(const SymmetricKey& key, const Nonce& nonce,
                     ByteView plaintext) {
  ensure_sodium();
  AeadBox box;
  box.ciphertext.resize(plaintext.size());
  unsigned long long mac_len = 0;
  auto npub = xnonce(nonce);
  crypto_aead_xchacha20poly1305_ietf_encrypt_detached(
      box.ciphertext.data(), box.mac.bytes.data(), &mac_len, plaintext.data(),
      plaintext.size(), nullptr, 0, nullptr, npub.data(), key.bytes.data());
  return box;
}

Bytes aead_decrypt(const SymmetricKey& key, const Nonce& nonce,
                   ByteView ciphertext, const FixedBytes<16, MacTag>& mac) {
  ensure_sodium();
  Bytes plain(ciphertext.size());
  auto npub = xnonce(nonce);
  if (crypto_aead_xchacha20poly1305_ietf_decrypt_detached(
          plain.data(), nullptr, ciphertext.data(), ciphertext.size(),
          mac.bytes.data(), nullptr, 0, npub.data(), key.bytes.data()) != 0) {
    throw ProtocolError(Errc::kMacFailure, "authenticated decryption failed");
  }
  return plain;
}

Mac mac_compute(const SymmetricKey& key, ByteView data) {
  ensure_sodium();
  Mac tag;
  crypto_auth_hmacsha256(tag.bytes.data(), data.data(), data.size(),
                         key.bytes.data());
  return tag;
}

bool mac_verify(const SymmetricKey& key, ByteView data, const Mac& tag) {
  ensure_sodium();
  return crypto_auth_hmacsha256_verify(tag.bytes.data(), data.data(),
                                       data.size(), key.bytes.data()) == 0;
}

PartyRng::PartyRng(std::uint64_t master_seed, std::string_view label,
                   std::uint64_t index) {
  Digest d = hash(
      CanonicalWriter().u64(master_seed).field(label).u64(index).bytes());
  std::array<std::uint32_t, 8> words{};
  for (std::size_t i = 0; i < words.size(); ++i) words[i] = get_u32(&d.bytes[4 * i]);
  std::seed_seq seq(words.begin(), words.end());
  engine_.seed(seq);
}

Nonce PartyRng::nonce() {
  Nonce n;
  for (std::size_t i = 0; i < n.bytes.size(); i += 8) {
    std::uint64_t v = engine_();
    std::memcpy(&n.bytes[i], &v, 8);
  }
  return n;
}

SymmetricKey PartyRng::symmetric_key() {
  SymmetricKey k;
  for (std::size_t i = 0; i < k.bytes.size(); i += 8) {
    std::uint64_t v = engine_();
    std::memcpy(&k.bytes[i], &v, 8);
  }
  return k;
}

CanonicalWriter& CanonicalWriter::field(ByteView data) {
  put_u32(out_, static_cast<std::uint32_t>(data.size()));
  out_.insert(out_.end(), data.begin(), data.end());
  return *this;
}

CanonicalWriter& CanonicalWriter::field(std::string_view text) {
  return field(ByteView(reinterpret_cast<const std::uint8_t*>(text.data()),
                        text.size()));
}

CanonicalWriter& CanonicalWriter::u64(std::uint64_t value) {
  return field(u64_bytes(value));
}

CanonicalWriter& CanonicalWriter::f64(double value) {
  return u64(std::bit_cast<std::uint64_t>(value));
}

CanonicalWriter& CanonicalWriter::indices(std::span<const ClientId> ids) {
  ClientList sorted(ids.begin(), ids.end());
  std::sort(sorted.begin(), sorted.end());
  Bytes raw;
  raw.reserve(sorted.size() * 4);
  for (ClientId id : sorted) put_u32(raw, id);
  return field(raw);
}

CanonicalWriter& CanonicalWriter::doubles(std::span<const double> values) {
  Bytes raw;
  raw.reserve(values.size() * 8);
  for (double v : values) {
    Bytes b = u64_bytes(std::bit_cast<std::uint64_t>(v));
    raw.insert(raw.end(), b.begin(), b.end());
  }
  return field(raw);
}

ByteView CanonicalReader::field() {
  if (data_.size() - pos_ < 4) throw std::out_of_range("truncated length prefix");
  std::uint32_t len = get_u32(data_.data() + pos_);
  pos_ += 4;
  if (data_.size() - pos_ < len) throw std::out_of_range("truncated field");
  ByteView out = data_.subspan(pos_, len);
  pos_ += len;
  return out;
}

std::string CanonicalReader::text() {
  ByteView raw = field();
  return std::string(raw.begin(), raw.end());
}

std::uint64_t CanonicalReader::u64() { return bytes_u64(field()); }

double CanonicalReader::f64() { return std::bit_cast<double>(u64()); }

ClientList CanonicalReader::indices() {
  ByteView raw = field();
  if (raw.size() % 4 != 0) throw std::out_of_range("index list misaligned");
  ClientList out;
  for (std::size_t i = 0; i < raw.size(); i += 4) out.push_back(get_u32(&raw[i]));
  return out;
}

std::vector<double> CanonicalReader::doubles() {
  ByteView raw = field();
  if (raw.size() % 8 != 0) throw std::out_of_range("double list misaligned");
  std::vector<double> out;
  for (std::size_t i = 0; i < raw.size(); i += 8) {
    out.push_back(std::bit_cast<double>(bytes_u64(raw.subspan(i, 8))));
  }
  return out;
}

const Digest& planner_code_id() {
  static const Digest id = hash(std::string_view("planner-enclave/1"));
  return id;
}

bool verify_quote(const Quote& quote, const Digest& expected_code_id,
                  const PublicKey& manufacturer_pk) {
  if (quote.code_id != expected_code_id) return false;
  Bytes signed_part =
      CanonicalWriter().field(quote.code_id).field(quote.payload).bytes();
  return verify(manufacturer_pk, signed_part, quote.signature);
}

TeePlatform::TeePlatform(std::uint64_t seed) {
  PartyRng rng(seed, "tee-platform");
  attestation_key_ = keygen(rng.seed());
  seal_root_ = rng.symmetric_key();
}

Quote TeePlatform::attest(const Digest& code_id, ByteView payload) const {
  Quote q;
  q.code_id = code_id;
  q.payload.assign(payload.begin(), payload.end());
  Bytes signed_part = CanonicalWriter().field(code_id).field(payload).bytes();
  q.signature = sign(attestation_key_.secret_key, signed_part);
  return q;
}

SymmetricKey TeePlatform::sealing_key(const Digest& code_id) const {
  Digest d = hash(CanonicalWriter()
                      .field(std::string_view("seal"))
                      .field(seal_root_)
                      .field(code_id)
                      .bytes());
  SymmetricKey k;
  k.bytes = d.bytes;
  return k;
}

SealedBlob TeePlatform::seal(const Digest& code_id, ByteView state) const {
  Digest nonce_material =
      hash(CanonicalWriter().field(code_id).field(state).bytes());
  Nonce nonce;
  std::copy_n(nonce_material.bytes.begin(), nonce.bytes.size(), nonce.bytes.begin());
  AeadBox box = aead_encrypt(sealing_key(code_id), nonce, state);

  SealedBlob blob;
  blob.code_id = code_id;
  blob.ciphertext.assign(nonce.bytes.begin(), nonce.bytes.end());
  blob.ciphertext.insert(blob.ciphertext.end(), box.ciphertext.begin(),
                         box.ciphertext.end());
  blob.tag = box.mac;
  return blob;
}

Bytes TeePlatform::unseal(const Digest& code_id, const SealedBlob& blob) const {
  if (blob.code_id != code_id) {
    throw ProtocolError(Errc::kWrongCodeIdentity,
                        "blob sealed for a different enclave binary");
  }
  if (blob.ciphertext.size() < Nonce::kSize) {
    throw ProtocolError(Errc::kSealCorrupted, "blob too short");
  }
  Nonce nonce;
  std::copy_n(blob.ciphertext.begin(), Nonce::kSize, nonce.bytes.begin());
  try {
    return aead_decrypt(sealing_key(code_id), nonce,
                        ByteView(blob.ciphertext).subspan(Nonce::kSize), blob.tag);
  } catch (const ProtocolError&) {
    throw ProtocolError(Errc::kSealCorrupted, "sealed state failed authentication");
  }
}

}  // namespace planner
