#include "xdeal/crypto.hpp"

#include <sodium.h>

#include <cstring>

#include "xdeal/errors.hpp"

namespace xdeal {
namespace {

void ensure_sodium() {
  static const bool ready = [] { return sodium_init() >= 0; }();
  if (!ready) throw std::runtime_error("libsodium initialisation failed");
}

int hex_value(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}

}  // namespace

std::string to_hex(ByteView bytes) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string out;
  out.reserve(bytes.size() * 2);
  for (auto b : bytes) {
    out.push_back(digits[b >> 4]);
    out.push_back(digits[b & 0x0f]);
  }
  return out;
}

Bytes from_hex(std::string_view hex) {
  if (hex.starts_with("0x")) hex.remove_prefix(2);
  if (hex.size() % 2 != 0) throw Error(Errc::DecodeError, "odd-length hex");
  Bytes out(hex.size() / 2);
  for (std::size_t i = 0; i < out.size(); ++i) {
    int hi = hex_value(hex[2 * i]);
    int lo = hex_value(hex[2 * i + 1]);
    if (hi < 0 || lo < 0) throw Error(Errc::DecodeError, "invalid hex digit");
    out[i] = static_cast<std::uint8_t>(hi << 4 | lo);
  }
  return out;
}

template <std::size_t N, class Tag>
FixedBytes<N, Tag> FixedBytes<N, Tag>::from_hex(std::string_view hex) {
  return from_view(xdeal::from_hex(hex));
}

template <std::size_t N, class Tag>
FixedBytes<N, Tag> FixedBytes<N, Tag>::from_view(ByteView v) {
  if (v.size() != N)
    throw Error(Errc::DecodeError,
                "expected " + std::to_string(N) + " bytes, got " + std::to_string(v.size()));
  FixedBytes out;
  std::memcpy(out.bytes.data(), v.data(), N);
  return out;
}

template struct FixedBytes<32, HashTag>;
template struct FixedBytes<32, AddressTag>;
template struct FixedBytes<32, PublicKeyTag>;
template struct FixedBytes<64, SignatureTag>;
template struct FixedBytes<32, DealIdTag>;

Hash256 sha256(ByteView data) {
  ensure_sodium();
  Hash256 out;
  crypto_hash_sha256(out.bytes.data(), data.data(), data.size());
  return out;
}

static_assert(sizeof(crypto_hash_sha256_state) <= 128);

Sha256::Sha256() {
  ensure_sodium();
  crypto_hash_sha256_init(reinterpret_cast<crypto_hash_sha256_state*>(state_.data()));
}

Sha256& Sha256::update(ByteView data) {
  crypto_hash_sha256_update(reinterpret_cast<crypto_hash_sha256_state*>(state_.data()),
                            data.data(), data.size());
  return *this;
}

Hash256 Sha256::finish() {
  Hash256 out;
  crypto_hash_sha256_final(reinterpret_cast<crypto_hash_sha256_state*>(state_.data()),
                           out.bytes.data());
  return out;
}

KeyPair KeyPair::from_seed(const Hash256& seed) {
  ensure_sodium();
  KeyPair kp;
  crypto_sign_seed_keypair(kp.public_.bytes.data(), kp.secret_.data(), seed.bytes.data());
  return kp;
}

KeyPair KeyPair::dev(std::string_view name) {
  return from_seed(Sha256().update("xdeal-dev-key:").update(name).finish());
}

Address KeyPair::address() const { return address_of(public_); }

Signature KeyPair::sign(ByteView message) const {
  Signature sig;
  crypto_sign_detached(sig.bytes.data(), nullptr, message.data(), message.size(),
                       secret_.data());
  return sig;
}

bool verify(const PublicKey& key, ByteView message, const Signature& sig) {
  ensure_sodium();
  return crypto_sign_verify_detached(sig.bytes.data(), message.data(), message.size(),
                                     key.bytes.data()) == 0;
}

Address address_of(const PublicKey& key) {
  return convert<Address>(Sha256().update("addr:").update(key.view()).finish());
}

}  // namespace xdeal
