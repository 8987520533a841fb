#pragma once

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace xdeal {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

std::string to_hex(ByteView bytes);
Bytes from_hex(std::string_view hex);  // throws Error(DecodeError)

inline ByteView as_bytes(std::string_view s) {
  return {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()};
}

/// Fixed-width byte string. `Tag` keeps hashes, addresses, keys and
/// signatures from being mixed up.
template <std::size_t N, class Tag>
struct FixedBytes {
  static constexpr std::size_t size = N;
  std::array<std::uint8_t, N> bytes{};

  auto operator<=>(const FixedBytes&) const = default;

  ByteView view() const { return {bytes.data(), bytes.size()}; }
  std::string hex() const { return to_hex(view()); }
  std::string short_hex() const { return hex().substr(0, 12); }
  bool is_zero() const {
    for (auto b : bytes)
      if (b != 0) return false;
    return true;
  }

  static FixedBytes from_hex(std::string_view hex);
  static FixedBytes from_view(ByteView v);
};

using Hash256 = FixedBytes<32, struct HashTag>;
using Address = FixedBytes<32, struct AddressTag>;
using PublicKey = FixedBytes<32, struct PublicKeyTag>;
using Signature = FixedBytes<64, struct SignatureTag>;
using DealId = FixedBytes<32, struct DealIdTag>;

Hash256 sha256(ByteView data);

/// Incremental SHA-256.
class Sha256 {
 public:
  Sha256();
  Sha256& update(ByteView data);
  Sha256& update(std::string_view s) { return update(as_bytes(s)); }
  Hash256 finish();

 private:
  alignas(64) std::array<std::uint8_t, 128> state_{};
};

/// Ed25519 signing key. Keys derived from a seed are deterministic, and so are
/// the signatures, which keeps seeded simulation runs byte-identical.
class KeyPair {
 public:
  static KeyPair from_seed(const Hash256& seed);
  /// Development keystore: key derived from a human-readable actor name.
  static KeyPair dev(std::string_view name);

  const PublicKey& public_key() const { return public_; }
  Address address() const;
  Signature sign(ByteView message) const;

 private:
  PublicKey public_;
  std::array<std::uint8_t, 64> secret_{};
};

bool verify(const PublicKey& key, ByteView message, const Signature& sig);

/// Account address: hash of the public key.
Address address_of(const PublicKey& key);

template <class T>
T convert(const Hash256& h) {
  T out;
  out.bytes = h.bytes;
  return out;
}

}  // namespace xdeal
