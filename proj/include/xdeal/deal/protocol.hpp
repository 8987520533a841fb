#pragma once

// Messages that cross component boundaries in a cross-chain deal: the deal
// descriptor, the all-party commit vote, abort requests and the conclusion
// records that the event log arbitrates.

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"
#include "xdeal/chain/types.hpp"
#include "xdeal/codec.hpp"
#include "xdeal/crypto.hpp"

namespace xdeal {

struct Party {
  std::string role;
  Address account;
  PublicKey key;

  bool operator==(const Party&) const = default;
};

struct DealContract {
  ChainId chain;
  ContractKind kind = ContractKind::CoinEscrow;
  Address address;  // zero until the contract is deployed

  bool operator==(const DealContract&) const = default;
};

struct DealDescriptor {
  DealId id;
  std::vector<Party> parties;
  std::uint32_t specifier = 0;
  std::vector<DealContract> contracts;
  std::uint64_t timeout = 0;  // logical time
  PublicKey service_key;
  std::uint64_t salt = 0;
  std::string app;  // application parameters, JSON text

  /// Hash of the canonical body. Contract addresses and the id itself are
  /// excluded so the id is known before clearing.
  DealId compute_id() const;
  /// Throws Error(BadParams) on empty parties or an invalid specifier.
  void validate() const;

  std::vector<PublicKey> party_keys() const;
  const Party* find_party(const PublicKey& key) const;
  const Party* find_party(const Address& account) const;
  const Party& specifier_party() const { return parties.at(specifier); }
  std::string topic() const { return id.hex(); }

  nlohmann::ordered_json to_json() const;
  static DealDescriptor from_json(const nlohmann::json& j);

  bool operator==(const DealDescriptor&) const = default;
};

/// Log topic for a deal.
inline std::string deal_topic(const DealId& id) { return id.hex(); }

/// Digest over the canonical plans of all deal contracts, in deal order.
Hash256 transfer_digest(std::span<const Bytes> plans_in_deal_order);

struct CommitVote {
  DealId deal_id;
  Hash256 transfer_digest;
  std::map<PublicKey, Signature> signatures;

  static Bytes signing_message(const DealId& deal, const Hash256& digest);
  static Signature sign(const KeyPair& key, const DealId& deal, const Hash256& digest);

  bool has_valid_signature(const PublicKey& key) const;
  std::vector<PublicKey> missing(std::span<const PublicKey> parties) const;
  bool complete(std::span<const PublicKey> parties) const { return missing(parties).empty(); }

  void encode(Encoder& enc) const;
  static CommitVote decode(Decoder& dec);
  bool operator==(const CommitVote&) const = default;
};

struct AbortRequest {
  DealId deal_id;
  PublicKey requester;
  std::string reason;
  Signature signature;

  static AbortRequest make(const DealId& deal, const KeyPair& key, std::string reason);
  bool verify() const;

  void encode(Encoder& enc) const;
  static AbortRequest decode(Decoder& dec);
  bool operator==(const AbortRequest&) const = default;
};

enum class ConclusionKind : std::uint8_t { Commit = 1, Abort = 2 };

constexpr const char* to_string(ConclusionKind k) {
  return k == ConclusionKind::Commit ? "Commit" : "Abort";
}

struct ConclusionRecord {
  DealId deal_id;
  std::variant<CommitVote, AbortRequest> body;

  ConclusionKind kind() const {
    return std::holds_alternative<CommitVote>(body) ? ConclusionKind::Commit : ConclusionKind::Abort;
  }

  static ConclusionRecord commit(CommitVote vote);
  static ConclusionRecord abort(AbortRequest request);

  Bytes encode() const;
  static ConclusionRecord decode(ByteView bytes);
  bool operator==(const ConclusionRecord&) const = default;
};

}  // namespace xdeal
