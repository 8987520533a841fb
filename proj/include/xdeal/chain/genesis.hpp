#pragma once

#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "xdeal/chain/ledger.hpp"

namespace xdeal::chain {

/// Development keystore: signing keys held by name. Keys are derived from the
/// actor name unless an explicit seed is configured.
class Keystore {
 public:
  const KeyPair& add(const std::string& name);
  const KeyPair& add(const std::string& name, const Hash256& seed);
  const KeyPair& at(const std::string& name) const;
  bool contains(const std::string& name) const { return keys_.count(name) != 0; }
  Address address(const std::string& name) const { return at(name).address(); }
  /// Reverse lookup for display; falls back to the short hex form.
  std::string name_of(const Address& address) const;
  const std::map<std::string, KeyPair>& all() const { return keys_; }

 private:
  std::map<std::string, KeyPair> keys_;
};

/// Genesis configuration file:
/// {
///   "actors":  ["auctioneer", {"name": "bob", "seed": "<64 hex>"}, ...],
///   "chains":  [{"id": "coin-a", "balances": {"bob": 500}, "nfts": {"ticket-1": "auctioneer"}}],
///   "log":     {"operators": ["log-0"], "quorum": 1},
///   "service": "ccsvc"
/// }
/// Balance and NFT owners are actor names or 0x-prefixed addresses.
struct Genesis {
  Keystore keys;
  std::vector<std::string> actors;
  std::vector<ChainGenesis> chains;
  std::vector<std::string> log_operators;
  std::uint32_t log_quorum = 1;
  std::string service = "ccsvc";

  static Genesis from_json(const nlohmann::json& j);
  nlohmann::ordered_json to_json() const;

  const ChainGenesis& chain(const ChainId& id) const;
  std::vector<PublicKey> log_keys() const;
};

}  // namespace xdeal::chain
