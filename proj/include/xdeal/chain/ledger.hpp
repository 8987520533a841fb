#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <mutex>
#include <shared_mutex>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"
#include "xdeal/chain/types.hpp"
#include "xdeal/contracts/escrow.hpp"
#include "xdeal/crypto.hpp"

namespace xdeal::chain {

struct TransferFungible {
  Address to;
  std::uint64_t amount = 0;
};
struct TransferNft {
  Address to;
  NftId nft;
};
struct DeployContract {
  escrow::EscrowInit init;
};
struct ContractCall {
  Address contract;
  escrow::Call call;
};

using Payload = std::variant<TransferFungible, TransferNft, DeployContract, ContractCall>;

const char* payload_name(const Payload& p);

struct Transaction {
  ChainId chain;
  PublicKey sender_key;
  std::uint64_t nonce = 0;
  Payload payload;
  Signature signature;

  static Transaction make(ChainId chain, const KeyPair& sender, std::uint64_t nonce, Payload payload);

  Address sender() const { return address_of(sender_key); }
  /// Canonical encoding without the signature.
  Bytes signing_bytes() const;
  /// Transaction id; the signature is over these 32 bytes.
  Hash256 digest() const { return sha256(signing_bytes()); }
  bool signature_valid() const;

  Bytes encode() const;
  static Transaction decode(ByteView bytes);
};

struct ChainEvent {
  ChainId chain;
  std::uint64_t height = 0;
  Address contract;
  std::string kind;
  std::string payload;  // JSON text
  std::uint64_t seq = 0;

  nlohmann::json payload_json() const { return nlohmann::json::parse(payload); }
  nlohmann::ordered_json to_json() const;
  bool operator==(const ChainEvent&) const = default;
};

struct Receipt {
  Hash256 tx_digest;
  std::uint64_t height = 0;
  std::vector<ChainEvent> events;
  std::optional<Address> deployed;
};

// read_state queries and answers.
struct BalanceQuery {
  Address account;
};
struct NftOwnerQuery {
  NftId nft;
};
struct ContractStateQuery {
  Address contract;
};
struct EventsSinceQuery {
  std::uint64_t seq = 0;
};
struct NonceQuery {
  Address account;
};
/// Contracts carrying `deal` deployed by `deployer`, oldest first.
struct DealContractsQuery {
  DealId deal;
  Address deployer;
};

using Query = std::variant<BalanceQuery, NftOwnerQuery, ContractStateQuery, EventsSinceQuery, NonceQuery,
                           DealContractsQuery>;
using Answer = std::variant<std::uint64_t, Address, escrow::ContractState, std::vector<ChainEvent>,
                            std::vector<Address>>;

struct ChainGenesis {
  ChainId id;
  std::map<Address, std::uint64_t> balances;
  std::map<NftId, Address> nfts;
};

/// Deterministic single-chain ledger. One transaction per block, instant
/// finality. Rejected transactions leave the state digest unchanged.
class Ledger {
 public:
  struct Options {
    bool check_invariants_each_tx = true;
  };

  explicit Ledger(ChainGenesis genesis) : Ledger(std::move(genesis), Options{}) {}
  Ledger(ChainGenesis genesis, Options options);

  /// Applies `tx` or throws Error (BadSignature, BadNonce, InsufficientBalance,
  /// UnknownContract, NotOwner, ZeroAmount, BadParams, ContractRejected).
  Receipt submit_transaction(const Transaction& tx);

  Answer read_state(const Query& query) const;

  std::uint64_t balance(const Address& account) const;  // throws UnknownAccount
  Address nft_owner(const NftId& nft) const;             // throws UnknownNft
  const escrow::ContractState& contract(const Address& address) const;  // throws UnknownContract
  std::vector<ChainEvent> events_since(std::uint64_t seq) const;
  std::uint64_t nonce(const Address& account) const;
  std::vector<Address> contracts_for_deal(const DealId& deal, const Address& deployer) const;
  std::optional<Receipt> find_receipt(const Hash256& tx_digest) const;

  const ChainId& id() const { return id_; }
  std::uint64_t height() const { return height_; }
  std::uint64_t genesis_supply() const { return genesis_supply_; }
  /// Account balances plus funds held by contracts.
  std::uint64_t total_supply() const;
  std::size_t contract_count() const { return contracts_.size(); }
  const std::map<Address, escrow::ContractState>& contracts() const { return contracts_; }
  const std::map<NftId, Address>& nfts() const { return nfts_; }
  const std::map<Address, std::uint64_t>& accounts() const { return accounts_; }

  /// Conservation and NFT-ownership checks. Returns an empty string when all hold.
  std::string check_invariants() const;

  Hash256 state_digest() const;
  nlohmann::ordered_json snapshot() const;

 private:
  class Staged;
  void apply_payload(const Transaction& tx, Receipt& receipt);

  ChainId id_;
  Options options_;
  std::uint64_t height_ = 0;
  std::uint64_t genesis_supply_ = 0;
  std::uint64_t next_event_seq_ = 0;
  std::map<Address, std::uint64_t> accounts_;
  std::map<NftId, Address> nfts_;
  std::map<Address, escrow::ContractState> contracts_;
  struct ContractMeta {
    std::uint64_t height;
    Address deployer;
  };
  std::map<Address, ContractMeta> contract_meta_;
  std::vector<ChainEvent> events_;
  std::map<Address, std::uint64_t> nonces_;
  std::map<Hash256, Receipt> receipts_;
};

/// Uniform interface the cross-chain service uses to reach any chain.
class ChainAdapter {
 public:
  virtual ~ChainAdapter() = default;
  virtual const ChainId& id() const = 0;
  virtual Receipt submit(const Transaction& tx) = 0;
  virtual Answer query(const Query& q) const = 0;
  virtual std::optional<Receipt> find_receipt(const Hash256& tx_digest) const = 0;
};

/// In-process chain: a Ledger behind a single-writer lock. Reads take a
/// shared lock and may run concurrently.
class LocalChain final : public ChainAdapter {
 public:
  explicit LocalChain(ChainGenesis genesis, Ledger::Options options = {})
      : ledger_(std::move(genesis), options) {}

  const ChainId& id() const override { return ledger_.id(); }
  Receipt submit(const Transaction& tx) override {
    std::unique_lock lock(mu_);
    return ledger_.submit_transaction(tx);
  }
  Answer query(const Query& q) const override {
    std::shared_lock lock(mu_);
    return ledger_.read_state(q);
  }
  std::optional<Receipt> find_receipt(const Hash256& tx_digest) const override {
    std::shared_lock lock(mu_);
    return ledger_.find_receipt(tx_digest);
  }

  template <class F>
  auto read(F&& f) const {
    std::shared_lock lock(mu_);
    return f(ledger_);
  }

 private:
  mutable std::shared_mutex mu_;
  Ledger ledger_;
};

}  // namespace xdeal::chain
