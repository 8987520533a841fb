#pragma once

// Escrow contracts hosted on simulated chains. A ticket contract escrows one
// NFT; a coin contract escrows fungible deposits from several parties. Both
// move assets only when presented with a log-attested conclusion.
//
// Phase machine:
//   Deployed -> Escrowed -> TransferSpecified -> Committed | Aborted
//   Escrowed -> Aborted, Deployed -> Aborted (nothing escrowed)
//   Deployed -> TransferSpecified (coin contracts with no deposits)

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"
#include "xdeal/chain/types.hpp"
#include "xdeal/codec.hpp"
#include "xdeal/crypto.hpp"
#include "xdeal/log/record.hpp"

namespace xdeal::escrow {

enum class EscrowPhase : std::uint8_t { Deployed, Escrowed, TransferSpecified, Committed, Aborted };

const char* to_string(EscrowPhase p);
inline bool is_terminal(EscrowPhase p) { return p == EscrowPhase::Committed || p == EscrowPhase::Aborted; }

struct EscrowInit {
  DealId deal_id;
  ContractKind kind = ContractKind::CoinEscrow;
  std::uint32_t deal_index = 0;  // position of this contract's plan in the deal's plan set
  std::vector<PublicKey> party_keys;
  std::vector<PublicKey> log_keys;
  std::uint32_t log_quorum = 1;
  PublicKey service_key;  // relayer / watchdog identity of the cross-chain service
  Address specifier;
  NftId ticket;  // TicketEscrow only

  void validate() const;  // throws Error(BadParams)
  void encode(Encoder& enc) const;
  static EscrowInit decode(Decoder& dec);
  bool operator==(const EscrowInit&) const = default;
};

struct RelayedBid {
  ChainId origin;
  Address bidder;
  std::uint64_t amount = 0;
  std::uint64_t origin_seq = 0;
  bool operator==(const RelayedBid&) const = default;
};

struct CoinTransfer {
  Address from;  // depositor whose escrowed funds are moved
  Address to;
  std::uint64_t amount = 0;
  bool operator==(const CoinTransfer&) const = default;
};

struct TicketPlan {
  Address recipient;
  bool operator==(const TicketPlan&) const = default;
};

/// Payments out of escrow. Deposits not referenced here are refunded on commit.
struct CoinPlan {
  std::vector<CoinTransfer> transfers;
  bool operator==(const CoinPlan&) const = default;
};

using TransferPlan = std::variant<TicketPlan, CoinPlan>;

Bytes encode_plan(const TransferPlan& plan);
TransferPlan decode_plan(ByteView bytes);
nlohmann::ordered_json plan_to_json(const TransferPlan& plan);

struct TicketEscrowState {
  EscrowInit init;
  EscrowPhase phase = EscrowPhase::Deployed;
  std::optional<Address> depositor;
  std::optional<Address> specified_recipient;
  std::vector<RelayedBid> relayed_bids;
};

struct CoinEscrowState {
  EscrowInit init;
  EscrowPhase phase = EscrowPhase::Deployed;
  std::map<Address, std::uint64_t> deposits;
  std::optional<std::vector<CoinTransfer>> specified_transfers;
};

using ContractState = std::variant<TicketEscrowState, CoinEscrowState>;

// Contract calls.
struct DepositNft {
  NftId nft;
};
struct DepositCoins {
  std::uint64_t amount = 0;
};
struct WithdrawBid {};
struct SpecifyTransfer {
  TransferPlan plan;
};
struct CommitCall {
  Bytes record;  // canonical bytes of the Conclusion(Commit) log record
  std::vector<log::InclusionAttestation> attestations;
  std::vector<Bytes> plan_set;  // every contract's canonical plan, deal order
};
struct AbortCall {
  Bytes record;  // canonical bytes of the Conclusion(Abort) log record
  std::vector<log::InclusionAttestation> attestations;
};
struct RelayBid {
  RelayedBid bid;
};

using Call = std::variant<DepositNft, DepositCoins, WithdrawBid, SpecifyTransfer, CommitCall, AbortCall, RelayBid>;

const char* call_name(const Call& call);
void encode_call(Encoder& enc, const Call& call);
Call decode_call(Decoder& dec);

/// Effects a contract may request from its host chain.
class HostLedger {
 public:
  virtual ~HostLedger() = default;
  virtual std::uint64_t balance(const Address& account) const = 0;
  virtual void debit(const Address& account, std::uint64_t amount) = 0;
  virtual void credit(const Address& account, std::uint64_t amount) = 0;
  virtual std::optional<Address> nft_owner(const NftId& nft) const = 0;
  virtual void move_nft(const NftId& nft, const Address& to) = 0;
  virtual void emit(std::string kind, nlohmann::ordered_json payload) = 0;
};

struct CallContext {
  Address self;
  Address sender;
  HostLedger& host;
};

ContractState instantiate(const EscrowInit& init);

/// Runs one call. All preconditions are checked before any effect is
/// requested from the host, so a thrown Error leaves host and contract
/// untouched.
void execute(ContractState& state, const Call& call, CallContext& ctx);

EscrowPhase phase_of(const ContractState& state);
const EscrowInit& init_of(const ContractState& state);
std::uint64_t held_funds(const ContractState& state);
std::optional<TransferPlan> stored_plan(const ContractState& state);

void encode_state(Encoder& enc, const ContractState& state);
nlohmann::ordered_json state_to_json(const ContractState& state);

}  // namespace xdeal::escrow
