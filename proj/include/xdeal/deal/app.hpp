#pragma once

// Application hooks that specialise the generic five-phase deal: how a deal
// is built from a request, what each party escrows, when and how transfers
// are decided, and what each party accepts before signing.

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "xdeal/chain/genesis.hpp"
#include "xdeal/chain/ledger.hpp"
#include "xdeal/contracts/escrow.hpp"
#include "xdeal/deal/protocol.hpp"
#include "xdeal/log/record.hpp"

namespace xdeal::deal {

using Time = std::uint64_t;

struct BuildContext {
  const chain::Keystore& directory;  // actor name -> keys
  PublicKey service_key;
  Time now = 0;
  std::string requester;  // actor name of the client that asked for the deal
};

/// A chain read that must pass before a deal is cleared.
struct Precheck {
  ChainId chain;
  chain::Query query;
  /// `answer` is null when the query itself failed. Returns an error code to refuse the deal.
  std::function<std::optional<Errc>(const chain::Answer* answer)> check;
};

struct AppView {
  const DealDescriptor& desc;
  std::span<const log::LogRecord> records;         // deal topic from offset 0
  std::span<const escrow::ContractState> contracts;  // deal order; empty when not all known
};

struct PlanDecision {
  std::vector<escrow::TransferPlan> plans;  // deal order
  std::string abort_reason;                 // non-empty: the deal should be aborted instead
};

class DealApp {
 public:
  virtual ~DealApp() = default;

  virtual std::string kind() const = 0;

  /// Throws Error for invalid requests. Contract addresses are left zero.
  virtual DealDescriptor build(const nlohmann::json& params, const BuildContext& ctx) const = 0;
  virtual std::vector<Precheck> prechecks(const DealDescriptor&) const { return {}; }
  virtual NftId ticket_asset(const DealDescriptor&) const { return {}; }

  /// Deposits a party makes once the deal is announced to it.
  virtual std::vector<std::pair<std::size_t, escrow::Call>> obligations(const DealDescriptor&,
                                                                         const Party&) const {
    return {};
  }

  /// Log payload for a coin-chain escrow event the relayer forwards, if any.
  virtual std::optional<Bytes> relay_payload(const DealDescriptor&, std::size_t /*contract*/,
                                             const chain::ChainEvent&) const {
    return std::nullopt;
  }
  /// Payload of the end-of-bidding record, or the error refusing it.
  virtual std::optional<Errc> check_end(const DealDescriptor&, Time /*now*/) const { return Errc::BadParams; }
  virtual Bytes end_payload(const DealDescriptor&) const { return {}; }

  /// Transfer plans, an abort decision, or nullopt while inputs are still missing.
  virtual std::optional<PlanDecision> decide(const AppView& view) const = 0;
  /// Empty when `self` accepts `plan_set`; otherwise the rejection reason.
  virtual std::string validate(const AppView& view, const Party& self, std::span<const Bytes> plan_set) const = 0;
};

class AppRegistry {
 public:
  void add(std::shared_ptr<const DealApp> app) { apps_[app->kind()] = std::move(app); }
  std::shared_ptr<const DealApp> find(const std::string& kind) const;
  /// App named by the "type" field of the descriptor's parameters.
  std::shared_ptr<const DealApp> for_descriptor(const DealDescriptor& desc) const;

 private:
  std::map<std::string, std::shared_ptr<const DealApp>> apps_;
};

escrow::EscrowInit escrow_init(const DealDescriptor& desc, std::size_t index, std::span<const PublicKey> log_keys,
                               std::uint32_t log_quorum, const NftId& ticket);

std::vector<Bytes> encode_plans(std::span<const escrow::TransferPlan> plans);

/// Gathers independent party signatures over (deal, digest). The vote is
/// complete once every party has a verifying signature.
class VoteCollector {
 public:
  enum class AddResult { Accepted, Duplicate, NotParty, BadSignature };

  VoteCollector(DealId deal, Hash256 digest, std::vector<PublicKey> parties);

  AddResult add(const PublicKey& party, const Signature& sig);
  void reject(const PublicKey& party);

  bool complete() const { return missing().empty(); }
  std::vector<PublicKey> missing() const;
  const std::optional<PublicKey>& rejected_by() const { return rejected_; }
  const Hash256& digest() const { return vote_.transfer_digest; }
  const CommitVote& vote() const { return vote_; }

  /// Timeout(missing parties) once `now` passes `deadline` with the vote
  /// incomplete, PartyRejected after a rejection, nullopt otherwise.
  std::optional<Error> failure(Time now, Time deadline) const;

 private:
  std::vector<PublicKey> parties_;
  CommitVote vote_;
  std::optional<PublicKey> rejected_;
};

/// Service-signed abort once the deadline has passed without a conclusion.
std::optional<AbortRequest> watchdog(const DealDescriptor& desc, Time now, bool conclusion_exists,
                                     const KeyPair& service);

}  // namespace xdeal::deal
