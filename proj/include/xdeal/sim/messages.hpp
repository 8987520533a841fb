#pragma once

// Every message exchanged between simulated components. Requests and
// responses share one variant so the scheduler can treat them uniformly.

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"
#include "xdeal/chain/ledger.hpp"
#include "xdeal/contracts/escrow.hpp"
#include "xdeal/deal/protocol.hpp"
#include "xdeal/errors.hpp"
#include "xdeal/log/event_log.hpp"
#include "xdeal/log/record.hpp"

namespace xdeal::sim {

// Chain node.
struct SubmitTx {
  chain::Transaction tx;
};
struct TxResult {
  bool ok = false;
  Errc error = Errc::ContractRejected;
  Errc reason = Errc::ContractRejected;
  std::string message;
  chain::Receipt receipt;
};
struct ChainQueryMsg {
  chain::Query query;
};
struct ChainAnswerMsg {
  bool ok = false;
  Errc error = Errc::UnknownAccount;
  chain::Answer answer;
};

// Log node.
struct LogAppendMsg {
  log::LogRecord record;
};
struct LogAppendResult {
  bool ok = false;
  Errc error = Errc::BadParams;
  std::uint64_t offset = 0;
  std::optional<log::ConclusionExists> exists;
};
struct LogReadMsg {
  std::string topic;
  std::uint64_t from = 0;
};
struct LogReadResult {
  std::vector<log::LogRecord> records;
};
struct LogAttestMsg {
  std::string topic;
  std::uint64_t offset = 0;
};
struct LogAttestResult {
  bool ok = false;
  std::vector<log::InclusionAttestation> attestations;
};

// Cross-chain service.
struct CreateDealMsg {
  std::string app;
  nlohmann::json params;
};
/// Signed by the requester over ("end-auction" ‖ deal id).
struct EndAuctionMsg {
  DealId deal;
  PublicKey requester;
  Signature signature;
};
struct AbortMsg {
  AbortRequest request;
};
struct Ack {
  bool ok = true;
  Errc error = Errc::BadParams;
  std::string message;
  nlohmann::json data;
};

// Party clients.
struct DealAnnounce {
  DealDescriptor desc;
};
struct SpecifyRequest {
  DealId deal;
  std::vector<escrow::TransferPlan> plans;  // deal order
};
struct ValidateAndSign {
  DealId deal;
  Hash256 digest;
  std::vector<Bytes> plan_set;
};
struct SignResult {
  bool ok = false;
  Signature signature;
  std::optional<AbortRequest> reject;
};

/// Scripted action injected by the harness or the gateway.
struct Command {
  std::uint64_t index = 0;
  std::string op;
  nlohmann::json params;
};

using Message = std::variant<SubmitTx, TxResult, ChainQueryMsg, ChainAnswerMsg, LogAppendMsg, LogAppendResult,
                             LogReadMsg, LogReadResult, LogAttestMsg, LogAttestResult, CreateDealMsg,
                             EndAuctionMsg, AbortMsg, Ack, DealAnnounce, SpecifyRequest, ValidateAndSign,
                             SignResult, Command>;

/// Short deterministic description used in traces.
std::string describe(const Message& m);

Bytes end_auction_message(const DealId& deal);

}  // namespace xdeal::sim
