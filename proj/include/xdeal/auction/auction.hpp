#pragma once

// First-price cross-chain auction: one ticket NFT escrowed on the ticket
// chain, deposit-backed bids on coin chains, bids compared after conversion
// by exchange rates fixed when the auction is created.

#include <boost/multiprecision/cpp_int.hpp>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "xdeal/deal/app.hpp"

namespace xdeal::auction {

using Rational = boost::multiprecision::cpp_rational;
using Time = deal::Time;

/// Exchange rate into ticket-chain units, num/den with both positive.
struct Rate {
  std::uint64_t num = 1;
  std::uint64_t den = 1;

  Rational value() const { return Rational(num) / Rational(den); }
  /// Accepts 2, "3/2", [3, 2] or {"num": 3, "den": 2}. Throws Error(BadParams).
  static Rate from_json(const nlohmann::json& j);
  nlohmann::ordered_json to_json() const { return {{"num", num}, {"den", den}}; }
  bool operator==(const Rate&) const = default;
};

Rational normalize(std::uint64_t amount, const Rate& rate);
std::string to_string(const Rational& r);

struct AuctionTerms {
  std::string label;
  NftId asset;
  ChainId ticket_chain;
  std::vector<ChainId> chains;
  std::map<ChainId, Rate> rates;
  Time created_at = 0;
  Time ends_at = 0;

  static AuctionTerms from_descriptor(const DealDescriptor& desc);
  nlohmann::ordered_json to_json() const;
  const Rate& rate(const ChainId& chain) const;  // throws Error(MissingRate)
};

/// Throws MissingRate when an accepted chain has no rate and BadParams for
/// other malformed terms, including an end time not after `now`.
void validate_terms(const AuctionTerms& terms, Time now);

struct Bid {
  Address bidder;
  ChainId chain;
  std::uint64_t amount = 0;  // origin-chain units
  Rate rate;
  std::uint64_t log_seq = 0;  // offset of the BidEvent that set this amount

  Rational normalized() const { return normalize(amount, rate); }
  bool operator==(const Bid&) const = default;
};

/// Highest normalized value wins; equal values go to the smaller log_seq.
std::optional<std::size_t> determine_winner(std::span<const Bid> bids);

/// Log payload recording one relayed coin-chain escrow event.
struct BidEvent {
  DealId auction_id;
  ChainId chain;
  Address bidder;
  std::uint64_t amount = 0;  // size of this deposit or withdrawal
  std::uint64_t total = 0;   // bidder's escrowed total on `chain` afterwards
  Rate rate;
  std::uint64_t origin_seq = 0;
  std::string action = "deposit";  // or "withdraw"

  nlohmann::ordered_json to_json() const;
  static BidEvent from_json(const nlohmann::json& j);
  Bytes payload() const { auto s = to_json().dump(); return {s.begin(), s.end()}; }
};

struct AuctionLog {
  std::vector<Bid> bids;  // standing bids at the cutoff, one per (bidder, chain)
  std::optional<std::uint64_t> end_offset;
  std::vector<std::pair<std::uint64_t, BidEvent>> events;  // accepted BidEvents before the cutoff
};

/// Standing bids from the deal topic. Only service-produced BidEvents for
/// accepted chains at the agreed rates count, and only those appended before
/// the first EndAuction record.
AuctionLog replay(const DealDescriptor& desc, std::span<const log::LogRecord> records);

/// Ticket to the winner, the winning amount from the winner's deposit to the
/// auctioneer, empty plans elsewhere (deposits not named are refunded).
std::vector<escrow::TransferPlan> build_plans(const DealDescriptor& desc, const Bid& winner);

enum class Status { Open, Ended, Concluding, Committed, Aborted, Mixed };
const char* to_string(Status s);

/// `phases` may be empty when contract states are unknown.
Status status(const AuctionTerms& terms, const AuctionLog& log, bool conclusion_logged,
              std::span<const escrow::EscrowPhase> phases, Time now);

/// Client-side bid admission: AuctionClosed, ChainNotAccepted or ZeroAmount.
std::optional<Errc> check_bid(const AuctionTerms& terms, Status status, const ChainId& chain, std::uint64_t amount,
                              Time now);

/// Request parameters:
///   {"label", "asset", "ticket_chain", "chains": [...], "rates": {chain: rate},
///    "ends_at", "timeout"?, "bidders": [actor names], "salt"?}
/// The requester becomes the auctioneer and the deal's specifier.
class AuctionApp final : public deal::DealApp {
 public:
  std::string kind() const override { return "auction"; }
  DealDescriptor build(const nlohmann::json& params, const deal::BuildContext& ctx) const override;
  std::vector<deal::Precheck> prechecks(const DealDescriptor& desc) const override;
  NftId ticket_asset(const DealDescriptor& desc) const override;
  std::vector<std::pair<std::size_t, escrow::Call>> obligations(const DealDescriptor& desc,
                                                                 const Party& self) const override;
  std::optional<Bytes> relay_payload(const DealDescriptor& desc, std::size_t contract,
                                     const chain::ChainEvent& ev) const override;
  std::optional<Errc> check_end(const DealDescriptor& desc, Time now) const override;
  Bytes end_payload(const DealDescriptor& desc) const override;
  std::optional<deal::PlanDecision> decide(const deal::AppView& view) const override;
  std::string validate(const deal::AppView& view, const Party& self, std::span<const Bytes> plan_set) const override;
};

}  // namespace xdeal::auction
