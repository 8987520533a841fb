#pragma once

// Cross-chain flash loan as a single deal. The lender escrows the principal
// on chain A; the borrower's plan buys chain-B tokens from one market with
// it, sells them to a second market, and repays principal plus premium out of
// the proceeds. Either the whole plan executes or the principal is refunded.

#include <algorithm>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "xdeal/deal/app.hpp"

namespace xdeal::flashloan {

/// Chain-A units per chain-B unit, num/den with both positive.
struct Price {
  std::uint64_t num = 1;
  std::uint64_t den = 1;

  static Price from_json(const nlohmann::json& j);  // 3, "3/2", [3, 2] or {"num", "den"}
  nlohmann::ordered_json to_json() const { return {{"num", num}, {"den", den}}; }
  bool operator==(const Price&) const = default;
};

struct LoanTerms {
  std::string label;
  ChainId chain_a;
  ChainId chain_b;
  std::uint64_t principal = 0;
  std::uint64_t premium = 0;
  Price buy_price;   // market_buy sells B for A at this price
  Price sell_price;  // market_sell buys B for A at this price
  Address lender;
  Address borrower;
  Address market_buy;
  Address market_sell;

  /// Chain-B tokens the principal buys: floor(principal / buy_price).
  std::uint64_t tokens_b() const;
  /// Chain-A proceeds of selling them: floor(tokens_b * sell_price).
  std::uint64_t proceeds() const;
  std::uint64_t owed() const { return principal + premium; }
  std::uint64_t repayment() const { return std::min(proceeds(), owed()); }
  bool profitable() const { return proceeds() >= owed(); }

  static LoanTerms from_descriptor(const DealDescriptor& desc);
  nlohmann::ordered_json to_json() const;
};

/// Plan on chain A: lender pays market_buy the principal, market_sell repays
/// the lender, any surplus goes to the borrower. Plan on chain B:
/// market_buy delivers the tokens to market_sell.
std::vector<escrow::TransferPlan> build_plans(const LoanTerms& terms);

/// Amount the chain-A plan pays to the lender.
std::uint64_t repaid_to_lender(const LoanTerms& terms, std::span<const Bytes> plan_set);

/// Request parameters:
///   {"label", "lender", "market_buy", "market_sell", "chain_a", "chain_b",
///    "principal", "premium", "buy_price", "sell_price", "timeout"?, "salt"?}
/// The requester is the borrower and the deal's specifier.
class FlashLoanApp final : public deal::DealApp {
 public:
  std::string kind() const override { return "flashloan"; }
  DealDescriptor build(const nlohmann::json& params, const deal::BuildContext& ctx) const override;
  std::vector<deal::Precheck> prechecks(const DealDescriptor& desc) const override;
  std::vector<std::pair<std::size_t, escrow::Call>> obligations(const DealDescriptor& desc,
                                                                 const Party& self) const override;
  std::optional<deal::PlanDecision> decide(const deal::AppView& view) const override;
  std::string validate(const deal::AppView& view, const Party& self, std::span<const Bytes> plan_set) const override;
};

}  // namespace xdeal::flashloan
