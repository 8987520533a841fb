#include "xdeal/flashloan/flashloan.hpp"

#include <algorithm>
#include <limits>

#include "xdeal/errors.hpp"

namespace xdeal::flashloan {
namespace {

std::uint64_t mul_div(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  auto v = static_cast<unsigned __int128>(a) * b / c;
  if (v > std::numeric_limits<std::uint64_t>::max()) throw Error(Errc::BadParams, "amount overflows");
  return static_cast<std::uint64_t>(v);
}

std::uint64_t deposit_of(const escrow::ContractState& s, const Address& who) {
  const auto* coin = std::get_if<escrow::CoinEscrowState>(&s);
  if (!coin) return 0;
  auto it = coin->deposits.find(who);
  return it == coin->deposits.end() ? 0 : it->second;
}

}  // namespace

Price Price::from_json(const nlohmann::json& j) {
  Price p;
  try {
    if (j.is_number()) {
      p.num = j.get<std::uint64_t>();
    } else if (j.is_string()) {
      auto s = j.get<std::string>();
      auto slash = s.find('/');
      p.num = std::stoull(s.substr(0, slash));
      if (slash != std::string::npos) p.den = std::stoull(s.substr(slash + 1));
    } else if (j.is_array()) {
      p.num = j.at(0).get<std::uint64_t>();
      p.den = j.at(1).get<std::uint64_t>();
    } else {
      p.num = j.at("num").get<std::uint64_t>();
      p.den = j.at("den").get<std::uint64_t>();
    }
  } catch (const std::exception& e) {
    throw Error(Errc::BadParams, std::string("price: ") + e.what());
  }
  if (p.num == 0 || p.den == 0) throw Error(Errc::BadParams, "price must be positive");
  return p;
}

std::uint64_t LoanTerms::tokens_b() const { return mul_div(principal, buy_price.den, buy_price.num); }
std::uint64_t LoanTerms::proceeds() const { return mul_div(tokens_b(), sell_price.num, sell_price.den); }

LoanTerms LoanTerms::from_descriptor(const DealDescriptor& desc) {
  LoanTerms t;
  try {
    auto j = nlohmann::json::parse(desc.app);
    t.label = j.at("label").get<std::string>();
    t.chain_a = ChainId(j.at("chain_a").get<std::string>());
    t.chain_b = ChainId(j.at("chain_b").get<std::string>());
    t.principal = j.at("principal").get<std::uint64_t>();
    t.premium = j.at("premium").get<std::uint64_t>();
    t.buy_price = Price::from_json(j.at("buy_price"));
    t.sell_price = Price::from_json(j.at("sell_price"));
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::BadParams, std::string("loan terms: ") + e.what());
  }
  if (desc.parties.size() != 4) throw Error(Errc::BadParams, "loan deal needs four parties");
  t.lender = desc.parties[0].account;
  t.borrower = desc.parties[1].account;
  t.market_buy = desc.parties[2].account;
  t.market_sell = desc.parties[3].account;
  return t;
}

nlohmann::ordered_json LoanTerms::to_json() const {
  return {{"type", "flashloan"},
          {"label", label},
          {"chain_a", chain_a.value},
          {"chain_b", chain_b.value},
          {"principal", principal},
          {"premium", premium},
          {"buy_price", buy_price.to_json()},
          {"sell_price", sell_price.to_json()}};
}

std::vector<escrow::TransferPlan> build_plans(const LoanTerms& t) {
  escrow::CoinPlan a;
  a.transfers.push_back({t.lender, t.market_buy, t.principal});
  auto repay = t.repayment();
  a.transfers.push_back({t.market_sell, t.lender, repay});
  if (t.proceeds() > repay) a.transfers.push_back({t.market_sell, t.borrower, t.proceeds() - repay});
  escrow::CoinPlan b;
  b.transfers.push_back({t.market_buy, t.market_sell, t.tokens_b()});
  return {a, b};
}

std::uint64_t repaid_to_lender(const LoanTerms& terms, std::span<const Bytes> plan_set) {
  if (plan_set.empty()) return 0;
  std::uint64_t total = 0;
  try {
    auto plan = escrow::decode_plan(plan_set[0]);
    if (const auto* coin = std::get_if<escrow::CoinPlan>(&plan))
      for (const auto& t : coin->transfers)
        if (t.to == terms.lender) total += t.amount;
  } catch (const Error&) {
    return 0;
  }
  return total;
}

DealDescriptor FlashLoanApp::build(const nlohmann::json& params, const deal::BuildContext& ctx) const {
  LoanTerms t;
  DealDescriptor d;
  std::string lender, market_buy, market_sell;
  try {
    t.label = params.value("label", std::string("loan"));
    lender = params.at("lender").get<std::string>();
    market_buy = params.at("market_buy").get<std::string>();
    market_sell = params.at("market_sell").get<std::string>();
    t.chain_a = ChainId(params.at("chain_a").get<std::string>());
    t.chain_b = ChainId(params.at("chain_b").get<std::string>());
    t.principal = params.at("principal").get<std::uint64_t>();
    t.premium = params.value("premium", std::uint64_t{0});
    t.buy_price = Price::from_json(params.at("buy_price"));
    t.sell_price = Price::from_json(params.at("sell_price"));
    d.timeout = params.value("timeout", ctx.now + 800);
    d.salt = params.value("salt", std::uint64_t{0});
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::BadParams, std::string("create loan: ") + e.what());
  }
  if (t.principal == 0) throw Error(Errc::ZeroAmount, "principal");
  if (t.chain_a == t.chain_b) throw Error(Errc::BadParams, "loan needs two distinct chains");
  if (t.tokens_b() == 0 || t.proceeds() == 0) throw Error(Errc::BadParams, "principal too small at these prices");
  if (d.timeout <= ctx.now) throw Error(Errc::BadParams, "deal timeout is not in the future");

  auto party = [&](const std::string& name, const char* role) {
    const auto& k = ctx.directory.at(name);
    return Party{role, k.address(), k.public_key()};
  };
  d.parties = {party(lender, "lender"), party(ctx.requester, "borrower"), party(market_buy, "market_buy"),
               party(market_sell, "market_sell")};
  for (std::size_t i = 0; i < d.parties.size(); ++i)
    for (std::size_t j = i + 1; j < d.parties.size(); ++j)
      if (d.parties[i].account == d.parties[j].account) throw Error(Errc::BadParams, "loan parties must differ");
  d.specifier = 1;
  d.contracts = {DealContract{t.chain_a, ContractKind::CoinEscrow, {}},
                 DealContract{t.chain_b, ContractKind::CoinEscrow, {}}};
  d.service_key = ctx.service_key;
  d.app = t.to_json().dump();
  d.validate();
  d.id = d.compute_id();
  return d;
}

std::vector<deal::Precheck> FlashLoanApp::prechecks(const DealDescriptor& desc) const {
  auto t = LoanTerms::from_descriptor(desc);
  auto principal = t.principal;
  return {deal::Precheck{t.chain_a, chain::BalanceQuery{t.lender},
                         [principal](const chain::Answer* a) -> std::optional<Errc> {
                           if (!a || std::get<std::uint64_t>(*a) < principal) return Errc::InsufficientBalance;
                           return std::nullopt;
                         }}};
}

std::vector<std::pair<std::size_t, escrow::Call>> FlashLoanApp::obligations(const DealDescriptor& desc,
                                                                             const Party& self) const {
  auto t = LoanTerms::from_descriptor(desc);
  if (self.account == t.lender) return {{0, escrow::DepositCoins{t.principal}}};
  if (self.account == t.market_buy) return {{1, escrow::DepositCoins{t.tokens_b()}}};
  if (self.account == t.market_sell) return {{0, escrow::DepositCoins{t.proceeds()}}};
  return {};
}

std::optional<deal::PlanDecision> FlashLoanApp::decide(const deal::AppView& view) const {
  if (view.contracts.size() != 2) return std::nullopt;
  auto t = LoanTerms::from_descriptor(view.desc);
  if (deposit_of(view.contracts[0], t.lender) < t.principal ||
      deposit_of(view.contracts[0], t.market_sell) < t.proceeds() ||
      deposit_of(view.contracts[1], t.market_buy) < t.tokens_b())
    return std::nullopt;
  return deal::PlanDecision{build_plans(t), {}};
}

std::string FlashLoanApp::validate(const deal::AppView& view, const Party& self,
                                   std::span<const Bytes> plan_set) const {
  auto t = LoanTerms::from_descriptor(view.desc);
  auto expected = deal::encode_plans(build_plans(t));
  if (!std::equal(expected.begin(), expected.end(), plan_set.begin(), plan_set.end()))
    return "transfers differ from the loan terms";
  if (self.account == t.lender && repaid_to_lender(t, plan_set) < t.owed())
    return "repayment below principal plus premium";
  return {};
}

}  // namespace xdeal::flashloan
