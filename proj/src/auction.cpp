#include "xdeal/auction/auction.hpp"

#include <algorithm>
#include <charconv>
#include <set>

#include "xdeal/errors.hpp"

namespace xdeal::auction {

namespace {

std::uint64_t rate_part(const nlohmann::json& j) {
  if (!j.is_number_integer() || j.get<std::int64_t>() < 0) throw Error(Errc::BadParams, "rate: expected a positive integer, got " + j.dump());
  return j.get<std::uint64_t>();
}

std::uint64_t rate_part(const std::string& s) {
  std::uint64_t v = 0;
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || end != s.data() + s.size() || s.empty()) throw Error(Errc::BadParams, "rate: bad number '" + s + "'");
  return v;
}

}  // namespace

Rate Rate::from_json(const nlohmann::json& j) {
  Rate r;
  if (j.is_number()) {
    r.num = rate_part(j);
  } else if (j.is_string()) {
    auto s = j.get<std::string>();
    auto slash = s.find('/');
    r.num = rate_part(s.substr(0, slash));
    if (slash != std::string::npos) r.den = rate_part(s.substr(slash + 1));
  } else if (j.is_array() && j.size() == 2) {
    r.num = rate_part(j[0]);
    r.den = rate_part(j[1]);
  } else if (j.is_object() && j.contains("num") && j.contains("den")) {
    r.num = rate_part(j["num"]);
    r.den = rate_part(j["den"]);
  } else {
    throw Error(Errc::BadParams, "rate: unsupported form " + j.dump());
  }
  if (r.num == 0 || r.den == 0) throw Error(Errc::BadParams, "rate must be positive");
  return r;
}

Rational normalize(std::uint64_t amount, const Rate& rate) { return Rational(amount) * rate.value(); }

std::string to_string(const Rational& r) {
  auto n = boost::multiprecision::numerator(r);
  auto d = boost::multiprecision::denominator(r);
  return d == 1 ? n.str() : n.str() + "/" + d.str();
}

AuctionTerms AuctionTerms::from_descriptor(const DealDescriptor& desc) {
  AuctionTerms t;
  try {
    auto j = nlohmann::json::parse(desc.app);
    t.label = j.at("label").get<std::string>();
    t.asset = j.at("asset").get<std::string>();
    t.ticket_chain = ChainId(j.at("ticket_chain").get<std::string>());
    for (const auto& c : j.at("chains")) t.chains.emplace_back(c.get<std::string>());
    for (const auto& [chain, rate] : j.at("rates").items()) t.rates[ChainId(chain)] = Rate::from_json(rate);
    t.created_at = j.at("created_at").get<Time>();
    t.ends_at = j.at("ends_at").get<Time>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::BadParams, std::string("auction terms: ") + e.what());
  }
  return t;
}

nlohmann::ordered_json AuctionTerms::to_json() const {
  nlohmann::ordered_json j;
  j["type"] = "auction";
  j["label"] = label;
  j["asset"] = asset;
  j["ticket_chain"] = ticket_chain.value;
  auto& cs = j["chains"] = nlohmann::ordered_json::array();
  for (const auto& c : chains) cs.push_back(c.value);
  auto& rs = j["rates"] = nlohmann::ordered_json::object();
  for (const auto& [c, r] : rates) rs[c.value] = r.to_json();
  j["created_at"] = created_at;
  j["ends_at"] = ends_at;
  return j;
}

const Rate& AuctionTerms::rate(const ChainId& chain) const {
  auto it = rates.find(chain);
  if (it == rates.end()) throw Error(Errc::MissingRate, chain.value);
  return it->second;
}

void validate_terms(const AuctionTerms& terms, Time now) {
  if (terms.asset.empty()) throw Error(Errc::BadParams, "no asset");
  std::set<ChainId> seen;
  for (const auto& c : terms.chains) {
    if (c == terms.ticket_chain) throw Error(Errc::BadParams, "bids are not taken on the ticket chain");
    if (!seen.insert(c).second) throw Error(Errc::BadParams, "chain listed twice: " + c.value);
    if (!terms.rates.count(c)) throw Error(Errc::MissingRate, c.value);
  }
  for (const auto& [c, r] : terms.rates)
    if (r.num == 0 || r.den == 0) throw Error(Errc::BadParams, "rate must be positive for " + c.value);
  if (terms.ends_at <= now) throw Error(Errc::BadParams, "auction end time is not in the future");
}

std::optional<std::size_t> determine_winner(std::span<const Bid> bids) {
  std::optional<std::size_t> best;
  Rational best_value;
  for (std::size_t i = 0; i < bids.size(); ++i) {
    auto v = bids[i].normalized();
    if (!best || v > best_value || (v == best_value && bids[i].log_seq < bids[*best].log_seq)) {
      best = i;
      best_value = v;
    }
  }
  return best;
}

nlohmann::ordered_json BidEvent::to_json() const {
  return {{"auction_id", auction_id.hex()},
          {"chain", chain.value},
          {"bidder", bidder.hex()},
          {"amount", amount},
          {"total", total},
          {"rate_num", rate.num},
          {"rate_den", rate.den},
          {"origin_seq", origin_seq},
          {"action", action}};
}

BidEvent BidEvent::from_json(const nlohmann::json& j) {
  BidEvent e;
  try {
    e.auction_id = DealId::from_hex(j.at("auction_id").get<std::string>());
    e.chain = ChainId(j.at("chain").get<std::string>());
    e.bidder = Address::from_hex(j.at("bidder").get<std::string>());
    e.amount = j.at("amount").get<std::uint64_t>();
    e.total = j.at("total").get<std::uint64_t>();
    e.rate.num = j.at("rate_num").get<std::uint64_t>();
    e.rate.den = j.at("rate_den").get<std::uint64_t>();
    e.origin_seq = j.at("origin_seq").get<std::uint64_t>();
    e.action = j.at("action").get<std::string>();
  } catch (const nlohmann::json::exception& ex) {
    throw Error(Errc::DecodeError, std::string("bid event: ") + ex.what());
  }
  return e;
}

AuctionLog replay(const DealDescriptor& desc, std::span<const log::LogRecord> records) {
  auto terms = AuctionTerms::from_descriptor(desc);
  AuctionLog out;
  std::map<std::pair<Address, ChainId>, Bid> standing;
  for (const auto& r : records) {
    if (r.producer != desc.service_key) continue;
    if (r.kind == log::RecordKind::EndAuction) {
      out.end_offset = r.offset;
      break;
    }
    if (r.kind != log::RecordKind::BidEvent) continue;
    BidEvent e;
    try {
      e = BidEvent::from_json(nlohmann::json::parse(r.payload.begin(), r.payload.end()));
    } catch (const std::exception&) {
      continue;
    }
    auto rate = terms.rates.find(e.chain);
    if (e.auction_id != desc.id || rate == terms.rates.end() || !(rate->second == e.rate)) continue;
    out.events.emplace_back(r.offset, e);
    auto key = std::make_pair(e.bidder, e.chain);
    if (e.total == 0) {
      standing.erase(key);
      continue;
    }
    auto& bid = standing[key];
    if (e.total > bid.amount) bid.log_seq = r.offset;
    bid.bidder = e.bidder;
    bid.chain = e.chain;
    bid.amount = e.total;
    bid.rate = e.rate;
  }
  for (auto& [_, b] : standing) out.bids.push_back(b);
  std::sort(out.bids.begin(), out.bids.end(), [](const Bid& a, const Bid& b) { return a.log_seq < b.log_seq; });
  return out;
}

std::vector<escrow::TransferPlan> build_plans(const DealDescriptor& desc, const Bid& winner) {
  const auto& auctioneer = desc.specifier_party().account;
  std::vector<escrow::TransferPlan> plans;
  for (const auto& c : desc.contracts) {
    if (c.kind == ContractKind::TicketEscrow) {
      plans.emplace_back(escrow::TicketPlan{winner.bidder});
    } else if (c.chain == winner.chain) {
      plans.emplace_back(escrow::CoinPlan{{escrow::CoinTransfer{winner.bidder, auctioneer, winner.amount}}});
    } else {
      plans.emplace_back(escrow::CoinPlan{});
    }
  }
  return plans;
}

const char* to_string(Status s) {
  switch (s) {
    case Status::Open: return "Open";
    case Status::Ended: return "Ended";
    case Status::Concluding: return "Concluding";
    case Status::Committed: return "Committed";
    case Status::Aborted: return "Aborted";
    case Status::Mixed: return "Mixed";
  }
  return "?";
}

Status status(const AuctionTerms& terms, const AuctionLog& log, bool conclusion_logged,
              std::span<const escrow::EscrowPhase> phases, Time now) {
  if (!phases.empty() && std::all_of(phases.begin(), phases.end(), escrow::is_terminal)) {
    bool committed = std::all_of(phases.begin(), phases.end(),
                                 [](auto p) { return p == escrow::EscrowPhase::Committed; });
    bool aborted = std::all_of(phases.begin(), phases.end(), [](auto p) { return p == escrow::EscrowPhase::Aborted; });
    return committed ? Status::Committed : aborted ? Status::Aborted : Status::Mixed;
  }
  if (conclusion_logged) return Status::Concluding;
  if (log.end_offset || now >= terms.ends_at) return Status::Ended;
  return Status::Open;
}

std::optional<Errc> check_bid(const AuctionTerms& terms, Status status, const ChainId& chain, std::uint64_t amount,
                              Time now) {
  if (status != Status::Open || now >= terms.ends_at) return Errc::AuctionClosed;
  if (std::find(terms.chains.begin(), terms.chains.end(), chain) == terms.chains.end())
    return Errc::ChainNotAccepted;
  if (amount == 0) return Errc::ZeroAmount;
  return std::nullopt;
}

DealDescriptor AuctionApp::build(const nlohmann::json& params, const deal::BuildContext& ctx) const {
  AuctionTerms terms;
  DealDescriptor d;
  std::vector<std::string> bidders;
  try {
    terms.label = params.value("label", std::string("auction"));
    terms.asset = params.at("asset").get<std::string>();
    terms.ticket_chain = ChainId(params.at("ticket_chain").get<std::string>());
    for (const auto& c : params.at("chains")) terms.chains.emplace_back(c.get<std::string>());
    if (params.contains("rates"))
      for (const auto& [chain, rate] : params.at("rates").items()) terms.rates[ChainId(chain)] = Rate::from_json(rate);
    terms.created_at = ctx.now;
    terms.ends_at = params.at("ends_at").get<Time>();
    d.timeout = params.value("timeout", terms.ends_at + 600);
    d.salt = params.value("salt", std::uint64_t{0});
    for (const auto& b : params.at("bidders")) bidders.push_back(b.get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::BadParams, std::string("create auction: ") + e.what());
  }
  validate_terms(terms, ctx.now);
  if (d.timeout <= terms.ends_at) throw Error(Errc::BadParams, "deal timeout must follow the auction end");

  auto party = [&](const std::string& name, const char* role) {
    const auto& k = ctx.directory.at(name);
    return Party{role, k.address(), k.public_key()};
  };
  d.parties.push_back(party(ctx.requester, "auctioneer"));
  for (const auto& b : bidders) {
    if (b == ctx.requester) throw Error(Errc::BadParams, "auctioneer cannot bid");
    d.parties.push_back(party(b, "bidder"));
  }
  d.specifier = 0;
  d.contracts.push_back(DealContract{terms.ticket_chain, ContractKind::TicketEscrow, {}});
  for (const auto& c : terms.chains) d.contracts.push_back(DealContract{c, ContractKind::CoinEscrow, {}});
  d.service_key = ctx.service_key;
  d.app = terms.to_json().dump();
  d.validate();
  d.id = d.compute_id();
  return d;
}

std::vector<deal::Precheck> AuctionApp::prechecks(const DealDescriptor& desc) const {
  auto terms = AuctionTerms::from_descriptor(desc);
  auto auctioneer = desc.specifier_party().account;
  return {deal::Precheck{terms.ticket_chain, chain::NftOwnerQuery{terms.asset},
                         [auctioneer](const chain::Answer* a) -> std::optional<Errc> {
                           if (!a) return Errc::UnknownNft;
                           if (std::get<Address>(*a) != auctioneer) return Errc::NotOwner;
                           return std::nullopt;
                         }}};
}

NftId AuctionApp::ticket_asset(const DealDescriptor& desc) const { return AuctionTerms::from_descriptor(desc).asset; }

std::vector<std::pair<std::size_t, escrow::Call>> AuctionApp::obligations(const DealDescriptor& desc,
                                                                           const Party& self) const {
  if (self.account != desc.specifier_party().account) return {};
  return {{0, escrow::DepositNft{ticket_asset(desc)}}};
}

std::optional<Bytes> AuctionApp::relay_payload(const DealDescriptor& desc, std::size_t contract,
                                               const chain::ChainEvent& ev) const {
  const auto& c = desc.contracts.at(contract);
  if (c.kind != ContractKind::CoinEscrow || ev.contract != c.address) return std::nullopt;
  if (ev.kind != "Escrowed" && ev.kind != "BidWithdrawn") return std::nullopt;
  auto terms = AuctionTerms::from_descriptor(desc);
  auto p = ev.payload_json();
  BidEvent e;
  e.auction_id = desc.id;
  e.chain = c.chain;
  e.bidder = Address::from_hex(p.at("depositor").get<std::string>());
  e.amount = p.at("amount").get<std::uint64_t>();
  e.total = p.at("total").get<std::uint64_t>();
  e.rate = terms.rate(c.chain);
  e.origin_seq = ev.seq;
  e.action = ev.kind == "Escrowed" ? "deposit" : "withdraw";
  return e.payload();
}

std::optional<Errc> AuctionApp::check_end(const DealDescriptor& desc, Time now) const {
  if (now < AuctionTerms::from_descriptor(desc).ends_at) return Errc::NotYetEnded;
  return std::nullopt;
}

Bytes AuctionApp::end_payload(const DealDescriptor& desc) const {
  auto s = nlohmann::ordered_json{{"auction_id", desc.id.hex()}}.dump();
  return {s.begin(), s.end()};
}

std::optional<deal::PlanDecision> AuctionApp::decide(const deal::AppView& view) const {
  auto log = replay(view.desc, view.records);
  if (!log.end_offset) return std::nullopt;
  auto winner = determine_winner(log.bids);
  if (!winner) return deal::PlanDecision{{}, "auction ended without bids"};
  return deal::PlanDecision{build_plans(view.desc, log.bids[*winner]), {}};
}

std::string AuctionApp::validate(const deal::AppView& view, const Party&, std::span<const Bytes> plan_set) const {
  auto decision = decide(view);
  if (!decision) return "auction has not ended";
  if (!decision->abort_reason.empty()) return decision->abort_reason;
  auto expected = deal::encode_plans(decision->plans);
  if (!std::equal(expected.begin(), expected.end(), plan_set.begin(), plan_set.end()))
    return "transfers differ from the auction outcome";
  return {};
}

}  // namespace xdeal::auction
