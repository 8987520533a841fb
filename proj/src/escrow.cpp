#include "xdeal/contracts/escrow.hpp"

#include <algorithm>

#include "xdeal/errors.hpp"

namespace xdeal::escrow {
namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

[[noreturn]] void reject(Errc code, const std::string& detail = {}) { throw Error(code, detail); }

bool is_party(const EscrowInit& init, const Address& account) {
  return std::any_of(init.party_keys.begin(), init.party_keys.end(),
                     [&](const PublicKey& k) { return address_of(k) == account; });
}

void require_party(const EscrowInit& init, const Address& account) {
  if (!is_party(init, account)) reject(Errc::NotParty, "sender is not a deal party");
}

void require_specifier(const EscrowInit& init, const Address& sender) {
  if (sender != init.specifier) reject(Errc::BadSignature, "not signed by the deal specifier");
}

/// Checks that `record_bytes` is a log-attested Conclusion for this deal and
/// returns the decoded conclusion.
ConclusionRecord verified_conclusion(const EscrowInit& init, const Bytes& record_bytes,
                                     const std::vector<log::InclusionAttestation>& atts) {
  if (!log::verify_attestations(atts, record_bytes, init.log_keys, init.log_quorum))
    reject(Errc::BadAttestation, "attestation does not verify");
  log::LogRecord record;
  ConclusionRecord conclusion;
  try {
    record = log::LogRecord::decode(record_bytes);
    conclusion = record.conclusion();
  } catch (const Error& e) {
    reject(Errc::BadAttestation, std::string("attested record is not a conclusion: ") + e.what());
  }
  if (record.topic != deal_topic(init.deal_id) || atts.front().topic != record.topic ||
      atts.front().offset != record.offset)
    reject(Errc::BadAttestation, "attestation bound to another topic or offset");
  if (conclusion.deal_id != init.deal_id) reject(Errc::BadAttestation, "conclusion for another deal");
  return conclusion;
}

void require_commit_authority(const EscrowInit& init, const CommitCall& call, const Bytes& own_plan) {
  auto conclusion = verified_conclusion(init, call.record, call.attestations);
  if (conclusion.kind() != ConclusionKind::Commit) reject(Errc::BadAttestation, "attested conclusion is not a commit");
  const auto& vote = std::get<CommitVote>(conclusion.body);
  if (!vote.complete(init.party_keys)) reject(Errc::IncompleteVote, "commit vote lacks party signatures");
  if (call.plan_set.size() <= init.deal_index) reject(Errc::DigestMismatch, "plan set too short");
  if (transfer_digest(call.plan_set) != vote.transfer_digest)
    reject(Errc::DigestMismatch, "plan set does not hash to the voted digest");
  if (call.plan_set[init.deal_index] != own_plan) reject(Errc::DigestMismatch, "voted plan differs from stored plan");
}

void require_abort_authority(const EscrowInit& init, const AbortCall& call) {
  auto conclusion = verified_conclusion(init, call.record, call.attestations);
  if (conclusion.kind() != ConclusionKind::Abort) reject(Errc::BadAttestation, "attested conclusion is not an abort");
  const auto& req = std::get<AbortRequest>(conclusion.body);
  bool allowed = req.requester == init.service_key ||
                 std::find(init.party_keys.begin(), init.party_keys.end(), req.requester) != init.party_keys.end();
  if (!allowed || !req.verify()) reject(Errc::BadAttestation, "abort not requested by a party or the service");
}

void run_ticket(TicketEscrowState& s, const Call& call, CallContext& ctx) {
  std::visit(
      overloaded{
          [&](const DepositNft& c) {
            if (s.phase != EscrowPhase::Deployed) reject(Errc::WrongPhase, to_string(s.phase));
            if (c.nft != s.init.ticket) reject(Errc::BadParams, "contract escrows " + s.init.ticket);
            require_party(s.init, ctx.sender);
            auto owner = ctx.host.nft_owner(c.nft);
            if (!owner) reject(Errc::UnknownNft, c.nft);
            if (*owner != ctx.sender) reject(Errc::NotOwner, c.nft);
            ctx.host.move_nft(c.nft, ctx.self);
            s.depositor = ctx.sender;
            s.phase = EscrowPhase::Escrowed;
            ctx.host.emit("Escrowed", {{"depositor", ctx.sender.hex()}, {"nft", c.nft}});
          },
          [&](const DepositCoins&) { reject(Errc::BadParams, "ticket contract takes no coins"); },
          [&](const WithdrawBid&) { reject(Errc::BadParams, "ticket contract holds no bids"); },
          [&](const SpecifyTransfer& c) {
            require_specifier(s.init, ctx.sender);
            if (s.phase != EscrowPhase::Escrowed) reject(Errc::WrongPhase, to_string(s.phase));
            const auto* plan = std::get_if<TicketPlan>(&c.plan);
            if (!plan) reject(Errc::BadParams, "ticket contract needs a ticket plan");
            s.specified_recipient = plan->recipient;
            s.phase = EscrowPhase::TransferSpecified;
            ctx.host.emit("TransferSpecified", {{"recipient", plan->recipient.hex()}});
          },
          [&](const CommitCall& c) {
            if (s.phase != EscrowPhase::TransferSpecified) reject(Errc::WrongPhase, to_string(s.phase));
            require_commit_authority(s.init, c, encode_plan(TicketPlan{*s.specified_recipient}));
            ctx.host.move_nft(s.init.ticket, *s.specified_recipient);
            s.phase = EscrowPhase::Committed;
            ctx.host.emit("Committed", {{"nft", s.init.ticket}, {"recipient", s.specified_recipient->hex()}});
          },
          [&](const AbortCall& c) {
            if (is_terminal(s.phase)) reject(Errc::WrongPhase, to_string(s.phase));
            require_abort_authority(s.init, c);
            if (s.depositor) ctx.host.move_nft(s.init.ticket, *s.depositor);
            s.phase = EscrowPhase::Aborted;
            nlohmann::ordered_json payload{{"nft", s.init.ticket}};
            if (s.depositor) payload["returned_to"] = s.depositor->hex();
            ctx.host.emit("Aborted", payload);
          },
          [&](const RelayBid& c) {
            if (ctx.sender != address_of(s.init.service_key)) reject(Errc::BadSignature, "relay not sent by the service");
            if (s.phase != EscrowPhase::Deployed && s.phase != EscrowPhase::Escrowed)
              reject(Errc::WrongPhase, to_string(s.phase));
            for (const auto& b : s.relayed_bids)
              if (b.origin == c.bid.origin && b.origin_seq == c.bid.origin_seq) reject(Errc::DuplicateRelay);
            s.relayed_bids.push_back(c.bid);
            ctx.host.emit("BidRelayed", {{"origin", c.bid.origin.value},
                                         {"bidder", c.bid.bidder.hex()},
                                         {"amount", c.bid.amount},
                                         {"origin_seq", c.bid.origin_seq}});
          },
      },
      call);
}

void run_coin(CoinEscrowState& s, const Call& call, CallContext& ctx) {
  std::visit(
      overloaded{
          [&](const DepositNft&) { reject(Errc::BadParams, "coin contract takes no NFTs"); },
          [&](const DepositCoins& c) {
            if (s.phase != EscrowPhase::Deployed && s.phase != EscrowPhase::Escrowed)
              reject(Errc::WrongPhase, to_string(s.phase));
            if (c.amount == 0) reject(Errc::ZeroAmount);
            require_party(s.init, ctx.sender);
            if (ctx.host.balance(ctx.sender) < c.amount) reject(Errc::InsufficientBalance);
            ctx.host.debit(ctx.sender, c.amount);
            auto& total = s.deposits[ctx.sender];
            total += c.amount;
            s.phase = EscrowPhase::Escrowed;
            ctx.host.emit("Escrowed", {{"depositor", ctx.sender.hex()}, {"amount", c.amount}, {"total", total}});
          },
          [&](const WithdrawBid&) {
            if (s.phase != EscrowPhase::Escrowed) reject(Errc::WrongPhase, to_string(s.phase));
            auto it = s.deposits.find(ctx.sender);
            if (it == s.deposits.end() || it->second == 0) reject(Errc::NoDeposit);
            auto amount = it->second;
            s.deposits.erase(it);
            ctx.host.credit(ctx.sender, amount);
            ctx.host.emit("BidWithdrawn", {{"depositor", ctx.sender.hex()}, {"amount", amount}, {"total", 0}});
          },
          [&](const SpecifyTransfer& c) {
            require_specifier(s.init, ctx.sender);
            if (s.phase != EscrowPhase::Deployed && s.phase != EscrowPhase::Escrowed)
              reject(Errc::WrongPhase, to_string(s.phase));
            const auto* plan = std::get_if<CoinPlan>(&c.plan);
            if (!plan) reject(Errc::BadParams, "coin contract needs a coin plan");
            std::map<Address, std::uint64_t> spent;
            for (const auto& t : plan->transfers) {
              if (t.amount == 0) reject(Errc::ZeroAmount, "zero transfer in plan");
              auto dep = s.deposits.find(t.from);
              auto& used = spent[t.from];
              // used <= deposit holds by induction, so the subtraction cannot wrap
              if (dep == s.deposits.end() || t.amount > dep->second - used) reject(Errc::PlanExceedsDeposits);
              used += t.amount;
            }
            s.specified_transfers = plan->transfers;
            s.phase = EscrowPhase::TransferSpecified;
            ctx.host.emit("TransferSpecified", {{"transfers", plan->transfers.size()}});
          },
          [&](const CommitCall& c) {
            if (s.phase != EscrowPhase::TransferSpecified) reject(Errc::WrongPhase, to_string(s.phase));
            require_commit_authority(s.init, c, encode_plan(CoinPlan{*s.specified_transfers}));
            auto remaining = s.deposits;
            for (const auto& t : *s.specified_transfers) {
              remaining[t.from] -= t.amount;
              ctx.host.credit(t.to, t.amount);
            }
            for (const auto& [depositor, amount] : remaining)
              if (amount > 0) ctx.host.credit(depositor, amount);
            s.deposits.clear();
            s.phase = EscrowPhase::Committed;
            ctx.host.emit("Committed", {{"transfers", s.specified_transfers->size()}});
          },
          [&](const AbortCall& c) {
            if (is_terminal(s.phase)) reject(Errc::WrongPhase, to_string(s.phase));
            require_abort_authority(s.init, c);
            for (const auto& [depositor, amount] : s.deposits) ctx.host.credit(depositor, amount);
            auto refunded = s.deposits.size();
            s.deposits.clear();
            s.phase = EscrowPhase::Aborted;
            ctx.host.emit("Aborted", {{"refunded", refunded}});
          },
          [&](const RelayBid&) { reject(Errc::BadParams, "coin contract does not take relayed bids"); },
      },
      call);
}

void encode_transfers(Encoder& enc, const std::vector<CoinTransfer>& ts) {
  enc.list(ts, [](Encoder& e, const CoinTransfer& t) { e.fixed(t.from).fixed(t.to).u64(t.amount); });
}

std::vector<CoinTransfer> decode_transfers(Decoder& dec) {
  return dec.list([](Decoder& d) {
    CoinTransfer t;
    t.from = d.fixed<Address>();
    t.to = d.fixed<Address>();
    t.amount = d.u64();
    return t;
  });
}

enum class CallTag : std::uint8_t {
  DepositNft = 1,
  DepositCoins,
  WithdrawBid,
  SpecifyTransfer,
  Commit,
  Abort,
  RelayBid,
};

void encode_atts(Encoder& enc, const std::vector<log::InclusionAttestation>& atts) {
  enc.list(atts, [](Encoder& e, const log::InclusionAttestation& a) { a.encode(e); });
}

std::vector<log::InclusionAttestation> decode_atts(Decoder& dec) {
  return dec.list([](Decoder& d) { return log::InclusionAttestation::decode(d); });
}

}  // namespace

const char* to_string(EscrowPhase p) {
  switch (p) {
    case EscrowPhase::Deployed: return "Deployed";
    case EscrowPhase::Escrowed: return "Escrowed";
    case EscrowPhase::TransferSpecified: return "TransferSpecified";
    case EscrowPhase::Committed: return "Committed";
    case EscrowPhase::Aborted: return "Aborted";
  }
  return "Unknown";
}

void EscrowInit::validate() const {
  if (party_keys.empty()) throw Error(Errc::BadParams, "empty party key set");
  if (log_keys.empty()) throw Error(Errc::BadParams, "empty log key set");
  if (log_quorum == 0 || log_quorum > log_keys.size()) throw Error(Errc::BadParams, "invalid log quorum");
  if (kind == ContractKind::TicketEscrow && ticket.empty()) throw Error(Errc::BadParams, "ticket contract needs a ticket");
  if (specifier.is_zero()) throw Error(Errc::BadParams, "missing specifier");
}

void EscrowInit::encode(Encoder& enc) const {
  enc.fixed(deal_id).u8(static_cast<std::uint8_t>(kind)).u32(deal_index);
  enc.list(party_keys, [](Encoder& e, const PublicKey& k) { e.fixed(k); });
  enc.list(log_keys, [](Encoder& e, const PublicKey& k) { e.fixed(k); });
  enc.u32(log_quorum).fixed(service_key).fixed(specifier).str(ticket);
}

EscrowInit EscrowInit::decode(Decoder& dec) {
  EscrowInit i;
  i.deal_id = dec.fixed<DealId>();
  auto kind = dec.u8();
  if (kind != 1 && kind != 2) throw Error(Errc::DecodeError, "bad contract kind");
  i.kind = static_cast<ContractKind>(kind);
  i.deal_index = dec.u32();
  i.party_keys = dec.list([](Decoder& d) { return d.fixed<PublicKey>(); });
  i.log_keys = dec.list([](Decoder& d) { return d.fixed<PublicKey>(); });
  i.log_quorum = dec.u32();
  i.service_key = dec.fixed<PublicKey>();
  i.specifier = dec.fixed<Address>();
  i.ticket = dec.str();
  return i;
}

Bytes encode_plan(const TransferPlan& plan) {
  Encoder enc;
  std::visit(overloaded{
                 [&](const TicketPlan& p) { enc.u8(1).fixed(p.recipient); },
                 [&](const CoinPlan& p) {
                   enc.u8(2);
                   encode_transfers(enc, p.transfers);
                 },
             },
             plan);
  return enc.take();
}

TransferPlan decode_plan(ByteView bytes) {
  Decoder dec(bytes);
  TransferPlan plan;
  switch (dec.u8()) {
    case 1: plan = TicketPlan{dec.fixed<Address>()}; break;
    case 2: plan = CoinPlan{decode_transfers(dec)}; break;
    default: throw Error(Errc::DecodeError, "unknown plan kind");
  }
  dec.expect_done();
  return plan;
}

nlohmann::ordered_json plan_to_json(const TransferPlan& plan) {
  return std::visit(overloaded{
                        [](const TicketPlan& p) {
                          return nlohmann::ordered_json{{"kind", "ticket"}, {"recipient", p.recipient.hex()}};
                        },
                        [](const CoinPlan& p) {
                          nlohmann::ordered_json j{{"kind", "coin"}, {"transfers", nlohmann::ordered_json::array()}};
                          for (const auto& t : p.transfers)
                            j["transfers"].push_back(
                                {{"from", t.from.hex()}, {"to", t.to.hex()}, {"amount", t.amount}});
                          return j;
                        },
                    },
                    plan);
}

const char* call_name(const Call& call) {
  return std::visit(overloaded{
                        [](const DepositNft&) { return "deposit_nft"; },
                        [](const DepositCoins&) { return "deposit_coins"; },
                        [](const WithdrawBid&) { return "withdraw_bid"; },
                        [](const SpecifyTransfer&) { return "specify_transfer"; },
                        [](const CommitCall&) { return "commit"; },
                        [](const AbortCall&) { return "abort"; },
                        [](const RelayBid&) { return "relay_bid"; },
                    },
                    call);
}

void encode_call(Encoder& enc, const Call& call) {
  std::visit(overloaded{
                 [&](const DepositNft& c) { enc.u8(static_cast<std::uint8_t>(CallTag::DepositNft)).str(c.nft); },
                 [&](const DepositCoins& c) { enc.u8(static_cast<std::uint8_t>(CallTag::DepositCoins)).u64(c.amount); },
                 [&](const WithdrawBid&) { enc.u8(static_cast<std::uint8_t>(CallTag::WithdrawBid)); },
                 [&](const SpecifyTransfer& c) {
                   enc.u8(static_cast<std::uint8_t>(CallTag::SpecifyTransfer)).bytes(encode_plan(c.plan));
                 },
                 [&](const CommitCall& c) {
                   enc.u8(static_cast<std::uint8_t>(CallTag::Commit)).bytes(c.record);
                   encode_atts(enc, c.attestations);
                   enc.list(c.plan_set, [](Encoder& e, const Bytes& b) { e.bytes(b); });
                 },
                 [&](const AbortCall& c) {
                   enc.u8(static_cast<std::uint8_t>(CallTag::Abort)).bytes(c.record);
                   encode_atts(enc, c.attestations);
                 },
                 [&](const RelayBid& c) {
                   enc.u8(static_cast<std::uint8_t>(CallTag::RelayBid))
                       .str(c.bid.origin.value)
                       .fixed(c.bid.bidder)
                       .u64(c.bid.amount)
                       .u64(c.bid.origin_seq);
                 },
             },
             call);
}

Call decode_call(Decoder& dec) {
  switch (static_cast<CallTag>(dec.u8())) {
    case CallTag::DepositNft: return DepositNft{dec.str()};
    case CallTag::DepositCoins: return DepositCoins{dec.u64()};
    case CallTag::WithdrawBid: return WithdrawBid{};
    case CallTag::SpecifyTransfer: {
      auto bytes = dec.bytes();
      return SpecifyTransfer{decode_plan(bytes)};
    }
    case CallTag::Commit: {
      CommitCall c;
      c.record = dec.bytes();
      c.attestations = decode_atts(dec);
      c.plan_set = dec.list([](Decoder& d) { return d.bytes(); });
      return c;
    }
    case CallTag::Abort: {
      AbortCall c;
      c.record = dec.bytes();
      c.attestations = decode_atts(dec);
      return c;
    }
    case CallTag::RelayBid: {
      RelayedBid b;
      b.origin = ChainId(dec.str());
      b.bidder = dec.fixed<Address>();
      b.amount = dec.u64();
      b.origin_seq = dec.u64();
      return RelayBid{b};
    }
  }
  throw Error(Errc::DecodeError, "unknown contract call");
}

ContractState instantiate(const EscrowInit& init) {
  init.validate();
  if (init.kind == ContractKind::TicketEscrow) return TicketEscrowState{init};
  return CoinEscrowState{init};
}

void execute(ContractState& state, const Call& call, CallContext& ctx) {
  std::visit(overloaded{
                 [&](TicketEscrowState& s) { run_ticket(s, call, ctx); },
                 [&](CoinEscrowState& s) { run_coin(s, call, ctx); },
             },
             state);
}

EscrowPhase phase_of(const ContractState& state) {
  return std::visit([](const auto& s) { return s.phase; }, state);
}

const EscrowInit& init_of(const ContractState& state) {
  return std::visit([](const auto& s) -> const EscrowInit& { return s.init; }, state);
}

std::uint64_t held_funds(const ContractState& state) {
  const auto* coin = std::get_if<CoinEscrowState>(&state);
  if (!coin) return 0;
  std::uint64_t total = 0;
  for (const auto& [_, amount] : coin->deposits) total += amount;
  return total;
}

std::optional<TransferPlan> stored_plan(const ContractState& state) {
  return std::visit(overloaded{
                        [](const TicketEscrowState& s) -> std::optional<TransferPlan> {
                          if (!s.specified_recipient) return std::nullopt;
                          return TicketPlan{*s.specified_recipient};
                        },
                        [](const CoinEscrowState& s) -> std::optional<TransferPlan> {
                          if (!s.specified_transfers) return std::nullopt;
                          return CoinPlan{*s.specified_transfers};
                        },
                    },
                    state);
}

void encode_state(Encoder& enc, const ContractState& state) {
  std::visit(overloaded{
                 [&](const TicketEscrowState& s) {
                   enc.u8(1);
                   s.init.encode(enc);
                   enc.u8(static_cast<std::uint8_t>(s.phase));
                   enc.boolean(s.depositor.has_value());
                   if (s.depositor) enc.fixed(*s.depositor);
                   enc.boolean(s.specified_recipient.has_value());
                   if (s.specified_recipient) enc.fixed(*s.specified_recipient);
                   enc.list(s.relayed_bids, [](Encoder& e, const RelayedBid& b) {
                     e.str(b.origin.value).fixed(b.bidder).u64(b.amount).u64(b.origin_seq);
                   });
                 },
                 [&](const CoinEscrowState& s) {
                   enc.u8(2);
                   s.init.encode(enc);
                   enc.u8(static_cast<std::uint8_t>(s.phase));
                   enc.u32(static_cast<std::uint32_t>(s.deposits.size()));
                   for (const auto& [who, amount] : s.deposits) enc.fixed(who).u64(amount);
                   enc.boolean(s.specified_transfers.has_value());
                   if (s.specified_transfers) encode_transfers(enc, *s.specified_transfers);
                 },
             },
             state);
}

nlohmann::ordered_json state_to_json(const ContractState& state) {
  nlohmann::ordered_json j;
  const auto& init = init_of(state);
  j["kind"] = to_string(init.kind);
  j["deal_id"] = init.deal_id.hex();
  j["deal_index"] = init.deal_index;
  j["phase"] = to_string(phase_of(state));
  std::visit(overloaded{
                 [&](const TicketEscrowState& s) {
                   j["ticket"] = init.ticket;
                   j["depositor"] = s.depositor ? s.depositor->hex() : "";
                   j["specified_recipient"] = s.specified_recipient ? s.specified_recipient->hex() : "";
                   auto& bids = j["relayed_bids"] = nlohmann::ordered_json::array();
                   for (const auto& b : s.relayed_bids)
                     bids.push_back({{"origin", b.origin.value},
                                     {"bidder", b.bidder.hex()},
                                     {"amount", b.amount},
                                     {"origin_seq", b.origin_seq}});
                 },
                 [&](const CoinEscrowState& s) {
                   auto& deps = j["deposits"] = nlohmann::ordered_json::object();
                   for (const auto& [who, amount] : s.deposits) deps[who.hex()] = amount;
                   if (s.specified_transfers)
                     j["plan"] = plan_to_json(CoinPlan{*s.specified_transfers});
                 },
             },
             state);
  return j;
}

}  // namespace xdeal::escrow
