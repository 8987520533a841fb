#include "xdeal/chain/ledger.hpp"

#include <algorithm>
#include <stdexcept>

#include "xdeal/codec.hpp"
#include "xdeal/errors.hpp"

namespace xdeal::chain {
namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

constexpr std::string_view kTxTag = "xdeal/tx/v1";

enum class PayloadTag : std::uint8_t { TransferFungible = 1, TransferNft, Deploy, Call };

void encode_payload(Encoder& enc, const Payload& p) {
  std::visit(overloaded{
                 [&](const TransferFungible& t) {
                   enc.u8(static_cast<std::uint8_t>(PayloadTag::TransferFungible)).fixed(t.to).u64(t.amount);
                 },
                 [&](const TransferNft& t) {
                   enc.u8(static_cast<std::uint8_t>(PayloadTag::TransferNft)).fixed(t.to).str(t.nft);
                 },
                 [&](const DeployContract& d) {
                   enc.u8(static_cast<std::uint8_t>(PayloadTag::Deploy));
                   d.init.encode(enc);
                 },
                 [&](const ContractCall& c) {
                   enc.u8(static_cast<std::uint8_t>(PayloadTag::Call)).fixed(c.contract);
                   escrow::encode_call(enc, c.call);
                 },
             },
             p);
}

Payload decode_payload(Decoder& dec) {
  switch (static_cast<PayloadTag>(dec.u8())) {
    case PayloadTag::TransferFungible: {
      TransferFungible t;
      t.to = dec.fixed<Address>();
      t.amount = dec.u64();
      return t;
    }
    case PayloadTag::TransferNft: {
      TransferNft t;
      t.to = dec.fixed<Address>();
      t.nft = dec.str();
      return t;
    }
    case PayloadTag::Deploy: return DeployContract{escrow::EscrowInit::decode(dec)};
    case PayloadTag::Call: {
      ContractCall c;
      c.contract = dec.fixed<Address>();
      c.call = escrow::decode_call(dec);
      return c;
    }
  }
  throw Error(Errc::DecodeError, "unknown payload");
}

Address contract_address(const Address& deployer, std::uint64_t nonce) {
  Encoder enc;
  enc.str("xdeal/contract-address/v1").fixed(deployer).u64(nonce);
  return convert<Address>(sha256(enc.data()));
}

}  // namespace

const char* payload_name(const Payload& p) {
  return std::visit(overloaded{
                        [](const TransferFungible&) { return "transfer"; },
                        [](const TransferNft&) { return "transfer_nft"; },
                        [](const DeployContract&) { return "deploy"; },
                        [](const ContractCall& c) { return escrow::call_name(c.call); },
                    },
                    p);
}

Transaction Transaction::make(ChainId chain, const KeyPair& sender, std::uint64_t nonce, Payload payload) {
  Transaction tx;
  tx.chain = std::move(chain);
  tx.sender_key = sender.public_key();
  tx.nonce = nonce;
  tx.payload = std::move(payload);
  tx.signature = sender.sign(tx.digest().view());
  return tx;
}

Bytes Transaction::signing_bytes() const {
  Encoder enc;
  enc.str(kTxTag).str(chain.value).fixed(sender_key).u64(nonce);
  encode_payload(enc, payload);
  return enc.take();
}

bool Transaction::signature_valid() const { return verify(sender_key, digest().view(), signature); }

Bytes Transaction::encode() const {
  Encoder enc;
  enc.bytes(signing_bytes()).fixed(signature);
  return enc.take();
}

Transaction Transaction::decode(ByteView bytes) {
  Decoder outer(bytes);
  auto body = outer.bytes();
  auto sig = outer.fixed<Signature>();
  outer.expect_done();
  Decoder dec(body);
  if (dec.str() != kTxTag) throw Error(Errc::DecodeError, "not a transaction");
  Transaction tx;
  tx.chain = ChainId(dec.str());
  tx.sender_key = dec.fixed<PublicKey>();
  tx.nonce = dec.u64();
  tx.payload = decode_payload(dec);
  dec.expect_done();
  tx.signature = sig;
  return tx;
}

nlohmann::ordered_json ChainEvent::to_json() const {
  nlohmann::ordered_json j;
  j["chain"] = chain.value;
  j["seq"] = seq;
  j["height"] = height;
  j["contract"] = contract.hex();
  j["kind"] = kind;
  j["payload"] = nlohmann::ordered_json::parse(payload);
  return j;
}

/// Host view used while a contract call runs. Effects are buffered and only
/// written back to the ledger once the call returns normally.
class Ledger::Staged final : public escrow::HostLedger {
 public:
  Staged(const Ledger& ledger, Address contract) : ledger_(ledger), contract_(contract) {}

  std::uint64_t balance(const Address& account) const override {
    if (auto it = balances_.find(account); it != balances_.end()) return it->second;
    auto it = ledger_.accounts_.find(account);
    return it == ledger_.accounts_.end() ? 0 : it->second;
  }
  void debit(const Address& account, std::uint64_t amount) override {
    auto have = balance(account);
    if (have < amount) throw std::logic_error("contract debited more than the balance");
    balances_[account] = have - amount;
  }
  void credit(const Address& account, std::uint64_t amount) override {
    balances_[account] = balance(account) + amount;
  }
  std::optional<Address> nft_owner(const NftId& nft) const override {
    if (auto it = nfts_.find(nft); it != nfts_.end()) return it->second;
    auto it = ledger_.nfts_.find(nft);
    if (it == ledger_.nfts_.end()) return std::nullopt;
    return it->second;
  }
  void move_nft(const NftId& nft, const Address& to) override {
    if (!nft_owner(nft)) throw std::logic_error("contract moved an unknown NFT");
    nfts_[nft] = to;
  }
  void emit(std::string kind, nlohmann::ordered_json payload) override {
    events_.push_back({contract_, std::move(kind), payload.dump()});
  }

  void apply(Ledger& ledger, Receipt& receipt) {
    for (const auto& [who, amount] : balances_) ledger.accounts_[who] = amount;
    for (const auto& [nft, owner] : nfts_) ledger.nfts_[nft] = owner;
    for (auto& e : events_) {
      ChainEvent ev{ledger.id_, ledger.height_ + 1, e.contract, std::move(e.kind), std::move(e.payload),
                    ledger.next_event_seq_++};
      receipt.events.push_back(ev);
      ledger.events_.push_back(std::move(ev));
    }
  }

 private:
  struct Pending {
    Address contract;
    std::string kind;
    std::string payload;
  };
  const Ledger& ledger_;
  Address contract_;
  std::map<Address, std::uint64_t> balances_;
  std::map<NftId, Address> nfts_;
  std::vector<Pending> events_;
};

Ledger::Ledger(ChainGenesis genesis, Options options) : id_(std::move(genesis.id)), options_(options) {
  accounts_ = std::move(genesis.balances);
  nfts_ = std::move(genesis.nfts);
  for (const auto& [_, amount] : accounts_) genesis_supply_ += amount;
  for (const auto& [_, owner] : nfts_) accounts_.try_emplace(owner, 0);
}

Receipt Ledger::submit_transaction(const Transaction& tx) {
  if (tx.chain != id_) throw Error(Errc::BadParams, "transaction for chain " + tx.chain.value);
  if (!tx.signature_valid()) throw Error(Errc::BadSignature);
  auto sender = tx.sender();
  auto current = nonce(sender);
  if (tx.nonce != current + 1)
    throw Error(Errc::BadNonce, "expected " + std::to_string(current + 1) + ", got " + std::to_string(tx.nonce));

  Receipt receipt;
  receipt.tx_digest = tx.digest();
  apply_payload(tx, receipt);  // throws before mutating on rejection

  nonces_[sender] = tx.nonce;
  accounts_.try_emplace(sender, 0);
  receipt.height = ++height_;
  receipts_.emplace(receipt.tx_digest, receipt);

  if (options_.check_invariants_each_tx) {
    if (auto why = check_invariants(); !why.empty())
      throw std::logic_error("ledger invariant violated on " + id_.value + ": " + why);
  }
  return receipt;
}

void Ledger::apply_payload(const Transaction& tx, Receipt& receipt) {
  auto sender = tx.sender();
  std::visit(overloaded{
                 [&](const TransferFungible& t) {
                   if (t.amount == 0) throw Error(Errc::ZeroAmount);
                   auto it = accounts_.find(sender);
                   if (it == accounts_.end() || it->second < t.amount) throw Error(Errc::InsufficientBalance);
                   it->second -= t.amount;
                   accounts_[t.to] += t.amount;
                 },
                 [&](const TransferNft& t) {
                   auto it = nfts_.find(t.nft);
                   if (it == nfts_.end()) throw Error(Errc::UnknownNft, t.nft);
                   if (it->second != sender) throw Error(Errc::NotOwner, t.nft);
                   it->second = t.to;
                   accounts_.try_emplace(t.to, 0);
                 },
                 [&](const DeployContract& d) {
                   auto state = escrow::instantiate(d.init);  // throws BadParams
                   auto address = contract_address(sender, tx.nonce);
                   if (contracts_.count(address) || accounts_.count(address))
                     throw Error(Errc::BadParams, "address collision");
                   contracts_.emplace(address, std::move(state));
                   contract_meta_.emplace(address, ContractMeta{height_ + 1, sender});
                   receipt.deployed = address;
                 },
                 [&](const ContractCall& c) {
                   auto it = contracts_.find(c.contract);
                   if (it == contracts_.end()) throw Error(Errc::UnknownContract, c.contract.short_hex());
                   auto next = it->second;
                   Staged host(*this, c.contract);
                   escrow::CallContext ctx{c.contract, sender, host};
                   try {
                     escrow::execute(next, c.call, ctx);
                   } catch (const Error& e) {
                     throw Error(Errc::ContractRejected, e.code(), e.what());
                   }
                   host.apply(*this, receipt);
                   it->second = std::move(next);
                 },
             },
             tx.payload);
}

Answer Ledger::read_state(const Query& query) const {
  return std::visit(overloaded{
                        [&](const BalanceQuery& q) -> Answer { return balance(q.account); },
                        [&](const NftOwnerQuery& q) -> Answer { return nft_owner(q.nft); },
                        [&](const ContractStateQuery& q) -> Answer { return contract(q.contract); },
                        [&](const EventsSinceQuery& q) -> Answer { return events_since(q.seq); },
                        [&](const NonceQuery& q) -> Answer { return nonce(q.account); },
                        [&](const DealContractsQuery& q) -> Answer { return contracts_for_deal(q.deal, q.deployer); },
                    },
                    query);
}

std::uint64_t Ledger::balance(const Address& account) const {
  auto it = accounts_.find(account);
  if (it == accounts_.end()) throw Error(Errc::UnknownAccount, account.short_hex());
  return it->second;
}

Address Ledger::nft_owner(const NftId& nft) const {
  auto it = nfts_.find(nft);
  if (it == nfts_.end()) throw Error(Errc::UnknownNft, nft);
  return it->second;
}

const escrow::ContractState& Ledger::contract(const Address& address) const {
  auto it = contracts_.find(address);
  if (it == contracts_.end()) throw Error(Errc::UnknownContract, address.short_hex());
  return it->second;
}

std::vector<ChainEvent> Ledger::events_since(std::uint64_t seq) const {
  if (seq >= events_.size()) return {};
  return {events_.begin() + static_cast<std::ptrdiff_t>(seq), events_.end()};
}

std::uint64_t Ledger::nonce(const Address& account) const {
  auto it = nonces_.find(account);
  return it == nonces_.end() ? 0 : it->second;
}

std::vector<Address> Ledger::contracts_for_deal(const DealId& deal, const Address& deployer) const {
  std::vector<std::pair<std::uint64_t, Address>> found;
  for (const auto& [address, state] : contracts_) {
    const auto& meta = contract_meta_.at(address);
    if (meta.deployer == deployer && escrow::init_of(state).deal_id == deal) found.emplace_back(meta.height, address);
  }
  std::sort(found.begin(), found.end());
  std::vector<Address> out;
  for (const auto& [_, a] : found) out.push_back(a);
  return out;
}

std::optional<Receipt> Ledger::find_receipt(const Hash256& tx_digest) const {
  auto it = receipts_.find(tx_digest);
  if (it == receipts_.end()) return std::nullopt;
  return it->second;
}

std::uint64_t Ledger::total_supply() const {
  std::uint64_t total = 0;
  for (const auto& [_, amount] : accounts_) total += amount;
  for (const auto& [_, state] : contracts_) total += escrow::held_funds(state);
  return total;
}

std::string Ledger::check_invariants() const {
  if (total_supply() != genesis_supply_)
    return "supply " + std::to_string(total_supply()) + " != genesis " + std::to_string(genesis_supply_);
  for (const auto& [nft, owner] : nfts_) {
    auto c = contracts_.find(owner);
    if (c == contracts_.end()) {
      if (owner.is_zero()) return "nft " + nft + " owned by the zero address";
      continue;
    }
    const auto* ticket = std::get_if<escrow::TicketEscrowState>(&c->second);
    auto phase = escrow::phase_of(c->second);
    if (!ticket || ticket->init.ticket != nft ||
        (phase != escrow::EscrowPhase::Escrowed && phase != escrow::EscrowPhase::TransferSpecified))
      return "nft " + nft + " held by a contract that is not escrowing it";
  }
  for (const auto& [address, state] : contracts_) {
    const auto* ticket = std::get_if<escrow::TicketEscrowState>(&state);
    if (!ticket) continue;
    auto phase = ticket->phase;
    bool should_hold = phase == escrow::EscrowPhase::Escrowed || phase == escrow::EscrowPhase::TransferSpecified;
    auto it = nfts_.find(ticket->init.ticket);
    bool holds = it != nfts_.end() && it->second == address;
    if (should_hold != holds) return "ticket contract custody does not match its phase";
    bool has_recipient = ticket->specified_recipient.has_value();
    bool wants_recipient =
        phase == escrow::EscrowPhase::TransferSpecified || phase == escrow::EscrowPhase::Committed;
    if (has_recipient != wants_recipient && phase != escrow::EscrowPhase::Aborted)
      return "ticket recipient set outside TransferSpecified/Committed";
  }
  return {};
}

Hash256 Ledger::state_digest() const {
  Encoder enc;
  enc.str(id_.value).u64(height_).u64(next_event_seq_);
  enc.u32(static_cast<std::uint32_t>(accounts_.size()));
  for (const auto& [who, amount] : accounts_) enc.fixed(who).u64(amount);
  enc.u32(static_cast<std::uint32_t>(nfts_.size()));
  for (const auto& [nft, owner] : nfts_) enc.str(nft).fixed(owner);
  enc.u32(static_cast<std::uint32_t>(nonces_.size()));
  for (const auto& [who, n] : nonces_) enc.fixed(who).u64(n);
  enc.u32(static_cast<std::uint32_t>(contracts_.size()));
  for (const auto& [address, state] : contracts_) {
    enc.fixed(address);
    escrow::encode_state(enc, state);
  }
  Sha256 h;
  h.update(enc.data());
  for (const auto& e : events_) {
    Encoder ev;
    ev.u64(e.seq).u64(e.height).fixed(e.contract).str(e.kind).str(e.payload);
    h.update(ev.data());
  }
  return h.finish();
}

nlohmann::ordered_json Ledger::snapshot() const {
  nlohmann::ordered_json j;
  j["chain"] = id_.value;
  j["height"] = height_;
  j["digest"] = state_digest().hex();
  j["genesis_supply"] = genesis_supply_;
  auto& accounts = j["accounts"] = nlohmann::ordered_json::object();
  for (const auto& [who, amount] : accounts_) accounts[who.hex()] = amount;
  auto& nfts = j["nfts"] = nlohmann::ordered_json::object();
  for (const auto& [nft, owner] : nfts_) nfts[nft] = owner.hex();
  auto& contracts = j["contracts"] = nlohmann::ordered_json::object();
  for (const auto& [address, state] : contracts_) contracts[address.hex()] = escrow::state_to_json(state);
  auto& events = j["events"] = nlohmann::ordered_json::array();
  for (const auto& e : events_) events.push_back(e.to_json());
  return j;
}

}  // namespace xdeal::chain
