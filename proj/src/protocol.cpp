#include "xdeal/deal/protocol.hpp"

#include <algorithm>

#include "xdeal/codec.hpp"
#include "xdeal/errors.hpp"

namespace xdeal {
namespace {

constexpr std::string_view kVoteTag = "xdeal/commit-vote/v1";
constexpr std::string_view kAbortTag = "xdeal/abort-request/v1";
constexpr std::string_view kDealTag = "xdeal/deal/v1";
constexpr std::string_view kPlanSetTag = "xdeal/plan-set/v1";

}  // namespace

DealId DealDescriptor::compute_id() const {
  Encoder enc;
  enc.str(kDealTag);
  enc.list(parties, [](Encoder& e, const Party& p) { e.str(p.role).fixed(p.account).fixed(p.key); });
  enc.u32(specifier);
  enc.list(contracts, [](Encoder& e, const DealContract& c) {
    e.str(c.chain.value).u8(static_cast<std::uint8_t>(c.kind));
  });
  enc.u64(timeout).fixed(service_key).u64(salt).str(app);
  return convert<DealId>(sha256(enc.data()));
}

void DealDescriptor::validate() const {
  if (parties.empty()) throw Error(Errc::BadParams, "deal has no parties");
  if (specifier >= parties.size()) throw Error(Errc::BadParams, "specifier index out of range");
  for (std::size_t i = 0; i < parties.size(); ++i) {
    if (parties[i].account != address_of(parties[i].key))
      throw Error(Errc::BadParams, "party account does not match its key");
    for (std::size_t j = i + 1; j < parties.size(); ++j)
      if (parties[i].key == parties[j].key) throw Error(Errc::BadParams, "duplicate party key");
  }
}

std::vector<PublicKey> DealDescriptor::party_keys() const {
  std::vector<PublicKey> keys;
  keys.reserve(parties.size());
  for (const auto& p : parties) keys.push_back(p.key);
  return keys;
}

const Party* DealDescriptor::find_party(const PublicKey& key) const {
  auto it = std::find_if(parties.begin(), parties.end(), [&](const Party& p) { return p.key == key; });
  return it == parties.end() ? nullptr : &*it;
}

const Party* DealDescriptor::find_party(const Address& account) const {
  auto it = std::find_if(parties.begin(), parties.end(),
                         [&](const Party& p) { return p.account == account; });
  return it == parties.end() ? nullptr : &*it;
}

nlohmann::ordered_json DealDescriptor::to_json() const {
  nlohmann::ordered_json j;
  j["deal_id"] = id.hex();
  auto& ps = j["parties"] = nlohmann::ordered_json::array();
  for (const auto& p : parties)
    ps.push_back({{"role", p.role}, {"account", p.account.hex()}, {"key", p.key.hex()}});
  j["specifier"] = specifier;
  auto& cs = j["contracts"] = nlohmann::ordered_json::array();
  for (const auto& c : contracts)
    cs.push_back({{"chain", c.chain.value}, {"kind", to_string(c.kind)}, {"address", c.address.hex()}});
  j["timeout"] = timeout;
  j["service_key"] = service_key.hex();
  j["salt"] = salt;
  j["app"] = app;
  return j;
}

DealDescriptor DealDescriptor::from_json(const nlohmann::json& j) {
  DealDescriptor d;
  d.id = DealId::from_hex(j.at("deal_id").get<std::string>());
  for (const auto& p : j.at("parties"))
    d.parties.push_back({p.at("role").get<std::string>(), Address::from_hex(p.at("account").get<std::string>()),
                         PublicKey::from_hex(p.at("key").get<std::string>())});
  d.specifier = j.at("specifier").get<std::uint32_t>();
  for (const auto& c : j.at("contracts")) {
    auto kind = c.at("kind").get<std::string>() == "TicketEscrow" ? ContractKind::TicketEscrow
                                                                  : ContractKind::CoinEscrow;
    d.contracts.push_back(
        {ChainId(c.at("chain").get<std::string>()), kind, Address::from_hex(c.at("address").get<std::string>())});
  }
  d.timeout = j.at("timeout").get<std::uint64_t>();
  d.service_key = PublicKey::from_hex(j.at("service_key").get<std::string>());
  d.salt = j.at("salt").get<std::uint64_t>();
  d.app = j.at("app").get<std::string>();
  return d;
}

Hash256 transfer_digest(std::span<const Bytes> plans_in_deal_order) {
  Encoder enc;
  enc.str(kPlanSetTag).u32(static_cast<std::uint32_t>(plans_in_deal_order.size()));
  for (const auto& plan : plans_in_deal_order) enc.bytes(plan);
  return sha256(enc.data());
}

Bytes CommitVote::signing_message(const DealId& deal, const Hash256& digest) {
  Encoder enc;
  enc.str(kVoteTag).fixed(deal).fixed(digest);
  return enc.take();
}

Signature CommitVote::sign(const KeyPair& key, const DealId& deal, const Hash256& digest) {
  return key.sign(signing_message(deal, digest));
}

bool CommitVote::has_valid_signature(const PublicKey& key) const {
  auto it = signatures.find(key);
  return it != signatures.end() && verify(key, signing_message(deal_id, transfer_digest), it->second);
}

std::vector<PublicKey> CommitVote::missing(std::span<const PublicKey> parties) const {
  std::vector<PublicKey> out;
  for (const auto& key : parties)
    if (!has_valid_signature(key)) out.push_back(key);
  return out;
}

void CommitVote::encode(Encoder& enc) const {
  enc.fixed(deal_id).fixed(transfer_digest).u32(static_cast<std::uint32_t>(signatures.size()));
  for (const auto& [key, sig] : signatures) enc.fixed(key).fixed(sig);
}

CommitVote CommitVote::decode(Decoder& dec) {
  CommitVote v;
  v.deal_id = dec.fixed<DealId>();
  v.transfer_digest = dec.fixed<Hash256>();
  auto n = dec.u32();
  for (std::uint32_t i = 0; i < n; ++i) {
    auto key = dec.fixed<PublicKey>();
    v.signatures[key] = dec.fixed<Signature>();
  }
  return v;
}

AbortRequest AbortRequest::make(const DealId& deal, const KeyPair& key, std::string reason) {
  AbortRequest r;
  r.deal_id = deal;
  r.requester = key.public_key();
  r.reason = std::move(reason);
  Encoder enc;
  enc.str(kAbortTag).fixed(r.deal_id).str(r.reason);
  r.signature = key.sign(enc.data());
  return r;
}

bool AbortRequest::verify() const {
  Encoder enc;
  enc.str(kAbortTag).fixed(deal_id).str(reason);
  return xdeal::verify(requester, enc.data(), signature);
}

void AbortRequest::encode(Encoder& enc) const {
  enc.fixed(deal_id).fixed(requester).str(reason).fixed(signature);
}

AbortRequest AbortRequest::decode(Decoder& dec) {
  AbortRequest r;
  r.deal_id = dec.fixed<DealId>();
  r.requester = dec.fixed<PublicKey>();
  r.reason = dec.str();
  r.signature = dec.fixed<Signature>();
  return r;
}

ConclusionRecord ConclusionRecord::commit(CommitVote vote) {
  ConclusionRecord c;
  c.deal_id = vote.deal_id;
  c.body = std::move(vote);
  return c;
}

ConclusionRecord ConclusionRecord::abort(AbortRequest request) {
  ConclusionRecord c;
  c.deal_id = request.deal_id;
  c.body = std::move(request);
  return c;
}

Bytes ConclusionRecord::encode() const {
  Encoder enc;
  enc.fixed(deal_id).u8(static_cast<std::uint8_t>(kind()));
  std::visit([&](const auto& b) { b.encode(enc); }, body);
  return enc.take();
}

ConclusionRecord ConclusionRecord::decode(ByteView bytes) {
  Decoder dec(bytes);
  ConclusionRecord c;
  c.deal_id = dec.fixed<DealId>();
  auto kind = dec.u8();
  if (kind == static_cast<std::uint8_t>(ConclusionKind::Commit))
    c.body = CommitVote::decode(dec);
  else if (kind == static_cast<std::uint8_t>(ConclusionKind::Abort))
    c.body = AbortRequest::decode(dec);
  else
    throw Error(Errc::DecodeError, "unknown conclusion kind");
  dec.expect_done();
  auto inner = std::visit([](const auto& b) { return b.deal_id; }, c.body);
  if (inner != c.deal_id) throw Error(Errc::DecodeError, "conclusion body deal id mismatch");
  return c;
}

}  // namespace xdeal
