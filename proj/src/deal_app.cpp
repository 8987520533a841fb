#include "xdeal/deal/app.hpp"

#include <algorithm>

#include "xdeal/errors.hpp"

namespace xdeal::deal {

std::shared_ptr<const DealApp> AppRegistry::find(const std::string& kind) const {
  auto it = apps_.find(kind);
  return it == apps_.end() ? nullptr : it->second;
}

std::shared_ptr<const DealApp> AppRegistry::for_descriptor(const DealDescriptor& desc) const {
  try {
    return find(nlohmann::json::parse(desc.app).at("type").get<std::string>());
  } catch (const nlohmann::json::exception&) {
    return nullptr;
  }
}

escrow::EscrowInit escrow_init(const DealDescriptor& desc, std::size_t index, std::span<const PublicKey> log_keys,
                               std::uint32_t log_quorum, const NftId& ticket) {
  escrow::EscrowInit init;
  init.deal_id = desc.id;
  init.kind = desc.contracts.at(index).kind;
  init.deal_index = static_cast<std::uint32_t>(index);
  init.party_keys = desc.party_keys();
  init.log_keys.assign(log_keys.begin(), log_keys.end());
  init.log_quorum = log_quorum;
  init.service_key = desc.service_key;
  init.specifier = desc.specifier_party().account;
  if (init.kind == ContractKind::TicketEscrow) init.ticket = ticket;
  return init;
}

std::vector<Bytes> encode_plans(std::span<const escrow::TransferPlan> plans) {
  std::vector<Bytes> out;
  out.reserve(plans.size());
  for (const auto& p : plans) out.push_back(escrow::encode_plan(p));
  return out;
}

VoteCollector::VoteCollector(DealId deal, Hash256 digest, std::vector<PublicKey> parties)
    : parties_(std::move(parties)) {
  vote_.deal_id = deal;
  vote_.transfer_digest = digest;
}

VoteCollector::AddResult VoteCollector::add(const PublicKey& party, const Signature& sig) {
  if (std::find(parties_.begin(), parties_.end(), party) == parties_.end()) return AddResult::NotParty;
  if (vote_.signatures.count(party)) return AddResult::Duplicate;
  if (!verify(party, CommitVote::signing_message(vote_.deal_id, vote_.transfer_digest), sig))
    return AddResult::BadSignature;
  vote_.signatures.emplace(party, sig);
  return AddResult::Accepted;
}

void VoteCollector::reject(const PublicKey& party) {
  if (!rejected_ && std::find(parties_.begin(), parties_.end(), party) != parties_.end()) rejected_ = party;
}

std::vector<PublicKey> VoteCollector::missing() const { return vote_.missing(parties_); }

std::optional<Error> VoteCollector::failure(Time now, Time deadline) const {
  if (rejected_) return Error(Errc::PartyRejected, rejected_->hex());
  if (now > deadline && !complete()) {
    std::string who;
    for (const auto& k : missing()) who += (who.empty() ? "" : ",") + k.short_hex();
    return Error(Errc::Timeout, who);
  }
  return std::nullopt;
}

std::optional<AbortRequest> watchdog(const DealDescriptor& desc, Time now, bool conclusion_exists,
                                     const KeyPair& service) {
  if (conclusion_exists || now <= desc.timeout) return std::nullopt;
  return AbortRequest::make(desc.id, service, "deadline passed without conclusion");
}

}  // namespace xdeal::deal
