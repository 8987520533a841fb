#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "xdeal/chain/ledger.hpp"
#include "xdeal/deal/protocol.hpp"
#include "xdeal/log/event_log.hpp"

namespace xdeal::test {

inline KeyPair key(std::string_view name) { return KeyPair::dev(name); }
inline Address addr(std::string_view name) { return key(name).address(); }

inline chain::Receipt send(chain::Ledger& ledger, const KeyPair& sender, chain::Payload payload) {
  auto tx = chain::Transaction::make(ledger.id(), sender, ledger.nonce(sender.address()) + 1, std::move(payload));
  return ledger.submit_transaction(tx);
}

inline chain::Receipt call(chain::Ledger& ledger, const KeyPair& sender, const Address& contract, escrow::Call c) {
  return send(ledger, sender, chain::ContractCall{contract, std::move(c)});
}

/// One deal's worth of keys: three parties, a service key and a log operator.
struct DealKeys {
  KeyPair p0 = key("party-0");
  KeyPair p1 = key("party-1");
  KeyPair p2 = key("party-2");
  KeyPair service = key("service");
  KeyPair log_op = key("log-op");

  std::vector<PublicKey> party_keys() const { return {p0.public_key(), p1.public_key(), p2.public_key()}; }
  std::vector<const KeyPair*> parties() const { return {&p0, &p1, &p2}; }

  escrow::EscrowInit init(const DealId& deal, ContractKind kind, std::uint32_t index, NftId ticket = {}) const {
    escrow::EscrowInit i;
    i.deal_id = deal;
    i.kind = kind;
    i.deal_index = index;
    i.party_keys = party_keys();
    i.log_keys = {log_op.public_key()};
    i.service_key = service.public_key();
    i.specifier = p0.address();
    i.ticket = std::move(ticket);
    return i;
  }
};

inline DealId deal_id(std::string_view label) { return convert<DealId>(sha256(as_bytes(label))); }

/// Appends a conclusion for `deal` and returns the record bytes and attestation.
struct Attested {
  Bytes record;
  std::vector<log::InclusionAttestation> atts;
  log::AppendResult result;
};

inline Attested conclude(log::EventLog& log, const ConclusionRecord& c, const KeyPair& producer) {
  auto rec = log::LogRecord::make(deal_topic(c.deal_id), log::RecordKind::Conclusion, c.encode(), producer);
  auto result = log.append(rec);
  Attested out{{}, {}, result};
  if (auto* off = std::get_if<std::uint64_t>(&result)) {
    rec.offset = *off;
    out.record = rec.encode();
    out.atts = {log.attest(rec.topic, *off)};
  }
  return out;
}

inline CommitVote full_vote(const DealKeys& k, const DealId& deal, std::span<const Bytes> plans) {
  CommitVote v;
  v.deal_id = deal;
  v.transfer_digest = transfer_digest(plans);
  for (const auto* p : k.parties()) v.signatures[p->public_key()] = CommitVote::sign(*p, deal, v.transfer_digest);
  return v;
}

}  // namespace xdeal::test
