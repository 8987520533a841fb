#include "xdeal/deal/ccsvc.hpp"

#include <algorithm>
#include <deque>
#include <fstream>

#include "xdeal/errors.hpp"

namespace xdeal::deal {

using sim::Ack;
using sim::Message;

namespace {

constexpr std::uint64_t kTick = 1;

Bytes bytes_of(const std::string& s) { return {s.begin(), s.end()}; }

Ack refuse(Errc code, std::string message = {}) {
  Ack a;
  a.ok = false;
  a.error = code;
  a.message = message.empty() ? std::string(to_string(code)) : std::move(message);
  return a;
}

Ack accept(nlohmann::json data = nlohmann::json::object()) {
  Ack a;
  a.data = std::move(data);
  return a;
}

}  // namespace

Journal::Journal(std::filesystem::path file) : file_(std::move(file)) {
  std::ifstream in(*file_);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      entries_.push_back(nlohmann::json::parse(line));
    } catch (const nlohmann::json::exception&) {
      break;  // torn tail from a crash mid-write
    }
  }
}

void Journal::append(nlohmann::json entry) {
  std::lock_guard lock(mu_);
  if (file_) {
    std::ofstream out(*file_, std::ios::app);
    out << entry.dump() << '\n';
    if (!out) throw Error(Errc::IoError, "journal write failed: " + file_->string());
  }
  entries_.push_back(std::move(entry));
}

std::vector<nlohmann::json> Journal::entries() const {
  std::lock_guard lock(mu_);
  return entries_;
}

struct CcSvc::DealRun {
  DealDescriptor desc;
  std::shared_ptr<const DealApp> app;
  std::string creator;
  std::uint64_t creator_rpc = 0;

  bool recovered = false;
  bool published = false;
  bool done = false;
  bool failed = false;
  std::set<std::string> inflight;
  std::set<std::size_t> announced;

  std::vector<log::LogRecord> records;
  std::vector<std::optional<escrow::ContractState>> states;
  std::vector<bool> terminal;

  struct Lane {
    std::uint64_t cursor = 0;
    std::uint64_t scan_to = 0;
    std::deque<chain::ChainEvent> queue;
  };
  std::map<std::size_t, Lane> lanes;

  std::optional<sim::Time> specify_sent_at;
  std::uint64_t specify_rpc = 0;
  std::optional<VoteCollector> votes;
  std::vector<std::uint64_t> sign_rpcs;
  std::optional<AbortRequest> party_abort;

  std::optional<ConclusionKind> kind;
  std::uint64_t offset = 0;
  std::vector<log::InclusionAttestation> atts;

  bool begin(const std::string& key) { return inflight.insert(key).second; }
  void end(const std::string& key) { inflight.erase(key); }

  bool all_states() const {
    return std::all_of(states.begin(), states.end(), [](const auto& s) { return s.has_value(); });
  }
  std::vector<escrow::ContractState> state_list() const {
    std::vector<escrow::ContractState> out;
    for (const auto& s : states) out.push_back(*s);
    return out;
  }

  void scan_conclusion() {
    if (kind) return;
    for (const auto& r : records) {
      if (r.kind != log::RecordKind::Conclusion) continue;
      try {
        auto c = r.conclusion();
        if (c.deal_id != desc.id) continue;
        kind = c.kind();
        offset = r.offset;
        return;
      } catch (const Error&) {
      }
    }
  }

  void init_slots() {
    states.assign(desc.contracts.size(), std::nullopt);
    terminal.assign(desc.contracts.size(), false);
  }
};

CcSvc::CcSvc(Config config, std::shared_ptr<Journal> journal, std::shared_ptr<const AppRegistry> apps,
             std::shared_ptr<const chain::Keystore> directory)
    : sim::Actor(config.name),
      key_(config.key),
      config_(std::move(config)),
      journal_(std::move(journal)),
      apps_(std::move(apps)),
      directory_(std::move(directory)),
      submitter_(config_.name, key_) {
  for (const auto& [name, kp] : directory_->all()) names_.emplace(kp.address(), name);
}

CcSvc::~CcSvc() = default;

std::optional<std::string> CcSvc::actor_for(const Address& account, const sim::Runtime& rt) const {
  auto it = names_.find(account);
  if (it == names_.end() || !rt.has(it->second)) return std::nullopt;
  return it->second;
}

void CcSvc::load_journal() {
  deals_.clear();
  for (const auto& e : journal_->entries()) {
    auto op = e.value("op", std::string());
    if (op == "deal") {
      auto run = std::make_unique<DealRun>();
      run->desc = DealDescriptor::from_json(e.at("descriptor"));
      run->app = apps_->for_descriptor(run->desc);
      run->creator = e.at("from").get<std::string>();
      run->creator_rpc = e.at("rpc").get<std::uint64_t>();
      run->init_slots();
      auto id = run->desc.id;
      deals_[id] = std::move(run);
      continue;
    }
    auto it = deals_.find(DealId::from_hex(e.at("deal").get<std::string>()));
    if (it == deals_.end()) continue;
    auto& d = *it->second;
    if (op == "terminal") {
      d.terminal.at(e.at("contract").get<std::size_t>()) = true;
    } else if (op == "done") {
      d.done = true;
    } else if (op == "failed") {
      d.done = d.failed = true;
    }
  }
}

void CcSvc::start(sim::Runtime& rt) {
  load_journal();
  rt.set_timer(name(), config_.tick, kTick);
}

void CcSvc::on_crash() {
  deals_.clear();
  submitter_.reset();
}

void CcSvc::on_timer(sim::Runtime& rt, std::uint64_t tag) {
  if (tag != kTick) return;
  for (auto& [id, d] : deals_)
    if (!d->done) reconcile(rt, *d);
  rt.set_timer(name(), config_.tick, kTick);
}

std::vector<DealSnapshot> CcSvc::deals() const {
  std::vector<DealSnapshot> out;
  for (const auto& [id, d] : deals_) {
    DealSnapshot s;
    s.desc = d->desc;
    s.app = d->app->kind();
    s.published = d->published;
    s.done = d->done;
    s.failed = d->failed;
    s.conclusion = d->kind;
    s.terminal = d->terminal;
    out.push_back(std::move(s));
  }
  return out;
}

void CcSvc::reconcile(sim::Runtime& rt, DealRun& d) {
  if (!d.recovered) {
    recover(rt, d);
    return;
  }
  if (!d.published) {
    clear(rt, d);
    return;
  }
  announce(rt, d);
  refresh_log(rt, d);
  refresh_states(rt, d);
  if (d.kind) {
    finish(rt, d);
    return;
  }
  relay(rt, d);
  progress(rt, d);
}

void CcSvc::recover(sim::Runtime& rt, DealRun& d) {
  if (!d.begin("recover")) return;
  DealRun* dp = &d;
  rt.call(name(), sim::kLogActor, sim::LogReadMsg{d.desc.topic(), 0}, [this, dp](const Message& m) {
    dp->end("recover");
    dp->records = std::get<sim::LogReadResult>(m).records;
    dp->recovered = true;
    for (const auto& r : dp->records) {
      if (r.kind != log::RecordKind::Info || r.producer != key_.public_key()) continue;
      try {
        auto desc = DealDescriptor::from_json(nlohmann::json::parse(r.payload.begin(), r.payload.end()));
        if (desc.id != dp->desc.id) continue;
        dp->desc = desc;
        dp->published = true;
        break;
      } catch (const std::exception&) {
      }
    }
    dp->scan_conclusion();
  });
}

bool CcSvc::clear(sim::Runtime& rt, DealRun& d) {
  DealRun* dp = &d;
  bool deployed = true;
  for (std::size_t i = 0; i < d.desc.contracts.size(); ++i) {
    if (!d.desc.contracts[i].address.is_zero()) continue;
    deployed = false;
    auto key = "deploy:" + std::to_string(i);
    if (!d.begin(key)) continue;
    auto chain = d.desc.contracts[i].chain;
    sim::query_chain(
        rt, name(), chain, chain::DealContractsQuery{d.desc.id, key_.address()},
        [this, dp, i, key, chain, &rt](const sim::ChainAnswerMsg& a) {
          if (!a.ok) {
            dp->end(key);
            return;
          }
          const auto& found = std::get<std::vector<Address>>(a.answer);
          if (!found.empty()) {
            // Earliest deployment wins, so a restart never orphans a funded contract.
            dp->desc.contracts[i].address = found.front();
            dp->end(key);
            return;
          }
          auto init = escrow_init(dp->desc, i, config_.log_keys, config_.log_quorum, dp->app->ticket_asset(dp->desc));
          submitter_.submit(rt, chain, chain::DeployContract{init}, [this, dp, key, &rt](const sim::TxResult& r) {
            dp->end(key);
            if (r.ok) return;  // the next tick adopts it through the query
            dp->done = dp->failed = true;
            journal_->append({{"op", "failed"}, {"deal", dp->desc.id.hex()}, {"error", std::string(to_string(r.error))}});
            rt.note(name(), "deploy-failed");
          });
        });
  }
  if (!deployed || !d.begin("publish")) return false;
  auto payload = d.desc.to_json().dump();
  auto record = log::LogRecord::make(d.desc.topic(), log::RecordKind::Info, bytes_of(payload), key_);
  rt.call(name(), sim::kLogActor, sim::LogAppendMsg{record}, [this, dp, &rt](const Message& m) {
    dp->end("publish");
    const auto& r = std::get<sim::LogAppendResult>(m);
    if (!r.ok) return;
    dp->published = true;
    rt.note(name(), "cleared");
  });
  return true;
}

void CcSvc::announce(sim::Runtime& rt, DealRun& d) {
  DealRun* dp = &d;
  for (std::size_t i = 0; i < d.desc.parties.size(); ++i) {
    if (d.announced.count(i)) continue;
    auto key = "announce:" + std::to_string(i);
    if (!d.begin(key)) continue;
    auto actor = actor_for(d.desc.parties[i].account, rt);
    if (!actor) {
      d.end(key);
      d.announced.insert(i);
      continue;
    }
    rt.call(name(), *actor, sim::DealAnnounce{d.desc}, [dp, i, key](const Message&) {
      dp->end(key);
      dp->announced.insert(i);
    });
  }
}

void CcSvc::refresh_log(sim::Runtime& rt, DealRun& d) {
  if (!d.begin("read")) return;
  DealRun* dp = &d;
  rt.call(name(), sim::kLogActor, sim::LogReadMsg{d.desc.topic(), d.records.size()}, [dp](const Message& m) {
    dp->end("read");
    for (const auto& r : std::get<sim::LogReadResult>(m).records)
      if (r.offset == dp->records.size()) dp->records.push_back(r);
    dp->scan_conclusion();
  });
}

void CcSvc::refresh_states(sim::Runtime& rt, DealRun& d) {
  DealRun* dp = &d;
  for (std::size_t i = 0; i < d.desc.contracts.size(); ++i) {
    if (d.terminal[i] && d.states[i]) continue;
    auto key = "state:" + std::to_string(i);
    if (!d.begin(key)) continue;
    sim::query_chain(rt, name(), d.desc.contracts[i].chain, chain::ContractStateQuery{d.desc.contracts[i].address},
                     [this, dp, i, key, &rt](const sim::ChainAnswerMsg& a) {
                       dp->end(key);
                       if (!a.ok) return;
                       dp->states[i] = std::get<escrow::ContractState>(a.answer);
                       auto phase = escrow::phase_of(*dp->states[i]);
                       if (escrow::is_terminal(phase) && !dp->terminal[i]) mark_terminal(rt, *dp, i, phase);
                     });
  }
}

void CcSvc::relay(sim::Runtime& rt, DealRun& d) {
  DealRun* dp = &d;
  for (std::size_t i = 0; i < d.desc.contracts.size(); ++i) {
    if (d.desc.contracts[i].kind != ContractKind::CoinEscrow) continue;
    auto& lane = d.lanes[i];
    if (!lane.queue.empty()) {
      relay_next(rt, d, i);
      continue;
    }
    auto key = "scan:" + std::to_string(i);
    if (!d.begin(key)) continue;
    sim::query_chain(rt, name(), d.desc.contracts[i].chain, chain::EventsSinceQuery{lane.cursor},
                     [this, dp, i, key, &rt](const sim::ChainAnswerMsg& a) {
                       dp->end(key);
                       if (!a.ok) return;
                       auto& lane = dp->lanes[i];
                       if (!lane.queue.empty()) return;
                       for (const auto& ev : std::get<std::vector<chain::ChainEvent>>(a.answer)) {
                         lane.scan_to = std::max(lane.scan_to, ev.seq + 1);
                         if (dp->app->relay_payload(dp->desc, i, ev)) lane.queue.push_back(ev);
                       }
                       if (lane.queue.empty())
                         lane.cursor = std::max(lane.cursor, lane.scan_to);
                       else
                         relay_next(rt, *dp, i);
                     });
  }
}

void CcSvc::relay_next(sim::Runtime& rt, DealRun& d, std::size_t contract) {
  auto& lane = d.lanes[contract];
  if (lane.queue.empty()) {
    lane.cursor = std::max(lane.cursor, lane.scan_to);
    return;
  }
  if (d.kind) return;
  auto key = "relay:" + std::to_string(contract);
  if (!d.begin(key)) return;
  DealRun* dp = &d;
  const auto ev = lane.queue.front();
  auto payload = d.app->relay_payload(d.desc, contract, ev);
  auto record = log::LogRecord::make(d.desc.topic(), log::RecordKind::BidEvent, *payload, key_);
  rt.call(name(), sim::kLogActor, sim::LogAppendMsg{record}, [this, dp, contract, key, ev, &rt](const Message& m) {
    const auto& r = std::get<sim::LogAppendResult>(m);
    if (!r.ok) {
      dp->end(key);
      return;
    }
    rt.note(name(), "relayed");
    auto done = [this, dp, contract, key, &rt] {
      dp->end(key);
      auto& lane = dp->lanes[contract];
      if (!lane.queue.empty()) lane.queue.pop_front();
      relay_next(rt, *dp, contract);
    };
    auto ticket = std::find_if(dp->desc.contracts.begin(), dp->desc.contracts.end(),
                               [](const DealContract& c) { return c.kind == ContractKind::TicketEscrow; });
    if (ticket == dp->desc.contracts.end()) {
      done();
      return;
    }
    auto p = ev.payload_json();
    escrow::RelayedBid bid{ev.chain, Address::from_hex(p.at("depositor").get<std::string>()),
                           p.at("total").get<std::uint64_t>(), ev.seq};
    // DuplicateRelay after a restart, or WrongPhase once bidding closed: either way nothing left to do.
    submitter_.submit(rt, ticket->chain, chain::ContractCall{ticket->address, escrow::RelayBid{bid}},
                      [done](const sim::TxResult&) { done(); });
  });
}

void CcSvc::progress(sim::Runtime& rt, DealRun& d) {
  if (auto req = watchdog(d.desc, rt.now(), false, key_)) {
    append_conclusion(rt, d, ConclusionRecord::abort(*req));
    return;
  }
  if (d.party_abort) {
    append_conclusion(rt, d, ConclusionRecord::abort(*d.party_abort));
    return;
  }
  if (d.votes && d.votes->rejected_by()) {
    append_conclusion(rt, d, ConclusionRecord::abort(AbortRequest::make(d.desc.id, key_, "party rejected the transfers")));
    return;
  }
  if (!d.all_states()) return;
  auto states = d.state_list();
  auto decision = d.app->decide(AppView{d.desc, d.records, states});
  if (!decision) return;
  if (!decision->abort_reason.empty()) {
    append_conclusion(rt, d, ConclusionRecord::abort(AbortRequest::make(d.desc.id, key_, decision->abort_reason)));
    return;
  }

  bool specified = std::all_of(states.begin(), states.end(), [](const escrow::ContractState& s) {
    return escrow::phase_of(s) == escrow::EscrowPhase::TransferSpecified;
  });
  if (!specified) {
    if (!d.specify_sent_at || rt.now() >= *d.specify_sent_at + config_.respecify_after) {
      auto actor = actor_for(d.desc.specifier_party().account, rt);
      if (!actor) return;
      if (d.specify_rpc) rt.cancel(d.specify_rpc);
      d.specify_sent_at = rt.now();
      d.specify_rpc = rt.call(name(), *actor, sim::SpecifyRequest{d.desc.id, decision->plans}, [](const Message&) {});
    }
    return;
  }

  std::vector<Bytes> plan_set;
  for (const auto& s : states) plan_set.push_back(escrow::encode_plan(*escrow::stored_plan(s)));
  auto digest = transfer_digest(plan_set);
  if (!d.votes || d.votes->digest() != digest) {
    for (auto id : d.sign_rpcs) rt.cancel(id);
    d.sign_rpcs.clear();
    d.votes.emplace(d.desc.id, digest, d.desc.party_keys());
    request_signatures(rt, d, plan_set);
  }
  if (d.votes->complete()) append_conclusion(rt, d, ConclusionRecord::commit(d.votes->vote()));
}

void CcSvc::request_signatures(sim::Runtime& rt, DealRun& d, const std::vector<Bytes>& plan_set) {
  DealRun* dp = &d;
  auto digest = d.votes->digest();
  for (const auto& party : d.desc.parties) {
    auto actor = actor_for(party.account, rt);
    if (!actor) continue;  // nobody to sign for this party; the watchdog ends the deal
    auto key = party.key;
    d.sign_rpcs.push_back(rt.call(
        name(), *actor, sim::ValidateAndSign{d.desc.id, digest, plan_set},
        [this, dp, key, digest, &rt](const Message& m) {
          if (!dp->votes || dp->votes->digest() != digest) return;
          const auto& r = std::get<sim::SignResult>(m);
          if (r.ok) {
            if (dp->votes->add(key, r.signature) == VoteCollector::AddResult::Accepted) rt.note(name(), "vote-signature");
            return;
          }
          dp->votes->reject(key);
          if (r.reject && r.reject->deal_id == dp->desc.id && r.reject->requester == key && r.reject->verify())
            dp->party_abort = *r.reject;
          rt.note(name(), "vote-rejected");
        }));
  }
}

void CcSvc::append_conclusion(sim::Runtime& rt, DealRun& d, ConclusionRecord c) {
  if (!d.begin("conclude")) return;
  DealRun* dp = &d;
  auto kind = c.kind();
  auto record = log::LogRecord::make(d.desc.topic(), log::RecordKind::Conclusion, c.encode(), key_);
  rt.call(name(), sim::kLogActor, sim::LogAppendMsg{record}, [this, dp, kind, &rt](const Message& m) {
    dp->end("conclude");
    const auto& r = std::get<sim::LogAppendResult>(m);
    if (dp->kind) return;
    if (r.ok) {
      dp->kind = kind;
      dp->offset = r.offset;
      rt.note(name(), kind == ConclusionKind::Commit ? "logged-commit" : "logged-abort");
    } else if (r.exists) {
      dp->kind = r.exists->existing;
      dp->offset = r.exists->offset;
      rt.note(name(), "conclusion-exists");
    }
  });
}

void CcSvc::finish(sim::Runtime& rt, DealRun& d) {
  DealRun* dp = &d;
  for (auto id : d.sign_rpcs) rt.cancel(id);
  d.sign_rpcs.clear();
  if (d.specify_rpc) rt.cancel(d.specify_rpc);
  d.specify_rpc = 0;

  if (d.offset >= d.records.size()) return;  // wait for the log read to catch up
  if (d.atts.empty()) {
    if (!d.begin("attest")) return;
    rt.call(name(), sim::kLogActor, sim::LogAttestMsg{d.desc.topic(), d.offset}, [dp](const Message& m) {
      dp->end("attest");
      const auto& r = std::get<sim::LogAttestResult>(m);
      if (r.ok) dp->atts = r.attestations;
    });
    return;
  }
  bool commit = *d.kind == ConclusionKind::Commit;
  std::vector<Bytes> plan_set;
  if (commit) {
    if (!d.all_states()) return;
    for (const auto& s : d.states) {
      auto plan = escrow::stored_plan(*s);
      if (!plan) return;
      plan_set.push_back(escrow::encode_plan(*plan));
    }
  }
  auto record = d.records[d.offset].encode();
  for (std::size_t i = 0; i < d.desc.contracts.size(); ++i) {
    if (d.terminal[i]) continue;
    auto key = "finish:" + std::to_string(i);
    if (!d.begin(key)) continue;
    escrow::Call call = commit ? escrow::Call{escrow::CommitCall{record, d.atts, plan_set}}
                               : escrow::Call{escrow::AbortCall{record, d.atts}};
    const auto& c = d.desc.contracts[i];
    submitter_.submit(rt, c.chain, chain::ContractCall{c.address, call},
                      [this, dp, i, key, commit, &rt](const sim::TxResult& r) {
                        dp->end(key);
                        if (!r.ok || dp->terminal[i]) return;  // the state refresh settles it
                        rt.note(name(), commit ? "commit-receipt" : "abort-receipt");
                        mark_terminal(rt, *dp, i,
                                      commit ? escrow::EscrowPhase::Committed : escrow::EscrowPhase::Aborted);
                      });
  }
}

void CcSvc::mark_terminal(sim::Runtime& rt, DealRun& d, std::size_t index, escrow::EscrowPhase phase) {
  d.terminal[index] = true;
  journal_->append(
      {{"op", "terminal"}, {"deal", d.desc.id.hex()}, {"contract", index}, {"phase", escrow::to_string(phase)}});
  if (d.done || !std::all_of(d.terminal.begin(), d.terminal.end(), [](bool t) { return t; })) return;
  d.done = true;
  journal_->append({{"op", "done"}, {"deal", d.desc.id.hex()}});
  rt.note(name(), "deal-done");
}

void CcSvc::on_request(sim::Runtime& rt, const sim::Inbound& in) {
  if (const auto* m = std::get_if<sim::CreateDealMsg>(&in.msg)) {
    handle_create(rt, in, *m);
  } else if (const auto* m = std::get_if<sim::EndAuctionMsg>(&in.msg)) {
    handle_end(rt, in, *m);
  } else if (const auto* m = std::get_if<sim::AbortMsg>(&in.msg)) {
    handle_abort(rt, in, *m);
  } else {
    rt.reply(name(), in, refuse(Errc::BadParams, "unsupported request"));
  }
}

void CcSvc::handle_create(sim::Runtime& rt, const sim::Inbound& in, const sim::CreateDealMsg& msg) {
  for (const auto& [id, d] : deals_) {
    // A request retried after a restart: answer with the deal it created.
    if (d->creator == in.from && d->creator_rpc == in.rpc) {
      rt.reply(name(), in, accept({{"deal_id", id.hex()}}));
      return;
    }
  }
  auto app = apps_->find(msg.app);
  if (!app) {
    rt.reply(name(), in, refuse(Errc::BadParams, "unknown deal type " + msg.app));
    return;
  }
  auto desc = std::make_shared<DealDescriptor>();
  try {
    *desc = app->build(msg.params, BuildContext{*directory_, key_.public_key(), rt.now(), in.from});
  } catch (const Error& e) {
    rt.reply(name(), in, refuse(e.code(), e.what()));
    return;
  } catch (const std::exception& e) {
    rt.reply(name(), in, refuse(Errc::BadParams, e.what()));
    return;
  }
  if (deals_.count(desc->id)) {
    rt.reply(name(), in, refuse(Errc::DeployFailed, "deal already exists"));
    return;
  }
  auto checks = std::make_shared<std::vector<Precheck>>(app->prechecks(*desc));
  run_prechecks(rt, in.from, in.rpc, desc, app, checks, 0);
}

void CcSvc::run_prechecks(sim::Runtime& rt, std::string caller, std::uint64_t rpc,
                          std::shared_ptr<DealDescriptor> desc, std::shared_ptr<const DealApp> app,
                          std::shared_ptr<std::vector<Precheck>> checks, std::size_t next) {
  if (next == checks->size()) {
    register_deal(rt, caller, rpc, *desc, app);
    return;
  }
  const auto& check = (*checks)[next];
  sim::query_chain(rt, name(), check.chain, check.query,
                   [this, &rt, caller, rpc, desc, app, checks, next](const sim::ChainAnswerMsg& a) {
                     if (auto err = (*checks)[next].check(a.ok ? &a.answer : nullptr)) {
                       rt.reply_to(name(), caller, rpc, refuse(*err));
                       return;
                     }
                     run_prechecks(rt, caller, rpc, desc, app, checks, next + 1);
                   });
}

void CcSvc::register_deal(sim::Runtime& rt, const std::string& caller, std::uint64_t rpc,
                          const DealDescriptor& desc, std::shared_ptr<const DealApp> app) {
  if (auto it = deals_.find(desc.id); it != deals_.end()) {
    bool same = it->second->creator == caller && it->second->creator_rpc == rpc;
    rt.reply_to(name(), caller, rpc,
                same ? accept({{"deal_id", desc.id.hex()}}) : refuse(Errc::DeployFailed, "deal already exists"));
    return;
  }
  journal_->append({{"op", "deal"},
                    {"deal", desc.id.hex()},
                    {"app", app->kind()},
                    {"descriptor", desc.to_json()},
                    {"from", caller},
                    {"rpc", rpc}});
  auto run = std::make_unique<DealRun>();
  run->desc = desc;
  run->app = std::move(app);
  run->creator = caller;
  run->creator_rpc = rpc;
  run->recovered = true;  // fresh deal: nothing on the log yet
  run->init_slots();
  deals_[desc.id] = std::move(run);
  rt.note(name(), "deal-created");
  rt.reply_to(name(), caller, rpc, accept({{"deal_id", desc.id.hex()}}));
}

void CcSvc::handle_end(sim::Runtime& rt, const sim::Inbound& in, const sim::EndAuctionMsg& msg) {
  auto it = deals_.find(msg.deal);
  if (it == deals_.end() || !it->second->published) {
    rt.reply(name(), in, refuse(Errc::UnknownAuction));
    return;
  }
  auto& d = *it->second;
  if (msg.requester != d.desc.specifier_party().key ||
      !verify(msg.requester, sim::end_auction_message(msg.deal), msg.signature)) {
    rt.reply(name(), in, refuse(Errc::BadSignature, "end request must be signed by the auctioneer"));
    return;
  }
  if (d.kind) {
    rt.reply(name(), in, refuse(Errc::AuctionClosed));
    return;
  }
  for (const auto& r : d.records) {
    if (r.kind == log::RecordKind::EndAuction && r.producer == key_.public_key()) {
      rt.reply(name(), in, accept({{"offset", r.offset}}));
      return;
    }
  }
  if (auto err = d.app->check_end(d.desc, rt.now())) {
    rt.reply(name(), in, refuse(*err));
    return;
  }
  auto record = log::LogRecord::make(d.desc.topic(), log::RecordKind::EndAuction, d.app->end_payload(d.desc), key_);
  auto caller = in.from;
  auto rpc = in.rpc;
  rt.call(name(), sim::kLogActor, sim::LogAppendMsg{record}, [this, &rt, caller, rpc](const Message& m) {
    const auto& r = std::get<sim::LogAppendResult>(m);
    if (!r.ok) {
      rt.reply_to(name(), caller, rpc, refuse(r.error));
      return;
    }
    rt.note(name(), "auction-ended");
    rt.reply_to(name(), caller, rpc, accept({{"offset", r.offset}}));
  });
}

void CcSvc::handle_abort(sim::Runtime& rt, const sim::Inbound& in, const sim::AbortMsg& msg) {
  const auto& req = msg.request;
  auto it = deals_.find(req.deal_id);
  if (it == deals_.end()) {
    rt.reply(name(), in, refuse(Errc::BadParams, "unknown deal"));
    return;
  }
  auto& d = *it->second;
  if (!req.verify()) {
    rt.reply(name(), in, refuse(Errc::BadSignature));
    return;
  }
  if (!d.desc.find_party(req.requester)) {
    rt.reply(name(), in, refuse(Errc::NotParty));
    return;
  }
  if (d.kind) {
    rt.reply(name(), in, accept({{"conclusion", to_string(*d.kind)}, {"offset", d.offset}}));
    return;
  }
  DealRun* dp = &d;
  auto record = log::LogRecord::make(d.desc.topic(), log::RecordKind::Conclusion,
                                     ConclusionRecord::abort(req).encode(), key_);
  auto caller = in.from;
  auto rpc = in.rpc;
  rt.call(name(), sim::kLogActor, sim::LogAppendMsg{record}, [this, &rt, dp, caller, rpc](const Message& m) {
    const auto& r = std::get<sim::LogAppendResult>(m);
    if (r.ok) {
      if (!dp->kind) {
        dp->kind = ConclusionKind::Abort;
        dp->offset = r.offset;
        rt.note(name(), "logged-abort");
      }
      rt.reply_to(name(), caller, rpc, accept({{"conclusion", "Abort"}, {"offset", r.offset}}));
    } else if (r.exists) {
      if (!dp->kind) {
        dp->kind = r.exists->existing;
        dp->offset = r.exists->offset;
      }
      rt.reply_to(name(), caller, rpc,
                  accept({{"conclusion", to_string(r.exists->existing)}, {"offset", r.exists->offset}}));
    } else {
      rt.reply_to(name(), caller, rpc, refuse(r.error));
    }
  });
}

}  // namespace xdeal::deal
