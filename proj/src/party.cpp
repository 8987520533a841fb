#include "xdeal/deal/party.hpp"

#include <algorithm>

#include "xdeal/auction/auction.hpp"
#include "xdeal/errors.hpp"

namespace xdeal::deal {

using sim::Message;

namespace {

constexpr std::uint64_t kPoll = 1;

std::string label_of(const DealDescriptor& desc) {
  try {
    return nlohmann::json::parse(desc.app).value("label", std::string());
  } catch (const nlohmann::json::exception&) {
    return {};
  }
}

std::optional<std::size_t> coin_contract(const DealDescriptor& desc, const ChainId& chain) {
  for (std::size_t i = 0; i < desc.contracts.size(); ++i)
    if (desc.contracts[i].kind == ContractKind::CoinEscrow && desc.contracts[i].chain == chain) return i;
  return std::nullopt;
}

}  // namespace

PartyClient::PartyClient(Config config, std::shared_ptr<PartyStore> store, std::shared_ptr<const AppRegistry> apps)
    : sim::Actor(config.name),
      config_(std::move(config)),
      store_(std::move(store)),
      apps_(std::move(apps)),
      submitter_(config_.name, config_.key) {}

void PartyClient::start(sim::Runtime&) { ticking_ = false; }

void PartyClient::on_crash() {
  auto lost = std::move(actions_);
  actions_.clear();
  waiting_.clear();
  unsigned_.clear();
  specifying_.clear();
  equivocations_.clear();
  submitter_.reset();
  ticking_ = false;
  for (const auto& [index, cmd] : lost)
    if (on_result) on_result(CommandResult{index, name(), cmd.op, false, Errc::ScriptError, "actor crashed", {}});
}

bool PartyClient::busy() const { return !actions_.empty() || !submitter_.idle(); }

void PartyClient::finish(const sim::Command& cmd, bool ok, Errc error, std::string message, nlohmann::json data) {
  if (!actions_.erase(cmd.index)) return;
  if (!on_result) return;
  CommandResult r{cmd.index, name(), cmd.op, ok, error, std::move(message), std::move(data)};
  if (r.data.is_null()) r.data = nlohmann::json::object();
  on_result(r);
}

std::optional<DealId> PartyClient::resolve(const nlohmann::json& ref) const {
  if (!ref.is_string()) return std::nullopt;
  auto s = ref.get<std::string>();
  if (auto it = store_->labels.find(s); it != store_->labels.end()) return it->second;
  if (s.size() == 64) {
    try {
      auto id = DealId::from_hex(s);
      if (store_->deals.count(id)) return id;
    } catch (const Error&) {
    }
  }
  return std::nullopt;
}

void PartyClient::on_request(sim::Runtime& rt, const sim::Inbound& in) {
  if (const auto* m = std::get_if<sim::DealAnnounce>(&in.msg)) {
    announce(rt, in, m->desc);
  } else if (const auto* m = std::get_if<sim::SpecifyRequest>(&in.msg)) {
    specify(rt, in, *m);
  } else if (const auto* m = std::get_if<sim::ValidateAndSign>(&in.msg)) {
    sign(rt, in.from, in.rpc, *m);
  } else if (const auto* m = std::get_if<sim::Command>(&in.msg)) {
    command(rt, *m);
  } else {
    rt.reply(name(), in, sim::Ack{false, Errc::BadParams, "unsupported request", {}});
  }
}

void PartyClient::announce(sim::Runtime& rt, const sim::Inbound& in, const DealDescriptor& desc) {
  store_->deals[desc.id] = desc;
  if (auto label = label_of(desc); !label.empty()) store_->labels[label] = desc.id;
  rt.reply(name(), in, sim::Ack{});

  const auto* self = desc.find_party(config_.key.public_key());
  auto app = apps_->for_descriptor(desc);
  if (self && app && store_->obligations_sent.insert(desc.id).second) {
    for (auto& [index, call] : app->obligations(desc, *self)) {
      const auto& c = desc.contracts.at(index);
      submitter_.submit(rt, c.chain, chain::ContractCall{c.address, call}, [this, &rt](const sim::TxResult& r) {
        rt.note(name(), r.ok ? "deposit-ok" : "deposit-failed");
      });
    }
  }

  auto queued = std::move(unsigned_);
  unsigned_.clear();
  for (auto& p : queued) {
    if (p.req.deal == desc.id)
      sign(rt, p.caller, p.rpc, p.req);
    else
      unsigned_.push_back(std::move(p));
  }
}

void PartyClient::specify(sim::Runtime& rt, const sim::Inbound& in, const sim::SpecifyRequest& req) {
  rt.reply(name(), in, sim::Ack{});
  auto it = store_->deals.find(req.deal);
  if (it == store_->deals.end() || req.plans.size() != it->second.contracts.size()) return;
  const auto& desc = it->second;
  if (desc.specifier_party().key != config_.key.public_key()) return;
  if (!specifying_.insert(desc.id).second) return;
  auto remaining = std::make_shared<std::size_t>(desc.contracts.size());
  auto id = desc.id;
  for (std::size_t i = 0; i < desc.contracts.size(); ++i) {
    const auto& c = desc.contracts[i];
    submitter_.submit(rt, c.chain, chain::ContractCall{c.address, escrow::SpecifyTransfer{req.plans[i]}},
                      [this, remaining, id, &rt](const sim::TxResult& r) {
                        if (r.ok) rt.note(name(), "specified");
                        if (--*remaining == 0) specifying_.erase(id);
                      });
  }
}

void PartyClient::sign(sim::Runtime& rt, std::string caller, std::uint64_t rpc, const sim::ValidateAndSign& req) {
  auto it = store_->deals.find(req.deal);
  if (it == store_->deals.end()) {
    unsigned_.push_back(Pending{std::move(caller), rpc, req});
    return;
  }
  auto desc = it->second;
  rt.call(name(), sim::kLogActor, sim::LogReadMsg{desc.topic(), 0},
          [this, &rt, desc, caller, rpc, req](const Message& m) {
            const auto& records = std::get<sim::LogReadResult>(m).records;
            auto app = apps_->for_descriptor(desc);
            const auto* self = desc.find_party(config_.key.public_key());
            sim::SignResult result;
            std::string reason;
            if (!app || !self) {
              reason = "not a party to this deal";
            } else if (transfer_digest(req.plan_set) != req.digest) {
              reason = "digest does not match the transfers";
            } else {
              reason = app->validate(AppView{desc, records, {}}, *self, req.plan_set);
            }
            if (reason.empty()) {
              result.ok = true;
              result.signature = CommitVote::sign(config_.key, desc.id, req.digest);
              rt.note(name(), "signed");
            } else {
              result.reject = AbortRequest::make(desc.id, config_.key, reason);
              rt.note(name(), "rejected");
            }
            rt.reply_to(name(), caller, rpc, result);
            if (result.ok && config_.equivocate) begin_equivocation(rt, desc, req.plan_set);
          });
}

void PartyClient::command(sim::Runtime& rt, const sim::Command& cmd) {
  actions_[cmd.index] = cmd;
  if (cmd.op == "create_auction" || cmd.op == "create_loan") {
    auto params = cmd.params;
    if (!params.contains("salt")) params["salt"] = cmd.index;
    std::string app = cmd.op == "create_auction" ? "auction" : "flashloan";
    rt.call(name(), config_.service, sim::CreateDealMsg{app, params}, [this, cmd](const Message& m) {
      const auto& a = std::get<sim::Ack>(m);
      finish(cmd, a.ok, a.error, a.message, a.data);
    });
    return;
  }
  if (cmd.op == "bid" || cmd.op == "withdraw" || cmd.op == "end_auction" || cmd.op == "abort") {
    Waiting w{cmd, rt.now()};
    if (run_waiting(rt, w)) return;
    waiting_.push_back(std::move(w));
    if (!ticking_) {
      ticking_ = true;
      rt.set_timer(name(), config_.poll, kPoll);
    }
    return;
  }
  finish(cmd, false, Errc::ScriptError, "unknown op " + cmd.op);
}

bool PartyClient::run_waiting(sim::Runtime& rt, const Waiting& w) {
  const auto& cmd = w.cmd;
  const auto& p = cmd.params;
  auto id = resolve(p.contains("auction") ? p.at("auction") : p.value("deal", nlohmann::json()));
  if (!id) {
    if (rt.now() < w.since + config_.wait_for_deal) return false;
    finish(cmd, false, cmd.op == "abort" ? Errc::BadParams : Errc::UnknownAuction, "deal not known to " + name());
    return true;
  }
  const auto desc = store_->deals.at(*id);

  if (cmd.op == "end_auction") {
    sim::EndAuctionMsg msg{desc.id, config_.key.public_key(), config_.key.sign(sim::end_auction_message(desc.id))};
    rt.call(name(), config_.service, msg, [this, cmd](const Message& m) {
      const auto& a = std::get<sim::Ack>(m);
      finish(cmd, a.ok, a.error, a.message, a.data);
    });
    return true;
  }
  if (cmd.op == "abort") {
    auto req = AbortRequest::make(desc.id, config_.key, p.value("reason", std::string("requested by party")));
    rt.call(name(), config_.service, sim::AbortMsg{req}, [this, cmd](const Message& m) {
      const auto& a = std::get<sim::Ack>(m);
      finish(cmd, a.ok, a.error, a.message, a.data);
    });
    return true;
  }

  ChainId chain(p.value("chain", std::string()));
  auto index = coin_contract(desc, chain);
  if (!index) {
    finish(cmd, false, Errc::ChainNotAccepted, "no escrow on chain " + chain.value);
    return true;
  }
  const auto contract = desc.contracts[*index];
  auto submit = [this, &rt, cmd, contract](escrow::Call call) {
    submitter_.submit(rt, contract.chain, chain::ContractCall{contract.address, call},
                      [this, cmd](const sim::TxResult& r) {
                        if (r.ok)
                          finish(cmd, true, Errc::ScriptError, {}, {{"height", r.receipt.height}});
                        else
                          finish(cmd, false, r.error == Errc::ContractRejected ? r.reason : r.error, r.message);
                      });
  };
  if (cmd.op == "withdraw") {
    submit(escrow::WithdrawBid{});
    return true;
  }

  auto amount = p.value("amount", std::uint64_t{0});
  rt.call(name(), sim::kLogActor, sim::LogReadMsg{desc.topic(), 0},
          [this, &rt, cmd, desc, chain, amount, submit](const Message& m) {
            const auto& records = std::get<sim::LogReadResult>(m).records;
            std::optional<Errc> err;
            try {
              auto terms = auction::AuctionTerms::from_descriptor(desc);
              auto log = auction::replay(desc, records);
              bool concluded = std::any_of(records.begin(), records.end(), [](const log::LogRecord& r) {
                return r.kind == log::RecordKind::Conclusion;
              });
              auto st = auction::status(terms, log, concluded, {}, rt.now());
              err = auction::check_bid(terms, st, chain, amount, rt.now());
            } catch (const Error& e) {
              err = e.code();
            }
            if (err) {
              finish(cmd, false, *err, std::string(to_string(*err)));
              return;
            }
            submit(escrow::DepositCoins{amount});
          });
  return true;
}

void PartyClient::on_timer(sim::Runtime& rt, std::uint64_t tag) {
  if (tag != kPoll) return;
  auto pending = std::move(waiting_);
  waiting_.clear();
  for (auto& w : pending)
    if (!run_waiting(rt, w)) waiting_.push_back(std::move(w));
  std::vector<DealId> active;
  for (const auto& [id, e] : equivocations_) active.push_back(id);
  for (const auto& id : active) poll_equivocation(rt, id);
  ticking_ = !waiting_.empty() || !equivocations_.empty();
  if (ticking_) rt.set_timer(name(), config_.poll, kPoll);
}

void PartyClient::begin_equivocation(sim::Runtime& rt, const DealDescriptor& desc, std::vector<Bytes> plan_set) {
  if (equivocations_.count(desc.id)) return;
  auto& e = equivocations_[desc.id];
  e.plan_set = std::move(plan_set);
  auto n = desc.contracts.size();
  e.abort_side.assign(n, true);
  if (n >= 2) {
    // Random non-empty proper subset of the contracts gets the abort.
    std::uint64_t mask = 1 + rt.random((std::uint64_t{1} << n) - 2);
    for (std::size_t i = 0; i < n; ++i) e.abort_side[i] = (mask >> i) & 1;
  }
  auto req = AbortRequest::make(desc.id, config_.key, "changed my mind");
  e.own_abort = log::LogRecord::make(desc.topic(), log::RecordKind::Conclusion, ConclusionRecord::abort(req).encode(),
                                     config_.key);
  auto id = desc.id;
  rt.call(name(), sim::kLogActor, sim::LogAppendMsg{*e.own_abort}, [this, &rt, id](const Message& m) {
    auto it = equivocations_.find(id);
    if (it == equivocations_.end()) return;
    const auto& r = std::get<sim::LogAppendResult>(m);
    it->second.own_abort_logged = r.ok;
    rt.note(name(), r.ok ? "equivocator-abort-logged" : "equivocator-abort-refused");
  });
  if (!ticking_) {
    ticking_ = true;
    rt.set_timer(name(), config_.poll, kPoll);
  }
}

void PartyClient::poll_equivocation(sim::Runtime& rt, const DealId& id) {
  auto it = equivocations_.find(id);
  auto deal = store_->deals.find(id);
  if (it == equivocations_.end() || deal == store_->deals.end()) return;
  auto& e = it->second;
  const auto& desc = deal->second;
  bool both = e.handled.size() == 2 || (e.handled.count(ConclusionKind::Commit) && e.forged);
  if (both || rt.now() > desc.timeout + 100) {
    equivocations_.erase(it);
    return;
  }
  act_equivocation(rt, id);
  if (e.reading) return;
  e.reading = true;
  rt.call(name(), sim::kLogActor, sim::LogReadMsg{desc.topic(), 0}, [this, &rt, id](const Message& m) {
    auto it = equivocations_.find(id);
    if (it == equivocations_.end()) return;
    auto& e = it->second;
    e.reading = false;
    for (const auto& r : std::get<sim::LogReadResult>(m).records) {
      if (r.kind != log::RecordKind::Conclusion || e.seen.count(r.offset) || e.attesting) continue;
      ConclusionKind kind;
      try {
        auto c = r.conclusion();
        if (c.deal_id != id) continue;
        kind = c.kind();
      } catch (const Error&) {
        continue;
      }
      e.attesting = true;
      auto bytes = r.encode();
      rt.call(name(), sim::kLogActor, sim::LogAttestMsg{r.topic, r.offset},
              [this, &rt, id, kind, bytes, offset = r.offset](const Message& m) {
                auto it = equivocations_.find(id);
                if (it == equivocations_.end()) return;
                it->second.attesting = false;
                const auto& a = std::get<sim::LogAttestResult>(m);
                if (!a.ok) return;
                it->second.seen[offset] = Seen{kind, bytes, a.attestations};
                act_equivocation(rt, id);
              });
    }
  });
}

void PartyClient::act_equivocation(sim::Runtime& rt, const DealId& id) {
  auto& e = equivocations_.at(id);
  const auto& desc = store_->deals.at(id);
  auto send = [this, &rt, &desc](std::size_t i, escrow::Call call) {
    const auto& c = desc.contracts[i];
    submitter_.submit(rt, c.chain, chain::ContractCall{c.address, std::move(call)},
                      [this, &rt](const sim::TxResult& r) {
                        rt.note(name(), r.ok ? "equivocator-call-accepted" : "equivocator-call-refused");
                      });
  };
  for (const auto& [offset, seen] : e.seen) {
    if (e.handled.count(seen.kind)) continue;
    e.handled.insert(seen.kind);
    for (std::size_t i = 0; i < desc.contracts.size(); ++i) {
      if (seen.kind == ConclusionKind::Abort && e.abort_side[i]) send(i, escrow::AbortCall{seen.record, seen.atts});
      if (seen.kind == ConclusionKind::Commit && !e.abort_side[i])
        send(i, escrow::CommitCall{seen.record, seen.atts, e.plan_set});
    }
    if (seen.kind == ConclusionKind::Commit && !e.own_abort_logged && !e.forged && e.own_abort) {
      // Own abort was refused: pair it with the commit's attestation and hope.
      e.forged = true;
      auto forged = *e.own_abort;
      forged.offset = offset;
      rt.note(name(), "equivocator-forged");
      for (std::size_t i = 0; i < desc.contracts.size(); ++i)
        if (e.abort_side[i]) send(i, escrow::AbortCall{forged.encode(), seen.atts});
    }
  }
}

}  // namespace xdeal::deal
