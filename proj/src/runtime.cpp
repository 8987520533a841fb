#include "xdeal/sim/runtime.hpp"

#include <stdexcept>

namespace xdeal::sim {
namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

std::string jstr(std::string_view s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    if (static_cast<unsigned char>(c) < 0x20) continue;
    out += c;
  }
  return out + "\"";
}

}  // namespace

std::string describe(const Message& m) {
  return std::visit(
      overloaded{
          [](const SubmitTx& s) {
            std::string d = std::string("SubmitTx ") + chain::payload_name(s.tx.payload);
            if (const auto* c = std::get_if<chain::ContractCall>(&s.tx.payload))
              d += std::string(":") + escrow::call_name(c->call);
            return d + " n=" + std::to_string(s.tx.nonce);
          },
          [](const TxResult& r) {
            return r.ok ? "TxResult ok h=" + std::to_string(r.receipt.height)
                        : std::string("TxResult ") + std::string(to_string(r.error)) + "/" + std::string(to_string(r.reason));
          },
          [](const ChainQueryMsg& q) { return "ChainQuery#" + std::to_string(q.query.index()); },
          [](const ChainAnswerMsg& a) {
            return a.ok ? std::string("ChainAnswer ok") : std::string("ChainAnswer ") + std::string(to_string(a.error));
          },
          [](const LogAppendMsg& a) { return std::string("LogAppend ") + log::to_string(a.record.kind); },
          [](const LogAppendResult& r) {
            if (r.ok) return "LogAppendResult @" + std::to_string(r.offset);
            if (r.exists) return std::string("LogAppendResult exists ") + to_string(r.exists->existing);
            return std::string("LogAppendResult ") + std::string(to_string(r.error));
          },
          [](const LogReadMsg& r) { return "LogRead from " + std::to_string(r.from); },
          [](const LogReadResult& r) { return "LogReadResult n=" + std::to_string(r.records.size()); },
          [](const LogAttestMsg& a) { return "LogAttest @" + std::to_string(a.offset); },
          [](const LogAttestResult& r) { return std::string("LogAttestResult ") + (r.ok ? "ok" : "missing"); },
          [](const CreateDealMsg& c) { return "CreateDeal " + c.app; },
          [](const EndAuctionMsg&) { return std::string("EndAuction"); },
          [](const AbortMsg&) { return std::string("Abort"); },
          [](const Ack& a) { return a.ok ? std::string("Ack ok") : std::string("Ack ") + std::string(to_string(a.error)); },
          [](const DealAnnounce&) { return std::string("DealAnnounce"); },
          [](const SpecifyRequest&) { return std::string("SpecifyRequest"); },
          [](const ValidateAndSign&) { return std::string("ValidateAndSign"); },
          [](const SignResult& r) { return std::string("SignResult ") + (r.ok ? "signed" : "rejected"); },
          [](const Command& c) { return "Command " + c.op; },
      },
      m);
}

Bytes end_auction_message(const DealId& deal) {
  Encoder enc;
  enc.str("xdeal/end-auction/v1").fixed(deal);
  return enc.take();
}

Runtime::Runtime(std::uint64_t seed, NetworkFaults net, Options options)
    : rng_(seed), net_(net), options_(options) {
  if (net_.max_delay < net_.min_delay) net_.max_delay = net_.min_delay;
}

void Runtime::add(std::shared_ptr<Actor> actor) {
  auto name = actor->name();
  if (!actors_.emplace(name, Entry{std::move(actor)}).second)
    throw std::invalid_argument("duplicate actor " + name);
}

Runtime::Entry& Runtime::entry(const std::string& name) {
  auto it = actors_.find(name);
  if (it == actors_.end()) throw std::out_of_range("unknown actor " + name);
  return it->second;
}

Actor& Runtime::actor(const std::string& name) const {
  auto it = actors_.find(name);
  if (it == actors_.end()) throw std::out_of_range("unknown actor " + name);
  return *it->second.actor;
}

bool Runtime::alive(const std::string& name) const {
  auto it = actors_.find(name);
  return it != actors_.end() && it->second.alive;
}

void Runtime::boot() {
  for (auto& [name, e] : actors_) e.actor->start(*this);
}

void Runtime::push(Time at, Event ev) { queue_.emplace(std::make_pair(at, next_seq_++), std::move(ev)); }

std::uint64_t Runtime::random(std::uint64_t n) { return n == 0 ? 0 : rng_() % n; }

bool Runtime::chance(double p) {
  if (p <= 0) return false;
  return static_cast<double>(rng_() >> 11) * 0x1.0p-53 < p;
}

void Runtime::trace(const std::string& line) {
  std::string full = "{\"s\":" + std::to_string(steps_) + ",\"t\":" + std::to_string(now_) + "," + line + "}";
  trace_.update(full).update("\n");
  if (sink_) sink_(full);
}

Hash256 Runtime::trace_hash() const {
  Sha256 copy = trace_;
  return copy.finish();
}

void Runtime::transmit(Envelope env) {
  if (env.from == env.to) {
    Event ev;
    ev.env = std::move(env);
    push(now_, std::move(ev));
    return;
  }
  if (chance(net_.drop)) {
    trace("\"e\":\"drop\",\"from\":" + jstr(env.from) + ",\"to\":" + jstr(env.to) +
          ",\"rpc\":" + std::to_string(env.rpc));
    return;
  }
  int copies = chance(net_.duplicate) ? 2 : 1;
  for (int i = 0; i < copies; ++i) {
    Event ev;
    ev.env = env;
    push(now_ + net_.min_delay + random(net_.max_delay - net_.min_delay + 1), std::move(ev));
  }
}

std::uint64_t Runtime::call(const std::string& from, const std::string& to, Message request, Callback cb) {
  auto id = next_rpc_++;
  pending_.emplace(id, Pending{from, entry(from).epoch, to, request, std::move(cb)});
  transmit(Envelope{from, to, id, false, std::move(request)});
  Event retry;
  retry.kind = Event::Retry;
  retry.tag = id;
  push(now_ + options_.retry_after, std::move(retry));
  return id;
}

void Runtime::cancel(std::uint64_t rpc) { pending_.erase(rpc); }

void Runtime::reply_to(const std::string& server, const std::string& caller, std::uint64_t rpc, Message response) {
  auto& e = entry(server);
  if (rpc == 0) return;  // scripted command, nobody waiting
  auto it = e.served.find({caller, rpc});
  if (it != e.served.end()) it->second = response;
  transmit(Envelope{server, caller, rpc, true, std::move(response)});
}

void Runtime::set_timer(const std::string& actor, Time delay, std::uint64_t tag) {
  Event ev;
  ev.kind = Event::Timer;
  ev.actor = actor;
  ev.epoch = entry(actor).epoch;
  ev.tag = tag;
  push(now_ + delay, std::move(ev));
}

void Runtime::note(const std::string& actor, std::string_view label) {
  trace("\"e\":\"note\",\"actor\":" + jstr(actor) + ",\"label\":" + jstr(label));
  auto n = ++milestone_counts_[{actor, std::string(label)}];
  auto range = milestone_hooks_.equal_range({actor, std::string(label), n});
  for (auto it = range.first; it != range.second; ++it) {
    Event ev;
    ev.kind = Event::Hook;
    ev.hook = it->second;
    push(now_, std::move(ev));
  }
}

void Runtime::on_milestone(const std::string& actor, const std::string& label, std::uint64_t nth,
                           std::function<void()> hook) {
  milestone_hooks_.emplace(std::make_tuple(actor, label, nth), std::move(hook));
}

void Runtime::schedule_command(Time at, const std::string& actor, Command cmd) {
  Event ev;
  ev.kind = Event::Script;
  ev.actor = actor;
  ev.cmd = std::move(cmd);
  push(at, std::move(ev));
}

void Runtime::schedule_crash(Time at, const std::string& actor) {
  Event ev;
  ev.kind = Event::Crash;
  ev.actor = actor;
  push(at, std::move(ev));
}

void Runtime::schedule_restart(Time at, const std::string& actor) {
  Event ev;
  ev.kind = Event::Restart;
  ev.actor = actor;
  push(at, std::move(ev));
}

void Runtime::crash(const std::string& name) {
  auto& e = entry(name);
  if (!e.alive) return;
  trace("\"e\":\"crash\",\"actor\":" + jstr(name));
  e.alive = false;
  ++e.epoch;
  e.served.clear();
  for (auto it = pending_.begin(); it != pending_.end();)
    it = it->second.caller == name ? pending_.erase(it) : std::next(it);
  e.actor->on_crash();
}

void Runtime::restart(const std::string& name) {
  auto& e = entry(name);
  if (e.alive) return;
  trace("\"e\":\"restart\",\"actor\":" + jstr(name));
  e.alive = true;
  e.actor->start(*this);
}

void Runtime::deliver(Envelope& env) {
  auto& target = entry(env.to);
  std::string head = "\"from\":" + jstr(env.from) + ",\"to\":" + jstr(env.to) +
                     ",\"rpc\":" + std::to_string(env.rpc) + ",\"m\":" + jstr(describe(env.msg));
  if (!target.alive) {
    trace("\"e\":\"lost\"," + head);
    return;
  }
  if (env.response) {
    auto it = pending_.find(env.rpc);
    if (it == pending_.end() || it->second.caller != env.to || it->second.epoch != target.epoch) {
      trace("\"e\":\"stale\"," + head);
      return;
    }
    trace("\"e\":\"resp\"," + head);
    auto cb = std::move(it->second.cb);
    pending_.erase(it);
    cb(env.msg);
    return;
  }
  auto key = std::make_pair(env.from, env.rpc);
  if (auto it = target.served.find(key); it != target.served.end()) {
    trace("\"e\":\"dup\"," + head);
    if (it->second) transmit(Envelope{env.to, env.from, env.rpc, true, *it->second});
    return;
  }
  trace("\"e\":\"req\"," + head);
  target.served.emplace(key, std::nullopt);
  target.actor->on_request(*this, Inbound{env.from, env.rpc, env.msg});
}

bool Runtime::step() {
  if (queue_.empty()) return false;
  auto node = queue_.extract(queue_.begin());
  now_ = node.key().first;
  ++steps_;
  auto& ev = node.mapped();
  switch (ev.kind) {
    case Event::Deliver:
      deliver(*ev.env);
      break;
    case Event::Timer: {
      auto& e = entry(ev.actor);
      if (e.alive && e.epoch == ev.epoch) e.actor->on_timer(*this, ev.tag);
      break;
    }
    case Event::Retry: {
      auto it = pending_.find(ev.tag);
      if (it == pending_.end()) break;
      transmit(Envelope{it->second.caller, it->second.to, ev.tag, false, it->second.request});
      push(now_ + options_.retry_after, std::move(ev));
      break;
    }
    case Event::Script: {
      auto& e = entry(ev.actor);
      trace("\"e\":\"cmd\",\"to\":" + jstr(ev.actor) + ",\"op\":" + jstr(ev.cmd->op) +
            ",\"i\":" + std::to_string(ev.cmd->index));
      if (!e.alive) {
        if (on_command_lost) on_command_lost(ev.actor, *ev.cmd);
        break;
      }
      Message msg = *ev.cmd;
      e.actor->on_request(*this, Inbound{"script", 0, msg});
      break;
    }
    case Event::Crash:
      crash(ev.actor);
      break;
    case Event::Restart:
      restart(ev.actor);
      break;
    case Event::Hook:
      ev.hook();
      break;
  }
  return true;
}

std::optional<Time> Runtime::next_event_time() const {
  if (queue_.empty()) return std::nullopt;
  return queue_.begin()->first.first;
}

}  // namespace xdeal::sim
