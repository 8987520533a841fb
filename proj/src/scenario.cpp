#include "xdeal/sim/scenario.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <random>
#include <thread>

#include "xdeal/auction/auction.hpp"
#include "xdeal/errors.hpp"
#include "xdeal/flashloan/flashloan.hpp"
#include "xdeal/sim/nodes.hpp"

namespace xdeal::sim {
namespace {

const std::set<std::string> kOps = {"create_auction", "create_loan", "bid", "withdraw", "end_auction", "abort"};

template <class T>
T field(const nlohmann::json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  return j.at(key).get<T>();
}

void write_atomic(const std::filesystem::path& file, const std::string& text) {
  auto tmp = file;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    out << text;
    if (!out) throw Error(Errc::IoError, "cannot write " + tmp.string());
  }
  std::filesystem::rename(tmp, file);
}

std::string label_of(const DealDescriptor& desc) {
  try {
    return nlohmann::json::parse(desc.app).value("label", std::string());
  } catch (const nlohmann::json::exception&) {
    return {};
  }
}

}  // namespace

Scenario Scenario::from_json(const nlohmann::json& j) {
  Scenario s;
  try {
    s.name = j.value("name", std::string("scenario"));
    s.genesis = j.at("genesis");
    if (j.contains("options")) {
      const auto& o = j.at("options");
      s.options.step_bound = field(o, "step_bound", s.options.step_bound);
      s.options.tick = field(o, "tick", s.options.tick);
      s.options.retry_after = field(o, "retry_after", s.options.retry_after);
      s.options.liveness_bound = field(o, "liveness_bound", s.options.liveness_bound);
    }
    if (j.contains("network")) {
      const auto& n = j.at("network");
      s.network.drop = field(n, "drop", 0.0);
      s.network.duplicate = field(n, "duplicate", 0.0);
      s.network.min_delay = field(n, "min_delay", Time{1});
      s.network.max_delay = field(n, "max_delay", s.network.min_delay);
    }
    if (j.contains("faults")) {
      const auto& f = j.at("faults");
      for (const auto& c : f.value("crashes", nlohmann::json::array())) {
        CrashSpec spec;
        spec.actor = c.at("actor").get<std::string>();
        if (c.contains("at")) {
          const auto& at = c.at("at");
          if (at.is_array()) {
            spec.at_lo = at.at(0).get<Time>();
            spec.at_hi = at.at(1).get<Time>();
          } else {
            spec.at_lo = spec.at_hi = at.get<Time>();
          }
          if (spec.at_hi < spec.at_lo) throw Error(Errc::ScriptError, "crash window is empty");
        }
        if (c.contains("restart_after")) spec.restart_after = c.at("restart_after").get<Time>();
        if (c.contains("on_milestone")) {
          const auto& m = c.at("on_milestone");
          spec.on_milestone = CrashSpec::Milestone{m.value("actor", spec.actor), m.at("label").get<std::string>(),
                                                   m.value("nth", std::uint64_t{1})};
        } else if (!c.contains("at")) {
          throw Error(Errc::ScriptError, "crash needs \"at\" or \"on_milestone\"");
        }
        s.crashes.push_back(std::move(spec));
      }
      for (const auto& e : f.value("equivocators", nlohmann::json::array())) s.equivocators.insert(e.get<std::string>());
      s.arbitration = f.value("arbitration", true);
    }
    for (const auto& a : j.value("actions", nlohmann::json::array())) {
      ScriptAction act;
      act.at = a.at("at").get<Time>();
      act.actor = a.at("actor").get<std::string>();
      act.op = a.at("op").get<std::string>();
      act.params = a.value("params", nlohmann::json::object());
      if (!kOps.count(act.op)) throw Error(Errc::ScriptError, "unknown op " + act.op);
      s.actions.push_back(std::move(act));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::ScriptError, std::string("scenario: ") + e.what());
  }
  // Validate actor names against the genesis.
  auto g = chain::Genesis::from_json(s.genesis);
  auto is_party = [&](const std::string& name) {
    return std::find(g.actors.begin(), g.actors.end(), name) != g.actors.end() && name != g.service &&
           std::find(g.log_operators.begin(), g.log_operators.end(), name) == g.log_operators.end();
  };
  for (const auto& a : s.actions)
    if (!is_party(a.actor)) throw Error(Errc::ScriptError, "action for unknown party " + a.actor);
  for (const auto& e : s.equivocators)
    if (!is_party(e)) throw Error(Errc::ScriptError, "equivocator is not a party: " + e);
  for (const auto& c : s.crashes)
    if (!is_party(c.actor) && c.actor != g.service) throw Error(Errc::ScriptError, "cannot crash " + c.actor);
  if (s.options.step_bound == 0 || s.options.tick == 0 || s.options.retry_after == 0)
    throw Error(Errc::ScriptError, "options must be positive");
  return s;
}

Scenario Scenario::load(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw Error(Errc::ScriptError, "cannot read " + file.string());
  try {
    return from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(Errc::ScriptError, file.string() + ": " + e.what());
  }
}

nlohmann::ordered_json Scenario::to_json() const {
  nlohmann::ordered_json j;
  j["name"] = name;
  j["genesis"] = genesis;
  j["options"] = {{"step_bound", options.step_bound},
                  {"tick", options.tick},
                  {"retry_after", options.retry_after},
                  {"liveness_bound", options.liveness_bound}};
  j["network"] = {{"drop", network.drop},
                  {"duplicate", network.duplicate},
                  {"min_delay", network.min_delay},
                  {"max_delay", network.max_delay}};
  auto crashes = nlohmann::ordered_json::array();
  for (const auto& c : this->crashes) {
    nlohmann::ordered_json cj{{"actor", c.actor}};
    if (c.on_milestone) {
      cj["on_milestone"] = {{"actor", c.on_milestone->actor}, {"label", c.on_milestone->label}, {"nth", c.on_milestone->nth}};
    } else if (c.at_lo == c.at_hi) {
      cj["at"] = c.at_lo;
    } else {
      cj["at"] = {c.at_lo, c.at_hi};
    }
    if (c.restart_after) cj["restart_after"] = *c.restart_after;
    crashes.push_back(cj);
  }
  j["faults"] = {{"crashes", crashes},
                 {"equivocators", std::vector<std::string>(equivocators.begin(), equivocators.end())},
                 {"arbitration", arbitration}};
  auto actions_j = nlohmann::ordered_json::array();
  for (const auto& a : actions)
    actions_j.push_back({{"at", a.at}, {"actor", a.actor}, {"op", a.op}, {"params", a.params}});
  j["actions"] = actions_j;
  return j;
}

World::World(const chain::Genesis& g, std::uint64_t seed, NetworkFaults net, Runtime::Options rt_options,
             Options options)
    : genesis(g), data_dir(options.data_dir) {
  keys = std::make_shared<chain::Keystore>(genesis.keys);
  for (const auto& cg : genesis.chains)
    chains[cg.id] = std::make_shared<chain::LocalChain>(cg, chain::Ledger::Options{false});

  std::vector<KeyPair> operators;
  for (const auto& name : genesis.log_operators) operators.push_back(keys->at(name));
  log::EventLog::Options log_options;
  log_options.arbitrate_conclusions = options.arbitration;
  if (data_dir) {
    std::filesystem::create_directories(*data_dir / "log");
    std::filesystem::create_directories(*data_dir / "chains");
    log_options.dir = *data_dir / "log";
  }
  log = std::make_shared<log::EventLog>(operators, log_options);
  journal = data_dir ? std::make_shared<deal::Journal>(*data_dir / "journal.jsonl") : std::make_shared<deal::Journal>();

  apps = std::make_shared<deal::AppRegistry>();
  apps->add(std::make_shared<auction::AuctionApp>());
  apps->add(std::make_shared<flashloan::FlashLoanApp>());

  rt = std::make_unique<Runtime>(seed, net, rt_options);
  deal::CcSvc::Config svc;
  svc.name = genesis.service;
  svc.key = keys->at(genesis.service);
  svc.log_keys = genesis.log_keys();
  svc.log_quorum = genesis.log_quorum;
  svc.tick = options.tick;
  service = std::make_shared<deal::CcSvc>(svc, journal, apps, keys);
  rt->add(service);
  rt->add(std::make_shared<LogNode>(log));
  for (const auto& [id, c] : chains) rt->add(std::make_shared<ChainNode>(c));

  for (const auto& name : genesis.actors) {
    if (name == genesis.service ||
        std::find(genesis.log_operators.begin(), genesis.log_operators.end(), name) != genesis.log_operators.end())
      continue;
    deal::PartyClient::Config pc;
    pc.name = name;
    pc.key = keys->at(name);
    pc.service = genesis.service;
    pc.equivocate = options.equivocators.count(name) != 0;
    auto store = std::make_shared<deal::PartyStore>();
    stores[name] = store;
    parties[name] = std::make_shared<deal::PartyClient>(pc, store, apps);
    rt->add(parties[name]);
  }
}

std::vector<DealDescriptor> World::journal_deals() const {
  std::vector<DealDescriptor> out;
  for (const auto& e : journal->entries())
    if (e.value("op", std::string()) == "deal") out.push_back(DealDescriptor::from_json(e.at("descriptor")));
  return out;
}

std::set<DealId> World::failed_deals() const {
  std::set<DealId> out;
  for (const auto& e : journal->entries())
    if (e.value("op", std::string()) == "failed") out.insert(DealId::from_hex(e.at("deal").get<std::string>()));
  return out;
}

Address World::contract_of(const DealDescriptor& desc, std::size_t index) const {
  const auto& c = desc.contracts.at(index);
  if (!c.address.is_zero()) return c.address;
  auto it = chains.find(c.chain);
  if (it == chains.end()) return {};
  auto service_address = keys->address(genesis.service);
  auto found = it->second->read([&](const chain::Ledger& l) { return l.contracts_for_deal(desc.id, service_address); });
  return found.empty() ? Address{} : found.front();
}

std::vector<std::optional<escrow::EscrowPhase>> World::phases(const DealDescriptor& desc) const {
  std::vector<std::optional<escrow::EscrowPhase>> out;
  for (std::size_t i = 0; i < desc.contracts.size(); ++i) {
    auto address = contract_of(desc, i);
    auto it = chains.find(desc.contracts[i].chain);
    if (address.is_zero() || it == chains.end()) {
      out.push_back(std::nullopt);
      continue;
    }
    out.push_back(it->second->read([&](const chain::Ledger& l) { return escrow::phase_of(l.contract(address)); }));
  }
  return out;
}

std::uint64_t World::balance(const ChainId& chain, const std::string& actor) const {
  auto address = keys->address(actor);
  return chains.at(chain)->read([&](const chain::Ledger& l) {
    auto it = l.accounts().find(address);
    return it == l.accounts().end() ? std::uint64_t{0} : it->second;
  });
}

std::optional<std::string> World::nft_owner(const ChainId& chain, const NftId& nft) const {
  return chains.at(chain)->read([&](const chain::Ledger& l) -> std::optional<std::string> {
    auto it = l.nfts().find(nft);
    if (it == l.nfts().end()) return std::nullopt;
    return keys->name_of(it->second);
  });
}

void World::persist() const {
  if (!data_dir) return;
  for (const auto& [id, c] : chains) {
    auto snap = c->read([](const chain::Ledger& l) { return l.snapshot(); });
    write_atomic(*data_dir / "chains" / (id.value + ".json"), snap.dump(2));
  }
  write_atomic(*data_dir / "genesis.json", genesis.to_json().dump(2));
}

void reset_data_dir(const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::filesystem::remove_all(dir / "log");
  std::filesystem::remove_all(dir / "chains");
  std::filesystem::remove(dir / "journal.jsonl");
  std::filesystem::remove(dir / "genesis.json");
  std::filesystem::remove(dir / "report.json");
}

std::size_t Report::count(const std::string& invariant) const {
  return std::count_if(violations.begin(), violations.end(),
                       [&](const Violation& v) { return v.invariant == invariant; });
}

nlohmann::ordered_json Report::to_json() const {
  nlohmann::ordered_json j;
  j["scenario"] = scenario;
  j["seed"] = seed;
  j["completed"] = completed;
  j["error"] = error ? nlohmann::ordered_json(std::string(to_string(*error))) : nlohmann::ordered_json();
  j["steps"] = steps;
  j["end_time"] = end_time;
  j["trace_hash"] = trace_hash.hex();
  auto& digests = j["chain_digests"] = nlohmann::ordered_json::object();
  for (const auto& [id, d] : chain_digests) digests[id] = d.hex();
  j["log_digest"] = log_digest.hex();
  auto& deals_j = j["deals"] = nlohmann::ordered_json::array();
  for (const auto& d : deals) {
    deals_j.push_back({{"deal", d.id.hex()},
                       {"app", d.app},
                       {"label", d.label},
                       {"status", d.status},
                       {"phases", d.phases},
                       {"conclusions", d.conclusions},
                       {"finished_at", d.finished_at ? nlohmann::ordered_json(*d.finished_at) : nlohmann::ordered_json()},
                       {"timeout", d.timeout}});
  }
  auto& results_j = j["results"] = nlohmann::ordered_json::array();
  for (const auto& r : results) {
    results_j.push_back({{"index", r.index},
                         {"actor", r.actor},
                         {"op", r.op},
                         {"ok", r.ok},
                         {"error", r.ok ? "" : std::string(to_string(r.error))},
                         {"message", r.message},
                         {"data", r.data}});
  }
  auto& v = j["violations"] = nlohmann::ordered_json::array();
  for (const auto& x : violations) v.push_back({{"invariant", x.invariant}, {"deal", x.deal}, {"detail", x.detail}});
  j["balances"] = balances;
  return j;
}

std::vector<Violation> check_invariants(const World& world, bool run_completed, Time liveness_bound,
                                        const std::map<DealId, Time>& finished_at) {
  std::vector<Violation> out;
  for (const auto& [id, c] : world.chains) {
    auto why = c->read([](const chain::Ledger& l) {
      if (l.total_supply() != l.genesis_supply())
        return "supply " + std::to_string(l.total_supply()) + " != genesis " + std::to_string(l.genesis_supply());
      return l.check_invariants();
    });
    if (!why.empty()) out.push_back({"conservation", "", id.value + ": " + why});
  }

  auto failed = world.failed_deals();
  for (const auto& desc : world.journal_deals()) {
    auto hex = desc.id.hex();
    auto phases = world.phases(desc);
    bool committed = false, aborted = false, all_terminal = true;
    for (const auto& p : phases) {
      committed |= p == escrow::EscrowPhase::Committed;
      aborted |= p == escrow::EscrowPhase::Aborted;
      all_terminal &= p && escrow::is_terminal(*p);
    }
    if (committed && aborted) out.push_back({"atomicity", hex, "contracts both committed and aborted"});

    std::set<ConclusionKind> logged;
    for (const auto& r : world.log->read(desc.topic(), 0)) {
      if (r.kind != log::RecordKind::Conclusion) continue;
      try {
        auto c = r.conclusion();
        if (c.deal_id == desc.id) logged.insert(c.kind());
      } catch (const Error&) {
      }
    }
    if (committed && !logged.count(ConclusionKind::Commit))
      out.push_back({"conclusion-follows-log", hex, "committed without a logged commit"});
    if (aborted && !logged.count(ConclusionKind::Abort))
      out.push_back({"conclusion-follows-log", hex, "aborted without a logged abort"});
    if (world.log->arbitrating() && world.log->conclusion_count(desc.id) > 1)
      out.push_back({"mutual-exclusion", hex, "more than one conclusion logged"});

    if (failed.count(desc.id)) continue;
    auto fin = finished_at.find(desc.id);
    if (!all_terminal || fin == finished_at.end()) {
      if (run_completed) out.push_back({"liveness", hex, "contracts left non-terminal"});
      else out.push_back({"liveness", hex, "run ended before the deal concluded"});
    } else if (fin->second > desc.timeout + liveness_bound) {
      out.push_back({"liveness", hex,
                     "concluded at " + std::to_string(fin->second) + ", after timeout " + std::to_string(desc.timeout) +
                         " + bound " + std::to_string(liveness_bound)});
    }
  }
  return out;
}

std::shared_ptr<World> make_world(const Scenario& scenario, std::uint64_t seed, std::optional<bool> arbitration,
                                  const std::optional<std::filesystem::path>& data_dir) {
  auto genesis = chain::Genesis::from_json(scenario.genesis);
  World::Options wo;
  wo.arbitration = arbitration.value_or(scenario.arbitration);
  wo.equivocators = scenario.equivocators;
  wo.data_dir = data_dir;
  wo.tick = scenario.options.tick;
  if (data_dir) reset_data_dir(*data_dir);
  return std::make_shared<World>(genesis, seed, scenario.network, Runtime::Options{scenario.options.retry_after}, wo);
}

Run run_scenario(const Scenario& scenario, const RunOptions& options) {
  auto world = make_world(scenario, options.seed, options.arbitration, options.data_dir);
  auto& rt = *world->rt;
  if (options.trace_sink) rt.set_trace_sink(options.trace_sink);

  Report report;
  report.scenario = scenario.name;
  report.seed = options.seed;

  auto on_result = [&report](const deal::CommandResult& r) { report.results.push_back(r); };
  for (auto& [name, p] : world->parties) p->on_result = on_result;
  rt.on_command_lost = [&report](const std::string& actor, const Command& cmd) {
    report.results.push_back(deal::CommandResult{cmd.index, actor, cmd.op, false, Errc::ScriptError, "actor down", {}});
  };

  for (std::size_t i = 0; i < scenario.actions.size(); ++i) {
    const auto& a = scenario.actions[i];
    rt.schedule_command(a.at, a.actor, Command{i, a.op, a.params});
  }

  // Fault times come from their own stream so they do not shift network decisions.
  std::mt19937_64 fault_rng(options.seed ^ 0x9e3779b97f4a7c15ULL);
  for (const auto& c : scenario.crashes) {
    if (c.on_milestone) {
      auto actor = c.actor;
      auto restart = c.restart_after;
      auto* rtp = &rt;
      rt.on_milestone(c.on_milestone->actor, c.on_milestone->label, c.on_milestone->nth, [rtp, actor, restart] {
        rtp->schedule_crash(rtp->now(), actor);
        if (restart) rtp->schedule_restart(rtp->now() + *restart, actor);
      });
      continue;
    }
    Time at = c.at_lo + fault_rng() % (c.at_hi - c.at_lo + 1);
    rt.schedule_crash(at, c.actor);
    if (c.restart_after) rt.schedule_restart(at + *c.restart_after, c.actor);
  }

  rt.boot();
  std::map<DealId, Time> finished_at;
  auto settled = [&]() {
    bool all = true;
    auto failed = world->failed_deals();
    for (const auto& desc : world->journal_deals()) {
      if (failed.count(desc.id) || finished_at.count(desc.id)) continue;
      auto phases = world->phases(desc);
      bool done = std::all_of(phases.begin(), phases.end(), [](const auto& p) { return p && escrow::is_terminal(*p); });
      if (done)
        finished_at[desc.id] = rt.now();
      else
        all = false;
    }
    return all;
  };
  auto quiescent = [&]() {
    if (report.results.size() < scenario.actions.size()) return false;
    for (const auto& [name, p] : world->parties)
      if (rt.alive(name) && p->busy()) return false;
    return true;
  };

  auto wall_start = std::chrono::steady_clock::now();
  std::uint64_t since_check = 0;
  while (true) {
    if (rt.steps() >= scenario.options.step_bound) {
      report.error = Errc::StepBoundExceeded;
      break;
    }
    if (options.tick_ms > 0) {
      if (auto next = rt.next_event_time()) {
        auto due = wall_start + std::chrono::duration<double, std::milli>(options.tick_ms * static_cast<double>(*next));
        std::this_thread::sleep_until(due);
      }
    }
    if (!rt.step()) {
      settled();
      report.completed = quiescent() && settled();
      if (!report.completed) report.error = Errc::StepBoundExceeded;
      break;
    }
    if (++since_check >= 64) {
      since_check = 0;
      bool all_settled = settled();
      if (all_settled && quiescent()) {
        report.completed = true;
        break;
      }
      if (options.data_dir && options.tick_ms > 0) world->persist();
    }
  }

  report.steps = rt.steps();
  report.end_time = rt.now();
  report.trace_hash = rt.trace_hash();
  for (const auto& [id, c] : world->chains)
    report.chain_digests[id.value] = c->read([](const chain::Ledger& l) { return l.state_digest(); });
  report.log_digest = world->log->digest();
  report.violations = check_invariants(*world, report.completed, scenario.options.liveness_bound, finished_at);

  auto failed = world->failed_deals();
  for (const auto& desc : world->journal_deals()) {
    DealOutcome o;
    o.id = desc.id;
    o.label = label_of(desc);
    o.timeout = desc.timeout;
    try {
      o.app = nlohmann::json::parse(desc.app).value("type", std::string());
    } catch (const nlohmann::json::exception&) {
    }
    bool committed = false, aborted = false, pending = false;
    for (const auto& p : world->phases(desc)) {
      o.phases.push_back(p ? escrow::to_string(*p) : "Undeployed");
      committed |= p == escrow::EscrowPhase::Committed;
      aborted |= p == escrow::EscrowPhase::Aborted;
      pending |= !p || !escrow::is_terminal(*p);
    }
    for (const auto& r : world->log->read(desc.topic(), 0))
      if (r.kind == log::RecordKind::Conclusion) o.conclusions.push_back(to_string(r.conclusion().kind()));
    if (failed.count(desc.id))
      o.status = "Failed";
    else if (committed && aborted)
      o.status = "Mixed";
    else if (pending)
      o.status = "Pending";
    else
      o.status = committed ? "Committed" : "Aborted";
    if (auto it = finished_at.find(desc.id); it != finished_at.end()) o.finished_at = it->second;
    report.deals.push_back(std::move(o));
  }

  auto& bal = report.balances = nlohmann::ordered_json::object();
  for (const auto& [id, c] : world->chains) {
    auto& cj = bal[id.value] = nlohmann::ordered_json::object();
    for (const auto& name : world->genesis.actors) cj[name] = world->balance(id, name);
    auto& nfts = cj["nfts"] = nlohmann::ordered_json::object();
    c->read([&](const chain::Ledger& l) {
      for (const auto& [nft, owner] : l.nfts()) nfts[nft] = world->keys->name_of(owner);
      return 0;
    });
  }
  std::sort(report.results.begin(), report.results.end(),
            [](const auto& a, const auto& b) { return a.index < b.index; });
  if (options.data_dir) {
    world->persist();
    write_atomic(*options.data_dir / "report.json", report.to_json().dump(2));
  }
  return Run{std::move(report), world};
}

std::uint64_t ExploreReport::total_violations() const {
  std::uint64_t n = 0;
  for (const auto& [k, v] : violations) n += v;
  return n;
}

nlohmann::ordered_json ExploreReport::to_json() const {
  nlohmann::ordered_json j;
  j["runs"] = runs;
  j["completed"] = completed;
  j["step_bound_exceeded"] = step_bound_exceeded;
  j["total_steps"] = total_steps;
  j["violations"] = violations;
  j["total_violations"] = total_violations();
  j["outcomes"] = outcomes;
  j["failing_seeds"] = failing_seeds;
  return j;
}

ExploreReport explore(const Scenario& scenario, std::uint64_t first_seed, std::uint64_t count,
                      std::optional<bool> arbitration) {
  ExploreReport out;
  for (std::uint64_t seed = first_seed; seed < first_seed + count; ++seed) {
    RunOptions ro;
    ro.seed = seed;
    ro.arbitration = arbitration;
    auto run = run_scenario(scenario, ro);
    const auto& r = run.report;
    ++out.runs;
    out.total_steps += r.steps;
    if (r.completed) ++out.completed;
    if (r.error == Errc::StepBoundExceeded) ++out.step_bound_exceeded;
    for (const auto& v : r.violations) ++out.violations[v.invariant];
    for (const auto& d : r.deals) ++out.outcomes[d.status];
    if (!r.ok()) out.failing_seeds.push_back(seed);
    out.trace_hashes.emplace_back(seed, r.trace_hash);
  }
  return out;
}

}  // namespace xdeal::sim
