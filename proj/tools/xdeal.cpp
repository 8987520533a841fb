// xdeal command line: scenario runs, seed exploration, state inspection and
// the real-time demo stack.

#include <CLI11.hpp>

#include <atomic>
#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <thread>

#include "xdeal/gateway/gateway.hpp"
#include "xdeal/sim/live.hpp"
#include "xdeal/sim/scenario.hpp"

namespace fs = std::filesystem;
using namespace xdeal;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

std::atomic<bool> g_stop{false};

fs::path default_data_dir() {
  if (const char* env = std::getenv("XDEAL_DATA_DIR"); env && *env) return env;
  return "xdeal-data";
}

json read_json(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw Error(Errc::IoError, "cannot read " + file.string());
  return json::parse(in);
}

chain::Keystore keystore_of(const fs::path& data_dir) {
  auto file = data_dir / "genesis.json";
  if (!fs::exists(file)) return {};
  return chain::Genesis::from_json(read_json(file)).keys;
}

std::string name_or_hex(const chain::Keystore& keys, const std::string& hex) {
  try {
    return keys.name_of(Address::from_hex(hex));
  } catch (const Error&) {
    return hex;
  }
}

void print_report(const sim::Report& r) {
  std::cout << "scenario    " << r.scenario << "\n"
            << "seed        " << r.seed << "\n"
            << "completed   " << (r.completed ? "yes" : "no");
  if (r.error) std::cout << " (" << to_string(*r.error) << ")";
  std::cout << "\n"
            << "steps       " << r.steps << "\n"
            << "end time    " << r.end_time << "\n"
            << "trace hash  " << r.trace_hash.hex() << "\n"
            << "log digest  " << r.log_digest.hex() << "\n";
  for (const auto& [chain, digest] : r.chain_digests) std::cout << "chain " << chain << "  " << digest.hex() << "\n";
  for (const auto& d : r.deals) {
    std::cout << "deal " << d.label << " (" << d.app << ") " << d.id.hex().substr(0, 16) << "  " << d.status;
    if (d.finished_at) std::cout << " at t=" << *d.finished_at;
    std::cout << "  phases:";
    for (const auto& p : d.phases) std::cout << " " << p;
    std::cout << "\n";
  }
  for (const auto& res : r.results) {
    std::cout << "action #" << res.index << " " << res.actor << " " << res.op << "  "
              << (res.ok ? "ok" : std::string("failed: ") + std::string(to_string(res.error)) + " " + res.message) << "\n";
  }
  for (const auto& v : r.violations)
    std::cout << "VIOLATION " << v.invariant << " " << v.deal.substr(0, 16) << "  " << v.detail << "\n";
  std::cout << (r.ok() ? "result      ok" : "result      FAILED") << std::endl;
}

int cmd_run(const std::string& file, std::uint64_t seed, bool real_time, double tick_ms, const fs::path& data_dir,
            bool data_dir_set, const std::string& trace, bool no_arbitration, bool as_json) {
  auto scenario = sim::Scenario::load(file);
  sim::RunOptions o;
  o.seed = seed;
  if (no_arbitration) o.arbitration = false;
  if (real_time) {
    o.tick_ms = tick_ms;
    o.data_dir = data_dir;
  } else if (data_dir_set) {
    o.data_dir = data_dir;
  }
  std::ofstream trace_out;
  if (!trace.empty()) {
    trace_out.open(trace);
    if (!trace_out) throw Error(Errc::IoError, "cannot write " + trace);
    o.trace_sink = [&trace_out](const std::string& line) { trace_out << line << "\n"; };
  }
  auto run = sim::run_scenario(scenario, o);
  if (o.data_dir) run.world->persist();
  if (as_json)
    std::cout << run.report.to_json().dump(2) << std::endl;
  else
    print_report(run.report);
  return run.report.ok() ? 0 : 1;
}

int cmd_explore(const std::string& file, std::uint64_t first, std::uint64_t count, bool no_arbitration, bool as_json) {
  auto scenario = sim::Scenario::load(file);
  auto start = std::chrono::steady_clock::now();
  auto r = sim::explore(scenario, first, count, no_arbitration ? std::optional<bool>(false) : std::nullopt);
  auto secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (as_json) {
    auto j = r.to_json();
    j["seconds"] = secs;
    std::cout << j.dump(2) << std::endl;
  } else {
    std::cout << "scenario    " << scenario.name << "\n"
              << "seeds       " << first << ".." << first + count - 1 << "\n"
              << "completed   " << r.completed << "/" << r.runs << "\n"
              << "steps       " << r.total_steps << "\n"
              << "seconds     " << secs << "\n";
    for (const auto& [status, n] : r.outcomes) std::cout << "deals " << status << "  " << n << "\n";
    std::cout << "violations  " << r.total_violations() << "\n";
    for (const auto& [inv, n] : r.violations) std::cout << "  " << inv << "  " << n << "\n";
    if (!r.failing_seeds.empty()) {
      std::cout << "failing seeds";
      for (std::size_t i = 0; i < r.failing_seeds.size() && i < 20; ++i) std::cout << " " << r.failing_seeds[i];
      std::cout << "\n";
    }
  }
  return r.total_violations() == 0 && r.completed == r.runs ? 0 : 1;
}

int cmd_inspect_chain(const std::string& chain, const fs::path& data_dir, const std::string& account,
                      const std::string& nft, bool as_json) {
  auto file = data_dir / "chains" / (chain + ".json");
  if (!fs::exists(file)) throw Error(Errc::UnknownChain, "no state for chain " + chain + " under " + data_dir.string());
  auto snap = read_json(file);
  auto keys = keystore_of(data_dir);

  if (!account.empty()) {
    std::string hex = keys.contains(account) ? keys.address(account).hex() : account;
    auto amount = snap["accounts"].value(hex, std::uint64_t{0});
    if (as_json)
      std::cout << json{{"chain", chain}, {"account", account}, {"balance", amount}}.dump() << std::endl;
    else
      std::cout << account << " " << amount << std::endl;
    return 0;
  }
  if (!nft.empty()) {
    if (!snap["nfts"].contains(nft)) throw Error(Errc::UnknownNft, "no nft " + nft + " on " + chain);
    auto owner = name_or_hex(keys, snap["nfts"][nft].get<std::string>());
    if (as_json)
      std::cout << json{{"chain", chain}, {"nft", nft}, {"owner", owner}}.dump() << std::endl;
    else
      std::cout << nft << " " << owner << std::endl;
    return 0;
  }
  if (as_json) {
    std::cout << snap.dump(2) << std::endl;
    return 0;
  }
  std::cout << "chain " << chain << "  height " << snap["height"] << "  digest " << snap["digest"].get<std::string>()
            << "\n";
  std::cout << "balances\n";
  for (const auto& [hex, amount] : snap["accounts"].items())
    std::cout << "  " << name_or_hex(keys, hex) << "  " << amount << "\n";
  if (!snap["nfts"].empty()) std::cout << "nfts\n";
  for (const auto& [id, owner] : snap["nfts"].items())
    std::cout << "  " << id << "  " << name_or_hex(keys, owner.get<std::string>()) << "\n";
  if (!snap["contracts"].empty()) std::cout << "contracts\n";
  for (const auto& [addr, c] : snap["contracts"].items())
    std::cout << "  " << addr.substr(0, 16) << "  " << c["kind"].get<std::string>() << "  "
              << c["phase"].get<std::string>() << "  deal " << c["deal_id"].get<std::string>().substr(0, 16) << "\n";
  std::cout.flush();
  return 0;
}

// Accepts a full topic, a unique topic prefix, or a deal label from the journal.
std::string resolve_topic(const std::map<std::string, std::vector<log::LogRecord>>& segments, const fs::path& data_dir,
                          const std::string& wanted) {
  if (segments.count(wanted)) return wanted;
  std::ifstream journal(data_dir / "journal.jsonl");
  std::string line;
  while (std::getline(journal, line)) {
    try {
      auto e = json::parse(line);
      if (e.value("op", "") != "deal") continue;
      auto app = json::parse(e.at("descriptor").at("app").get<std::string>());
      if (app.value("label", "") == wanted) return e.at("deal").get<std::string>();
    } catch (const std::exception&) {
    }
  }
  std::string found;
  for (const auto& [topic, records] : segments)
    if (topic.rfind(wanted, 0) == 0) {
      if (!found.empty()) throw Error(Errc::BadParams, "ambiguous topic prefix " + wanted);
      found = topic;
    }
  if (found.empty()) throw Error(Errc::NoSuchRecord, "no topic " + wanted);
  return found;
}

std::string describe(const log::LogRecord& r) {
  if (r.kind == log::RecordKind::Conclusion) {
    auto c = r.conclusion();
    std::string s(to_string(c.kind()));
    if (const auto* a = std::get_if<AbortRequest>(&c.body)) s += " requested: " + a->reason;
    return s;
  }
  try {
    auto j = json::parse(r.payload.begin(), r.payload.end());
    if (r.kind == log::RecordKind::Info && j.contains("app")) {
      auto app = json::parse(j["app"].get<std::string>());
      return app.value("type", "deal") + " " + app.value("label", "") + ", " + std::to_string(j["parties"].size()) +
             " parties, " + std::to_string(j["contracts"].size()) + " contracts, timeout " +
             std::to_string(j.value("timeout", 0));
    }
    return j.dump();
  } catch (const json::exception&) {
    return to_hex(r.payload);
  }
}

int cmd_inspect_log(const std::string& topic, const fs::path& data_dir, bool as_json) {
  auto segments = log::EventLog::load_segments(data_dir / "log");
  auto keys = keystore_of(data_dir);
  if (topic.empty()) {
    for (const auto& [t, records] : segments) std::cout << t << "  " << records.size() << " records\n";
    std::cout.flush();
    return 0;
  }
  auto resolved = resolve_topic(segments, data_dir, topic);
  const auto& records = segments.at(resolved);
  if (as_json) {
    auto out = ordered_json::array();
    for (const auto& r : records) out.push_back(r.to_json());
    std::cout << out.dump(2) << std::endl;
    return 0;
  }
  std::cout << "topic " << resolved << "\n";
  for (const auto& r : records)
    std::cout << r.offset << "  " << log::to_string(r.kind) << "  " << keys.name_of(address_of(r.producer)) << "  "
              << describe(r) << "\n";
  std::cout.flush();
  return 0;
}

int cmd_demo_up(const std::string& config, const fs::path& data_dir, const std::string& host, int port, double tick_ms,
                std::uint64_t seed, bool replay, double duration, const std::string& dev_token) {
  auto scenario = sim::Scenario::load(config);
  auto world = sim::make_world(scenario, seed, std::nullopt, data_dir);
  if (replay)
    for (std::size_t i = 0; i < scenario.actions.size(); ++i) {
      const auto& a = scenario.actions[i];
      world->rt->schedule_command(a.at, a.actor, sim::Command{i, a.op, a.params});
    }
  world->rt->boot();

  sim::LiveSystem live(world, tick_ms);
  gateway::Options go;
  go.host = host;
  go.port = port;
  go.dev_token = dev_token;
  gateway::Gateway gw(live, go);
  int bound = gw.bind();
  live.start();
  std::thread server([&] { gw.serve(); });
  std::cout << "xdeal demo: " << world->chains.size() << " chains, log, " << world->genesis.service
            << ", gateway on http://" << host << ":" << bound << "  (data " << data_dir.string() << ")" << std::endl;

  std::signal(SIGINT, [](int) { g_stop = true; });
  std::signal(SIGTERM, [](int) { g_stop = true; });
  auto start = std::chrono::steady_clock::now();
  while (!g_stop) {
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
    if (duration > 0 && std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() > duration) break;
  }
  gw.stop();
  server.join();
  live.stop();
  std::cout << "xdeal demo stopped" << std::endl;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"xdeal: cross-chain deals over a shared event log"};
  app.require_subcommand(1);

  std::string data_dir_arg;
  bool as_json = false;

  auto* run = app.add_subcommand("run-scenario", "run one scripted scenario");
  std::string run_file, trace;
  std::uint64_t seed = 0;
  bool real_time = false, no_arbitration = false;
  double tick_ms = 1.0;
  run->add_option("scenario", run_file, "scenario JSON file")->required()->check(CLI::ExistingFile);
  run->add_option("--seed", seed, "schedule seed");
  run->add_flag("--real-time", real_time, "pace logical time by the wall clock and persist state");
  run->add_option("--tick-ms", tick_ms, "wall milliseconds per logical tick in real-time mode");
  run->add_option("--data-dir", data_dir_arg, "state directory (default $XDEAL_DATA_DIR or ./xdeal-data)");
  run->add_option("--trace", trace, "write the JSON-lines trace to this file");
  run->add_flag("--no-arbitration", no_arbitration, "disable conclusion arbitration on the log");
  run->add_flag("--json", as_json, "print the report as JSON");

  auto* explore = app.add_subcommand("explore", "run a scenario across many seeds and check invariants");
  std::string explore_file;
  std::uint64_t seeds = 100, first_seed = 0;
  explore->add_option("scenario", explore_file, "scenario JSON file")->required()->check(CLI::ExistingFile);
  explore->add_option("--seeds", seeds, "number of seeds");
  explore->add_option("--first-seed", first_seed, "first seed");
  explore->add_flag("--no-arbitration", no_arbitration, "disable conclusion arbitration on the log");
  explore->add_flag("--json", as_json, "print the summary as JSON");

  auto* chain_cmd = app.add_subcommand("inspect-chain", "print a chain's persisted state");
  std::string chain_id, account, nft;
  chain_cmd->add_option("chain", chain_id, "chain id")->required();
  chain_cmd->add_option("--data-dir", data_dir_arg, "state directory");
  chain_cmd->add_option("--account", account, "print one balance (actor name or address hex)");
  chain_cmd->add_option("--nft", nft, "print one NFT owner");
  chain_cmd->add_flag("--json", as_json, "print JSON");

  auto* log_cmd = app.add_subcommand("inspect-log", "list topics, or print one topic in offset order");
  std::string topic;
  log_cmd->add_option("topic", topic, "topic, topic prefix or deal label");
  log_cmd->add_option("--data-dir", data_dir_arg, "state directory");
  log_cmd->add_flag("--json", as_json, "print JSON");

  auto* demo = app.add_subcommand("demo-up", "boot chains, log, service and gateway in real-time mode");
  std::string config = "scenarios/demo.json", host = "127.0.0.1", dev_token;
  int port = 8080;
  bool replay = false;
  double duration = 0;
  double demo_tick = 10.0;
  demo->add_option("--config", config, "scenario file supplying genesis and network")->check(CLI::ExistingFile);
  demo->add_option("--data-dir", data_dir_arg, "state directory");
  demo->add_option("--host", host, "listen address");
  demo->add_option("--port", port, "listen port, 0 for any");
  demo->add_option("--tick-ms", demo_tick, "wall milliseconds per logical tick");
  demo->add_option("--seed", seed, "network seed");
  demo->add_flag("--replay", replay, "also play the config's scripted actions");
  demo->add_option("--duration", duration, "stop after this many seconds");
  demo->add_option("--dev-token", dev_token, "require this X-Dev-Token on POST requests");

  CLI11_PARSE(app, argc, argv);
  fs::path data_dir = data_dir_arg.empty() ? default_data_dir() : fs::path(data_dir_arg);

  try {
    if (*run) return cmd_run(run_file, seed, real_time, tick_ms, data_dir, !data_dir_arg.empty(), trace, no_arbitration, as_json);
    if (*explore) return cmd_explore(explore_file, first_seed, seeds, no_arbitration, as_json);
    if (*chain_cmd) return cmd_inspect_chain(chain_id, data_dir, account, nft, as_json);
    if (*log_cmd) return cmd_inspect_log(topic, data_dir, as_json);
    if (*demo) return cmd_demo_up(config, data_dir, host, port, demo_tick, seed, replay, duration, dev_token);
  } catch (const Error& e) {
    std::cerr << "error: " << to_string(e.code()) << ": " << e.what() << std::endl;
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 2;
  }
  return 0;
}
