#pragma once

// Scenario scripts, world assembly and the invariant checker.
//
// Scenario file:
// {
//   "name": "...",
//   "genesis": { see chain::Genesis },
//   "options": {"step_bound": 100000, "tick": 10, "retry_after": 60, "liveness_bound": 1000},
//   "network": {"drop": 0.0, "duplicate": 0.0, "min_delay": 1, "max_delay": 1},
//   "faults": {
//     "crashes": [{"actor": "ccsvc", "at": 250 | [lo, hi], "restart_after": 40},
//                 {"actor": "ccsvc", "on_milestone": {"actor": "ccsvc", "label": "commit-receipt", "nth": 1},
//                  "restart_after": 40}],
//     "equivocators": ["bob"],
//     "arbitration": true
//   },
//   "actions": [{"at": 0, "actor": "auctioneer", "op": "create_auction", "params": {...}}, ...]
// }
//
// A crash without "restart_after" is permanent. Crash times drawn from a
// range use the run seed.

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "xdeal/chain/genesis.hpp"
#include "xdeal/deal/ccsvc.hpp"
#include "xdeal/deal/party.hpp"
#include "xdeal/log/event_log.hpp"
#include "xdeal/sim/runtime.hpp"

namespace xdeal::sim {

struct CrashSpec {
  std::string actor;
  Time at_lo = 0;
  Time at_hi = 0;
  std::optional<Time> restart_after;
  struct Milestone {
    std::string actor;
    std::string label;
    std::uint64_t nth = 1;
  };
  std::optional<Milestone> on_milestone;
};

struct ScriptAction {
  Time at = 0;
  std::string actor;
  std::string op;
  nlohmann::json params = nlohmann::json::object();
};

struct Scenario {
  std::string name;
  nlohmann::json genesis;
  struct Options {
    std::uint64_t step_bound = 100000;
    Time tick = 10;
    Time retry_after = 60;
    Time liveness_bound = 1000;
  } options;
  NetworkFaults network;
  std::vector<CrashSpec> crashes;
  std::set<std::string> equivocators;
  bool arbitration = true;
  std::vector<ScriptAction> actions;

  /// Throws Error(ScriptError) for malformed scripts.
  static Scenario from_json(const nlohmann::json& j);
  static Scenario load(const std::filesystem::path& file);
  nlohmann::ordered_json to_json() const;
};

/// Every component of one simulated deployment.
struct World {
  struct Options {
    bool arbitration = true;
    std::set<std::string> equivocators;
    std::optional<std::filesystem::path> data_dir;  // persisted log, journal and chain snapshots
    Time tick = 10;
  };

  World(const chain::Genesis& genesis, std::uint64_t seed, NetworkFaults net, Runtime::Options rt_options,
        Options options);

  chain::Genesis genesis;
  std::shared_ptr<chain::Keystore> keys;
  std::map<ChainId, std::shared_ptr<chain::LocalChain>> chains;
  std::shared_ptr<log::EventLog> log;
  std::shared_ptr<deal::Journal> journal;
  std::shared_ptr<deal::AppRegistry> apps;
  std::shared_ptr<deal::CcSvc> service;
  std::map<std::string, std::shared_ptr<deal::PartyClient>> parties;
  std::map<std::string, std::shared_ptr<deal::PartyStore>> stores;
  std::unique_ptr<Runtime> rt;
  std::optional<std::filesystem::path> data_dir;

  /// Deals recorded in the service journal, with the descriptor as cleared
  /// (contract addresses come from the chains).
  std::vector<DealDescriptor> journal_deals() const;
  std::set<DealId> failed_deals() const;
  /// Contract phases of a deal, in deal order; nullopt for undeployed contracts.
  std::vector<std::optional<escrow::EscrowPhase>> phases(const DealDescriptor& desc) const;
  Address contract_of(const DealDescriptor& desc, std::size_t index) const;

  std::string name_of(const Address& a) const { return keys->name_of(a); }
  std::uint64_t balance(const ChainId& chain, const std::string& actor) const;
  std::optional<std::string> nft_owner(const ChainId& chain, const NftId& nft) const;

  /// Writes chain snapshots and the genesis file under data_dir.
  void persist() const;
};

/// World for a scenario's genesis, network and faults, with no script
/// actions scheduled and not yet booted. Resets `data_dir` when given.
std::shared_ptr<World> make_world(const Scenario& scenario, std::uint64_t seed, std::optional<bool> arbitration,
                                  const std::optional<std::filesystem::path>& data_dir);

/// Prepares `dir` for a fresh run: removes earlier log, journal and chain files.
void reset_data_dir(const std::filesystem::path& dir);

struct Violation {
  std::string invariant;
  std::string deal;
  std::string detail;
};

struct DealOutcome {
  DealId id;
  std::string app;
  std::string label;
  std::string status;  // Committed, Aborted, Mixed, Pending or Failed
  std::vector<std::string> phases;
  std::vector<std::string> conclusions;  // kinds on the log, in offset order
  std::optional<Time> finished_at;
  Time timeout = 0;
};

struct Report {
  std::string scenario;
  std::uint64_t seed = 0;
  bool completed = false;
  std::optional<Errc> error;
  std::uint64_t steps = 0;
  Time end_time = 0;
  Hash256 trace_hash;
  std::map<std::string, Hash256> chain_digests;
  Hash256 log_digest;
  std::vector<DealOutcome> deals;
  std::vector<deal::CommandResult> results;
  std::vector<Violation> violations;
  nlohmann::ordered_json balances;  // chain -> actor -> amount, plus nfts

  bool ok() const { return completed && violations.empty(); }
  std::size_t count(const std::string& invariant) const;
  nlohmann::ordered_json to_json() const;
};

struct RunOptions {
  std::uint64_t seed = 0;
  std::optional<bool> arbitration;  // overrides the scenario
  std::optional<std::filesystem::path> data_dir;
  std::function<void(const std::string&)> trace_sink;
  /// Real-time pacing: wall milliseconds per logical tick; 0 runs as fast as possible.
  double tick_ms = 0;
};

struct Run {
  Report report;
  std::shared_ptr<World> world;
};

Run run_scenario(const Scenario& scenario, const RunOptions& options);

/// Checks every registered invariant on a world.
std::vector<Violation> check_invariants(const World& world, bool run_completed, Time liveness_bound,
                                        const std::map<DealId, Time>& finished_at);

struct ExploreReport {
  std::uint64_t runs = 0;
  std::uint64_t completed = 0;
  std::uint64_t step_bound_exceeded = 0;
  std::map<std::string, std::uint64_t> violations;  // by invariant
  std::map<std::string, std::uint64_t> outcomes;    // deal status counts
  std::vector<std::uint64_t> failing_seeds;
  std::vector<std::pair<std::uint64_t, Hash256>> trace_hashes;
  std::uint64_t total_steps = 0;

  std::uint64_t total_violations() const;
  nlohmann::ordered_json to_json() const;
};

ExploreReport explore(const Scenario& scenario, std::uint64_t first_seed, std::uint64_t count,
                      std::optional<bool> arbitration = std::nullopt);

}  // namespace xdeal::sim
