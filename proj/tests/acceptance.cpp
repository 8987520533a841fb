// Acceptance suite: one PASS/FAIL line per criterion. Exit status is the
// number of failing criteria.

#include <array>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include "oracles.hpp"
#include "xdeal/sim/scenario.hpp"

using namespace xdeal;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

int failures = 0;

void report(bool ok, const std::string& name, const std::string& detail) {
  std::cout << (ok ? "PASS " : "FAIL ") << name << ": " << detail << std::endl;
  if (!ok) ++failures;
}

json load(const std::string& name) {
  std::ifstream in(std::string(XDEAL_SCENARIO_DIR) + "/" + name + ".json");
  return json::parse(in);
}

double seconds_since(std::chrono::steady_clock::time_point t) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t).count();
}

// Conservation recomputed from the scenario file rather than from the ledger's
// own genesis bookkeeping: per chain, balances plus escrowed funds equal the
// configured balances, and every configured NFT has exactly one live owner.
struct ConservationAudit {
  std::uint64_t runs = 0;
  std::uint64_t failures = 0;
  std::string first_failure;

  void check(const json& scenario, const sim::World& world, const std::string& where) {
    ++runs;
    auto keys = world.keys;
    for (const auto& c : scenario["genesis"]["chains"]) {
      ChainId id(c["id"].get<std::string>());
      std::uint64_t expected = 0;
      auto balances = c.value("balances", json::object());
      auto configured_nfts = c.value("nfts", json::object());
      for (const auto& [who, amount] : balances.items()) expected += amount.get<std::uint64_t>();
      std::set<std::string> nfts;
      for (const auto& [nft, owner] : configured_nfts.items()) nfts.insert(nft);
      auto problem = world.chains.at(id)->read([&](const chain::Ledger& l) -> std::string {
        std::uint64_t total = 0;
        for (const auto& [who, amount] : l.accounts()) total += amount;
        for (const auto& [addr, state] : l.contracts()) total += escrow::held_funds(state);
        if (total != expected) return "supply " + std::to_string(total) + " != " + std::to_string(expected);
        std::set<std::string> seen;
        for (const auto& [nft, owner] : l.nfts()) {
          seen.insert(nft);
          if (owner.is_zero()) return "nft " + nft + " has no owner";
          auto c = l.contracts().find(owner);
          if (c != l.contracts().end() && escrow::is_terminal(escrow::phase_of(c->second)))
            return "nft " + nft + " stuck in a concluded contract";
        }
        if (seen != nfts) return "nft set changed";
        return {};
      });
      if (!problem.empty()) {
        if (failures++ == 0) first_failure = where + " chain " + id.value + ": " + problem;
      }
    }
  }
};

ConservationAudit audit;

sim::Run run(const json& j, std::uint64_t seed, std::optional<bool> arbitration = std::nullopt) {
  sim::RunOptions o;
  o.seed = seed;
  o.arbitration = arbitration;
  return sim::run_scenario(sim::Scenario::from_json(j), o);
}

void atomicity_and_negative_control() {
  auto j = load("auction");
  for (bool arbitrate : {true, false}) {
    auto start = std::chrono::steady_clock::now();
    std::uint64_t mixed = 0, violations = 0, incomplete = 0, equivocations = 0;
    std::map<std::string, std::uint64_t> outcomes;
    for (std::uint64_t seed = 0; seed < 1000; ++seed) {
      auto r = run(j, seed, arbitrate);
      if (!r.report.completed) ++incomplete;
      violations += r.report.count("atomicity");
      for (const auto& d : r.report.deals) {
        ++outcomes[d.status];
        mixed += d.status == "Mixed";
        equivocations += d.conclusions.size() > 1 || d.status == "Mixed";
      }
      // Independent of the checker: contract phases straight from the chains.
      for (const auto& desc : r.world->journal_deals()) {
        std::set<escrow::EscrowPhase> terminal;
        for (const auto& p : r.world->phases(desc))
          if (p && escrow::is_terminal(*p)) terminal.insert(*p);
        if (terminal.size() > 1 && r.report.count("atomicity") == 0) ++violations;  // checker missed one
      }
      if (arbitrate) audit.check(j, *r.world, "auction seed " + std::to_string(seed));
    }
    auto secs = seconds_since(start);
    std::ostringstream d;
    d << "1000 seeds, " << outcomes["Committed"] << " committed, " << outcomes["Aborted"] << " aborted, " << mixed
      << " mixed, " << violations << " atomicity violations, " << incomplete << " incomplete, " << secs << " s";
    if (arbitrate)
      report(mixed == 0 && violations == 0 && incomplete == 0 && secs < 60.0, "atomicity", d.str());
    else
      report(violations >= 1, "negative-control", d.str() + " (arbitration disabled)");
  }
}

void mutual_exclusion() {
  std::vector<KeyPair> producers{KeyPair::dev("p0"), KeyPair::dev("p1"), KeyPair::dev("p2"), KeyPair::dev("svc")};
  std::vector<DealId> deals;
  for (int i = 0; i < 3; ++i) deals.push_back(convert<DealId>(sha256(as_bytes("deal-" + std::to_string(i)))));
  std::vector<log::LogRecord> pool;
  for (const auto& d : deals)
    for (const auto& p : producers) {
      CommitVote v;
      v.deal_id = d;
      v.transfer_digest = sha256(as_bytes("plans"));
      for (const auto& q : producers) v.signatures[q.public_key()] = CommitVote::sign(q, d, v.transfer_digest);
      pool.push_back(log::LogRecord::make(d.hex(), log::RecordKind::Conclusion, ConclusionRecord::commit(v).encode(), p));
      auto a = ConclusionRecord::abort(AbortRequest::make(d, p, "abort"));
      pool.push_back(log::LogRecord::make(d.hex(), log::RecordKind::Conclusion, a.encode(), p));
    }
  std::mt19937_64 rng(99);
  const int cases = 10000;
  int bad = 0, contested = 0;
  for (int c = 0; c < cases; ++c) {
    log::EventLog log(KeyPair::dev("operator"));
    std::vector<log::LogRecord> script;
    std::size_t n = 2 + rng() % 10;
    for (std::size_t i = 0; i < n; ++i) script.push_back(pool[rng() % pool.size()]);
    std::shuffle(script.begin(), script.end(), rng);
    std::map<DealId, std::pair<Hash256, ConclusionKind>> first;
    std::map<DealId, int> tries;
    for (const auto& r : script) {
      auto cr = r.conclusion();
      ++tries[cr.deal_id];
      if (!first.count(cr.deal_id)) first[cr.deal_id] = {sha256(r.signing_bytes()), cr.kind()};
      log.append(r);
    }
    for (const auto& [deal, winner] : first) {
      auto records = log.read(deal.hex(), 0);
      bool ok = records.size() == 1 && sha256(records[0].signing_bytes()) == winner.first &&
                records[0].conclusion().kind() == winner.second;
      bad += !ok;
      contested += tries[deal] > 1;
    }
  }
  std::ostringstream d;
  d << cases << " interleavings, " << contested << " contested deals, " << bad << " deals without exactly one first-wins conclusion";
  report(bad == 0, "mutual-exclusion", d.str());
}

void auction_oracle() {
  std::mt19937_64 rng(4242);
  int mismatches = 0, with_ties = 0;
  for (int i = 0; i < 1000; ++i) {
    auto bids = test::random_auction(rng);
    if (auction::determine_winner(bids) != test::oracle_winner(bids)) ++mismatches;
    bool tie = false;
    for (std::size_t a = 0; a < bids.size() && !tie; ++a)
      for (std::size_t b = a + 1; b < bids.size() && !tie; ++b)
        tie = test::compare_value(bids[a].amount, bids[a].rate, bids[b].amount, bids[b].rate) == 0;
    with_ties += tie;
  }
  std::ostringstream d;
  d << "1000 random auctions (" << with_ties << " with ties), " << mismatches << " mismatches";
  report(mismatches == 0, "auction-oracle", d.str());
}

void liveness() {
  auto j = load("auction-crash");
  int stuck = 0, not_restored = 0, runs = 0;
  for (std::uint64_t seed = 0; seed < 200; ++seed, ++runs) {
    auto r = run(j, seed);
    audit.check(j, *r.world, "auction-crash seed " + std::to_string(seed));
    bool all_terminal = r.report.completed && !r.report.deals.empty();
    for (const auto& desc : r.world->journal_deals())
      for (const auto& p : r.world->phases(desc)) all_terminal &= p && escrow::is_terminal(*p);
    stuck += !all_terminal;
    // The crashed bidder is alice; bob and the auctioneer are live.
    bool aborted = std::all_of(r.report.deals.begin(), r.report.deals.end(), [](auto& d) { return d.status == "Aborted"; });
    if (aborted) {
      auto& w = *r.world;
      bool restored = w.balance(ChainId("coin-a"), "bob") == 500 && w.balance(ChainId("coin-b"), "bob") == 500 &&
                      w.nft_owner(ChainId("ticket"), "ticket-1") == std::optional<std::string>("auctioneer") &&
                      w.balance(ChainId("coin-a"), "auctioneer") == 0 && w.balance(ChainId("coin-b"), "auctioneer") == 0;
      not_restored += !restored;
    }
  }
  std::ostringstream d;
  d << runs << " seeds with a crashed bidder, " << stuck << " with non-terminal contracts, " << not_restored
    << " aborts without full refunds";
  report(stuck == 0 && not_restored == 0, "liveness", d.str());
}

void flash_loan_safety() {
  int runs = 0, below = 0, inexact = 0, committed = 0;
  for (const char* name : {"flashloan-profitable", "flashloan-unprofitable", "flashloan-borrower-crash"}) {
    auto j = load(name);
    auto params = j["actions"][0]["params"];
    auto premium = params["premium"].get<std::uint64_t>();
    auto initial = j["genesis"]["chains"][0]["balances"]["lender"].get<std::uint64_t>();
    ChainId chain_a(params["chain_a"].get<std::string>());
    std::uint64_t seeds = std::string(name) == "flashloan-borrower-crash" ? 66 : 67;
    for (std::uint64_t seed = 0; seed < seeds; ++seed, ++runs) {
      auto r = run(j, seed);
      audit.check(j, *r.world, std::string(name) + " seed " + std::to_string(seed));
      auto final_balance = r.world->balance(chain_a, "lender");
      below += final_balance < initial;
      bool is_commit = !r.report.deals.empty() && r.report.deals[0].status == "Committed";
      committed += is_commit;
      if (is_commit && final_balance != initial + premium) ++inexact;
      if (!r.report.completed) ++below;
    }
  }
  std::ostringstream d;
  d << runs << " runs (" << committed << " committed), " << below << " with the lender below its initial balance, "
    << inexact << " commits not repaying principal plus premium exactly";
  report(below == 0 && inexact == 0 && committed > 0, "flash-loan-safety", d.str());
}

void determinism() {
  int pairs = 0, differing = 0;
  for (const char* name :
       {"demo", "auction", "auction-crash", "flashloan-profitable", "flashloan-unprofitable", "flashloan-borrower-crash"}) {
    auto j = load(name);
    for (std::uint64_t seed : {0u, 7u, 123456789u}) {
      auto a = run(j, seed).report, b = run(j, seed).report;
      ++pairs;
      differing += a.trace_hash != b.trace_hash || a.chain_digests != b.chain_digests || a.log_digest != b.log_digest ||
                   a.steps != b.steps;
    }
  }
  std::ostringstream d;
  d << pairs << " scenario/seed pairs re-run, " << differing << " differing in trace hash or state digests";
  report(differing == 0, "determinism", d.str());
}

struct CliOutput {
  int status = -1;
  std::string text;
};

CliOutput cli(const std::string& args) {
  std::string cmd = std::string(XDEAL_CLI) + " " + args + " 2>/dev/null";
  CliOutput out;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return out;
  std::array<char, 4096> buf{};
  while (auto n = fread(buf.data(), 1, buf.size(), pipe)) out.text.append(buf.data(), n);
  int rc = pclose(pipe);
  out.status = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
  return out;
}

void end_to_end_demo() {
  auto dir = fs::temp_directory_path() / ("xdeal-acceptance-demo-" + std::to_string(::getpid()));
  fs::remove_all(dir);
  auto scenario = std::string(XDEAL_SCENARIO_DIR) + "/demo.json";
  auto dd = " --data-dir " + dir.string();
  std::vector<std::string> problems;
  auto started = std::chrono::steady_clock::now();
  auto runout = cli("run-scenario " + scenario + " --real-time --tick-ms 1 --seed 7" + dd);
  auto wall = seconds_since(started);
  if (runout.status != 0) problems.push_back("run-scenario exited " + std::to_string(runout.status));

  // Expected outcome from the script: standing totals per (bidder, chain) through the oracle.
  auto j = load("demo");
  std::map<std::pair<std::string, std::string>, std::uint64_t> totals, order;
  std::set<std::string> bid_chains;
  std::uint64_t seq = 0;
  for (const auto& a : j["actions"])
    if (a["op"] == "bid") {
      auto key = std::make_pair(a["actor"].get<std::string>(), a["params"]["chain"].get<std::string>());
      totals[key] += a["params"]["amount"].get<std::uint64_t>();
      order[key] = seq++;
      bid_chains.insert(key.second);
    }
  std::vector<auction::Bid> bids;
  std::vector<std::pair<std::string, std::string>> who;
  auto rates = j["actions"][0]["params"]["rates"];
  for (const auto& [key, total] : totals) {
    bids.push_back({{}, ChainId(key.second), total, auction::Rate::from_json(rates[key.second]), order[key]});
    who.push_back(key);
  }
  auto w = *test::oracle_winner(bids);
  auto [winner, pay_chain] = who[w];

  auto owner = cli("inspect-chain ticket --nft ticket-1 --json" + dd);
  if (owner.status != 0 || json::parse(owner.text)["owner"] != winner)
    problems.push_back("ticket owner is not " + winner + ": " + owner.text);
  auto paid = cli("inspect-chain " + pay_chain + " --account auctioneer --json" + dd);
  if (paid.status != 0 || json::parse(paid.text)["balance"] != bids[w].amount)
    problems.push_back("auctioneer not paid " + std::to_string(bids[w].amount) + ": " + paid.text);
  for (const auto& chain : {std::string("ticket"), std::string("coin-a"), std::string("coin-b")}) {
    auto state = cli("inspect-chain " + chain + " --json" + dd);
    if (state.status != 0) {
      problems.push_back("inspect-chain " + chain + " failed");
      continue;
    }
    auto s = json::parse(state.text);
    bool committed = !s["contracts"].empty();
    for (const auto& [addr, c] : s["contracts"].items()) committed &= c["phase"] == "Committed";
    if (!committed) problems.push_back(chain + " contract not Committed");
  }
  auto log = cli("inspect-log a1 --json" + dd);
  bool commit_logged = false;
  std::size_t bid_events = 0;
  if (log.status == 0)
    for (const auto& r : json::parse(log.text)) {
      auto rec = log::LogRecord::from_json(r);
      if (rec.kind == log::RecordKind::Conclusion) commit_logged |= rec.conclusion().kind() == ConclusionKind::Commit;
      bid_events += rec.kind == log::RecordKind::BidEvent;
    }
  if (!commit_logged) problems.push_back("no Commit conclusion on the log");
  if (bid_events < totals.size()) problems.push_back("bids missing from the log");
  if (bid_chains.size() < 2) problems.push_back("script bids on fewer than two coin chains");
  fs::remove_all(dir);

  std::ostringstream d;
  d << "real-time CLI run (" << wall << " s wall), ticket to " << winner << ", " << bids[w].amount << " on " << pay_chain
    << " to auctioneer, commit logged";
  for (const auto& p : problems) d << "; " << p;
  report(problems.empty(), "end-to-end-demo", problems.empty() ? d.str() : "problems" + d.str().substr(d.str().find(';')));
}

}  // namespace

int main() {
  atomicity_and_negative_control();
  mutual_exclusion();
  auction_oracle();
  liveness();
  flash_loan_safety();
  determinism();
  end_to_end_demo();
  std::ostringstream d;
  d << audit.runs << " finished runs audited, " << audit.failures << " supply or NFT ownership failures";
  if (audit.failures) d << " (first: " << audit.first_failure << ")";
  report(audit.failures == 0 && audit.runs >= 1400, "conservation", d.str());
  return failures;
}
