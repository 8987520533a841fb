#include <gtest/gtest.h>

#include <fstream>

#include "oracles.hpp"
#include "xdeal/sim/scenario.hpp"

namespace xdeal {
namespace {

using sim::Scenario;

nlohmann::json scenario_json(const std::string& name) {
  std::ifstream in(std::string(XDEAL_SCENARIO_DIR) + "/" + name + ".json");
  return nlohmann::json::parse(in);
}

sim::Run run(const nlohmann::json& j, std::uint64_t seed, std::optional<bool> arbitration = std::nullopt) {
  sim::RunOptions o;
  o.seed = seed;
  o.arbitration = arbitration;
  return sim::run_scenario(Scenario::from_json(j), o);
}

TEST(Sim, DemoAuctionCommitsToTheOracleWinner) {
  auto j = scenario_json("demo");
  auto r = run(j, 7);
  ASSERT_TRUE(r.report.ok()) << r.report.to_json().dump(2);
  ASSERT_EQ(r.report.deals.size(), 1u);
  EXPECT_EQ(r.report.deals[0].status, "Committed");

  // Winner from the scripted bids: standing totals per (bidder, chain).
  std::map<std::pair<std::string, std::string>, std::uint64_t> totals;
  std::map<std::pair<std::string, std::string>, std::uint64_t> first_seen;
  std::uint64_t seq = 0;
  for (const auto& a : j["actions"]) {
    if (a["op"] != "bid") continue;
    auto key = std::make_pair(a["actor"].get<std::string>(), a["params"]["chain"].get<std::string>());
    totals[key] += a["params"]["amount"].get<std::uint64_t>();
    first_seen[key] = seq++;
  }
  auto rates = j["actions"][0]["params"]["rates"];
  std::vector<auction::Bid> bids;
  std::vector<std::pair<std::string, std::string>> who;
  for (const auto& [key, total] : totals) {
    bids.push_back({{}, ChainId(key.second), total, auction::Rate::from_json(rates[key.second]), first_seen[key]});
    who.push_back(key);
  }
  auto w = test::oracle_winner(bids);
  ASSERT_TRUE(w);
  auto [winner, pay_chain] = who[*w];

  auto& world = *r.world;
  EXPECT_EQ(world.nft_owner(ChainId("ticket"), "ticket-1"), std::optional<std::string>(winner));
  EXPECT_EQ(world.balance(ChainId(pay_chain), "auctioneer"), bids[*w].amount);
  for (const auto& [key, total] : totals) {
    if (key == who[*w]) continue;
    EXPECT_EQ(world.balance(ChainId(key.second), key.first), 500u) << key.first << " refunded on " << key.second;
  }
  EXPECT_EQ(world.balance(ChainId(pay_chain), winner), 500u - bids[*w].amount);
}

TEST(Sim, SameSeedSameTraceDifferentSeedDifferentTrace) {
  auto j = scenario_json("auction");
  auto a = run(j, 42).report, b = run(j, 42).report, c = run(j, 43).report;
  EXPECT_EQ(a.trace_hash, b.trace_hash);
  EXPECT_EQ(a.chain_digests, b.chain_digests);
  EXPECT_EQ(a.log_digest, b.log_digest);
  EXPECT_EQ(a.steps, b.steps);
  EXPECT_NE(a.trace_hash, c.trace_hash);
}

TEST(Sim, EquivocatingBidderNeverSplitsTheOutcome) {
  auto j = scenario_json("auction");
  std::map<std::string, int> outcomes;
  for (std::uint64_t seed = 0; seed < 150; ++seed) {
    auto r = run(j, seed).report;
    ASSERT_TRUE(r.ok()) << "seed " << seed << "\n" << r.to_json().dump(2);
    for (const auto& d : r.deals) ++outcomes[d.status];
  }
  EXPECT_EQ(outcomes.count("Mixed"), 0u);
}

TEST(Sim, WithoutArbitrationTheCheckerSeesMixedOutcomes) {
  auto j = scenario_json("auction");
  std::size_t mixed = 0;
  for (std::uint64_t seed = 0; seed < 300 && mixed == 0; ++seed) mixed += run(j, seed, false).report.count("atomicity");
  EXPECT_GE(mixed, 1u);
}

TEST(Sim, ServiceCrashAtEachMilestoneStillConcludesConsistently) {
  for (std::string label : {"deal-created", "cleared", "relayed", "logged-commit", "commit-receipt"}) {
    auto j = scenario_json("demo");
    j["faults"]["crashes"] = {
        {{"actor", "ccsvc"}, {"on_milestone", {{"actor", "ccsvc"}, {"label", label}, {"nth", 1}}}, {"restart_after", 30}}};
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      auto r = run(j, seed).report;
      ASSERT_TRUE(r.ok()) << label << " seed " << seed << "\n" << r.to_json().dump(2);
      ASSERT_EQ(r.deals.size(), 1u) << label;
      EXPECT_EQ(r.deals[0].status, "Committed") << label << " seed " << seed;
    }
  }
}

TEST(Sim, CrashedBidderLeadsToAbortAndFullRefunds) {
  auto j = scenario_json("auction-crash");
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    auto r = run(j, seed);
    ASSERT_TRUE(r.report.ok()) << "seed " << seed;
    for (const auto& d : r.report.deals) {
      ASSERT_EQ(d.status, "Aborted") << "seed " << seed;
      ASSERT_TRUE(d.finished_at);
    }
    auto& w = *r.world;
    EXPECT_EQ(w.balance(ChainId("coin-b"), "bob"), 500u);
    EXPECT_EQ(w.balance(ChainId("coin-a"), "bob"), 500u);
    EXPECT_EQ(w.nft_owner(ChainId("ticket"), "ticket-1"), std::optional<std::string>("auctioneer"));
  }
}

TEST(Sim, FlashLoanRepaysPrincipalPlusPremiumOrRefunds) {
  auto profitable = run(scenario_json("flashloan-profitable"), 3);
  ASSERT_TRUE(profitable.report.ok());
  ASSERT_EQ(profitable.report.deals.at(0).status, "Committed");
  EXPECT_EQ(profitable.world->balance(ChainId("chain-a"), "lender"), 1005u);
  EXPECT_EQ(profitable.world->balance(ChainId("chain-a"), "borrower"), 5u);  // 110 proceeds - 105 owed

  auto unprofitable = run(scenario_json("flashloan-unprofitable"), 3);
  ASSERT_TRUE(unprofitable.report.ok());
  EXPECT_EQ(unprofitable.report.deals.at(0).status, "Aborted");
  EXPECT_EQ(unprofitable.world->balance(ChainId("chain-a"), "lender"), 1000u);
}

TEST(Sim, ScriptErrors) {
  auto j = scenario_json("demo");
  auto bad_op = j;
  bad_op["actions"][0]["op"] = "launch";
  auto bad_actor = j;
  bad_actor["actions"][1]["actor"] = "mallory";
  auto bad_crash = j;
  bad_crash["faults"]["crashes"] = {{{"actor", "nobody"}, {"at", 5}}};
  for (const auto& s : {bad_op, bad_actor, bad_crash}) {
    try {
      Scenario::from_json(s);
      ADD_FAILURE() << "accepted a bad script";
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), Errc::ScriptError);
    }
  }
  auto round = Scenario::from_json(Scenario::from_json(j).to_json());
  EXPECT_EQ(round.actions.size(), j["actions"].size());
}

TEST(Sim, StepBoundIsReported) {
  auto j = scenario_json("demo");
  j["options"]["step_bound"] = 50;
  auto r = run(j, 1).report;
  EXPECT_FALSE(r.completed);
  EXPECT_EQ(r.error, std::optional<Errc>(Errc::StepBoundExceeded));
}

TEST(Sim, ExploreAggregatesSeeds) {
  auto s = Scenario::from_json(scenario_json("auction"));
  auto r = sim::explore(s, 100, 20);
  EXPECT_EQ(r.runs, 20u);
  EXPECT_EQ(r.completed, 20u);
  EXPECT_EQ(r.total_violations(), 0u);
  EXPECT_EQ(r.trace_hashes.size(), 20u);
}

TEST(Sim, RejectedBidsSurfaceTheirErrors) {
  auto j = scenario_json("demo");
  j["actions"].push_back({{"at", 430}, {"actor", "bob"}, {"op", "bid"},
                          {"params", {{"auction", "a1"}, {"chain", "coin-b"}, {"amount", 5}}}});
  j["actions"].push_back({{"at", 100}, {"actor", "bob"}, {"op", "bid"},
                          {"params", {{"auction", "a1"}, {"chain", "ticket"}, {"amount", 5}}}});
  auto r = run(j, 2).report;
  std::map<std::size_t, deal::CommandResult> by_index;
  for (const auto& res : r.results) by_index[res.index] = res;
  ASSERT_EQ(by_index.size(), j["actions"].size());
  EXPECT_FALSE(by_index[5].ok);
  EXPECT_EQ(by_index[5].error, Errc::AuctionClosed);
  EXPECT_FALSE(by_index[6].ok);
  EXPECT_EQ(by_index[6].error, Errc::ChainNotAccepted);
}

}  // namespace
}  // namespace xdeal
