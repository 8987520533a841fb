#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "support.hpp"
#include "xdeal/chain/genesis.hpp"

namespace xdeal {
namespace {

using auction::Rate;

TEST(AuctionRate, ParsesEveryForm) {
  EXPECT_EQ(Rate::from_json(2), (Rate{2, 1}));
  EXPECT_EQ(Rate::from_json("3/2"), (Rate{3, 2}));
  EXPECT_EQ(Rate::from_json(nlohmann::json::array({5, 4})), (Rate{5, 4}));
  EXPECT_EQ(Rate::from_json({{"num", 7}, {"den", 3}}), (Rate{7, 3}));
  for (auto bad : {nlohmann::json(0), nlohmann::json("1/0"), nlohmann::json("x"), nlohmann::json(-1)})
    EXPECT_THROW(Rate::from_json(bad), Error) << bad;
  EXPECT_EQ(auction::to_string(auction::normalize(3, Rate{1, 2})), "3/2");
}

TEST(AuctionWinner, MatchesBruteForceOracle) {
  std::mt19937_64 rng(77);
  int ties = 0;
  for (int i = 0; i < 1000; ++i) {
    auto bids = test::random_auction(rng);
    auto got = auction::determine_winner(bids);
    auto want = test::oracle_winner(bids);
    ASSERT_EQ(got, want) << "case " << i;
    for (std::size_t a = 0; a < bids.size(); ++a)
      for (std::size_t b = a + 1; b < bids.size(); ++b)
        if (test::compare_value(bids[a].amount, bids[a].rate, bids[b].amount, bids[b].rate) == 0) ++ties;
  }
  EXPECT_GT(ties, 50);
}

TEST(AuctionWinner, EarlierLogPositionBreaksTies) {
  std::vector<auction::Bid> bids(2);
  bids[0] = {test::addr("a"), ChainId("x"), 10, Rate{2, 1}, 5};
  bids[1] = {test::addr("b"), ChainId("y"), 20, Rate{1, 1}, 3};
  EXPECT_EQ(auction::determine_winner(bids), std::optional<std::size_t>(1));
  EXPECT_FALSE(auction::determine_winner(std::vector<auction::Bid>{}).has_value());
}

struct AuctionDeal : ::testing::Test {
  chain::Keystore keys;
  auction::AuctionApp app;
  KeyPair service = test::key("svc");
  DealDescriptor desc;

  void SetUp() override {
    for (auto n : {"auctioneer", "alice", "bob", "carol"}) keys.add(n);
    deal::BuildContext ctx{keys, service.public_key(), 5, "auctioneer"};
    desc = app.build(
        {{"label", "a1"}, {"asset", "tix"}, {"ticket_chain", "ticket"}, {"chains", {"coin-a", "coin-b"}},
         {"rates", {{"coin-a", 1}, {"coin-b", "2/1"}}}, {"ends_at", 100}, {"bidders", {"alice", "bob"}}},
        ctx);
  }

  log::LogRecord bid(std::uint64_t offset, const std::string& who, const std::string& chain, std::uint64_t amount,
                     std::uint64_t total, Rate rate, const KeyPair* producer = nullptr) {
    auction::BidEvent e;
    e.auction_id = desc.id;
    e.chain = ChainId(chain);
    e.bidder = keys.address(who);
    e.amount = amount;
    e.total = total;
    e.rate = rate;
    e.action = total == 0 ? "withdraw" : "deposit";
    auto r = log::LogRecord::make(desc.topic(), log::RecordKind::BidEvent, e.payload(), producer ? *producer : service);
    r.offset = offset;
    return r;
  }
  log::LogRecord end(std::uint64_t offset) {
    auto r = log::LogRecord::make(desc.topic(), log::RecordKind::EndAuction, Bytes{'{', '}'}, service);
    r.offset = offset;
    return r;
  }
};

TEST_F(AuctionDeal, BuildProducesThreeContractsAndParties) {
  ASSERT_EQ(desc.contracts.size(), 3u);
  EXPECT_EQ(desc.contracts[0].kind, ContractKind::TicketEscrow);
  EXPECT_EQ(desc.parties.size(), 3u);
  EXPECT_EQ(desc.specifier_party().account, keys.address("auctioneer"));
  auto terms = auction::AuctionTerms::from_descriptor(desc);
  EXPECT_EQ(terms.created_at, 5u);
  EXPECT_EQ(terms.rate(ChainId("coin-b")), (Rate{2, 1}));
  EXPECT_THROW(terms.rate(ChainId("coin-z")), Error);
}

TEST_F(AuctionDeal, BuildRejectsBadTerms) {
  deal::BuildContext ctx{keys, service.public_key(), 50, "auctioneer"};
  auto expect = [&](nlohmann::json p, Errc code) {
    try {
      app.build(p, ctx);
      ADD_FAILURE() << p;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), code) << p;
    }
  };
  nlohmann::json base{{"asset", "tix"}, {"ticket_chain", "ticket"}, {"chains", {"coin-a", "coin-b"}},
                      {"rates", {{"coin-a", 1}, {"coin-b", 2}}}, {"ends_at", 100}, {"bidders", {"alice"}}};
  auto p = base;
  p["rates"].erase("coin-b");
  expect(p, Errc::MissingRate);
  p = base;
  p["ends_at"] = 40;
  expect(p, Errc::BadParams);
  p = base;
  p.erase("asset");
  expect(p, Errc::BadParams);
}

TEST_F(AuctionDeal, ReplayKeepsStandingServiceBidsBeforeTheEnd) {
  auto forger = test::key("bob");
  std::vector<log::LogRecord> rs{
      bid(0, "alice", "coin-a", 100, 100, Rate{1, 1}),
      bid(1, "bob", "coin-b", 60, 60, Rate{2, 1}),
      bid(2, "bob", "coin-b", 500, 500, Rate{2, 1}, &forger),  // not from the service
      bid(3, "carol", "coin-a", 900, 900, Rate{5, 1}),            // wrong rate
      bid(4, "alice", "coin-a", 30, 130, Rate{1, 1}),
      end(5),
      bid(6, "bob", "coin-b", 100, 160, Rate{2, 1}),  // after the end
  };
  auto log = auction::replay(desc, rs);
  ASSERT_EQ(log.bids.size(), 2u);
  EXPECT_EQ(log.end_offset, std::optional<std::uint64_t>(5));
  auto w = auction::determine_winner(log.bids);
  ASSERT_TRUE(w);
  EXPECT_EQ(log.bids[*w].bidder, keys.address("alice"));
  EXPECT_EQ(log.bids[*w].amount, 130u);
  EXPECT_EQ(log.bids[*w].log_seq, 4u);

  auto plans = auction::build_plans(desc, log.bids[*w]);
  ASSERT_EQ(plans.size(), 3u);
  EXPECT_EQ(std::get<escrow::TicketPlan>(plans[0]).recipient, keys.address("alice"));
  auto pay = std::get<escrow::CoinPlan>(plans[1]);
  ASSERT_EQ(pay.transfers.size(), 1u);
  EXPECT_EQ(pay.transfers[0].to, keys.address("auctioneer"));
  EXPECT_EQ(pay.transfers[0].amount, 130u);
  EXPECT_TRUE(std::get<escrow::CoinPlan>(plans[2]).transfers.empty());
}

TEST_F(AuctionDeal, WithdrawalRemovesTheStandingBid) {
  std::vector<log::LogRecord> rs{bid(0, "alice", "coin-a", 100, 100, Rate{1, 1}),
                                 bid(1, "bob", "coin-b", 10, 10, Rate{2, 1}),
                                 bid(2, "alice", "coin-a", 100, 0, Rate{1, 1})};
  auto log = auction::replay(desc, rs);
  ASSERT_EQ(log.bids.size(), 1u);
  EXPECT_EQ(log.bids[0].bidder, keys.address("bob"));
}

TEST_F(AuctionDeal, StatusAndBidAdmission) {
  auto terms = auction::AuctionTerms::from_descriptor(desc);
  auction::AuctionLog empty;
  using S = auction::Status;
  using P = escrow::EscrowPhase;
  EXPECT_EQ(auction::status(terms, empty, false, {}, 50), S::Open);
  EXPECT_EQ(auction::status(terms, empty, false, {}, 100), S::Ended);
  EXPECT_EQ(auction::status(terms, empty, true, {}, 50), S::Concluding);
  std::vector<P> done{P::Committed, P::Committed, P::Committed};
  EXPECT_EQ(auction::status(terms, empty, true, done, 200), S::Committed);
  std::vector<P> mixed{P::Committed, P::Aborted, P::Committed};
  EXPECT_EQ(auction::status(terms, empty, true, mixed, 200), S::Mixed);

  EXPECT_EQ(auction::check_bid(terms, S::Open, ChainId("coin-a"), 5, 50), std::nullopt);
  EXPECT_EQ(auction::check_bid(terms, S::Ended, ChainId("coin-a"), 5, 150), Errc::AuctionClosed);
  EXPECT_EQ(auction::check_bid(terms, S::Open, ChainId("coin-z"), 5, 50), Errc::ChainNotAccepted);
  EXPECT_EQ(auction::check_bid(terms, S::Open, ChainId("coin-a"), 0, 50), Errc::ZeroAmount);
  EXPECT_EQ(app.check_end(desc, 99), Errc::NotYetEnded);
  EXPECT_EQ(app.check_end(desc, 100), std::nullopt);
}

TEST_F(AuctionDeal, PartiesValidateOnlyTheHonestOutcome) {
  std::vector<log::LogRecord> rs{bid(0, "alice", "coin-a", 100, 100, Rate{1, 1}),
                                 bid(1, "bob", "coin-b", 60, 60, Rate{2, 1}), end(2)};
  auto log = auction::replay(desc, rs);
  // bob's 60 at 2/1 normalizes to 120 and beats alice's 100.
  auto honest = deal::encode_plans(auction::build_plans(desc, log.bids[1]));
  auto rigged = deal::encode_plans(auction::build_plans(desc, log.bids[0]));
  deal::AppView view{desc, rs, {}};
  auto decision = app.decide(view);
  ASSERT_TRUE(decision);
  EXPECT_EQ(deal::encode_plans(decision->plans), honest);
  EXPECT_EQ(app.validate(view, desc.parties[2], honest), "");
  EXPECT_NE(app.validate(view, desc.parties[2], rigged), "");
}

}  // namespace
}  // namespace xdeal
