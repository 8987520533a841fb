#include <gtest/gtest.h>

#include "support.hpp"

namespace xdeal {
namespace {

using escrow::EscrowPhase;
using test::addr;

// Ticket on chain "t" (party 0 owns it), coins on chain "c" (parties 1 and 2).
struct EscrowFixture : ::testing::Test {
  test::DealKeys k;
  DealId deal = test::deal_id("deal-1");
  log::EventLog log{k.log_op};
  chain::Ledger ticket{chain::ChainGenesis{ChainId("t"), {}, {{"nft-1", k.p0.address()}}}};
  chain::Ledger coin{chain::ChainGenesis{ChainId("c"), {{k.p1.address(), 100}, {k.p2.address(), 100}}, {}}};
  Address tc, cc;

  void SetUp() override {
    tc = *test::send(ticket, k.service, chain::DeployContract{k.init(deal, ContractKind::TicketEscrow, 0, "nft-1")})
              .deployed;
    cc = *test::send(coin, k.service, chain::DeployContract{k.init(deal, ContractKind::CoinEscrow, 1)}).deployed;
  }

  EscrowPhase phase(const chain::Ledger& l, const Address& a) { return escrow::phase_of(l.contract(a)); }

  Errc rejects(chain::Ledger& l, const KeyPair& who, const Address& c, escrow::Call call) {
    auto digest = l.state_digest();
    try {
      test::call(l, who, c, std::move(call));
    } catch (const Error& e) {
      EXPECT_EQ(l.state_digest(), digest);
      return e.code() == Errc::ContractRejected ? e.reason() : e.code();
    }
    ADD_FAILURE() << "call accepted";
    return Errc::IoError;
  }

  std::vector<Bytes> specify_p1_wins(std::uint64_t price) {
    escrow::TicketPlan tp{k.p1.address()};
    escrow::CoinPlan cp{{{k.p1.address(), k.p0.address(), price}}};
    test::call(ticket, k.p0, tc, escrow::SpecifyTransfer{tp});
    test::call(coin, k.p0, cc, escrow::SpecifyTransfer{cp});
    return {escrow::encode_plan(tp), escrow::encode_plan(cp)};
  }

  void escrow_all() {
    test::call(ticket, k.p0, tc, escrow::DepositNft{"nft-1"});
    test::call(coin, k.p1, cc, escrow::DepositCoins{40});
    test::call(coin, k.p2, cc, escrow::DepositCoins{25});
  }
};

TEST_F(EscrowFixture, CommitExecutesTheVotedPlan) {
  escrow_all();
  EXPECT_EQ(phase(ticket, tc), EscrowPhase::Escrowed);
  EXPECT_EQ(ticket.nft_owner("nft-1"), tc);
  auto plans = specify_p1_wins(40);
  auto a = test::conclude(log, ConclusionRecord::commit(test::full_vote(k, deal, plans)), k.service);
  test::call(ticket, k.service, tc, escrow::CommitCall{a.record, a.atts, plans});
  test::call(coin, k.p2, cc, escrow::CommitCall{a.record, a.atts, plans});
  EXPECT_EQ(phase(ticket, tc), EscrowPhase::Committed);
  EXPECT_EQ(phase(coin, cc), EscrowPhase::Committed);
  EXPECT_EQ(ticket.nft_owner("nft-1"), k.p1.address());
  EXPECT_EQ(coin.balance(k.p0.address()), 40u);
  EXPECT_EQ(coin.balance(k.p1.address()), 60u);
  EXPECT_EQ(coin.balance(k.p2.address()), 100u);  // unreferenced deposit refunded
  EXPECT_EQ(coin.total_supply(), 200u);
}

TEST_F(EscrowFixture, AbortRefundsEveryDepositor) {
  escrow_all();
  auto a = test::conclude(log, ConclusionRecord::abort(AbortRequest::make(deal, k.p2, "changed mind")), k.p2);
  test::call(ticket, k.p1, tc, escrow::AbortCall{a.record, a.atts});
  test::call(coin, k.p1, cc, escrow::AbortCall{a.record, a.atts});
  EXPECT_EQ(ticket.nft_owner("nft-1"), k.p0.address());
  EXPECT_EQ(coin.balance(k.p1.address()), 100u);
  EXPECT_EQ(coin.balance(k.p2.address()), 100u);
  EXPECT_EQ(rejects(coin, k.p1, cc, escrow::AbortCall{a.record, a.atts}), Errc::WrongPhase);
}

TEST_F(EscrowFixture, AbortFromDeployedAndServiceWatchdog) {
  auto a = test::conclude(log, ConclusionRecord::abort(AbortRequest::make(deal, k.service, "timeout")), k.service);
  test::call(ticket, k.service, tc, escrow::AbortCall{a.record, a.atts});
  EXPECT_EQ(phase(ticket, tc), EscrowPhase::Aborted);
  EXPECT_EQ(ticket.nft_owner("nft-1"), k.p0.address());
}

TEST_F(EscrowFixture, CommitNeedsAnAttestedCompleteVoteForTheStoredPlans) {
  escrow_all();
  auto plans = specify_p1_wins(40);

  auto partial = test::full_vote(k, deal, plans);
  partial.signatures.erase(k.p2.public_key());
  auto inc = test::conclude(log, ConclusionRecord::commit(partial), k.service);
  EXPECT_EQ(rejects(coin, k.p1, cc, escrow::CommitCall{inc.record, inc.atts, plans}), Errc::IncompleteVote);

  log::EventLog other_log{k.log_op};
  auto good = test::conclude(other_log, ConclusionRecord::commit(test::full_vote(k, deal, plans)), k.service);

  auto forged = good.atts;
  forged[0].log_signature = test::key("impostor").sign(as_bytes("x"));
  EXPECT_EQ(rejects(coin, k.p1, cc, escrow::CommitCall{good.record, forged, plans}), Errc::BadAttestation);

  log::EventLog rogue{test::key("rogue-log")};
  auto rogue_att = test::conclude(rogue, ConclusionRecord::commit(test::full_vote(k, deal, plans)), k.service);
  EXPECT_EQ(rejects(coin, k.p1, cc, escrow::CommitCall{rogue_att.record, rogue_att.atts, plans}),
            Errc::BadAttestation);

  auto other_plans = plans;
  other_plans[1] = escrow::encode_plan(escrow::CoinPlan{{{k.p1.address(), k.p0.address(), 1}}});
  EXPECT_EQ(rejects(coin, k.p1, cc, escrow::CommitCall{good.record, good.atts, other_plans}), Errc::DigestMismatch);

  log::EventLog abort_log{k.log_op};
  auto abort = test::conclude(abort_log, ConclusionRecord::abort(AbortRequest::make(deal, k.p1, "x")), k.p1);
  ASSERT_FALSE(abort.record.empty());
  EXPECT_EQ(rejects(coin, k.p1, cc, escrow::CommitCall{abort.record, abort.atts, plans}), Errc::BadAttestation);

  test::call(coin, k.p1, cc, escrow::CommitCall{good.record, good.atts, plans});
  EXPECT_EQ(phase(coin, cc), EscrowPhase::Committed);
}

TEST_F(EscrowFixture, AbortRequestedByOutsiderIsRejected) {
  escrow_all();
  auto a = test::conclude(log, ConclusionRecord::abort(AbortRequest::make(deal, test::key("mallory"), "x")),
                          test::key("mallory"));
  EXPECT_EQ(rejects(coin, k.p1, cc, escrow::AbortCall{a.record, a.atts}), Errc::BadAttestation);
}

TEST_F(EscrowFixture, PhaseAndPermissionChecks) {
  EXPECT_EQ(rejects(coin, test::key("outsider"), cc, escrow::DepositCoins{1}), Errc::NotParty);
  EXPECT_EQ(rejects(coin, k.p1, cc, escrow::DepositCoins{0}), Errc::ZeroAmount);
  EXPECT_EQ(rejects(coin, k.p1, cc, escrow::DepositCoins{101}), Errc::InsufficientBalance);
  EXPECT_EQ(rejects(ticket, k.p1, tc, escrow::DepositNft{"nft-1"}), Errc::NotOwner);
  EXPECT_EQ(rejects(coin, k.p1, cc, escrow::WithdrawBid{}), Errc::WrongPhase);
  escrow_all();
  EXPECT_EQ(rejects(ticket, k.p1, tc, escrow::SpecifyTransfer{escrow::TicketPlan{k.p1.address()}}),
            Errc::BadSignature);
  EXPECT_EQ(rejects(coin, k.p0, cc, escrow::SpecifyTransfer{escrow::CoinPlan{{{k.p1.address(), k.p0.address(), 41}}}}),
            Errc::PlanExceedsDeposits);
  EXPECT_EQ(rejects(coin, k.p1, cc, escrow::RelayBid{}), Errc::BadParams);

  test::call(coin, k.p2, cc, escrow::WithdrawBid{});
  EXPECT_EQ(coin.balance(k.p2.address()), 100u);
  EXPECT_EQ(rejects(coin, k.p2, cc, escrow::WithdrawBid{}), Errc::NoDeposit);

  specify_p1_wins(40);
  EXPECT_EQ(rejects(coin, k.p1, cc, escrow::DepositCoins{1}), Errc::WrongPhase);
  EXPECT_EQ(rejects(coin, k.p1, cc, escrow::WithdrawBid{}), Errc::WrongPhase);
}

TEST_F(EscrowFixture, RelayedBidsComeFromTheServiceOnce) {
  escrow::RelayedBid b{ChainId("c"), k.p1.address(), 40, 0};
  EXPECT_EQ(rejects(ticket, k.p1, tc, escrow::RelayBid{b}), Errc::BadSignature);
  test::call(ticket, k.service, tc, escrow::RelayBid{b});
  EXPECT_EQ(rejects(ticket, k.service, tc, escrow::RelayBid{b}), Errc::DuplicateRelay);
  b.origin_seq = 1;
  test::call(ticket, k.service, tc, escrow::RelayBid{b});
  const auto& s = std::get<escrow::TicketEscrowState>(ticket.contract(tc));
  EXPECT_EQ(s.relayed_bids.size(), 2u);
}

TEST_F(EscrowFixture, CoinContractWithoutDepositsCanBeSpecifiedEmpty) {
  test::call(coin, k.p0, cc, escrow::SpecifyTransfer{escrow::CoinPlan{}});
  EXPECT_EQ(phase(coin, cc), EscrowPhase::TransferSpecified);
}

TEST(EscrowCodec, PlansAndCallsRoundTrip) {
  escrow::TransferPlan tp = escrow::TicketPlan{addr("x")};
  escrow::TransferPlan cp = escrow::CoinPlan{{{addr("a"), addr("b"), 5}, {addr("a"), addr("c"), 1}}};
  EXPECT_EQ(escrow::decode_plan(escrow::encode_plan(tp)), tp);
  EXPECT_EQ(escrow::decode_plan(escrow::encode_plan(cp)), cp);
  EXPECT_NE(escrow::encode_plan(tp), escrow::encode_plan(cp));
}

}  // namespace
}  // namespace xdeal
