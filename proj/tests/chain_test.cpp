#include <gtest/gtest.h>

#include <random>

#include "support.hpp"

namespace xdeal {
namespace {

using test::addr;
using test::key;

chain::ChainGenesis genesis() {
  chain::ChainGenesis g;
  g.id = ChainId("c");
  g.balances = {{addr("alice"), 100}, {addr("bob"), 50}};
  g.nfts = {{"t1", addr("alice")}};
  return g;
}

Errc code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an error";
  return Errc::IoError;
}

TEST(Ledger, TransfersMoveFundsAndNfts) {
  chain::Ledger l(genesis());
  auto r = test::send(l, key("alice"), chain::TransferFungible{addr("carol"), 30});
  EXPECT_EQ(r.height, 1u);
  EXPECT_EQ(l.balance(addr("alice")), 70u);
  EXPECT_EQ(l.balance(addr("carol")), 30u);
  test::send(l, key("alice"), chain::TransferNft{addr("bob"), "t1"});
  EXPECT_EQ(l.nft_owner("t1"), addr("bob"));
  EXPECT_EQ(l.total_supply(), 150u);
  EXPECT_EQ(l.check_invariants(), "");
}

TEST(Ledger, RejectionsLeaveStateUntouched) {
  chain::Ledger l(genesis());
  auto before = l.state_digest();
  EXPECT_EQ(code_of([&] { test::send(l, key("bob"), chain::TransferFungible{addr("alice"), 51}); }),
            Errc::InsufficientBalance);
  EXPECT_EQ(code_of([&] { test::send(l, key("bob"), chain::TransferNft{addr("bob"), "t1"}); }), Errc::NotOwner);
  EXPECT_EQ(code_of([&] { test::send(l, key("bob"), chain::TransferNft{addr("bob"), "t9"}); }), Errc::UnknownNft);
  EXPECT_EQ(code_of([&] { test::send(l, key("bob"), chain::TransferFungible{addr("alice"), 0}); }), Errc::ZeroAmount);
  EXPECT_EQ(code_of([&] {
              l.submit_transaction(
                  chain::Transaction::make(l.id(), key("bob"), 5, chain::TransferFungible{addr("alice"), 1}));
            }),
            Errc::BadNonce);
  auto tx = chain::Transaction::make(l.id(), key("bob"), 1, chain::TransferFungible{addr("alice"), 1});
  tx.payload = chain::TransferFungible{addr("bob"), 1};
  EXPECT_EQ(code_of([&] { l.submit_transaction(tx); }), Errc::BadSignature);
  EXPECT_EQ(l.state_digest(), before);
  EXPECT_EQ(l.height(), 0u);
}

TEST(Ledger, ReplayingAnAppliedTransactionIsABadNonce) {
  chain::Ledger l(genesis());
  auto tx = chain::Transaction::make(l.id(), key("alice"), 1, chain::TransferFungible{addr("bob"), 10});
  auto first = l.submit_transaction(tx);
  auto digest = l.state_digest();
  try {
    l.submit_transaction(tx);
    ADD_FAILURE() << "replay accepted";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::BadNonce);
  }
  EXPECT_EQ(l.state_digest(), digest);
  EXPECT_EQ(l.balance(addr("bob")), 60u);
  // The node layer answers retried submissions from the stored receipt.
  EXPECT_EQ(l.find_receipt(tx.digest())->height, first.height);
}

TEST(Ledger, TransactionEncodingRoundTrips) {
  test::DealKeys k;
  auto init = k.init(test::deal_id("x"), ContractKind::TicketEscrow, 0, "t1");
  std::vector<chain::Payload> payloads{
      chain::TransferFungible{addr("a"), 7}, chain::TransferNft{addr("b"), "t1"}, chain::DeployContract{init},
      chain::ContractCall{addr("c"), escrow::DepositCoins{5}},
      chain::ContractCall{addr("c"), escrow::SpecifyTransfer{escrow::CoinPlan{{{addr("a"), addr("b"), 3}}}}}};
  std::uint64_t n = 1;
  for (const auto& p : payloads) {
    auto tx = chain::Transaction::make(ChainId("c"), key("alice"), n++, p);
    auto back = chain::Transaction::decode(tx.encode());
    EXPECT_EQ(back.digest(), tx.digest());
    EXPECT_TRUE(back.signature_valid());
  }
}

// Random transaction streams against an independent balance model.
TEST(LedgerProperty, ConservationAndModelAgreement) {
  const std::vector<std::string> names{"alice", "bob", "carol", "dave"};
  for (std::uint64_t seed = 0; seed < 60; ++seed) {
    std::mt19937_64 rng(seed);
    chain::Ledger l(genesis());
    std::map<std::string, std::uint64_t> model{{"alice", 100}, {"bob", 50}, {"carol", 0}, {"dave", 0}};
    std::string nft_owner = "alice";
    for (int step = 0; step < 80; ++step) {
      const auto& from = names[rng() % names.size()];
      const auto& to = names[rng() % names.size()];
      if (rng() % 5 == 0) {
        bool ok = from == nft_owner;
        try {
          test::send(l, key(from), chain::TransferNft{addr(to), "t1"});
          EXPECT_TRUE(ok);
          nft_owner = to;
        } catch (const Error& e) {
          EXPECT_FALSE(ok);
          EXPECT_EQ(e.code(), Errc::NotOwner);
        }
        continue;
      }
      std::uint64_t amount = rng() % 60;
      bool ok = amount > 0 && model[from] >= amount;
      try {
        test::send(l, key(from), chain::TransferFungible{addr(to), amount});
        EXPECT_TRUE(ok);
        model[from] -= amount;
        model[to] += amount;
      } catch (const Error&) {
        EXPECT_FALSE(ok);
      }
      ASSERT_EQ(l.total_supply(), 150u);
      ASSERT_EQ(l.check_invariants(), "");
    }
    for (const auto& n : names) {
      auto q = l.read_state(chain::BalanceQuery{addr(n)});
      EXPECT_EQ(std::get<std::uint64_t>(q), model[n]) << n << " seed " << seed;
    }
    EXPECT_EQ(std::get<Address>(l.read_state(chain::NftOwnerQuery{"t1"})), addr(nft_owner));
  }
}

TEST(Ledger, EventsAndSnapshot) {
  test::DealKeys k;
  auto g = genesis();
  g.balances[k.p1.address()] = 20;
  g.balances[k.p2.address()] = 20;
  chain::Ledger l(g);
  auto r = test::send(l, k.service, chain::DeployContract{k.init(test::deal_id("d"), ContractKind::CoinEscrow, 0)});
  ASSERT_TRUE(r.deployed);
  auto found = l.contracts_for_deal(test::deal_id("d"), k.service.address());
  EXPECT_EQ(found, std::vector<Address>{*r.deployed});
  EXPECT_TRUE(l.contracts_for_deal(test::deal_id("d"), k.p0.address()).empty());
  auto snap = l.snapshot();
  EXPECT_EQ(snap["height"], 1);
  EXPECT_EQ(snap["digest"], l.state_digest().hex());
  EXPECT_EQ(snap["contracts"][r.deployed->hex()]["phase"], "Deployed");
  EXPECT_TRUE(l.events_since(0).empty());  // deployment itself emits nothing

  auto c = *r.deployed;
  test::call(l, k.p1, c, escrow::DepositCoins{5});
  test::call(l, k.p2, c, escrow::DepositCoins{7});
  auto events = l.events_since(0);
  ASSERT_EQ(events.size(), 2u);
  EXPECT_EQ(events[0].seq, 0u);
  EXPECT_EQ(events[1].seq, 1u);
  EXPECT_EQ(events[0].kind, "Escrowed");
  EXPECT_EQ(l.events_since(1).size(), 1u);
}

}  // namespace
}  // namespace xdeal
