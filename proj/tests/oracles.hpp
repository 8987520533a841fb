#pragma once

// Independent reference computations used by the unit and acceptance tests.

#include <optional>
#include <random>
#include <vector>

#include "xdeal/auction/auction.hpp"

namespace xdeal::test {

/// a1*n1/d1 versus a2*n2/d2 by cross-multiplication in 128-bit integers.
inline int compare_value(std::uint64_t a1, const auction::Rate& r1, std::uint64_t a2, const auction::Rate& r2) {
  using u128 = unsigned __int128;
  u128 lhs = u128(a1) * r1.num * r2.den;
  u128 rhs = u128(a2) * r2.num * r1.den;
  return lhs < rhs ? -1 : lhs > rhs ? 1 : 0;
}

/// Brute-force lexicographic argmax over (value descending, log_seq ascending):
/// the winner is the bid no other bid strictly beats.
inline std::optional<std::size_t> oracle_winner(const std::vector<auction::Bid>& bids) {
  for (std::size_t i = 0; i < bids.size(); ++i) {
    bool beaten = false;
    for (std::size_t j = 0; j < bids.size() && !beaten; ++j) {
      if (i == j) continue;
      int c = compare_value(bids[j].amount, bids[j].rate, bids[i].amount, bids[i].rate);
      beaten = c > 0 || (c == 0 && bids[j].log_seq < bids[i].log_seq);
    }
    if (!beaten) return i;
  }
  return std::nullopt;
}

/// Random auction: up to 5 bidders over up to 3 chains with random rational
/// rates. About a third of the bids are tie injections: a copy of an earlier
/// bid's value expressed on another chain or at a later log position.
inline std::vector<auction::Bid> random_auction(std::mt19937_64& rng) {
  std::size_t chains = 1 + rng() % 3;
  std::vector<auction::Rate> rates;
  for (std::size_t c = 0; c < chains; ++c) rates.push_back({1 + rng() % 12, 1 + rng() % 12});
  std::size_t bidders = rng() % 6;
  std::vector<auction::Bid> bids;
  std::uint64_t seq = rng() % 4;
  for (std::size_t b = 0; b < bidders; ++b) {
    for (std::size_t c = 0; c < chains; ++c) {
      if (rng() % 2) continue;
      auction::Bid bid;
      bid.bidder.bytes[0] = static_cast<std::uint8_t>(b + 1);
      bid.chain = ChainId("chain-" + std::to_string(c));
      bid.rate = rates[c];
      bid.amount = 1 + rng() % 1000;
      if (!bids.empty() && rng() % 3 == 0) {
        // Tie: the same value as an earlier bid, scaled onto this chain's rate.
        const auto& prev = bids[rng() % bids.size()];
        std::uint64_t num = prev.amount * prev.rate.num * bid.rate.den;
        std::uint64_t den = prev.rate.den * bid.rate.num;
        if (num % den == 0 && num / den > 0) bid.amount = num / den;
      }
      bid.log_seq = seq;
      seq += 1 + rng() % 3;
      bids.push_back(bid);
    }
  }
  std::shuffle(bids.begin(), bids.end(), rng);
  return bids;
}

}  // namespace xdeal::test
