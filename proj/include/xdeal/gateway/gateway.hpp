#pragma once

// HTTP/JSON gateway over a live system. Every GET is a projection of chain,
// log and service journal state; every POST becomes a party action.
//
//   GET  /api/status                      logical time, chains, version
//   GET  /api/actors                      dev keystore names and addresses
//   GET  /api/chains                      ids, heights, digests
//   GET  /api/chains/{id}/state           ledger snapshot
//   GET  /api/chains/{id}/balance/{who}   who = actor name or address hex
//   GET  /api/chains/{id}/nft/{nft}
//   GET  /api/auctions                    summaries
//   GET  /api/auctions/{id}               detail with the highest bid flagged
//   GET  /api/auctions/by-contract/{addr}
//   POST /api/auctions                    {"actor", "label", "asset", "ticket_chain", "chains", "rates",
//                                          "ends_at" | "ends_in", "bidders", "timeout"?}
//   POST /api/auctions/{id}/bids          {"bidder", "chain", "amount"}
//   POST /api/auctions/{id}/withdraw      {"bidder", "chain"}
//   POST /api/auctions/{id}/end           {"actor"?}
//   GET  /api/deals/{id}/trace
//   GET  /api/events?since=V&timeout=MS   long-poll; returns once the version passes V
//   POST /api/log                         event log wire protocol
//
// Errors: {"error": <code>, "message": <text>} with 400, 404 or 409.

#include <chrono>
#include <memory>
#include <string>

#include "json.hpp"
#include "xdeal/errors.hpp"
#include "xdeal/sim/live.hpp"

namespace xdeal::gateway {

struct Options {
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 picks a free port
  std::string dev_token;  // when set, POSTs need a matching X-Dev-Token header
  std::chrono::milliseconds wait{15000};
};

int http_status(Errc code);

nlohmann::ordered_json auction_view(const sim::World& world, const DealDescriptor& desc, sim::Time now);
nlohmann::ordered_json auction_list(const sim::World& world, sim::Time now);
nlohmann::ordered_json deal_trace(const sim::World& world, const DealDescriptor& desc);

class Gateway {
 public:
  Gateway(sim::LiveSystem& live, Options options);
  ~Gateway();

  /// Binds the listening socket and returns the port.
  int bind();
  /// Serves until stop(). Call bind() first.
  void serve();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace xdeal::gateway
