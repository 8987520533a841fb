#pragma once

#include <deque>
#include <functional>
#include <map>
#include <memory>

#include "xdeal/chain/ledger.hpp"
#include "xdeal/log/event_log.hpp"
#include "xdeal/sim/runtime.hpp"

namespace xdeal::sim {

inline std::string chain_actor(const ChainId& id) { return "chain:" + id.value; }
inline constexpr const char* kLogActor = "log";

/// Serves transactions and queries for one simulated chain.
class ChainNode final : public Actor {
 public:
  explicit ChainNode(std::shared_ptr<chain::LocalChain> chain)
      : Actor(chain_actor(chain->id())), chain_(std::move(chain)) {}

  void on_request(Runtime& rt, const Inbound& in) override;
  const std::shared_ptr<chain::LocalChain>& chain() const { return chain_; }

 private:
  std::shared_ptr<chain::LocalChain> chain_;
};

/// Serves the event log's append/read/attest operations.
class LogNode final : public Actor {
 public:
  explicit LogNode(std::shared_ptr<log::EventLog> log) : Actor(kLogActor), log_(std::move(log)) {}

  void on_request(Runtime& rt, const Inbound& in) override;
  const std::shared_ptr<log::EventLog>& event_log() const { return log_; }

 private:
  std::shared_ptr<log::EventLog> log_;
};

/// Per-chain FIFO of one actor's transactions. One transaction per chain is
/// outstanding at a time; nonces are fetched from the chain on first use and
/// again after a BadNonce rejection.
class TxSubmitter {
 public:
  using Done = std::function<void(const TxResult&)>;

  TxSubmitter(std::string owner, KeyPair key) : owner_(std::move(owner)), key_(std::move(key)) {}

  void submit(Runtime& rt, const ChainId& chain, chain::Payload payload, Done done);
  bool idle() const;
  void reset() { lanes_.clear(); }
  const KeyPair& key() const { return key_; }

 private:
  struct Lane {
    std::optional<std::uint64_t> nonce;
    std::deque<std::pair<chain::Payload, Done>> queue;
    bool inflight = false;
  };
  void pump(Runtime& rt, const ChainId& chain);

  std::string owner_;
  KeyPair key_;
  std::map<ChainId, Lane> lanes_;
};

void query_chain(Runtime& rt, const std::string& owner, const ChainId& chain, chain::Query q,
                 std::function<void(const ChainAnswerMsg&)> done);

}  // namespace xdeal::sim
