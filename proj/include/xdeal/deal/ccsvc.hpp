#pragma once

// Cross-chain service: clears deals onto chains, relays escrow events to the
// log, drives the all-party commit vote and finishes every contract with the
// conclusion the log settled on.

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "xdeal/chain/genesis.hpp"
#include "xdeal/deal/app.hpp"
#include "xdeal/sim/nodes.hpp"
#include "xdeal/sim/runtime.hpp"

namespace xdeal::deal {

/// Append-only JSON-lines journal that survives service crashes. With a file
/// path, entries are also written to disk and reloaded on construction.
class Journal {
 public:
  Journal() = default;
  explicit Journal(std::filesystem::path file);

  void append(nlohmann::json entry);
  std::vector<nlohmann::json> entries() const;

 private:
  mutable std::mutex mu_;
  std::optional<std::filesystem::path> file_;
  std::vector<nlohmann::json> entries_;
};

/// Read-only view of one deal as the service currently sees it.
struct DealSnapshot {
  DealDescriptor desc;
  std::string app;
  bool published = false;
  bool done = false;
  bool failed = false;
  std::optional<ConclusionKind> conclusion;
  std::vector<bool> terminal;
};

class CcSvc final : public sim::Actor {
 public:
  struct Config {
    std::string name = "ccsvc";
    KeyPair key;
    std::vector<PublicKey> log_keys;
    std::uint32_t log_quorum = 1;
    sim::Time tick = 10;
    sim::Time respecify_after = 200;
  };

  CcSvc(Config config, std::shared_ptr<Journal> journal, std::shared_ptr<const AppRegistry> apps,
        std::shared_ptr<const chain::Keystore> directory);
  ~CcSvc() override;

  void start(sim::Runtime& rt) override;
  void on_request(sim::Runtime& rt, const sim::Inbound& in) override;
  void on_timer(sim::Runtime& rt, std::uint64_t tag) override;
  void on_crash() override;

  const PublicKey& key() const { return key_.public_key(); }
  std::vector<DealSnapshot> deals() const;

 private:
  struct DealRun;

  void load_journal();
  void reconcile(sim::Runtime& rt, DealRun& d);
  void recover(sim::Runtime& rt, DealRun& d);
  bool clear(sim::Runtime& rt, DealRun& d);
  void announce(sim::Runtime& rt, DealRun& d);
  void refresh_log(sim::Runtime& rt, DealRun& d);
  void refresh_states(sim::Runtime& rt, DealRun& d);
  void relay(sim::Runtime& rt, DealRun& d);
  void relay_next(sim::Runtime& rt, DealRun& d, std::size_t contract);
  void progress(sim::Runtime& rt, DealRun& d);
  void request_signatures(sim::Runtime& rt, DealRun& d, const std::vector<Bytes>& plan_set);
  void append_conclusion(sim::Runtime& rt, DealRun& d, ConclusionRecord c);
  void finish(sim::Runtime& rt, DealRun& d);
  void mark_terminal(sim::Runtime& rt, DealRun& d, std::size_t index, escrow::EscrowPhase phase);

  void handle_create(sim::Runtime& rt, const sim::Inbound& in, const sim::CreateDealMsg& msg);
  void run_prechecks(sim::Runtime& rt, std::string caller, std::uint64_t rpc, std::shared_ptr<DealDescriptor> desc,
                     std::shared_ptr<const DealApp> app, std::shared_ptr<std::vector<Precheck>> checks,
                     std::size_t next);
  void register_deal(sim::Runtime& rt, const std::string& caller, std::uint64_t rpc, const DealDescriptor& desc,
                     std::shared_ptr<const DealApp> app);
  void handle_end(sim::Runtime& rt, const sim::Inbound& in, const sim::EndAuctionMsg& msg);
  void handle_abort(sim::Runtime& rt, const sim::Inbound& in, const sim::AbortMsg& msg);

  std::optional<std::string> actor_for(const Address& account, const sim::Runtime& rt) const;

  KeyPair key_;
  Config config_;
  std::shared_ptr<Journal> journal_;
  std::shared_ptr<const AppRegistry> apps_;
  std::shared_ptr<const chain::Keystore> directory_;
  std::map<Address, std::string> names_;
  sim::TxSubmitter submitter_;
  std::map<DealId, std::unique_ptr<DealRun>> deals_;
};

}  // namespace xdeal::deal
