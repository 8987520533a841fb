#pragma once

// Client acting for one deal party: honours escrow obligations, specifies
// transfers when it is the specifier, validates and signs commit votes, and
// runs scripted user actions (create, bid, withdraw, end, abort).

#include <functional>
#include <map>
#include <memory>
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

/// Party state that survives crashes.
struct PartyStore {
  std::map<DealId, DealDescriptor> deals;
  std::map<std::string, DealId> labels;
  std::set<DealId> obligations_sent;
};

struct CommandResult {
  std::uint64_t index = 0;
  std::string actor;
  std::string op;
  bool ok = false;
  Errc error = Errc::ScriptError;
  std::string message;
  nlohmann::json data = nlohmann::json::object();
};

class PartyClient final : public sim::Actor {
 public:
  struct Config {
    std::string name;
    KeyPair key;
    std::string service = "ccsvc";
    /// Signs the commit vote, logs its own abort anyway and then tries to
    /// finish contracts with whichever conclusion suits each one.
    bool equivocate = false;
    sim::Time poll = 20;
    sim::Time wait_for_deal = 3000;
  };

  PartyClient(Config config, std::shared_ptr<PartyStore> store, std::shared_ptr<const AppRegistry> apps);

  void start(sim::Runtime& rt) override;
  void on_request(sim::Runtime& rt, const sim::Inbound& in) override;
  void on_timer(sim::Runtime& rt, std::uint64_t tag) override;
  void on_crash() override;
  bool busy() const override;

  std::function<void(const CommandResult&)> on_result;

  const KeyPair& key() const { return config_.key; }
  const PartyStore& store() const { return *store_; }

 private:
  struct Waiting {
    sim::Command cmd;
    sim::Time since = 0;
  };
  struct Pending {
    std::string caller;
    std::uint64_t rpc = 0;
    sim::ValidateAndSign req;
  };
  struct Seen {
    ConclusionKind kind;
    Bytes record;
    std::vector<log::InclusionAttestation> atts;
  };
  struct Equivocation {
    std::vector<Bytes> plan_set;
    std::optional<log::LogRecord> own_abort;  // as appended, offset unset when refused
    bool own_abort_logged = false;
    std::map<std::uint64_t, Seen> seen;
    std::set<ConclusionKind> handled;
    bool forged = false;
    std::vector<bool> abort_side;
    bool attesting = false;
    bool reading = false;
  };

  void announce(sim::Runtime& rt, const sim::Inbound& in, const DealDescriptor& desc);
  void specify(sim::Runtime& rt, const sim::Inbound& in, const sim::SpecifyRequest& req);
  void sign(sim::Runtime& rt, std::string caller, std::uint64_t rpc, const sim::ValidateAndSign& req);
  void command(sim::Runtime& rt, const sim::Command& cmd);
  bool run_waiting(sim::Runtime& rt, const Waiting& w);

  void begin_equivocation(sim::Runtime& rt, const DealDescriptor& desc, std::vector<Bytes> plan_set);
  void poll_equivocation(sim::Runtime& rt, const DealId& id);
  void act_equivocation(sim::Runtime& rt, const DealId& id);

  std::optional<DealId> resolve(const nlohmann::json& ref) const;
  void finish(const sim::Command& cmd, bool ok, Errc error, std::string message, nlohmann::json data = {});

  Config config_;
  std::shared_ptr<PartyStore> store_;
  std::shared_ptr<const AppRegistry> apps_;
  sim::TxSubmitter submitter_;

  std::map<std::uint64_t, sim::Command> actions_;
  std::vector<Waiting> waiting_;
  std::vector<Pending> unsigned_;
  std::set<DealId> specifying_;
  std::map<DealId, Equivocation> equivocations_;
  bool ticking_ = false;
};

}  // namespace xdeal::deal
