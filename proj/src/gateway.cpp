#include "xdeal/gateway/gateway.hpp"

#include <httplib.h>

#include <algorithm>

#include "xdeal/auction/auction.hpp"

namespace xdeal::gateway {

using nlohmann::ordered_json;
using sim::World;

namespace {

struct HttpError {
  int status;
  std::string code;
  std::string message;
};

[[noreturn]] void fail(Errc code, std::string message = {}) {
  throw HttpError{http_status(code), std::string(to_string(code)),
                  message.empty() ? std::string(to_string(code)) : std::move(message)};
}

std::string type_of(const DealDescriptor& desc) {
  try {
    return nlohmann::json::parse(desc.app).value("type", std::string());
  } catch (const nlohmann::json::exception&) {
    return {};
  }
}

std::optional<DealDescriptor> find_deal(const World& w, const std::string& hex) {
  for (auto& d : w.journal_deals())
    if (d.id.hex() == hex) return d;
  return std::nullopt;
}

bool published(const World& w, const DealDescriptor& desc) {
  for (const auto& r : w.log->read(desc.topic(), 0))
    if (r.kind == log::RecordKind::Info) return true;
  return false;
}

std::string rate_string(const auction::Rate& r) { return std::to_string(r.num) + "/" + std::to_string(r.den); }

Address resolve_account(const World& w, const std::string& who) {
  if (w.keys->contains(who)) return w.keys->address(who);
  try {
    return Address::from_hex(who);
  } catch (const Error&) {
    fail(Errc::UnknownAccount, "unknown account " + who);
  }
}

nlohmann::json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return nlohmann::json::object();
  try {
    auto j = nlohmann::json::parse(req.body);
    if (!j.is_object()) fail(Errc::BadParams, "request body must be a JSON object");
    return j;
  } catch (const nlohmann::json::parse_error& e) {
    fail(Errc::BadParams, std::string("malformed JSON: ") + e.what());
  }
}

}  // namespace

int http_status(Errc code) {
  switch (code) {
    case Errc::AuctionClosed:
    case Errc::NotYetEnded:
    case Errc::ConclusionExists:
    case Errc::WrongPhase:
    case Errc::DeployFailed:
    case Errc::DuplicateRelay:
      return 409;
    case Errc::UnknownAuction:
    case Errc::UnknownContract:
    case Errc::UnknownChain:
    case Errc::UnknownNft:
    case Errc::UnknownAccount:
    case Errc::NoSuchRecord:
      return 404;
    case Errc::Timeout:
    case Errc::ChainUnreachable:
      return 503;
    default:
      return 400;
  }
}

ordered_json auction_view(const World& w, const DealDescriptor& d, sim::Time now) {
  auto desc = d;
  for (std::size_t i = 0; i < desc.contracts.size(); ++i) desc.contracts[i].address = w.contract_of(desc, i);
  auto terms = auction::AuctionTerms::from_descriptor(desc);
  auto records = w.log->read(desc.topic(), 0);
  auto log = auction::replay(desc, records);
  auto winner = auction::determine_winner(log.bids);

  std::optional<std::string> conclusion;
  for (const auto& r : records) {
    if (r.kind != log::RecordKind::Conclusion) continue;
    try {
      conclusion = to_string(r.conclusion().kind());
      break;
    } catch (const Error&) {
    }
  }

  auto phases = w.phases(desc);
  std::vector<escrow::EscrowPhase> known;
  for (const auto& p : phases)
    if (p) known.push_back(*p);
  if (known.size() != phases.size()) known.clear();
  auto status = auction::status(terms, log, conclusion.has_value(), known, now);

  ordered_json j;
  j["id"] = desc.id.hex();
  j["label"] = terms.label;
  j["auctioneer"] = w.name_of(desc.parties.at(0).account);
  j["asset"] = terms.asset;
  j["ticket_chain"] = terms.ticket_chain.value;
  auto& chains = j["chains"] = ordered_json::array();
  auto& rates = j["rates"] = ordered_json::object();
  for (const auto& c : terms.chains) {
    chains.push_back(c.value);
    rates[c.value] = rate_string(terms.rate(c));
  }
  j["created_at"] = terms.created_at;
  j["ends_at"] = terms.ends_at;
  j["timeout"] = desc.timeout;
  j["concluded_at"] = log.end_offset ? ordered_json(*log.end_offset) : ordered_json();
  j["status"] = auction::to_string(status);
  j["conclusion"] = conclusion ? ordered_json(*conclusion) : ordered_json();
  j["ticket_contract"] = desc.contracts.at(0).address.is_zero() ? ordered_json() : ordered_json(desc.contracts[0].address.hex());

  auto& contracts = j["contracts"] = ordered_json::array();
  auto& transfers = j["transfers"] = ordered_json::array();
  for (std::size_t i = 0; i < desc.contracts.size(); ++i) {
    const auto& c = desc.contracts[i];
    contracts.push_back({{"chain", c.chain.value},
                         {"kind", to_string(c.kind)},
                         {"address", c.address.is_zero() ? ordered_json() : ordered_json(c.address.hex())},
                         {"phase", phases[i] ? ordered_json(escrow::to_string(*phases[i])) : ordered_json()}});
    if (c.address.is_zero()) continue;
    auto plan = w.chains.at(c.chain)->read([&](const chain::Ledger& l) { return escrow::stored_plan(l.contract(c.address)); });
    if (!plan) continue;
    auto pj = escrow::plan_to_json(*plan);
    pj["chain"] = c.chain.value;
    transfers.push_back(pj);
  }

  auto& bids = j["bids"] = ordered_json::array();
  for (std::size_t i = 0; i < log.bids.size(); ++i) {
    const auto& b = log.bids[i];
    bids.push_back({{"bidder", w.name_of(b.bidder)},
                    {"bidder_address", b.bidder.hex()},
                    {"chain", b.chain.value},
                    {"amount", b.amount},
                    {"rate", rate_string(b.rate)},
                    {"normalized", auction::to_string(b.normalized())},
                    {"log_seq", b.log_seq},
                    {"highest", winner && *winner == i}});
  }
  j["highest_bid"] = winner ? bids[*winner] : ordered_json();
  return j;
}

ordered_json auction_list(const World& w, sim::Time now) {
  auto out = ordered_json::array();
  for (const auto& d : w.journal_deals()) {
    if (type_of(d) != "auction") continue;
    auto v = auction_view(w, d, now);
    out.push_back({{"id", v["id"]},
                   {"label", v["label"]},
                   {"asset", v["asset"]},
                   {"auctioneer", v["auctioneer"]},
                   {"status", v["status"]},
                   {"created_at", v["created_at"]},
                   {"ends_at", v["ends_at"]},
                   {"ticket_contract", v["ticket_contract"]},
                   {"bid_count", v["bids"].size()},
                   {"highest_bid", v["highest_bid"]}});
  }
  return out;
}

ordered_json deal_trace(const World& w, const DealDescriptor& d) {
  ordered_json j;
  j["deal"] = d.id.hex();
  j["type"] = type_of(d);
  auto& log_j = j["log"] = ordered_json::array();
  for (const auto& r : w.log->read(d.topic(), 0)) {
    ordered_json e{{"offset", r.offset}, {"kind", log::to_string(r.kind)}, {"producer", w.name_of(address_of(r.producer))}};
    if (r.kind == log::RecordKind::Conclusion) {
      auto c = r.conclusion();
      e["conclusion"] = to_string(c.kind());
      if (const auto* a = std::get_if<AbortRequest>(&c.body)) {
        e["requester"] = w.name_of(address_of(a->requester));
        e["reason"] = a->reason;
      }
    } else if (r.kind != log::RecordKind::Info) {
      try {
        e["payload"] = nlohmann::json::parse(r.payload.begin(), r.payload.end());
      } catch (const nlohmann::json::exception&) {
      }
    }
    log_j.push_back(e);
  }
  auto& chains = j["contracts"] = ordered_json::array();
  auto phases = w.phases(d);
  for (std::size_t i = 0; i < d.contracts.size(); ++i) {
    auto address = w.contract_of(d, i);
    ordered_json c{{"chain", d.contracts[i].chain.value},
                   {"kind", to_string(d.contracts[i].kind)},
                   {"address", address.is_zero() ? ordered_json() : ordered_json(address.hex())},
                   {"phase", phases[i] ? ordered_json(escrow::to_string(*phases[i])) : ordered_json()}};
    auto& events = c["events"] = ordered_json::array();
    if (!address.is_zero()) {
      w.chains.at(d.contracts[i].chain)->read([&](const chain::Ledger& l) {
        for (const auto& ev : l.events_since(0))
          if (ev.contract == address)
            events.push_back({{"height", ev.height}, {"kind", ev.kind}, {"payload", nlohmann::json::parse(ev.payload)}});
        return 0;
      });
    }
    chains.push_back(c);
  }
  auto& journal = j["journal"] = ordered_json::array();
  for (const auto& e : w.journal->entries())
    if (e.value("deal", std::string()) == d.id.hex()) {
      auto entry = ordered_json::parse(e.dump());
      entry.erase("descriptor");  // already shown through the auction view
      journal.push_back(std::move(entry));
    }
  return j;
}

struct Gateway::Impl {
  sim::LiveSystem& live;
  Options options;
  httplib::Server server;
  int port = 0;

  Impl(sim::LiveSystem& l, Options o) : live(l), options(std::move(o)) {}

  void send(httplib::Response& res, int status, const ordered_json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  template <class F>
  httplib::Server::Handler wrap(bool mutating, F f) {
    return [this, mutating, f](const httplib::Request& req, httplib::Response& res) {
      res.set_header("Access-Control-Allow-Origin", "*");
      try {
        if (mutating && !options.dev_token.empty() && req.get_header_value("X-Dev-Token") != options.dev_token)
          throw HttpError{401, "Unauthorized", "missing or wrong X-Dev-Token"};
        f(req, res);
      } catch (const HttpError& e) {
        send(res, e.status, {{"error", e.code}, {"message", e.message}});
      } catch (const Error& e) {
        send(res, http_status(e.code()), {{"error", std::string(to_string(e.code()))}, {"message", e.what()}});
      } catch (const std::exception& e) {
        send(res, 400, {{"error", "BadParams"}, {"message", e.what()}});
      }
    };
  }

  deal::CommandResult run(const std::string& actor, const std::string& op, nlohmann::json params) {
    auto index = live.submit(actor, op, std::move(params));
    auto r = live.wait_result(index, options.wait);
    if (!r) fail(Errc::Timeout, "no response from " + actor);
    if (!r->ok) fail(r->error, r->message);
    return *r;
  }

  DealDescriptor auction_or_404(const std::string& hex) {
    auto d = live.locked([&](World& w) { return find_deal(w, hex); });
    if (!d || type_of(*d) != "auction") fail(Errc::UnknownAuction, "no auction " + hex);
    return *d;
  }

  ordered_json view(const DealDescriptor& d) {
    return live.locked([&](World& w) { return auction_view(w, d, w.rt->now()); });
  }

  void routes() {
    server.Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) {
      res.set_header("Access-Control-Allow-Origin", "*");
      res.set_header("Access-Control-Allow-Headers", "Content-Type, X-Dev-Token");
      res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
      res.status = 204;
    });

    server.Get("/api/status", wrap(false, [this](const httplib::Request&, httplib::Response& res) {
      auto body = live.locked([&](World& w) {
        ordered_json j{{"now", w.rt->now()}, {"tick_ms", live.tick_ms()}, {"service", w.genesis.service}};
        auto& chains = j["chains"] = ordered_json::array();
        for (const auto& [id, c] : w.chains) chains.push_back(id.value);
        j["version"] = live.version();
        return j;
      });
      send(res, 200, body);
    }));

    server.Get("/api/actors", wrap(false, [this](const httplib::Request&, httplib::Response& res) {
      auto body = live.locked([&](World& w) {
        auto out = ordered_json::array();
        for (const auto& name : w.genesis.actors) {
          std::string role = w.parties.count(name) ? "party" : name == w.genesis.service ? "service" : "log";
          out.push_back({{"name", name}, {"address", w.keys->address(name).hex()}, {"role", role}});
        }
        return out;
      });
      send(res, 200, body);
    }));

    server.Get("/api/chains", wrap(false, [this](const httplib::Request&, httplib::Response& res) {
      auto body = live.locked([&](World& w) {
        auto out = ordered_json::array();
        for (const auto& [id, c] : w.chains)
          c->read([&](const chain::Ledger& l) {
            out.push_back({{"id", id.value}, {"height", l.height()}, {"digest", l.state_digest().hex()}});
            return 0;
          });
        return out;
      });
      send(res, 200, body);
    }));

    auto chain_of = [](World& w, const std::string& id) {
      auto it = w.chains.find(ChainId(id));
      if (it == w.chains.end()) fail(Errc::UnknownChain, "no chain " + id);
      return it->second;
    };

    server.Get(R"(/api/chains/([^/]+)/state)", wrap(false, [this, chain_of](const httplib::Request& req, httplib::Response& res) {
      auto body = live.locked([&](World& w) {
        return chain_of(w, req.matches[1])->read([](const chain::Ledger& l) { return l.snapshot(); });
      });
      send(res, 200, body);
    }));

    server.Get(R"(/api/chains/([^/]+)/balance/([^/]+))",
               wrap(false, [this, chain_of](const httplib::Request& req, httplib::Response& res) {
                 auto body = live.locked([&](World& w) {
                   auto c = chain_of(w, req.matches[1]);
                   auto who = resolve_account(w, req.matches[2]);
                   auto amount = c->read([&](const chain::Ledger& l) {
                     auto it = l.accounts().find(who);
                     return it == l.accounts().end() ? std::uint64_t{0} : it->second;
                   });
                   return ordered_json{{"chain", std::string(req.matches[1])},
                                       {"account", w.name_of(who)},
                                       {"address", who.hex()},
                                       {"balance", amount}};
                 });
                 send(res, 200, body);
               }));

    server.Get(R"(/api/chains/([^/]+)/nft/([^/]+))",
               wrap(false, [this, chain_of](const httplib::Request& req, httplib::Response& res) {
                 auto body = live.locked([&](World& w) {
                   auto c = chain_of(w, req.matches[1]);
                   NftId nft = req.matches[2];
                   auto owner = c->read([&](const chain::Ledger& l) -> std::optional<Address> {
                     auto it = l.nfts().find(nft);
                     if (it == l.nfts().end()) return std::nullopt;
                     return it->second;
                   });
                   if (!owner) fail(Errc::UnknownNft, "no nft " + nft);
                   return ordered_json{{"chain", std::string(req.matches[1])},
                                       {"nft", nft},
                                       {"owner", w.name_of(*owner)},
                                       {"owner_address", owner->hex()}};
                 });
                 send(res, 200, body);
               }));

    server.Get("/api/auctions", wrap(false, [this](const httplib::Request&, httplib::Response& res) {
      send(res, 200, live.locked([&](World& w) { return auction_list(w, w.rt->now()); }));
    }));

    server.Get(R"(/api/auctions/by-contract/([0-9a-fA-F]+))",
               wrap(false, [this](const httplib::Request& req, httplib::Response& res) {
                 std::string addr = req.matches[1];
                 std::transform(addr.begin(), addr.end(), addr.begin(), ::tolower);
                 auto body = live.locked([&](World& w) -> std::optional<ordered_json> {
                   for (const auto& d : w.journal_deals()) {
                     if (type_of(d) != "auction") continue;
                     for (std::size_t i = 0; i < d.contracts.size(); ++i)
                       if (w.contract_of(d, i).hex() == addr) return auction_view(w, d, w.rt->now());
                   }
                   return std::nullopt;
                 });
                 if (!body) fail(Errc::UnknownAuction, "no auction uses contract " + addr);
                 send(res, 200, *body);
               }));

    server.Get(R"(/api/auctions/([0-9a-f]{64}))", wrap(false, [this](const httplib::Request& req, httplib::Response& res) {
      send(res, 200, view(auction_or_404(req.matches[1])));
    }));

    server.Post("/api/auctions", wrap(true, [this](const httplib::Request& req, httplib::Response& res) {
      auto body = parse_body(req);
      auto actor = body.value("actor", std::string("auctioneer"));
      auto params = body;
      params.erase("actor");
      if (params.contains("ends_in")) {
        auto now = live.locked([](World& w) { return w.rt->now(); });
        params["ends_at"] = now + params.at("ends_in").get<sim::Time>();
        params.erase("ends_in");
      }
      if (!params.contains("bidders")) {
        params["bidders"] = live.locked([&](World& w) {
          auto out = nlohmann::json::array();
          for (const auto& [name, p] : w.parties)
            if (name != actor) out.push_back(name);
          return out;
        });
      }
      auto r = run(actor, "create_auction", params);
      auto hex = r.data.at("deal_id").get<std::string>();
      auto deadline = std::chrono::steady_clock::now() + options.wait;
      std::uint64_t seen = 0;
      while (true) {
        auto d = live.locked([&](World& w) -> std::optional<DealDescriptor> {
          auto found = find_deal(w, hex);
          if (found && published(w, *found)) return found;
          return std::nullopt;
        });
        if (d) {
          send(res, 201, view(*d));
          return;
        }
        if (std::chrono::steady_clock::now() > deadline) fail(Errc::Timeout, "auction not cleared yet");
        seen = live.wait_version(seen, std::chrono::milliseconds(200));
      }
    }));

    server.Post(R"(/api/auctions/([0-9a-f]{64})/bids)", wrap(true, [this](const httplib::Request& req, httplib::Response& res) {
      auto d = auction_or_404(req.matches[1]);
      auto body = parse_body(req);
      auto bidder = body.at("bidder").get<std::string>();
      auto r = run(bidder, "bid",
                   {{"auction", d.id.hex()}, {"chain", body.at("chain")}, {"amount", body.at("amount")}});
      send(res, 201, {{"accepted", true}, {"height", r.data.value("height", 0)}, {"auction", view(d)}});
    }));

    server.Post(R"(/api/auctions/([0-9a-f]{64})/withdraw)",
                wrap(true, [this](const httplib::Request& req, httplib::Response& res) {
                  auto d = auction_or_404(req.matches[1]);
                  auto body = parse_body(req);
                  run(body.at("bidder").get<std::string>(), "withdraw", {{"auction", d.id.hex()}, {"chain", body.at("chain")}});
                  send(res, 200, {{"withdrawn", true}, {"auction", view(d)}});
                }));

    server.Post(R"(/api/auctions/([0-9a-f]{64})/end)", wrap(true, [this](const httplib::Request& req, httplib::Response& res) {
      auto d = auction_or_404(req.matches[1]);
      auto body = parse_body(req);
      auto actor = body.value("actor", std::string());
      if (actor.empty()) actor = live.locked([&](World& w) { return w.name_of(d.parties.at(0).account); });
      run(actor, "end_auction", {{"auction", d.id.hex()}});
      send(res, 200, {{"ended", true}, {"auction", view(d)}});
    }));

    server.Get(R"(/api/deals/([0-9a-f]{64})/trace)", wrap(false, [this](const httplib::Request& req, httplib::Response& res) {
      auto body = live.locked([&](World& w) -> std::optional<ordered_json> {
        auto d = find_deal(w, req.matches[1]);
        if (!d) return std::nullopt;
        return deal_trace(w, *d);
      });
      if (!body) fail(Errc::BadParams, "no deal " + std::string(req.matches[1]));
      send(res, 200, *body);
    }));

    server.Get("/api/events", wrap(false, [this](const httplib::Request& req, httplib::Response& res) {
      std::uint64_t since = req.has_param("since") ? std::stoull(req.get_param_value("since")) : 0;
      std::uint64_t timeout = req.has_param("timeout") ? std::stoull(req.get_param_value("timeout")) : 1000;
      auto version = live.wait_version(since, std::chrono::milliseconds(std::min<std::uint64_t>(timeout, 30000)));
      auto now = live.locked([](World& w) { return w.rt->now(); });
      send(res, 200, {{"version", version}, {"changed", version > since}, {"now", now}});
    }));

    server.Post("/api/log", wrap(true, [this](const httplib::Request& req, httplib::Response& res) {
      auto body = parse_body(req);
      auto out = live.locked([&](World& w) { return log::handle_wire_request(*w.log, body); });
      int status = out.value("ok", false) ? 200 : out.value("error", "") == "ConclusionExists" ? 409 : 400;
      send(res, status, out);
    }));
  }
};

Gateway::Gateway(sim::LiveSystem& live, Options options) : impl_(std::make_unique<Impl>(live, std::move(options))) {
  impl_->routes();
}

Gateway::~Gateway() { stop(); }

int Gateway::bind() {
  if (impl_->options.port == 0)
    impl_->port = impl_->server.bind_to_any_port(impl_->options.host);
  else
    impl_->port = impl_->server.bind_to_port(impl_->options.host, impl_->options.port) ? impl_->options.port : -1;
  if (impl_->port < 0) throw Error(Errc::IoError, "cannot bind " + impl_->options.host);
  return impl_->port;
}

void Gateway::serve() { impl_->server.listen_after_bind(); }

void Gateway::stop() {
  if (impl_) impl_->server.stop();
}

}  // namespace xdeal::gateway
