#include <gtest/gtest.h>

#include <httplib.h>

#include <fstream>
#include <thread>

#include "xdeal/gateway/gateway.hpp"

namespace xdeal {
namespace {

using nlohmann::json;

sim::Scenario demo() {
  std::ifstream in(std::string(XDEAL_SCENARIO_DIR) + "/demo.json");
  return sim::Scenario::from_json(json::parse(in));
}

struct Stack {
  std::shared_ptr<sim::World> world;
  std::unique_ptr<sim::LiveSystem> live;
  std::unique_ptr<gateway::Gateway> gw;
  std::thread server;
  int port = 0;

  explicit Stack(double tick_ms, std::string token = {}) {
    world = sim::make_world(demo(), 1, std::nullopt, std::nullopt);
    world->rt->boot();
    live = std::make_unique<sim::LiveSystem>(world, tick_ms);
    start_gateway(std::move(token));
    live->start();
  }
  void start_gateway(std::string token) {
    gateway::Options o;
    o.port = 0;
    o.dev_token = std::move(token);
    o.wait = std::chrono::milliseconds(10000);
    gw = std::make_unique<gateway::Gateway>(*live, o);
    port = gw->bind();
    server = std::thread([this] { gw->serve(); });
  }
  void stop_gateway() {
    gw->stop();
    server.join();
    gw.reset();
  }
  ~Stack() {
    if (gw) stop_gateway();
    live->stop();
  }
  httplib::Client client() const {
    httplib::Client c("127.0.0.1", port);
    c.set_read_timeout(20, 0);
    return c;
  }
};

json body(const httplib::Result& r) { return json::parse(r->body); }

json post(httplib::Client& c, const std::string& path, const json& j, int expect) {
  auto r = c.Post(path, j.dump(), "application/json");
  EXPECT_TRUE(r) << path;
  if (!r) return {};
  EXPECT_EQ(r->status, expect) << path << " " << r->body;
  return body(r);
}

json get(httplib::Client& c, const std::string& path, int expect = 200) {
  auto r = c.Get(path);
  EXPECT_TRUE(r) << path;
  if (!r) return {};
  EXPECT_EQ(r->status, expect) << path << " " << r->body;
  return body(r);
}

// Waits on the long-poll endpoint until `done` holds for the auction view.
json wait_for(httplib::Client& c, const std::string& id, const std::function<bool(const json&)>& done) {
  std::uint64_t version = 0;
  for (int i = 0; i < 200; ++i) {
    auto view = get(c, "/api/auctions/" + id);
    if (done(view)) return view;
    version = get(c, "/api/events?since=" + std::to_string(version) + "&timeout=500")["version"].get<std::uint64_t>();
  }
  ADD_FAILURE() << "condition not reached for " << id;
  return get(c, "/api/auctions/" + id);
}

TEST(Gateway, AuctionLifecycleOverHttp) {
  Stack s(1.0);
  auto c = s.client();
  auto status = get(c, "/api/status");
  EXPECT_EQ(status["chains"].size(), 3u);
  EXPECT_EQ(get(c, "/api/actors").size(), 5u);

  auto created = post(c, "/api/auctions",
                      {{"actor", "auctioneer"}, {"label", "gw-1"}, {"asset", "ticket-1"}, {"ticket_chain", "ticket"},
                       {"chains", {"coin-a", "coin-b"}}, {"rates", {{"coin-a", 1}, {"coin-b", "2/1"}}},
                       {"ends_in", 1500}, {"bidders", {"alice", "bob"}}},
                      201);
  auto id = created["id"].get<std::string>();
  ASSERT_EQ(id.size(), 64u);
  ASSERT_TRUE(created["ticket_contract"].is_string());
  EXPECT_EQ(created["status"], "Open");

  post(c, "/api/auctions/" + id + "/bids", {{"bidder", "alice"}, {"chain", "coin-a"}, {"amount", 100}}, 201);
  post(c, "/api/auctions/" + id + "/bids", {{"bidder", "bob"}, {"chain", "coin-b"}, {"amount", 60}}, 201);
  post(c, "/api/auctions/" + id + "/bids", {{"bidder", "bob"}, {"chain", "coin-z"}, {"amount", 1}}, 400);

  auto view = wait_for(c, id, [](const json& v) { return v["bids"].size() == 2; });
  ASSERT_EQ(view["bids"].size(), 2u);
  int flagged = 0;
  for (const auto& b : view["bids"])
    if (b["highest"].get<bool>()) {
      ++flagged;
      EXPECT_EQ(b["bidder"], "bob");  // 60 at 2/1 beats 100 at 1/1
      EXPECT_EQ(b["normalized"], "120");
    }
  EXPECT_EQ(flagged, 1);

  auto by_contract = get(c, "/api/auctions/by-contract/" + created["ticket_contract"].get<std::string>());
  EXPECT_EQ(by_contract["id"], id);
  auto list = get(c, "/api/auctions");
  ASSERT_EQ(list.size(), 1u);
  EXPECT_EQ(list[0]["bid_count"], 2);

  post(c, "/api/auctions/" + id + "/end", json::object(), 409);  // before ends_at
  wait_for(c, id, [](const json& v) { return v["status"] != "Open"; });
  post(c, "/api/auctions/" + id + "/end", json::object(), 200);
  auto closed = post(c, "/api/auctions/" + id + "/bids", {{"bidder", "alice"}, {"chain", "coin-a"}, {"amount", 5}}, 409);
  EXPECT_EQ(closed["error"], "AuctionClosed");

  auto done = wait_for(c, id, [](const json& v) { return v["status"] == "Committed" || v["status"] == "Aborted"; });
  EXPECT_EQ(done["status"], "Committed");
  EXPECT_EQ(done["conclusion"], "Commit");
  EXPECT_EQ(get(c, "/api/chains/ticket/nft/ticket-1")["owner"], "bob");
  EXPECT_EQ(get(c, "/api/chains/coin-b/balance/auctioneer")["balance"], 60);
  EXPECT_EQ(get(c, "/api/chains/coin-a/balance/alice")["balance"], 500);
  EXPECT_EQ(done["transfers"].size(), 3u);

  auto trace = get(c, "/api/deals/" + id + "/trace");
  bool commit_logged = false;
  for (const auto& r : trace["log"]) commit_logged |= r["kind"] == "Conclusion" && r["conclusion"] == "Commit";
  EXPECT_TRUE(commit_logged);
  EXPECT_EQ(trace["contracts"].size(), 3u);
  EXPECT_FALSE(trace["journal"].empty());

  auto log = post(c, "/api/log", {{"op", "read"}, {"topic", id}, {"from", 0}}, 200);
  EXPECT_EQ(log["records"].size(), trace["log"].size());

  // Restarting the gateway changes nothing it reports.
  auto before = get(c, "/api/auctions/" + id);
  s.stop_gateway();
  s.start_gateway({});
  auto c2 = s.client();
  EXPECT_EQ(get(c2, "/api/auctions/" + id), before);
}

TEST(Gateway, ErrorMapping) {
  Stack s(5.0);
  auto c = s.client();
  auto missing = get(c, "/api/auctions/" + std::string(64, 'a'), 404);
  EXPECT_EQ(missing["error"], "UnknownAuction");
  get(c, "/api/auctions/by-contract/abcd", 404);
  get(c, "/api/chains/nowhere/state", 404);
  get(c, "/api/chains/ticket/nft/ticket-9", 404);
  auto r = c.Post("/api/auctions", "{not json", "application/json");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 400);
  post(c, "/api/auctions",
       {{"actor", "auctioneer"}, {"asset", "ticket-1"}, {"ticket_chain", "ticket"}, {"chains", {"coin-a"}},
        {"ends_in", 100}},
       400);  // no rate for coin-a
  post(c, "/api/auctions", {{"actor", "mallory"}, {"asset", "x"}}, 400);
  EXPECT_EQ(gateway::http_status(Errc::ConclusionExists), 409);
  EXPECT_EQ(gateway::http_status(Errc::NoSuchRecord), 404);
  EXPECT_EQ(gateway::http_status(Errc::ZeroAmount), 400);
}

TEST(Gateway, DevTokenGuardsMutations) {
  Stack s(5.0, "secret");
  auto c = s.client();
  get(c, "/api/status");
  auto denied = c.Post("/api/log", R"({"op":"read","topic":"x"})", "application/json");
  ASSERT_TRUE(denied);
  EXPECT_EQ(denied->status, 401);
  httplib::Headers h{{"X-Dev-Token", "secret"}};
  auto ok = c.Post("/api/log", h, R"({"op":"read","topic":"x"})", "application/json");
  ASSERT_TRUE(ok);
  EXPECT_EQ(ok->status, 200);
}

}  // namespace
}  // namespace xdeal
