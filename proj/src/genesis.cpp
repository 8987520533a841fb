#include "xdeal/chain/genesis.hpp"

#include "xdeal/errors.hpp"

namespace xdeal::chain {

const KeyPair& Keystore::add(const std::string& name) {
  return keys_.insert_or_assign(name, KeyPair::dev(name)).first->second;
}

const KeyPair& Keystore::add(const std::string& name, const Hash256& seed) {
  return keys_.insert_or_assign(name, KeyPair::from_seed(seed)).first->second;
}

const KeyPair& Keystore::at(const std::string& name) const {
  auto it = keys_.find(name);
  if (it == keys_.end()) throw Error(Errc::UnknownAccount, "no key for actor " + name);
  return it->second;
}

std::string Keystore::name_of(const Address& address) const {
  for (const auto& [name, key] : keys_)
    if (key.address() == address) return name;
  return address.short_hex();
}

namespace {

Address resolve(const Keystore& keys, const std::string& who) {
  if (who.starts_with("0x")) return Address::from_hex(who);
  return keys.address(who);
}

}  // namespace

Genesis Genesis::from_json(const nlohmann::json& j) {
  Genesis g;
  try {
    for (const auto& a : j.at("actors")) {
      if (a.is_string()) {
        g.actors.push_back(a.get<std::string>());
        g.keys.add(g.actors.back());
      } else {
        g.actors.push_back(a.at("name").get<std::string>());
        if (a.contains("seed"))
          g.keys.add(g.actors.back(), Hash256::from_hex(a.at("seed").get<std::string>()));
        else
          g.keys.add(g.actors.back());
      }
    }
    for (const auto& c : j.at("chains")) {
      ChainGenesis cg;
      cg.id = ChainId(c.at("id").get<std::string>());
      if (c.contains("balances"))
        for (const auto& [who, amount] : c.at("balances").items())
          cg.balances[resolve(g.keys, who)] += amount.get<std::uint64_t>();
      if (c.contains("nfts"))
        for (const auto& [nft, who] : c.at("nfts").items()) cg.nfts[nft] = resolve(g.keys, who.get<std::string>());
      g.chains.push_back(std::move(cg));
    }
    if (j.contains("log")) {
      for (const auto& op : j.at("log").at("operators")) g.log_operators.push_back(op.get<std::string>());
      g.log_quorum = j.at("log").value("quorum", 1u);
    }
    g.service = j.value("service", std::string("ccsvc"));
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::ScriptError, std::string("genesis: ") + e.what());
  }
  for (const auto& name : g.log_operators)
    if (!g.keys.contains(name)) g.keys.add(name);
  if (!g.keys.contains(g.service)) g.keys.add(g.service);
  if (g.log_operators.empty()) throw Error(Errc::ScriptError, "genesis: no log operators");
  if (g.log_quorum == 0 || g.log_quorum > g.log_operators.size())
    throw Error(Errc::ScriptError, "genesis: invalid log quorum");
  return g;
}

nlohmann::ordered_json Genesis::to_json() const {
  nlohmann::ordered_json j;
  j["actors"] = actors;
  auto& chains_j = j["chains"] = nlohmann::ordered_json::array();
  for (const auto& c : chains) {
    nlohmann::ordered_json cj{{"id", c.id.value}};
    auto& b = cj["balances"] = nlohmann::ordered_json::object();
    for (const auto& [who, amount] : c.balances) b["0x" + who.hex()] = amount;
    auto& n = cj["nfts"] = nlohmann::ordered_json::object();
    for (const auto& [nft, who] : c.nfts) n[nft] = "0x" + who.hex();
    chains_j.push_back(cj);
  }
  j["log"] = {{"operators", log_operators}, {"quorum", log_quorum}};
  j["service"] = service;
  return j;
}

const ChainGenesis& Genesis::chain(const ChainId& id) const {
  for (const auto& c : chains)
    if (c.id == id) return c;
  throw Error(Errc::UnknownChain, id.value);
}

std::vector<PublicKey> Genesis::log_keys() const {
  std::vector<PublicKey> out;
  for (const auto& name : log_operators) out.push_back(keys.at(name).public_key());
  return out;
}

}  // namespace xdeal::chain
