#pragma once

#include <compare>
#include <cstdint>
#include <string>

namespace xdeal {

struct ChainId {
  std::string value;

  ChainId() = default;
  explicit ChainId(std::string v) : value(std::move(v)) {}
  auto operator<=>(const ChainId&) const = default;
  const std::string& str() const { return value; }
};

using NftId = std::string;

enum class ContractKind : std::uint8_t { TicketEscrow = 1, CoinEscrow = 2 };

constexpr const char* to_string(ContractKind k) {
  return k == ContractKind::TicketEscrow ? "TicketEscrow" : "CoinEscrow";
}

}  // namespace xdeal
