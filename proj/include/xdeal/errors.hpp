#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace xdeal {

enum class Errc {
  // chain_sim
  BadSignature,
  BadNonce,
  InsufficientBalance,
  UnknownContract,
  UnknownAccount,
  UnknownNft,
  UnknownChain,
  ContractRejected,
  BadParams,
  // escrow contracts
  WrongPhase,
  NotOwner,
  NotParty,
  ZeroAmount,
  NoDeposit,
  PlanExceedsDeposits,
  IncompleteVote,
  BadAttestation,
  DigestMismatch,
  DuplicateRelay,
  // event log
  ConclusionExists,
  NoSuchRecord,
  // deal engine
  ChainUnreachable,
  DeployFailed,
  Timeout,
  PartyRejected,
  // auction
  MissingRate,
  AuctionClosed,
  ChainNotAccepted,
  NotYetEnded,
  UnknownAuction,
  // harness / io
  ScriptError,
  StepBoundExceeded,
  DecodeError,
  IoError,
};

constexpr std::string_view to_string(Errc code) {
  switch (code) {
    case Errc::BadSignature: return "BadSignature";
    case Errc::BadNonce: return "BadNonce";
    case Errc::InsufficientBalance: return "InsufficientBalance";
    case Errc::UnknownContract: return "UnknownContract";
    case Errc::UnknownAccount: return "UnknownAccount";
    case Errc::UnknownNft: return "UnknownNft";
    case Errc::UnknownChain: return "UnknownChain";
    case Errc::ContractRejected: return "ContractRejected";
    case Errc::BadParams: return "BadParams";
    case Errc::WrongPhase: return "WrongPhase";
    case Errc::NotOwner: return "NotOwner";
    case Errc::NotParty: return "NotParty";
    case Errc::ZeroAmount: return "ZeroAmount";
    case Errc::NoDeposit: return "NoDeposit";
    case Errc::PlanExceedsDeposits: return "PlanExceedsDeposits";
    case Errc::IncompleteVote: return "IncompleteVote";
    case Errc::BadAttestation: return "BadAttestation";
    case Errc::DigestMismatch: return "DigestMismatch";
    case Errc::DuplicateRelay: return "DuplicateRelay";
    case Errc::ConclusionExists: return "ConclusionExists";
    case Errc::NoSuchRecord: return "NoSuchRecord";
    case Errc::ChainUnreachable: return "ChainUnreachable";
    case Errc::DeployFailed: return "DeployFailed";
    case Errc::Timeout: return "Timeout";
    case Errc::PartyRejected: return "PartyRejected";
    case Errc::MissingRate: return "MissingRate";
    case Errc::AuctionClosed: return "AuctionClosed";
    case Errc::ChainNotAccepted: return "ChainNotAccepted";
    case Errc::NotYetEnded: return "NotYetEnded";
    case Errc::UnknownAuction: return "UnknownAuction";
    case Errc::ScriptError: return "ScriptError";
    case Errc::StepBoundExceeded: return "StepBoundExceeded";
    case Errc::DecodeError: return "DecodeError";
    case Errc::IoError: return "IoError";
  }
  return "Unknown";
}

/// Protocol-level failure. `reason()` carries the inner contract error when
/// `code()` is ContractRejected and equals `code()` otherwise.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& detail = {})
      : std::runtime_error(format(code, detail)), code_(code), reason_(code) {}
  Error(Errc code, Errc reason, const std::string& detail)
      : std::runtime_error(format(code, detail)), code_(code), reason_(reason) {}

  Errc code() const noexcept { return code_; }
  Errc reason() const noexcept { return reason_; }

 private:
  static std::string format(Errc code, const std::string& detail) {
    std::string out(to_string(code));
    if (!detail.empty()) {
      out += ": ";
      out += detail;
    }
    return out;
  }

  Errc code_;
  Errc reason_;
};

}  // namespace xdeal
