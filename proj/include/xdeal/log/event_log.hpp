#pragma once

#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"
#include "xdeal/log/record.hpp"

namespace xdeal::log {

/// Returned when a conclusion for the deal is already on the log.
struct ConclusionExists {
  ConclusionKind existing = ConclusionKind::Commit;
  std::uint64_t offset = 0;
  std::string topic;
};

using AppendResult = std::variant<std::uint64_t, ConclusionExists>;

/// Append-only, topic-partitioned event log. Conclusion records are
/// arbitrated at append time: the first conclusion for a deal wins and every
/// later one is refused, whichever kind it carries.
///
/// Re-appending a byte-identical signed record returns its original offset,
/// so producers can retry appends whose acknowledgement was lost.
class EventLog {
 public:
  struct Options {
    bool arbitrate_conclusions = true;  // false only for negative-control runs
    std::optional<std::filesystem::path> dir;  // segment files, one per topic
  };

  /// `operators[0]` signs single attestations; all of them sign quorum sets.
  EventLog(std::vector<KeyPair> operators, Options options);
  explicit EventLog(KeyPair op) : EventLog(std::vector<KeyPair>{std::move(op)}, Options{}) {}

  /// Throws Error(BadSignature) on a bad producer signature and
  /// Error(BadParams) on a malformed conclusion.
  AppendResult append(LogRecord record);

  std::vector<LogRecord> read(const std::string& topic, std::uint64_t from_offset) const;
  InclusionAttestation attest(const std::string& topic, std::uint64_t offset) const;  // throws NoSuchRecord
  std::vector<InclusionAttestation> attest_quorum(const std::string& topic, std::uint64_t offset) const;

  /// First conclusion appended for `deal`, if any.
  std::optional<ConclusionExists> conclusion_for(const DealId& deal) const;
  std::size_t conclusion_count(const DealId& deal) const;

  std::vector<std::string> topics() const;
  std::size_t record_count() const;
  std::vector<PublicKey> operator_keys() const;
  bool arbitrating() const { return options_.arbitrate_conclusions; }
  Hash256 digest() const;

  /// Loads persisted segments from a directory without a signing key, for
  /// read-only inspection.
  static std::map<std::string, std::vector<LogRecord>> load_segments(const std::filesystem::path& dir);

 private:
  AppendResult append_locked(LogRecord record, bool persist);
  void persist(const LogRecord& record) const;

  std::vector<KeyPair> operators_;
  Options options_;
  mutable std::mutex mu_;
  std::map<std::string, std::vector<LogRecord>> topics_;
  std::map<DealId, std::vector<std::pair<ConclusionKind, std::uint64_t>>> conclusions_;
  std::map<std::pair<std::string, Hash256>, std::uint64_t> seen_;
};

/// JSON request/response wire protocol. Field order of every response is
/// fixed; hashes, keys, signatures and payloads are lowercase hex.
///
///   {"op":"append","topic":T,"kind":K,"payload":H,"producer":H,"producer_sig":H}
///     -> {"ok":true,"offset":N}
///      | {"ok":false,"error":"ConclusionExists","existing":"Commit"|"Abort","existing_offset":N}
///   {"op":"read","topic":T,"from":N}   -> {"ok":true,"records":[record...]}
///   {"op":"attest","topic":T,"offset":N} -> {"ok":true,"attestation":{...}}
///   any failure -> {"ok":false,"error":<code>,"message":<text>}
nlohmann::ordered_json handle_wire_request(EventLog& log, const nlohmann::json& request);

}  // namespace xdeal::log
