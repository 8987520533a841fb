#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "xdeal/codec.hpp"
#include "xdeal/crypto.hpp"
#include "xdeal/deal/protocol.hpp"

namespace xdeal::log {

enum class RecordKind : std::uint8_t { BidEvent = 1, EndAuction = 2, Conclusion = 3, Info = 4 };

const char* to_string(RecordKind k);
RecordKind record_kind_from_string(std::string_view s);

struct LogRecord {
  std::string topic;
  std::uint64_t offset = 0;  // assigned by the log on append
  RecordKind kind = RecordKind::Info;
  Bytes payload;
  PublicKey producer;
  Signature producer_sig;

  static LogRecord make(std::string topic, RecordKind kind, Bytes payload, const KeyPair& producer);

  /// Bytes the producer signs: everything except the offset.
  Bytes signing_bytes() const;
  bool producer_signature_valid() const;

  /// Full canonical encoding including the offset; attestations bind its hash.
  Bytes encode() const;
  static LogRecord decode(ByteView bytes);
  Hash256 hash() const { return sha256(encode()); }

  /// Decodes the payload of a Conclusion record. Throws DecodeError otherwise.
  ConclusionRecord conclusion() const;

  nlohmann::ordered_json to_json() const;
  static LogRecord from_json(const nlohmann::json& j);

  bool operator==(const LogRecord&) const = default;
};

struct InclusionAttestation {
  std::string topic;
  std::uint64_t offset = 0;
  Hash256 record_hash;
  PublicKey signer;
  Signature log_signature;

  static Bytes signing_message(std::string_view topic, std::uint64_t offset, const Hash256& record_hash);

  void encode(Encoder& enc) const;
  static InclusionAttestation decode(Decoder& dec);
  nlohmann::ordered_json to_json() const;
  static InclusionAttestation from_json(const nlohmann::json& j);

  bool operator==(const InclusionAttestation&) const = default;
};

/// True iff the attestation is signed by one of `trusted_log_keys` and
/// `expected_record_bytes` hashes to the attested record hash.
bool verify_attestation(const InclusionAttestation& att, ByteView expected_record_bytes,
                        std::span<const PublicKey> trusted_log_keys);

/// Quorum form: at least `quorum` attestations from distinct trusted keys,
/// all for the same (topic, offset) and all verifying against the record.
bool verify_attestations(std::span<const InclusionAttestation> atts, ByteView expected_record_bytes,
                         std::span<const PublicKey> trusted_log_keys, std::size_t quorum);

}  // namespace xdeal::log
