#include "xdeal/log/record.hpp"

#include <algorithm>
#include <set>

#include "xdeal/errors.hpp"

namespace xdeal::log {
namespace {

constexpr std::string_view kRecordTag = "xdeal/log-record/v1";
constexpr std::string_view kAttestTag = "xdeal/inclusion/v1";

}  // namespace

const char* to_string(RecordKind k) {
  switch (k) {
    case RecordKind::BidEvent: return "BidEvent";
    case RecordKind::EndAuction: return "EndAuction";
    case RecordKind::Conclusion: return "Conclusion";
    case RecordKind::Info: return "Info";
  }
  return "Unknown";
}

RecordKind record_kind_from_string(std::string_view s) {
  for (auto k : {RecordKind::BidEvent, RecordKind::EndAuction, RecordKind::Conclusion, RecordKind::Info})
    if (s == to_string(k)) return k;
  throw Error(Errc::DecodeError, "unknown record kind: " + std::string(s));
}

LogRecord LogRecord::make(std::string topic, RecordKind kind, Bytes payload, const KeyPair& producer) {
  LogRecord r;
  r.topic = std::move(topic);
  r.kind = kind;
  r.payload = std::move(payload);
  r.producer = producer.public_key();
  r.producer_sig = producer.sign(r.signing_bytes());
  return r;
}

Bytes LogRecord::signing_bytes() const {
  Encoder enc;
  enc.str(kRecordTag).str(topic).u8(static_cast<std::uint8_t>(kind)).bytes(payload);
  return enc.take();
}

bool LogRecord::producer_signature_valid() const { return verify(producer, signing_bytes(), producer_sig); }

Bytes LogRecord::encode() const {
  Encoder enc;
  enc.str(topic).u64(offset).u8(static_cast<std::uint8_t>(kind)).bytes(payload).fixed(producer).fixed(producer_sig);
  return enc.take();
}

LogRecord LogRecord::decode(ByteView bytes) {
  Decoder dec(bytes);
  LogRecord r;
  r.topic = dec.str();
  r.offset = dec.u64();
  auto kind = dec.u8();
  if (kind < 1 || kind > 4) throw Error(Errc::DecodeError, "bad record kind");
  r.kind = static_cast<RecordKind>(kind);
  r.payload = dec.bytes();
  r.producer = dec.fixed<PublicKey>();
  r.producer_sig = dec.fixed<Signature>();
  dec.expect_done();
  return r;
}

ConclusionRecord LogRecord::conclusion() const {
  if (kind != RecordKind::Conclusion) throw Error(Errc::DecodeError, "not a conclusion record");
  return ConclusionRecord::decode(payload);
}

nlohmann::ordered_json LogRecord::to_json() const {
  nlohmann::ordered_json j;
  j["topic"] = topic;
  j["offset"] = offset;
  j["kind"] = to_string(kind);
  j["payload"] = to_hex(payload);
  j["producer"] = producer.hex();
  j["producer_sig"] = producer_sig.hex();
  return j;
}

LogRecord LogRecord::from_json(const nlohmann::json& j) {
  LogRecord r;
  r.topic = j.at("topic").get<std::string>();
  r.offset = j.value("offset", std::uint64_t{0});
  r.kind = record_kind_from_string(j.at("kind").get<std::string>());
  r.payload = from_hex(j.at("payload").get<std::string>());
  r.producer = PublicKey::from_hex(j.at("producer").get<std::string>());
  r.producer_sig = Signature::from_hex(j.at("producer_sig").get<std::string>());
  return r;
}

Bytes InclusionAttestation::signing_message(std::string_view topic, std::uint64_t offset,
                                            const Hash256& record_hash) {
  Encoder enc;
  enc.str(kAttestTag).str(topic).u64(offset).fixed(record_hash);
  return enc.take();
}

void InclusionAttestation::encode(Encoder& enc) const {
  enc.str(topic).u64(offset).fixed(record_hash).fixed(signer).fixed(log_signature);
}

InclusionAttestation InclusionAttestation::decode(Decoder& dec) {
  InclusionAttestation a;
  a.topic = dec.str();
  a.offset = dec.u64();
  a.record_hash = dec.fixed<Hash256>();
  a.signer = dec.fixed<PublicKey>();
  a.log_signature = dec.fixed<Signature>();
  return a;
}

nlohmann::ordered_json InclusionAttestation::to_json() const {
  nlohmann::ordered_json j;
  j["topic"] = topic;
  j["offset"] = offset;
  j["record_hash"] = record_hash.hex();
  j["signer"] = signer.hex();
  j["log_signature"] = log_signature.hex();
  return j;
}

InclusionAttestation InclusionAttestation::from_json(const nlohmann::json& j) {
  InclusionAttestation a;
  a.topic = j.at("topic").get<std::string>();
  a.offset = j.at("offset").get<std::uint64_t>();
  a.record_hash = Hash256::from_hex(j.at("record_hash").get<std::string>());
  a.signer = PublicKey::from_hex(j.at("signer").get<std::string>());
  a.log_signature = Signature::from_hex(j.at("log_signature").get<std::string>());
  return a;
}

bool verify_attestation(const InclusionAttestation& att, ByteView expected_record_bytes,
                        std::span<const PublicKey> trusted_log_keys) {
  if (std::find(trusted_log_keys.begin(), trusted_log_keys.end(), att.signer) == trusted_log_keys.end())
    return false;
  if (sha256(expected_record_bytes) != att.record_hash) return false;
  return verify(att.signer, InclusionAttestation::signing_message(att.topic, att.offset, att.record_hash),
                att.log_signature);
}

bool verify_attestations(std::span<const InclusionAttestation> atts, ByteView expected_record_bytes,
                         std::span<const PublicKey> trusted_log_keys, std::size_t quorum) {
  if (quorum == 0 || atts.empty()) return false;
  std::set<PublicKey> signers;
  for (const auto& att : atts) {
    if (att.topic != atts.front().topic || att.offset != atts.front().offset) return false;
    if (!verify_attestation(att, expected_record_bytes, trusted_log_keys)) return false;
    signers.insert(att.signer);
  }
  return signers.size() >= quorum;
}

}  // namespace xdeal::log
