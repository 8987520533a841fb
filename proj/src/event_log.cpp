#include "xdeal/log/event_log.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>

#include "xdeal/errors.hpp"

namespace xdeal::log {
namespace {

std::string segment_name(const std::string& topic) {
  bool plain = !topic.empty() && std::all_of(topic.begin(), topic.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.';
  });
  return (plain ? topic : "x-" + to_hex(as_bytes(topic))) + ".jsonl";
}

Hash256 identity(const LogRecord& r) {
  return Sha256().update(r.signing_bytes()).update(r.producer.view()).update(r.producer_sig.view()).finish();
}

// Cuts a partially written last line so later appends start on a fresh line.
void trim_torn_tail(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (content.empty() || content.back() == '\n') return;
  auto keep = content.find_last_of('\n');
  std::filesystem::resize_file(file, keep == std::string::npos ? 0 : keep + 1);
}

}  // namespace

EventLog::EventLog(std::vector<KeyPair> operators, Options options)
    : operators_(std::move(operators)), options_(std::move(options)) {
  if (operators_.empty()) throw Error(Errc::BadParams, "event log needs an operator key");
  if (options_.dir) {
    std::filesystem::create_directories(*options_.dir);
    for (const auto& entry : std::filesystem::directory_iterator(*options_.dir))
      if (entry.path().extension() == ".jsonl") trim_torn_tail(entry.path());
    for (auto& [topic, records] : load_segments(*options_.dir)) {
      for (auto& r : records) {
        auto expected = topics_[topic].size();
        if (r.offset != expected) throw Error(Errc::IoError, "segment " + topic + " is not contiguous");
        append_locked(std::move(r), false);
      }
    }
  }
}

AppendResult EventLog::append(LogRecord record) {
  std::lock_guard lock(mu_);
  return append_locked(std::move(record), true);
}

AppendResult EventLog::append_locked(LogRecord record, bool persist_record) {
  if (!record.producer_signature_valid()) throw Error(Errc::BadSignature, "producer signature");
  auto key = std::make_pair(record.topic, identity(record));
  if (auto it = seen_.find(key); it != seen_.end()) return it->second;

  if (record.kind == RecordKind::Conclusion) {
    ConclusionRecord c;
    try {
      c = record.conclusion();
    } catch (const Error& e) {
      throw Error(Errc::BadParams, std::string("malformed conclusion: ") + e.what());
    }
    if (record.topic != deal_topic(c.deal_id)) throw Error(Errc::BadParams, "conclusion outside its deal topic");
    if (options_.arbitrate_conclusions) {
      if (auto it = conclusions_.find(c.deal_id); it != conclusions_.end() && !it->second.empty())
        return ConclusionExists{it->second.front().first, it->second.front().second, record.topic};
    }
    conclusions_[c.deal_id].emplace_back(c.kind(), topics_[record.topic].size());
  }

  auto& segment = topics_[record.topic];
  record.offset = segment.size();
  if (persist_record && options_.dir) persist(record);
  seen_.emplace(key, record.offset);
  segment.push_back(std::move(record));
  return segment.back().offset;
}

void EventLog::persist(const LogRecord& record) const {
  std::ofstream out(*options_.dir / segment_name(record.topic), std::ios::app);
  if (!out) throw Error(Errc::IoError, "cannot open segment for " + record.topic);
  out << record.to_json().dump() << '\n';
  out.flush();
}

std::vector<LogRecord> EventLog::read(const std::string& topic, std::uint64_t from_offset) const {
  std::lock_guard lock(mu_);
  auto it = topics_.find(topic);
  if (it == topics_.end() || from_offset >= it->second.size()) return {};
  return {it->second.begin() + static_cast<std::ptrdiff_t>(from_offset), it->second.end()};
}

InclusionAttestation EventLog::attest(const std::string& topic, std::uint64_t offset) const {
  std::lock_guard lock(mu_);
  auto it = topics_.find(topic);
  if (it == topics_.end() || offset >= it->second.size())
    throw Error(Errc::NoSuchRecord, topic + "@" + std::to_string(offset));
  InclusionAttestation att;
  att.topic = topic;
  att.offset = offset;
  att.record_hash = it->second[offset].hash();
  att.signer = operators_.front().public_key();
  att.log_signature = operators_.front().sign(InclusionAttestation::signing_message(topic, offset, att.record_hash));
  return att;
}

std::vector<InclusionAttestation> EventLog::attest_quorum(const std::string& topic, std::uint64_t offset) const {
  auto first = attest(topic, offset);
  std::vector<InclusionAttestation> out{first};
  for (std::size_t i = 1; i < operators_.size(); ++i) {
    auto att = first;
    att.signer = operators_[i].public_key();
    att.log_signature = operators_[i].sign(InclusionAttestation::signing_message(topic, offset, att.record_hash));
    out.push_back(att);
  }
  return out;
}

std::optional<ConclusionExists> EventLog::conclusion_for(const DealId& deal) const {
  std::lock_guard lock(mu_);
  auto it = conclusions_.find(deal);
  if (it == conclusions_.end() || it->second.empty()) return std::nullopt;
  return ConclusionExists{it->second.front().first, it->second.front().second, deal_topic(deal)};
}

std::size_t EventLog::conclusion_count(const DealId& deal) const {
  std::lock_guard lock(mu_);
  auto it = conclusions_.find(deal);
  return it == conclusions_.end() ? 0 : it->second.size();
}

std::vector<std::string> EventLog::topics() const {
  std::lock_guard lock(mu_);
  std::vector<std::string> out;
  for (const auto& [t, _] : topics_) out.push_back(t);
  return out;
}

std::vector<PublicKey> EventLog::operator_keys() const {
  std::vector<PublicKey> out;
  for (const auto& k : operators_) out.push_back(k.public_key());
  return out;
}

std::size_t EventLog::record_count() const {
  std::lock_guard lock(mu_);
  std::size_t n = 0;
  for (const auto& [topic, records] : topics_) n += records.size();
  return n;
}

Hash256 EventLog::digest() const {
  std::lock_guard lock(mu_);
  Sha256 h;
  for (const auto& [topic, records] : topics_)
    for (const auto& r : records) h.update(r.hash().view());
  return h.finish();
}

std::map<std::string, std::vector<LogRecord>> EventLog::load_segments(const std::filesystem::path& dir) {
  std::map<std::string, std::vector<LogRecord>> out;
  if (!std::filesystem::exists(dir)) return out;
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir))
    if (entry.path().extension() == ".jsonl") files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  for (const auto& file : files) {
    std::ifstream in(file);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      try {
        auto r = LogRecord::from_json(nlohmann::json::parse(line));
        out[r.topic].push_back(std::move(r));
      } catch (const std::exception& e) {
        // A torn final line from a crash mid-write is dropped; anything else is corruption.
        if (in.peek() != std::char_traits<char>::eof())
          throw Error(Errc::IoError, "corrupt segment " + file.string() + ": " + e.what());
      }
    }
  }
  return out;
}

nlohmann::ordered_json handle_wire_request(EventLog& log, const nlohmann::json& request) {
  auto fail = [](std::string_view code, const std::string& message) {
    nlohmann::ordered_json r;
    r["ok"] = false;
    r["error"] = code;
    r["message"] = message;
    return r;
  };
  try {
    auto op = request.at("op").get<std::string>();
    if (op == "append") {
      auto result = log.append(LogRecord::from_json(request));
      nlohmann::ordered_json r;
      if (const auto* offset = std::get_if<std::uint64_t>(&result)) {
        r["ok"] = true;
        r["offset"] = *offset;
      } else {
        const auto& c = std::get<ConclusionExists>(result);
        r["ok"] = false;
        r["error"] = "ConclusionExists";
        r["existing"] = to_string(c.existing);
        r["existing_offset"] = c.offset;
      }
      return r;
    }
    if (op == "read") {
      nlohmann::ordered_json r;
      r["ok"] = true;
      auto& records = r["records"] = nlohmann::ordered_json::array();
      for (const auto& rec : log.read(request.at("topic").get<std::string>(), request.value("from", std::uint64_t{0})))
        records.push_back(rec.to_json());
      return r;
    }
    if (op == "attest") {
      nlohmann::ordered_json r;
      r["ok"] = true;
      r["attestation"] =
          log.attest(request.at("topic").get<std::string>(), request.at("offset").get<std::uint64_t>()).to_json();
      return r;
    }
    return fail("BadParams", "unknown op " + op);
  } catch (const Error& e) {
    return fail(to_string(e.code()), e.what());
  } catch (const nlohmann::json::exception& e) {
    return fail("BadParams", e.what());
  }
}

}  // namespace xdeal::log
