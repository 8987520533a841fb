#include "xdeal/sim/nodes.hpp"

namespace xdeal::sim {

void ChainNode::on_request(Runtime& rt, const Inbound& in) {
  if (const auto* s = std::get_if<SubmitTx>(&in.msg)) {
    TxResult r;
    try {
      r.receipt = chain_->submit(s->tx);
      r.ok = true;
    } catch (const Error& e) {
      // A retried transaction that already landed answers with its receipt.
      if (e.code() == Errc::BadNonce) {
        if (auto receipt = chain_->find_receipt(s->tx.digest())) {
          r.ok = true;
          r.receipt = *receipt;
        }
      }
      if (!r.ok) {
        r.error = e.code();
        r.reason = e.reason();
        r.message = e.what();
      }
    }
    rt.reply(name(), in, std::move(r));
  } else if (const auto* q = std::get_if<ChainQueryMsg>(&in.msg)) {
    ChainAnswerMsg a;
    try {
      a.answer = chain_->query(q->query);
      a.ok = true;
    } catch (const Error& e) {
      a.error = e.code();
    }
    rt.reply(name(), in, std::move(a));
  }
}

void LogNode::on_request(Runtime& rt, const Inbound& in) {
  if (const auto* a = std::get_if<LogAppendMsg>(&in.msg)) {
    LogAppendResult r;
    try {
      auto result = log_->append(a->record);
      if (const auto* offset = std::get_if<std::uint64_t>(&result)) {
        r.ok = true;
        r.offset = *offset;
      } else {
        r.error = Errc::ConclusionExists;
        r.exists = std::get<log::ConclusionExists>(result);
      }
    } catch (const Error& e) {
      r.error = e.code();
    }
    rt.reply(name(), in, std::move(r));
  } else if (const auto* rd = std::get_if<LogReadMsg>(&in.msg)) {
    rt.reply(name(), in, LogReadResult{log_->read(rd->topic, rd->from)});
  } else if (const auto* at = std::get_if<LogAttestMsg>(&in.msg)) {
    LogAttestResult r;
    try {
      r.attestations = log_->attest_quorum(at->topic, at->offset);
      r.ok = true;
    } catch (const Error&) {
    }
    rt.reply(name(), in, std::move(r));
  }
}

void TxSubmitter::submit(Runtime& rt, const ChainId& chain, chain::Payload payload, Done done) {
  lanes_[chain].queue.emplace_back(std::move(payload), std::move(done));
  pump(rt, chain);
}

bool TxSubmitter::idle() const {
  for (const auto& [_, lane] : lanes_)
    if (lane.inflight || !lane.queue.empty()) return false;
  return true;
}

void TxSubmitter::pump(Runtime& rt, const ChainId& chain) {
  auto& lane = lanes_[chain];
  if (lane.inflight || lane.queue.empty()) return;
  lane.inflight = true;
  if (!lane.nonce) {
    query_chain(rt, owner_, chain, chain::NonceQuery{key_.address()}, [this, &rt, chain](const ChainAnswerMsg& a) {
      auto& l = lanes_[chain];
      l.inflight = false;
      l.nonce = a.ok ? std::get<std::uint64_t>(a.answer) : 0;
      pump(rt, chain);
    });
    return;
  }
  auto tx = chain::Transaction::make(chain, key_, *lane.nonce + 1, lane.queue.front().first);
  rt.call(owner_, chain_actor(chain), SubmitTx{std::move(tx)}, [this, &rt, chain](const Message& m) {
    const auto& r = std::get<TxResult>(m);
    auto& l = lanes_[chain];
    l.inflight = false;
    if (!r.ok && r.error == Errc::BadNonce) {
      l.nonce.reset();
      pump(rt, chain);
      return;
    }
    if (r.ok) ++*l.nonce;
    auto done = std::move(l.queue.front().second);
    l.queue.pop_front();
    if (done) done(r);
    pump(rt, chain);
  });
}

void query_chain(Runtime& rt, const std::string& owner, const ChainId& chain, chain::Query q,
                 std::function<void(const ChainAnswerMsg&)> done) {
  rt.call(owner, chain_actor(chain), ChainQueryMsg{std::move(q)},
          [done = std::move(done)](const Message& m) { done(std::get<ChainAnswerMsg>(m)); });
}

}  // namespace xdeal::sim
