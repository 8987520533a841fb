#include "xdeal/sim/live.hpp"

namespace xdeal::sim {

LiveSystem::LiveSystem(std::shared_ptr<World> world, double tick_ms) : world_(std::move(world)), tick_ms_(tick_ms) {
  auto record = [this](const deal::CommandResult& r) {
    results_[r.index] = r;  // runs on the driver thread with mu_ held
    ++version_;
    cv_.notify_all();
  };
  for (auto& [name, p] : world_->parties) p->on_result = record;
  world_->rt->on_command_lost = [record](const std::string& actor, const Command& cmd) {
    record(deal::CommandResult{cmd.index, actor, cmd.op, false, Errc::ScriptError, "actor down", {}});
  };
}

LiveSystem::~LiveSystem() { stop(); }

void LiveSystem::start() {
  if (running_.exchange(true)) return;
  {
    std::lock_guard lock(mu_);
    origin_ = std::chrono::steady_clock::now();
    base_ = world_->rt->now();
    world_->persist();
  }
  thread_ = std::thread([this] { run(); });
}

void LiveSystem::stop() {
  if (!running_.exchange(false)) return;
  cv_.notify_all();
  if (thread_.joinable()) thread_.join();
  std::lock_guard lock(mu_);
  world_->persist();
}

std::uint64_t LiveSystem::fingerprint() const {
  std::uint64_t f = world_->log->record_count();
  for (const auto& [id, c] : world_->chains) f = f * 1000003 + c->read([](const chain::Ledger& l) { return l.height(); });
  return f;
}

void LiveSystem::run() {
  auto last_persist = std::chrono::steady_clock::now();
  std::uint64_t last_print = 0;
  while (running_) {
    {
      std::lock_guard lock(mu_);
      auto elapsed = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - origin_).count();
      auto target = base_ + static_cast<Time>(elapsed / tick_ms_);
      auto& rt = *world_->rt;
      while (auto next = rt.next_event_time()) {
        if (*next > target) break;
        rt.step();
      }
      auto fp = fingerprint();
      if (fp != last_print) {
        last_print = fp;
        ++version_;
        cv_.notify_all();
      }
      auto now = std::chrono::steady_clock::now();
      if (now - last_persist > std::chrono::milliseconds(250)) {
        world_->persist();
        last_persist = now;
      }
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(2));
  }
}

std::uint64_t LiveSystem::submit(const std::string& actor, const std::string& op, nlohmann::json params) {
  std::lock_guard lock(mu_);
  if (!world_->parties.count(actor)) throw Error(Errc::BadParams, "unknown actor " + actor);
  auto index = next_index_++;
  world_->rt->schedule_command(world_->rt->now(), actor, Command{index, op, std::move(params)});
  return index;
}

std::optional<deal::CommandResult> LiveSystem::wait_result(std::uint64_t index, std::chrono::milliseconds timeout) {
  std::unique_lock lock(mu_);
  cv_.wait_for(lock, timeout, [&] { return results_.count(index) != 0 || !running_; });
  auto it = results_.find(index);
  if (it == results_.end()) return std::nullopt;
  return it->second;
}

std::uint64_t LiveSystem::wait_version(std::uint64_t since, std::chrono::milliseconds timeout) {
  std::unique_lock lock(mu_);
  cv_.wait_for(lock, timeout, [&] { return version_.load() > since || !running_; });
  return version_.load();
}

}  // namespace xdeal::sim
