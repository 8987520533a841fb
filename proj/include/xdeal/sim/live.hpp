#pragma once

// Real-time mode: the simulated components driven by a wall clock on a
// background thread. Logical time advances by one tick every `tick_ms`.

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <thread>

#include "xdeal/sim/scenario.hpp"

namespace xdeal::sim {

class LiveSystem {
 public:
  LiveSystem(std::shared_ptr<World> world, double tick_ms);
  ~LiveSystem();

  LiveSystem(const LiveSystem&) = delete;
  LiveSystem& operator=(const LiveSystem&) = delete;

  void start();
  void stop();

  /// Runs `f` with the world locked against the driver thread.
  template <class F>
  auto locked(F&& f) {
    std::lock_guard lock(mu_);
    return f(*world_);
  }

  /// Queues a user action for `actor` at the current logical time.
  std::uint64_t submit(const std::string& actor, const std::string& op, nlohmann::json params);
  std::optional<deal::CommandResult> wait_result(std::uint64_t index, std::chrono::milliseconds timeout);

  /// Bumped whenever a chain, the log or a command result changes.
  std::uint64_t version() const { return version_.load(); }
  std::uint64_t wait_version(std::uint64_t since, std::chrono::milliseconds timeout);

  double tick_ms() const { return tick_ms_; }

 private:
  void run();
  std::uint64_t fingerprint() const;  // caller holds mu_

  std::shared_ptr<World> world_;
  double tick_ms_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::thread thread_;
  std::atomic<bool> running_{false};
  std::atomic<std::uint64_t> version_{0};
  std::uint64_t next_index_ = 1'000'000;
  std::map<std::uint64_t, deal::CommandResult> results_;
  std::chrono::steady_clock::time_point origin_;
  Time base_ = 0;
};

}  // namespace xdeal::sim
