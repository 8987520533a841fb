#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <string_view>

#include "xdeal/crypto.hpp"
#include "xdeal/sim/messages.hpp"

namespace xdeal::sim {

using Time = std::uint64_t;

class Runtime;

struct Inbound {
  std::string from;
  std::uint64_t rpc = 0;
  const Message& msg;
};

/// A simulated component. Actors only interact through the runtime; state
/// that must survive a crash lives outside the actor and is passed in.
class Actor {
 public:
  explicit Actor(std::string name) : name_(std::move(name)) {}
  virtual ~Actor() = default;

  const std::string& name() const { return name_; }

  /// Called at boot and again after every restart.
  virtual void start(Runtime&) {}
  /// Requests must eventually be answered with Runtime::reply.
  virtual void on_request(Runtime&, const Inbound&) {}
  virtual void on_timer(Runtime&, std::uint64_t /*tag*/) {}
  /// Drops volatile state.
  virtual void on_crash() {}
  /// True while the actor still has scripted work in progress.
  virtual bool busy() const { return false; }

 private:
  std::string name_;
};

struct NetworkFaults {
  double drop = 0;
  double duplicate = 0;
  Time min_delay = 1;
  Time max_delay = 1;
};

/// Seeded discrete-event scheduler. Every message between actors passes
/// through it and receives a delay, drop and duplicate decision drawn from
/// one RNG, so the same seed reproduces the same delivery order.
///
/// `call` gives at-least-once request/response: unanswered requests are
/// re-sent every `retry_after` until a response arrives or the caller
/// crashes. Servers see each (caller, rpc id) once per incarnation; repeats
/// get the cached reply.
class Runtime {
 public:
  using Callback = std::function<void(const Message&)>;

  struct Options {
    Time retry_after = 60;
  };

  Runtime(std::uint64_t seed, NetworkFaults net, Options options);

  void add(std::shared_ptr<Actor> actor);
  Actor& actor(const std::string& name) const;
  bool has(const std::string& name) const { return actors_.count(name) != 0; }
  bool alive(const std::string& name) const;
  /// Starts every registered actor. Call once before stepping.
  void boot();

  Time now() const { return now_; }
  std::uint64_t steps() const { return steps_; }

  std::uint64_t call(const std::string& from, const std::string& to, Message request, Callback cb);
  void cancel(std::uint64_t rpc);
  void reply(const std::string& server, const Inbound& in, Message response) {
    reply_to(server, in.from, in.rpc, std::move(response));
  }
  /// Deferred form of `reply` for servers that answer after further calls.
  void reply_to(const std::string& server, const std::string& caller, std::uint64_t rpc, Message response);
  void set_timer(const std::string& actor, Time delay, std::uint64_t tag);

  std::uint64_t random(std::uint64_t n);  // uniform in [0, n)
  bool chance(double p);

  /// Records a named milestone in the trace and fires any hooks waiting on it.
  void note(const std::string& actor, std::string_view label);
  void on_milestone(const std::string& actor, const std::string& label, std::uint64_t nth,
                    std::function<void()> hook);

  void schedule_command(Time at, const std::string& actor, Command cmd);
  void schedule_crash(Time at, const std::string& actor);
  void schedule_restart(Time at, const std::string& actor);
  std::function<void(const std::string& actor, const Command&)> on_command_lost;

  /// Processes one event. False when nothing is queued.
  bool step();
  std::optional<Time> next_event_time() const;

  Hash256 trace_hash() const;
  void set_trace_sink(std::function<void(const std::string&)> sink) { sink_ = std::move(sink); }

 private:
  struct Envelope {
    std::string from;
    std::string to;
    std::uint64_t rpc = 0;
    bool response = false;
    Message msg;
  };
  struct Event {
    enum Kind { Deliver, Timer, Retry, Script, Crash, Restart, Hook } kind = Deliver;
    std::optional<Envelope> env;
    std::string actor;
    std::uint64_t epoch = 0;
    std::uint64_t tag = 0;
    std::optional<Command> cmd;
    std::function<void()> hook;
  };
  struct Entry {
    std::shared_ptr<Actor> actor;
    bool alive = true;
    std::uint64_t epoch = 0;
    std::map<std::pair<std::string, std::uint64_t>, std::optional<Message>> served;
  };
  struct Pending {
    std::string caller;
    std::uint64_t epoch = 0;
    std::string to;
    Message request;
    Callback cb;
  };

  void push(Time at, Event ev);
  void transmit(Envelope env);
  void deliver(Envelope& env);
  void crash(const std::string& name);
  void restart(const std::string& name);
  void trace(const std::string& line);
  Entry& entry(const std::string& name);

  std::mt19937_64 rng_;
  NetworkFaults net_;
  Options options_;
  Time now_ = 0;
  std::uint64_t steps_ = 0;
  std::uint64_t next_seq_ = 0;
  std::uint64_t next_rpc_ = 1;
  std::map<std::pair<Time, std::uint64_t>, Event> queue_;
  std::map<std::string, Entry> actors_;
  std::map<std::uint64_t, Pending> pending_;
  std::map<std::pair<std::string, std::string>, std::uint64_t> milestone_counts_;
  std::multimap<std::tuple<std::string, std::string, std::uint64_t>, std::function<void()>> milestone_hooks_;
  Sha256 trace_;
  std::function<void(const std::string&)> sink_;
};

}  // namespace xdeal::sim
