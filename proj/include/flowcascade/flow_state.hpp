#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

#include "flowcascade/packet_codec.hpp"

namespace flowcascade {

enum class DecidedBy { Fastest, Fast, Slow, SlowTimeoutFallback, Dropped };

std::string_view decided_by_name(DecidedBy d);
DecidedBy parse_decided_by(std::string_view name);

// Stage that produced a prediction. Stage indices follow cascade order.
enum class Stage { Fastest = 0, Fast = 1, Slow = 2 };

// All times are monotonic microseconds, -1 when the step did not happen.
struct StageTimes {
  std::int64_t featurize_ns = 0;  // decode time of the packets the decision used
  std::int64_t inference_ns = 0;  // summed model time over the stages that ran
  std::int64_t q1_enqueue_us = -1;
  std::int64_t q1_dequeue_us = -1;
  std::int64_t stage1_done_us = -1;
  std::int64_t stage2_done_us = -1;
  std::int64_t escalated_us = -1;   // escalation request entered q3
  std::int64_t collected_us = -1;   // N_slow-th packet arrived (or escalation, if later)
  std::int64_t slow_dequeue_us = -1;
  std::int64_t slow_done_us = -1;
};

struct FlowOutcome {
  FlowKey key;
  int label = -1;
  DecidedBy decided_by = DecidedBy::Dropped;
  std::int64_t t_first_packet_us = 0;
  std::int64_t t_decision_us = -1;
  StageTimes times;
  std::string diagnostic;
};

struct FlowBuffer {
  FlowKey key;
  std::vector<PacketVector> vectors;  // arrival order, at most n_slow_packets
  std::int64_t first_seen_us = 0;
  std::int64_t last_seen_us = 0;
  std::uint64_t packet_count_total = 0;
  std::int64_t featurize_ns = 0;  // summed over buffered vectors
};

struct FlowStateConfig {
  std::int64_t ttl_us = 10'000'000;
  std::size_t q1_capacity = 16384;
  std::size_t q2_capacity = 262144;
  std::size_t q3_capacity = 16384;
  int n_slow_packets = 10;
  // Producer waits for room in q1 instead of dropping the oldest item.
  // Only for as-fast-as-possible replays, where there is no clock to keep.
  bool block_when_full = false;

  std::int64_t purge_period_us() const { return ttl_us / 10 > 0 ? ttl_us / 10 : 1; }
  bool operator==(const FlowStateConfig&) const = default;
};

enum class AdmitResult { EnqueuedFirst, Accumulated, IgnoredPostDecision };

struct FirstPacketWork {
  FlowKey key;
  std::uint64_t flow_id = 0;
  PacketVector vector;
  std::int64_t t_first_us = 0;
  StageTimes times;
};

struct SlowWork {
  FlowKey key;
  std::uint64_t flow_id = 0;
  std::vector<PacketVector> vectors;
  std::int64_t t_first_us = 0;
  int fallback_label = -1;
  StageTimes times;
};

using Work = std::variant<FirstPacketWork, SlowWork>;

// What an escalated flow resolves to if its buffer never fills.
struct EscalationRequest {
  FlowKey key;
  std::uint64_t flow_id = 0;
  int fallback_label = -1;
  StageTimes times;
};

enum class EscalateResult { Ready, Waiting, FellBack, Stale };

struct FlowStateCounters {
  std::uint64_t admitted = 0;
  std::uint64_t packets = 0;
  std::uint64_t ignored_packets = 0;
  std::uint64_t q1_dropped = 0;
  std::uint64_t q3_dropped = 0;
  std::uint64_t q2_evicted = 0;
  std::uint64_t purged = 0;
  std::uint64_t finalized = 0;
};

// The three hand-off queues and the per-flow table behind them.
//
// q1 holds first-packet work, q2 the per-flow packet buffers, q3 the
// escalation requests. A request moves to the slow-ready list as soon as
// its buffer holds n_slow_packets vectors. Every admitted flow is finalized
// exactly once through the outcome sink, which is always invoked without
// the internal lock held.
class QueueSet {
 public:
  using OutcomeSink = std::function<void(FlowOutcome&&)>;
  // Fills the vector for a packet and returns the decode time in ns.
  using FillFn = std::function<std::int64_t(PacketVector&)>;

  QueueSet(FlowStateConfig cfg, OutcomeSink sink);

  const FlowStateConfig& config() const { return cfg_; }

  AdmitResult admit_packet(const TimedPacket& pkt, std::int64_t now_us);
  // Same, but the vector is only produced when the flow still needs it.
  AdmitResult admit(const FlowKey& key, std::int64_t now_us, const FillFn& fill);

  // Consumer side. pop_work blocks until work is available or the input is
  // finished and nothing is left in flight; then it returns nullopt.
  std::optional<Work> pop_work();
  std::optional<Work> try_pop_work();
  void job_done();

  void decide(const FlowKey& key, std::uint64_t flow_id, int label, DecidedBy by, const StageTimes& times,
              std::int64_t now_us);
  void fail(const FlowKey& key, std::uint64_t flow_id, const StageTimes& times, std::int64_t now_us,
            std::string diagnostic);
  EscalateResult escalate(EscalationRequest req, std::int64_t now_us);

  // The buffer of an escalated flow once it holds n_slow_packets vectors;
  // nullopt while not ready.
  std::optional<FlowBuffer> match_escalation(const FlowKey& key) const;

  // Finalizes every q2/q3 entry first seen strictly more than ttl ago.
  std::size_t purge_expired(std::int64_t now_us);

  // No more packets will arrive: waiting escalations resolve to their
  // fallback now, later ones immediately.
  void finish_input(std::int64_t now_us);

  FlowStateCounters counters() const;
  std::size_t q1_size() const;
  std::size_t q2_size() const;  // live flow buffers
  std::size_t q3_size() const;  // escalations waiting or ready
  std::optional<FlowBuffer> buffer(const FlowKey& key) const;

 private:
  enum class State { Pending, Escalated, SlowQueued, Decided };

  struct Entry {
    std::uint64_t id = 0;
    State state = State::Pending;
    FlowBuffer buffer;
    std::optional<EscalationRequest> escalation;
    bool slow_taken = false;  // slow work handed to a consumer
  };

  struct Aged {
    FlowKey key;
    std::uint64_t id;
    std::int64_t stamp_us;
  };

  using Pending = std::vector<FlowOutcome>;

  void emit(Pending& out);
  void finalize_locked(Entry& e, int label, DecidedBy by, const StageTimes& times, std::int64_t now_us,
                       std::string diagnostic, Pending& out);
  bool expire_locked(Entry& e, std::int64_t now_us, Pending& out);
  void push_ready_locked(Entry& e, std::int64_t now_us);
  void evict_oldest_locked(std::int64_t now_us, Pending& out);
  std::optional<Work> pop_locked();
  bool exhausted_locked() const;

  FlowStateConfig cfg_;
  OutcomeSink sink_;

  mutable std::mutex mu_;
  std::condition_variable work_cv_;
  std::condition_variable room_cv_;
  std::unordered_map<FlowKey, Entry, FlowKeyHash> table_;
  std::deque<Aged> aging_;
  std::deque<FirstPacketWork> q1_;
  std::deque<std::pair<FlowKey, std::uint64_t>> q3_;  // arrival order of requests
  std::deque<SlowWork> ready_;
  std::size_t live_ = 0;
  std::size_t q3_count_ = 0;
  std::size_t in_flight_ = 0;
  std::uint64_t next_id_ = 1;
  bool input_done_ = false;
  bool prefer_slow_ = false;
  FlowStateCounters counters_;
};

}  // namespace flowcascade
