#pragma once

#include <atomic>
#include <condition_variable>
#include <functional>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "flowcascade/cascade.hpp"
#include "flowcascade/flow_state.hpp"

namespace flowcascade {

struct ServeConfig {
  FlowStateConfig flow_state;  // n_slow_packets is taken from the cascade
  int consumers = 1;
  bool run_purge_thread = true;
  // Called by a consumer right after it takes a work item; tests use it to
  // stall one consumer.
  std::function<void(int consumer)> on_work;
  // Called before every model call; an exception it throws is handled like
  // a model error on that flow.
  std::function<void(const FlowKey&, Stage)> before_inference;
};

// The running cascade: one producer calls ingest, `consumers` workers pull
// from the queue set, a timer thread purges expired flows.
class CascadeServer {
 public:
  using OutcomeSink = std::function<void(FlowOutcome&&)>;

  // The sink is called from several threads, one outcome at a time.
  CascadeServer(CascadeSpec spec, ServeConfig cfg, OutcomeSink sink);
  ~CascadeServer();

  CascadeServer(const CascadeServer&) = delete;
  CascadeServer& operator=(const CascadeServer&) = delete;

  // Decodes a frame and admits it at now_us. Returns false for skipped
  // frames.
  bool ingest(std::span<const std::uint8_t> frame, LinkType link, std::int64_t now_us);
  void ingest(const TimedPacket& pkt, std::int64_t now_us);

  // No more input: resolve what is left, then join every thread.
  void finish();

  FlowStateCounters counters() const { return queues_.counters(); }
  std::uint64_t skipped_frames() const { return skipped_.load(); }
  const CascadeSpec& spec() const { return spec_; }

 private:
  void consumer_loop(int index);
  void purge_loop();
  void run_first(FirstPacketWork& w);
  void run_slow(SlowWork& w);

  CascadeSpec spec_;
  ServeConfig cfg_;
  OutcomeSink sink_;
  std::mutex sink_mu_;
  QueueSet queues_;
  std::vector<std::thread> workers_;
  std::thread purger_;
  std::mutex purge_mu_;
  std::condition_variable purge_cv_;
  bool stopping_ = false;
  bool finished_ = false;
  std::atomic<std::uint64_t> skipped_{0};
};

// Runs packets through a fresh server as fast as possible and returns all
// outcomes. Packets are admitted at wall-clock time.
std::vector<FlowOutcome> serve_packets(const CascadeSpec& spec, std::span<const TimedPacket> packets,
                                       const ServeConfig& cfg);

// "key,label,decided_by,t_first_packet_us,t_decision_us,<stage times>,diagnostic"
void write_outcomes_csv(const std::string& path, std::span<const FlowOutcome> outcomes);

}  // namespace flowcascade
