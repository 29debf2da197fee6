#include <doctest.h>

#include <algorithm>
#include <map>
#include <random>
#include <set>
#include <thread>

#include "flowcascade/flow_state.hpp"

using namespace flowcascade;

namespace {

FlowKey key_of(std::uint32_t i) { return FlowKey{0x0A000000U + i, 0xC0A80001U, static_cast<std::uint16_t>(1000 + i), 80, kProtoTcp}; }

TimedPacket packet(std::uint32_t flow, std::int8_t marker) {
  TimedPacket p;
  p.key = key_of(flow);
  p.vector.cells[0] = marker;
  return p;
}

struct Harness {
  std::vector<FlowOutcome> outcomes;
  QueueSet qs;

  explicit Harness(FlowStateConfig cfg)
      : qs(cfg, [this](FlowOutcome&& o) { outcomes.push_back(std::move(o)); }) {}

  FirstPacketWork pop_first() {
    auto w = qs.try_pop_work();
    REQUIRE(w.has_value());
    REQUIRE(std::holds_alternative<FirstPacketWork>(*w));
    qs.job_done();
    return std::get<FirstPacketWork>(std::move(*w));
  }

  EscalateResult escalate(const FirstPacketWork& w, int fallback, std::int64_t now) {
    EscalationRequest r;
    r.key = w.key;
    r.flow_id = w.flow_id;
    r.fallback_label = fallback;
    return qs.escalate(r, now);
  }
};

FlowStateConfig small_config() {
  FlowStateConfig cfg;
  cfg.ttl_us = 1000;
  cfg.n_slow_packets = 4;
  return cfg;
}

}  // namespace

TEST_CASE("first packet opens a flow and later packets accumulate up to the cap") {
  Harness h(small_config());
  CHECK(h.qs.admit_packet(packet(1, 0), 10) == AdmitResult::EnqueuedFirst);
  CHECK(h.qs.q1_size() == 1);
  CHECK(h.qs.q2_size() == 1);
  for (int i = 1; i < 12; ++i) {
    CHECK(h.qs.admit_packet(packet(1, static_cast<std::int8_t>(i % 2)), 10 + i) == AdmitResult::Accumulated);
  }
  const auto buf = h.qs.buffer(key_of(1));
  REQUIRE(buf.has_value());
  CHECK(buf->vectors.size() == 4);
  CHECK(buf->packet_count_total == 12);
  CHECK(buf->first_seen_us == 10);
  // Arrival order is preserved.
  CHECK(buf->vectors[0].cells[0] == 0);
  CHECK(buf->vectors[1].cells[0] == 1);
  CHECK(buf->vectors[2].cells[0] == 0);
  CHECK(h.qs.q1_size() == 1);
}

TEST_CASE("packets after a non-escalated decision are ignored without touching q2") {
  Harness h(small_config());
  h.qs.admit_packet(packet(1, 0), 0);
  const auto w = h.pop_first();
  h.qs.decide(w.key, w.flow_id, 3, DecidedBy::Fastest, w.times, 5);
  REQUIRE(h.outcomes.size() == 1);
  CHECK(h.outcomes[0].decided_by == DecidedBy::Fastest);
  CHECK(h.outcomes[0].label == 3);
  CHECK(h.outcomes[0].t_decision_us == 5);
  const auto q2_before = h.qs.q2_size();
  CHECK(h.qs.admit_packet(packet(1, 1), 6) == AdmitResult::IgnoredPostDecision);
  CHECK(h.qs.admit_packet(packet(1, 1), 7) == AdmitResult::IgnoredPostDecision);
  CHECK(h.qs.q2_size() == q2_before);
  CHECK_FALSE(h.qs.buffer(key_of(1)).has_value());
  CHECK(h.outcomes.size() == 1);
}

TEST_CASE("escalation after the buffer is full matches immediately") {
  Harness h(small_config());
  for (int i = 0; i < 5; ++i) h.qs.admit_packet(packet(1, 0), i);
  const auto w = h.pop_first();
  CHECK(h.escalate(w, 2, 10) == EscalateResult::Ready);
  const auto buf = h.qs.match_escalation(key_of(1));
  REQUIRE(buf.has_value());
  CHECK(buf->vectors.size() == 4);
  auto slow = h.qs.try_pop_work();
  REQUIRE(slow.has_value());
  REQUIRE(std::holds_alternative<SlowWork>(*slow));
  CHECK(std::get<SlowWork>(*slow).vectors.size() == 4);
  CHECK(std::get<SlowWork>(*slow).fallback_label == 2);
}

TEST_CASE("escalation waits for the n_slow-th packet") {
  Harness h(small_config());
  h.qs.admit_packet(packet(1, 0), 0);
  const auto w = h.pop_first();
  CHECK(h.escalate(w, 1, 1) == EscalateResult::Waiting);
  CHECK(h.qs.q3_size() == 1);
  // Scripted arrivals at t = 20, 40, 60; ready exactly at the 4th vector.
  for (std::int64_t t : {20, 40}) {
    h.qs.admit_packet(packet(1, 1), t);
    CHECK_FALSE(h.qs.match_escalation(key_of(1)).has_value());
    CHECK_FALSE(h.qs.try_pop_work().has_value());
  }
  h.qs.admit_packet(packet(1, 1), 60);
  REQUIRE(h.qs.match_escalation(key_of(1)).has_value());
  auto slow = h.qs.try_pop_work();
  REQUIRE(slow.has_value());
  const auto& sw = std::get<SlowWork>(*slow);
  CHECK(sw.times.collected_us == 60);
  CHECK(sw.times.escalated_us == 1);
  CHECK(h.qs.q3_size() == 0);
  h.qs.decide(sw.key, sw.flow_id, 4, DecidedBy::Slow, sw.times, 70);
  h.qs.job_done();
  REQUIRE(h.outcomes.size() == 1);
  CHECK(h.outcomes[0].decided_by == DecidedBy::Slow);
  CHECK(h.outcomes[0].label == 4);
}

TEST_CASE("a short flow falls back to the fast prediction once ttl elapses") {
  Harness h(small_config());
  h.qs.admit_packet(packet(1, 0), 0);
  h.qs.admit_packet(packet(1, 0), 100);
  const auto w = h.pop_first();
  CHECK(h.escalate(w, 6, 150) == EscalateResult::Waiting);
  CHECK(h.qs.purge_expired(1000) == 0);  // exactly ttl old: kept
  CHECK(h.outcomes.empty());
  CHECK(h.qs.purge_expired(1001) == 1);
  REQUIRE(h.outcomes.size() == 1);
  CHECK(h.outcomes[0].decided_by == DecidedBy::SlowTimeoutFallback);
  CHECK(h.outcomes[0].label == 6);
  CHECK(h.qs.q3_size() == 0);
  CHECK(h.qs.q2_size() == 0);
  // Late packet of the finalized flow is ignored.
  CHECK(h.qs.admit_packet(packet(1, 0), 1002) == AdmitResult::IgnoredPostDecision);
}

TEST_CASE("purge on empty queues removes nothing") {
  Harness h(small_config());
  CHECK(h.qs.purge_expired(1'000'000) == 0);
}

TEST_CASE("purge removes exactly the strictly-older-than-ttl live entries") {
  std::mt19937 rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    Harness h(small_config());
    struct Scripted {
      std::int64_t t;
      int kind;  // 0 pending, 1 escalated, 2 decided
    };
    std::vector<Scripted> script;
    std::int64_t t = 0;
    for (std::uint32_t i = 0; i < 40; ++i) {
      t += static_cast<std::int64_t>(rng() % 60);
      script.push_back({t, static_cast<int>(rng() % 3)});
      h.qs.admit_packet(packet(i, 0), t);
    }
    for (std::uint32_t i = 0; i < 40; ++i) {
      const auto w = h.pop_first();
      if (script[i].kind == 1) h.escalate(w, 0, script[i].t);
      if (script[i].kind == 2) h.qs.decide(w.key, w.flow_id, 0, DecidedBy::Fastest, w.times, script[i].t);
    }
    // "Pending" flows had their work popped but never resolved.
    const std::int64_t now = script[20].t + 1000 + static_cast<std::int64_t>(rng() % 3);
    std::size_t expected = 0;
    for (const auto& s : script) expected += (now - s.t > 1000 && s.kind != 2) ? 1 : 0;
    const auto decided_before = h.outcomes.size();
    CHECK(h.qs.purge_expired(now) == expected);
    CHECK(h.outcomes.size() - decided_before == expected);
    for (std::size_t i = decided_before; i < h.outcomes.size(); ++i) {
      const auto& o = h.outcomes[i];
      const auto idx = o.key.src_addr - 0x0A000000U;
      CHECK(now - script[idx].t > 1000);
      CHECK(o.decided_by == (script[idx].kind == 1 ? DecidedBy::SlowTimeoutFallback : DecidedBy::Dropped));
    }
  }
}

TEST_CASE("q1 overflow drops the oldest work item and counts it") {
  auto cfg = small_config();
  cfg.q1_capacity = 2;
  Harness h(cfg);
  for (std::uint32_t i = 0; i < 3; ++i) h.qs.admit_packet(packet(i, 0), i);
  CHECK(h.qs.q1_size() == 2);
  REQUIRE(h.outcomes.size() == 1);
  CHECK(h.outcomes[0].key == key_of(0));
  CHECK(h.outcomes[0].decided_by == DecidedBy::Dropped);
  CHECK(h.qs.counters().q1_dropped == 1);
  CHECK(h.pop_first().key == key_of(1));
}

TEST_CASE("q3 overflow drops the oldest escalation") {
  auto cfg = small_config();
  cfg.q3_capacity = 2;
  Harness h(cfg);
  for (std::uint32_t i = 0; i < 3; ++i) h.qs.admit_packet(packet(i, 0), i);
  for (std::uint32_t i = 0; i < 3; ++i) h.escalate(h.pop_first(), 1, 10);
  CHECK(h.qs.q3_size() == 2);
  REQUIRE(h.outcomes.size() == 1);
  CHECK(h.outcomes[0].key == key_of(0));
  CHECK(h.outcomes[0].decided_by == DecidedBy::Dropped);
  CHECK(h.qs.counters().q3_dropped == 1);
}

TEST_CASE("q2 at capacity evicts the oldest live entry") {
  auto cfg = small_config();
  cfg.q2_capacity = 3;
  Harness h(cfg);
  for (std::uint32_t i = 0; i < 3; ++i) h.qs.admit_packet(packet(i, 0), i);
  h.escalate(h.pop_first(), 5, 3);
  h.qs.admit_packet(packet(3, 0), 4);
  CHECK(h.qs.q2_size() == 3);
  REQUIRE(h.outcomes.size() == 1);
  CHECK(h.outcomes[0].key == key_of(0));
  CHECK(h.outcomes[0].decided_by == DecidedBy::SlowTimeoutFallback);
  CHECK(h.outcomes[0].label == 5);
  CHECK(h.qs.counters().q2_evicted == 1);
}

TEST_CASE("finishing the input resolves waiting escalations") {
  Harness h(small_config());
  h.qs.admit_packet(packet(1, 0), 0);
  h.qs.admit_packet(packet(2, 0), 0);
  h.escalate(h.pop_first(), 3, 1);
  const auto w2 = h.pop_first();
  h.qs.finish_input(2);
  REQUIRE(h.outcomes.size() == 1);
  CHECK(h.outcomes[0].decided_by == DecidedBy::SlowTimeoutFallback);
  CHECK(h.escalate(w2, 1, 3) == EscalateResult::FellBack);
  CHECK(h.outcomes.size() == 2);
  CHECK_FALSE(h.qs.pop_work().has_value());
}

TEST_CASE("random operation sequences conserve flows") {
  std::mt19937 rng(99);
  for (int trial = 0; trial < 30; ++trial) {
    auto cfg = small_config();
    cfg.q1_capacity = 1 + rng() % 8;
    cfg.q2_capacity = 1 + rng() % 16;
    cfg.q3_capacity = 1 + rng() % 4;
    Harness h(cfg);
    std::int64_t now = 0;
    for (int step = 0; step < 400; ++step) {
      now += static_cast<std::int64_t>(rng() % 40);
      const int op = static_cast<int>(rng() % 10);
      if (op < 5) {
        h.qs.admit_packet(packet(rng() % 25, 0), now);
      } else if (op < 8) {
        if (auto w = h.qs.try_pop_work()) {
          if (auto* f = std::get_if<FirstPacketWork>(&*w)) {
            if (rng() % 2) {
              h.qs.decide(f->key, f->flow_id, 1, DecidedBy::Fastest, f->times, now);
            } else {
              EscalationRequest r{f->key, f->flow_id, 2, f->times};
              h.qs.escalate(r, now);
            }
          } else {
            auto& s = std::get<SlowWork>(*w);
            h.qs.decide(s.key, s.flow_id, 3, DecidedBy::Slow, s.times, now);
          }
          h.qs.job_done();
        }
      } else {
        h.qs.purge_expired(now);
      }
    }
    h.qs.finish_input(now);
    while (auto w = h.qs.pop_work()) {
      if (auto* f = std::get_if<FirstPacketWork>(&*w)) {
        h.qs.decide(f->key, f->flow_id, 1, DecidedBy::Fastest, f->times, now);
      } else {
        auto& s = std::get<SlowWork>(*w);
        h.qs.decide(s.key, s.flow_id, 3, DecidedBy::Slow, s.times, now);
      }
      h.qs.job_done();
    }
    const auto c = h.qs.counters();
    CHECK(h.outcomes.size() == c.admitted);
    CHECK(c.finalized == c.admitted);
    CHECK(h.qs.q2_size() == 0);
    CHECK(h.qs.q3_size() == 0);
    std::map<int, std::size_t> hist;
    for (const auto& o : h.outcomes) {
      ++hist[static_cast<int>(o.decided_by)];
      if (o.decided_by != DecidedBy::Dropped) CHECK(o.t_decision_us >= o.t_first_packet_us);
    }
    std::size_t sum = 0;
    for (const auto& [k, v] : hist) sum += v;
    CHECK(sum == c.admitted);
  }
}

TEST_CASE("blocking admission makes progress with a live consumer") {
  auto cfg = small_config();
  cfg.q1_capacity = 4;
  cfg.block_when_full = true;
  cfg.n_slow_packets = 1;
  Harness h(cfg);
  std::thread consumer([&] {
    while (auto w = h.qs.pop_work()) {
      const auto& f = std::get<FirstPacketWork>(*w);
      h.qs.decide(f.key, f.flow_id, 0, DecidedBy::Fastest, f.times, 1);
      h.qs.job_done();
    }
  });
  for (std::uint32_t i = 0; i < 500; ++i) h.qs.admit_packet(packet(i, 0), 0);
  h.qs.finish_input(0);
  consumer.join();
  CHECK(h.outcomes.size() == 500);
  CHECK(h.qs.counters().q1_dropped == 0);
}
