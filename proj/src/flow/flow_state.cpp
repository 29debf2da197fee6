#include "flowcascade/flow_state.hpp"

#include <array>

#include "flowcascade/error.hpp"

namespace flowcascade {

namespace {

constexpr std::array<std::string_view, 5> kDecidedByNames = {"Fastest", "Fast", "Slow", "SlowTimeoutFallback",
                                                             "Dropped"};

}  // namespace

std::string_view decided_by_name(DecidedBy d) { return kDecidedByNames[static_cast<std::size_t>(d)]; }

DecidedBy parse_decided_by(std::string_view name) {
  for (std::size_t i = 0; i < kDecidedByNames.size(); ++i) {
    if (kDecidedByNames[i] == name) return static_cast<DecidedBy>(i);
  }
  throw ValidationError("unknown decided_by value '" + std::string(name) + "'");
}

QueueSet::QueueSet(FlowStateConfig cfg, OutcomeSink sink) : cfg_(cfg), sink_(std::move(sink)) {
  if (cfg_.ttl_us <= 0) throw ValidationError("ttl_ms must be positive");
  if (cfg_.n_slow_packets < 1) throw ValidationError("n_slow_packets must be at least 1");
  if (cfg_.q1_capacity == 0 || cfg_.q2_capacity == 0 || cfg_.q3_capacity == 0) {
    throw ValidationError("queue capacities must be positive");
  }
}

void QueueSet::emit(Pending& out) {
  for (auto& o : out) {
    if (sink_) sink_(std::move(o));
  }
  out.clear();
}

AdmitResult QueueSet::admit_packet(const TimedPacket& pkt, std::int64_t now_us) {
  return admit(pkt.key, now_us, [&](PacketVector& v) {
    v = pkt.vector;
    return pkt.featurize_ns;
  });
}

AdmitResult QueueSet::admit(const FlowKey& key, std::int64_t now_us, const FillFn& fill) {
  Pending out;
  std::unique_lock lock(mu_);
  ++counters_.packets;
  const auto n_slow = static_cast<std::size_t>(cfg_.n_slow_packets);

  if (auto it = table_.find(key); it != table_.end()) {
    Entry& e = it->second;
    e.buffer.last_seen_us = now_us;
    if (e.state == State::Decided) {
      ++counters_.ignored_packets;
      return AdmitResult::IgnoredPostDecision;
    }
    ++e.buffer.packet_count_total;
    if (e.buffer.vectors.size() < n_slow) {
      e.buffer.vectors.emplace_back();
      e.buffer.featurize_ns += fill(e.buffer.vectors.back());
      if (e.state == State::Escalated && e.buffer.vectors.size() == n_slow) {
        push_ready_locked(e, now_us);
      }
    }
    return AdmitResult::Accumulated;
  }

  if (cfg_.block_when_full) {
    room_cv_.wait(lock, [&] { return q1_.size() < cfg_.q1_capacity; });
  }
  if (live_ >= cfg_.q2_capacity) evict_oldest_locked(now_us, out);
  while (q1_.size() >= cfg_.q1_capacity) {
    FirstPacketWork dropped = std::move(q1_.front());
    q1_.pop_front();
    auto it = table_.find(dropped.key);
    if (it != table_.end() && it->second.id == dropped.flow_id && it->second.state == State::Pending) {
      ++counters_.q1_dropped;
      finalize_locked(it->second, -1, DecidedBy::Dropped, dropped.times, now_us, "q1 overflow", out);
    }
  }

  Entry& e = table_[key];
  e.id = next_id_++;
  e.state = State::Pending;
  e.buffer.key = key;
  e.buffer.first_seen_us = now_us;
  e.buffer.last_seen_us = now_us;
  e.buffer.packet_count_total = 1;
  e.buffer.vectors.emplace_back();
  const std::int64_t featurize_ns = fill(e.buffer.vectors.back());
  e.buffer.featurize_ns = featurize_ns;
  aging_.push_back({key, e.id, now_us});

  FirstPacketWork w;
  w.key = key;
  w.flow_id = e.id;
  w.vector = e.buffer.vectors.front();
  w.t_first_us = now_us;
  w.times.featurize_ns = featurize_ns;
  w.times.q1_enqueue_us = now_us;
  q1_.push_back(std::move(w));

  ++live_;
  ++counters_.admitted;
  lock.unlock();
  work_cv_.notify_one();
  emit(out);
  return AdmitResult::EnqueuedFirst;
}

void QueueSet::push_ready_locked(Entry& e, std::int64_t now_us) {
  e.state = State::SlowQueued;
  SlowWork w;
  w.key = e.buffer.key;
  w.flow_id = e.id;
  w.vectors = e.buffer.vectors;
  w.t_first_us = e.buffer.first_seen_us;
  w.fallback_label = e.escalation->fallback_label;
  w.times = e.escalation->times;
  w.times.collected_us = now_us;
  w.times.featurize_ns = e.buffer.featurize_ns;
  ready_.push_back(std::move(w));
  work_cv_.notify_one();
}

void QueueSet::finalize_locked(Entry& e, int label, DecidedBy by, const StageTimes& times, std::int64_t now_us,
                               std::string diagnostic, Pending& out) {
  if (e.state == State::Escalated || (e.state == State::SlowQueued && !e.slow_taken)) {
    --q3_count_;
  }
  FlowOutcome o;
  o.key = e.buffer.key;
  o.label = by == DecidedBy::Dropped ? -1 : label;
  o.decided_by = by;
  o.t_first_packet_us = e.buffer.first_seen_us;
  o.t_decision_us = by == DecidedBy::Dropped ? -1 : now_us;
  o.times = times;
  o.diagnostic = std::move(diagnostic);
  out.push_back(std::move(o));

  e.state = State::Decided;
  e.slow_taken = false;
  e.escalation.reset();
  e.buffer.vectors.clear();
  e.buffer.vectors.shrink_to_fit();
  --live_;
  ++counters_.finalized;
}

bool QueueSet::expire_locked(Entry& e, std::int64_t now_us, Pending& out) {
  switch (e.state) {
    case State::Pending: {
      StageTimes t;
      t.featurize_ns = e.buffer.featurize_ns;
      finalize_locked(e, -1, DecidedBy::Dropped, t, now_us, "expired before a first-stage prediction", out);
      return true;
    }
    case State::Escalated: {
      const StageTimes t = e.escalation->times;
      const int label = e.escalation->fallback_label;
      finalize_locked(e, label, label >= 0 ? DecidedBy::SlowTimeoutFallback : DecidedBy::Dropped, t, now_us,
                      "slow stage timed out", out);
      return true;
    }
    case State::SlowQueued:
    case State::Decided:
      return false;
  }
  return false;
}

void QueueSet::evict_oldest_locked(std::int64_t now_us, Pending& out) {
  std::size_t budget = aging_.size();
  while (live_ >= cfg_.q2_capacity && !aging_.empty() && budget-- > 0) {
    const Aged a = aging_.front();
    aging_.pop_front();
    auto it = table_.find(a.key);
    if (it == table_.end() || it->second.id != a.id) continue;
    Entry& e = it->second;
    if (e.state == State::Decided) {
      table_.erase(it);
    } else if (e.state == State::SlowQueued) {
      aging_.push_back(a);
    } else {
      expire_locked(e, now_us, out);
      ++counters_.q2_evicted;
      table_.erase(it);
    }
  }
}

std::optional<Work> QueueSet::pop_locked() {
  auto take_first = [&]() -> std::optional<Work> {
    while (!q1_.empty()) {
      FirstPacketWork w = std::move(q1_.front());
      q1_.pop_front();
      auto it = table_.find(w.key);
      if (it != table_.end() && it->second.id == w.flow_id && it->second.state == State::Pending) {
        return Work(std::move(w));
      }
    }
    return std::nullopt;
  };
  auto take_slow = [&]() -> std::optional<Work> {
    while (!ready_.empty()) {
      SlowWork w = std::move(ready_.front());
      ready_.pop_front();
      auto it = table_.find(w.key);
      if (it != table_.end() && it->second.id == w.flow_id && it->second.state == State::SlowQueued &&
          !it->second.slow_taken) {
        it->second.slow_taken = true;
        --q3_count_;
        return Work(std::move(w));
      }
    }
    return std::nullopt;
  };
  // Alternate between the two queues so neither starves the other.
  std::optional<Work> w = prefer_slow_ ? take_slow() : take_first();
  if (!w) w = prefer_slow_ ? take_first() : take_slow();
  if (w) {
    prefer_slow_ = !prefer_slow_;
    ++in_flight_;
  }
  return w;
}

bool QueueSet::exhausted_locked() const {
  return input_done_ && in_flight_ == 0 && q1_.empty() && ready_.empty();
}

std::optional<Work> QueueSet::pop_work() {
  std::unique_lock lock(mu_);
  for (;;) {
    if (auto w = pop_locked()) {
      lock.unlock();
      room_cv_.notify_one();
      return w;
    }
    if (exhausted_locked()) return std::nullopt;
    work_cv_.wait(lock);
  }
}

std::optional<Work> QueueSet::try_pop_work() {
  std::unique_lock lock(mu_);
  auto w = pop_locked();
  lock.unlock();
  if (w) room_cv_.notify_one();
  return w;
}

void QueueSet::job_done() {
  std::unique_lock lock(mu_);
  if (in_flight_ > 0) --in_flight_;
  const bool done = exhausted_locked();
  lock.unlock();
  if (done) work_cv_.notify_all();
}

void QueueSet::decide(const FlowKey& key, std::uint64_t flow_id, int label, DecidedBy by, const StageTimes& times,
                      std::int64_t now_us) {
  Pending out;
  {
    std::lock_guard lock(mu_);
    auto it = table_.find(key);
    if (it == table_.end() || it->second.id != flow_id || it->second.state == State::Decided) return;
    finalize_locked(it->second, label, by, times, now_us, {}, out);
  }
  emit(out);
}

void QueueSet::fail(const FlowKey& key, std::uint64_t flow_id, const StageTimes& times, std::int64_t now_us,
                    std::string diagnostic) {
  Pending out;
  {
    std::lock_guard lock(mu_);
    auto it = table_.find(key);
    if (it == table_.end() || it->second.id != flow_id || it->second.state == State::Decided) return;
    finalize_locked(it->second, -1, DecidedBy::Dropped, times, now_us, std::move(diagnostic), out);
  }
  emit(out);
}

EscalateResult QueueSet::escalate(EscalationRequest req, std::int64_t now_us) {
  Pending out;
  EscalateResult result;
  {
    std::lock_guard lock(mu_);
    auto it = table_.find(req.key);
    if (it == table_.end() || it->second.id != req.flow_id || it->second.state != State::Pending) {
      return EscalateResult::Stale;
    }
    Entry& e = it->second;
    req.times.escalated_us = now_us;
    const bool full = e.buffer.vectors.size() >= static_cast<std::size_t>(cfg_.n_slow_packets);
    if (!full && input_done_) {
      const int label = req.fallback_label;
      finalize_locked(e, label, label >= 0 ? DecidedBy::SlowTimeoutFallback : DecidedBy::Dropped, req.times,
                      now_us, "input ended before the slow stage had its packets", out);
      result = EscalateResult::FellBack;
    } else {
      // Drop the oldest outstanding request when q3 is full.
      while (q3_count_ >= cfg_.q3_capacity && !q3_.empty()) {
        const auto [k, id] = q3_.front();
        q3_.pop_front();
        auto jt = table_.find(k);
        if (jt == table_.end() || jt->second.id != id) continue;
        Entry& old = jt->second;
        const bool outstanding =
            old.state == State::Escalated || (old.state == State::SlowQueued && !old.slow_taken);
        if (!outstanding) continue;
        ++counters_.q3_dropped;
        finalize_locked(old, -1, DecidedBy::Dropped, old.escalation->times, now_us, "q3 overflow", out);
      }
      e.escalation = std::move(req);
      q3_.emplace_back(e.buffer.key, e.id);
      ++q3_count_;
      if (full) {
        push_ready_locked(e, now_us);
        result = EscalateResult::Ready;
      } else {
        e.state = State::Escalated;
        result = EscalateResult::Waiting;
      }
    }
  }
  emit(out);
  return result;
}

std::optional<FlowBuffer> QueueSet::match_escalation(const FlowKey& key) const {
  std::lock_guard lock(mu_);
  auto it = table_.find(key);
  if (it == table_.end()) return std::nullopt;
  const Entry& e = it->second;
  if (e.state == State::SlowQueued) return e.buffer;
  return std::nullopt;
}

std::size_t QueueSet::purge_expired(std::int64_t now_us) {
  Pending out;
  std::size_t purged = 0;
  {
    std::lock_guard lock(mu_);
    std::vector<Aged> requeue;
    while (!aging_.empty() && now_us - aging_.front().stamp_us > cfg_.ttl_us) {
      const Aged a = aging_.front();
      aging_.pop_front();
      auto it = table_.find(a.key);
      if (it == table_.end() || it->second.id != a.id) continue;
      Entry& e = it->second;
      if (e.state == State::Decided) {
        // Tombstones live until the flow has been idle for a full ttl.
        if (now_us - e.buffer.last_seen_us > cfg_.ttl_us) {
          table_.erase(it);
        } else {
          requeue.push_back({a.key, a.id, now_us});
        }
      } else if (e.state == State::SlowQueued) {
        requeue.push_back({a.key, a.id, now_us});
      } else if (expire_locked(e, now_us, out)) {
        ++purged;
        ++counters_.purged;
        requeue.push_back({a.key, a.id, now_us});
      }
    }
    for (const auto& a : requeue) aging_.push_back(a);
    // Drop q3 bookkeeping for requests that are no longer outstanding.
    while (!q3_.empty()) {
      auto it = table_.find(q3_.front().first);
      const bool outstanding = it != table_.end() && it->second.id == q3_.front().second &&
                               (it->second.state == State::Escalated ||
                                (it->second.state == State::SlowQueued && !it->second.slow_taken));
      if (outstanding) break;
      q3_.pop_front();
    }
  }
  emit(out);
  return purged;
}

void QueueSet::finish_input(std::int64_t now_us) {
  Pending out;
  {
    std::lock_guard lock(mu_);
    input_done_ = true;
    for (auto& [key, e] : table_) {
      if (e.state != State::Escalated) continue;
      const StageTimes t = e.escalation->times;
      const int label = e.escalation->fallback_label;
      finalize_locked(e, label, label >= 0 ? DecidedBy::SlowTimeoutFallback : DecidedBy::Dropped, t, now_us,
                      "input ended before the slow stage had its packets", out);
    }
  }
  work_cv_.notify_all();
  emit(out);
}

FlowStateCounters QueueSet::counters() const {
  std::lock_guard lock(mu_);
  return counters_;
}

std::size_t QueueSet::q1_size() const {
  std::lock_guard lock(mu_);
  return q1_.size();
}

std::size_t QueueSet::q2_size() const {
  std::lock_guard lock(mu_);
  return live_;
}

std::size_t QueueSet::q3_size() const {
  std::lock_guard lock(mu_);
  return q3_count_;
}

std::optional<FlowBuffer> QueueSet::buffer(const FlowKey& key) const {
  std::lock_guard lock(mu_);
  auto it = table_.find(key);
  if (it == table_.end() || it->second.state == State::Decided) return std::nullopt;
  return it->second.buffer;
}

}  // namespace flowcascade
