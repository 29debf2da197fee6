#include "flowcascade/pipeline.hpp"

#include <fstream>

#include "flowcascade/clock.hpp"
#include "flowcascade/error.hpp"

namespace flowcascade {

namespace {

FlowStateConfig stage_config(const CascadeSpec& spec, FlowStateConfig cfg) {
  cfg.n_slow_packets = spec.n_slow_packets();
  return cfg;
}

void masked(const StageSpec& st, std::vector<std::int8_t>& x) {
  if (st.mask) apply_mask(*st.mask, x);
}

}  // namespace

CascadeServer::CascadeServer(CascadeSpec spec, ServeConfig cfg, OutcomeSink sink)
    : spec_(std::move(spec)),
      cfg_(std::move(cfg)),
      sink_(std::move(sink)),
      queues_(stage_config(spec_, cfg_.flow_state), [this](FlowOutcome&& o) {
        std::lock_guard lock(sink_mu_);
        if (sink_) sink_(std::move(o));
      }) {
  spec_.validate();
  if (cfg_.consumers < 1) throw ValidationError("consumers must be >= 1");
  for (int i = 0; i < cfg_.consumers; ++i) workers_.emplace_back([this, i] { consumer_loop(i); });
  if (cfg_.run_purge_thread) purger_ = std::thread([this] { purge_loop(); });
}

CascadeServer::~CascadeServer() {
  try {
    finish();
  } catch (...) {
  }
}

bool CascadeServer::ingest(std::span<const std::uint8_t> frame, LinkType link, std::int64_t now_us) {
  const auto key = peek_flow_key(frame, link);
  if (!key) {
    ++skipped_;
    return false;
  }
  queues_.admit(*key, now_us, [&](PacketVector& v) {
    const auto t0 = monotonic_ns();
    decode_packet_into(frame, link, v);
    return monotonic_ns() - t0;
  });
  return true;
}

void CascadeServer::ingest(const TimedPacket& pkt, std::int64_t now_us) { queues_.admit_packet(pkt, now_us); }

void CascadeServer::finish() {
  if (finished_) return;
  finished_ = true;
  queues_.finish_input(monotonic_us());
  for (auto& t : workers_) t.join();
  {
    std::lock_guard lock(purge_mu_);
    stopping_ = true;
  }
  purge_cv_.notify_all();
  if (purger_.joinable()) purger_.join();
}

void CascadeServer::purge_loop() {
  const auto period = std::chrono::microseconds(queues_.config().purge_period_us());
  std::unique_lock lock(purge_mu_);
  while (!stopping_) {
    purge_cv_.wait_for(lock, period, [&] { return stopping_; });
    if (stopping_) break;
    lock.unlock();
    queues_.purge_expired(monotonic_us());
    lock.lock();
  }
}

void CascadeServer::consumer_loop(int index) {
  while (auto work = queues_.pop_work()) {
    if (cfg_.on_work) cfg_.on_work(index);
    if (auto* first = std::get_if<FirstPacketWork>(&*work)) {
      run_first(*first);
    } else {
      run_slow(std::get<SlowWork>(*work));
    }
    queues_.job_done();
  }
}

void CascadeServer::run_first(FirstPacketWork& w) {
  StageTimes& t = w.times;
  t.q1_dequeue_us = monotonic_us();
  try {
    if (spec_.stages.front().role == Stage::Slow) {
      EscalationRequest req{w.key, w.flow_id, -1, t};
      queues_.escalate(std::move(req), monotonic_us());
      return;
    }
    std::vector<std::int8_t> base(w.vector.cells.begin(), w.vector.cells.end());
    std::vector<std::int8_t> x;
    for (std::size_t s = 0; s < spec_.stages.size(); ++s) {
      const StageSpec& st = spec_.stages[s];
      x = base;
      masked(st, x);
      if (cfg_.before_inference) cfg_.before_inference(w.key, st.role);
      const auto t0 = monotonic_ns();
      const Prediction pred = st.model->predict(x);
      t.inference_ns += monotonic_ns() - t0;
      const auto done = monotonic_us();
      (st.role == Stage::Fastest ? t.stage1_done_us : t.stage2_done_us) = done;

      const bool last = s + 1 == spec_.stages.size();
      if (last || !st.policy.escalate(pred, w.key)) {
        queues_.decide(w.key, w.flow_id, pred.label, decided_by_for(st.role), t, done);
        return;
      }
      if (spec_.stages[s + 1].role == Stage::Slow) {
        EscalationRequest req{w.key, w.flow_id, pred.label, t};
        queues_.escalate(std::move(req), monotonic_us());
        return;
      }
    }
  } catch (const std::exception& e) {
    queues_.fail(w.key, w.flow_id, t, monotonic_us(), e.what());
  }
}

void CascadeServer::run_slow(SlowWork& w) {
  StageTimes& t = w.times;
  t.slow_dequeue_us = monotonic_us();
  try {
    const StageSpec& st = spec_.stage(Stage::Slow);
    std::vector<std::int8_t> x(st.model->input_width(), kAbsent);
    const std::size_t n = std::min(w.vectors.size(), static_cast<std::size_t>(st.model->packet_depth()));
    for (std::size_t p = 0; p < n; ++p) {
      std::copy(w.vectors[p].cells.begin(), w.vectors[p].cells.end(),
                x.begin() + static_cast<std::ptrdiff_t>(p * kPacketCells));
    }
    masked(st, x);
    if (cfg_.before_inference) cfg_.before_inference(w.key, Stage::Slow);
    const auto t0 = monotonic_ns();
    const Prediction pred = st.model->predict(x);
    t.inference_ns += monotonic_ns() - t0;
    t.slow_done_us = monotonic_us();
    queues_.decide(w.key, w.flow_id, pred.label, DecidedBy::Slow, t, t.slow_done_us);
  } catch (const std::exception& e) {
    queues_.fail(w.key, w.flow_id, t, monotonic_us(), e.what());
  }
}

std::vector<FlowOutcome> serve_packets(const CascadeSpec& spec, std::span<const TimedPacket> packets,
                                       const ServeConfig& cfg) {
  std::vector<FlowOutcome> out;
  ServeConfig c = cfg;
  c.flow_state.block_when_full = true;
  {
    CascadeServer server(spec, c, [&](FlowOutcome&& o) { out.push_back(std::move(o)); });
    for (const auto& p : packets) server.ingest(p, monotonic_us());
    server.finish();
  }
  return out;
}

void write_outcomes_csv(const std::string& path, std::span<const FlowOutcome> outcomes) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write outcomes CSV '" + path + "'");
  out << "key,label,decided_by,t_first_packet_us,t_decision_us,featurize_ns,inference_ns,q1_enqueue_us,"
         "q1_dequeue_us,stage1_done_us,stage2_done_us,escalated_us,collected_us,slow_dequeue_us,slow_done_us,"
         "diagnostic\n";
  for (const auto& o : outcomes) {
    const auto& t = o.times;
    std::string diag = o.diagnostic;
    for (auto& ch : diag) {
      if (ch == ',' || ch == '\n') ch = ';';
    }
    out << to_string(o.key) << ',' << o.label << ',' << decided_by_name(o.decided_by) << ',' << o.t_first_packet_us
        << ',' << o.t_decision_us << ',' << t.featurize_ns << ',' << t.inference_ns << ',' << t.q1_enqueue_us << ','
        << t.q1_dequeue_us << ',' << t.stage1_done_us << ',' << t.stage2_done_us << ',' << t.escalated_us << ','
        << t.collected_us << ',' << t.slow_dequeue_us << ',' << t.slow_done_us << ',' << diag << '\n';
  }
}

}  // namespace flowcascade
