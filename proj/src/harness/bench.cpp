#include <cmath>
#include <mutex>

#include "flowcascade/harness.hpp"

namespace flowcascade {

ReplayRun replay_into(const CascadeSpec& spec, const ReplaySchedule& schedule, double speed, ServeConfig cfg) {
  if (!(speed > 0.0) || std::isinf(speed)) cfg.flow_state.block_when_full = true;
  ReplayRun run;
  run.outcomes.reserve(schedule.n_flows);
  std::mutex mu;
  CascadeServer server(spec, cfg, [&](FlowOutcome&& o) {
    std::lock_guard lock(mu);
    run.outcomes.push_back(std::move(o));
  });
  run.pacing = replay(schedule, speed, [&](std::span<const std::uint8_t> frame, LinkType link, std::int64_t now) {
    server.ingest(frame, link, now);
  });
  server.finish();
  run.counters = server.counters();
  run.skipped_frames = server.skipped_frames();
  return run;
}

}  // namespace flowcascade
