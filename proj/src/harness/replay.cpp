#include <algorithm>
#include <cmath>
#include <thread>
#include <unordered_map>
#include <unordered_set>

#include "flowcascade/clock.hpp"
#include "flowcascade/error.hpp"
#include "flowcascade/harness.hpp"
#include "flowcascade/packet_builder.hpp"
#include "flowcascade/pcap.hpp"

namespace flowcascade {

namespace {

std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

void put16(std::uint8_t* p, std::uint16_t v) {
  p[0] = static_cast<std::uint8_t>(v >> 8);
  p[1] = static_cast<std::uint8_t>(v);
}

// New source address with all three checksums recomputed.
void rewrite_source(std::vector<std::uint8_t>& frame, LinkType link, std::uint32_t src) {
  const std::size_t ip = link == LinkType::Ethernet ? 14 : 0;
  std::uint8_t* h = frame.data() + ip;
  const std::size_t ihl = static_cast<std::size_t>(h[0] & 0x0F) * 4;
  put16(h + 12, static_cast<std::uint16_t>(src >> 16));
  put16(h + 14, static_cast<std::uint16_t>(src));
  put16(h + 10, 0);
  put16(h + 10, internet_checksum(h, ihl));

  const std::uint8_t proto = h[9];
  const std::size_t total = static_cast<std::size_t>((h[2] << 8) | h[3]);
  const std::size_t l4_len = total - ihl;
  std::uint8_t* l4 = h + ihl;
  const std::size_t captured = frame.size() - ip - ihl;
  const std::size_t csum_at = proto == kProtoTcp ? 16 : 6;
  if (captured < csum_at + 2) return;
  std::uint32_t pseudo = 0;
  for (std::size_t i = 12; i < 20; i += 2) pseudo += static_cast<std::uint32_t>((h[i] << 8) | h[i + 1]);
  pseudo += proto;
  pseudo += static_cast<std::uint32_t>(l4_len);
  put16(l4 + csum_at, 0);
  // Uncaptured payload is zero-filled and adds nothing to the sum.
  put16(l4 + csum_at, internet_checksum(l4, std::min(captured, l4_len), pseudo));
}

struct Loaded {
  CaptureFrame frame;
  std::optional<FlowKey> key;
};

}  // namespace

ReplaySchedule build_schedule(const std::string& pcap_path, const std::map<FlowKey, int>* labels,
                              const ReplayOptions& opts) {
  if (opts.target_rate < 0.0 || opts.max_duration_s < 0.0) {
    throw ValidationError("replay: target_rate and max_duration must be non-negative");
  }
  PcapReader reader(pcap_path);
  ReplaySchedule s;
  s.link = reader.link_type();

  std::vector<Loaded> frames;
  std::unordered_map<FlowKey, std::int64_t, FlowKeyHash> start;
  std::int64_t t0 = 0;
  while (auto f = reader.next()) {
    if (frames.empty()) t0 = f->time_us;
    Loaded l{std::move(*f), std::nullopt};
    l.key = peek_flow_key(l.frame.data, s.link);
    if (l.key) start.try_emplace(*l.key, l.frame.time_us - t0);
    frames.push_back(std::move(l));
  }
  if (frames.empty()) return s;

  std::int64_t first = 0, last = 0;
  bool any = false;
  for (const auto& [k, t] : start) {
    first = any ? std::min(first, t) : t;
    last = any ? std::max(last, t) : t;
    any = true;
  }
  const double span_s = static_cast<double>(last - first) / 1e6;
  s.native_flow_rate = span_s > 0.0 ? static_cast<double>(start.size()) / span_s : static_cast<double>(start.size());
  const double k = opts.target_rate > s.native_flow_rate ? opts.target_rate / s.native_flow_rate : 1.0;
  const auto whole = static_cast<int>(std::floor(k));
  const double frac = k - whole;
  const std::int64_t cutoff =
      opts.max_duration_s > 0.0 ? static_cast<std::int64_t>(opts.max_duration_s * 1e6) : INT64_MAX;

  // Copies per flow: (shift, new source address).
  std::unordered_set<FlowKey, FlowKeyHash> used;
  for (const auto& [key, t] : start) used.insert(key);
  std::unordered_map<FlowKey, std::vector<std::pair<std::int64_t, std::uint32_t>>, FlowKeyHash> copies;
  const int max_copy = frac > 0.0 ? whole : whole - 1;
  // Deterministic order for address assignment.
  std::vector<std::pair<std::int64_t, FlowKey>> ordered;
  for (const auto& [key, t] : start) ordered.emplace_back(t, key);
  std::sort(ordered.begin(), ordered.end());
  std::size_t n_flows = 0;
  for (const auto& [t, key] : ordered) {
    if (t <= cutoff) ++n_flows;
    for (int c = 1; c <= max_copy; ++c) {
      if (c == whole) {
        const double u = static_cast<double>(mix(FlowKeyHash{}(key) ^ opts.seed) >> 11) * 0x1.0p-53;
        if (u >= frac) continue;
      }
      const auto shift = static_cast<std::int64_t>(1e6 * c / (k * s.native_flow_rate));
      if (t + shift > cutoff) continue;
      FlowKey nk = key;
      for (std::uint64_t attempt = 0;; ++attempt) {
        nk.src_addr = key.src_addr ^ static_cast<std::uint32_t>(mix(opts.seed + 1000003ULL * c + attempt) | 1U);
        if (used.insert(nk).second) break;
      }
      copies[key].emplace_back(shift, nk.src_addr);
      if (labels != nullptr) {
        if (auto it = labels->find(key); it != labels->end()) s.labels[nk] = it->second;
      }
      ++n_flows;
    }
  }
  s.n_flows = n_flows;

  for (auto& l : frames) {
    const std::int64_t offset = l.frame.time_us - t0;
    if (l.key) {
      if (start[*l.key] > cutoff) continue;
      if (labels != nullptr) {
        if (auto it = labels->find(*l.key); it != labels->end()) s.labels[*l.key] = it->second;
      }
      if (auto it = copies.find(*l.key); it != copies.end()) {
        for (const auto& [shift, src] : it->second) {
          ReplayFrame r{l.frame.data, offset + shift};
          rewrite_source(r.bytes, s.link, src);
          s.frames.push_back(std::move(r));
        }
      }
    } else if (offset > cutoff) {
      continue;
    }
    s.frames.push_back(ReplayFrame{std::move(l.frame.data), offset});
  }
  std::stable_sort(s.frames.begin(), s.frames.end(),
                   [](const ReplayFrame& a, const ReplayFrame& b) { return a.offset_us < b.offset_us; });
  s.duration_s = s.frames.empty() ? 0.0 : static_cast<double>(s.frames.back().offset_us) / 1e6;
  return s;
}

PacingStats replay(const ReplaySchedule& schedule, double speed, const FrameSink& sink) {
  const bool afap = !(speed > 0.0) || std::isinf(speed);
  PacingStats st;
  st.frames = schedule.frames.size();
  std::vector<double> drift;
  if (!afap) drift.reserve(schedule.frames.size());
  const std::int64_t t0 = monotonic_us();
  for (const auto& f : schedule.frames) {
    std::int64_t now = monotonic_us();
    if (!afap) {
      const auto target = t0 + static_cast<std::int64_t>(static_cast<double>(f.offset_us) / speed);
      if (target > now) {
        std::this_thread::sleep_for(std::chrono::microseconds(target - now));
        now = monotonic_us();
      }
      drift.push_back(static_cast<double>(std::max<std::int64_t>(0, now - target)));
      // Stamp with the scheduled arrival so producer lateness counts as latency.
      now = target;
    }
    sink(f.bytes, schedule.link, now);
  }
  st.wall_s = static_cast<double>(monotonic_us() - t0) / 1e6;
  if (!drift.empty()) {
    std::sort(drift.begin(), drift.end());
    auto rank = [&](double q) {
      const auto n = drift.size();
      const auto i = static_cast<std::size_t>(std::ceil(q * static_cast<double>(n)));
      return drift[std::min(n - 1, i == 0 ? 0 : i - 1)];
    };
    st.p50_drift_us = rank(0.5);
    st.p99_drift_us = rank(0.99);
    st.max_drift_us = drift.back();
    st.unreliable = st.p99_drift_us > 1000.0;
  }
  return st;
}

}  // namespace flowcascade
