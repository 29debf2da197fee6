#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>
#include <set>

#include "flowcascade/dataset.hpp"
#include "flowcascade/error.hpp"
#include "flowcascade/harness.hpp"
#include "flowcascade/packet_builder.hpp"
#include "flowcascade/pcap.hpp"

namespace flowcascade {

namespace {

constexpr std::uint16_t kTcpPorts[] = {443, 80, 22, 25, 993, 3306, 5432, 6379, 8080, 21, 110, 143};
constexpr std::uint16_t kUdpPorts[] = {53, 123, 161, 514, 1194, 5060};
constexpr std::int64_t kEpochUs = 1'700'000'000LL * 1'000'000LL;

bool is_udp_class(int c) { return c % 4 == 3; }

struct SynthFlow {
  FlowKey key;
  int cls = 0;
  bool hard = false;
  bool hint = false;
  int n_packets = 0;
  std::int64_t start_us = 0;
  std::uint16_t ip_id = 0;
  std::uint32_t seq = 0;
};

struct SynthPacket {
  std::int64_t t_us;
  std::size_t flow;
  int index;
};

void check(const SyntheticConfig& c) {
  if (c.n_classes < 2 || c.n_classes > 16) throw ValidationError("synthetic: n_classes must be in [2, 16]");
  if (c.difficulty < 0.0 || c.difficulty > 1.0) throw ValidationError("synthetic: difficulty must be in [0, 1]");
  if (c.flow_rate <= 0.0) throw ValidationError("synthetic: flow_rate must be positive");
  if (c.min_packets < 1 || c.max_packets < c.min_packets) throw ValidationError("synthetic: bad packet counts");
  if (c.gap_scale_us <= 0.0 || c.gap_shape <= 0.0) throw ValidationError("synthetic: bad inter-arrival shape");
  if (c.hard_hint < 0.0 || c.hard_hint > 1.0 || c.later_reveal < 0.0 || c.later_reveal > 1.0) {
    throw ValidationError("synthetic: probabilities must be in [0, 1]");
  }
}

BuiltFrame first_frame(const SynthFlow& f, std::mt19937_64& rng) {
  const int c = f.cls;
  Ipv4Fields ip;
  ip.src = f.key.src_addr;
  ip.dst = f.key.dst_addr;
  ip.id = f.ip_id;
  ip.ttl = f.hard ? 64 : static_cast<std::uint8_t>(128 - 4 * c);
  ip.tos = f.hard && f.hint ? static_cast<std::uint8_t>((c + 1) << 2) : 0;
  if (f.key.protocol == kProtoUdp) {
    UdpFields u{f.key.src_port, f.key.dst_port};
    const std::size_t payload = f.hard ? 40 + rng() % 200 : 24 + 16 * static_cast<std::size_t>(c) + rng() % 8;
    return build_udp_frame(ip, u, payload, LinkType::Ethernet);
  }
  TcpFields t;
  t.src_port = f.key.src_port;
  t.dst_port = f.key.dst_port;
  t.seq = f.seq;
  t.flags = tcp_flag::kSyn;
  if (f.hard) {
    t.window = 64240;
    t.options = {2, 4, 0x05, 0xB4, 1, 3, 3, 7, 4, 2};
  } else {
    t.window = static_cast<std::uint16_t>(8192 + 4096 * c);
    const auto mss = static_cast<std::uint16_t>(1460 - 20 * c);
    t.options = {2, 4, static_cast<std::uint8_t>(mss >> 8), static_cast<std::uint8_t>(mss), 1, 3, 3,
                 static_cast<std::uint8_t>(c)};
    if (c % 2 == 0) t.options.insert(t.options.end(), {4, 2});
  }
  return build_tcp_frame(ip, t, 0, LinkType::Ethernet);
}

BuiltFrame later_frame(SynthFlow& f, const SyntheticConfig& cfg, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  // Class size bands live in bits 8..12 of the total length; noise stays below 256.
  std::size_t total = u01(rng) < cfg.later_reveal ? 256 * static_cast<std::size_t>(f.cls + 1) + rng() % 64
                                                  : 64 + rng() % 128;
  Ipv4Fields ip;
  ip.src = f.key.src_addr;
  ip.dst = f.key.dst_addr;
  ip.id = ++f.ip_id;
  ip.ttl = f.hard ? 64 : static_cast<std::uint8_t>(128 - 4 * f.cls);
  if (f.key.protocol == kProtoUdp) {
    UdpFields u{f.key.src_port, f.key.dst_port};
    return build_udp_frame(ip, u, total - 28, LinkType::Ethernet);
  }
  TcpFields t;
  t.src_port = f.key.src_port;
  t.dst_port = f.key.dst_port;
  t.seq = f.seq;
  t.ack = 1;
  const std::size_t payload = total - 40;
  t.flags = static_cast<std::uint8_t>(tcp_flag::kAck | (payload > 0 ? tcp_flag::kPsh : 0));
  t.window = 502;
  f.seq += static_cast<std::uint32_t>(payload);
  return build_tcp_frame(ip, t, payload, LinkType::Ethernet);
}

}  // namespace

LabeledTrace make_synthetic_benchmark(const SyntheticConfig& cfg, const std::string& dir, const std::string& name) {
  check(cfg);
  std::filesystem::create_directories(dir);
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::exponential_distribution<double> flow_gap(cfg.flow_rate / 1e6);
  std::uniform_int_distribution<int> cls_dist(0, cfg.n_classes - 1);
  std::uniform_int_distribution<int> len_dist(cfg.min_packets, cfg.max_packets);

  std::vector<SynthFlow> flows;
  flows.reserve(cfg.n_flows);
  std::set<FlowKey> seen;
  double t = 0.0;
  for (std::size_t i = 0; i < cfg.n_flows; ++i) {
    SynthFlow f;
    f.cls = cls_dist(rng);
    f.hard = u01(rng) < cfg.difficulty;
    f.hint = u01(rng) < cfg.hard_hint;
    f.n_packets = len_dist(rng);
    t += flow_gap(rng);
    f.start_us = static_cast<std::int64_t>(t);
    f.ip_id = static_cast<std::uint16_t>(rng());
    f.seq = static_cast<std::uint32_t>(rng());
    const bool udp = is_udp_class(f.cls);
    do {
      f.key.protocol = udp ? kProtoUdp : kProtoTcp;
      f.key.src_addr = 0x0A000000U | static_cast<std::uint32_t>(rng() & 0xFFFFFF);
      f.key.dst_addr = 0xAC100000U | static_cast<std::uint32_t>(rng() & 0xFFFFF);
      f.key.src_port = static_cast<std::uint16_t>(32768 + rng() % 28232);
      if (f.hard) {
        f.key.dst_port = static_cast<std::uint16_t>(20000 + rng() % 40000);
      } else {
        const int slot = f.cls / 4 * 3 + f.cls % 4;
        f.key.dst_port = udp ? kUdpPorts[f.cls / 4] : kTcpPorts[slot];
      }
    } while (!seen.insert(f.key).second);
    flows.push_back(f);
  }

  std::vector<SynthPacket> packets;
  const double inv_shape = 1.0 / cfg.gap_shape;
  for (std::size_t i = 0; i < flows.size(); ++i) {
    double at = static_cast<double>(flows[i].start_us);
    for (int p = 0; p < flows[i].n_packets; ++p) {
      if (p > 0) {
        // Pareto by inversion, capped.
        const double u = 1.0 - u01(rng);
        at += std::min(cfg.gap_scale_us / std::pow(u, inv_shape), cfg.gap_cap_us);
      }
      packets.push_back({static_cast<std::int64_t>(at), i, p});
    }
  }
  std::stable_sort(packets.begin(), packets.end(),
                   [](const SynthPacket& a, const SynthPacket& b) { return a.t_us < b.t_us; });

  LabeledTrace trace;
  trace.capture = (std::filesystem::path(dir) / (name + ".pcap")).string();
  trace.labels = (std::filesystem::path(dir) / (name + ".labels.csv")).string();
  for (int c = 0; c < cfg.n_classes; ++c) trace.class_names.push_back("class" + std::to_string(c));

  PcapWriter writer(trace.capture, LinkType::Ethernet);
  for (const auto& p : packets) {
    SynthFlow& f = flows[p.flow];
    const BuiltFrame frame = p.index == 0 ? first_frame(f, rng) : later_frame(f, cfg, rng);
    writer.write(frame.bytes, kEpochUs + p.t_us, frame.orig_len);
  }
  writer.flush();

  std::map<FlowKey, int> labels;
  for (const auto& f : flows) labels[f.key] = f.cls;
  write_labels(trace.labels, labels);
  return trace;
}

}  // namespace flowcascade
