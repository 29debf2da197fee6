#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "flowcascade/harness.hpp"
#include "flowcascade/models.hpp"
#include "flowcascade/packet_builder.hpp"

namespace fctest {

using namespace flowcascade;

inline std::string temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("flowcascade_" + name);
  std::filesystem::create_directories(p);
  return p.string();
}

// A small, quick trace: short gaps and a high flow rate.
inline SyntheticConfig small_synthetic(std::size_t n_flows, std::uint64_t seed = 5) {
  SyntheticConfig c;
  c.seed = seed;
  c.n_flows = n_flows;
  c.flow_rate = 4000.0;
  c.gap_scale_us = 300.0;
  c.gap_cap_us = 20'000.0;
  return c;
}

// Decision tree that walks `cells` in order and lands in leaf i at the
// first cell equal to 1; the last leaf catches everything else.
inline std::shared_ptr<const ClassifierModel> chain_model(int depth, const std::vector<std::size_t>& cells,
                                                          const std::vector<std::vector<double>>& leaves) {
  Tree t;
  t.payload_width = static_cast<int>(leaves.front().size());
  for (const auto& l : leaves) t.leaf_values.insert(t.leaf_values.end(), l.begin(), l.end());
  for (std::size_t i = 0; i < cells.size(); ++i) {
    Tree::Node split;
    split.feature = static_cast<std::int32_t>(cells[i]);
    split.threshold = 0.5;
    const auto here = static_cast<std::int32_t>(t.nodes.size());
    split.right = here + 1;
    split.left = here + 2;
    t.nodes.push_back(split);
    Tree::Node leaf;
    leaf.leaf = static_cast<std::int32_t>(i);
    t.nodes.push_back(leaf);
  }
  Tree::Node last;
  last.leaf = static_cast<std::int32_t>(cells.size());
  t.nodes.push_back(last);
  return std::make_shared<const ClassifierModel>(ModelFamily::DecisionTree, t.payload_width, depth,
                                                 std::vector<Tree>{t});
}

inline TimedPacket tcp_packet(std::uint32_t src, std::uint8_t ttl, std::uint8_t flags = tcp_flag::kAck) {
  Ipv4Fields ip;
  ip.src = src;
  ip.dst = 0xC0A80001U;
  ip.ttl = ttl;
  TcpFields t;
  t.src_port = 40000;
  t.dst_port = 443;
  t.flags = flags;
  const auto f = build_tcp_frame(ip, t, 0, LinkType::RawIPv4);
  auto d = decode_packet(f.bytes, LinkType::RawIPv4);
  TimedPacket p;
  p.key = d->key;
  p.vector = d->vector;
  return p;
}

// IPv4 TTL occupies byte 8, i.e. cells 64..71 MSB first.
inline std::size_t ttl_bit_cell(int bit) { return 71 - static_cast<std::size_t>(bit); }

}  // namespace fctest
