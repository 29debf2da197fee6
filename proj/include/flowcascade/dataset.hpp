#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "flowcascade/models.hpp"
#include "flowcascade/packet_codec.hpp"

namespace flowcascade {

// Sidecar labels: "flow_key,label" with an optional header line.
std::map<FlowKey, int> read_labels(const std::string& path);
void write_labels(const std::string& path, const std::map<FlowKey, int>& labels);

// The first packets of one flow, in arrival order.
struct FlowRecord {
  FlowKey key;
  int label = -1;  // -1 when unlabeled
  std::vector<PacketVector> packets;
  std::vector<std::int64_t> times_us;      // capture timestamps
  std::vector<std::int64_t> featurize_ns;  // measured decode time per packet
  std::uint64_t total_packets = 0;
};

struct FlowDataset {
  std::vector<FlowRecord> flows;  // ordered by first packet
  int n_classes = 0;
  std::uint64_t skipped_frames = 0;

  std::vector<int> labels(std::span<const std::size_t> idx) const;
};

// Groups a capture into flows, keeping up to max_depth packets each.
// With a labels map, unlabeled flows are dropped.
FlowDataset load_flow_dataset(const std::string& pcap_path, const std::string& labels_path, int max_depth);
FlowDataset load_flow_dataset(const std::string& pcap_path, const std::map<FlowKey, int>* labels, int max_depth);

// Concatenation of the first `depth` packet vectors; missing packets read
// as ABSENT.
void flow_features(const FlowRecord& flow, int depth, std::span<std::int8_t> out);
TernaryMatrix feature_matrix(const FlowDataset& data, std::span<const std::size_t> idx, int depth);

struct DatasetSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
  std::vector<std::size_t> test;
};

// Seeded shuffle then 50/10/40 by default.
DatasetSplit split_dataset(std::size_t n, std::uint64_t seed, double train_fraction = 0.5,
                           double validation_fraction = 0.1);

// Wait from the first packet until packet `depth` arrived (or the flow's
// last packet if it is shorter).
std::int64_t collection_wait_us(const FlowRecord& flow, int depth);

}  // namespace flowcascade
