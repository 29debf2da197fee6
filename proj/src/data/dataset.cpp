#include "flowcascade/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>
#include <unordered_map>

#include "flowcascade/clock.hpp"
#include "flowcascade/error.hpp"
#include "flowcascade/pcap.hpp"

namespace flowcascade {

std::map<FlowKey, int> read_labels(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IngestError("cannot open labels file '" + path + "'");
  std::map<FlowKey, int> labels;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line_no == 1 && line.rfind("flow_key", 0) == 0) continue;
    const auto comma = line.rfind(',');
    const auto where = "labels '" + path + "' line " + std::to_string(line_no);
    if (comma == std::string::npos) throw IngestError(where + ": expected flow_key,label");
    const auto key = parse_flow_key(std::string_view(line).substr(0, comma));
    if (!key) throw IngestError(where + ": bad flow key");
    int label = 0;
    try {
      std::size_t used = 0;
      label = std::stoi(line.substr(comma + 1), &used);
      if (used != line.size() - comma - 1) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw IngestError(where + ": bad label");
    }
    if (label < 0) throw IngestError(where + ": negative label");
    labels[*key] = label;
  }
  return labels;
}

void write_labels(const std::string& path, const std::map<FlowKey, int>& labels) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write labels file '" + path + "'");
  out << "flow_key,label\n";
  for (const auto& [k, v] : labels) out << to_string(k) << ',' << v << '\n';
}

std::vector<int> FlowDataset::labels(std::span<const std::size_t> idx) const {
  std::vector<int> y;
  y.reserve(idx.size());
  for (auto i : idx) y.push_back(flows[i].label);
  return y;
}

FlowDataset load_flow_dataset(const std::string& pcap_path, const std::string& labels_path, int max_depth) {
  const auto labels = read_labels(labels_path);
  return load_flow_dataset(pcap_path, &labels, max_depth);
}

FlowDataset load_flow_dataset(const std::string& pcap_path, const std::map<FlowKey, int>* labels, int max_depth) {
  if (max_depth < 1) throw ValidationError("max_depth must be >= 1");
  PcapReader reader(pcap_path);
  FlowDataset data;
  std::unordered_map<FlowKey, std::size_t, FlowKeyHash> index;
  PacketVector scratch;
  while (auto frame = reader.next()) {
    const auto t0 = monotonic_ns();
    const auto key = decode_packet_into(frame->data, reader.link_type(), scratch);
    const auto dt = monotonic_ns() - t0;
    if (!key) {
      ++data.skipped_frames;
      continue;
    }
    auto [it, fresh] = index.try_emplace(*key, data.flows.size());
    if (fresh) {
      FlowRecord r;
      r.key = *key;
      if (labels != nullptr) {
        auto lt = labels->find(*key);
        r.label = lt == labels->end() ? -1 : lt->second;
      }
      data.flows.push_back(std::move(r));
    }
    FlowRecord& r = data.flows[it->second];
    ++r.total_packets;
    if (r.packets.size() < static_cast<std::size_t>(max_depth)) {
      r.packets.push_back(scratch);
      r.times_us.push_back(frame->time_us);
      r.featurize_ns.push_back(dt);
    }
    scratch = PacketVector{};
  }
  if (labels != nullptr) {
    std::erase_if(data.flows, [](const FlowRecord& r) { return r.label < 0; });
  }
  int max_label = -1;
  for (const auto& f : data.flows) max_label = std::max(max_label, f.label);
  data.n_classes = max_label + 1;
  return data;
}

void flow_features(const FlowRecord& flow, int depth, std::span<std::int8_t> out) {
  const auto d = static_cast<std::size_t>(depth);
  if (out.size() != d * kPacketCells) throw ValidationError("flow_features: output width mismatch");
  std::fill(out.begin(), out.end(), kAbsent);
  for (std::size_t p = 0; p < std::min(d, flow.packets.size()); ++p) {
    std::copy(flow.packets[p].cells.begin(), flow.packets[p].cells.end(), out.begin() + static_cast<std::ptrdiff_t>(p * kPacketCells));
  }
}

TernaryMatrix feature_matrix(const FlowDataset& data, std::span<const std::size_t> idx, int depth) {
  TernaryMatrix X(idx.size(), static_cast<std::size_t>(depth) * kPacketCells, kAbsent);
  for (std::size_t r = 0; r < idx.size(); ++r) flow_features(data.flows[idx[r]], depth, X.row(r));
  return X;
}

DatasetSplit split_dataset(std::size_t n, std::uint64_t seed, double train_fraction, double validation_fraction) {
  if (train_fraction < 0 || validation_fraction < 0 || train_fraction + validation_fraction > 1.0) {
    throw ValidationError("split fractions must be non-negative and sum to at most 1");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_train = static_cast<std::size_t>(static_cast<double>(n) * train_fraction);
  const auto n_val = static_cast<std::size_t>(static_cast<double>(n) * validation_fraction);
  DatasetSplit s;
  s.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.validation.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train),
                      order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  s.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), order.end());
  // Keep each part in capture order.
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.validation.begin(), s.validation.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

std::int64_t collection_wait_us(const FlowRecord& flow, int depth) {
  if (flow.times_us.empty() || depth <= 1) return 0;
  const auto last = std::min(static_cast<std::size_t>(depth), flow.times_us.size()) - 1;
  return flow.times_us[last] - flow.times_us.front();
}

}  // namespace flowcascade
