#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "flowcascade/packet_codec.hpp"

namespace flowcascade {

struct CaptureFrame {
  std::vector<std::uint8_t> data;  // captured bytes (may be shorter than orig_len)
  std::int64_t time_us = 0;
  std::uint32_t orig_len = 0;
};

// Streaming reader for classic pcap files: both byte orders, microsecond
// and nanosecond timestamp variants. Timestamps are normalized to
// microseconds. Link types: 1 (Ethernet), 101 and 228 (raw IPv4).
class PcapReader {
 public:
  explicit PcapReader(const std::string& path);

  LinkType link_type() const { return link_; }

  // Next frame in file order, or nullopt at a clean end of file. A record
  // cut short by end of file raises IngestError.
  std::optional<CaptureFrame> next();

 private:
  std::uint32_t read_u32(const std::uint8_t* p) const;

  std::string path_;
  std::ifstream in_;
  bool swapped_ = false;
  bool nanosecond_ = false;
  LinkType link_ = LinkType::Ethernet;
  std::uint64_t offset_ = 0;
};

// Whole-file convenience wrapper around PcapReader.
std::vector<CaptureFrame> read_capture(const std::string& path, LinkType* link = nullptr);

class PcapWriter {
 public:
  PcapWriter(const std::string& path, LinkType link, bool nanosecond = false, std::uint32_t snaplen = 65535);

  void write(std::span<const std::uint8_t> data, std::int64_t time_us, std::uint32_t orig_len = 0);
  void flush() { out_.flush(); }

 private:
  std::ofstream out_;
  bool nanosecond_;
};

}  // namespace flowcascade
