#include "flowcascade/pcap.hpp"

#include <cstring>

#include "flowcascade/error.hpp"

namespace flowcascade {
namespace {

constexpr std::uint32_t kMagicMicro = 0xa1b2c3d4;
constexpr std::uint32_t kMagicNano = 0xa1b23c4d;
constexpr std::uint32_t kLinkEthernet = 1;
constexpr std::uint32_t kLinkRaw = 101;
constexpr std::uint32_t kLinkIpv4 = 228;

std::uint32_t bswap(std::uint32_t v) { return __builtin_bswap32(v); }

std::uint32_t load_native(const std::uint8_t* p) {
  std::uint32_t v;
  std::memcpy(&v, p, sizeof(v));
  return v;
}

}  // namespace

PcapReader::PcapReader(const std::string& path) : path_(path), in_(path, std::ios::binary) {
  if (!in_) throw IngestError("cannot open capture '" + path + "'");
  std::uint8_t header[24];
  in_.read(reinterpret_cast<char*>(header), sizeof(header));
  if (in_.gcount() != static_cast<std::streamsize>(sizeof(header))) {
    throw IngestError("capture '" + path + "': truncated global header at offset 0");
  }
  const std::uint32_t magic = load_native(header);
  if (magic == kMagicMicro || magic == kMagicNano) {
    swapped_ = false;
    nanosecond_ = magic == kMagicNano;
  } else if (bswap(magic) == kMagicMicro || bswap(magic) == kMagicNano) {
    swapped_ = true;
    nanosecond_ = bswap(magic) == kMagicNano;
  } else {
    throw IngestError("capture '" + path + "': unknown magic at offset 0");
  }
  const std::uint32_t network = read_u32(header + 20);
  if (network == kLinkEthernet) {
    link_ = LinkType::Ethernet;
  } else if (network == kLinkRaw || network == kLinkIpv4) {
    link_ = LinkType::RawIPv4;
  } else {
    throw IngestError("capture '" + path + "': unsupported link type " + std::to_string(network) +
                      " at offset 20");
  }
  offset_ = sizeof(header);
}

std::uint32_t PcapReader::read_u32(const std::uint8_t* p) const {
  const std::uint32_t v = load_native(p);
  return swapped_ ? bswap(v) : v;
}

std::optional<CaptureFrame> PcapReader::next() {
  std::uint8_t rec[16];
  in_.read(reinterpret_cast<char*>(rec), sizeof(rec));
  const auto got = in_.gcount();
  if (got == 0) return std::nullopt;
  if (got != static_cast<std::streamsize>(sizeof(rec))) {
    throw IngestError("capture '" + path_ + "': truncated record header at offset " + std::to_string(offset_));
  }
  const std::uint32_t sec = read_u32(rec);
  const std::uint32_t frac = read_u32(rec + 4);
  const std::uint32_t incl = read_u32(rec + 8);
  CaptureFrame frame;
  frame.orig_len = read_u32(rec + 12);
  if (incl > (1U << 26)) {
    throw IngestError("capture '" + path_ + "': implausible record length at offset " + std::to_string(offset_));
  }
  frame.time_us = static_cast<std::int64_t>(sec) * 1'000'000 + (nanosecond_ ? frac / 1000 : frac);
  frame.data.resize(incl);
  in_.read(reinterpret_cast<char*>(frame.data.data()), incl);
  if (in_.gcount() != static_cast<std::streamsize>(incl)) {
    throw IngestError("capture '" + path_ + "': truncated record body at offset " + std::to_string(offset_ + 16));
  }
  offset_ += 16 + incl;
  return frame;
}

std::vector<CaptureFrame> read_capture(const std::string& path, LinkType* link) {
  PcapReader reader(path);
  if (link != nullptr) *link = reader.link_type();
  std::vector<CaptureFrame> frames;
  while (auto f = reader.next()) frames.push_back(std::move(*f));
  return frames;
}

namespace {

void put_u32(std::ofstream& out, std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); }
void put_u16(std::ofstream& out, std::uint16_t v) { out.write(reinterpret_cast<const char*>(&v), 2); }

}  // namespace

PcapWriter::PcapWriter(const std::string& path, LinkType link, bool nanosecond, std::uint32_t snaplen)
    : out_(path, std::ios::binary | std::ios::trunc), nanosecond_(nanosecond) {
  if (!out_) throw IngestError("cannot create capture '" + path + "'");
  put_u32(out_, nanosecond ? kMagicNano : kMagicMicro);
  put_u16(out_, 2);
  put_u16(out_, 4);
  put_u32(out_, 0);
  put_u32(out_, 0);
  put_u32(out_, snaplen);
  put_u32(out_, link == LinkType::Ethernet ? kLinkEthernet : kLinkIpv4);
}

void PcapWriter::write(std::span<const std::uint8_t> data, std::int64_t time_us, std::uint32_t orig_len) {
  const auto sec = static_cast<std::uint32_t>(time_us / 1'000'000);
  const auto usec = static_cast<std::uint32_t>(time_us % 1'000'000);
  put_u32(out_, sec);
  put_u32(out_, nanosecond_ ? usec * 1000 : usec);
  put_u32(out_, static_cast<std::uint32_t>(data.size()));
  put_u32(out_, orig_len == 0 ? static_cast<std::uint32_t>(data.size()) : orig_len);
  out_.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
}

}  // namespace flowcascade
