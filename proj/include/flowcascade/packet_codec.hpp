#pragma once

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace flowcascade {

inline constexpr std::uint8_t kProtoTcp = 6;
inline constexpr std::uint8_t kProtoUdp = 17;

// Five-tuple flow identity. Addresses are held in host byte order.
struct FlowKey {
  std::uint32_t src_addr = 0;
  std::uint32_t dst_addr = 0;
  std::uint16_t src_port = 0;
  std::uint16_t dst_port = 0;
  std::uint8_t protocol = 0;

  friend auto operator<=>(const FlowKey&, const FlowKey&) = default;
};

struct FlowKeyHash {
  std::size_t operator()(const FlowKey& k) const noexcept {
    std::uint64_t h = (static_cast<std::uint64_t>(k.src_addr) << 32) | k.dst_addr;
    h ^= (static_cast<std::uint64_t>(k.src_port) << 24) ^ (static_cast<std::uint64_t>(k.dst_port) << 8) ^ k.protocol;
    // splitmix64 finalizer
    h += 0x9e3779b97f4a7c15ULL;
    h = (h ^ (h >> 30)) * 0xbf58476d1ce4e5b9ULL;
    h = (h ^ (h >> 27)) * 0x94d049bb133111ebULL;
    return static_cast<std::size_t>(h ^ (h >> 31));
  }
};

// "a.b.c.d:sport->e.f.g.h:dport/proto"
std::string to_string(const FlowKey& key);
std::optional<FlowKey> parse_flow_key(std::string_view text);

std::string format_ipv4(std::uint32_t addr);

// Ternary per-bit header layout. ABSENT cells hold -1, which is also the
// numeric value models consume for them.
inline constexpr std::size_t kPacketCells = 1024;
inline constexpr std::int8_t kAbsent = -1;
inline constexpr std::size_t kIpv4Offset = 0;
inline constexpr std::size_t kIpv4Cells = 480;  // 60 bytes
inline constexpr std::size_t kTcpOffset = 480;
inline constexpr std::size_t kTcpCells = 480;   // 60 bytes
inline constexpr std::size_t kUdpOffset = 960;
inline constexpr std::size_t kUdpCells = 64;    // 8 bytes

struct PacketVector {
  std::array<std::int8_t, kPacketCells> cells;

  PacketVector() { cells.fill(kAbsent); }

  std::span<const std::int8_t> ipv4() const { return {cells.data() + kIpv4Offset, kIpv4Cells}; }
  std::span<const std::int8_t> tcp() const { return {cells.data() + kTcpOffset, kTcpCells}; }
  std::span<const std::int8_t> udp() const { return {cells.data() + kUdpOffset, kUdpCells}; }

  friend bool operator==(const PacketVector&, const PacketVector&) = default;
};

enum class LinkType { Ethernet, RawIPv4 };

// Decodes one frame into the caller's vector. Returns the flow key, or
// nullopt for anything that is not a well-formed, unfragmented IPv4
// TCP/UDP packet with complete headers (the "Skip" outcome).
std::optional<FlowKey> decode_packet_into(std::span<const std::uint8_t> raw, LinkType link,
                                          PacketVector& out);

struct DecodedPacket {
  FlowKey key;
  PacketVector vector;
};

std::optional<DecodedPacket> decode_packet(std::span<const std::uint8_t> raw, LinkType link);

// Only the five-tuple; same Skip rules as decode_packet.
std::optional<FlowKey> peek_flow_key(std::span<const std::uint8_t> raw, LinkType link);

// Header bytes recovered from the fully present bytes of each section.
struct HeaderBytes {
  std::vector<std::uint8_t> ipv4;
  std::vector<std::uint8_t> tcp;
  std::vector<std::uint8_t> udp;
};

HeaderBytes reencode(const PacketVector& vector);

// "flow_key,cell_0,...,cell_1023" with ABSENT written as -1.
std::string vector_csv_row(const FlowKey& key, const PacketVector& vector);
std::string vector_csv_header();

struct TimedPacket {
  FlowKey key;
  PacketVector vector;
  std::int64_t capture_time_us = 0;
  std::int64_t ingest_time_us = 0;  // monotonic, when decoding started
  std::int64_t featurize_ns = 0;    // decode duration
};

}  // namespace flowcascade
