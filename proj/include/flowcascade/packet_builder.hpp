#pragma once

#include <cstdint>
#include <vector>

#include "flowcascade/packet_codec.hpp"

namespace flowcascade {

struct Ipv4Fields {
  std::uint32_t src = 0;
  std::uint32_t dst = 0;
  std::uint8_t tos = 0;
  std::uint8_t ttl = 64;
  std::uint16_t id = 0;
  bool dont_fragment = true;
  std::vector<std::uint8_t> options;  // padded with zeros to a 4-byte multiple
};

struct TcpFields {
  std::uint16_t src_port = 0;
  std::uint16_t dst_port = 0;
  std::uint32_t seq = 0;
  std::uint32_t ack = 0;
  std::uint8_t flags = 0;  // CWR ECE URG ACK PSH RST SYN FIN
  std::uint16_t window = 0;
  std::uint16_t urgent = 0;
  std::vector<std::uint8_t> options;  // padded with zeros to a 4-byte multiple
};

struct UdpFields {
  std::uint16_t src_port = 0;
  std::uint16_t dst_port = 0;
};

namespace tcp_flag {
inline constexpr std::uint8_t kFin = 0x01;
inline constexpr std::uint8_t kSyn = 0x02;
inline constexpr std::uint8_t kRst = 0x04;
inline constexpr std::uint8_t kPsh = 0x08;
inline constexpr std::uint8_t kAck = 0x10;
}  // namespace tcp_flag

// A frame holding only headers; orig_len is the on-the-wire length
// including the zero-filled payload that was not captured.
struct BuiltFrame {
  std::vector<std::uint8_t> bytes;
  std::uint32_t orig_len = 0;
};

BuiltFrame build_tcp_frame(const Ipv4Fields& ip, const TcpFields& tcp, std::size_t payload_len, LinkType link);
BuiltFrame build_udp_frame(const Ipv4Fields& ip, const UdpFields& udp, std::size_t payload_len, LinkType link);

std::uint16_t internet_checksum(const std::uint8_t* data, std::size_t len, std::uint32_t seed = 0);

}  // namespace flowcascade
