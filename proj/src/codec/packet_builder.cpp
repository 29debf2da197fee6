#include "flowcascade/packet_builder.hpp"

#include "flowcascade/error.hpp"

namespace flowcascade {
namespace {

void put16(std::vector<std::uint8_t>& v, std::uint16_t x) {
  v.push_back(static_cast<std::uint8_t>(x >> 8));
  v.push_back(static_cast<std::uint8_t>(x));
}

void put32(std::vector<std::uint8_t>& v, std::uint32_t x) {
  put16(v, static_cast<std::uint16_t>(x >> 16));
  put16(v, static_cast<std::uint16_t>(x));
}

std::vector<std::uint8_t> padded(const std::vector<std::uint8_t>& options) {
  std::vector<std::uint8_t> out = options;
  while (out.size() % 4 != 0) out.push_back(0);
  if (out.size() > 40) throw ValidationError("header options exceed 40 bytes");
  return out;
}

std::uint32_t sum16(const std::uint8_t* data, std::size_t len, std::uint32_t acc) {
  for (std::size_t i = 0; i + 1 < len; i += 2) acc += static_cast<std::uint32_t>((data[i] << 8) | data[i + 1]);
  if (len % 2 != 0) acc += static_cast<std::uint32_t>(data[len - 1] << 8);
  return acc;
}

std::uint16_t fold(std::uint32_t acc) {
  while ((acc >> 16) != 0) acc = (acc & 0xFFFF) + (acc >> 16);
  return static_cast<std::uint16_t>(~acc);
}

std::vector<std::uint8_t> ipv4_header(const Ipv4Fields& ip, std::uint8_t proto, std::size_t l4_len) {
  const auto opts = padded(ip.options);
  const std::size_t ihl = 20 + opts.size();
  std::vector<std::uint8_t> h;
  h.reserve(ihl);
  h.push_back(static_cast<std::uint8_t>(0x40 | (ihl / 4)));
  h.push_back(ip.tos);
  put16(h, static_cast<std::uint16_t>(ihl + l4_len));
  put16(h, ip.id);
  put16(h, ip.dont_fragment ? 0x4000 : 0);
  h.push_back(ip.ttl);
  h.push_back(proto);
  put16(h, 0);
  put32(h, ip.src);
  put32(h, ip.dst);
  h.insert(h.end(), opts.begin(), opts.end());
  const std::uint16_t csum = internet_checksum(h.data(), h.size());
  h[10] = static_cast<std::uint8_t>(csum >> 8);
  h[11] = static_cast<std::uint8_t>(csum);
  return h;
}

std::uint32_t pseudo_header_sum(const Ipv4Fields& ip, std::uint8_t proto, std::size_t l4_len) {
  std::uint32_t acc = 0;
  acc += ip.src >> 16;
  acc += ip.src & 0xFFFF;
  acc += ip.dst >> 16;
  acc += ip.dst & 0xFFFF;
  acc += proto;
  acc += static_cast<std::uint32_t>(l4_len);
  return acc;
}

BuiltFrame assemble(const std::vector<std::uint8_t>& ip, const std::vector<std::uint8_t>& l4, std::size_t payload_len,
                    LinkType link) {
  BuiltFrame f;
  if (link == LinkType::Ethernet) {
    static constexpr std::uint8_t kEth[14] = {0x02, 0, 0, 0, 0, 0x01, 0x02, 0, 0, 0, 0, 0x02, 0x08, 0x00};
    f.bytes.assign(std::begin(kEth), std::end(kEth));
  }
  f.bytes.insert(f.bytes.end(), ip.begin(), ip.end());
  f.bytes.insert(f.bytes.end(), l4.begin(), l4.end());
  f.orig_len = static_cast<std::uint32_t>(f.bytes.size() + payload_len);
  return f;
}

}  // namespace

std::uint16_t internet_checksum(const std::uint8_t* data, std::size_t len, std::uint32_t seed) {
  return fold(sum16(data, len, seed));
}

BuiltFrame build_tcp_frame(const Ipv4Fields& ip, const TcpFields& tcp, std::size_t payload_len, LinkType link) {
  const auto opts = padded(tcp.options);
  const std::size_t doff = 20 + opts.size();
  std::vector<std::uint8_t> t;
  t.reserve(doff);
  put16(t, tcp.src_port);
  put16(t, tcp.dst_port);
  put32(t, tcp.seq);
  put32(t, tcp.ack);
  t.push_back(static_cast<std::uint8_t>((doff / 4) << 4));
  t.push_back(tcp.flags);
  put16(t, tcp.window);
  put16(t, 0);
  put16(t, tcp.urgent);
  t.insert(t.end(), opts.begin(), opts.end());
  // Payload is all zeros and does not change the one's-complement sum.
  const std::uint16_t csum = internet_checksum(t.data(), t.size(), pseudo_header_sum(ip, kProtoTcp, doff + payload_len));
  t[16] = static_cast<std::uint8_t>(csum >> 8);
  t[17] = static_cast<std::uint8_t>(csum);
  return assemble(ipv4_header(ip, kProtoTcp, doff + payload_len), t, payload_len, link);
}

BuiltFrame build_udp_frame(const Ipv4Fields& ip, const UdpFields& udp, std::size_t payload_len, LinkType link) {
  std::vector<std::uint8_t> u;
  put16(u, udp.src_port);
  put16(u, udp.dst_port);
  put16(u, static_cast<std::uint16_t>(8 + payload_len));
  put16(u, 0);
  const std::uint16_t csum = internet_checksum(u.data(), u.size(), pseudo_header_sum(ip, kProtoUdp, 8 + payload_len));
  u[6] = static_cast<std::uint8_t>(csum >> 8);
  u[7] = static_cast<std::uint8_t>(csum);
  return assemble(ipv4_header(ip, kProtoUdp, 8 + payload_len), u, payload_len, link);
}

}  // namespace flowcascade
