#include "flowcascade/packet_codec.hpp"

#include <charconv>
#include <cstdio>

#include "flowcascade/simd/kernels.hpp"

namespace flowcascade {
namespace {

constexpr std::size_t kEthernetHeader = 14;
constexpr std::uint16_t kEtherTypeIpv4 = 0x0800;

std::uint16_t be16(const std::uint8_t* p) { return static_cast<std::uint16_t>((p[0] << 8) | p[1]); }

std::uint32_t be32(const std::uint8_t* p) {
  return (static_cast<std::uint32_t>(p[0]) << 24) | (static_cast<std::uint32_t>(p[1]) << 16) |
         (static_cast<std::uint32_t>(p[2]) << 8) | p[3];
}

// Header geometry shared by the full decoder and the key peek.
struct Layout {
  FlowKey key;
  std::span<const std::uint8_t> ip;         // IPv4 header incl. options
  std::span<const std::uint8_t> transport;  // TCP header incl. options, or UDP header
};

std::optional<Layout> locate(std::span<const std::uint8_t> raw, LinkType link) {
  std::span<const std::uint8_t> l3 = raw;
  if (link == LinkType::Ethernet) {
    if (raw.size() < kEthernetHeader) return std::nullopt;
    if (be16(raw.data() + 12) != kEtherTypeIpv4) return std::nullopt;  // VLAN, IPv6, ARP, ...
    l3 = raw.subspan(kEthernetHeader);
  }
  if (l3.size() < 20) return std::nullopt;
  const std::uint8_t* ip = l3.data();
  if ((ip[0] >> 4) != 4) return std::nullopt;
  const std::size_t ihl = static_cast<std::size_t>(ip[0] & 0x0F) * 4;
  if (ihl < 20 || ihl > l3.size()) return std::nullopt;
  const std::size_t total_length = be16(ip + 2);
  if (total_length < ihl) return std::nullopt;
  const std::uint16_t frag = be16(ip + 6);
  if ((frag & 0x2000) != 0 || (frag & 0x1FFF) != 0) return std::nullopt;  // MF or non-zero offset
  const std::uint8_t proto = ip[9];

  Layout out;
  out.ip = l3.first(ihl);
  out.key.protocol = proto;
  out.key.src_addr = be32(ip + 12);
  out.key.dst_addr = be32(ip + 16);
  const std::span<const std::uint8_t> l4 = l3.subspan(ihl);

  if (proto == kProtoTcp) {
    if (l4.size() < 20 || total_length < ihl + 20) return std::nullopt;
    const std::size_t doff = static_cast<std::size_t>(l4[12] >> 4) * 4;
    if (doff < 20 || doff > l4.size() || total_length < ihl + doff) return std::nullopt;
    out.transport = l4.first(doff);
  } else if (proto == kProtoUdp) {
    if (l4.size() < 8 || total_length < ihl + 8) return std::nullopt;
    out.transport = l4.first(8);
  } else {
    return std::nullopt;
  }
  out.key.src_port = be16(out.transport.data());
  out.key.dst_port = be16(out.transport.data() + 2);
  return out;
}

}  // namespace

std::optional<FlowKey> decode_packet_into(std::span<const std::uint8_t> raw, LinkType link,
                                          PacketVector& out) {
  const auto layout = locate(raw, link);
  if (!layout) return std::nullopt;
  out.cells.fill(kAbsent);
  const auto& k = simd::kernels();
  k.expand_bits(layout->ip.data(), layout->ip.size(), out.cells.data() + kIpv4Offset);
  const std::size_t section = layout->key.protocol == kProtoTcp ? kTcpOffset : kUdpOffset;
  k.expand_bits(layout->transport.data(), layout->transport.size(), out.cells.data() + section);
  return layout->key;
}

std::optional<DecodedPacket> decode_packet(std::span<const std::uint8_t> raw, LinkType link) {
  DecodedPacket pkt;
  auto key = decode_packet_into(raw, link, pkt.vector);
  if (!key) return std::nullopt;
  pkt.key = *key;
  return pkt;
}

std::optional<FlowKey> peek_flow_key(std::span<const std::uint8_t> raw, LinkType link) {
  const auto layout = locate(raw, link);
  if (!layout) return std::nullopt;
  return layout->key;
}

namespace {

std::vector<std::uint8_t> pack_section(std::span<const std::int8_t> cells) {
  std::vector<std::uint8_t> bytes;
  for (std::size_t i = 0; i + 8 <= cells.size(); i += 8) {
    std::uint8_t b = 0;
    bool present = true;
    for (std::size_t bit = 0; bit < 8; ++bit) {
      const std::int8_t c = cells[i + bit];
      if (c == kAbsent) {
        present = false;
        break;
      }
      b = static_cast<std::uint8_t>((b << 1) | (c & 1));
    }
    if (!present) break;
    bytes.push_back(b);
  }
  return bytes;
}

}  // namespace

HeaderBytes reencode(const PacketVector& vector) {
  return HeaderBytes{pack_section(vector.ipv4()), pack_section(vector.tcp()), pack_section(vector.udp())};
}

std::string format_ipv4(std::uint32_t addr) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%u.%u.%u.%u", (addr >> 24) & 0xFF, (addr >> 16) & 0xFF, (addr >> 8) & 0xFF,
                addr & 0xFF);
  return buf;
}

std::string to_string(const FlowKey& key) {
  return format_ipv4(key.src_addr) + ":" + std::to_string(key.src_port) + "->" + format_ipv4(key.dst_addr) + ":" +
         std::to_string(key.dst_port) + "/" + std::to_string(key.protocol);
}

namespace {

bool parse_uint(std::string_view s, std::uint32_t max, std::uint32_t& out) {
  if (s.empty()) return false;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc{} && ptr == s.data() + s.size() && out <= max;
}

bool parse_endpoint(std::string_view s, std::uint32_t& addr, std::uint16_t& port) {
  const auto colon = s.rfind(':');
  if (colon == std::string_view::npos) return false;
  std::uint32_t p = 0;
  if (!parse_uint(s.substr(colon + 1), 65535, p)) return false;
  std::string_view ip = s.substr(0, colon);
  std::uint32_t a = 0;
  for (int octet = 0; octet < 4; ++octet) {
    const auto dot = ip.find('.');
    const std::string_view part = octet < 3 ? ip.substr(0, dot) : ip;
    if (octet < 3 && dot == std::string_view::npos) return false;
    std::uint32_t v = 0;
    if (!parse_uint(part, 255, v)) return false;
    a = (a << 8) | v;
    if (octet < 3) ip.remove_prefix(dot + 1);
  }
  addr = a;
  port = static_cast<std::uint16_t>(p);
  return true;
}

}  // namespace

std::optional<FlowKey> parse_flow_key(std::string_view text) {
  const auto arrow = text.find("->");
  const auto slash = text.rfind('/');
  if (arrow == std::string_view::npos || slash == std::string_view::npos || slash < arrow) return std::nullopt;
  FlowKey key;
  std::uint32_t proto = 0;
  if (!parse_endpoint(text.substr(0, arrow), key.src_addr, key.src_port)) return std::nullopt;
  if (!parse_endpoint(text.substr(arrow + 2, slash - arrow - 2), key.dst_addr, key.dst_port)) return std::nullopt;
  if (!parse_uint(text.substr(slash + 1), 255, proto)) return std::nullopt;
  key.protocol = static_cast<std::uint8_t>(proto);
  return key;
}

std::string vector_csv_header() {
  std::string out = "flow_key";
  for (std::size_t i = 0; i < kPacketCells; ++i) out += ",cell_" + std::to_string(i);
  return out;
}

std::string vector_csv_row(const FlowKey& key, const PacketVector& vector) {
  std::string out = to_string(key);
  out.reserve(out.size() + 3 * kPacketCells);
  for (std::int8_t c : vector.cells) {
    out += ',';
    out += c == kAbsent ? "-1" : (c == 0 ? "0" : "1");
  }
  return out;
}

}  // namespace flowcascade
