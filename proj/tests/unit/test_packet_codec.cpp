#include <doctest.h>

#include <bitset>
#include <random>
#include <string>

#include "flowcascade/packet_builder.hpp"
#include "flowcascade/packet_codec.hpp"

using namespace flowcascade;

namespace {

bool all_absent(std::span<const std::int8_t> cells) {
  for (auto c : cells) {
    if (c != kAbsent) return false;
  }
  return true;
}

bool none_absent(std::span<const std::int8_t> cells) {
  for (auto c : cells) {
    if (c == kAbsent) return false;
  }
  return true;
}

// Independent oracle: bytes -> '0'/'1' string via std::bitset.
std::string bit_dump(const std::vector<std::uint8_t>& bytes) {
  std::string out;
  for (auto b : bytes) out += std::bitset<8>(b).to_string();
  return out;
}

Ipv4Fields basic_ip() {
  Ipv4Fields ip;
  ip.src = 0x0A000001;
  ip.dst = 0xC0A80102;
  ip.id = 0x1234;
  return ip;
}

}  // namespace

TEST_CASE("minimal IPv4+UDP populates only the UDP section and the fixed IPv4 header") {
  UdpFields udp{5353, 53};
  const auto frame = build_udp_frame(basic_ip(), udp, 12, LinkType::RawIPv4);
  const auto pkt = decode_packet(frame.bytes, LinkType::RawIPv4);
  REQUIRE(pkt.has_value());
  const auto& v = pkt->vector;
  CHECK(none_absent(v.udp()));
  CHECK(all_absent(v.tcp()));
  CHECK(none_absent(v.ipv4().first(160)));
  CHECK(all_absent(v.ipv4().subspan(160)));
  CHECK(pkt->key.protocol == kProtoUdp);
  CHECK(pkt->key.src_port == 5353);
  CHECK(pkt->key.dst_port == 53);
  CHECK(pkt->key.src_addr == 0x0A000001U);
}

TEST_CASE("IPv4 version nibble is 0100") {
  TcpFields tcp;
  tcp.src_port = 40000;
  tcp.dst_port = 443;
  for (LinkType link : {LinkType::Ethernet, LinkType::RawIPv4}) {
    const auto frame = build_tcp_frame(basic_ip(), tcp, 0, link);
    const auto pkt = decode_packet(frame.bytes, link);
    REQUIRE(pkt.has_value());
    CHECK(pkt->vector.cells[0] == 0);
    CHECK(pkt->vector.cells[1] == 1);
    CHECK(pkt->vector.cells[2] == 0);
    CHECK(pkt->vector.cells[3] == 0);
  }
}

TEST_CASE("TCP SYN with MSS option matches an independent bit dump") {
  // 24-byte TCP header written byte by byte.
  const std::vector<std::uint8_t> tcp = {
      0x9c, 0x40,              // src port 40000
      0x01, 0xbb,              // dst port 443
      0x11, 0x22, 0x33, 0x44,  // seq
      0x00, 0x00, 0x00, 0x00,  // ack
      0x60, 0x02,              // data offset 6, SYN
      0xfa, 0xf0,              // window 64240
      0xab, 0xcd,              // checksum (not validated)
      0x00, 0x00,              // urgent
      0x02, 0x04, 0x05, 0xb4,  // MSS 1460
  };
  std::vector<std::uint8_t> ip = {0x45, 0x00, 0x00, 0x2c, 0x00, 0x01, 0x40, 0x00, 0x40, 0x06,
                                  0x00, 0x00, 0x0a, 0x00, 0x00, 0x01, 0x0a, 0x00, 0x00, 0x02};
  std::vector<std::uint8_t> raw = ip;
  raw.insert(raw.end(), tcp.begin(), tcp.end());

  const auto pkt = decode_packet(raw, LinkType::RawIPv4);
  REQUIRE(pkt.has_value());
  const std::string expected = bit_dump(tcp);
  REQUIRE(expected.size() == 192);
  for (std::size_t i = 0; i < 192; ++i) {
    CHECK(pkt->vector.cells[480 + i] == (expected[i] == '1' ? 1 : 0));
  }
  CHECK(all_absent(pkt->vector.tcp().subspan(192)));
  CHECK(all_absent(pkt->vector.udp()));
}

TEST_CASE("malformed and out-of-scope frames are skipped") {
  TcpFields tcp;
  tcp.src_port = 1;
  tcp.dst_port = 2;
  const auto good = build_tcp_frame(basic_ip(), tcp, 0, LinkType::Ethernet).bytes;
  REQUIRE(decode_packet(good, LinkType::Ethernet).has_value());

  SUBCASE("VLAN tag") {
    auto f = good;
    f[12] = 0x81;
    f[13] = 0x00;
    CHECK_FALSE(decode_packet(f, LinkType::Ethernet).has_value());
  }
  SUBCASE("IPv6 ethertype") {
    auto f = good;
    f[12] = 0x86;
    f[13] = 0xdd;
    CHECK_FALSE(decode_packet(f, LinkType::Ethernet).has_value());
  }
  SUBCASE("ICMP") {
    auto f = good;
    f[14 + 9] = 1;
    CHECK_FALSE(decode_packet(f, LinkType::Ethernet).has_value());
  }
  SUBCASE("fragment") {
    auto f = good;
    f[14 + 6] = 0x20;  // MF
    CHECK_FALSE(decode_packet(f, LinkType::Ethernet).has_value());
    f[14 + 6] = 0x00;
    f[14 + 7] = 0x10;  // offset 16
    CHECK_FALSE(decode_packet(f, LinkType::Ethernet).has_value());
  }
  SUBCASE("truncated TCP header") {
    auto f = good;
    f.resize(f.size() - 1);
    CHECK_FALSE(decode_packet(f, LinkType::Ethernet).has_value());
  }
  SUBCASE("IHL beyond captured bytes") {
    auto f = good;
    f[14] = 0x4F;
    CHECK_FALSE(decode_packet(f, LinkType::Ethernet).has_value());
  }
  SUBCASE("IHL below minimum") {
    auto f = good;
    f[14] = 0x44;
    CHECK_FALSE(decode_packet(f, LinkType::Ethernet).has_value());
  }
  SUBCASE("TCP data offset beyond captured bytes") {
    auto f = good;
    f[14 + 20 + 12] = 0xF0;
    CHECK_FALSE(decode_packet(f, LinkType::Ethernet).has_value());
  }
  SUBCASE("total length shorter than headers") {
    auto f = good;
    f[14 + 2] = 0;
    f[14 + 3] = 30;
    CHECK_FALSE(decode_packet(f, LinkType::Ethernet).has_value());
  }
  SUBCASE("version 6 on a raw link") {
    auto f = std::vector<std::uint8_t>(good.begin() + 14, good.end());
    f[0] = 0x65;
    CHECK_FALSE(decode_packet(f, LinkType::RawIPv4).has_value());
  }
  SUBCASE("runt frame") {
    const std::vector<std::uint8_t> f(10, 0);
    CHECK_FALSE(decode_packet(f, LinkType::Ethernet).has_value());
    CHECK_FALSE(peek_flow_key(f, LinkType::Ethernet).has_value());
  }
}

TEST_CASE("random packets round-trip through decode and reencode") {
  std::mt19937_64 rng(2024);
  auto rnd = [&](std::uint64_t n) { return static_cast<std::uint64_t>(rng() % n); };
  for (int i = 0; i < 1000; ++i) {
    Ipv4Fields ip;
    ip.src = static_cast<std::uint32_t>(rng());
    ip.dst = static_cast<std::uint32_t>(rng());
    ip.tos = static_cast<std::uint8_t>(rng());
    ip.ttl = static_cast<std::uint8_t>(rng());
    ip.id = static_cast<std::uint16_t>(rng());
    ip.dont_fragment = rnd(2) == 0;
    ip.options.resize(rnd(11) * 4);
    for (auto& b : ip.options) b = static_cast<std::uint8_t>(rng());
    const LinkType link = rnd(2) == 0 ? LinkType::Ethernet : LinkType::RawIPv4;
    BuiltFrame frame;
    const bool tcp = rnd(2) == 0;
    if (tcp) {
      TcpFields t;
      t.src_port = static_cast<std::uint16_t>(rng());
      t.dst_port = static_cast<std::uint16_t>(rng());
      t.seq = static_cast<std::uint32_t>(rng());
      t.ack = static_cast<std::uint32_t>(rng());
      t.flags = static_cast<std::uint8_t>(rng());
      t.window = static_cast<std::uint16_t>(rng());
      t.urgent = static_cast<std::uint16_t>(rng());
      t.options.resize(rnd(11) * 4);
      for (auto& b : t.options) b = static_cast<std::uint8_t>(rng());
      frame = build_tcp_frame(ip, t, rnd(1000), link);
    } else {
      UdpFields u{static_cast<std::uint16_t>(rng()), static_cast<std::uint16_t>(rng())};
      frame = build_udp_frame(ip, u, rnd(1000), link);
    }
    const auto pkt = decode_packet(frame.bytes, link);
    REQUIRE(pkt.has_value());
    CHECK(all_absent(pkt->vector.tcp()) != all_absent(pkt->vector.udp()));

    const std::size_t l2 = link == LinkType::Ethernet ? 14 : 0;
    const std::size_t ihl = 20 + ip.options.size();
    const std::vector<std::uint8_t> ip_bytes(frame.bytes.begin() + static_cast<std::ptrdiff_t>(l2),
                                             frame.bytes.begin() + static_cast<std::ptrdiff_t>(l2 + ihl));
    const std::vector<std::uint8_t> l4_bytes(frame.bytes.begin() + static_cast<std::ptrdiff_t>(l2 + ihl),
                                             frame.bytes.end());
    const auto back = reencode(pkt->vector);
    CHECK(back.ipv4 == ip_bytes);
    if (tcp) {
      CHECK(back.tcp == l4_bytes);
      CHECK(back.udp.empty());
    } else {
      CHECK(back.udp == l4_bytes);
      CHECK(back.tcp.empty());
    }
    // Pure function of its input.
    CHECK(decode_packet(frame.bytes, link)->vector == pkt->vector);
  }
}

TEST_CASE("flow key text form round-trips") {
  FlowKey k{0x0A000001, 0xC0A80102, 1234, 443, 6};
  CHECK(to_string(k) == "10.0.0.1:1234->192.168.1.2:443/6");
  const auto parsed = parse_flow_key(to_string(k));
  REQUIRE(parsed.has_value());
  CHECK(*parsed == k);
  CHECK_FALSE(parse_flow_key("10.0.0.1:1234-192.168.1.2:443/6").has_value());
  CHECK_FALSE(parse_flow_key("10.0.0.256:1->1.1.1.1:2/6").has_value());
  CHECK_FALSE(parse_flow_key("10.0.0.1:70000->1.1.1.1:2/6").has_value());
}

TEST_CASE("CSV dump writes ABSENT as -1") {
  UdpFields udp{1, 2};
  const auto frame = build_udp_frame(basic_ip(), udp, 0, LinkType::RawIPv4);
  const auto pkt = decode_packet(frame.bytes, LinkType::RawIPv4);
  REQUIRE(pkt.has_value());
  const std::string row = vector_csv_row(pkt->key, pkt->vector);
  CHECK(row.rfind(to_string(pkt->key) + ",0,1,0,0,", 0) == 0);
  std::size_t commas = 0;
  for (char c : row) commas += c == ',' ? 1 : 0;
  CHECK(commas == kPacketCells);
  CHECK(row.find(",-1,") != std::string::npos);
  CHECK(vector_csv_header().rfind("flow_key,cell_0,", 0) == 0);
}
