#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <string>

#include "flowcascade/error.hpp"
#include "flowcascade/packet_builder.hpp"
#include "flowcascade/pcap.hpp"

using namespace flowcascade;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name) {
  return fs::temp_directory_path() / ("flowcascade_test_" + name);
}

void put_be32(std::ofstream& out, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16), static_cast<char>(v >> 8),
                     static_cast<char>(v)};
  out.write(b, 4);
}

void put_be16(std::ofstream& out, std::uint16_t v) {
  const char b[2] = {static_cast<char>(v >> 8), static_cast<char>(v)};
  out.write(b, 2);
}

struct Rec {
  std::vector<std::uint8_t> data;
  std::uint32_t sec;
  std::uint32_t frac;
};

// Writes a big-endian capture by hand, independent of PcapWriter.
void write_big_endian(const fs::path& path, std::uint32_t magic, std::uint32_t link, const std::vector<Rec>& recs) {
  std::ofstream out(path, std::ios::binary);
  put_be32(out, magic);
  put_be16(out, 2);
  put_be16(out, 4);
  put_be32(out, 0);
  put_be32(out, 0);
  put_be32(out, 65535);
  put_be32(out, link);
  for (const auto& r : recs) {
    put_be32(out, r.sec);
    put_be32(out, r.frac);
    put_be32(out, static_cast<std::uint32_t>(r.data.size()));
    put_be32(out, static_cast<std::uint32_t>(r.data.size()) + 100);
    out.write(reinterpret_cast<const char*>(r.data.data()), static_cast<std::streamsize>(r.data.size()));
  }
}

std::vector<std::uint8_t> sample_frame(std::uint16_t port, LinkType link) {
  Ipv4Fields ip;
  ip.src = 0x01020304;
  ip.dst = 0x05060708;
  TcpFields tcp;
  tcp.src_port = port;
  tcp.dst_port = 80;
  return build_tcp_frame(ip, tcp, 10, link).bytes;
}

}  // namespace

TEST_CASE("empty capture yields an empty stream") {
  const auto path = temp_file("empty.pcap");
  { PcapWriter w(path.string(), LinkType::Ethernet); }
  LinkType link = LinkType::RawIPv4;
  CHECK(read_capture(path.string(), &link).empty());
  CHECK(link == LinkType::Ethernet);
  fs::remove(path);
}

TEST_CASE("writer and reader round-trip three frames") {
  for (bool ns : {false, true}) {
    const auto path = temp_file(ns ? "three_ns.pcap" : "three.pcap");
    std::vector<std::vector<std::uint8_t>> frames;
    {
      PcapWriter w(path.string(), LinkType::RawIPv4, ns);
      for (std::uint16_t i = 0; i < 3; ++i) {
        frames.push_back(sample_frame(static_cast<std::uint16_t>(1000 + i), LinkType::RawIPv4));
        w.write(frames.back(), 1'700'000'000'000'000LL + i * 1500, 500);
      }
    }
    LinkType link = LinkType::Ethernet;
    const auto got = read_capture(path.string(), &link);
    CHECK(link == LinkType::RawIPv4);
    REQUIRE(got.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK(got[i].data == frames[i]);
      CHECK(got[i].time_us == 1'700'000'000'000'000LL + static_cast<std::int64_t>(i) * 1500);
      CHECK(got[i].orig_len == 500);
      const auto pkt = decode_packet(got[i].data, link);
      REQUIRE(pkt.has_value());
      CHECK(pkt->key.src_port == 1000 + i);
    }
    fs::remove(path);
  }
}

TEST_CASE("byte-swapped captures decode to the same stream as native ones") {
  const std::vector<Rec> recs = {{sample_frame(1, LinkType::Ethernet), 10, 5},
                                 {sample_frame(2, LinkType::Ethernet), 10, 999999},
                                 {sample_frame(3, LinkType::Ethernet), 11, 0}};
  const auto native = temp_file("native.pcap");
  {
    PcapWriter w(native.string(), LinkType::Ethernet);
    for (const auto& r : recs) w.write(r.data, r.sec * 1'000'000LL + r.frac, static_cast<std::uint32_t>(r.data.size()) + 100);
  }
  const auto swapped = temp_file("swapped.pcap");
  write_big_endian(swapped, 0xa1b2c3d4, 1, recs);

  const auto a = read_capture(native.string());
  const auto b = read_capture(swapped.string());
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].data == b[i].data);
    CHECK(a[i].time_us == b[i].time_us);
    CHECK(a[i].orig_len == b[i].orig_len);
  }

  // Nanosecond variant: fractional part scaled down to microseconds.
  const auto swapped_ns = temp_file("swapped_ns.pcap");
  std::vector<Rec> ns_recs = recs;
  for (auto& r : ns_recs) r.frac *= 1000;
  write_big_endian(swapped_ns, 0xa1b23c4d, 1, ns_recs);
  const auto c = read_capture(swapped_ns.string());
  REQUIRE(c.size() == a.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(c[i].time_us == a[i].time_us);

  fs::remove(native);
  fs::remove(swapped);
  fs::remove(swapped_ns);
}

TEST_CASE("bad inputs raise IngestError naming the byte offset") {
  SUBCASE("unknown magic") {
    const auto path = temp_file("badmagic.pcap");
    write_big_endian(path, 0xdeadbeef, 1, {});
    try {
      read_capture(path.string());
      FAIL("expected IngestError");
    } catch (const IngestError& e) {
      CHECK(std::string(e.what()).find("offset 0") != std::string::npos);
    }
    fs::remove(path);
  }
  SUBCASE("unsupported link type") {
    const auto path = temp_file("badlink.pcap");
    write_big_endian(path, 0xa1b2c3d4, 105, {});
    CHECK_THROWS_AS(read_capture(path.string()), IngestError);
    fs::remove(path);
  }
  SUBCASE("truncated record") {
    const auto path = temp_file("trunc.pcap");
    write_big_endian(path, 0xa1b2c3d4, 1, {{sample_frame(1, LinkType::Ethernet), 1, 1}});
    fs::resize_file(path, fs::file_size(path) - 3);
    try {
      read_capture(path.string());
      FAIL("expected IngestError");
    } catch (const IngestError& e) {
      CHECK(std::string(e.what()).find("offset 40") != std::string::npos);
    }
    fs::remove(path);
  }
  SUBCASE("missing file") {
    CHECK_THROWS_AS(read_capture("/nonexistent/capture.pcap"), IngestError);
  }
}
