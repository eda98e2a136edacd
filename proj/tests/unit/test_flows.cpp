#include <doctest.h>

#include "iotpolicy/flows.hpp"
#include "support/oracles.hpp"
#include "support/packets.hpp"

using namespace iotpolicy;
using testsupport::Device;
using namespace tcp_flags;

namespace {
const Ipv4Addr kServer{62, 210, 92, 37};
const Ipv4Addr kResolver{192, 168, 1, 1};
}  // namespace

TEST_CASE("tcp session is one flow, SYN after FIN starts another") {
  Device d;
  std::vector<PacketRecord> pkts = {
      d.out(0, kServer, Protocol::Tcp, 5000, 25050, kSyn),
      d.in(0.1, kServer, Protocol::Tcp, 25050, 5000, kSyn | kAck),
      d.out(0.2, kServer, Protocol::Tcp, 5000, 25050, kPsh | kAck, 450),
      d.in(0.3, kServer, Protocol::Tcp, 25050, 5000, kPsh | kAck, 64),
      d.out(0.4, kServer, Protocol::Tcp, 5000, 25050, kFin | kAck),
      d.out(900, kServer, Protocol::Tcp, 5000, 25050, kSyn),
  };
  auto flows = track_flows(pkts);
  REQUIRE(flows.size() == 2);
  CHECK(flows[0].key == FlowKey::of(pkts[0]));
  CHECK(flows[0].out_packets == 3);
  CHECK(flows[0].in_packets == 2);
  CHECK(flows[0].out_bytes == 450);
  CHECK(flows[0].in_bytes == 64);
  CHECK(flows[0].last_ts_us == Device::at(0.4));
  CHECK(flows[1].first_ts_us == Device::at(900));
}

TEST_CASE("a SYN-ACK seen first is attributed to the peer") {
  Device d;
  std::vector<PacketRecord> pkts = {d.in(0, kServer, Protocol::Tcp, 443, 5000, kSyn | kAck)};
  auto flows = track_flows(pkts);
  REQUIRE(flows.size() == 1);
  CHECK(flows[0].key.src_ip == d.ip);
  CHECK(flows[0].key.dst_port == 443);
  CHECK(flows[0].in_packets == 1);
}

TEST_CASE("udp flows split after the idle timeout") {
  Device d;
  Ipv4Addr ntp{129, 6, 15, 28};
  std::vector<PacketRecord> pkts = {
      d.out(0, ntp, Protocol::Udp, 123, 123), d.in(0.05, ntp, Protocol::Udp, 123, 123),
      d.out(60, ntp, Protocol::Udp, 123, 123),   // 59.95 s after the last packet: same flow
      d.out(120.1, ntp, Protocol::Udp, 123, 123),  // 60.1 s idle: new flow
  };
  auto flows = track_flows(pkts);
  REQUIRE(flows.size() == 2);
  CHECK(flows[0].out_packets == 2);
  CHECK(flows[1].first_ts_us == Device::at(120.1));
  CHECK(track_flows(std::vector<PacketRecord>{}).empty());
}

TEST_CASE("dns transactions pair by txid, name, resolver and client port") {
  Device d;
  std::vector<PacketRecord> pkts = {
      d.query(0, kResolver, "a.example", 1),
      d.query(0.01, kResolver, "a.example", 1, 40001),
      d.query(0.02, kResolver, "b.example", 2),
      d.answer(0.03, kResolver, "a.example", {Ipv4Addr{1, 1, 1, 1}}, 300, 1),
      d.answer(0.04, kResolver, "zzz.example", {}, 300, 9),
  };
  auto dns = extract_dns(pkts);
  REQUIRE(dns.transactions.size() == 3);
  CHECK(dns.orphan_responses == 1);
  CHECK(dns.transactions[0].response);  // oldest pending wins
  CHECK(*dns.transactions[0].response_ts_us == Device::at(0.03));
  CHECK_FALSE(dns.transactions[1].response);
  CHECK_FALSE(dns.transactions[2].response);
  CHECK(dns.transactions[0].client == d.ip);
  CHECK(dns.transactions[0].resolver == kResolver);
}

TEST_CASE("footprint counts endpoints, names and hardcoded addresses") {
  Device d;
  Ipv4Addr hard{129, 6, 15, 28};
  std::vector<PacketRecord> pkts = {
      d.query(0, kResolver, "netcom.netatmo.net"),
      d.answer(0.02, kResolver, "netcom.netatmo.net", {kServer}),
      d.out(0.05, kServer, Protocol::Tcp, 5000, 25050, kSyn),
      d.out(1, hard, Protocol::Udp, 123, 123),
      // Answer arrives after first contact: still hardcoded.
      d.query(2, kResolver, "time.example"),
      d.answer(2.02, kResolver, "time.example", {hard}, 300, 1, 40000),
  };
  auto flows = track_flows(pkts);
  auto dns = extract_dns(pkts);
  auto s = summarize_capture(flows, dns.transactions, kResolver);
  auto brute = testsupport::brute_summary(pkts, d.ip);
  CHECK(s.distinct_endpoints == brute.endpoints);
  CHECK(s.distinct_domains == brute.domains);
  CHECK(s.hardcoded_ips == brute.hardcoded);
  CHECK(s.distinct_endpoints == 3);
  CHECK(s.distinct_domains == 2);
  CHECK(s.hardcoded_ips == 1);
  CHECK_FALSE(s.rogue_resolver);
  CHECK(summarize_capture(flows, dns.transactions, Ipv4Addr{8, 8, 8, 8}).rogue_resolver);

  auto empty = summarize_capture({}, {});
  CHECK(empty.distinct_endpoints == 0);
  CHECK(empty.distinct_domains == 0);
  CHECK(empty.hardcoded_ips == 0);
  CHECK(summary_json(empty) ==
        R"({"distinct_endpoints":0,"distinct_domains":0,"hardcoded_ips":0,"rogue_resolver":false})");
}
