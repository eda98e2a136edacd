#include <doctest.h>

#include <nlohmann/json.hpp>

#include "iotpolicy/monitor.hpp"
#include "support/fixtures.hpp"
#include "support/packets.hpp"

using namespace iotpolicy;
using testsupport::Device;
using namespace tcp_flags;

namespace {

const Ipv4Addr kResolver{192, 168, 1, 1};
const Ipv4Addr kServer{62, 210, 92, 37};
const std::string kName = "netcom.netatmo.net";

DevicePolicy netatmo() { return parse_policy(testsupport::kNetatmoPolicy); }

std::string reason(const Verdict& v) { return std::string(to_string(v.reason)); }

}  // namespace

TEST_CASE("netatmo upload walks through every allow path") {
  Device d;
  Monitor m(netatmo());
  auto q = m.evaluate(d.query(0, kResolver, kName));
  CHECK(q.allowed());
  CHECK(q.rule->to_string() == "AllowedDNSQueries[0]");

  auto a = m.evaluate(d.answer(0.02, kResolver, kName, {kServer}));
  CHECK(a.allowed());
  CHECK(reason(a) == "RULE_MATCH");
  CHECK(a.rule->to_string() == "AllowedDNSReplies[0]");
  CHECK(m.bindings().resolves(kName, kServer, Device::at(1)));

  auto syn = m.evaluate(d.out(0.05, kServer, Protocol::Tcp, 5000, 25050, kSyn));
  CHECK(syn.allowed());
  CHECK(syn.rule->to_string() == "AllowedConnections[0]");
  auto synack = m.evaluate(d.in(0.08, kServer, Protocol::Tcp, 25050, 5000, kSyn | kAck));
  CHECK(synack.allowed());
  CHECK(reason(synack) == "ESTABLISHED_REPLY");
  CHECK_FALSE(synack.rule);
  auto data = m.evaluate(d.out(0.09, kServer, Protocol::Tcp, 5000, 25050, kPsh | kAck, 450));
  CHECK(data.allowed());
  CHECK(reason(data) == "RULE_MATCH");

  const auto& st = m.stats();
  CHECK(st.allowed_total == 5);
  CHECK(st.denied_total == 0);
  CHECK(st.rule_hits.at(RuleRef{RuleRef::Kind::Connection, 0}) == 2);
  CHECK(st.rule_hits.at(RuleRef{RuleRef::Kind::DnsQuery, 0}) == 1);
}

TEST_CASE("dns denials") {
  Device d;
  Monitor m(netatmo());
  CHECK(reason(m.evaluate(d.query(0, kResolver, "evil.example"))) == "DNS_QNAME_DENIED");
  CHECK(reason(m.evaluate(d.query(1, Ipv4Addr{8, 8, 8, 8}, kName))) == "RESOLVER_MISMATCH");
  CHECK(reason(m.evaluate(d.query(2, kResolver, kName, 1, 40000, DnsType{28}))) ==
        "DNS_QNAME_DENIED");
  // No query was allowed, so nothing may be answered.
  CHECK(reason(m.evaluate(d.answer(3, kResolver, kName, {kServer}))) == "DEFAULT_DENY");

  CHECK(m.evaluate(d.query(4, kResolver, kName, 5)).allowed());
  auto bad = m.evaluate(d.answer(4.1, kResolver, kName, {Ipv4Addr{6, 6, 6, 6}}, 300, 5));
  CHECK(reason(bad) == "DNS_ANSWER_OUT_OF_RANGE");
  CHECK(bad.rule->to_string() == "AllowedDNSReplies[0]");
  CHECK(m.bindings().size() == 0);
  // The denied answer did not consume the pending query.
  CHECK(m.evaluate(d.answer(4.2, kResolver, kName, {kServer}, 300, 5)).allowed());
  // ...but the allowed one did.
  CHECK(reason(m.evaluate(d.answer(4.3, kResolver, kName, {kServer}, 300, 5))) == "DEFAULT_DENY");

  const auto& st = m.stats();
  REQUIRE(st.denied_domains.size() == 2);
  CHECK(st.denied_domains[0] == "evil.example");
  CHECK(st.denied_domains[1] == kName);
}

TEST_CASE("hostname destinations must be learned, in range and fresh") {
  Device d;
  Monitor m(netatmo());
  // In the /24, but never returned by an answer.
  CHECK(reason(m.evaluate(d.out(0, kServer, Protocol::Tcp, 5000, 25050, kSyn))) == "DEFAULT_DENY");

  CHECK(m.evaluate(d.query(1, kResolver, kName)).allowed());
  CHECK(m.evaluate(d.answer(1.01, kResolver, kName, {kServer}, 0)).allowed());  // ttl floored to 60 s
  CHECK(m.evaluate(d.out(61, kServer, Protocol::Tcp, 5001, 25050, kSyn)).allowed());
  CHECK(reason(m.evaluate(d.out(61.02, kServer, Protocol::Tcp, 5002, 25050, kSyn))) == "DEFAULT_DENY");
  // An established connection outlives the binding.
  CHECK(m.evaluate(d.out(200, kServer, Protocol::Tcp, 5001, 25050, kAck, 10)).allowed());
  CHECK(m.evaluate(d.in(200.1, kServer, Protocol::Tcp, 25050, 5001, kAck, 10)).allowed());
}

TEST_CASE("binding lifetime clamps the ttl") {
  CHECK(binding_lifetime_us(0) == 60'000'000);
  CHECK(binding_lifetime_us(300) == 300'000'000);
  CHECK(binding_lifetime_us(1'000'000) == 86'400'000'000);
}

TEST_CASE("seventh connection in an hour exceeds 6/hr") {
  Device d;
  Monitor m(netatmo());
  m.evaluate(d.query(0, kResolver, kName));
  m.evaluate(d.answer(0.01, kResolver, kName, {kServer}, 86400));
  for (int k = 0; k < 6; ++k)
    CHECK(m.evaluate(d.out(1 + k * 500, kServer, Protocol::Tcp, 5000 + k, 25050, kSyn)).allowed());
  auto seventh = m.evaluate(d.out(3100, kServer, Protocol::Tcp, 5006, 25050, kSyn));
  CHECK(reason(seventh) == "RATE_EXCEEDED");
  CHECK(seventh.rule->to_string() == "AllowedConnections[0]");
  // The first connection (t=1 s) leaves the window exactly one hour later.
  CHECK(reason(m.evaluate(d.out(3600.999, kServer, Protocol::Tcp, 5007, 25050, kSyn))) == "RATE_EXCEEDED");
  CHECK(m.evaluate(d.out(3601, kServer, Protocol::Tcp, 5008, 25050, kSyn)).allowed());
}

TEST_CASE("metadata constraints") {
  Device d;
  auto p = netatmo();
  ConnectionRule ntp;
  ntp.dest = *Cidr::parse("129.6.15.0/24");
  ntp.proto = Protocol::Udp;
  ntp.dstport = 123;
  ntp.max_bw_out = BandwidthSpec{100, TimeUnit::Hour};
  ntp.max_packet_size = 200;
  ntp.schedule = parse_schedule("10:00-11:00");
  p.connections.push_back(ntp);
  Ipv4Addr server{129, 6, 15, 28};

  Monitor m(p);
  CHECK(m.evaluate(d.out(0, server, Protocol::Udp, 123, 123, 0, 48)).allowed());
  CHECK(reason(m.evaluate(d.out(1, server, Protocol::Udp, 123, 123, 0, 180))) == "PACKET_TOO_LARGE");
  CHECK(m.evaluate(d.out(2, server, Protocol::Udp, 123, 123, 0, 52)).allowed());
  CHECK(reason(m.evaluate(d.out(3, server, Protocol::Udp, 123, 123, 0, 1))) == "BANDWIDTH_EXCEEDED");
  // Replies do not spend the outbound budget.
  CHECK(m.evaluate(d.in(4, server, Protocol::Udp, 123, 123, 0, 48)).allowed());
  // 11:30 UTC: outside the schedule.
  CHECK(reason(m.evaluate(d.out(5400, server, Protocol::Udp, 124, 123, 0, 10))) == "OUTSIDE_SCHEDULE");
  // The budget refills after an hour but the schedule still applies.
  CHECK(reason(m.evaluate(d.out(5401, server, Protocol::Udp, 124, 123, 0, 10))) == "OUTSIDE_SCHEDULE");
}

TEST_CASE("default deny for everything else") {
  Device d;
  Monitor m(netatmo());
  CHECK(reason(m.evaluate(d.in(0, kServer, Protocol::Tcp, 25050, 5000, kSyn))) == "DEFAULT_DENY");
  CHECK(reason(m.evaluate(d.out(1, Ipv4Addr{1, 2, 3, 4}, Protocol::Other, 0, 0))) == "DEFAULT_DENY");
  CHECK(reason(m.evaluate(d.out(2, Ipv4Addr{1, 2, 3, 4}, Protocol::Tcp, 5000, 23, kSyn))) ==
        "DEFAULT_DENY");
  auto spoofed = d.query(3, kResolver, kName);
  spoofed.src_ip = Ipv4Addr{172, 16, 1, 99};
  CHECK(reason(m.evaluate(spoofed)) == "DEFAULT_DENY");

  auto foreign = d.out(4, kServer, Protocol::Tcp, 5000, 25050, kSyn);
  foreign.src_mac = *MacAddr::parse("02:00:00:00:00:09");
  CHECK_FALSE(m.evaluate(foreign).allowed());

  const auto& st = m.stats();
  CHECK(st.denied_total == 5);
  CHECK(st.allowed_total == 0);
  // Only packets sent by the device are extraneous.
  REQUIRE(st.extraneous.size() == 3);
  CHECK(st.extraneous[0] == Endpoint{Ipv4Addr{1, 2, 3, 4}, Protocol::Other, 0});
  CHECK(st.extraneous[1] == Endpoint{Ipv4Addr{1, 2, 3, 4}, Protocol::Tcp, 23});
  CHECK(st.extraneous[2] == Endpoint{kResolver, Protocol::Udp, 53});
}

TEST_CASE("timestamps must not go backwards") {
  Device d;
  Monitor m(netatmo());
  m.evaluate(d.query(10, kResolver, kName));
  CHECK_NOTHROW(m.evaluate(d.query(10, kResolver, kName, 2)));
  CHECK_THROWS_AS(m.evaluate(d.query(9, kResolver, kName)), OutOfOrderTimestamp);
}

TEST_CASE("rate window counts the half-open trailing period") {
  RateWindow w(RateSpec{2, TimeUnit::Second});
  w.record(0);
  w.record(500'000);
  CHECK(w.count_at(500'000) == 2);
  CHECK_FALSE(w.admits(999'999));
  CHECK(w.count_at(1'000'000) == 1);
  CHECK(w.admits(1'000'000));
}

TEST_CASE("json renderings") {
  Device d;
  auto r = replay(netatmo(), std::vector<PacketRecord>{d.query(0, kResolver, kName),
                                                       d.query(1, kResolver, "x.example")});
  REQUIRE(r.verdicts.size() == 2);
  CHECK(verdict_json(r.verdicts[0]) ==
        R"({"index":0,"ts":1496311200000000,"decision":"ALLOW","reason":"RULE_MATCH","rule_id":"AllowedDNSQueries[0]"})");
  CHECK(verdict_json(r.verdicts[1]) ==
        R"({"index":1,"ts":1496311201000000,"decision":"DENY","reason":"DNS_QNAME_DENIED","rule_id":null})");

  auto stats = nlohmann::json::parse(stats_json(r.stats));
  CHECK(stats["rule_hits"]["AllowedDNSQueries[0]"] == 1);
  CHECK(stats["rule_hits"]["AllowedConnections[0]"] == 0);
  CHECK(stats["denied_total"] == 1);
  CHECK(stats["allowed_total"] == 1);
  CHECK(stats["denied_domains"][0] == "x.example");
  CHECK(stats["extraneous"][0]["dst"] == "192.168.1.1");
  CHECK(stats["extraneous"][0]["proto"] == "UDP");
  CHECK(stats["extraneous"][0]["port"] == 53);
}
