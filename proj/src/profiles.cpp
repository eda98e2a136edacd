#include "iotpolicy/profiles.hpp"

#include <algorithm>
#include <random>
#include <set>
#include <stdexcept>

#include "iotpolicy/pcap.hpp"

namespace iotpolicy {

namespace {

constexpr std::int64_t kSecond = 1'000'000;
constexpr std::int64_t kMilli = 1'000;
// 2017-06-01T10:00:00Z
constexpr std::int64_t kEpoch = 1'496'311'200 * kSecond;

MacAddr mac(std::string_view text) { return *MacAddr::parse(text); }

class Builder {
 public:
  Builder(Trace& trace, std::uint64_t seed) : t_(trace), rng_(seed) {}

  std::mt19937_64& rng() { return rng_; }

  std::int64_t jitter(std::int64_t max_us) {
    return std::uniform_int_distribution<std::int64_t>(-max_us, max_us)(rng_);
  }

  std::uint16_t ephemeral() {
    return static_cast<std::uint16_t>(std::uniform_int_distribution<int>(49152, 65535)(rng_));
  }

  PacketRecord packet(std::int64_t ts, bool outbound, Ipv4Addr remote, Protocol proto,
                      std::uint16_t device_port, std::uint16_t remote_port) {
    PacketRecord p;
    p.ts_us = ts;
    p.proto = proto;
    if (outbound) {
      p.src_mac = t_.device_mac;
      p.dst_mac = t_.gateway_mac;
      p.src_ip = t_.device_ip;
      p.dst_ip = remote;
      p.src_port = device_port;
      p.dst_port = remote_port;
    } else {
      p.src_mac = t_.gateway_mac;
      p.dst_mac = t_.device_mac;
      p.src_ip = remote;
      p.dst_ip = t_.device_ip;
      p.src_port = remote_port;
      p.dst_port = device_port;
    }
    return p;
  }

  void push(PacketRecord p) {
    fill_lengths(p);
    t_.packets.push_back(std::move(p));
  }

  /// Query at `ts`, answer 15 ms later. Returns the answer time.
  std::int64_t lookup(std::int64_t ts, const std::string& qname,
                      const std::vector<Ipv4Addr>& answers, std::uint32_t ttl) {
    auto txid = static_cast<std::uint16_t>(rng_());
    std::uint16_t port = ephemeral();

    DnsMessage q;
    q.txid = txid;
    q.qname = qname;
    auto query = packet(ts, true, t_.resolver, Protocol::Udp, port, 53);
    query.dns = q;
    push(std::move(query));

    DnsMessage r = q;
    r.is_response = true;
    for (auto a : answers) r.answers.push_back({qname, DnsType::a(), ttl, a});
    auto reply = packet(ts + 15 * kMilli, false, t_.resolver, Protocol::Udp, port, 53);
    reply.dns = r;
    push(std::move(reply));
    return ts + 15 * kMilli;
  }

  void tcp(std::int64_t ts, bool outbound, Ipv4Addr remote, std::uint16_t device_port,
           std::uint16_t remote_port, std::uint8_t flags, std::uint32_t len = 0) {
    auto p = packet(ts, outbound, remote, Protocol::Tcp, device_port, remote_port);
    p.tcp_flags = flags;
    p.payload_len = len;
    push(std::move(p));
  }

  /// Complete connection: handshake, request, response, close.
  void tcp_session(std::int64_t ts, Ipv4Addr remote, std::uint16_t port, std::uint32_t up,
                   std::uint32_t down) {
    using namespace tcp_flags;
    std::uint16_t sport = ephemeral();
    std::int64_t rtt = 30 * kMilli;
    tcp(ts, true, remote, sport, port, kSyn);
    tcp(ts + rtt, false, remote, sport, port, kSyn | kAck);
    tcp(ts + rtt + 1 * kMilli, true, remote, sport, port, kAck);
    tcp(ts + rtt + 2 * kMilli, true, remote, sport, port, kPsh | kAck, up);
    tcp(ts + 2 * rtt + 2 * kMilli, false, remote, sport, port, kPsh | kAck, down);
    tcp(ts + 2 * rtt + 3 * kMilli, true, remote, sport, port, kAck);
    tcp(ts + 2 * rtt + 4 * kMilli, true, remote, sport, port, kFin | kAck);
    tcp(ts + 3 * rtt + 4 * kMilli, false, remote, sport, port, kFin | kAck);
    tcp(ts + 3 * rtt + 5 * kMilli, true, remote, sport, port, kAck);
  }

  void udp_exchange(std::int64_t ts, Ipv4Addr remote, std::uint16_t port, std::uint32_t len) {
    std::uint16_t sport = ephemeral();
    auto out = packet(ts, true, remote, Protocol::Udp, sport, port);
    out.payload_len = len;
    push(std::move(out));
    auto in = packet(ts + 25 * kMilli, false, remote, Protocol::Udp, sport, port);
    in.payload_len = len;
    push(std::move(in));
  }

  void finish() {
    std::stable_sort(t_.packets.begin(), t_.packets.end(),
                     [](const PacketRecord& a, const PacketRecord& b) { return a.ts_us < b.ts_us; });
  }

 private:
  Trace& t_;
  std::mt19937_64 rng_;
};

}  // namespace

Trace weather_station_trace(std::uint64_t seed, int uploads, std::int64_t interval_seconds) {
  Trace t;
  t.profile = "weather-station";
  t.device_mac = mac("70:ee:50:13:ab:cd");
  t.device_ip = Ipv4Addr{172, 16, 1, 2};
  t.gateway_mac = mac("b8:27:eb:00:00:01");
  t.resolver = Ipv4Addr{192, 168, 1, 1};
  t.start_ts_us = kEpoch;

  const std::vector<Ipv4Addr> pool = {{62, 210, 92, 11}, {62, 210, 92, 24},
                                      {62, 210, 92, 37}, {62, 210, 92, 51}};
  Builder b(t, seed);
  std::int64_t last = t.start_ts_us;
  for (int k = 0; k < uploads; ++k) {
    std::int64_t ts = t.start_ts_us + 10 * kSecond + k * interval_seconds * kSecond +
                      b.jitter(3 * kSecond);
    Ipv4Addr server = pool[static_cast<std::size_t>(k) % pool.size()];
    std::int64_t answered = b.lookup(ts, "netcom.netatmo.net", {server}, 300);
    b.tcp_session(answered + 25 * kMilli, server, 25050, 450, 64);
    last = std::max(last, answered + kSecond);
  }
  b.finish();
  t.end_ts_us = std::max(t.start_ts_us + 3600 * kSecond, last + 60 * kSecond);
  return t;
}

Trace scale_trace(std::uint64_t seed) {
  Trace t;
  t.profile = "scale";
  t.device_mac = mac("00:24:e4:5a:10:7c");
  t.device_ip = Ipv4Addr{192, 168, 1, 23};
  t.gateway_mac = mac("b8:27:eb:00:00:01");
  t.resolver = Ipv4Addr{192, 168, 1, 1};
  t.start_ts_us = kEpoch;
  t.end_ts_us = kEpoch + 6 * 3600 * kSecond;

  Builder b(t, seed);
  const std::vector<Ipv4Addr> servers = {{89, 30, 121, 150}, {89, 30, 121, 151}};
  std::uniform_int_distribution<std::int64_t> when(30 * 60, 5 * 3600 + 30 * 60);
  std::vector<std::int64_t> events = {when(b.rng()), when(b.rng())};
  std::sort(events.begin(), events.end());
  for (std::size_t k = 0; k < events.size(); ++k) {
    std::int64_t ts = t.start_ts_us + events[k] * kSecond;
    std::int64_t answered = b.lookup(ts, "scalews.withings.net", servers, 300);
    b.tcp_session(answered + 20 * kMilli, servers[k % servers.size()], 80, 900, 300);
  }
  b.finish();
  return t;
}

Trace bulb_trace(std::uint64_t seed) {
  using namespace tcp_flags;
  Trace t;
  t.profile = "bulb";
  t.device_mac = mac("d0:73:d5:22:31:8e");
  t.device_ip = Ipv4Addr{192, 168, 1, 40};
  t.gateway_mac = mac("b8:27:eb:00:00:01");
  t.resolver = Ipv4Addr{8, 8, 8, 8};
  t.start_ts_us = kEpoch;
  t.end_ts_us = kEpoch + 3600 * kSecond;

  Builder b(t, seed);
  Ipv4Addr broker{34, 206, 43, 163};
  std::int64_t ts = t.start_ts_us + 5 * kSecond;
  std::int64_t answered = b.lookup(ts, "v2.broker.lifx.co", {broker}, 60);

  std::uint16_t sport = b.ephemeral();
  std::int64_t open = answered + 20 * kMilli;
  b.tcp(open, true, broker, sport, 56700, kSyn);
  b.tcp(open + 40 * kMilli, false, broker, sport, 56700, kSyn | kAck);
  b.tcp(open + 41 * kMilli, true, broker, sport, 56700, kAck);
  for (std::int64_t k = 60 * kSecond; open + k < t.end_ts_us - kSecond; k += 60 * kSecond) {
    b.tcp(open + k, true, broker, sport, 56700, kPsh | kAck, 36);
    b.tcp(open + k + 40 * kMilli, false, broker, sport, 56700, kPsh | kAck, 36);
  }

  Ipv4Addr ntp{129, 6, 15, 28};
  for (std::int64_t k = 30; k < 3600; k += 600) b.udp_exchange(t.start_ts_us + k * kSecond, ntp, 123, 48);
  b.finish();
  return t;
}

std::vector<std::string_view> profile_names() { return {"weather-station", "scale", "bulb"}; }

Trace profile_trace(std::string_view name, std::uint64_t seed) {
  if (name == "weather-station") return weather_station_trace(seed);
  if (name == "scale") return scale_trace(seed);
  if (name == "bulb") return bulb_trace(seed);
  throw std::invalid_argument("unknown profile: " + std::string(name));
}

Injected inject_mirai(const Trace& trace, std::uint64_t seed, int scan_hosts, int dns_queries) {
  std::mt19937_64 rng(seed);
  std::set<Ipv4Addr> contacted;
  std::set<std::string> names;
  for (const auto& p : trace.packets) {
    contacted.insert(p.dst_ip);
    contacted.insert(p.src_ip);
    if (p.dns) names.insert(p.dns->qname);
  }

  auto is_public = [](Ipv4Addr a) {
    std::uint8_t first = a.value >> 24;
    if (first == 0 || first == 10 || first == 127 || first >= 224) return false;
    if (Cidr{{172, 16, 0, 0}, 12}.contains(a)) return false;
    if (Cidr{{192, 168, 0, 0}, 16}.contains(a)) return false;
    return true;
  };
  std::uniform_int_distribution<std::int64_t> when(trace.start_ts_us, trace.end_ts_us - 1);
  std::uniform_int_distribution<int> port(1024, 65535);

  std::vector<std::pair<PacketRecord, bool>> merged;
  for (const auto& p : trace.packets) merged.emplace_back(p, false);

  auto from_device = [&](std::int64_t ts, Ipv4Addr dst, Protocol proto, std::uint16_t dport) {
    PacketRecord p;
    p.ts_us = ts;
    p.src_mac = trace.device_mac;
    p.dst_mac = trace.gateway_mac;
    p.src_ip = trace.device_ip;
    p.dst_ip = dst;
    p.proto = proto;
    p.src_port = static_cast<std::uint16_t>(port(rng));
    p.dst_port = dport;
    return p;
  };

  std::set<Ipv4Addr> targets;
  while (static_cast<int>(targets.size()) < scan_hosts) {
    Ipv4Addr a{static_cast<std::uint32_t>(rng())};
    if (is_public(a) && !contacted.count(a)) targets.insert(a);
  }
  for (auto dst : targets) {
    auto p = from_device(when(rng), dst, Protocol::Tcp, 23);
    p.tcp_flags = tcp_flags::kSyn;
    fill_lengths(p);
    merged.emplace_back(std::move(p), true);
  }

  std::uniform_int_distribution<int> letter('a', 'z');
  for (int i = 0; i < dns_queries; ++i) {
    std::string qname;
    do {
      qname.clear();
      for (int k = 0; k < 12; ++k) qname.push_back(static_cast<char>(letter(rng)));
      qname += ".com";
    } while (names.count(qname));
    auto p = from_device(when(rng), trace.resolver, Protocol::Udp, 53);
    DnsMessage q;
    q.txid = static_cast<std::uint16_t>(rng());
    q.qname = qname;
    p.dns = q;
    fill_lengths(p);
    merged.emplace_back(std::move(p), true);
  }

  std::stable_sort(merged.begin(), merged.end(), [](const auto& a, const auto& b) {
    return a.first.ts_us < b.first.ts_us;
  });
  Injected out;
  for (auto& [p, flag] : merged) {
    out.packets.push_back(std::move(p));
    out.injected.push_back(flag);
  }
  return out;
}

void write_packets(std::ostream& out, const std::vector<PacketRecord>& packets,
                   const Trace& trace) {
  PcapWriter w(out);
  auto arp = encode_arp(trace.device_mac, trace.device_ip);
  w.write_frame(trace.start_ts_us, arp);
  for (const auto& p : packets) w.write(p);
  w.write_frame(trace.end_ts_us, arp);
}

void write_trace(std::ostream& out, const Trace& trace) {
  write_packets(out, trace.packets, trace);
}

}  // namespace iotpolicy
