#include "generators.hpp"

#include <algorithm>

#include "iotpolicy/pcap.hpp"

namespace testsupport {

namespace {

template <typename T>
T pick(Rng& rng, const std::vector<T>& v) {
  return v[std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng)];
}

int uniform(Rng& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

bool chance(Rng& rng, double p) { return std::bernoulli_distribution(p)(rng); }

std::string random_label(Rng& rng, bool exotic) {
  static const std::string plain = "abcdefghijklmnopqrstuvwxyz0123456789";
  static const std::string odd = plain + "-_";
  const auto& alphabet = exotic ? odd : plain;
  std::string s;
  int len = uniform(rng, 1, exotic ? 12 : 6);
  for (int i = 0; i < len; ++i) s.push_back(alphabet[uniform(rng, 0, int(alphabet.size()) - 1)]);
  return s;
}

std::string random_name(Rng& rng, bool exotic) {
  std::string name = random_label(rng, exotic);
  int labels = uniform(rng, 1, 3);
  for (int i = 0; i < labels; ++i) name += "." + random_label(rng, exotic);
  return name;
}

Ipv4Addr random_public(Rng& rng) {
  return Ipv4Addr{static_cast<std::uint8_t>(uniform(rng, 11, 200)),
                  static_cast<std::uint8_t>(uniform(rng, 0, 255)),
                  static_cast<std::uint8_t>(uniform(rng, 0, 255)),
                  static_cast<std::uint8_t>(uniform(rng, 1, 254))};
}

Ipv4Addr inside(Rng& rng, const Cidr& c) {
  std::uint32_t host = c.prefix == 32 ? 0 : static_cast<std::uint32_t>(rng()) & ~Cidr::mask_for(c.prefix);
  return Ipv4Addr{c.network.value | host};
}

const std::vector<std::string> kDeviceNames = {
    "Netatmo Weather Station", "hall camera", "Kitchen \"smart\" plug", "thermostat/2",
    "lampe de chevet \xc3\xa9t\xc3\xa9", "x"};

const std::vector<DnsType> kExoticTypes = {{1}, {28}, {5}, {16}, {15}, {12}, {33}, {65}};

}  // namespace

DevicePolicy random_policy(Rng& rng, const PolicyShape& shape) {
  DevicePolicy p;
  p.device_name = shape.exotic ? pick(rng, kDeviceNames) : "device";
  for (auto& o : p.mac.octets) o = static_cast<std::uint8_t>(rng());
  p.mac.octets[0] &= 0xfe;
  if (!shape.exotic || chance(rng, 0.8))
    p.ip = Ipv4Addr{192, 168, 1, static_cast<std::uint8_t>(uniform(rng, 2, 250))};

  const std::vector<Ipv4Addr> resolvers = {{192, 168, 1, 1}, {8, 8, 8, 8}, {1, 1, 1, 1}};
  std::vector<std::string> names;
  int n_names = uniform(rng, 0, 3);
  for (int i = 0; i < n_names; ++i) names.push_back(random_name(rng, shape.exotic));
  std::sort(names.begin(), names.end());
  names.erase(std::unique(names.begin(), names.end()), names.end());

  std::vector<std::string> bounded;
  for (const auto& name : names) {
    DnsType qtype = shape.exotic && chance(rng, 0.2) ? pick(rng, kExoticTypes) : DnsType::a();
    int n_resolvers = uniform(rng, 1, 2);
    for (int k = 0; k < n_resolvers; ++k)
      p.dns_queries.push_back({qtype, name, pick(rng, resolvers)});
    if (shape.compilable || chance(rng, 0.8)) {
      DnsReplyRule r{qtype, name, {}};
      int n_answers = uniform(rng, 1, 3);
      for (int k = 0; k < n_answers; ++k) {
        auto prefix = static_cast<std::uint8_t>(
            shape.exotic ? uniform(rng, 8, 32) : pick(rng, std::vector<int>{24, 28, 30, 32}));
        Cidr c{random_public(rng), prefix};
        if (std::find(r.answers.begin(), r.answers.end(), c) == r.answers.end())
          r.answers.push_back(c);
      }
      p.dns_replies.push_back(std::move(r));
      bounded.push_back(name);
    }
  }

  int n_conns = uniform(rng, 0, 4);
  const std::vector<std::uint16_t> ports = {80, 443, 123, 8883, 25050};
  for (int i = 0; i < n_conns; ++i) {
    ConnectionRule c;
    const auto& hosts = shape.compilable ? bounded : names;
    if (!hosts.empty() && chance(rng, 0.6))
      c.dest = pick(rng, hosts);
    else
      c.dest = Cidr{random_public(rng),
                    static_cast<std::uint8_t>(pick(rng, std::vector<int>{16, 24, 29, 32}))};
    c.proto = chance(rng, 0.6) ? Protocol::Tcp : Protocol::Udp;
    c.dstport = shape.exotic && chance(rng, 0.3) ? static_cast<std::uint16_t>(uniform(rng, 1, 65535))
                                                 : pick(rng, ports);
    if (chance(rng, 0.7)) {
      std::vector<TimeUnit> units = {TimeUnit::Minute, TimeUnit::Hour};
      if (shape.exotic) units = {TimeUnit::Second, TimeUnit::Minute, TimeUnit::Hour, TimeUnit::Day, TimeUnit::Week};
      c.freq = RateSpec{static_cast<std::uint32_t>(uniform(rng, 1, shape.exotic ? 5000 : 6)),
                        pick(rng, units)};
    }
    if (shape.constraints) {
      if (chance(rng, 0.3)) {
        std::uint64_t bytes = pick(rng, std::vector<std::uint64_t>{1, 999, 1000, 1500, 10'000'000,
                                                                   2'000'000'000, 123'456});
        c.max_bw_out = BandwidthSpec{bytes, pick(rng, std::vector<TimeUnit>{TimeUnit::Second, TimeUnit::Hour,
                                                                            TimeUnit::Week})};
      }
      if (chance(rng, 0.3)) c.max_packet_size = static_cast<std::uint32_t>(uniform(rng, 40, 1500));
      if (chance(rng, 0.3)) {
        DailyWindow w;
        w.start_minute = static_cast<std::uint16_t>(uniform(rng, 0, 1439));
        do {
          w.end_minute = static_cast<std::uint16_t>(uniform(rng, 0, 1439));
        } while (w.end_minute == w.start_minute);
        c.schedule = w;
      }
    }
    p.connections.push_back(std::move(c));
  }
  return p;
}

namespace {

struct TraceBuilder {
  TraceBuilder(Rng& r, const DevicePolicy& p, Ipv4Addr ip) : rng(r), policy(p), device_ip(ip) {}

  Rng& rng;
  const DevicePolicy& policy;
  Ipv4Addr device_ip;
  std::int64_t now = 1'500'000'000'000'000;
  std::vector<PacketRecord> out;

  struct Query {
    Ipv4Addr resolver;
    std::uint16_t port, txid;
    std::string qname;
    DnsType qtype;
  };
  std::vector<Query> queries;
  std::vector<Ipv4Addr> answered;
  std::vector<FlowKey> sessions;  // device -> remote

  void advance() {
    double r = std::uniform_real_distribution<double>(0, 1)(rng);
    std::int64_t gap;
    if (r < 0.6)
      gap = uniform(rng, 1, 1000) * 1'000;
    else if (r < 0.9)
      gap = uniform(rng, 1, 90) * 1'000'000;
    else
      gap = std::int64_t{uniform(rng, 5, 40)} * 60'000'000;
    now += gap;
  }

  PacketRecord outbound(Ipv4Addr dst, Protocol proto, std::uint16_t sport, std::uint16_t dport) {
    PacketRecord p;
    p.ts_us = now;
    p.src_mac = policy.mac;
    p.dst_mac = kGatewayMac;
    p.src_ip = device_ip;
    p.dst_ip = dst;
    p.proto = proto;
    p.src_port = sport;
    p.dst_port = dport;
    return p;
  }

  PacketRecord inbound(Ipv4Addr src, Protocol proto, std::uint16_t sport, std::uint16_t dport) {
    auto p = outbound(src, proto, dport, sport);
    std::swap(p.src_mac, p.dst_mac);
    std::swap(p.src_ip, p.dst_ip);
    std::swap(p.src_port, p.dst_port);
    return p;
  }

  void emit(PacketRecord p) {
    if (p.proto != Protocol::Udp || !p.dns) p.payload_len = static_cast<std::uint32_t>(uniform(rng, 0, 1400));
    fill_lengths(p);
    out.push_back(std::move(p));
  }

  std::uint16_t client_port() { return static_cast<std::uint16_t>(uniform(rng, 40000, 40007)); }

  Ipv4Addr resolver_choice() {
    if (!policy.dns_queries.empty() && chance(rng, 0.85)) return pick(rng, policy.dns_queries).resolver;
    return chance(rng, 0.5) ? Ipv4Addr{9, 9, 9, 9} : Ipv4Addr{192, 168, 1, 1};
  }

  void query() {
    Query q;
    if (!policy.dns_queries.empty() && chance(rng, 0.8)) {
      const auto& rule = pick(rng, policy.dns_queries);
      q.qname = rule.qname;
      q.qtype = chance(rng, 0.9) ? rule.qtype : DnsType{28};
    } else {
      q.qname = random_name(rng, false);
      q.qtype = DnsType::a();
    }
    q.resolver = resolver_choice();
    q.port = client_port();
    q.txid = static_cast<std::uint16_t>(uniform(rng, 0, 3));
    DnsMessage m;
    m.txid = q.txid;
    m.qname = q.qname;
    m.qtype = q.qtype;
    auto p = outbound(q.resolver, Protocol::Udp, q.port, 53);
    p.dns = m;
    emit(std::move(p));
    queries.push_back(q);
  }

  Ipv4Addr answer_for(const std::string& qname) {
    std::vector<Cidr> ranges;
    for (const auto& r : policy.dns_replies)
      if (r.qname == qname) ranges.insert(ranges.end(), r.answers.begin(), r.answers.end());
    if (!ranges.empty() && chance(rng, 0.8)) return inside(rng, pick(rng, ranges));
    return random_public(rng);
  }

  void response() {
    Query q;
    if (!queries.empty() && chance(rng, 0.85)) {
      q = pick(rng, queries);
    } else {
      q = Query{resolver_choice(), client_port(), static_cast<std::uint16_t>(uniform(rng, 0, 3)),
                policy.dns_queries.empty() ? random_name(rng, false) : pick(rng, policy.dns_queries).qname,
                DnsType::a()};
    }
    DnsMessage m;
    m.is_response = true;
    m.txid = q.txid;
    m.qname = q.qname;
    m.qtype = q.qtype;
    int n = uniform(rng, 0, 2);
    for (int k = 0; k < n; ++k) {
      Ipv4Addr a = answer_for(q.qname);
      m.answers.push_back({q.qname, DnsType::a(), static_cast<std::uint32_t>(pick(rng, std::vector<int>{0, 30, 60, 300, 7200})), a});
      answered.push_back(a);
    }
    if (chance(rng, 0.1)) m.answers.push_back({q.qname, DnsType{5}, 300, std::nullopt});
    auto p = inbound(q.resolver, Protocol::Udp, 53, q.port);
    p.dns = m;
    emit(std::move(p));
  }

  Ipv4Addr destination() {
    double r = std::uniform_real_distribution<double>(0, 1)(rng);
    if (r < 0.45 && !answered.empty()) return pick(rng, answered);
    if (r < 0.8 && !policy.connections.empty()) {
      const auto& c = pick(rng, policy.connections);
      if (auto* cidr = std::get_if<Cidr>(&c.dest)) return inside(rng, *cidr);
      return answer_for(*c.hostname());
    }
    return random_public(rng);
  }

  void open() {
    Protocol proto = chance(rng, 0.6) ? Protocol::Tcp : Protocol::Udp;
    std::uint16_t dport = 443;
    if (!policy.connections.empty() && chance(rng, 0.85)) {
      const auto& c = pick(rng, policy.connections);
      proto = c.proto;
      dport = c.dstport;
    }
    auto p = outbound(destination(), proto, static_cast<std::uint16_t>(uniform(rng, 50000, 50005)), dport);
    if (proto == Protocol::Tcp) p.tcp_flags = tcp_flags::kSyn;
    sessions.push_back(FlowKey::of(p));
    emit(std::move(p));
  }

  void continue_session() {
    if (sessions.empty()) return open();
    FlowKey k = pick(rng, sessions);
    bool out_dir = chance(rng, 0.5);
    auto p = out_dir ? outbound(k.dst_ip, k.proto, k.src_port, k.dst_port)
                     : inbound(k.dst_ip, k.proto, k.dst_port, k.src_port);
    if (k.proto == Protocol::Tcp) {
      using namespace tcp_flags;
      p.tcp_flags = pick(rng, std::vector<std::uint8_t>{kAck, kAck | kPsh, kAck | kPsh, kFin | kAck,
                                                        kRst, kSyn | kAck, kSyn});
    }
    emit(std::move(p));
  }

  void noise() {
    double r = std::uniform_real_distribution<double>(0, 1)(rng);
    if (r < 0.3) {
      auto p = inbound(random_public(rng), chance(rng, 0.5) ? Protocol::Tcp : Protocol::Udp,
                       static_cast<std::uint16_t>(uniform(rng, 1, 65535)), static_cast<std::uint16_t>(uniform(rng, 1, 65535)));
      emit(std::move(p));
    } else if (r < 0.5) {
      auto p = outbound(random_public(rng), Protocol::Other, 0, 0);
      emit(std::move(p));
    } else if (r < 0.75) {
      auto p = outbound(destination(), Protocol::Tcp, 50001, 443);
      p.src_ip = Ipv4Addr{10, 9, 8, 7};
      p.tcp_flags = tcp_flags::kSyn;
      emit(std::move(p));
    } else {
      auto p = outbound(random_public(rng), Protocol::Udp, 5353, 53);
      p.src_mac = MacAddr{{0x02, 1, 2, 3, 4, 5}};
      emit(std::move(p));
    }
  }
};

}  // namespace

std::vector<PacketRecord> random_trace(Rng& rng, const DevicePolicy& policy, std::size_t n) {
  TraceBuilder b(rng, policy, policy.ip.value_or(Ipv4Addr{192, 168, 1, 77}));
  while (b.out.size() < n) {
    b.advance();
    double r = std::uniform_real_distribution<double>(0, 1)(rng);
    if (r < 0.2)
      b.query();
    else if (r < 0.38)
      b.response();
    else if (r < 0.6)
      b.open();
    else if (r < 0.92)
      b.continue_session();
    else
      b.noise();
  }
  return b.out;
}

}  // namespace testsupport
