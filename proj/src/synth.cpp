#include "iotpolicy/synth.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <tuple>

#include "iotpolicy/monitor.hpp"

namespace iotpolicy {

std::optional<RateSpec> infer_rate(std::span<const std::int64_t> start_times_us,
                                   double capture_seconds, double slack) {
  if (start_times_us.size() < 2 || capture_seconds <= 0.0) return std::nullopt;
  slack = std::max(slack, 1.0);

  std::vector<std::int64_t> starts(start_times_us.begin(), start_times_us.end());
  std::sort(starts.begin(), starts.end());
  auto n = static_cast<double>(starts.size());

  constexpr double kEps = 1e-9;
  TimeUnit unit = n / capture_seconds * 3600.0 >= 1.0 - kEps ? TimeUnit::Hour : TimeUnit::Day;
  double average = n / capture_seconds * static_cast<double>(seconds_per(unit));

  // Busiest trailing window (t - period, t] ending at an observation.
  std::int64_t period = seconds_per(unit) * 1'000'000;
  std::size_t peak = 0, lo = 0;
  for (std::size_t hi = 0; hi < starts.size(); ++hi) {
    while (starts[lo] <= starts[hi] - period) ++lo;
    peak = std::max(peak, hi - lo + 1);
  }

  double wanted = slack * std::max(average, static_cast<double>(peak));
  auto count = static_cast<std::uint32_t>(std::ceil(wanted - kEps));
  return RateSpec{std::max<std::uint32_t>(count, 1), unit};
}

std::vector<Cidr> aggregate_prefixes(std::span<const Ipv4Addr> ips,
                                     std::optional<std::uint8_t> target_prefix) {
  std::uint8_t prefix = target_prefix.value_or(32);
  std::set<Cidr> blocks;
  for (auto ip : ips) blocks.insert(Cidr{ip, prefix});
  return {blocks.begin(), blocks.end()};
}

namespace {

struct Attribution {
  std::int64_t answered_at;
  const std::string* qname;
};

/// Most recent answer naming `dst` whose binding is still live at `start`.
std::optional<Attribution> attribute(Ipv4Addr dst, std::int64_t start,
                                     std::span<const DnsTransaction* const> dns) {
  std::optional<Attribution> best;
  for (const auto* t : dns) {
    if (!t->response || *t->response_ts_us > start) continue;
    for (const auto& a : t->response->answers) {
      if (a.address != dst) continue;
      if (start >= *t->response_ts_us + binding_lifetime_us(a.ttl)) continue;
      if (!best || *t->response_ts_us >= best->answered_at)
        best = Attribution{*t->response_ts_us, &t->query.qname};
    }
  }
  return best;
}

}  // namespace

DevicePolicy synthesize_policy(std::span<const FlowRecord> flows,
                               std::span<const DnsTransaction> dns,
                               const DeviceIdentity& device, const SynthOptions& options) {
  std::vector<const DnsTransaction*> txns;
  std::set<Ipv4Addr> resolvers;
  for (const auto& t : dns) {
    if (device.ip && t.client != *device.ip) continue;
    txns.push_back(&t);
    resolvers.insert(t.resolver);
  }
  std::vector<const FlowRecord*> device_flows;
  for (const auto& f : flows) {
    if (device.ip && f.key.src_ip != *device.ip) continue;
    if (f.key.proto == Protocol::Udp && f.key.dst_port == 53 && resolvers.count(f.key.dst_ip))
      continue;
    device_flows.push_back(&f);
  }
  if (txns.empty() && device_flows.empty())
    throw EmptyCapture("no traffic from " + device.mac.to_string());

  DevicePolicy policy;
  policy.device_name =
      options.device_name.empty() ? "device " + device.mac.to_string() : options.device_name;
  policy.mac = device.mac;
  policy.ip = device.ip;

  std::int64_t first = INT64_MAX, last = INT64_MIN;
  auto widen = [&](std::int64_t ts) {
    first = std::min(first, ts);
    last = std::max(last, ts);
  };

  std::set<std::tuple<std::string, DnsType, Ipv4Addr>> queries;
  std::map<std::pair<std::string, DnsType>, std::vector<Ipv4Addr>> answers;
  for (const auto* t : txns) {
    widen(t->query_ts_us);
    queries.insert({t->query.qname, t->query.qtype, t->resolver});
    if (!t->response) continue;
    widen(*t->response_ts_us);
    auto addrs = t->response->a_records();
    if (addrs.empty()) continue;
    auto& bucket = answers[{t->query.qname, t->query.qtype}];
    bucket.insert(bucket.end(), addrs.begin(), addrs.end());
  }
  for (const auto& [qname, qtype, resolver] : queries)
    policy.dns_queries.push_back({qtype, qname, resolver});
  for (const auto& [key, addrs] : answers)
    policy.dns_replies.push_back(
        {key.second, key.first, aggregate_prefixes(addrs, options.aggregate_prefix)});

  struct Group {
    Destination dest;
    std::vector<std::int64_t> starts;
  };
  std::map<std::tuple<std::string, Protocol, std::uint16_t>, Group> groups;
  for (const auto* f : device_flows) {
    widen(f->first_ts_us);
    widen(f->last_ts_us);
    Destination dest = Cidr{f->key.dst_ip, 32};
    if (auto a = attribute(f->key.dst_ip, f->first_ts_us, txns)) dest = *a->qname;
    auto& g = groups[{to_string(dest), f->key.proto, f->key.dst_port}];
    g.dest = dest;
    g.starts.push_back(f->first_ts_us);
  }

  double seconds = options.capture_seconds.value_or(
      static_cast<double>(last - first) / 1e6);
  seconds = std::max(seconds, 1.0);
  for (auto& [key, g] : groups) {
    ConnectionRule rule;
    rule.dest = g.dest;
    rule.proto = std::get<1>(key);
    rule.dstport = std::get<2>(key);
    rule.freq = infer_rate(g.starts, seconds, options.rate_slack);
    policy.connections.push_back(std::move(rule));
  }
  return policy;
}

std::optional<Ipv4Addr> infer_device_ip(std::span<const PacketRecord> packets, const MacAddr& mac) {
  std::map<Ipv4Addr, std::size_t> counts;
  for (const auto& p : packets)
    if (p.src_mac == mac) ++counts[p.src_ip];
  std::optional<Ipv4Addr> best;
  std::size_t best_count = 0;
  for (const auto& [ip, n] : counts)
    if (n > best_count) best = ip, best_count = n;
  return best;
}

}  // namespace iotpolicy
