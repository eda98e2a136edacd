#include "iotpolicy/compile.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <set>
#include <sstream>

namespace iotpolicy {

JoinError::JoinError(std::string hostname)
    : std::runtime_error("no AllowedDNSReplies entry bounds the addresses of " + hostname),
      hostname_(std::move(hostname)) {}

std::string_view to_string(IrAction a) {
  switch (a) {
    case IrAction::Accept: return "ACCEPT";
    case IrAction::Drop: return "DROP";
    case IrAction::ForwardDns: return "FORWARD_DNS";
    case IrAction::SinkholeDns: return "SINKHOLE_DNS";
    case IrAction::FilterDnsAnswers: return "FILTER_DNS_ANSWERS";
  }
  return "?";
}

namespace {

RuleRef ref(RuleRef::Kind kind, std::size_t i) {
  return RuleRef{kind, static_cast<std::uint32_t>(i)};
}

IrMatch source_match(const DevicePolicy& policy, const CompileOptions& options) {
  IrMatch m;
  m.in_interface = options.interface;
  if (policy.ip)
    m.src_ip = policy.ip;
  else
    m.src_mac = policy.mac;
  return m;
}

std::vector<std::string> unlowered(const ConnectionRule& c) {
  std::vector<std::string> notes;
  if (c.max_bw_out) notes.push_back("max-bw-out " + format_bandwidth(*c.max_bw_out));
  if (c.max_packet_size)
    notes.push_back("max-packet-size " + std::to_string(*c.max_packet_size));
  if (c.schedule) notes.push_back("schedule " + format_schedule(*c.schedule) + " UTC");
  return notes;
}

}  // namespace

std::vector<RuleIR> compile_policy(const DevicePolicy& policy, const CompileOptions& options) {
  using Kind = RuleRef::Kind;
  std::vector<RuleIR> out;
  IrMatch source = source_match(policy, options);

  for (std::size_t i = 0; i < policy.connections.size(); ++i) {
    const auto& c = policy.connections[i];
    RuleIR base;
    base.match = source;
    base.match.proto = c.proto;
    base.match.dst_port = c.dstport;
    base.limit = c.freq;
    base.action = IrAction::Accept;
    base.origin = ref(Kind::Connection, i);
    base.unlowered = unlowered(c);

    const auto* host = c.hostname();
    if (!host) {
      base.match.dst_cidr = std::get<Cidr>(c.dest);
      out.push_back(std::move(base));
      continue;
    }
    std::vector<Cidr> joined;
    for (const auto& r : policy.dns_replies) {
      if (r.qname != *host) continue;
      for (const auto& cidr : r.answers)
        if (std::find(joined.begin(), joined.end(), cidr) == joined.end())
          joined.push_back(cidr);
    }
    if (joined.empty()) throw JoinError(*host);
    base.learned_from = *host;
    for (const auto& cidr : joined) {
      RuleIR r = base;
      r.match.dst_cidr = cidr;
      out.push_back(std::move(r));
    }
  }

  for (std::size_t i = 0; i < policy.dns_queries.size(); ++i) {
    const auto& q = policy.dns_queries[i];
    RuleIR r;
    r.match = source;
    r.match.dst_cidr = Cidr{q.resolver, 32};
    r.match.proto = Protocol::Udp;
    r.match.dst_port = 53;
    r.action = IrAction::Accept;
    r.origin = ref(Kind::DnsQuery, i);
    out.push_back(std::move(r));
  }

  for (std::size_t i = 0; i < policy.dns_replies.size(); ++i) {
    const auto& a = policy.dns_replies[i];
    RuleIR r;
    r.action = IrAction::FilterDnsAnswers;
    r.qname = a.qname;
    r.qtype = a.qtype;
    r.answers = a.answers;
    r.origin = ref(Kind::DnsReply, i);
    out.push_back(std::move(r));
  }

  for (std::size_t i = 0; i < policy.dns_queries.size(); ++i) {
    const auto& q = policy.dns_queries[i];
    RuleIR r;
    r.action = IrAction::ForwardDns;
    r.qname = q.qname;
    r.qtype = q.qtype;
    r.target = q.resolver;
    r.origin = ref(Kind::DnsQuery, i);
    out.push_back(std::move(r));
  }

  RuleIR sinkhole;
  sinkhole.action = IrAction::SinkholeDns;
  sinkhole.qname = "#";
  sinkhole.target = Ipv4Addr{0x7f000001};
  out.push_back(std::move(sinkhole));

  RuleIR drop;
  drop.action = IrAction::Drop;
  drop.match.in_interface = options.interface;
  out.push_back(std::move(drop));
  return out;
}

namespace {

std::string_view netfilter_unit(TimeUnit unit) {
  switch (unit) {
    case TimeUnit::Second: return "second";
    case TimeUnit::Minute: return "minute";
    case TimeUnit::Hour: return "hour";
    default: return "day";
  }
}

/// netfilter has no weekly unit; n/week becomes ceil(n/7)/day.
std::string limit_token(const RateSpec& rate, std::vector<std::string>& notes) {
  std::uint32_t count = rate.count;
  if (rate.per == TimeUnit::Week) {
    count = (rate.count + 6) / 7;
    notes.push_back("freq " + format_rate(rate) + " approximated as " + std::to_string(count) +
                    "/day");
  }
  return std::to_string(count) + "/" + std::string(netfilter_unit(rate.per));
}

std::string lower_proto(Protocol p) {
  std::string s(to_string(p));
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char ch) { return std::tolower(ch); });
  return s;
}

std::string render_cidr(const Cidr& c) {
  return c.prefix == 32 ? c.network.to_string() : c.to_string();
}

std::string limit_chain(const RuleRef& origin) {
  return "iot-c" + std::to_string(origin.index);
}

}  // namespace

std::string emit_netfilter(const std::vector<RuleIR>& ir, Chain chain) {
  const bool nat = chain == Chain::NatPrerouting;
  const std::string table = nat ? "iptables -t nat" : "iptables";
  const std::string append = table + (nat ? " -A PREROUTING" : " -A FORWARD");

  // Origins lowered to several ACCEPTs share one limit through a user chain.
  std::map<std::optional<RuleRef>, int> limited;
  for (const auto& r : ir)
    if (r.action == IrAction::Accept && r.limit) ++limited[r.origin];

  std::ostringstream out;
  std::set<std::string> seen;
  std::set<std::string> chains;
  auto line = [&](const std::string& text) {
    if (seen.insert(text).second) out << text << '\n';
  };

  if (!nat) line(append + " -m conntrack --ctstate ESTABLISHED,RELATED -j ACCEPT");

  std::optional<std::string> drop_interface;
  for (const auto& r : ir) {
    if (r.action == IrAction::Drop) {
      drop_interface = r.match.in_interface;
      continue;
    }
    if (r.action != IrAction::Accept) continue;

    std::vector<std::string> notes = r.unlowered;
    std::string cmd = append;
    const auto& m = r.match;
    if (m.in_interface) cmd += " -i " + *m.in_interface;
    if (m.src_mac) cmd += " -m mac --mac-source " + m.src_mac->to_string();
    if (m.src_ip) cmd += " -s " + m.src_ip->to_string();
    if (m.dst_cidr) cmd += " -d " + render_cidr(*m.dst_cidr);
    if (m.proto) cmd += " -p " + lower_proto(*m.proto);
    if (m.dst_port) cmd += " --dport " + std::to_string(*m.dst_port);
    if (!nat) cmd += " -m conntrack --ctstate NEW";

    std::string target = "ACCEPT";
    if (r.limit) {
      std::string limit = " -m limit --limit " + limit_token(*r.limit, notes);
      if (limited[r.origin] > 1 && r.origin) {
        target = limit_chain(*r.origin);
        if (chains.insert(target).second) {
          line(table + " -N " + target);
          line(table + " -A " + target + limit + " -j ACCEPT");
        }
      } else {
        cmd += limit;
      }
    }
    cmd += " -j " + target;
    if (seen.count(cmd)) continue;
    for (const auto& n : notes) out << "# not enforced by this rule: " << n << '\n';
    line(cmd);
  }

  if (!nat && drop_interface) line(append + " -i " + *drop_interface + " -j DROP");
  out << "# Default deny: traffic not accepted above is dropped.\n"
         "# Replies to accepted connections pass via connection tracking.\n";
  return out.str();
}

std::string emit_dns_forwarder(const std::vector<RuleIR>& ir, Ipv4Addr upstream) {
  std::set<std::string> forwarded;
  std::set<std::pair<std::string, std::string>> sinkholes;
  std::string wildcard = "127.0.0.1";
  for (const auto& r : ir) {
    if (r.action == IrAction::ForwardDns && r.qname != "#") forwarded.insert(r.qname);
    if (r.action == IrAction::SinkholeDns && r.target) {
      if (r.qname == "#")
        wildcard = r.target->to_string();
      else
        sinkholes.insert({r.qname, r.target->to_string()});
    }
  }
  std::ostringstream out;
  out << "no-resolv\n";
  for (const auto& q : forwarded) out << "server=/" << q << '/' << upstream.to_string() << '\n';
  for (const auto& [q, addr] : sinkholes) out << "address=/" << q << '/' << addr << '\n';
  out << "address=/#/" << wildcard << '\n';
  return out.str();
}

}  // namespace iotpolicy
