#include "iotpolicy/flows.hpp"

#include <algorithm>
#include <deque>
#include <map>
#include <set>
#include <tuple>

#include <nlohmann/json.hpp>

namespace iotpolicy {

bool SessionState::opened_by(const PacketRecord& pkt) const {
  switch (pkt.proto) {
    case Protocol::Tcp: return closing && pkt.is_syn();
    case Protocol::Udp: return pkt.ts_us - last_ts_us > kUdpIdleTimeoutUs;
    case Protocol::Other: break;
  }
  return false;
}

void SessionState::advance(const PacketRecord& pkt) {
  last_ts_us = pkt.ts_us;
  if (pkt.proto == Protocol::Tcp &&
      (pkt.has(tcp_flags::kFin) || pkt.has(tcp_flags::kRst)))
    closing = true;
}

namespace {

struct OpenFlow {
  FlowRecord record;
  SessionState session;
};

}  // namespace

std::vector<FlowRecord> track_flows(std::span<const PacketRecord> packets) {
  std::map<FlowKey, OpenFlow> open;
  std::vector<FlowRecord> done;

  for (const auto& pkt : packets) {
    if (pkt.proto == Protocol::Other) continue;
    auto key = FlowKey::of(pkt);
    auto it = open.find(key);
    if (it == open.end()) it = open.find(key.reversed());

    if (it != open.end() && it->second.session.opened_by(pkt)) {
      done.push_back(it->second.record);
      open.erase(it);
      it = open.end();
    }
    if (it == open.end()) {
      // A SYN-ACK seen first means the peer initiated.
      bool synack = pkt.proto == Protocol::Tcp && pkt.has(tcp_flags::kSyn) &&
                    pkt.has(tcp_flags::kAck);
      FlowKey initiator = synack ? key.reversed() : key;
      OpenFlow f;
      f.record.key = initiator;
      f.record.first_ts_us = pkt.ts_us;
      it = open.emplace(initiator, f).first;
    }

    auto& f = it->second;
    f.record.last_ts_us = pkt.ts_us;
    if (f.record.key == key) {
      f.record.out_bytes += pkt.payload_len;
      ++f.record.out_packets;
    } else {
      f.record.in_bytes += pkt.payload_len;
      ++f.record.in_packets;
    }
    f.session.advance(pkt);
  }

  for (auto& [_, f] : open) done.push_back(f.record);
  std::stable_sort(done.begin(), done.end(), [](const FlowRecord& a, const FlowRecord& b) {
    return std::tie(a.first_ts_us, a.key) < std::tie(b.first_ts_us, b.key);
  });
  return done;
}

DnsExtraction extract_dns(std::span<const PacketRecord> packets) {
  // txid, qname, resolver, client, client port
  using PendingKey = std::tuple<std::uint16_t, std::string, Ipv4Addr, Ipv4Addr, std::uint16_t>;
  std::map<PendingKey, std::deque<std::size_t>> pending;
  DnsExtraction out;

  for (const auto& pkt : packets) {
    if (!pkt.dns || pkt.proto != Protocol::Udp) continue;
    const auto& msg = *pkt.dns;
    if (!msg.is_response && pkt.dst_port == 53) {
      DnsTransaction t;
      t.query = msg;
      t.resolver = pkt.dst_ip;
      t.client = pkt.src_ip;
      t.client_port = pkt.src_port;
      t.query_ts_us = pkt.ts_us;
      pending[{msg.txid, msg.qname, pkt.dst_ip, pkt.src_ip, pkt.src_port}].push_back(out.transactions.size());
      out.transactions.push_back(std::move(t));
    } else if (msg.is_response && pkt.src_port == 53) {
      auto it = pending.find({msg.txid, msg.qname, pkt.src_ip, pkt.dst_ip, pkt.dst_port});
      if (it == pending.end() || it->second.empty()) {
        ++out.orphan_responses;
        continue;
      }
      auto& t = out.transactions[it->second.front()];
      it->second.pop_front();
      t.response = msg;
      t.response_ts_us = pkt.ts_us;
    }
  }
  return out;
}

CaptureSummary summarize_capture(std::span<const FlowRecord> flows,
                                 std::span<const DnsTransaction> dns,
                                 std::optional<Ipv4Addr> dhcp_resolver) {
  std::set<Endpoint> endpoints;
  std::set<std::string> domains;
  std::map<Ipv4Addr, std::int64_t> first_contact;

  for (const auto& f : flows) {
    if (f.key.proto == Protocol::Udp && f.key.dst_port == 53) continue;
    endpoints.insert({f.key.dst_ip, f.key.proto, f.key.dst_port});
    auto [it, fresh] = first_contact.emplace(f.key.dst_ip, f.first_ts_us);
    if (!fresh) it->second = std::min(it->second, f.first_ts_us);
  }

  CaptureSummary s;
  for (const auto& t : dns) {
    endpoints.insert({t.resolver, Protocol::Udp, 53});
    domains.insert(t.query.qname);
    if (dhcp_resolver && t.resolver != *dhcp_resolver) s.rogue_resolver = true;
  }

  for (const auto& [ip, contact] : first_contact) {
    bool resolved = std::any_of(dns.begin(), dns.end(), [&](const DnsTransaction& t) {
      if (!t.response || *t.response_ts_us > contact) return false;
      auto addrs = t.response->a_records();
      return std::find(addrs.begin(), addrs.end(), ip) != addrs.end();
    });
    if (!resolved) s.hardcoded.push_back(ip);
  }

  s.endpoints.assign(endpoints.begin(), endpoints.end());
  s.domains.assign(domains.begin(), domains.end());
  s.distinct_endpoints = s.endpoints.size();
  s.distinct_domains = s.domains.size();
  s.hardcoded_ips = s.hardcoded.size();
  return s;
}

std::string summary_json(const CaptureSummary& s) {
  nlohmann::ordered_json j;
  j["distinct_endpoints"] = s.distinct_endpoints;
  j["distinct_domains"] = s.distinct_domains;
  j["hardcoded_ips"] = s.hardcoded_ips;
  j["rogue_resolver"] = s.rogue_resolver;
  return j.dump();
}

}  // namespace iotpolicy
