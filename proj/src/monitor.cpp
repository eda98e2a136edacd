#include "iotpolicy/monitor.hpp"

#include <algorithm>

#include <nlohmann/json.hpp>

namespace iotpolicy {

std::int64_t binding_lifetime_us(std::uint32_t ttl_seconds) {
  std::int64_t secs = std::clamp<std::int64_t>(ttl_seconds, 60, 86400);
  return secs * 1'000'000;
}

std::string_view to_string(Decision d) {
  return d == Decision::Allow ? "ALLOW" : "DENY";
}

std::string_view to_string(Reason r) {
  switch (r) {
    case Reason::RuleMatch: return "RULE_MATCH";
    case Reason::EstablishedReply: return "ESTABLISHED_REPLY";
    case Reason::DefaultDeny: return "DEFAULT_DENY";
    case Reason::RateExceeded: return "RATE_EXCEEDED";
    case Reason::DnsQnameDenied: return "DNS_QNAME_DENIED";
    case Reason::DnsAnswerOutOfRange: return "DNS_ANSWER_OUT_OF_RANGE";
    case Reason::BandwidthExceeded: return "BANDWIDTH_EXCEEDED";
    case Reason::ResolverMismatch: return "RESOLVER_MISMATCH";
    case Reason::OutsideSchedule: return "OUTSIDE_SCHEDULE";
    case Reason::PacketTooLarge: return "PACKET_TOO_LARGE";
  }
  return "DEFAULT_DENY";
}

// ---------------------------------------------------------------------------

void BindingTable::bind(const std::string& qname, Ipv4Addr addr, std::int64_t expiry_us) {
  auto& e = entries_[qname][addr];
  e = std::max(e, expiry_us);
}

bool BindingTable::resolves(const std::string& qname, Ipv4Addr addr,
                            std::int64_t now_us) const {
  auto it = entries_.find(qname);
  if (it == entries_.end()) return false;
  auto a = it->second.find(addr);
  return a != it->second.end() && now_us < a->second;
}

std::size_t BindingTable::size() const {
  std::size_t n = 0;
  for (const auto& [_, addrs] : entries_) n += addrs.size();
  return n;
}

std::size_t RateWindow::count_at(std::int64_t now_us) const {
  auto cutoff = now_us - spec_.period_us();
  auto first = std::upper_bound(events_.begin(), events_.end(), cutoff);
  auto last = std::upper_bound(first, events_.end(), now_us);
  return static_cast<std::size_t>(last - first);
}

void RateWindow::record(std::int64_t now_us) {
  events_.push_back(now_us);
  auto cutoff = now_us - spec_.period_us();
  while (!events_.empty() && events_.front() <= cutoff) events_.pop_front();
}

std::uint64_t ByteWindow::sum_at(std::int64_t now_us) const {
  auto cutoff = now_us - spec_.period_us();
  std::uint64_t expired = 0;
  for (const auto& [ts, bytes] : entries_) {
    if (ts > cutoff) break;
    expired += bytes;
  }
  return total_ - expired;
}

void ByteWindow::charge(std::int64_t now_us, std::uint64_t bytes) {
  auto cutoff = now_us - spec_.period_us();
  while (!entries_.empty() && entries_.front().first <= cutoff) {
    total_ -= entries_.front().second;
    entries_.pop_front();
  }
  if (bytes == 0) return;
  entries_.emplace_back(now_us, bytes);
  total_ += bytes;
}

// ---------------------------------------------------------------------------

Monitor::Monitor(DevicePolicy policy) : policy_(std::move(policy)) {
  for (const auto& c : policy_.connections) {
    rate_.push_back(c.freq ? std::optional<RateWindow>(RateWindow(*c.freq)) : std::nullopt);
    bandwidth_.push_back(c.max_bw_out ? std::optional<ByteWindow>(ByteWindow(*c.max_bw_out))
                                      : std::nullopt);
  }
  for (const auto& ref : all_rules(policy_)) stats_.rule_hits[ref] = 0;
}

Verdict Monitor::evaluate(const PacketRecord& pkt) {
  if (last_ts_ && pkt.ts_us < *last_ts_)
    throw OutOfOrderTimestamp("packet at " + std::to_string(pkt.ts_us) +
                              " precedes " + std::to_string(*last_ts_));
  last_ts_ = pkt.ts_us;
  auto d = decide(pkt);
  tally(pkt, d);
  return Verdict{next_index_++, pkt.ts_us, d.decision, d.reason, d.rule};
}

Charge Monitor::charge_bandwidth(std::size_t rule, const PacketRecord& pkt) {
  if (rule >= bandwidth_.size() || !bandwidth_[rule]) return Charge::Ok;
  auto& w = *bandwidth_[rule];
  if (!w.admits(pkt.ts_us, pkt.payload_len)) return Charge::Exceeded;
  w.charge(pkt.ts_us, pkt.payload_len);
  return Charge::Ok;
}

Monitor::Decided Monitor::decide(const PacketRecord& pkt) {
  const Decided deny{Decision::Deny, Reason::DefaultDeny, std::nullopt};
  if (pkt.src_mac == policy_.mac) {
    if (policy_.ip && pkt.src_ip != *policy_.ip) return deny;
    if (pkt.proto == Protocol::Other) return deny;
    if (pkt.proto == Protocol::Udp && pkt.dst_port == 53 && pkt.dns &&
        !pkt.dns->is_response)
      return dns_query(pkt);
    return outbound(pkt);
  }
  if (pkt.dst_mac == policy_.mac) {
    if (pkt.proto == Protocol::Udp && pkt.src_port == 53 && pkt.dns &&
        pkt.dns->is_response)
      return dns_response(pkt);
    return inbound(pkt);
  }
  return deny;
}

Monitor::Decided Monitor::dns_query(const PacketRecord& pkt) {
  const auto& q = *pkt.dns;
  Decided result{Decision::Deny, Reason::DnsQnameDenied, std::nullopt};
  for (std::uint32_t i = 0; i < policy_.dns_queries.size(); ++i) {
    const auto& rule = policy_.dns_queries[i];
    if (rule.qname != q.qname || rule.qtype != q.qtype) continue;
    if (rule.resolver == pkt.dst_ip) {
      pending_.insert({pkt.dst_ip, pkt.src_port, q.txid, q.qname, q.qtype});
      return {Decision::Allow, Reason::RuleMatch, RuleRef{RuleRef::Kind::DnsQuery, i}};
    }
    if (!result.rule)
      result = {Decision::Deny, Reason::ResolverMismatch,
                RuleRef{RuleRef::Kind::DnsQuery, i}};
  }
  return result;
}

Monitor::Decided Monitor::dns_response(const PacketRecord& pkt) {
  const auto& m = *pkt.dns;
  auto pending = pending_.find({pkt.src_ip, pkt.dst_port, m.txid, m.qname, m.qtype});
  if (pending == pending_.end()) return {Decision::Deny, Reason::DefaultDeny, std::nullopt};

  std::vector<std::uint32_t> rules;
  for (std::uint32_t i = 0; i < policy_.dns_replies.size(); ++i) {
    const auto& r = policy_.dns_replies[i];
    if (r.qname == m.qname && r.qtype == m.qtype) rules.push_back(i);
  }

  Decided result{Decision::Allow, Reason::EstablishedReply, std::nullopt};
  if (!rules.empty()) {
    auto ref = [](std::uint32_t i) { return RuleRef{RuleRef::Kind::DnsReply, i}; };
    std::optional<std::uint32_t> matched;
    for (const auto& a : m.answers) {
      if (!a.address) continue;
      auto it = std::find_if(rules.begin(), rules.end(), [&](std::uint32_t i) {
        return policy_.dns_replies[i].admits(*a.address);
      });
      if (it == rules.end())
        return {Decision::Deny, Reason::DnsAnswerOutOfRange, ref(rules.front())};
      if (!matched) matched = *it;
    }
    result = {Decision::Allow, Reason::RuleMatch, ref(matched.value_or(rules.front()))};
  }

  pending_.erase(pending);
  for (const auto& a : m.answers)
    if (a.address)
      bindings_.bind(m.qname, *a.address, pkt.ts_us + binding_lifetime_us(a.ttl));
  return result;
}

bool Monitor::destination_allowed(const ConnectionRule& rule, Ipv4Addr dst,
                                  std::int64_t now_us) const {
  const auto* host = rule.hostname();
  if (!host) return std::get<Cidr>(rule.dest).contains(dst);
  if (!bindings_.resolves(*host, dst, now_us)) return false;
  bool constrained = false;
  for (const auto& r : policy_.dns_replies) {
    if (r.qname != *host) continue;
    constrained = true;
    if (r.admits(dst)) return true;
  }
  return !constrained;
}

Monitor::Decided Monitor::outbound(const PacketRecord& pkt) {
  auto key = FlowKey::of(pkt);
  auto it = flows_.find(key);

  if (it != flows_.end() && !it->second.session.opened_by(pkt)) {
    auto rule = it->second.rule;
    RuleRef ref{RuleRef::Kind::Connection, static_cast<std::uint32_t>(rule)};
    const auto& c = policy_.connections[rule];
    if (c.max_packet_size && pkt.ip_len > *c.max_packet_size)
      return {Decision::Deny, Reason::PacketTooLarge, ref};
    if (charge_bandwidth(rule, pkt) == Charge::Exceeded)
      return {Decision::Deny, Reason::BandwidthExceeded, ref};
    it->second.session.advance(pkt);
    return {Decision::Allow, Reason::RuleMatch, ref};
  }

  std::optional<Decided> failure;
  for (std::uint32_t i = 0; i < policy_.connections.size(); ++i) {
    const auto& c = policy_.connections[i];
    if (c.proto != pkt.proto || c.dstport != pkt.dst_port) continue;
    if (!destination_allowed(c, pkt.dst_ip, pkt.ts_us)) continue;
    RuleRef ref{RuleRef::Kind::Connection, i};
    std::optional<Reason> why;
    if (c.schedule && !c.schedule->contains(pkt.ts_us))
      why = Reason::OutsideSchedule;
    else if (c.max_packet_size && pkt.ip_len > *c.max_packet_size)
      why = Reason::PacketTooLarge;
    else if (rate_[i] && !rate_[i]->admits(pkt.ts_us))
      why = Reason::RateExceeded;
    else if (bandwidth_[i] && !bandwidth_[i]->admits(pkt.ts_us, pkt.payload_len))
      why = Reason::BandwidthExceeded;
    if (why) {
      if (!failure) failure = Decided{Decision::Deny, *why, ref};
      continue;
    }

    if (rate_[i]) rate_[i]->record(pkt.ts_us);
    charge_bandwidth(i, pkt);
    TrackedFlow flow{SessionState{}, i};
    flow.session.advance(pkt);
    flows_.insert_or_assign(key, flow);
    return {Decision::Allow, Reason::RuleMatch, ref};
  }
  return failure.value_or(Decided{Decision::Deny, Reason::DefaultDeny, std::nullopt});
}

Monitor::Decided Monitor::inbound(const PacketRecord& pkt) {
  auto it = flows_.find(FlowKey::of(pkt).reversed());
  if (it == flows_.end() || it->second.session.opened_by(pkt))
    return {Decision::Deny, Reason::DefaultDeny, std::nullopt};
  it->second.session.advance(pkt);
  return {Decision::Allow, Reason::EstablishedReply, std::nullopt};
}

void Monitor::tally(const PacketRecord& pkt, const Decided& d) {
  if (d.decision == Decision::Allow) {
    ++stats_.allowed_total;
    if (d.rule) ++stats_.rule_hits[*d.rule];
    return;
  }
  ++stats_.denied_total;
  if (pkt.src_mac != policy_.mac) return;
  Endpoint e{pkt.dst_ip, pkt.proto, pkt.dst_port};
  if (std::find(stats_.extraneous.begin(), stats_.extraneous.end(), e) ==
      stats_.extraneous.end())
    stats_.extraneous.push_back(e);
  if (pkt.dns && !pkt.dns->is_response &&
      std::find(stats_.denied_domains.begin(), stats_.denied_domains.end(),
                pkt.dns->qname) == stats_.denied_domains.end())
    stats_.denied_domains.push_back(pkt.dns->qname);
}

ReplayResult replay(const DevicePolicy& policy, std::span<const PacketRecord> packets) {
  Monitor m(policy);
  ReplayResult out;
  out.verdicts.reserve(packets.size());
  for (const auto& p : packets) out.verdicts.push_back(m.evaluate(p));
  out.stats = m.stats();
  return out;
}

std::string verdict_json(const Verdict& v) {
  nlohmann::ordered_json j;
  j["index"] = v.packet_index;
  j["ts"] = v.ts_us;
  j["decision"] = to_string(v.decision);
  j["reason"] = to_string(v.reason);
  j["rule_id"] = v.rule ? nlohmann::ordered_json(v.rule->to_string()) : nlohmann::ordered_json(nullptr);
  return j.dump();
}

std::string stats_json(const MatchStats& stats) {
  nlohmann::ordered_json j;
  j["rule_hits"] = nlohmann::ordered_json::object();
  for (const auto& [ref, hits] : stats.rule_hits) j["rule_hits"][ref.to_string()] = hits;
  j["extraneous"] = nlohmann::ordered_json::array();
  for (const auto& e : stats.extraneous)
    j["extraneous"].push_back(
        {{"dst", e.ip.to_string()}, {"proto", to_string(e.proto)}, {"port", e.port}});
  j["denied_domains"] = stats.denied_domains;
  j["denied_total"] = stats.denied_total;
  j["allowed_total"] = stats.allowed_total;
  return j.dump(2);
}

}  // namespace iotpolicy
