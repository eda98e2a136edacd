#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "iotpolicy/flows.hpp"
#include "iotpolicy/packet.hpp"
#include "iotpolicy/policy.hpp"

namespace iotpolicy {

class OutOfOrderTimestamp : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// How long an address from an allowed DNS answer stays usable as a
/// destination: the record TTL, floored at 60 s and capped at 24 h.
std::int64_t binding_lifetime_us(std::uint32_t ttl_seconds);

enum class Decision : std::uint8_t { Allow, Deny };

enum class Reason : std::uint8_t {
  RuleMatch,
  EstablishedReply,
  DefaultDeny,
  RateExceeded,
  DnsQnameDenied,
  DnsAnswerOutOfRange,
  BandwidthExceeded,
  ResolverMismatch,
  OutsideSchedule,
  PacketTooLarge,
};

std::string_view to_string(Decision d);
std::string_view to_string(Reason r);

struct Verdict {
  std::size_t packet_index = 0;
  std::int64_t ts_us = 0;
  Decision decision = Decision::Deny;
  Reason reason = Reason::DefaultDeny;
  std::optional<RuleRef> rule;

  bool allowed() const { return decision == Decision::Allow; }
  bool operator==(const Verdict&) const = default;
};

/// Hostname -> addresses learned from allowed DNS answers, with expiry.
class BindingTable {
 public:
  /// Keeps the later expiry if the address is already bound.
  void bind(const std::string& qname, Ipv4Addr addr, std::int64_t expiry_us);
  /// True if `addr` is bound to `qname` and unexpired at `now_us`.
  bool resolves(const std::string& qname, Ipv4Addr addr, std::int64_t now_us) const;
  std::size_t size() const;

 private:
  std::map<std::string, std::map<Ipv4Addr, std::int64_t>> entries_;
};

/// Exact sliding window: at most `count` events in any trailing period.
class RateWindow {
 public:
  explicit RateWindow(RateSpec spec) : spec_(spec) {}

  /// Events e with now - period < e <= now.
  std::size_t count_at(std::int64_t now_us) const;
  bool admits(std::int64_t now_us) const { return count_at(now_us) < spec_.count; }
  void record(std::int64_t now_us);
  const RateSpec& spec() const { return spec_; }

 private:
  RateSpec spec_;
  std::deque<std::int64_t> events_;
};

/// Trailing-period byte budget.
class ByteWindow {
 public:
  explicit ByteWindow(BandwidthSpec spec) : spec_(spec) {}

  std::uint64_t sum_at(std::int64_t now_us) const;
  bool admits(std::int64_t now_us, std::uint64_t bytes) const {
    return sum_at(now_us) + bytes <= spec_.bytes;
  }
  void charge(std::int64_t now_us, std::uint64_t bytes);

 private:
  BandwidthSpec spec_;
  std::deque<std::pair<std::int64_t, std::uint64_t>> entries_;
  std::uint64_t total_ = 0;
};

enum class Charge : std::uint8_t { Ok, Exceeded };

struct MatchStats {
  std::map<RuleRef, std::uint64_t> rule_hits;  // every policy entry present
  std::vector<Endpoint> extraneous;            // distinct, first-denied order
  std::vector<std::string> denied_domains;     // distinct, first-denied order
  std::uint64_t allowed_total = 0;
  std::uint64_t denied_total = 0;
};

/// Stateful reference enforcement point for one device. Policies are
/// whitelists: any packet not admitted by an entry (or as the reply to an
/// admitted connection) is denied. Denied packets never change state.
class Monitor {
 public:
  explicit Monitor(DevicePolicy policy);

  /// Packets must arrive in timestamp order.
  Verdict evaluate(const PacketRecord& pkt);

  /// Charges `pkt` against the byte budget of connection rule `rule`.
  /// Exceeding packets are not charged. Rules without a budget always fit.
  Charge charge_bandwidth(std::size_t rule, const PacketRecord& pkt);

  const DevicePolicy& policy() const { return policy_; }
  const MatchStats& stats() const { return stats_; }
  const BindingTable& bindings() const { return bindings_; }

 private:
  struct Decided {
    Decision decision;
    Reason reason;
    std::optional<RuleRef> rule;
  };
  struct TrackedFlow {
    SessionState session;
    std::size_t rule = 0;
  };
  // resolver, client port, txid, qname, qtype
  using PendingQuery =
      std::tuple<Ipv4Addr, std::uint16_t, std::uint16_t, std::string, DnsType>;

  Decided decide(const PacketRecord& pkt);
  Decided dns_query(const PacketRecord& pkt);
  Decided dns_response(const PacketRecord& pkt);
  Decided outbound(const PacketRecord& pkt);
  Decided inbound(const PacketRecord& pkt);
  bool destination_allowed(const ConnectionRule& rule, Ipv4Addr dst,
                           std::int64_t now_us) const;
  void tally(const PacketRecord& pkt, const Decided& d);

  DevicePolicy policy_;
  std::vector<std::optional<RateWindow>> rate_;
  std::vector<std::optional<ByteWindow>> bandwidth_;
  BindingTable bindings_;
  std::map<FlowKey, TrackedFlow> flows_;  // keyed device -> remote
  std::multiset<PendingQuery> pending_;
  MatchStats stats_;
  std::optional<std::int64_t> last_ts_;
  std::size_t next_index_ = 0;
};

struct ReplayResult {
  std::vector<Verdict> verdicts;
  MatchStats stats;
};

ReplayResult replay(const DevicePolicy& policy, std::span<const PacketRecord> packets);

/// One NDJSON line (without newline):
/// {"index":..,"ts":..,"decision":..,"reason":..,"rule_id":..}
std::string verdict_json(const Verdict& v);
/// {"rule_hits":{..},"extraneous":[..],"denied_domains":[..],
///  "denied_total":..,"allowed_total":..}
std::string stats_json(const MatchStats& stats);

}  // namespace iotpolicy
