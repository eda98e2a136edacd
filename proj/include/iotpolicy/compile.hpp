#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "iotpolicy/policy.hpp"

namespace iotpolicy {

/// A hostname connection rule has no reply rule bounding its addresses.
class JoinError : public std::runtime_error {
 public:
  explicit JoinError(std::string hostname);
  const std::string& hostname() const { return hostname_; }

 private:
  std::string hostname_;
};

struct IrMatch {
  std::optional<MacAddr> src_mac;  // only when the policy has no IP
  std::optional<Ipv4Addr> src_ip;
  std::optional<Cidr> dst_cidr;
  std::optional<Protocol> proto;
  std::optional<std::uint16_t> dst_port;
  std::optional<std::string> in_interface;

  bool operator==(const IrMatch&) const = default;
};

enum class IrAction : std::uint8_t {
  Accept,
  Drop,
  ForwardDns,        // qname/qtype -> target resolver
  SinkholeDns,       // qname ("#" for any) -> target address
  FilterDnsAnswers,  // A answers for qname must lie in `answers`
};

std::string_view to_string(IrAction a);

struct RuleIR {
  IrMatch match;
  std::optional<RateSpec> limit;
  IrAction action = IrAction::Drop;

  std::string qname;  // DNS actions; "#" is the wildcard
  DnsType qtype;
  std::optional<Ipv4Addr> target;
  std::vector<Cidr> answers;

  /// Policy entry this rule was lowered from. Rules sharing an origin share
  /// one rate budget. Terminal rules have none.
  std::optional<RuleRef> origin;
  /// Accepts only destinations recently returned by an allowed lookup of
  /// this name. Packet filters cannot check this; the DNS forwarder does.
  std::optional<std::string> learned_from;
  /// Constraints with no lowering, e.g. "max-bw-out 10M/w".
  std::vector<std::string> unlowered;

  bool operator==(const RuleIR&) const = default;
};

struct CompileOptions {
  std::string interface = "wlan0";
};

/// Order: connection ACCEPTs (hostname destinations joined with every reply
/// rule for the name, one rule per answer prefix), UDP/53 ACCEPTs per query
/// rule, answer filters per reply rule, DNS forwards, wildcard sinkhole to
/// 127.0.0.1, default DROP.
std::vector<RuleIR> compile_policy(const DevicePolicy& policy,
                                   const CompileOptions& options = {});

enum class Chain : std::uint8_t { NatPrerouting, FilterForward };

/// iptables script, one command per ACCEPT, ending in a default-drop block.
std::string emit_netfilter(const std::vector<RuleIR>& ir,
                           Chain chain = Chain::NatPrerouting);

/// dnsmasq whitelist: no-resolv, sorted server= lines, wildcard sinkhole.
std::string emit_dns_forwarder(const std::vector<RuleIR>& ir, Ipv4Addr upstream);

}  // namespace iotpolicy
