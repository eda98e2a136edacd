#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "iotpolicy/flows.hpp"
#include "iotpolicy/policy.hpp"

namespace iotpolicy {

/// The capture holds no traffic from the device.
class EmptyCapture : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DeviceIdentity {
  MacAddr mac;
  std::optional<Ipv4Addr> ip;  // when set, only flows from this address count
};

struct SynthOptions {
  /// Prefix length for DNS answer aggregation; nullopt keeps exact /32s.
  std::optional<std::uint8_t> aggregate_prefix;
  double rate_slack = 1.0;
  std::string device_name;  // defaults to "device <mac>"
  /// Observation window. Defaults to the span of the given flows and DNS
  /// traffic, floored at one second.
  std::optional<double> capture_seconds;
};

/// Builds the smallest whitelist that admits the observed traffic: one query
/// rule per (qtype, qname, resolver), one reply rule per (qtype, qname)
/// covering the observed answers, one connection rule per (dest, proto, port)
/// with an inferred rate. Flows are attributed to the most recent allowed DNS
/// answer naming their destination that is still live when they start;
/// unattributed flows get a literal /32 destination.
DevicePolicy synthesize_policy(std::span<const FlowRecord> flows,
                               std::span<const DnsTransaction> dns,
                               const DeviceIdentity& device,
                               const SynthOptions& options = {});

/// Per-hour rate (per-day when under one per hour) covering both the
/// average over the capture and the busiest trailing unit-length window,
/// scaled by `slack` and rounded up. Fewer than two observations give nullopt.
std::optional<RateSpec> infer_rate(std::span<const std::int64_t> start_times_us,
                                   double capture_seconds, double slack = 1.0);

/// Most frequent source address among packets sent by `mac`.
std::optional<Ipv4Addr> infer_device_ip(std::span<const PacketRecord> packets, const MacAddr& mac);

/// target_prefix nullopt: one /32 per address. Otherwise the distinct
/// target_prefix-length blocks containing the addresses. Output is sorted.
std::vector<Cidr> aggregate_prefixes(std::span<const Ipv4Addr> ips,
                                     std::optional<std::uint8_t> target_prefix);

}  // namespace iotpolicy
