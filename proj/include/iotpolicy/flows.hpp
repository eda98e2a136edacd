#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "iotpolicy/packet.hpp"

namespace iotpolicy {

/// UDP sessions end after this much silence.
inline constexpr std::int64_t kUdpIdleTimeoutUs = 60'000'000;

/// Per-five-tuple session bookkeeping shared by flow tracking and the
/// enforcement monitor, so both agree on where a connection starts.
struct SessionState {
  std::int64_t last_ts_us = 0;
  bool closing = false;  // FIN or RST seen

  /// True when `pkt` starts a new session on this tuple: TCP SYN after
  /// FIN/RST, or UDP after the idle timeout.
  bool opened_by(const PacketRecord& pkt) const;
  void advance(const PacketRecord& pkt);
};

struct FlowRecord {
  FlowKey key;  // initiator -> responder
  std::int64_t first_ts_us = 0;
  std::int64_t last_ts_us = 0;
  std::uint64_t out_bytes = 0;  // initiator -> responder payload
  std::uint64_t out_packets = 0;
  std::uint64_t in_bytes = 0;
  std::uint64_t in_packets = 0;

  bool operator==(const FlowRecord&) const = default;
};

/// Groups TCP/UDP packets into sessions. A TCP flow starts at a SYN (or at
/// the first packet seen mid-connection) and closes on FIN/RST; a UDP flow
/// ends after kUdpIdleTimeoutUs of silence. Output is ordered by start time.
std::vector<FlowRecord> track_flows(std::span<const PacketRecord> packets);

struct DnsTransaction {
  DnsMessage query;
  std::optional<DnsMessage> response;
  Ipv4Addr resolver;
  Ipv4Addr client;
  std::uint16_t client_port = 0;
  std::int64_t query_ts_us = 0;
  std::optional<std::int64_t> response_ts_us;
};

struct DnsExtraction {
  std::vector<DnsTransaction> transactions;  // in query order
  std::uint64_t orphan_responses = 0;
};

/// Pairs DNS queries with responses by (txid, qname, resolver, client port); the oldest
/// open query wins.
DnsExtraction extract_dns(std::span<const PacketRecord> packets);

struct Endpoint {
  Ipv4Addr ip;
  Protocol proto = Protocol::Other;
  std::uint16_t port = 0;
  auto operator<=>(const Endpoint&) const = default;
};

struct CaptureSummary {
  std::size_t distinct_endpoints = 0;
  std::size_t distinct_domains = 0;
  std::size_t hardcoded_ips = 0;
  bool rogue_resolver = false;

  std::vector<Endpoint> endpoints;        // sorted
  std::vector<std::string> domains;       // sorted
  std::vector<Ipv4Addr> hardcoded;        // sorted
};

/// Footprint of one device: distinct (ip, proto, port) endpoints over non-DNS
/// flows plus resolvers used, distinct query names, destinations contacted
/// without a prior DNS answer naming them, and whether any resolver other
/// than `dhcp_resolver` was used.
CaptureSummary summarize_capture(std::span<const FlowRecord> flows,
                                 std::span<const DnsTransaction> dns,
                                 std::optional<Ipv4Addr> dhcp_resolver = std::nullopt);

/// {"distinct_endpoints":..,"distinct_domains":..,"hardcoded_ips":..,"rogue_resolver":..}
std::string summary_json(const CaptureSummary& s);

}  // namespace iotpolicy
