#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "iotpolicy/packet.hpp"

namespace iotpolicy {

/// A synthetic capture of one device talking through its gateway.
struct Trace {
  std::string profile;
  MacAddr device_mac;
  Ipv4Addr device_ip;
  MacAddr gateway_mac;
  Ipv4Addr resolver;
  std::vector<PacketRecord> packets;  // timestamp order, lengths filled
  std::int64_t start_ts_us = 0;
  /// Capture end; write_trace marks it with a gratuitous ARP.
  std::int64_t end_ts_us = 0;

  double duration_seconds() const { return static_cast<double>(end_ts_us - start_ts_us) / 1e6; }
};

/// Periodic uploader: before each upload an A lookup of netcom.netatmo.net
/// via 192.168.1.1, answered from a pool of four addresses in
/// 62.210.92.0/24, then one TCP connection to port 25050. Device
/// 70:ee:50:13:ab:cd at 172.16.1.2; the capture lasts one hour.
Trace weather_station_trace(std::uint64_t seed = 1, int uploads = 6,
                            std::int64_t interval_seconds = 600);

/// Event-driven uploader: two weigh-ins, each a lookup followed by an HTTP
/// connection, in a six-hour capture.
Trace scale_trace(std::uint64_t seed = 1);

/// One long-lived TCP control connection (port 56700, keepalives every
/// minute) plus NTP to a hardcoded server every ten minutes. Uses 8.8.8.8.
Trace bulb_trace(std::uint64_t seed = 1);

std::vector<std::string_view> profile_names();
/// Throws std::invalid_argument for unknown names.
Trace profile_trace(std::string_view name, std::uint64_t seed = 1);

struct Injected {
  std::vector<PacketRecord> packets;  // merged, timestamp order
  std::vector<bool> injected;         // parallel to packets
};

/// Adds Mirai-style traffic from the device: TCP SYNs to port 23 of
/// `scan_hosts` random public addresses and `dns_queries` A lookups of
/// random unlisted names, spread over the trace.
Injected inject_mirai(const Trace& trace, std::uint64_t seed = 7, int scan_hosts = 100,
                      int dns_queries = 1000);

/// Classic little-endian pcap of the packets followed by the end marker.
void write_trace(std::ostream& out, const Trace& trace);
void write_packets(std::ostream& out, const std::vector<PacketRecord>& packets,
                   const Trace& trace);

}  // namespace iotpolicy
