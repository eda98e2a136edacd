#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "iotpolicy/net.hpp"
#include "iotpolicy/policy.hpp"

namespace iotpolicy {

namespace tcp_flags {
inline constexpr std::uint8_t kFin = 0x01;
inline constexpr std::uint8_t kSyn = 0x02;
inline constexpr std::uint8_t kRst = 0x04;
inline constexpr std::uint8_t kPsh = 0x08;
inline constexpr std::uint8_t kAck = 0x10;
}  // namespace tcp_flags

struct DnsAnswer {
  std::string name;
  DnsType type;
  std::uint32_t ttl = 0;
  std::optional<Ipv4Addr> address;  // set for A records only

  bool operator==(const DnsAnswer&) const = default;
};

struct DnsMessage {
  bool is_response = false;
  std::uint16_t txid = 0;
  std::uint8_t rcode = 0;
  DnsType qtype;
  std::string qname;  // lowercase, no trailing dot
  std::vector<DnsAnswer> answers;

  bool operator==(const DnsMessage&) const = default;

  std::vector<Ipv4Addr> a_records() const;
};

/// One IPv4 frame from a capture, normalised.
struct PacketRecord {
  std::int64_t ts_us = 0;
  MacAddr src_mac, dst_mac;
  Ipv4Addr src_ip, dst_ip;
  Protocol proto = Protocol::Other;
  std::uint16_t src_port = 0;  // zero unless TCP/UDP
  std::uint16_t dst_port = 0;
  std::uint32_t payload_len = 0;  // transport payload (IP payload for OTHER)
  std::uint16_t ip_len = 0;       // IPv4 total length
  std::uint8_t tcp_flags = 0;
  std::optional<DnsMessage> dns;

  bool operator==(const PacketRecord&) const = default;

  bool has(std::uint8_t flag) const { return (tcp_flags & flag) != 0; }
  /// Connection-opening SYN (SYN without ACK).
  bool is_syn() const {
    return proto == Protocol::Tcp && has(tcp_flags::kSyn) && !has(tcp_flags::kAck);
  }
};

/// Five-tuple. Flows store it initiator-first.
struct FlowKey {
  Ipv4Addr src_ip, dst_ip;
  Protocol proto = Protocol::Other;
  std::uint16_t src_port = 0, dst_port = 0;

  static FlowKey of(const PacketRecord& p) {
    return {p.src_ip, p.dst_ip, p.proto, p.src_port, p.dst_port};
  }
  FlowKey reversed() const { return {dst_ip, src_ip, proto, dst_port, src_port}; }
  std::string to_string() const;

  auto operator<=>(const FlowKey&) const = default;
};

// ---------------------------------------------------------------------------
// DNS wire format

/// Decodes a DNS message from a UDP payload. Returns nullopt on malformed
/// input or when there is no question.
std::optional<DnsMessage> decode_dns(const std::uint8_t* data, std::size_t len);

/// Encodes a message with one question. A-record answers carry 4-byte rdata;
/// other answer types are written with empty rdata.
std::vector<std::uint8_t> encode_dns(const DnsMessage& msg);

}  // namespace iotpolicy
