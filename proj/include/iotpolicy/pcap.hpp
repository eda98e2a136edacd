#pragma once

#include <cstdint>
#include <fstream>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "iotpolicy/packet.hpp"

namespace iotpolicy {

/// Not a classic Ethernet pcap file (bad magic, version or link type).
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CaptureStats {
  std::uint64_t frames = 0;
  std::uint64_t records = 0;
  std::uint64_t skipped_non_ip = 0;
  std::uint64_t skipped_other_device = 0;
  std::uint64_t malformed = 0;
  /// Span of frames that passed the MAC filter, IP or not.
  std::optional<std::int64_t> first_ts_us;
  std::optional<std::int64_t> last_ts_us;

  double duration_seconds() const {
    if (!first_ts_us) return 0.0;
    return static_cast<double>(*last_ts_us - *first_ts_us) / 1e6;
  }
};

enum class FrameKind : std::uint8_t { Ipv4, NonIp, Malformed };

struct DecodedFrame {
  FrameKind kind = FrameKind::Malformed;
  MacAddr src_mac, dst_mac;  // valid unless the Ethernet header is truncated
  PacketRecord record;       // valid for Ipv4
};

/// Decodes an Ethernet II frame (optionally 802.1Q tagged).
DecodedFrame decode_frame(std::int64_t ts_us, std::span<const std::uint8_t> frame);

/// Streaming reader for classic pcap (microsecond or nanosecond magic, either
/// byte order, link type 1). Frames come back in file order.
class CaptureReader {
 public:
  /// When `device` is set, only frames sent or received by that MAC pass.
  explicit CaptureReader(const std::string& path,
                         std::optional<MacAddr> device = std::nullopt);

  std::optional<PacketRecord> next();
  const CaptureStats& stats() const { return stats_; }

 private:
  bool read_exact(void* buf, std::size_t n);
  std::uint32_t to_host(std::uint32_t v) const;

  std::ifstream in_;
  std::optional<MacAddr> device_;
  bool swapped_ = false;
  bool nanos_ = false;
  std::uint32_t snaplen_ = 0;
  CaptureStats stats_;
  std::vector<std::uint8_t> buf_;
};

struct Capture {
  std::vector<PacketRecord> packets;  // stably sorted by timestamp
  CaptureStats stats;
};

Capture read_capture(const std::string& path,
                     std::optional<MacAddr> device = std::nullopt);

// ---------------------------------------------------------------------------
// Writing

/// Sets payload_len (from the DNS message when present) and ip_len.
void fill_lengths(PacketRecord& pkt);

/// Ethernet/IPv4/TCP|UDP frame for `pkt`; OTHER is written as ICMP. TCP/UDP
/// payload is the encoded DNS message if present, zero bytes otherwise.
std::vector<std::uint8_t> encode_frame(const PacketRecord& pkt);

/// Broadcast ARP announcement from `mac`/`ip`.
std::vector<std::uint8_t> encode_arp(const MacAddr& mac, Ipv4Addr ip);

class PcapWriter {
 public:
  enum class ByteOrder { Little, Big };

  explicit PcapWriter(std::ostream& out, ByteOrder order = ByteOrder::Little);

  void write_frame(std::int64_t ts_us, std::span<const std::uint8_t> frame);
  void write(const PacketRecord& pkt) { write_frame(pkt.ts_us, encode_frame(pkt)); }

 private:
  void put32(std::uint32_t v);
  void put16(std::uint16_t v);

  std::ostream& out_;
  ByteOrder order_;
};

}  // namespace iotpolicy
