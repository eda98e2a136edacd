#include "iotpolicy/pcap.hpp"

#include <algorithm>
#include <cstring>
#include <ostream>

namespace iotpolicy {

namespace {

constexpr std::uint32_t kMagicMicros = 0xa1b2c3d4;
constexpr std::uint32_t kMagicNanos = 0xa1b23c4d;
constexpr std::uint32_t kLinkEthernet = 1;
constexpr std::uint16_t kEtherIpv4 = 0x0800;
constexpr std::uint16_t kEtherArp = 0x0806;
constexpr std::uint16_t kEtherVlan = 0x8100;
constexpr std::uint8_t kIpProtoIcmp = 1;
constexpr std::uint32_t kMaxFrame = 262144;

std::uint16_t be16(const std::uint8_t* p) {
  return static_cast<std::uint16_t>((p[0] << 8) | p[1]);
}
std::uint32_t be32(const std::uint8_t* p) {
  return (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) |
         (std::uint32_t{p[2]} << 8) | p[3];
}

MacAddr mac_at(const std::uint8_t* p) {
  MacAddr m;
  std::copy(p, p + 6, m.octets.begin());
  return m;
}

}  // namespace

DecodedFrame decode_frame(std::int64_t ts_us, std::span<const std::uint8_t> f) {
  DecodedFrame out;
  if (f.size() < 14) return out;
  out.dst_mac = mac_at(f.data());
  out.src_mac = mac_at(f.data() + 6);
  std::size_t off = 12;
  std::uint16_t ether = be16(f.data() + off);
  off += 2;
  if (ether == kEtherVlan) {
    if (f.size() < off + 4) return out;
    ether = be16(f.data() + off + 2);
    off += 4;
  }
  if (ether != kEtherIpv4) {
    out.kind = FrameKind::NonIp;
    return out;
  }

  const std::uint8_t* ip = f.data() + off;
  std::size_t cap = f.size() - off;
  if (cap < 20 || (ip[0] >> 4) != 4) return out;
  std::size_t ihl = std::size_t{ip[0] & 0x0fu} * 4;
  std::uint16_t total = be16(ip + 2);
  if (ihl < 20 || total < ihl || cap < ihl) return out;

  PacketRecord& r = out.record;
  r.ts_us = ts_us;
  r.src_mac = out.src_mac;
  r.dst_mac = out.dst_mac;
  r.src_ip = Ipv4Addr{be32(ip + 12)};
  r.dst_ip = Ipv4Addr{be32(ip + 16)};
  r.ip_len = total;
  std::uint16_t frag_offset = be16(ip + 6) & 0x1fff;
  std::uint8_t proto = ip[9];
  const std::uint8_t* l4 = ip + ihl;
  std::size_t l4_cap = std::min<std::size_t>(cap, total) - ihl;
  std::size_t l4_len = total - ihl;

  if (frag_offset != 0 || (proto != 6 && proto != 17)) {
    r.proto = Protocol::Other;
    r.payload_len = static_cast<std::uint32_t>(l4_len);
    out.kind = FrameKind::Ipv4;
    return out;
  }

  if (proto == 6) {
    if (l4_cap < 20) return out;
    std::size_t doff = static_cast<std::size_t>(l4[12] >> 4) * 4;
    if (doff < 20 || doff > l4_len) return out;
    r.proto = Protocol::Tcp;
    r.src_port = be16(l4);
    r.dst_port = be16(l4 + 2);
    r.tcp_flags = l4[13] & 0x3f;
    r.payload_len = static_cast<std::uint32_t>(l4_len - doff);
  } else {
    if (l4_cap < 8) return out;
    std::uint16_t ulen = be16(l4 + 4);
    if (ulen < 8 || ulen > l4_len) return out;
    r.proto = Protocol::Udp;
    r.src_port = be16(l4);
    r.dst_port = be16(l4 + 2);
    r.payload_len = ulen - 8u;
    if (r.src_port == 53 || r.dst_port == 53) {
      std::size_t avail = std::min<std::size_t>(l4_cap, ulen);
      if (avail > 8) r.dns = decode_dns(l4 + 8, avail - 8);
    }
  }
  out.kind = FrameKind::Ipv4;
  return out;
}

// ---------------------------------------------------------------------------
// Reader

CaptureReader::CaptureReader(const std::string& path, std::optional<MacAddr> device)
    : in_(path, std::ios::binary), device_(device) {
  if (!in_) throw IoError("cannot open capture '" + path + "'");
  std::uint8_t hdr[24];
  if (!read_exact(hdr, sizeof hdr))
    throw FormatError("'" + path + "': truncated pcap header");
  std::uint32_t magic;
  std::memcpy(&magic, hdr, 4);
  if (magic == kMagicMicros || magic == kMagicNanos) {
    swapped_ = false;
  } else if (__builtin_bswap32(magic) == kMagicMicros ||
             __builtin_bswap32(magic) == kMagicNanos) {
    swapped_ = true;
    magic = __builtin_bswap32(magic);
  } else {
    throw FormatError("'" + path + "': not a classic pcap file");
  }
  nanos_ = magic == kMagicNanos;
  std::uint16_t major;
  std::uint32_t snap, link;
  std::memcpy(&major, hdr + 4, 2);
  std::memcpy(&snap, hdr + 16, 4);
  std::memcpy(&link, hdr + 20, 4);
  if (swapped_) major = __builtin_bswap16(major);
  if (major != 2) throw FormatError("'" + path + "': unsupported pcap version");
  snaplen_ = to_host(snap);
  if ((to_host(link) & 0x0fffffff) != kLinkEthernet)
    throw FormatError("'" + path + "': link type is not Ethernet");
}

std::uint32_t CaptureReader::to_host(std::uint32_t v) const {
  return swapped_ ? __builtin_bswap32(v) : v;
}

bool CaptureReader::read_exact(void* buf, std::size_t n) {
  in_.read(static_cast<char*>(buf), static_cast<std::streamsize>(n));
  return static_cast<std::size_t>(in_.gcount()) == n;
}

std::optional<PacketRecord> CaptureReader::next() {
  while (true) {
    std::uint8_t rec[16];
    in_.read(reinterpret_cast<char*>(rec), sizeof rec);
    auto got = static_cast<std::size_t>(in_.gcount());
    if (got == 0) return std::nullopt;
    if (got < sizeof rec) {
      ++stats_.malformed;
      return std::nullopt;
    }
    std::uint32_t sec, frac, incl, orig;
    std::memcpy(&sec, rec, 4);
    std::memcpy(&frac, rec + 4, 4);
    std::memcpy(&incl, rec + 8, 4);
    std::memcpy(&orig, rec + 12, 4);
    sec = to_host(sec);
    frac = to_host(frac);
    incl = to_host(incl);
    if (incl > kMaxFrame) {
      ++stats_.malformed;
      return std::nullopt;
    }
    buf_.resize(incl);
    if (!read_exact(buf_.data(), incl)) {
      ++stats_.malformed;
      return std::nullopt;
    }
    ++stats_.frames;
    std::int64_t ts = std::int64_t{sec} * 1'000'000 + (nanos_ ? frac / 1000 : frac);

    auto frame = decode_frame(ts, buf_);
    if (frame.kind == FrameKind::Malformed && buf_.size() < 14) {
      ++stats_.malformed;
      continue;
    }
    if (device_ && frame.src_mac != *device_ && frame.dst_mac != *device_) {
      ++stats_.skipped_other_device;
      continue;
    }
    if (!stats_.first_ts_us) stats_.first_ts_us = ts;
    stats_.first_ts_us = std::min(*stats_.first_ts_us, ts);
    stats_.last_ts_us = std::max(stats_.last_ts_us.value_or(ts), ts);
    switch (frame.kind) {
      case FrameKind::NonIp: ++stats_.skipped_non_ip; continue;
      case FrameKind::Malformed: ++stats_.malformed; continue;
      case FrameKind::Ipv4: break;
    }
    ++stats_.records;
    return std::move(frame.record);
  }
}

Capture read_capture(const std::string& path, std::optional<MacAddr> device) {
  CaptureReader reader(path, device);
  Capture cap;
  while (auto p = reader.next()) cap.packets.push_back(std::move(*p));
  std::stable_sort(cap.packets.begin(), cap.packets.end(),
                   [](const PacketRecord& a, const PacketRecord& b) {
                     return a.ts_us < b.ts_us;
                   });
  cap.stats = reader.stats();
  return cap;
}

// ---------------------------------------------------------------------------
// Writer

namespace {

void push16(std::vector<std::uint8_t>& b, std::uint16_t v) {
  b.push_back(static_cast<std::uint8_t>(v >> 8));
  b.push_back(static_cast<std::uint8_t>(v));
}
void push32(std::vector<std::uint8_t>& b, std::uint32_t v) {
  push16(b, static_cast<std::uint16_t>(v >> 16));
  push16(b, static_cast<std::uint16_t>(v));
}

std::uint32_t sum16(const std::uint8_t* p, std::size_t n, std::uint32_t acc = 0) {
  for (std::size_t i = 0; i + 1 < n; i += 2) acc += be16(p + i);
  if (n & 1) acc += std::uint32_t{p[n - 1]} << 8;
  return acc;
}

std::uint16_t fold(std::uint32_t acc) {
  while (acc >> 16) acc = (acc & 0xffff) + (acc >> 16);
  return static_cast<std::uint16_t>(~acc);
}

std::size_t transport_header(Protocol p) {
  switch (p) {
    case Protocol::Tcp: return 20;
    case Protocol::Udp: return 8;
    case Protocol::Other: return 0;
  }
  return 0;
}

}  // namespace

void fill_lengths(PacketRecord& pkt) {
  if (pkt.dns && pkt.proto == Protocol::Udp)
    pkt.payload_len = static_cast<std::uint32_t>(encode_dns(*pkt.dns).size());
  pkt.ip_len = static_cast<std::uint16_t>(20 + transport_header(pkt.proto) + pkt.payload_len);
}

std::vector<std::uint8_t> encode_frame(const PacketRecord& pkt) {
  std::vector<std::uint8_t> payload;
  if (pkt.dns && pkt.proto == Protocol::Udp)
    payload = encode_dns(*pkt.dns);
  else
    payload.assign(pkt.payload_len, 0);

  std::vector<std::uint8_t> f;
  f.insert(f.end(), pkt.dst_mac.octets.begin(), pkt.dst_mac.octets.end());
  f.insert(f.end(), pkt.src_mac.octets.begin(), pkt.src_mac.octets.end());
  push16(f, kEtherIpv4);

  std::size_t ip_start = f.size();
  std::size_t total = 20 + transport_header(pkt.proto) + payload.size();
  std::uint8_t proto = pkt.proto == Protocol::Other ? kIpProtoIcmp
                                                    : static_cast<std::uint8_t>(pkt.proto);
  f.push_back(0x45);
  f.push_back(0);
  push16(f, static_cast<std::uint16_t>(total));
  push16(f, static_cast<std::uint16_t>(pkt.ts_us & 0xffff));
  push16(f, 0x4000);
  f.push_back(64);
  f.push_back(proto);
  push16(f, 0);
  push32(f, pkt.src_ip.value);
  push32(f, pkt.dst_ip.value);
  std::uint16_t ip_csum = fold(sum16(f.data() + ip_start, 20));
  f[ip_start + 10] = static_cast<std::uint8_t>(ip_csum >> 8);
  f[ip_start + 11] = static_cast<std::uint8_t>(ip_csum);

  std::size_t l4_start = f.size();
  if (pkt.proto == Protocol::Tcp) {
    push16(f, pkt.src_port);
    push16(f, pkt.dst_port);
    push32(f, 0);
    push32(f, 0);
    f.push_back(5 << 4);
    f.push_back(pkt.tcp_flags);
    push16(f, 65535);
    push16(f, 0);
    push16(f, 0);
  } else if (pkt.proto == Protocol::Udp) {
    push16(f, pkt.src_port);
    push16(f, pkt.dst_port);
    push16(f, static_cast<std::uint16_t>(8 + payload.size()));
    push16(f, 0);
  }
  f.insert(f.end(), payload.begin(), payload.end());

  if (pkt.proto != Protocol::Other) {
    std::size_t l4_len = f.size() - l4_start;
    std::uint32_t acc = sum16(f.data() + ip_start + 12, 8);
    acc += proto;
    acc += static_cast<std::uint32_t>(l4_len);
    std::uint16_t csum = fold(sum16(f.data() + l4_start, l4_len, acc));
    if (pkt.proto == Protocol::Udp && csum == 0) csum = 0xffff;
    std::size_t at = l4_start + (pkt.proto == Protocol::Tcp ? 16 : 6);
    f[at] = static_cast<std::uint8_t>(csum >> 8);
    f[at + 1] = static_cast<std::uint8_t>(csum);
  }
  return f;
}

std::vector<std::uint8_t> encode_arp(const MacAddr& mac, Ipv4Addr ip) {
  std::vector<std::uint8_t> f(6, 0xff);
  f.insert(f.end(), mac.octets.begin(), mac.octets.end());
  push16(f, kEtherArp);
  push16(f, 1);       // htype ethernet
  push16(f, 0x0800);  // ptype ipv4
  f.push_back(6);
  f.push_back(4);
  push16(f, 1);  // request
  f.insert(f.end(), mac.octets.begin(), mac.octets.end());
  push32(f, ip.value);
  f.insert(f.end(), 6, 0);
  push32(f, ip.value);
  return f;
}

PcapWriter::PcapWriter(std::ostream& out, ByteOrder order) : out_(out), order_(order) {
  put32(kMagicMicros);
  put16(2);
  put16(4);
  put32(0);
  put32(0);
  put32(65535);
  put32(kLinkEthernet);
}

void PcapWriter::put32(std::uint32_t v) {
  std::uint8_t b[4];
  for (int i = 0; i < 4; ++i) {
    int shift = order_ == ByteOrder::Little ? 8 * i : 8 * (3 - i);
    b[i] = static_cast<std::uint8_t>(v >> shift);
  }
  out_.write(reinterpret_cast<const char*>(b), 4);
}

void PcapWriter::put16(std::uint16_t v) {
  std::uint8_t b[2];
  if (order_ == ByteOrder::Little) {
    b[0] = static_cast<std::uint8_t>(v);
    b[1] = static_cast<std::uint8_t>(v >> 8);
  } else {
    b[0] = static_cast<std::uint8_t>(v >> 8);
    b[1] = static_cast<std::uint8_t>(v);
  }
  out_.write(reinterpret_cast<const char*>(b), 2);
}

void PcapWriter::write_frame(std::int64_t ts_us, std::span<const std::uint8_t> frame) {
  put32(static_cast<std::uint32_t>(ts_us / 1'000'000));
  put32(static_cast<std::uint32_t>(ts_us % 1'000'000));
  put32(static_cast<std::uint32_t>(frame.size()));
  put32(static_cast<std::uint32_t>(frame.size()));
  out_.write(reinterpret_cast<const char*>(frame.data()),
             static_cast<std::streamsize>(frame.size()));
  if (!out_) throw IoError("failed writing capture");
}

}  // namespace iotpolicy
