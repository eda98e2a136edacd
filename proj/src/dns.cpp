#include <cstdio>

#include "iotpolicy/packet.hpp"

namespace iotpolicy {

std::vector<Ipv4Addr> DnsMessage::a_records() const {
  std::vector<Ipv4Addr> out;
  for (const auto& a : answers)
    if (a.address) out.push_back(*a.address);
  return out;
}

std::string FlowKey::to_string() const {
  return std::string(iotpolicy::to_string(proto)) + " " + src_ip.to_string() + ":" +
         std::to_string(src_port) + " -> " + dst_ip.to_string() + ":" +
         std::to_string(dst_port);
}

namespace {

constexpr std::uint16_t kClassIn = 1;

class Cursor {
 public:
  Cursor(const std::uint8_t* data, std::size_t len) : data_(data), len_(len) {}

  bool u8(std::uint8_t& v) {
    if (pos_ + 1 > len_) return false;
    v = data_[pos_++];
    return true;
  }
  bool u16(std::uint16_t& v) {
    if (pos_ + 2 > len_) return false;
    v = static_cast<std::uint16_t>((data_[pos_] << 8) | data_[pos_ + 1]);
    pos_ += 2;
    return true;
  }
  bool u32(std::uint32_t& v) {
    std::uint16_t hi, lo;
    if (!u16(hi) || !u16(lo)) return false;
    v = (std::uint32_t{hi} << 16) | lo;
    return true;
  }
  bool skip(std::size_t n) {
    if (pos_ + n > len_) return false;
    pos_ += n;
    return true;
  }

  /// Reads a possibly-compressed name and advances past its in-place part.
  bool name(std::string& out) {
    out.clear();
    std::size_t p = pos_;
    bool jumped = false;
    int hops = 0;
    while (true) {
      if (p >= len_) return false;
      std::uint8_t len = data_[p];
      if ((len & 0xc0) == 0xc0) {
        if (p + 1 >= len_ || ++hops > 32) return false;
        std::size_t target = ((len & 0x3f) << 8) | data_[p + 1];
        if (!jumped) pos_ = p + 2;
        jumped = true;
        p = target;
        continue;
      }
      if (len & 0xc0) return false;
      if (len == 0) {
        if (!jumped) pos_ = p + 1;
        break;
      }
      if (p + 1 + len > len_) return false;
      if (!out.empty()) out.push_back('.');
      for (std::size_t i = 0; i < len; ++i) {
        char c = static_cast<char>(data_[p + 1 + i]);
        out.push_back(c >= 'A' && c <= 'Z' ? static_cast<char>(c - 'A' + 'a') : c);
      }
      if (out.size() > 255) return false;
      p += 1 + len;
    }
    return true;
  }

  std::size_t pos() const { return pos_; }

 private:
  const std::uint8_t* data_;
  std::size_t len_;
  std::size_t pos_ = 0;
};

void put16(std::vector<std::uint8_t>& b, std::uint16_t v) {
  b.push_back(static_cast<std::uint8_t>(v >> 8));
  b.push_back(static_cast<std::uint8_t>(v));
}

void put32(std::vector<std::uint8_t>& b, std::uint32_t v) {
  put16(b, static_cast<std::uint16_t>(v >> 16));
  put16(b, static_cast<std::uint16_t>(v));
}

void put_name(std::vector<std::uint8_t>& b, const std::string& name) {
  std::size_t start = 0;
  while (start < name.size()) {
    auto dot = name.find('.', start);
    if (dot == std::string::npos) dot = name.size();
    b.push_back(static_cast<std::uint8_t>(dot - start));
    b.insert(b.end(), name.begin() + static_cast<std::ptrdiff_t>(start),
             name.begin() + static_cast<std::ptrdiff_t>(dot));
    start = dot + 1;
  }
  b.push_back(0);
}

}  // namespace

std::optional<DnsMessage> decode_dns(const std::uint8_t* data, std::size_t len) {
  Cursor c(data, len);
  std::uint16_t id, flags, qd, an, ns, ar;
  if (!c.u16(id) || !c.u16(flags) || !c.u16(qd) || !c.u16(an) || !c.u16(ns) ||
      !c.u16(ar))
    return std::nullopt;
  if (qd == 0) return std::nullopt;

  DnsMessage msg;
  msg.txid = id;
  msg.is_response = (flags & 0x8000) != 0;
  msg.rcode = static_cast<std::uint8_t>(flags & 0x000f);

  std::uint16_t qtype, qclass;
  if (!c.name(msg.qname) || !c.u16(qtype) || !c.u16(qclass)) return std::nullopt;
  msg.qtype = DnsType{qtype};
  for (std::uint16_t i = 1; i < qd; ++i) {
    std::string ignored;
    if (!c.name(ignored) || !c.skip(4)) return std::nullopt;
  }
  if (!msg.is_response) return msg;

  for (std::uint16_t i = 0; i < an; ++i) {
    DnsAnswer a;
    std::uint16_t type, klass, rdlen;
    if (!c.name(a.name) || !c.u16(type) || !c.u16(klass) || !c.u32(a.ttl) ||
        !c.u16(rdlen))
      return std::nullopt;
    a.type = DnsType{type};
    if (type == DnsType::a().code && klass == kClassIn) {
      if (rdlen != 4) return std::nullopt;
      std::uint32_t addr;
      if (!c.u32(addr)) return std::nullopt;
      a.address = Ipv4Addr{addr};
    } else if (!c.skip(rdlen)) {
      return std::nullopt;
    }
    msg.answers.push_back(std::move(a));
  }
  return msg;
}

std::vector<std::uint8_t> encode_dns(const DnsMessage& msg) {
  std::vector<std::uint8_t> b;
  put16(b, msg.txid);
  std::uint16_t flags = msg.is_response ? 0x8180 : 0x0100;
  flags |= msg.rcode & 0x0f;
  put16(b, flags);
  put16(b, 1);
  put16(b, static_cast<std::uint16_t>(msg.is_response ? msg.answers.size() : 0));
  put16(b, 0);
  put16(b, 0);
  put_name(b, msg.qname);
  put16(b, msg.qtype.code);
  put16(b, kClassIn);
  if (!msg.is_response) return b;
  for (const auto& a : msg.answers) {
    if (a.name == msg.qname) {
      put16(b, 0xc00c);
    } else {
      put_name(b, a.name);
    }
    put16(b, a.type.code);
    put16(b, kClassIn);
    put32(b, a.ttl);
    if (a.address) {
      put16(b, 4);
      put32(b, a.address->value);
    } else {
      put16(b, 0);
    }
  }
  return b;
}

}  // namespace iotpolicy
