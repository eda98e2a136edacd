#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace iotpolicy {

/// IPv4 address held in host byte order.
struct Ipv4Addr {
  std::uint32_t value = 0;

  constexpr Ipv4Addr() = default;
  constexpr explicit Ipv4Addr(std::uint32_t v) : value(v) {}
  constexpr Ipv4Addr(std::uint8_t a, std::uint8_t b, std::uint8_t c, std::uint8_t d)
      : value((std::uint32_t{a} << 24) | (std::uint32_t{b} << 16) |
              (std::uint32_t{c} << 8) | std::uint32_t{d}) {}

  /// Strict dotted-quad parse: four decimal octets, no leading zeros.
  static std::optional<Ipv4Addr> parse(std::string_view text);
  std::string to_string() const;

  auto operator<=>(const Ipv4Addr&) const = default;
};

/// IPv4 prefix. The network address never has host bits set.
struct Cidr {
  Ipv4Addr network;
  std::uint8_t prefix = 32;

  constexpr Cidr() = default;
  /// Masks off host bits of `addr`.
  Cidr(Ipv4Addr addr, std::uint8_t prefix_len);

  /// Accepts "a.b.c.d/n" and a bare address (as /32). Rejects prefixes with
  /// host bits set.
  static std::optional<Cidr> parse(std::string_view text);
  std::string to_string() const;

  static constexpr std::uint32_t mask_for(std::uint8_t prefix_len) {
    return prefix_len == 0 ? 0u : ~std::uint32_t{0} << (32 - prefix_len);
  }
  bool contains(Ipv4Addr addr) const {
    return (addr.value & mask_for(prefix)) == network.value;
  }

  auto operator<=>(const Cidr&) const = default;
};

/// EUI-48 hardware address.
struct MacAddr {
  std::array<std::uint8_t, 6> octets{};

  /// Six colon-separated two-digit hex octets, either case.
  static std::optional<MacAddr> parse(std::string_view text);
  /// Lowercase colon-separated form.
  std::string to_string() const;

  bool is_broadcast() const;

  auto operator<=>(const MacAddr&) const = default;
};

enum class Protocol : std::uint8_t { Tcp = 6, Udp = 17, Other = 0 };

/// "TCP" / "UDP" / "OTHER".
std::string_view to_string(Protocol proto);
std::optional<Protocol> parse_protocol(std::string_view text);

/// Validates and canonicalises a DNS name: lowercase, no trailing dot,
/// labels of 1-63 letters/digits/hyphen/underscore, total length <= 253.
std::optional<std::string> canonical_dns_name(std::string_view name);

}  // namespace iotpolicy
