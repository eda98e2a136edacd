#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "iotpolicy/net.hpp"

namespace iotpolicy {

// ---------------------------------------------------------------------------
// Errors raised while reading a policy document.

class PolicyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Document is not well-formed JSON.
class SyntaxError : public PolicyError {
 public:
  using PolicyError::PolicyError;
};

/// Unknown key, missing key or wrong JSON type.
class SchemaError : public PolicyError {
 public:
  using PolicyError::PolicyError;
};

/// A value is well-typed but violates its grammar (MAC, CIDR, port, rate...).
class InvariantError : public PolicyError {
 public:
  using PolicyError::PolicyError;
};

/// A connection rule names a hostname that no DNS query rule allows resolving.
class DanglingHostname : public PolicyError {
 public:
  explicit DanglingHostname(std::string hostname);
  const std::string& hostname() const { return hostname_; }

 private:
  std::string hostname_;
};

// ---------------------------------------------------------------------------
// Value types

enum class TimeUnit : std::uint8_t { Second, Minute, Hour, Day, Week };

std::int64_t seconds_per(TimeUnit unit);
/// Accepts s/sec/second, m/min/minute, h/hr/hour, d/day, w/week.
std::optional<TimeUnit> parse_time_unit(std::string_view token);
/// Short token used when writing policies: s, min, hr, d, w.
std::string_view short_token(TimeUnit unit);
/// English noun: second, minute, hour, day, week.
std::string_view unit_name(TimeUnit unit);

/// N events per time unit ("6/hr").
struct RateSpec {
  std::uint32_t count = 1;
  TimeUnit per = TimeUnit::Hour;

  std::int64_t period_us() const { return seconds_per(per) * 1'000'000; }
  bool operator==(const RateSpec&) const = default;
};

std::optional<RateSpec> parse_rate(std::string_view text);
std::string format_rate(const RateSpec& rate);

/// Byte budget per time unit ("10M/w"); K/M/G are powers of ten.
struct BandwidthSpec {
  std::uint64_t bytes = 1;
  TimeUnit per = TimeUnit::Week;

  std::int64_t period_us() const { return seconds_per(per) * 1'000'000; }
  bool operator==(const BandwidthSpec&) const = default;
};

std::optional<BandwidthSpec> parse_bandwidth(std::string_view text);
std::string format_bandwidth(const BandwidthSpec& bw);
/// "10 MB", "500 KB", "12 bytes".
std::string human_bytes(std::uint64_t bytes);

/// Daily window [start, end) in minutes after midnight. start > end wraps
/// past midnight.
struct DailyWindow {
  std::uint16_t start_minute = 0;
  std::uint16_t end_minute = 0;

  bool contains_minute(std::uint32_t minute_of_day) const;
  /// Timestamp in microseconds since the epoch, evaluated in UTC.
  bool contains(std::int64_t ts_us) const;
  bool operator==(const DailyWindow&) const = default;
};

/// "HH:MM-HH:MM".
std::optional<DailyWindow> parse_schedule(std::string_view text);
std::string format_schedule(const DailyWindow& w);

/// DNS RR type, stored as its IANA code.
struct DnsType {
  std::uint16_t code = 1;

  static constexpr DnsType a() { return DnsType{1}; }
  static std::optional<DnsType> from_mnemonic(std::string_view text);
  /// Mnemonic for known types, "TYPE<n>" otherwise.
  std::string mnemonic() const;
  auto operator<=>(const DnsType&) const = default;
};

struct DnsQueryRule {
  DnsType qtype;
  std::string qname;
  Ipv4Addr resolver;
  bool operator==(const DnsQueryRule&) const = default;
};

struct DnsReplyRule {
  DnsType qtype;
  std::string qname;
  std::vector<Cidr> answers;  // never empty
  bool operator==(const DnsReplyRule&) const = default;

  bool admits(Ipv4Addr addr) const;
};

/// A hostname (resolved through the DNS rules) or a literal prefix.
using Destination = std::variant<std::string, Cidr>;

std::string to_string(const Destination& dest);

struct ConnectionRule {
  Destination dest;
  Protocol proto = Protocol::Tcp;
  std::uint16_t dstport = 0;
  std::optional<RateSpec> freq;
  std::optional<BandwidthSpec> max_bw_out;
  std::optional<std::uint32_t> max_packet_size;
  std::optional<DailyWindow> schedule;
  bool operator==(const ConnectionRule&) const = default;

  const std::string* hostname() const { return std::get_if<std::string>(&dest); }
};

struct DevicePolicy {
  std::string device_name;
  MacAddr mac;
  std::optional<Ipv4Addr> ip;
  std::vector<DnsQueryRule> dns_queries;
  std::vector<DnsReplyRule> dns_replies;
  std::vector<ConnectionRule> connections;
  bool operator==(const DevicePolicy&) const = default;

  bool denies_everything() const {
    return dns_queries.empty() && dns_replies.empty() && connections.empty();
  }
};

/// Identifies one policy entry; renders as e.g. "AllowedConnections[0]".
struct RuleRef {
  enum class Kind : std::uint8_t { DnsQuery, DnsReply, Connection };
  Kind kind = Kind::Connection;
  std::uint32_t index = 0;

  std::string to_string() const;
  static std::optional<RuleRef> parse(std::string_view text);
  auto operator<=>(const RuleRef&) const = default;
};

/// Every entry of `policy` in document order.
std::vector<RuleRef> all_rules(const DevicePolicy& policy);

// ---------------------------------------------------------------------------
// Operations

/// Parses a single-device policy document. The schema is strict: unknown
/// keys are rejected. "AllowedLookups" is accepted as an alias of
/// "AllowedDNSQueries".
DevicePolicy parse_policy(std::string_view document);

/// Canonical JSON text; parse_policy(serialize_policy(p)) == p.
std::string serialize_policy(const DevicePolicy& policy);

/// Throws InvariantError or DanglingHostname when a programmatically built
/// policy would not survive parse_policy.
void check_invariants(const DevicePolicy& policy);

struct PolicyWarning {
  enum class Code : std::uint8_t {
    NoRateLimit,           // connection rule without freq
    NoBandwidthBound,      // connection rule without max-bw-out
    UnconstrainedAnswers,  // query rule with no reply rule for the same name/type
    WildcardAnswers,       // reply rule admitting 0.0.0.0/0
  };
  Code code;
  RuleRef rule;
  std::string message;
};

std::vector<PolicyWarning> validate_policy(const DevicePolicy& policy);

/// One English sentence per rule, newline separated.
std::string explain_policy(const DevicePolicy& policy);

}  // namespace iotpolicy
