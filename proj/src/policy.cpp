#include "iotpolicy/policy.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cstdio>
#include <set>

#include <nlohmann/json.hpp>

namespace iotpolicy {

using nlohmann::json;

DanglingHostname::DanglingHostname(std::string hostname)
    : PolicyError("connection rule names '" + hostname +
                  "' but no DNS query rule allows resolving it"),
      hostname_(std::move(hostname)) {}

// ---------------------------------------------------------------------------
// Units, rates, bandwidth, schedules

std::int64_t seconds_per(TimeUnit unit) {
  switch (unit) {
    case TimeUnit::Second: return 1;
    case TimeUnit::Minute: return 60;
    case TimeUnit::Hour: return 3600;
    case TimeUnit::Day: return 86400;
    case TimeUnit::Week: return 7 * 86400;
  }
  return 1;
}

std::optional<TimeUnit> parse_time_unit(std::string_view t) {
  if (t == "s" || t == "sec" || t == "second") return TimeUnit::Second;
  if (t == "m" || t == "min" || t == "minute") return TimeUnit::Minute;
  if (t == "h" || t == "hr" || t == "hour") return TimeUnit::Hour;
  if (t == "d" || t == "day") return TimeUnit::Day;
  if (t == "w" || t == "week") return TimeUnit::Week;
  return std::nullopt;
}

std::string_view short_token(TimeUnit unit) {
  switch (unit) {
    case TimeUnit::Second: return "s";
    case TimeUnit::Minute: return "min";
    case TimeUnit::Hour: return "hr";
    case TimeUnit::Day: return "d";
    case TimeUnit::Week: return "w";
  }
  return "s";
}

std::string_view unit_name(TimeUnit unit) {
  switch (unit) {
    case TimeUnit::Second: return "second";
    case TimeUnit::Minute: return "minute";
    case TimeUnit::Hour: return "hour";
    case TimeUnit::Day: return "day";
    case TimeUnit::Week: return "week";
  }
  return "second";
}

namespace {

template <typename T>
std::optional<T> parse_positive(std::string_view text) {
  if (text.empty() || text.front() == '0') return std::nullopt;
  T v{};
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size()) return std::nullopt;
  return v;
}

}  // namespace

std::optional<RateSpec> parse_rate(std::string_view text) {
  auto slash = text.find('/');
  if (slash == std::string_view::npos) return std::nullopt;
  auto count = parse_positive<std::uint32_t>(text.substr(0, slash));
  auto unit = parse_time_unit(text.substr(slash + 1));
  if (!count || !unit) return std::nullopt;
  return RateSpec{*count, *unit};
}

std::string format_rate(const RateSpec& rate) {
  return std::to_string(rate.count) + "/" + std::string(short_token(rate.per));
}

std::optional<BandwidthSpec> parse_bandwidth(std::string_view text) {
  auto slash = text.find('/');
  if (slash == std::string_view::npos) return std::nullopt;
  auto amount = text.substr(0, slash);
  std::uint64_t mult = 1;
  if (!amount.empty()) {
    switch (amount.back()) {
      case 'K': mult = 1'000; break;
      case 'M': mult = 1'000'000; break;
      case 'G': mult = 1'000'000'000; break;
      default: break;
    }
    if (mult != 1) amount.remove_suffix(1);
  }
  auto n = parse_positive<std::uint64_t>(amount);
  auto unit = parse_time_unit(text.substr(slash + 1));
  if (!n || !unit) return std::nullopt;
  if (*n > UINT64_MAX / mult) return std::nullopt;
  return BandwidthSpec{*n * mult, *unit};
}

std::string format_bandwidth(const BandwidthSpec& bw) {
  std::string amount;
  if (bw.bytes % 1'000'000'000 == 0)
    amount = std::to_string(bw.bytes / 1'000'000'000) + "G";
  else if (bw.bytes % 1'000'000 == 0)
    amount = std::to_string(bw.bytes / 1'000'000) + "M";
  else if (bw.bytes % 1'000 == 0)
    amount = std::to_string(bw.bytes / 1'000) + "K";
  else
    amount = std::to_string(bw.bytes);
  return amount + "/" + std::string(short_token(bw.per));
}

std::string human_bytes(std::uint64_t bytes) {
  if (bytes != 0 && bytes % 1'000'000'000 == 0)
    return std::to_string(bytes / 1'000'000'000) + " GB";
  if (bytes != 0 && bytes % 1'000'000 == 0)
    return std::to_string(bytes / 1'000'000) + " MB";
  if (bytes != 0 && bytes % 1'000 == 0) return std::to_string(bytes / 1'000) + " KB";
  return std::to_string(bytes) + (bytes == 1 ? " byte" : " bytes");
}

bool DailyWindow::contains_minute(std::uint32_t m) const {
  if (start_minute <= end_minute) return m >= start_minute && m < end_minute;
  return m >= start_minute || m < end_minute;
}

bool DailyWindow::contains(std::int64_t ts_us) const {
  constexpr std::int64_t day_us = 86400LL * 1'000'000;
  auto in_day = ((ts_us % day_us) + day_us) % day_us;
  return contains_minute(static_cast<std::uint32_t>(in_day / 60'000'000));
}

std::optional<DailyWindow> parse_schedule(std::string_view text) {
  auto parse_clock = [](std::string_view t) -> std::optional<std::uint16_t> {
    if (t.size() != 5 || t[2] != ':') return std::nullopt;
    for (std::size_t i : {0u, 1u, 3u, 4u})
      if (t[i] < '0' || t[i] > '9') return std::nullopt;
    int h = (t[0] - '0') * 10 + (t[1] - '0');
    int m = (t[3] - '0') * 10 + (t[4] - '0');
    if (h > 24 || m > 59 || (h == 24 && m != 0)) return std::nullopt;
    return static_cast<std::uint16_t>(h * 60 + m);
  };
  auto dash = text.find('-');
  if (dash == std::string_view::npos) return std::nullopt;
  auto start = parse_clock(text.substr(0, dash));
  auto end = parse_clock(text.substr(dash + 1));
  if (!start || !end || *start == *end || *start == 1440) return std::nullopt;
  return DailyWindow{*start, *end};
}

std::string format_schedule(const DailyWindow& w) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%02u:%02u-%02u:%02u", w.start_minute / 60u,
                w.start_minute % 60u, w.end_minute / 60u, w.end_minute % 60u);
  return buf;
}

// ---------------------------------------------------------------------------
// DNS types

namespace {

constexpr std::array<std::pair<std::string_view, std::uint16_t>, 18> kDnsTypes{{
    {"A", 1},      {"NS", 2},      {"CNAME", 5}, {"SOA", 6},   {"PTR", 12},
    {"HINFO", 13}, {"MX", 15},     {"TXT", 16},  {"AAAA", 28}, {"SRV", 33},
    {"NAPTR", 35}, {"DS", 43},     {"DNSKEY", 48}, {"SVCB", 64}, {"HTTPS", 65},
    {"CAA", 257},  {"ANY", 255},   {"SPF", 99},
}};

}  // namespace

std::optional<DnsType> DnsType::from_mnemonic(std::string_view text) {
  for (auto [name, code] : kDnsTypes)
    if (name == text) return DnsType{code};
  return std::nullopt;
}

std::string DnsType::mnemonic() const {
  for (auto [name, c] : kDnsTypes)
    if (c == code) return std::string(name);
  return "TYPE" + std::to_string(code);
}

bool DnsReplyRule::admits(Ipv4Addr addr) const {
  return std::any_of(answers.begin(), answers.end(),
                     [&](const Cidr& c) { return c.contains(addr); });
}

std::string to_string(const Destination& dest) {
  if (auto* host = std::get_if<std::string>(&dest)) return *host;
  return std::get<Cidr>(dest).to_string();
}

// ---------------------------------------------------------------------------
// Rule references

namespace {

constexpr std::string_view kQueriesKey = "AllowedDNSQueries";
constexpr std::string_view kLookupsAlias = "AllowedLookups";
constexpr std::string_view kRepliesKey = "AllowedDNSReplies";
constexpr std::string_view kConnectionsKey = "AllowedConnections";

std::string_view list_key(RuleRef::Kind kind) {
  switch (kind) {
    case RuleRef::Kind::DnsQuery: return kQueriesKey;
    case RuleRef::Kind::DnsReply: return kRepliesKey;
    case RuleRef::Kind::Connection: return kConnectionsKey;
  }
  return kConnectionsKey;
}

}  // namespace

std::string RuleRef::to_string() const {
  return std::string(list_key(kind)) + "[" + std::to_string(index) + "]";
}

std::optional<RuleRef> RuleRef::parse(std::string_view text) {
  auto open = text.find('[');
  if (open == std::string_view::npos || text.back() != ']') return std::nullopt;
  auto key = text.substr(0, open);
  auto num = text.substr(open + 1, text.size() - open - 2);
  std::uint32_t idx = 0;
  auto [ptr, ec] = std::from_chars(num.data(), num.data() + num.size(), idx);
  if (num.empty() || ec != std::errc{} || ptr != num.data() + num.size())
    return std::nullopt;
  for (auto kind : {Kind::DnsQuery, Kind::DnsReply, Kind::Connection})
    if (key == list_key(kind)) return RuleRef{kind, idx};
  return std::nullopt;
}

std::vector<RuleRef> all_rules(const DevicePolicy& policy) {
  std::vector<RuleRef> out;
  for (std::uint32_t i = 0; i < policy.dns_queries.size(); ++i)
    out.push_back({RuleRef::Kind::DnsQuery, i});
  for (std::uint32_t i = 0; i < policy.dns_replies.size(); ++i)
    out.push_back({RuleRef::Kind::DnsReply, i});
  for (std::uint32_t i = 0; i < policy.connections.size(); ++i)
    out.push_back({RuleRef::Kind::Connection, i});
  return out;
}

// ---------------------------------------------------------------------------
// Parsing

namespace {

/// Reads one JSON object under a strict key set.
class ObjectReader {
 public:
  ObjectReader(const json& obj, std::string where,
               std::initializer_list<std::string_view> allowed)
      : obj_(obj), where_(std::move(where)) {
    if (!obj_.is_object()) throw SchemaError(where_ + ": expected an object");
    for (auto& [key, _] : obj_.items()) {
      if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
        throw SchemaError(where_ + ": unknown key '" + key + "'");
    }
  }

  bool has(std::string_view key) const { return obj_.contains(key); }

  const json& at(std::string_view key) const {
    auto it = obj_.find(key);
    if (it == obj_.end())
      throw SchemaError(where_ + ": missing key '" + std::string(key) + "'");
    return *it;
  }

  std::string string(std::string_view key) const {
    const auto& v = at(key);
    if (!v.is_string())
      throw SchemaError(where_ + "." + std::string(key) + ": expected a string");
    return v.get<std::string>();
  }

  /// Numbers may appear as JSON integers or as decimal strings.
  std::uint64_t number(std::string_view key, std::uint64_t max) const {
    const auto& v = at(key);
    std::optional<std::uint64_t> n;
    if (v.is_number_unsigned()) {
      n = v.get<std::uint64_t>();
    } else if (v.is_string()) {
      n = parse_positive<std::uint64_t>(v.get<std::string>());
      if (!n)
        throw InvariantError(where_ + "." + std::string(key) +
                             ": not a positive integer");
    } else {
      throw SchemaError(where_ + "." + std::string(key) +
                        ": expected an integer or a numeric string");
    }
    if (*n == 0 || *n > max)
      throw InvariantError(where_ + "." + std::string(key) + ": out of range");
    return *n;
  }

  const std::string& where() const { return where_; }

 private:
  const json& obj_;
  std::string where_;
};

std::string require_name(const std::string& text, const std::string& where) {
  auto name = canonical_dns_name(text);
  if (!name) throw InvariantError(where + ": invalid DNS name '" + text + "'");
  return *name;
}

DnsType require_type(const std::string& text, const std::string& where) {
  auto t = DnsType::from_mnemonic(text);
  if (!t) throw InvariantError(where + ": unknown DNS type '" + text + "'");
  return *t;
}

Ipv4Addr require_ip(const std::string& text, const std::string& where) {
  auto ip = Ipv4Addr::parse(text);
  if (!ip) throw InvariantError(where + ": invalid IPv4 address '" + text + "'");
  return *ip;
}

Cidr require_cidr(const std::string& text, const std::string& where) {
  auto c = Cidr::parse(text);
  if (!c) throw InvariantError(where + ": invalid IPv4 CIDR '" + text + "'");
  return *c;
}

const json& require_array(const json& v, const std::string& where) {
  if (!v.is_array()) throw SchemaError(where + ": expected an array");
  return v;
}

DnsQueryRule parse_query_rule(const json& v, const std::string& where) {
  ObjectReader r(v, where, {"type", "query", "resolver"});
  return DnsQueryRule{require_type(r.string("type"), where + ".type"),
                      require_name(r.string("query"), where + ".query"),
                      require_ip(r.string("resolver"), where + ".resolver")};
}

DnsReplyRule parse_reply_rule(const json& v, const std::string& where) {
  ObjectReader r(v, where, {"type", "query", "answers"});
  DnsReplyRule rule{require_type(r.string("type"), where + ".type"),
                    require_name(r.string("query"), where + ".query"),
                    {}};
  const auto& answers = r.at("answers");
  if (answers.is_string()) {
    rule.answers.push_back(require_cidr(answers.get<std::string>(), where + ".answers"));
  } else if (answers.is_array() && !answers.empty()) {
    for (const auto& a : answers) {
      if (!a.is_string()) throw SchemaError(where + ".answers: expected strings");
      rule.answers.push_back(require_cidr(a.get<std::string>(), where + ".answers"));
    }
  } else {
    throw SchemaError(where + ".answers: expected a CIDR string or a non-empty array");
  }
  return rule;
}

ConnectionRule parse_connection_rule(const json& v, const std::string& where) {
  ObjectReader r(v, where,
                 {"family", "dest", "proto", "dstport", "freq", "max-bw-out",
                  "max-packet-size", "schedule"});
  if (r.string("family") != "IPv4")
    throw InvariantError(where + ".family: only IPv4 is supported");

  ConnectionRule rule;
  auto dest = r.string("dest");
  if (auto cidr = Cidr::parse(dest)) {
    rule.dest = *cidr;
  } else if (dest.find('/') != std::string::npos ||
             Ipv4Addr::parse(dest.substr(0, dest.find('/')))) {
    throw InvariantError(where + ".dest: invalid IPv4 CIDR '" + dest + "'");
  } else {
    rule.dest = require_name(dest, where + ".dest");
  }

  auto proto = parse_protocol(r.string("proto"));
  if (!proto) throw InvariantError(where + ".proto: expected TCP or UDP");
  rule.proto = *proto;
  rule.dstport = static_cast<std::uint16_t>(r.number("dstport", 65535));

  if (r.has("freq")) {
    auto text = r.string("freq");
    rule.freq = parse_rate(text);
    if (!rule.freq) throw InvariantError(where + ".freq: invalid rate '" + text + "'");
  }
  if (r.has("max-bw-out")) {
    auto text = r.string("max-bw-out");
    rule.max_bw_out = parse_bandwidth(text);
    if (!rule.max_bw_out)
      throw InvariantError(where + ".max-bw-out: invalid bandwidth '" + text + "'");
  }
  if (r.has("max-packet-size"))
    rule.max_packet_size =
        static_cast<std::uint32_t>(r.number("max-packet-size", 65535));
  if (r.has("schedule")) {
    auto text = r.string("schedule");
    rule.schedule = parse_schedule(text);
    if (!rule.schedule)
      throw InvariantError(where + ".schedule: invalid window '" + text + "'");
  }
  return rule;
}

}  // namespace

void check_invariants(const DevicePolicy& policy) {
  std::set<std::string> resolvable;
  for (const auto& q : policy.dns_queries) {
    if (canonical_dns_name(q.qname) != q.qname)
      throw InvariantError("invalid DNS name '" + q.qname + "'");
    resolvable.insert(q.qname);
  }
  for (const auto& r : policy.dns_replies) {
    if (canonical_dns_name(r.qname) != r.qname)
      throw InvariantError("invalid DNS name '" + r.qname + "'");
    if (r.answers.empty()) throw InvariantError("reply rule without answers");
  }
  for (const auto& c : policy.connections) {
    if (c.dstport == 0) throw InvariantError("port 0 in connection rule");
    if (c.proto == Protocol::Other) throw InvariantError("connection rule protocol");
    if (c.freq && c.freq->count == 0) throw InvariantError("zero rate");
    if (c.max_bw_out && c.max_bw_out->bytes == 0) throw InvariantError("zero bandwidth");
    if (c.max_packet_size && *c.max_packet_size == 0)
      throw InvariantError("zero packet size");
    if (auto* host = c.hostname()) {
      if (canonical_dns_name(*host) != *host)
        throw InvariantError("invalid DNS name '" + *host + "'");
      if (!resolvable.count(*host)) throw DanglingHostname(*host);
    }
  }
}

DevicePolicy parse_policy(std::string_view document) {
  json doc;
  try {
    doc = json::parse(document.begin(), document.end());
  } catch (const json::parse_error& e) {
    throw SyntaxError(e.what());
  }
  if (!doc.is_object() || doc.size() != 1)
    throw SchemaError("policy document must be an object with a single device key");

  DevicePolicy policy;
  auto top = doc.begin();
  policy.device_name = top.key();
  const std::string where = "'" + policy.device_name + "'";
  ObjectReader r(top.value(), where,
                 {"MACAddr", "IPAddr", kQueriesKey, kLookupsAlias, kRepliesKey,
                  kConnectionsKey});

  auto mac_text = r.string("MACAddr");
  auto mac = MacAddr::parse(mac_text);
  if (!mac) throw InvariantError(where + ".MACAddr: invalid EUI-48 '" + mac_text + "'");
  policy.mac = *mac;
  if (r.has("IPAddr")) policy.ip = require_ip(r.string("IPAddr"), where + ".IPAddr");

  if (r.has(kQueriesKey) && r.has(kLookupsAlias))
    throw SchemaError(where + ": both AllowedDNSQueries and AllowedLookups given");
  std::string_view qkey = r.has(kLookupsAlias) ? kLookupsAlias : kQueriesKey;
  if (r.has(qkey)) {
    const auto& list = require_array(r.at(qkey), where + "." + std::string(qkey));
    for (std::size_t i = 0; i < list.size(); ++i)
      policy.dns_queries.push_back(parse_query_rule(
          list[i], where + "." + std::string(qkey) + "[" + std::to_string(i) + "]"));
  }
  if (r.has(kRepliesKey)) {
    const auto& list = require_array(r.at(kRepliesKey), where + ".AllowedDNSReplies");
    for (std::size_t i = 0; i < list.size(); ++i)
      policy.dns_replies.push_back(parse_reply_rule(
          list[i], where + ".AllowedDNSReplies[" + std::to_string(i) + "]"));
  }
  if (r.has(kConnectionsKey)) {
    const auto& list =
        require_array(r.at(kConnectionsKey), where + ".AllowedConnections");
    for (std::size_t i = 0; i < list.size(); ++i)
      policy.connections.push_back(parse_connection_rule(
          list[i], where + ".AllowedConnections[" + std::to_string(i) + "]"));
  }

  check_invariants(policy);
  return policy;
}

// ---------------------------------------------------------------------------
// Serialisation

namespace {

std::string quoted(const std::string& s) { return json(s).dump(); }

using Fields = std::vector<std::pair<std::string_view, std::string>>;

/// {"k": "v", "k2": ["a", "b"]} with values already rendered as JSON.
std::string inline_object(const Fields& fields) {
  std::string out = "{";
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out += ", ";
    out += quoted(std::string(fields[i].first));
    out += ": ";
    out += fields[i].second;
  }
  return out + "}";
}

std::string rule_list(std::string_view key, const std::vector<std::string>& rows) {
  std::string out = "  " + quoted(std::string(key)) + ": [";
  if (rows.empty()) return out + "]";
  out += "\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out += "    " + rows[i];
    out += i + 1 < rows.size() ? ",\n" : "\n";
  }
  return out + "  ]";
}

}  // namespace

std::string serialize_policy(const DevicePolicy& policy) {
  std::vector<std::string> queries, replies, conns;
  for (const auto& q : policy.dns_queries)
    queries.push_back(inline_object({{"type", quoted(q.qtype.mnemonic())},
                                     {"query", quoted(q.qname)},
                                     {"resolver", quoted(q.resolver.to_string())}}));
  for (const auto& r : policy.dns_replies) {
    std::string answers;
    if (r.answers.size() == 1) {
      answers = quoted(r.answers.front().to_string());
    } else {
      answers = "[";
      for (std::size_t i = 0; i < r.answers.size(); ++i)
        answers += (i ? ", " : "") + quoted(r.answers[i].to_string());
      answers += "]";
    }
    replies.push_back(inline_object({{"type", quoted(r.qtype.mnemonic())},
                                     {"query", quoted(r.qname)},
                                     {"answers", answers}}));
  }
  for (const auto& c : policy.connections) {
    Fields f{{"family", quoted("IPv4")},
             {"dest", quoted(to_string(c.dest))},
             {"proto", quoted(std::string(to_string(c.proto)))},
             {"dstport", quoted(std::to_string(c.dstport))}};
    if (c.freq) f.emplace_back("freq", quoted(format_rate(*c.freq)));
    if (c.max_bw_out) f.emplace_back("max-bw-out", quoted(format_bandwidth(*c.max_bw_out)));
    if (c.max_packet_size)
      f.emplace_back("max-packet-size", quoted(std::to_string(*c.max_packet_size)));
    if (c.schedule) f.emplace_back("schedule", quoted(format_schedule(*c.schedule)));
    conns.push_back(inline_object(f));
  }

  std::string out = "{" + quoted(policy.device_name) + ": {\n";
  out += "  \"MACAddr\": " + quoted(policy.mac.to_string()) + ",\n";
  if (policy.ip) out += "  \"IPAddr\": " + quoted(policy.ip->to_string()) + ",\n";
  out += rule_list(kQueriesKey, queries) + ",\n";
  out += rule_list(kRepliesKey, replies) + ",\n";
  out += rule_list(kConnectionsKey, conns) + "\n";
  out += " }\n}\n";
  return out;
}

// ---------------------------------------------------------------------------
// Warnings

namespace {

std::string describe(const ConnectionRule& c) {
  return std::string(to_string(c.proto)) + ":" + std::to_string(c.dstport) + " to " +
         to_string(c.dest);
}

}  // namespace

std::vector<PolicyWarning> validate_policy(const DevicePolicy& policy) {
  using Code = PolicyWarning::Code;
  std::vector<PolicyWarning> out;
  for (std::uint32_t i = 0; i < policy.connections.size(); ++i) {
    const auto& c = policy.connections[i];
    RuleRef ref{RuleRef::Kind::Connection, i};
    if (!c.freq)
      out.push_back({Code::NoRateLimit, ref,
                     ref.to_string() + " (" + describe(c) +
                         ") has no connection rate limit"});
    if (!c.max_bw_out)
      out.push_back({Code::NoBandwidthBound, ref,
                     ref.to_string() + " (" + describe(c) +
                         ") has no byte/bandwidth bound; outbound volume is unlimited"});
  }
  for (std::uint32_t i = 0; i < policy.dns_queries.size(); ++i) {
    const auto& q = policy.dns_queries[i];
    bool constrained = std::any_of(
        policy.dns_replies.begin(), policy.dns_replies.end(),
        [&](const DnsReplyRule& r) { return r.qname == q.qname && r.qtype == q.qtype; });
    if (!constrained) {
      RuleRef ref{RuleRef::Kind::DnsQuery, i};
      out.push_back({Code::UnconstrainedAnswers, ref,
                     ref.to_string() + " (" + q.qtype.mnemonic() + " " + q.qname +
                         ") has no reply rule; any answer is accepted"});
    }
  }
  for (std::uint32_t i = 0; i < policy.dns_replies.size(); ++i) {
    const auto& r = policy.dns_replies[i];
    for (const auto& c : r.answers) {
      if (c.prefix == 0) {
        RuleRef ref{RuleRef::Kind::DnsReply, i};
        out.push_back({Code::WildcardAnswers, ref,
                       ref.to_string() + " (" + r.qname +
                           ") admits every address (0.0.0.0/0)"});
        break;
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Human-readable rendering

namespace {

std::string dest_phrase(const Destination& d) {
  if (auto* host = std::get_if<std::string>(&d)) return *host;
  const auto& c = std::get<Cidr>(d);
  if (c.prefix == 32) return c.network.to_string();
  return "the network " + c.to_string();
}

}  // namespace

std::string explain_policy(const DevicePolicy& policy) {
  if (policy.denies_everything()) return "This device may not communicate at all.\n";

  std::string out;
  for (const auto& q : policy.dns_queries)
    out += "This device may look up the " + q.qtype.mnemonic() + " record of " +
           q.qname + " using the resolver " + q.resolver.to_string() + ".\n";

  for (const auto& r : policy.dns_replies) {
    std::string ranges;
    for (std::size_t i = 0; i < r.answers.size(); ++i)
      ranges += (i ? " or " : "") + r.answers[i].to_string();
    out += "Answers to " + r.qtype.mnemonic() + " lookups of " + r.qname +
           " must lie within " + ranges + ".\n";
  }

  for (const auto& c : policy.connections) {
    auto dest = dest_phrase(c.dest);
    std::string line = c.proto == Protocol::Tcp
                           ? "This device may open TCP connections to "
                           : "This device may send UDP traffic to ";
    line += dest + " on port " + std::to_string(c.dstport);
    if (c.freq)
      line += ", at most " + std::to_string(c.freq->count) + " per " +
              std::string(unit_name(c.freq->per));
    if (c.max_packet_size)
      line += ", in packets of at most " + std::to_string(*c.max_packet_size) + " bytes";
    if (c.schedule) {
      auto s = format_schedule(*c.schedule);
      line += ", only between " + s.substr(0, 5) + " and " + s.substr(6) + " UTC";
    }
    out += line + ".\n";
    if (c.max_bw_out)
      out += "This device will not send more than " + human_bytes(c.max_bw_out->bytes) +
             " of data per " + std::string(unit_name(c.max_bw_out->per)) + " to " +
             dest + ".\n";
  }
  return out;
}

}  // namespace iotpolicy
