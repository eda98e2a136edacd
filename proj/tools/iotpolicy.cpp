// iotpolicy: learn, compile, simulate, summarize and explain device policies.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <unistd.h>

#include "iotpolicy/compile.hpp"
#include "iotpolicy/flows.hpp"
#include "iotpolicy/monitor.hpp"
#include "iotpolicy/pcap.hpp"
#include "iotpolicy/policy.hpp"
#include "iotpolicy/profiles.hpp"
#include "iotpolicy/synth.hpp"

namespace fs = std::filesystem;
using namespace iotpolicy;

namespace {

enum Exit : int {
  kOk = 0,
  kViolations = 1,
  kBadInput = 2,
  kCompileError = 3,
  kUsage = 64,
};

/// Input the user must fix; exits with kBadInput.
struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Writes via a sibling temporary and rename, so readers never see a partial
/// file. "-" writes to stdout.
void write_atomic(const std::string& path, const std::string& data) {
  if (path == "-") {
    std::cout << data << std::flush;
    return;
  }
  fs::path target(path);
  fs::path tmp = target;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << data;
    out.flush();
    if (!out) {
      out.close();
      fs::remove(tmp);
      throw std::runtime_error("cannot write " + tmp.string());
    }
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) {
    fs::remove(tmp);
    throw std::runtime_error("cannot replace " + path + ": " + ec.message());
  }
}

template <typename T>
T parse_or_throw(std::optional<T> v, const std::string& what, const std::string& text) {
  if (!v) throw InputError("invalid " + what + ": " + text);
  return *v;
}

DevicePolicy load_policy(const std::string& path) {
  return parse_policy(read_file(path));
}

// ---------------------------------------------------------------------------

struct LearnArgs {
  std::string pcap, mac, ip, aggregate = "exact", name, out;
  double slack = 1.0;
};

int cmd_learn(const LearnArgs& a) {
  auto mac = parse_or_throw(MacAddr::parse(a.mac), "MAC address", a.mac);
  DeviceIdentity device{mac, std::nullopt};
  if (!a.ip.empty()) device.ip = parse_or_throw(Ipv4Addr::parse(a.ip), "IPv4 address", a.ip);

  SynthOptions opts;
  if (a.aggregate != "exact") {
    int n = -1;
    try {
      n = std::stoi(a.aggregate);
    } catch (const std::exception&) {
    }
    if (n < 0 || n > 32 || std::to_string(n) != a.aggregate)
      throw InputError("--aggregate-prefix takes 0-32 or 'exact'");
    opts.aggregate_prefix = static_cast<std::uint8_t>(n);
  }
  if (!(a.slack >= 1.0)) throw InputError("--rate-slack must be at least 1.0");
  opts.rate_slack = a.slack;
  opts.device_name = a.name;

  auto capture = read_capture(a.pcap, mac);
  if (!device.ip) device.ip = infer_device_ip(capture.packets, mac);
  if (capture.stats.duration_seconds() > 0) opts.capture_seconds = capture.stats.duration_seconds();

  auto flows = track_flows(capture.packets);
  auto dns = extract_dns(capture.packets);
  auto policy = synthesize_policy(flows, dns.transactions, device, opts);
  for (const auto& w : validate_policy(policy)) std::cerr << "warning: " << w.message << '\n';
  write_atomic(a.out, serialize_policy(policy));
  std::cerr << "learned " << policy.connections.size() << " connection, "
            << policy.dns_queries.size() << " query and " << policy.dns_replies.size()
            << " reply rules from " << capture.stats.records << " packets\n";
  return kOk;
}

struct CompileArgs {
  std::string policy, format = "netfilter", upstream, chain = "nat-prerouting",
                      interface = "wlan0", out = "-";
};

int cmd_compile(const CompileArgs& a) {
  auto policy = load_policy(a.policy);
  CompileOptions opts;
  opts.interface = a.interface;
  std::vector<RuleIR> ir;
  try {
    ir = compile_policy(policy, opts);
  } catch (const JoinError& e) {
    std::cerr << "error: cannot bound destinations of hostname '" << e.hostname()
              << "': no AllowedDNSReplies entry for it\n";
    return kCompileError;
  }

  if (a.format == "netfilter") {
    Chain chain = a.chain == "filter-forward" ? Chain::FilterForward : Chain::NatPrerouting;
    write_atomic(a.out, emit_netfilter(ir, chain));
    return kOk;
  }
  std::string upstream = a.upstream;
  if (upstream.empty()) {
    const char* env = std::getenv("IOTPOLICY_UPSTREAM");
    upstream = env && *env ? env : "8.8.8.8";
  }
  auto up = parse_or_throw(Ipv4Addr::parse(upstream), "upstream resolver", upstream);
  write_atomic(a.out, emit_dns_forwarder(ir, up));
  return kOk;
}

struct SimulateArgs {
  std::string policy, pcap, log, stats;
};

int cmd_simulate(const SimulateArgs& a) {
  auto policy = load_policy(a.policy);
  auto capture = read_capture(a.pcap, policy.mac);
  auto result = replay(policy, capture.packets);

  std::string log;
  for (const auto& v : result.verdicts) log += verdict_json(v) + '\n';
  write_atomic(a.log, log);
  if (!a.stats.empty()) write_atomic(a.stats, stats_json(result.stats) + '\n');

  std::cerr << result.stats.allowed_total << " allowed, " << result.stats.denied_total
            << " denied\n";
  return result.stats.denied_total == 0 ? kOk : kViolations;
}

struct SummarizeArgs {
  std::string pcap, mac, ip, dhcp;
  bool json = false;
};

int cmd_summarize(const SummarizeArgs& a) {
  std::optional<MacAddr> mac;
  if (!a.mac.empty()) mac = parse_or_throw(MacAddr::parse(a.mac), "MAC address", a.mac);
  std::optional<Ipv4Addr> dhcp;
  if (!a.dhcp.empty()) dhcp = parse_or_throw(Ipv4Addr::parse(a.dhcp), "IPv4 address", a.dhcp);

  auto capture = read_capture(a.pcap, mac);
  auto flows = track_flows(capture.packets);
  auto dns = extract_dns(capture.packets).transactions;

  std::optional<Ipv4Addr> ip;
  if (!a.ip.empty())
    ip = parse_or_throw(Ipv4Addr::parse(a.ip), "IPv4 address", a.ip);
  else if (mac)
    ip = infer_device_ip(capture.packets, *mac);
  if (ip) {
    std::erase_if(flows, [&](const FlowRecord& f) { return f.key.src_ip != *ip; });
    std::erase_if(dns, [&](const DnsTransaction& t) { return t.client != *ip; });
  } else if (mac) {
    flows.clear();
    dns.clear();
  }

  auto s = summarize_capture(flows, dns, dhcp);
  if (a.json) {
    std::cout << summary_json(s) << '\n';
    return kOk;
  }
  std::cout << std::left << std::setw(20) << "endpoints" << s.distinct_endpoints << '\n'
            << std::setw(20) << "domains" << s.distinct_domains << '\n'
            << std::setw(20) << "hardcoded IPs" << s.hardcoded_ips << '\n'
            << std::setw(20) << "rogue resolver" << (s.rogue_resolver ? "yes" : "no") << '\n';
  return kOk;
}

int cmd_explain(const std::string& path) {
  std::cout << explain_policy(load_policy(path));
  return kOk;
}

struct GenTraceArgs {
  std::string profile, out;
  std::uint64_t seed = 1;
  bool mirai = false;
};

int cmd_gen_trace(const GenTraceArgs& a) {
  Trace t;
  try {
    t = profile_trace(a.profile, a.seed);
  } catch (const std::invalid_argument& e) {
    throw InputError(e.what());
  }
  std::ostringstream out;
  if (a.mirai)
    write_packets(out, inject_mirai(t, a.seed).packets, t);
  else
    write_trace(out, t);
  write_atomic(a.out, out.str());
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Learn, compile and enforce network policies for IoT devices"};
  app.require_subcommand(1);

  LearnArgs learn;
  auto* l = app.add_subcommand("learn", "Synthesize a policy from a packet capture");
  l->add_option("--pcap", learn.pcap, "Input capture")->required();
  l->add_option("--device-mac", learn.mac, "Device hardware address")->required();
  l->add_option("--device-ip", learn.ip, "Device address (default: inferred)");
  l->add_option("--aggregate-prefix", learn.aggregate, "Answer prefix length, or 'exact'");
  l->add_option("--rate-slack", learn.slack, "Multiplier on inferred rates (>= 1)");
  l->add_option("--name", learn.name, "Device name in the policy");
  l->add_option("--out", learn.out, "Policy file to write")->required();

  CompileArgs comp;
  auto* c = app.add_subcommand("compile", "Emit firewall or DNS forwarder configuration");
  c->add_option("policy", comp.policy, "Policy file")->required();
  c->add_option("--format", comp.format)->check(CLI::IsMember({"netfilter", "dnsforward"}));
  c->add_option("--upstream", comp.upstream, "Upstream resolver for dnsforward");
  c->add_option("--chain", comp.chain)->check(CLI::IsMember({"nat-prerouting", "filter-forward"}));
  c->add_option("--interface", comp.interface, "Device-facing interface");
  c->add_option("--out", comp.out, "Output file ('-' for stdout)");

  SimulateArgs sim;
  auto* s = app.add_subcommand("simulate", "Replay a capture through the monitor");
  s->add_option("--policy", sim.policy)->required();
  s->add_option("--pcap", sim.pcap)->required();
  s->add_option("--log", sim.log, "Verdict log (NDJSON)")->required();
  s->add_option("--stats", sim.stats, "Match statistics (JSON)");

  SummarizeArgs sum;
  auto* m = app.add_subcommand("summarize", "Network footprint of a capture");
  m->add_option("--pcap", sum.pcap)->required();
  m->add_option("--device-mac", sum.mac);
  m->add_option("--device-ip", sum.ip);
  m->add_option("--dhcp-resolver", sum.dhcp);
  m->add_flag("--json", sum.json);

  std::string explain_path;
  auto* e = app.add_subcommand("explain", "Describe a policy in English");
  e->add_option("policy", explain_path)->required();

  GenTraceArgs gen;
  auto* g = app.add_subcommand("gen-trace", "Write a synthetic device capture");
  g->add_option("--profile", gen.profile)->required()->check(
      CLI::IsMember({"weather-station", "scale", "bulb"}));
  g->add_option("--seed", gen.seed);
  g->add_flag("--mirai", gen.mirai, "Add scan and DNS flood traffic");
  g->add_option("--out", gen.out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    int code = app.exit(err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*l) return cmd_learn(learn);
    if (*c) return cmd_compile(comp);
    if (*s) return cmd_simulate(sim);
    if (*m) return cmd_summarize(sum);
    if (*e) return cmd_explain(explain_path);
    if (*g) return cmd_gen_trace(gen);
  } catch (const EmptyCapture& err) {
    std::cerr << "error: " << err.what() << '\n';
    return kBadInput;
  } catch (const PolicyError& err) {
    std::cerr << "error: invalid policy: " << err.what() << '\n';
    return kBadInput;
  } catch (const FormatError& err) {
    std::cerr << "error: " << err.what() << '\n';
    return kBadInput;
  } catch (const IoError& err) {
    std::cerr << "error: " << err.what() << '\n';
    return kBadInput;
  } catch (const InputError& err) {
    std::cerr << "error: " << err.what() << '\n';
    return kBadInput;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << '\n';
    return kBadInput;
  }
  return kUsage;
}
