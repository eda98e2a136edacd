#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <fstream>
#include <sstream>

#include "iotpolicy/compile.hpp"
#include "iotpolicy/monitor.hpp"
#include "iotpolicy/pcap.hpp"
#include "iotpolicy/profiles.hpp"
#include "iotpolicy/synth.hpp"

namespace py = pybind11;
using namespace iotpolicy;

namespace {

template <typename T>
T parse_or_raise(std::optional<T> v, const char* what, const std::string& text) {
  if (!v) throw py::value_error(std::string("invalid ") + what + ": '" + text + "'");
  return *v;
}

Chain parse_chain(const std::string& name) {
  if (name == "nat-prerouting") return Chain::NatPrerouting;
  if (name == "filter-forward") return Chain::FilterForward;
  throw py::value_error("chain must be 'nat-prerouting' or 'filter-forward'");
}

DevicePolicy learn(const std::string& pcap, const std::string& device_mac,
                   std::optional<std::string> device_ip, std::optional<int> aggregate_prefix,
                   double rate_slack, const std::string& name) {
  auto mac = parse_or_raise(MacAddr::parse(device_mac), "MAC address", device_mac);
  DeviceIdentity device{mac, std::nullopt};
  if (device_ip) device.ip = parse_or_raise(Ipv4Addr::parse(*device_ip), "IPv4 address", *device_ip);
  SynthOptions opts;
  if (aggregate_prefix) {
    if (*aggregate_prefix < 0 || *aggregate_prefix > 32)
      throw py::value_error("aggregate_prefix must be within 0-32");
    opts.aggregate_prefix = static_cast<std::uint8_t>(*aggregate_prefix);
  }
  if (!(rate_slack >= 1.0)) throw py::value_error("rate_slack must be at least 1.0");
  opts.rate_slack = rate_slack;
  opts.device_name = name;

  auto capture = read_capture(pcap, mac);
  if (!device.ip) device.ip = infer_device_ip(capture.packets, mac);
  if (capture.stats.duration_seconds() > 0) opts.capture_seconds = capture.stats.duration_seconds();
  return synthesize_policy(track_flows(capture.packets), extract_dns(capture.packets).transactions,
                           device, opts);
}

py::dict replay_capture(const DevicePolicy& policy, const std::string& pcap) {
  auto capture = read_capture(pcap, policy.mac);
  auto result = replay(policy, capture.packets);
  py::list verdicts;
  for (const auto& v : result.verdicts) {
    py::dict d;
    d["index"] = v.packet_index;
    d["ts"] = v.ts_us;
    d["decision"] = std::string(to_string(v.decision));
    d["reason"] = std::string(to_string(v.reason));
    d["rule_id"] = v.rule ? py::object(py::str(v.rule->to_string())) : py::object(py::none());
    verdicts.append(d);
  }
  auto json = py::module_::import("json");
  py::dict out;
  out["verdicts"] = verdicts;
  out["stats"] = json.attr("loads")(stats_json(result.stats));
  return out;
}

py::dict summarize(const std::string& pcap, std::optional<std::string> device_mac,
                   std::optional<std::string> device_ip, std::optional<std::string> dhcp_resolver) {
  std::optional<MacAddr> mac;
  if (device_mac) mac = parse_or_raise(MacAddr::parse(*device_mac), "MAC address", *device_mac);
  std::optional<Ipv4Addr> dhcp;
  if (dhcp_resolver) dhcp = parse_or_raise(Ipv4Addr::parse(*dhcp_resolver), "IPv4 address", *dhcp_resolver);

  auto capture = read_capture(pcap, mac);
  auto flows = track_flows(capture.packets);
  auto dns = extract_dns(capture.packets).transactions;
  std::optional<Ipv4Addr> ip;
  if (device_ip)
    ip = parse_or_raise(Ipv4Addr::parse(*device_ip), "IPv4 address", *device_ip);
  else if (mac)
    ip = infer_device_ip(capture.packets, *mac);
  if (ip) {
    std::erase_if(flows, [&](const FlowRecord& f) { return f.key.src_ip != *ip; });
    std::erase_if(dns, [&](const DnsTransaction& t) { return t.client != *ip; });
  }
  auto s = summarize_capture(flows, dns, dhcp);
  py::dict out;
  out["distinct_endpoints"] = s.distinct_endpoints;
  out["distinct_domains"] = s.distinct_domains;
  out["hardcoded_ips"] = s.hardcoded_ips;
  out["rogue_resolver"] = s.rogue_resolver;
  py::list endpoints;
  for (const auto& e : s.endpoints)
    endpoints.append(py::make_tuple(e.ip.to_string(), std::string(to_string(e.proto)), e.port));
  out["endpoints"] = endpoints;
  out["domains"] = s.domains;
  py::list hardcoded;
  for (auto a : s.hardcoded) hardcoded.append(a.to_string());
  out["hardcoded"] = hardcoded;
  return out;
}

void generate_trace(const std::string& profile, const std::string& path, std::uint64_t seed, bool mirai) {
  Trace t;
  try {
    t = profile_trace(profile, seed);
  } catch (const std::invalid_argument& e) {
    throw py::value_error(e.what());
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  if (mirai)
    write_packets(out, inject_mirai(t, seed).packets, t);
  else
    write_trace(out, t);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Device network policies: learn, compile, replay and summarize.";

  auto policy_error = py::register_exception<PolicyError>(m, "PolicyError", PyExc_ValueError);
  py::register_exception<JoinError>(m, "JoinError", policy_error.ptr());
  py::register_exception<EmptyCapture>(m, "EmptyCapture", PyExc_ValueError);
  py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);

  py::class_<DevicePolicy>(m, "Policy")
      .def_static("parse", [](const std::string& text) { return parse_policy(text); }, py::arg("text"))
      .def_static(
          "load",
          [](const std::string& path) {
            std::ifstream in(path, std::ios::binary);
            if (!in) throw IoError("cannot read " + path);
            std::ostringstream buf;
            buf << in.rdbuf();
            return parse_policy(buf.str());
          },
          py::arg("path"))
      .def("serialize", &serialize_policy)
      .def("explain", &explain_policy)
      .def("warnings",
           [](const DevicePolicy& p) {
             std::vector<std::string> out;
             for (const auto& w : validate_policy(p)) out.push_back(w.message);
             return out;
           })
      .def("netfilter",
           [](const DevicePolicy& p, const std::string& chain, const std::string& interface) {
             CompileOptions opts;
             opts.interface = interface;
             return emit_netfilter(compile_policy(p, opts), parse_chain(chain));
           },
           py::arg("chain") = "nat-prerouting", py::arg("interface") = "wlan0")
      .def("dns_forwarder",
           [](const DevicePolicy& p, const std::string& upstream) {
             auto up = parse_or_raise(Ipv4Addr::parse(upstream), "upstream resolver", upstream);
             return emit_dns_forwarder(compile_policy(p), up);
           },
           py::arg("upstream") = "8.8.8.8")
      .def("replay", &replay_capture, py::arg("pcap"))
      .def_property_readonly("device_name", [](const DevicePolicy& p) { return p.device_name; })
      .def_property_readonly("mac", [](const DevicePolicy& p) { return p.mac.to_string(); })
      .def_property_readonly("ip",
                             [](const DevicePolicy& p) -> std::optional<std::string> {
                               if (!p.ip) return std::nullopt;
                               return p.ip->to_string();
                             })
      .def("__eq__", [](const DevicePolicy& a, const DevicePolicy& b) { return a == b; })
      .def("__repr__", [](const DevicePolicy& p) { return "<Policy '" + p.device_name + "'>"; });

  m.def("learn", &learn, py::arg("pcap"), py::arg("device_mac"), py::arg("device_ip") = py::none(),
        py::arg("aggregate_prefix") = py::none(), py::arg("rate_slack") = 1.0, py::arg("name") = "",
        "Synthesize the smallest policy admitting a device's captured traffic.");
  m.def("summarize", &summarize, py::arg("pcap"), py::arg("device_mac") = py::none(),
        py::arg("device_ip") = py::none(), py::arg("dhcp_resolver") = py::none(),
        "Network footprint of a capture.");
  m.def("generate_trace", &generate_trace, py::arg("profile"), py::arg("path"), py::arg("seed") = 1,
        py::arg("mirai") = false, "Write a synthetic device capture.");
  m.def("profiles", [] {
    std::vector<std::string> out;
    for (auto n : profile_names()) out.emplace_back(n);
    return out;
  });
}
