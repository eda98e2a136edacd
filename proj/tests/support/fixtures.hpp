#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

namespace testsupport {

/// The Netatmo weather station policy, byte for byte.
inline const std::string kNetatmoPolicy =
    R"({"Netatmo Weather Station": {
  "MACAddr": "70:ee:50:13:ab:cd",
  "IPAddr": "172.16.1.2",
  "AllowedDNSQueries": [
    {"type": "A", "query": "netcom.netatmo.net", "resolver": "192.168.1.1"}
  ],
  "AllowedDNSReplies": [
    {"type": "A", "query": "netcom.netatmo.net", "answers": "62.210.92.0/24"}
  ],
  "AllowedConnections": [
    {"family": "IPv4", "dest": "netcom.netatmo.net", "proto": "TCP", "dstport": "25050", "freq": "6/hr"}
  ]
 }
}
)";

/// Expected firewall lines for that policy, line continuations removed.
inline const std::string kNetatmoIptables[] = {
    "iptables -t nat -A PREROUTING -i wlan0 -s 172.16.1.2 -d 62.210.92.0/24 -p tcp "
    "--dport 25050 -m limit --limit 6/hour -j ACCEPT",
    "iptables -t nat -A PREROUTING -i wlan0 -s 172.16.1.2 -d 192.168.1.1 -p udp "
    "--dport 53 -j ACCEPT",
};

inline const std::string kNetatmoDnsmasq =
    "no-resolv\n"
    "server=/netcom.netatmo.net/8.8.8.8\n"
    "address=/#/127.0.0.1\n";

inline std::vector<std::uint8_t> from_hex(const std::string& hex) {
  std::vector<std::uint8_t> out;
  for (std::size_t i = 0; i + 1 < hex.size(); i += 2)
    out.push_back(static_cast<std::uint8_t>(std::stoi(hex.substr(i, 2), nullptr, 16)));
  return out;
}

/// A fresh path in the system temp directory, removed on destruction.
class TempFile {
 public:
  explicit TempFile(const std::string& suffix = "") {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("iotpolicy-test-" + std::to_string(rd()) + std::to_string(rd()) + suffix);
  }
  ~TempFile() {
    std::error_code ec;
    std::filesystem::remove(path_, ec);
  }
  TempFile(const TempFile&) = delete;
  TempFile& operator=(const TempFile&) = delete;

  std::string path() const { return path_.string(); }
  void write(const std::vector<std::uint8_t>& bytes) const {
    std::ofstream out(path_, std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  }
  void write(const std::string& text) const {
    std::ofstream out(path_, std::ios::binary);
    out << text;
  }

 private:
  std::filesystem::path path_;
};

}  // namespace testsupport
