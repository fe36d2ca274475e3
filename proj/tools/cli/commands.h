// Subcommands of the tagtrace binary. Each returns a status; RunCli maps
// usage errors to exit 1 and runtime errors to exit 2.

#ifndef TAGTRACE_TOOLS_COMMANDS_H_
#define TAGTRACE_TOOLS_COMMANDS_H_

#include <atomic>
#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "absl/status/status.h"
#include "tagtrace/proxy_service.h"

namespace tagtrace::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

struct SimulateOptions {
  std::string config_path;  // empty: reference scenario
  std::optional<uint64_t> seed;
  std::optional<uint32_t> clients;
  std::optional<double> duration;
  std::optional<ProxyMode> mode;
  std::optional<std::string> zone;
  std::string out_dir;
};

struct AnalyzeOptions {
  std::string log_dir;
  std::string vulndb_path;  // empty: <log_dir>/vulndb.csv
  std::optional<std::string> zone;
  std::optional<std::string> static_label;
  double window_seconds = 900.0;
  std::string out_dir;
};

struct InjectOptions {
  std::string in_path;
  std::string out_path;
  std::string tag_log_path;
  std::optional<uint64_t> seed;
  std::optional<std::string> zone;
  std::optional<std::string> static_label;
};

struct ClassifyOptions {
  std::string vulndb_path;  // empty: built-in reference database
  std::string in_path;      // one User-Agent per line
  std::vector<std::string> agents;
};

struct ReportOptions {
  std::string analysis_dir;
  std::string out_path;  // empty: stdout
};

struct ProxyOptions {
  std::string listen = "127.0.0.1:8080";
  std::string control = "127.0.0.1:8081";
  ProxyMode mode = ProxyMode::kPassive;
  std::string zone = "beacon.test";
  std::string static_label = "static";
  std::optional<uint64_t> seed;
  std::string payload_address;
  std::string out_dir;
};

struct DnsOptions {
  std::string listen = "127.0.0.1:5353";
  std::string zone = "beacon.test";
  std::string payload_address = "192.0.2.80";
  uint32_t ttl = 0;
  std::string out_dir;
};

// Invoked once services are bound, with the actual ports.
using ReadyCallback = std::function<void(uint16_t primary, uint16_t control)>;

absl::Status Simulate(const SimulateOptions& opts, std::ostream& out);
absl::Status Analyze(const AnalyzeOptions& opts, std::ostream& out);
absl::Status Inject(const InjectOptions& opts, std::ostream& out);
absl::Status ClassifyUa(const ClassifyOptions& opts, std::ostream& out);
absl::Status Report(const ReportOptions& opts, std::ostream& out);
// Services run until `stop` becomes true, then flush logs and return.
absl::Status RunProxy(const ProxyOptions& opts, const std::atomic<bool>& stop,
                      std::ostream& out, ReadyCallback ready = nullptr);
absl::Status RunDns(const DnsOptions& opts, const std::atomic<bool>& stop,
                    std::ostream& out, ReadyCallback ready = nullptr);

// Parses argv and dispatches. `stop` is polled by the service subcommands.
int RunCli(int argc, const char* const* argv, std::ostream& out,
           std::ostream& err, const std::atomic<bool>& stop);

}  // namespace tagtrace::cli

#endif  // TAGTRACE_TOOLS_COMMANDS_H_
