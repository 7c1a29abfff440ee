// srw-sim: scripted-session driver and load harness.
//
//   srw-sim run <scenario-file> --server <url> [--report <path>]
//   srw-sim load --server <url> --sessions N --turns K [--hold-ms H] [--report <path>]
//
// Exit codes: 0 all expectations pass, 1 expectation or ordering failure,
// 2 usage error, 3 server unreachable.

#include <fstream>
#include <iostream>

#include <boost/program_options.hpp>

#include "srw/sim/load.hpp"
#include "srw/sim/scenario.hpp"

namespace po = boost::program_options;

namespace {

constexpr int kPass = 0;
constexpr int kFail = 1;
constexpr int kUsage = 2;
constexpr int kUnreachable = 3;

int usage(const std::string& message, const po::options_description& opts) {
  std::cerr << "srw-sim: " << message << "\n"
            << "usage: srw-sim run <scenario-file> --server <url> [--report <path>]\n"
            << "       srw-sim load --server <url> --sessions N --turns K [--hold-ms H] [--report <path>]\n"
            << opts;
  return kUsage;
}

bool write_report(const std::string& path, const srw::Json& report) {
  std::ofstream out(path);
  out << report.dump(2) << "\n";
  return static_cast<bool>(out);
}

}  // namespace

int main(int argc, char** argv) {
  po::options_description opts("options");
  opts.add_options()
      ("help,h", "show this help")
      ("server", po::value<std::string>(), "server base URL, e.g. http://127.0.0.1:8080")
      ("report", po::value<std::string>(), "write the machine-readable JSON report here")
      ("sessions", po::value<int>()->default_value(1), "load: concurrent sessions")
      ("turns", po::value<int>()->default_value(1), "load: text turns per session")
      ("hold-ms", po::value<long>()->default_value(0), "load: keep channels open after the last turn")
      ("heartbeat-ms", po::value<double>()->default_value(5000), "load: expected heartbeat period");
  po::options_description hidden;
  hidden.add_options()("command", po::value<std::string>())("scenario", po::value<std::string>());
  po::options_description all;
  all.add(opts).add(hidden);
  po::positional_options_description positional;
  positional.add("command", 1).add("scenario", 1);

  po::variables_map vm;
  try {
    po::store(po::command_line_parser(argc, argv).options(all).positional(positional).run(), vm);
    po::notify(vm);
  } catch (const po::error& e) {
    return usage(e.what(), opts);
  }
  if (vm.count("help")) {
    std::cout << opts;
    return kPass;
  }
  if (!vm.count("command")) return usage("missing command", opts);
  if (!vm.count("server")) return usage("--server is required", opts);
  auto server = srw::parse_url(vm["server"].as<std::string>());
  if (!server) return usage("--server: " + server.error().message, opts);
  const std::string command = vm["command"].as<std::string>();
  const std::string report_path = vm.count("report") ? vm["report"].as<std::string>() : "";

  if (command == "run") {
    if (!vm.count("scenario")) return usage("run needs a scenario file", opts);
    auto scenario = srw::sim::load_scenario(vm["scenario"].as<std::string>());
    if (!scenario) {
      std::cerr << "srw-sim: " << scenario.error().message << "\n";
      return kUsage;
    }
    auto report = srw::sim::run_scenario(*server, *scenario);
    if (!report) {
      std::cerr << "srw-sim: " << report.error().code << ": " << report.error().message << "\n";
      return kUnreachable;
    }
    std::cout << report->summary();
    if (!report_path.empty() && !write_report(report_path, report->to_json())) {
      std::cerr << "srw-sim: cannot write " << report_path << "\n";
    }
    return report->passed() ? kPass : kFail;
  }

  if (command == "load") {
    if (vm.count("scenario")) return usage("load takes no positional argument", opts);
    srw::sim::LoadOptions options;
    options.sessions = vm["sessions"].as<int>();
    options.turns = vm["turns"].as<int>();
    options.hold = std::chrono::milliseconds{vm["hold-ms"].as<long>()};
    options.heartbeat_ms = vm["heartbeat-ms"].as<double>();
    if (options.sessions < 1 || options.turns < 1) return usage("--sessions and --turns must be >= 1", opts);
    auto report = srw::sim::run_load(*server, options);
    if (!report) {
      std::cerr << "srw-sim: " << report.error().code << ": " << report.error().message << "\n";
      return report.error().code == "connect_failed" ? kUnreachable : kFail;
    }
    std::cout << report->summary();
    if (!report_path.empty() && !write_report(report_path, report->to_json())) {
      std::cerr << "srw-sim: cannot write " << report_path << "\n";
    }
    return report->ok() ? kPass : kFail;
  }

  return usage("unknown command " + command, opts);
}
