// srw-server: session gateway with REST + WebSocket endpoints.
//
// Environment variables are read first; command-line options override them.
// Exit codes: 0 clean shutdown, 1 startup error, 2 configuration error.

#include <csignal>
#include <cstdlib>
#include <iostream>

#include <boost/program_options.hpp>

#include "srw/gateway.hpp"
#include "srw/url.hpp"

namespace po = boost::program_options;

int main(int argc, char** argv) {
  po::options_description opts("srw-server options");
  opts.add_options()
      ("help,h", "show this help")
      ("bind", po::value<std::string>(), "listen address host:port (SRW_BIND_ADDR)")
      ("data-dir", po::value<std::string>(), "persistence directory (SRW_DATA_DIR)")
      ("provider-mode", po::value<std::string>(), "mock or live (SRW_PROVIDER_MODE)")
      ("llm-base-url", po::value<std::string>(), "Ollama-compatible endpoint (SRW_LLM_BASE_URL)")
      ("heartbeat-ms", po::value<long>(), "heartbeat period, >= 1000 (SRW_HEARTBEAT_MS)")
      ("llm-temperature", po::value<double>(), "sampling temperature in [0, 2] (SRW_LLM_TEMPERATURE)")
      ("history-turns", po::value<long>(), "prompt history window, >= 1 (SRW_HISTORY_TURNS)");

  po::variables_map vm;
  try {
    po::store(po::parse_command_line(argc, argv, opts), vm);
    po::notify(vm);
  } catch (const po::error& e) {
    std::cerr << "srw-server: " << e.what() << "\n" << opts;
    return 2;
  }
  if (vm.count("help")) {
    std::cout << opts;
    return 0;
  }

  auto config = srw::gateway_config_from_env({}, [](const char* name) { return std::getenv(name); });
  if (!config) {
    std::cerr << "srw-server: " << config.error().message << "\n";
    return 2;
  }
  if (vm.count("bind")) {
    auto hp = srw::parse_host_port(vm["bind"].as<std::string>());
    if (!hp) {
      std::cerr << "srw-server: --bind: " << hp.error().message << "\n";
      return 2;
    }
    config->bind_host = hp->first;
    config->bind_port = hp->second;
  }
  if (vm.count("data-dir")) config->data_dir = vm["data-dir"].as<std::string>();
  if (vm.count("provider-mode")) {
    auto mode = srw::parse_enum<srw::ProviderMode>(vm["provider-mode"].as<std::string>());
    if (!mode) {
      std::cerr << "srw-server: --provider-mode must be mock or live\n";
      return 2;
    }
    config->provider_mode = *mode;
  }
  if (vm.count("llm-base-url")) config->llm_base_url = vm["llm-base-url"].as<std::string>();
  if (vm.count("heartbeat-ms")) config->heartbeat = std::chrono::milliseconds{vm["heartbeat-ms"].as<long>()};
  if (vm.count("llm-temperature")) config->llm_temperature = vm["llm-temperature"].as<double>();
  if (vm.count("history-turns")) {
    const long n = vm["history-turns"].as<long>();
    config->history_turns = n < 0 ? 0 : static_cast<std::size_t>(n);
  }
  if (auto ok = srw::validate_gateway_config(*config); !ok) {
    std::cerr << "srw-server: " << ok.error().message << "\n";
    return 2;
  }

  // Block the shutdown signals before any thread starts so only sigwait
  // below sees them.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  auto gateway = srw::Gateway::start(*config, srw::make_providers(*config));
  if (!gateway) {
    std::cerr << "srw-server: " << gateway.error().code << ": " << gateway.error().message << "\n";
    return 1;
  }
  std::cout << "srw-server listening on " << (*gateway)->base_url() << " (providers: "
            << srw::to_string(config->provider_mode) << ", data: " << config->data_dir.string() << ")" << std::endl;

  int received = 0;
  sigwait(&signals, &received);
  std::cout << "srw-server: signal " << received << ", shutting down" << std::endl;
  (*gateway)->shutdown("shutdown");
  return 0;
}
