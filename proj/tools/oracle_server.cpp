// Serves a synthetic domain over the oracle wire protocol, on stdio or a
// loopback TCP port. Stand-in for an external service in tests and demos.
#include <atomic>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "egmcts/oracle_server.hpp"
#include "egmcts/synthetic_domain.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Synthetic expansion oracle server"};
  std::string domain_path;
  int port = -1;
  bool use_stdio = false;
  app.add_option("--domain", domain_path, "Synthetic domain JSON")->required();
  app.add_option("--port", port, "Listen on 127.0.0.1:<port>");
  app.add_flag("--stdio", use_stdio, "Serve stdin/stdout");
  CLI11_PARSE(app, argc, argv);
  try {
    egmcts::SyntheticOracle oracle(egmcts::SyntheticDomain::load(domain_path));
    egmcts::OracleServer server(oracle, oracle.domain().stock_set());
    if (port >= 0 && !use_stdio) {
      auto [fd, bound] = egmcts::listen_loopback(static_cast<std::uint16_t>(port));
      std::cerr << "listening on 127.0.0.1:" << bound << std::endl;
      std::atomic<bool> stop{false};
      server.serve_socket(fd, stop);
      return 0;
    }
    std::ios::sync_with_stdio(false);
    server.serve(std::cin, std::cout);
  } catch (const std::exception& e) {
    std::cerr << "oracle server: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
