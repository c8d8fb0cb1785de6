#pragma once

#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>

#include <json.hpp>

#include "egmcts/errors.hpp"
#include "egmcts/fingerprint.hpp"
#include "egmcts/problem.hpp"

namespace egmcts {

/// Answers protocol requests from any in-process oracle. A bad request
/// gets an {"ok":false} reply; nothing a client sends stops the loop.
class OracleServer {
 public:
  OracleServer(const ExpansionOracle& oracle, StockSet stock)
      : oracle_(oracle), stock_(std::move(stock)) {}

  std::string handle(const std::string& line) const {
    nlohmann::json reply;
    try {
      auto req = nlohmann::json::parse(line);
      if (!req.is_object()) return fail("request is not an object");
      auto op = req.find("op");
      auto id = req.find("id");
      if (op == req.end() || !op->is_string()) return fail("missing op");
      if (id == req.end() || !id->is_string() || id->get<std::string>().empty()) {
        return fail("missing id");
      }
      const std::string name = id->get<std::string>();
      const std::string what = op->get<std::string>();
      if (what == "expand") {
        OracleConfig cfg;
        if (auto k = req.find("k"); k != req.end()) {
          if (!k->is_number_integer()) return fail("k must be an integer");
          cfg.k = k->get<int>();
          if (cfg.k < 1) return fail("k must be >= 1");
        }
        auto actions = oracle_.expand(oracle_.make_item(name), cfg);
        nlohmann::json ts = nlohmann::json::array();
        for (const auto& a : actions) {
          nlohmann::json rs = nlohmann::json::array();
          for (const auto& r : a.reactants) {
            rs.push_back({{"id", r.id()}, {"fp_b64", fingerprint_to_base64(r.fingerprint())}});
          }
          ts.push_back({{"template_id", a.template_id},
                        {"fp_b64", fingerprint_to_base64(a.fingerprint)},
                        {"p", a.probability},
                        {"reactants", std::move(rs)}});
        }
        reply = {{"ok", true}, {"templates", std::move(ts)}};
      } else if (what == "fingerprint") {
        reply = {{"ok", true}, {"bits_b64", fingerprint_to_base64(oracle_.fingerprint(name))}};
      } else if (what == "in_stock") {
        reply = {{"ok", true}, {"member", stock_.contains(name)}};
      } else {
        return fail("unknown op: " + what);
      }
    } catch (const nlohmann::json::exception& e) {
      return fail(std::string("bad request: ") + e.what());
    } catch (const std::exception& e) {
      return fail(e.what());
    }
    return reply.dump();
  }

  /// Reads requests until EOF.
  void serve(std::istream& in, std::ostream& out) const {
    for (std::string line; std::getline(in, line);) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      out << handle(line) << '\n';
      out.flush();
    }
  }

  /// Serves one connection at a time on an already listening socket until
  /// `stop` is set (checked between connections).
  void serve_socket(int listen_fd, const std::atomic<bool>& stop) const {
    while (!stop.load()) {
      int fd = ::accept(listen_fd, nullptr, nullptr);
      if (fd < 0) {
        if (stop.load()) break;
        continue;
      }
      std::string buf;
      char chunk[4096];
      bool open = true;
      while (open) {
        ssize_t n = ::recv(fd, chunk, sizeof chunk, 0);
        if (n <= 0) break;
        buf.append(chunk, static_cast<std::size_t>(n));
        for (auto pos = buf.find('\n'); pos != std::string::npos; pos = buf.find('\n')) {
          std::string line = buf.substr(0, pos);
          buf.erase(0, pos + 1);
          if (!line.empty() && line.back() == '\r') line.pop_back();
          if (line.empty()) continue;
          std::string reply = handle(line) + '\n';
          if (::send(fd, reply.data(), reply.size(), MSG_NOSIGNAL) < 0) {
            open = false;
            break;
          }
        }
      }
      ::close(fd);
    }
  }

 private:
  static std::string fail(const std::string& msg) {
    return nlohmann::json{{"ok", false}, {"error", msg}}.dump();
  }

  const ExpansionOracle& oracle_;
  StockSet stock_;
};

/// Binds a loopback listening socket; port 0 picks a free port. Returns
/// (fd, port).
inline std::pair<int, std::uint16_t> listen_loopback(std::uint16_t port) {
  int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd < 0) throw OracleUnavailable("socket failed");
  int one = 1;
  ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = htons(port);
  if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 || ::listen(fd, 8) != 0) {
    ::close(fd);
    throw OracleUnavailable("cannot listen on port " + std::to_string(port));
  }
  socklen_t len = sizeof addr;
  ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
  return {fd, ntohs(addr.sin_port)};
}

}  // namespace egmcts
