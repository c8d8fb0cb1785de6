#pragma once

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <poll.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <memory>
#include <mutex>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "egmcts/errors.hpp"
#include "egmcts/fingerprint.hpp"
#include "egmcts/problem.hpp"

namespace egmcts {

/// A line-oriented request/response channel.
class Transport {
 public:
  virtual ~Transport() = default;
  /// Sends one line (without the newline) and returns the reply line.
  virtual std::string roundtrip(const std::string& line) = 0;
};

namespace detail {

inline std::string errno_text() { return std::strerror(errno); }

/// Buffered line I/O over a pair of file descriptors.
class FdLineChannel {
 public:
  FdLineChannel(int in_fd, int out_fd, int timeout_ms)
      : in_(in_fd), out_(out_fd), timeout_ms_(timeout_ms) {}

  void write_line(const std::string& line, bool socket) {
    std::string data = line + '\n';
    std::size_t off = 0;
    while (off < data.size()) {
      ssize_t n = socket ? ::send(out_, data.data() + off, data.size() - off, MSG_NOSIGNAL)
                         : ::write(out_, data.data() + off, data.size() - off);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw OracleUnavailable("write failed: " + errno_text());
      }
      off += static_cast<std::size_t>(n);
    }
  }

  std::string read_line() {
    for (;;) {
      auto pos = buf_.find('\n');
      if (pos != std::string::npos) {
        std::string line = buf_.substr(0, pos);
        buf_.erase(0, pos + 1);
        return line;
      }
      pollfd p{in_, POLLIN, 0};
      int r = ::poll(&p, 1, timeout_ms_);
      if (r < 0) {
        if (errno == EINTR) continue;
        throw OracleUnavailable("poll failed: " + errno_text());
      }
      if (r == 0) throw OracleUnavailable("timed out waiting for reply");
      char chunk[4096];
      ssize_t n = ::read(in_, chunk, sizeof chunk);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw OracleUnavailable("read failed: " + errno_text());
      }
      if (n == 0) throw OracleUnavailable("connection closed");
      buf_.append(chunk, static_cast<std::size_t>(n));
    }
  }

 private:
  int in_;
  int out_;
  int timeout_ms_;
  std::string buf_;
};

}  // namespace detail

/// Spawns a command and talks to it over its stdin/stdout.
class PipeTransport final : public Transport {
 public:
  explicit PipeTransport(std::vector<std::string> argv, int timeout_ms = 60000) {
    if (argv.empty()) throw OracleUnavailable("empty command");
    ::signal(SIGPIPE, SIG_IGN);
    int to_child[2], from_child[2];
    if (::pipe(to_child) != 0) throw OracleUnavailable("pipe: " + detail::errno_text());
    if (::pipe(from_child) != 0) {
      ::close(to_child[0]);
      ::close(to_child[1]);
      throw OracleUnavailable("pipe: " + detail::errno_text());
    }
    // Exec failure is reported through a close-on-exec pipe.
    int status_pipe[2];
    if (::pipe2(status_pipe, O_CLOEXEC) != 0) throw OracleUnavailable("pipe: " + detail::errno_text());

    std::vector<char*> args;
    for (auto& a : argv) args.push_back(a.data());
    args.push_back(nullptr);

    pid_ = ::fork();
    if (pid_ < 0) throw OracleUnavailable("fork: " + detail::errno_text());
    if (pid_ == 0) {
      ::dup2(to_child[0], STDIN_FILENO);
      ::dup2(from_child[1], STDOUT_FILENO);
      ::close(to_child[0]);
      ::close(to_child[1]);
      ::close(from_child[0]);
      ::close(from_child[1]);
      ::close(status_pipe[0]);
      ::execvp(args[0], args.data());
      int err = errno;
      [[maybe_unused]] auto w = ::write(status_pipe[1], &err, sizeof err);
      ::_exit(127);
    }
    ::close(to_child[0]);
    ::close(from_child[1]);
    ::close(status_pipe[1]);
    int err = 0;
    ssize_t n;
    do {
      n = ::read(status_pipe[0], &err, sizeof err);
    } while (n < 0 && errno == EINTR);
    ::close(status_pipe[0]);
    write_fd_ = to_child[1];
    read_fd_ = from_child[0];
    if (n > 0) {
      cleanup();
      throw OracleUnavailable("cannot execute " + argv[0] + ": " + std::strerror(err));
    }
    chan_ = std::make_unique<detail::FdLineChannel>(read_fd_, write_fd_, timeout_ms);
  }

  ~PipeTransport() override { cleanup(); }

  std::string roundtrip(const std::string& line) override {
    chan_->write_line(line, false);
    return chan_->read_line();
  }

 private:
  void cleanup() {
    if (write_fd_ >= 0) ::close(write_fd_);
    if (read_fd_ >= 0) ::close(read_fd_);
    write_fd_ = read_fd_ = -1;
    if (pid_ > 0) {
      // The child sees EOF and should exit; a hung one is killed.
      int st = 0;
      bool reaped = false;
      for (int i = 0; i < 100 && !reaped; ++i) {
        reaped = ::waitpid(pid_, &st, WNOHANG) == pid_;
        if (!reaped) ::usleep(10000);
      }
      if (!reaped) {
        ::kill(pid_, SIGKILL);
        ::waitpid(pid_, &st, 0);
      }
      pid_ = -1;
    }
  }

  pid_t pid_ = -1;
  int write_fd_ = -1;
  int read_fd_ = -1;
  std::unique_ptr<detail::FdLineChannel> chan_;
};

/// Stream socket client.
class TcpTransport final : public Transport {
 public:
  TcpTransport(const std::string& host, const std::string& port, int timeout_ms = 60000) {
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    if (int rc = ::getaddrinfo(host.c_str(), port.c_str(), &hints, &res); rc != 0) {
      throw OracleUnavailable("resolve " + host + ":" + port + ": " + ::gai_strerror(rc));
    }
    std::string last = "no address";
    for (addrinfo* a = res; a; a = a->ai_next) {
      int fd = ::socket(a->ai_family, a->ai_socktype, a->ai_protocol);
      if (fd < 0) continue;
      if (::connect(fd, a->ai_addr, a->ai_addrlen) == 0) {
        fd_ = fd;
        break;
      }
      last = detail::errno_text();
      ::close(fd);
    }
    ::freeaddrinfo(res);
    if (fd_ < 0) throw OracleUnavailable("connect " + host + ":" + port + ": " + last);
    chan_ = std::make_unique<detail::FdLineChannel>(fd_, fd_, timeout_ms);
  }

  ~TcpTransport() override {
    if (fd_ >= 0) ::close(fd_);
  }

  std::string roundtrip(const std::string& line) override {
    chan_->write_line(line, true);
    return chan_->read_line();
  }

 private:
  int fd_ = -1;
  std::unique_ptr<detail::FdLineChannel> chan_;
};

/// Endpoint syntax: "tcp://host:port", "host:port", or "exec:<command line>"
/// (whitespace-separated argv).
inline std::unique_ptr<Transport> open_transport(const std::string& endpoint) {
  if (endpoint.rfind("exec:", 0) == 0) {
    std::istringstream in(endpoint.substr(5));
    std::vector<std::string> argv;
    for (std::string w; in >> w;) argv.push_back(w);
    if (argv.empty()) throw ConfigError("exec endpoint without a command");
    return std::make_unique<PipeTransport>(std::move(argv));
  }
  std::string rest = endpoint.rfind("tcp://", 0) == 0 ? endpoint.substr(6) : endpoint;
  auto colon = rest.rfind(':');
  if (colon == std::string::npos || colon == 0 || colon + 1 == rest.size()) {
    throw ConfigError("bad oracle endpoint: " + endpoint);
  }
  std::string host = rest.substr(0, colon);
  if (host.size() > 2 && host.front() == '[' && host.back() == ']') {
    host = host.substr(1, host.size() - 2);
  }
  return std::make_unique<TcpTransport>(host, rest.substr(colon + 1));
}

/// Client for the newline-delimited JSON oracle protocol. Requests on one
/// connection are serialized.
class RemoteOracle final : public ExpansionOracle {
 public:
  explicit RemoteOracle(std::unique_ptr<Transport> t) : transport_(std::move(t)) {}
  explicit RemoteOracle(const std::string& endpoint) : transport_(open_transport(endpoint)) {}

  std::vector<TemplateAction> expand(const Item& item, const OracleConfig& cfg) const override {
    auto reply = call({{"op", "expand"}, {"id", item.id()}, {"k", cfg.k}});
    std::vector<TemplateAction> out;
    try {
      const auto& ts = reply.at("templates");
      if (!ts.is_array()) throw OracleUnavailable("templates is not an array");
      for (const auto& t : ts) {
        TemplateAction a;
        a.template_id = t.at("template_id").get<std::string>();
        a.fingerprint = fingerprint_from_base64(t.at("fp_b64").get<std::string>());
        a.probability = t.at("p").get<double>();
        for (const auto& r : t.at("reactants")) {
          a.reactants.emplace_back(r.at("id").get<std::string>(),
                                   fingerprint_from_base64(r.at("fp_b64").get<std::string>()));
        }
        validate_action(a, item.id());
        out.push_back(std::move(a));
      }
    } catch (const nlohmann::json::exception& e) {
      throw OracleUnavailable(std::string("malformed expand reply: ") + e.what());
    } catch (const LengthMismatch& e) {
      throw OracleUnavailable(std::string("malformed fingerprint: ") + e.what());
    } catch (const InvalidAction& e) {
      throw OracleUnavailable(std::string("malformed action: ") + e.what());
    }
    sort_and_truncate(out, cfg.k);
    return out;
  }

  Fingerprint fingerprint(std::string_view id) const override {
    auto reply = call({{"op", "fingerprint"}, {"id", std::string(id)}});
    try {
      return fingerprint_from_base64(reply.at("bits_b64").get<std::string>());
    } catch (const nlohmann::json::exception& e) {
      throw OracleUnavailable(std::string("malformed fingerprint reply: ") + e.what());
    } catch (const LengthMismatch& e) {
      throw OracleUnavailable(std::string("malformed fingerprint: ") + e.what());
    }
  }

  bool in_stock(std::string_view id) const {
    auto reply = call({{"op", "in_stock"}, {"id", std::string(id)}});
    auto it = reply.find("member");
    if (it == reply.end() || !it->is_boolean()) {
      throw OracleUnavailable("malformed in_stock reply");
    }
    return it->get<bool>();
  }

  /// Stock membership delegated to the service. The oracle must outlive it.
  StockSet stock_set() const {
    return StockSet::from_query([this](std::string_view id) { return in_stock(id); });
  }

 private:
  nlohmann::json call(const nlohmann::json& request) const {
    std::string line;
    {
      std::lock_guard lock(mu_);
      line = transport_->roundtrip(request.dump());
    }
    nlohmann::json reply;
    try {
      reply = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception&) {
      throw OracleUnavailable("reply is not JSON: " + line.substr(0, 200));
    }
    if (!reply.is_object()) throw OracleUnavailable("reply is not an object");
    auto ok = reply.find("ok");
    if (ok == reply.end() || !ok->is_boolean()) throw OracleUnavailable("reply lacks ok");
    if (!ok->get<bool>()) {
      auto err = reply.find("error");
      throw OracleRequestFailed(err != reply.end() && err->is_string() ? err->get<std::string>()
                                                                       : "unspecified error");
    }
    return reply;
  }

  std::unique_ptr<Transport> transport_;
  mutable std::mutex mu_;
};

}  // namespace egmcts
