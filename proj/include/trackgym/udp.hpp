#pragma once

// UDP transport: one socket per learning session, lockstep with the
// simulation. Each step the server waits until every session that was sent
// a frame has answered, or action_timeout passes; missing actions repeat.

#include <arpa/inet.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <chrono>
#include <cstring>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "trackgym/agents.hpp"
#include "trackgym/errors.hpp"
#include "trackgym/simulation.hpp"

namespace trackgym::udp {

inline constexpr std::size_t kMaxDatagram = 65507;

struct Endpoint {
  sockaddr_in addr{};

  static Endpoint make(const std::string& host, int port) {
    Endpoint e;
    e.addr.sin_family = AF_INET;
    e.addr.sin_port = htons(static_cast<std::uint16_t>(port));
    if (inet_pton(AF_INET, host.c_str(), &e.addr.sin_addr) != 1) throw NetworkError("bad IPv4 address '" + host + "'");
    return e;
  }

  bool operator==(const Endpoint& o) const {
    return addr.sin_addr.s_addr == o.addr.sin_addr.s_addr && addr.sin_port == o.addr.sin_port;
  }
};

class Socket {
 public:
  Socket() : fd_(::socket(AF_INET, SOCK_DGRAM, 0)) {
    if (fd_ < 0) throw NetworkError(std::string("socket: ") + std::strerror(errno));
  }
  ~Socket() {
    if (fd_ >= 0) ::close(fd_);
  }
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;
  Socket(Socket&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
  Socket& operator=(Socket&& o) noexcept {
    if (this != &o) {
      if (fd_ >= 0) ::close(fd_);
      fd_ = std::exchange(o.fd_, -1);
    }
    return *this;
  }

  void bind(const std::string& host, int port) {
    const auto e = Endpoint::make(host, port);
    if (::bind(fd_, reinterpret_cast<const sockaddr*>(&e.addr), sizeof e.addr) != 0) {
      throw NetworkError("bind " + host + ":" + std::to_string(port) + ": " + std::strerror(errno));
    }
  }

  void send_to(const Endpoint& to, const std::string& msg) const {
    const auto n = ::sendto(fd_, msg.data(), msg.size(), 0, reinterpret_cast<const sockaddr*>(&to.addr), sizeof to.addr);
    if (n < 0 || static_cast<std::size_t>(n) != msg.size()) throw NetworkError(std::string("sendto: ") + std::strerror(errno));
  }

  // One datagram, or nullopt when nothing arrives within timeout_ms.
  std::optional<std::pair<std::string, Endpoint>> recv(int timeout_ms) const {
    pollfd p{fd_, POLLIN, 0};
    const int r = ::poll(&p, 1, timeout_ms);
    if (r < 0) throw NetworkError(std::string("poll: ") + std::strerror(errno));
    if (r == 0) return std::nullopt;
    return recv_now();
  }

  std::pair<std::string, Endpoint> recv_now() const {
    std::string buf(kMaxDatagram, '\0');
    Endpoint from;
    socklen_t len = sizeof from.addr;
    const auto n = ::recvfrom(fd_, buf.data(), buf.size(), 0, reinterpret_cast<sockaddr*>(&from.addr), &len);
    if (n < 0) throw NetworkError(std::string("recvfrom: ") + std::strerror(errno));
    buf.resize(static_cast<std::size_t>(n));
    return {buf, from};
  }

  int fd() const { return fd_; }

 private:
  int fd_;
};

// Server side. Binds every learning session's port; traffic sessions stay
// in process.
class ServerDriver : public StepDriver {
 public:
  ServerDriver(Simulation& sim, std::string host = "127.0.0.1", double connect_timeout = 10.0)
      : sim_(sim), host_(std::move(host)), connect_timeout_(connect_timeout) {
    for (const auto& s : sim_.sessions()) {
      if (s.kind != SessionKind::learning) continue;
      Socket sock;
      sock.bind(host_, s.port);
      socks_.emplace(s.index, std::move(sock));
    }
  }

  std::vector<int> ports() const {
    std::vector<int> out;
    for (const auto& [idx, s] : socks_) out.push_back(sim_.sessions()[idx].port);
    return out;
  }

  // Waits for every learning client to identify, then sends first frames.
  void start() override {
    const auto deadline = clock::now() + seconds(connect_timeout_);
    while (!sim_.ready()) {
      if (clock::now() >= deadline) throw NetworkError("timed out waiting for clients to identify");
      pump(deadline);
    }
    sim_.start();
    flush();
  }

  StepReport step() override {
    const auto deadline = clock::now() + seconds(sim_.config().server.action_timeout);
    while (!awaiting_.empty() && clock::now() < deadline) pump(deadline);
    awaiting_.clear();
    auto rep = sim_.step();
    flush();
    return rep;
  }

  void shutdown() {
    sim_.shutdown();
    flush();
  }

 private:
  using clock = std::chrono::steady_clock;
  static clock::duration seconds(double s) {
    return std::chrono::duration_cast<clock::duration>(std::chrono::duration<double>(s));
  }

  // Reads whatever arrives before the deadline and feeds it to the sessions.
  void pump(clock::time_point deadline) {
    std::vector<pollfd> fds;
    std::vector<std::size_t> owner;
    for (const auto& [idx, s] : socks_) {
      fds.push_back({s.fd(), POLLIN, 0});
      owner.push_back(idx);
    }
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - clock::now()).count();
    const int r = ::poll(fds.data(), fds.size(), static_cast<int>(std::max<long long>(0, std::min<long long>(left, 50))));
    if (r < 0) throw NetworkError(std::string("poll: ") + std::strerror(errno));
    for (std::size_t k = 0; k < fds.size(); ++k) {
      if (fds[k].revents & (POLLERR | POLLHUP)) {
        sim_.mark_disconnected(owner[k]);
        awaiting_.erase(owner[k]);
        continue;
      }
      if (!(fds[k].revents & POLLIN)) continue;
      const std::size_t idx = owner[k];
      auto [msg, from] = socks_.at(idx).recv_now();
      if (wire::looks_like_init(msg)) peers_[idx] = from;
      const auto reply = sim_.handle_message(idx, msg);
      if (!reply.empty()) socks_.at(idx).send_to(from, reply);
      if (!wire::looks_like_init(msg)) awaiting_.erase(idx);
    }
  }

  void flush() {
    for (auto& o : sim_.drain_outbox()) {
      auto peer = peers_.find(o.session);
      if (peer == peers_.end()) continue;
      try {
        socks_.at(o.session).send_to(peer->second, o.message);
      } catch (const NetworkError&) {
        sim_.mark_disconnected(o.session);
        continue;
      }
      if (o.message.rfind("***", 0) != 0) awaiting_.insert(o.session);
    }
  }

  Simulation& sim_;
  std::string host_;
  double connect_timeout_;
  std::map<std::size_t, Socket> socks_;
  std::map<std::size_t, Endpoint> peers_;
  std::set<std::size_t> awaiting_;
};

// Client loop for a scripted policy; runs until ***shutdown*** or until
// the server has been silent for idle_timeout seconds.
class ClientThread {
 public:
  ClientThread(std::string host, int port, std::unique_ptr<ScriptedClient> client, double idle_timeout = 5.0)
      : client_(std::move(client)) {
    thread_ = std::thread([this, host = std::move(host), port, idle_timeout] { run(host, port, idle_timeout); });
  }
  ~ClientThread() {
    stop_ = true;
    if (thread_.joinable()) thread_.join();
  }
  ClientThread(const ClientThread&) = delete;
  ClientThread& operator=(const ClientThread&) = delete;

  void join() {
    if (thread_.joinable()) thread_.join();
  }
  const ScriptedClient& client() const { return *client_; }
  const std::string& failure() const { return failure_; }

 private:
  void run(const std::string& host, int port, double idle_timeout) {
    try {
      Socket sock;
      const auto server = Endpoint::make(host, port);
      while (!client_->identified() && !stop_) {
        sock.send_to(server, client_->hello());
        if (auto m = sock.recv(200)) client_->on_message(m->first);
      }
      auto last = std::chrono::steady_clock::now();
      while (!client_->shut_down() && !stop_) {
        auto m = sock.recv(50);
        if (!m) {
          if (std::chrono::steady_clock::now() - last > std::chrono::duration<double>(idle_timeout)) break;
          continue;
        }
        last = std::chrono::steady_clock::now();
        if (auto reply = client_->on_message(m->first)) sock.send_to(server, *reply);
      }
    } catch (const std::exception& e) {
      failure_ = e.what();
    }
  }

  std::unique_ptr<ScriptedClient> client_;
  std::atomic<bool> stop_{false};
  std::string failure_;
  std::thread thread_;
};

}  // namespace trackgym::udp
