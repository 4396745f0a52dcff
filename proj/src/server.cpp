/* Copyright 2026 The ScreamKD Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include "screamkd/edge.hpp"
#include "screamkd/error.hpp"

namespace screamkd::edge {
namespace {

constexpr int kPollMs = 100;

bool send_all(int fd, const std::string& text) {
  std::size_t off = 0;
  while (off < text.size()) {
    const ssize_t n = ::send(fd, text.data() + off, text.size() - off, MSG_NOSIGNAL);
    if (n <= 0) return false;
    off += static_cast<std::size_t>(n);
  }
  return true;
}

std::string error_frame(const std::string& msg) {
  return nlohmann::json{{"v", 1}, {"type", "error"}, {"msg", msg}}.dump() + "\n";
}

}  // namespace

DecisionServer::DecisionServer(ServerOptions options, std::vector<std::shared_ptr<AlertSink>> sinks)
    : options_(std::move(options)), sinks_(std::move(sinks)), engine_(options_.policy) {}

DecisionServer::~DecisionServer() { stop(); }

void DecisionServer::start() {
  if (listen_fd_ >= 0) return;
  std::string host;
  std::uint16_t port = 0;
  try {
    std::tie(host, port) = parse_host_port(options_.bind);
  } catch (const Error& e) {
    throw Error(Errc::BindError, e.what());
  }
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  hints.ai_flags = AI_PASSIVE;
  addrinfo* res = nullptr;
  const std::string port_text = std::to_string(port);
  if (::getaddrinfo(host.c_str(), port_text.c_str(), &hints, &res) != 0) {
    throw Error(Errc::BindError, "cannot resolve bind address " + options_.bind);
  }
  int fd = -1;
  for (addrinfo* a = res; a != nullptr && fd < 0; a = a->ai_next) {
    fd = ::socket(a->ai_family, a->ai_socktype | SOCK_CLOEXEC, a->ai_protocol);
    if (fd < 0) continue;
    const int one = 1;
    ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    if (::bind(fd, a->ai_addr, a->ai_addrlen) != 0 || ::listen(fd, 64) != 0) {
      ::close(fd);
      fd = -1;
    }
  }
  ::freeaddrinfo(res);
  if (fd < 0) throw Error(Errc::BindError, "cannot bind " + options_.bind + ": " + std::strerror(errno));

  sockaddr_storage addr{};
  socklen_t len = sizeof(addr);
  ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = addr.ss_family == AF_INET6 ? ntohs(reinterpret_cast<sockaddr_in6*>(&addr)->sin6_port)
                                     : ntohs(reinterpret_cast<sockaddr_in*>(&addr)->sin_port);
  listen_fd_ = fd;
  stopping_ = false;
  acceptor_ = std::thread([this] { accept_loop(); });
}

void DecisionServer::stop() {
  if (listen_fd_ < 0) return;
  stopping_ = true;
  if (acceptor_.joinable()) acceptor_.join();
  std::vector<std::thread> workers;
  {
    std::lock_guard lock(mu_);
    for (int fd : client_fds_) ::shutdown(fd, SHUT_RDWR);
    workers.swap(workers_);
  }
  for (auto& t : workers) t.join();
  ::close(listen_fd_);
  listen_fd_ = -1;
}

ServerStats DecisionServer::stats() const {
  std::lock_guard lock(mu_);
  return stats_;
}

void DecisionServer::accept_loop() {
  while (!stopping_) {
    pollfd p{listen_fd_, POLLIN, 0};
    if (::poll(&p, 1, kPollMs) <= 0) continue;
    const int fd = ::accept4(listen_fd_, nullptr, nullptr, SOCK_CLOEXEC);
    if (fd < 0) continue;
    std::lock_guard lock(mu_);
    ++stats_.connections;
    client_fds_.push_back(fd);
    workers_.emplace_back([this, fd] { serve_connection(fd); });
  }
}

std::string DecisionServer::handle_line(std::string_view line, bool& close) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  Classification c;
  std::uint64_t seq = 0;
  try {
    std::tie(c, seq) = parse_classification_frame(line);
  } catch (const Error& e) {
    close = true;
    std::lock_guard lock(mu_);
    ++stats_.errors;
    return error_frame(e.what());
  }
  std::lock_guard lock(mu_);
  ++stats_.frames;
  const auto event = engine_.on_classification(c);
  if (event && event->kind == EventKind::Alert) {
    ++stats_.alerts;
    for (const auto& sink : sinks_) sink->emit(*event);
    return nlohmann::json{{"v", 1}, {"seq", seq}, {"type", "alert"}, {"severity", "high"}}.dump() + "\n";
  }
  return nlohmann::json{{"v", 1}, {"seq", seq}, {"type", "ack"}}.dump() + "\n";
}

void DecisionServer::serve_connection(int fd) {
  std::string buffer;
  bool close = false;
  char chunk[4096];
  while (!close && !stopping_) {
    pollfd p{fd, POLLIN, 0};
    const int ready = ::poll(&p, 1, kPollMs);
    if (ready < 0) break;
    if (ready == 0) continue;
    const ssize_t n = ::recv(fd, chunk, sizeof(chunk), 0);
    if (n <= 0) break;
    buffer.append(chunk, static_cast<std::size_t>(n));
    std::size_t nl;
    while (!close && (nl = buffer.find('\n')) != std::string::npos) {
      if (nl > kMaxLineBytes) {
        close = true;
        send_all(fd, error_frame("line exceeds 64 KiB"));
        break;
      }
      const std::string reply = handle_line(std::string_view(buffer).substr(0, nl), close);
      buffer.erase(0, nl + 1);
      if (!send_all(fd, reply)) close = true;
    }
    if (!close && buffer.size() > kMaxLineBytes) {
      close = true;
      {
        std::lock_guard lock(mu_);
        ++stats_.errors;
      }
      send_all(fd, error_frame("line exceeds 64 KiB"));
    }
  }
  std::lock_guard lock(mu_);
  ::close(fd);
  std::erase(client_fds_, fd);
}

}  // namespace screamkd::edge
