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

#ifndef SCREAMKD_EDGE_HPP_
#define SCREAMKD_EDGE_HPP_

#include <atomic>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#include "json.hpp"
#include "screamkd/model.hpp"

namespace screamkd::edge {

enum class Task { Detect, Type };
enum class Label { Scream, NonScream, Positive, Negative };

std::string_view task_name(Task t);
std::string_view label_name(Label l);

struct Classification {
  std::string stream_id;
  std::uint64_t window_index = 0;
  std::uint64_t timestamp_ms = 0;
  Task task = Task::Detect;
  Label label = Label::NonScream;
  double score = 0.0;  // softmax probability of `label`
  std::string model_id;

  bool operator==(const Classification&) const = default;
};

enum class EventKind { Alert, Log };
enum class Severity { High, None };

struct DecisionEvent {
  EventKind kind = EventKind::Log;
  Severity severity = Severity::None;
  Classification classification;
  std::string policy_id;

  bool operator==(const DecisionEvent&) const = default;
};

struct Policy {
  double threshold = 0.5;
  std::string id = "negative-scream-v1";
};

struct WindowInfo {
  std::string stream_id = "stream-0";
  std::uint64_t window_index = 0;
  std::uint64_t timestamp_ms = 0;
};

// Class 1 is scream (detect) or negative (type); ties go to class 0.
Classification classify_logits(std::span<const float> logits, Task task, const WindowInfo& info,
                               const std::string& model_id);

// Stage 1 always; stage 2 only when stage 1 says scream.
std::vector<Classification> classify_window(const model::Model& detector, const model::Model& typer,
                                            const dsp::MelSpec& spec, const WindowInfo& info = {},
                                            const std::string& detector_id = "detector",
                                            const std::string& typer_id = "typer");

// Alert iff the chain is scream -> negative with negative score >= threshold.
DecisionEvent decide(std::span<const Classification> chain, const Policy& policy = {});

// Wire format.
inline constexpr std::size_t kMaxLineBytes = 64 * 1024;
nlohmann::json classification_frame(const Classification& c, std::uint64_t seq);
// ProtocolError on any missing or mistyped field.
std::pair<Classification, std::uint64_t> parse_classification_frame(std::string_view line);
nlohmann::json decision_to_json(const DecisionEvent& e);

// Pairs detect and type frames by (stream_id, window) and applies the
// policy; returns the decision once a window's chain is complete.
class DecisionEngine {
 public:
  explicit DecisionEngine(Policy policy = {}) : policy_(std::move(policy)) {}
  std::optional<DecisionEvent> on_classification(const Classification& c);
  const Policy& policy() const { return policy_; }

 private:
  Policy policy_;
  std::map<std::pair<std::string, std::uint64_t>, Classification> pending_detect_;
};

class AlertSink {
 public:
  virtual ~AlertSink() = default;
  virtual void emit(const DecisionEvent& event) = 0;
};

// One JSON DecisionEvent per line, appended.
class FileSink : public AlertSink {
 public:
  explicit FileSink(const std::filesystem::path& path);
  void emit(const DecisionEvent& event) override;

 private:
  std::ofstream out_;
};

class StreamSink : public AlertSink {
 public:
  explicit StreamSink(std::ostream& out) : out_(out) {}
  void emit(const DecisionEvent& event) override;

 private:
  std::ostream& out_;
};

// POSTs the event JSON to http://host:port/path; failures are counted.
class WebhookSink : public AlertSink {
 public:
  explicit WebhookSink(std::string url);
  void emit(const DecisionEvent& event) override;
  std::size_t failures() const { return failures_; }

 private:
  std::string host_;
  int port_ = 80;
  std::string path_;
  std::size_t failures_ = 0;
};

struct Reply {
  std::string type;  // ack | alert | error
  std::uint64_t seq = 0;
  std::string severity;
  std::string msg;
};

class Endpoint {
 public:
  virtual ~Endpoint() = default;
  // Throws ConnectionLost when the frame could not be delivered.
  virtual Reply deliver(const Classification& c, std::uint64_t seq) = 0;
};

// In-process decision layer: same engine and sinks as the server.
class LocalEndpoint : public Endpoint {
 public:
  explicit LocalEndpoint(Policy policy = {}, std::vector<std::shared_ptr<AlertSink>> sinks = {});
  Reply deliver(const Classification& c, std::uint64_t seq) override;

 private:
  DecisionEngine engine_;
  std::vector<std::shared_ptr<AlertSink>> sinks_;
};

// Newline-delimited JSON over TCP; reconnects lazily after a failure.
class TcpEndpoint : public Endpoint {
 public:
  TcpEndpoint(std::string host, std::uint16_t port, int timeout_ms = 5000);
  ~TcpEndpoint() override;
  TcpEndpoint(const TcpEndpoint&) = delete;
  TcpEndpoint& operator=(const TcpEndpoint&) = delete;

  Reply deliver(const Classification& c, std::uint64_t seq) override;

 private:
  void connect_now();
  void disconnect();

  std::string host_;
  std::uint16_t port_;
  int timeout_ms_;
  int fd_ = -1;
  std::string inbox_;
};

// host:port; ProtocolError-free parse, UsageError on bad text.
std::pair<std::string, std::uint16_t> parse_host_port(const std::string& text);

struct StreamOptions {
  std::string stream_id = "stream-0";
  double window_s = 3.0;
  double hop_s = 1.5;
  Policy policy;
  std::size_t buffer_cap = 1000;
  std::string detector_id = "detector";
  std::string typer_id = "typer";
};

struct StreamReport {
  std::size_t windows = 0;
  std::vector<Classification> classifications;
  std::vector<DecisionEvent> local_events;  // advisory, edge side
  std::vector<Reply> replies;
  std::size_t sent = 0;
  std::size_t alerts = 0;  // alert replies from the endpoint
  std::size_t dropped = 0;
  std::size_t unsent = 0;  // still buffered at the end
  std::vector<double> window_ms;
};

// 1 + floor((n - window) / hop) for n >= window, else 1.
std::size_t window_count(std::size_t n_samples, std::size_t window, std::size_t hop);

StreamReport run_stream(const audio::AudioClip& source, const model::Model& detector, const model::Model& typer,
                        Endpoint& endpoint, const StreamOptions& options = {});
StreamReport run_stream_specs(std::span<const dsp::MelSpec> windows, const model::Model& detector,
                              const model::Model& typer, Endpoint& endpoint, const StreamOptions& options = {});
// SourceError when the file cannot be decoded.
StreamReport run_stream_file(const std::filesystem::path& wav, const model::Model& detector,
                             const model::Model& typer, Endpoint& endpoint, const StreamOptions& options = {});

struct ServerOptions {
  std::string bind = "127.0.0.1:7878";
  Policy policy;
};

struct ServerStats {
  std::size_t connections = 0;
  std::size_t frames = 0;
  std::size_t alerts = 0;
  std::size_t errors = 0;
};

class DecisionServer {
 public:
  DecisionServer(ServerOptions options, std::vector<std::shared_ptr<AlertSink>> sinks);
  ~DecisionServer();
  DecisionServer(const DecisionServer&) = delete;
  DecisionServer& operator=(const DecisionServer&) = delete;

  // Binds and starts accepting in the background; BindError on failure.
  void start();
  std::uint16_t port() const { return port_; }
  void stop();
  ServerStats stats() const;

 private:
  void accept_loop();
  void serve_connection(int fd);
  std::string handle_line(std::string_view line, bool& close);

  ServerOptions options_;
  std::vector<std::shared_ptr<AlertSink>> sinks_;
  int listen_fd_ = -1;
  std::uint16_t port_ = 0;
  std::atomic<bool> stopping_{false};
  std::thread acceptor_;
  mutable std::mutex mu_;  // engine, sinks, stats, client list
  DecisionEngine engine_;
  ServerStats stats_;
  std::vector<std::thread> workers_;
  std::vector<int> client_fds_;
};

}  // namespace screamkd::edge

#endif  // SCREAMKD_EDGE_HPP_
