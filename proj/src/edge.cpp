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

#include "screamkd/edge.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>

#include "httplib.h"
#include "screamkd/error.hpp"

namespace screamkd::edge {
namespace {

[[noreturn]] void protocol_fail(const std::string& msg) { throw Error(Errc::ProtocolError, msg); }

std::uint64_t require_u64(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || !j[key].is_number_unsigned()) {
    // Non-negative integers parse as unsigned; anything else is rejected.
    if (j.contains(key) && j[key].is_number_integer() && j[key].get<std::int64_t>() >= 0) {
      return j[key].get<std::uint64_t>();
    }
    protocol_fail(std::string("field '") + key + "' must be an unsigned integer");
  }
  return j[key].get<std::uint64_t>();
}

std::string require_string(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || !j[key].is_string()) protocol_fail(std::string("field '") + key + "' must be a string");
  return j[key].get<std::string>();
}

Label parse_label(const std::string& s, Task task) {
  if (task == Task::Detect) {
    if (s == "scream") return Label::Scream;
    if (s == "non_scream") return Label::NonScream;
  } else {
    if (s == "positive") return Label::Positive;
    if (s == "negative") return Label::Negative;
  }
  protocol_fail("label '" + s + "' is not valid for task " + std::string(task_name(task)));
}

}  // namespace

std::string_view task_name(Task t) { return t == Task::Detect ? "detect" : "type"; }

std::string_view label_name(Label l) {
  switch (l) {
    case Label::Scream:
      return "scream";
    case Label::NonScream:
      return "non_scream";
    case Label::Positive:
      return "positive";
    case Label::Negative:
      return "negative";
  }
  return "?";
}

Classification classify_logits(std::span<const float> logits, Task task, const WindowInfo& info,
                               const std::string& model_id) {
  if (logits.size() != 2) throw Error(Errc::ShapeMismatch, "binary classification needs 2 logits");
  const double l0 = logits[0];
  const double l1 = logits[1];
  const double m = std::max(l0, l1);
  const double e0 = std::exp(l0 - m);
  const double e1 = std::exp(l1 - m);
  const double p1 = e1 / (e0 + e1);
  const bool positive_class = l1 > l0;
  Classification c;
  c.stream_id = info.stream_id;
  c.window_index = info.window_index;
  c.timestamp_ms = info.timestamp_ms;
  c.task = task;
  c.model_id = model_id;
  if (task == Task::Detect) {
    c.label = positive_class ? Label::Scream : Label::NonScream;
  } else {
    c.label = positive_class ? Label::Negative : Label::Positive;
  }
  c.score = positive_class ? p1 : 1.0 - p1;
  return c;
}

std::vector<Classification> classify_window(const model::Model& detector, const model::Model& typer,
                                            const dsp::MelSpec& spec, const WindowInfo& info,
                                            const std::string& detector_id, const std::string& typer_id) {
  const dsp::MelSpec one[1] = {spec};
  std::vector<Classification> out;
  const nn::Tensor d = model::forward(detector, model::make_batch(one, detector.config.in_channels));
  out.push_back(classify_logits(d.values(), Task::Detect, info, detector_id));
  if (out.back().label == Label::Scream) {
    const nn::Tensor t = model::forward(typer, model::make_batch(one, typer.config.in_channels));
    out.push_back(classify_logits(t.values(), Task::Type, info, typer_id));
  }
  return out;
}

DecisionEvent decide(std::span<const Classification> chain, const Policy& policy) {
  DecisionEvent e;
  e.policy_id = policy.id;
  if (chain.empty()) return e;
  e.classification = chain.back();
  const Classification* detect = nullptr;
  const Classification* type = nullptr;
  for (const auto& c : chain) {
    if (c.task == Task::Detect) detect = &c;
    if (c.task == Task::Type) type = &c;
  }
  if (detect != nullptr && detect->label == Label::Scream && type != nullptr && type->label == Label::Negative &&
      type->score >= policy.threshold) {
    e.kind = EventKind::Alert;
    e.severity = Severity::High;
    e.classification = *type;
  }
  return e;
}

nlohmann::json classification_frame(const Classification& c, std::uint64_t seq) {
  return {{"v", 1},
          {"seq", seq},
          {"type", "classification"},
          {"stream_id", c.stream_id},
          {"window", c.window_index},
          {"ts_ms", c.timestamp_ms},
          {"task", std::string(task_name(c.task))},
          {"label", std::string(label_name(c.label))},
          {"score", c.score},
          {"model_id", c.model_id}};
}

std::pair<Classification, std::uint64_t> parse_classification_frame(std::string_view line) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception&) {
    protocol_fail("frame is not valid JSON");
  }
  if (!j.is_object()) protocol_fail("frame must be a JSON object");
  if (require_u64(j, "v") != 1) protocol_fail("unsupported protocol version");
  const std::uint64_t seq = require_u64(j, "seq");
  if (require_string(j, "type") != "classification") protocol_fail("unexpected frame type");
  Classification c;
  c.stream_id = require_string(j, "stream_id");
  c.window_index = require_u64(j, "window");
  c.timestamp_ms = require_u64(j, "ts_ms");
  const std::string task = require_string(j, "task");
  if (task == "detect") {
    c.task = Task::Detect;
  } else if (task == "type") {
    c.task = Task::Type;
  } else {
    protocol_fail("task must be detect or type");
  }
  c.label = parse_label(require_string(j, "label"), c.task);
  if (!j.contains("score") || !j["score"].is_number()) protocol_fail("field 'score' must be a number");
  c.score = j["score"].get<double>();
  if (!(c.score >= 0.0 && c.score <= 1.0)) protocol_fail("score must lie in [0, 1]");
  c.model_id = require_string(j, "model_id");
  return {c, seq};
}

nlohmann::json decision_to_json(const DecisionEvent& e) {
  nlohmann::json c = classification_frame(e.classification, 0);
  c.erase("v");
  c.erase("seq");
  c.erase("type");
  return {{"kind", e.kind == EventKind::Alert ? "alert" : "log"},
          {"severity", e.severity == Severity::High ? "high" : "none"},
          {"policy_id", e.policy_id},
          {"classification", c}};
}

std::optional<DecisionEvent> DecisionEngine::on_classification(const Classification& c) {
  const auto key = std::make_pair(c.stream_id, c.window_index);
  if (c.task == Task::Detect) {
    if (c.label == Label::Scream) {
      pending_detect_[key] = c;
      return std::nullopt;
    }
    pending_detect_.erase(key);
    const Classification chain[1] = {c};
    return decide(chain, policy_);
  }
  std::vector<Classification> chain;
  if (const auto it = pending_detect_.find(key); it != pending_detect_.end()) {
    chain.push_back(it->second);
    pending_detect_.erase(it);
  }
  chain.push_back(c);
  return decide(chain, policy_);
}

FileSink::FileSink(const std::filesystem::path& path) : out_(path, std::ios::app) {
  if (!out_) throw Error(Errc::IoError, "cannot open alert sink " + path.string());
}

void FileSink::emit(const DecisionEvent& event) {
  out_ << decision_to_json(event).dump() << '\n';
  out_.flush();
}

void StreamSink::emit(const DecisionEvent& event) { out_ << decision_to_json(event).dump() << std::endl; }

WebhookSink::WebhookSink(std::string url) {
  constexpr std::string_view kScheme = "http://";
  if (url.rfind(kScheme, 0) != 0) throw Error(Errc::UsageError, "webhook URL must start with http://");
  std::string rest = url.substr(kScheme.size());
  const auto slash = rest.find('/');
  path_ = slash == std::string::npos ? "/" : rest.substr(slash);
  const std::string authority = rest.substr(0, slash);
  const auto colon = authority.rfind(':');
  host_ = authority.substr(0, colon);
  if (colon != std::string::npos) {
    try {
      port_ = std::stoi(authority.substr(colon + 1));
    } catch (const std::logic_error&) {
      throw Error(Errc::UsageError, "bad webhook port in " + url);
    }
  }
  if (host_.empty()) throw Error(Errc::UsageError, "webhook URL has no host");
}

void WebhookSink::emit(const DecisionEvent& event) {
  httplib::Client client(host_, port_);
  client.set_connection_timeout(2);
  const auto res = client.Post(path_, decision_to_json(event).dump(), "application/json");
  if (!res || res->status >= 300) ++failures_;
}

LocalEndpoint::LocalEndpoint(Policy policy, std::vector<std::shared_ptr<AlertSink>> sinks)
    : engine_(std::move(policy)), sinks_(std::move(sinks)) {}

Reply LocalEndpoint::deliver(const Classification& c, std::uint64_t seq) {
  Reply r{"ack", seq, "", ""};
  if (const auto event = engine_.on_classification(c); event && event->kind == EventKind::Alert) {
    for (const auto& s : sinks_) s->emit(*event);
    r.type = "alert";
    r.severity = "high";
  }
  return r;
}

std::pair<std::string, std::uint16_t> parse_host_port(const std::string& text) {
  const auto colon = text.rfind(':');
  if (colon == std::string::npos || colon == 0) throw Error(Errc::UsageError, "expected host:port, got " + text);
  int port = -1;
  try {
    std::size_t used = 0;
    port = std::stoi(text.substr(colon + 1), &used);
    if (used != text.size() - colon - 1) port = -1;
  } catch (const std::logic_error&) {
    port = -1;
  }
  if (port < 0 || port > 65535) throw Error(Errc::UsageError, "bad port in " + text);
  return {text.substr(0, colon), static_cast<std::uint16_t>(port)};
}

TcpEndpoint::TcpEndpoint(std::string host, std::uint16_t port, int timeout_ms)
    : host_(std::move(host)), port_(port), timeout_ms_(timeout_ms) {}

TcpEndpoint::~TcpEndpoint() { disconnect(); }

void TcpEndpoint::disconnect() {
  if (fd_ >= 0) ::close(fd_);
  fd_ = -1;
  inbox_.clear();
}

void TcpEndpoint::connect_now() {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  const std::string port = std::to_string(port_);
  if (::getaddrinfo(host_.c_str(), port.c_str(), &hints, &res) != 0) {
    throw Error(Errc::ConnectionLost, "cannot resolve " + host_);
  }
  for (addrinfo* a = res; a != nullptr; a = a->ai_next) {
    const int fd = ::socket(a->ai_family, a->ai_socktype | SOCK_CLOEXEC, a->ai_protocol);
    if (fd < 0) continue;
    if (::connect(fd, a->ai_addr, a->ai_addrlen) == 0) {
      const int one = 1;
      ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
      fd_ = fd;
      break;
    }
    ::close(fd);
  }
  ::freeaddrinfo(res);
  if (fd_ < 0) throw Error(Errc::ConnectionLost, "cannot connect to " + host_ + ":" + port);
}

Reply TcpEndpoint::deliver(const Classification& c, std::uint64_t seq) {
  if (fd_ < 0) connect_now();
  const std::string line = classification_frame(c, seq).dump() + "\n";
  std::size_t off = 0;
  while (off < line.size()) {
    const ssize_t n = ::send(fd_, line.data() + off, line.size() - off, MSG_NOSIGNAL);
    if (n <= 0) {
      disconnect();
      throw Error(Errc::ConnectionLost, "send failed");
    }
    off += static_cast<std::size_t>(n);
  }
  const auto deadline = std::chrono::steady_clock::now() + std::chrono::milliseconds(timeout_ms_);
  std::size_t nl;
  while ((nl = inbox_.find('\n')) == std::string::npos) {
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
    pollfd p{fd_, POLLIN, 0};
    if (left.count() <= 0 || ::poll(&p, 1, static_cast<int>(left.count())) <= 0) {
      disconnect();
      throw Error(Errc::ConnectionLost, "no reply from decision server");
    }
    char buf[4096];
    const ssize_t n = ::recv(fd_, buf, sizeof(buf), 0);
    if (n <= 0) {
      disconnect();
      throw Error(Errc::ConnectionLost, "decision server closed the connection");
    }
    inbox_.append(buf, static_cast<std::size_t>(n));
  }
  const std::string reply_line = inbox_.substr(0, nl);
  inbox_.erase(0, nl + 1);
  Reply r;
  try {
    const auto j = nlohmann::json::parse(reply_line);
    r.type = j.at("type").get<std::string>();
    r.seq = j.value("seq", std::uint64_t{0});
    r.severity = j.value("severity", "");
    r.msg = j.value("msg", "");
  } catch (const nlohmann::json::exception&) {
    disconnect();
    throw Error(Errc::ProtocolError, "malformed reply from decision server");
  }
  if (r.type == "error") {
    disconnect();
    throw Error(Errc::ProtocolError, "decision server rejected frame: " + r.msg);
  }
  if (r.seq != seq) {
    disconnect();
    throw Error(Errc::ProtocolError, "reply sequence " + std::to_string(r.seq) + " != " + std::to_string(seq));
  }
  return r;
}

std::size_t window_count(std::size_t n_samples, std::size_t window, std::size_t hop) {
  if (window == 0 || hop == 0) throw Error(Errc::InvalidParams, "window and hop must be positive");
  if (n_samples <= window) return 1;
  return 1 + (n_samples - window) / hop;
}

namespace {

struct Outbox {
  std::deque<std::pair<Classification, std::uint64_t>> pending;
  std::size_t cap;

  void flush(Endpoint& endpoint, StreamReport& report) {
    while (!pending.empty()) {
      Reply r;
      try {
        r = endpoint.deliver(pending.front().first, pending.front().second);
      } catch (const Error& e) {
        if (e.code() != Errc::ConnectionLost) throw;
        return;
      }
      pending.pop_front();
      ++report.sent;
      if (r.type == "alert") ++report.alerts;
      report.replies.push_back(std::move(r));
    }
  }

  void push(Classification c, std::uint64_t seq, StreamReport& report) {
    pending.emplace_back(std::move(c), seq);
    while (pending.size() > cap) {
      pending.pop_front();
      ++report.dropped;
    }
  }
};

}  // namespace

StreamReport run_stream_specs(std::span<const dsp::MelSpec> windows, const model::Model& detector,
                              const model::Model& typer, Endpoint& endpoint, const StreamOptions& options) {
  StreamReport report;
  report.windows = windows.size();
  Outbox outbox{{}, options.buffer_cap};
  std::uint64_t seq = 0;
  const auto hop_ms = static_cast<std::uint64_t>(std::llround(options.hop_s * 1000.0));
  for (std::size_t w = 0; w < windows.size(); ++w) {
    const auto t0 = std::chrono::steady_clock::now();
    const WindowInfo info{options.stream_id, w, w * hop_ms};
    const auto chain = classify_window(detector, typer, windows[w], info, options.detector_id, options.typer_id);
    report.local_events.push_back(decide(chain, options.policy));
    for (const auto& c : chain) {
      report.classifications.push_back(c);
      outbox.push(c, ++seq, report);
    }
    outbox.flush(endpoint, report);
    report.window_ms.push_back(
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
  }
  outbox.flush(endpoint, report);
  report.unsent = outbox.pending.size();
  return report;
}

StreamReport run_stream(const audio::AudioClip& source, const model::Model& detector, const model::Model& typer,
                        Endpoint& endpoint, const StreamOptions& options) {
  if (!(options.window_s > 0.0) || !(options.hop_s > 0.0)) {
    throw Error(Errc::InvalidParams, "window and hop must be positive");
  }
  const audio::AudioClip clip = audio::resample(source, audio::kCanonicalRateHz);
  const auto win = static_cast<std::size_t>(std::llround(options.window_s * audio::kCanonicalRateHz));
  const auto hop = static_cast<std::size_t>(std::llround(options.hop_s * audio::kCanonicalRateHz));
  const std::size_t count = window_count(clip.samples.size(), win, hop);
  std::vector<dsp::MelSpec> specs;
  specs.reserve(count);
  for (std::size_t w = 0; w < count; ++w) {
    audio::AudioClip piece;
    piece.sample_rate_hz = clip.sample_rate_hz;
    const std::size_t start = std::min(clip.samples.size(), w * hop);
    const std::size_t end = std::min(clip.samples.size(), start + win);
    piece.samples.assign(clip.samples.begin() + static_cast<std::ptrdiff_t>(start),
                         clip.samples.begin() + static_cast<std::ptrdiff_t>(end));
    specs.push_back(dsp::melspectrogram(piece, dsp::MelOptions{true, options.window_s}));
  }
  return run_stream_specs(specs, detector, typer, endpoint, options);
}

StreamReport run_stream_file(const std::filesystem::path& wav, const model::Model& detector,
                             const model::Model& typer, Endpoint& endpoint, const StreamOptions& options) {
  audio::AudioClip clip;
  try {
    clip = audio::read_wav(wav);
  } catch (const Error& e) {
    throw Error(Errc::SourceError, "cannot read stream source " + wav.string() + ": " + e.what());
  }
  if (clip.samples.empty()) throw Error(Errc::SourceError, "stream source " + wav.string() + " is empty");
  return run_stream(clip, detector, typer, endpoint, options);
}

}  // namespace screamkd::edge
