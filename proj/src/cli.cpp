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

#include "screamkd/cli.hpp"

#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"
#include "screamkd/data.hpp"
#include "screamkd/edge.hpp"
#include "screamkd/error.hpp"
#include "screamkd/eval.hpp"
#include "screamkd/kd.hpp"

namespace screamkd::cli {
namespace {

std::atomic<bool> g_interrupted{false};

extern "C" void on_signal(int) { g_interrupted = true; }

struct Global {
  std::uint64_t seed = 0;
  int threads = 1;
  bool deterministic = false;
  bool json = false;
};

struct SplitArgs {
  std::string manifest;
  std::string task = "detect";
  std::string split = "train";
  double train_fraction = 0.8;
  bool balance = false;
  bool no_stratify = false;
};

struct TrainArgs {
  SplitArgs data;
  std::string out;
  std::string log;
  kd::Hyperparams hyper;
  bool no_augment = false;
};

void add_split_options(CLI::App* cmd, SplitArgs& a, const std::string& default_split) {
  a.split = default_split;
  cmd->add_option("--manifest", a.manifest, "Manifest CSV")->required();
  cmd->add_option("--task", a.task, "detect (scream vs non-scream) or type (negative vs positive)")
      ->check(CLI::IsMember({"detect", "type"}));
  cmd->add_option("--split", a.split, "Records to use: train, test or all")
      ->check(CLI::IsMember({"train", "test", "all"}));
  cmd->add_option("--train-fraction", a.train_fraction, "Train share when splits are derived from the seed")
      ->check(CLI::Range(0.0, 1.0));
  cmd->add_flag("--balance", a.balance, "Balance the two classes before splitting");
  cmd->add_flag("--no-stratify", a.no_stratify, "Split without stratifying by class");
}

void add_train_options(CLI::App* cmd, TrainArgs& a) {
  add_split_options(cmd, a.data, "train");
  cmd->add_option("--out", a.out, "Output model (.skdm)")->required();
  cmd->add_option("--log", a.log, "Per-epoch JSON lines log");
  cmd->add_option("--lr", a.hyper.lr, "Adam learning rate")->check(CLI::NonNegativeNumber);
  cmd->add_option("--beta1", a.hyper.beta1, "Adam beta1")->check(CLI::Range(0.0, 0.999999));
  cmd->add_option("--beta2", a.hyper.beta2, "Adam beta2")->check(CLI::Range(0.0, 0.999999));
  cmd->add_option("--adam-eps", a.hyper.eps, "Adam epsilon")->check(CLI::PositiveNumber);
  cmd->add_option("--batch", a.hyper.batch_size, "Mini-batch size")->check(CLI::PositiveNumber);
  cmd->add_option("--epochs", a.hyper.epochs, "Maximum epochs")->check(CLI::NonNegativeNumber);
  cmd->add_option("--val-fraction", a.hyper.val_fraction, "Validation carve-out for early stopping")
      ->check(CLI::Range(0.0, 0.99));
  cmd->add_option("--patience", a.hyper.patience, "Early-stopping patience in epochs (0 = off)")
      ->check(CLI::NonNegativeNumber);
  cmd->add_option("--target-train-acc", a.hyper.target_train_acc, "Stop once train accuracy reaches this (0 = off)")
      ->check(CLI::Range(0.0, 1.0));
  cmd->add_flag("--no-augment", a.no_augment, "Disable waveform and spectrogram augmentation");
}

void use_threads(const Global& g) { nn::set_num_threads(g.deterministic ? 1 : std::max(1, g.threads)); }

data::Manifest select_records(const SplitArgs& a, std::uint64_t seed) {
  const data::Task task = data::parse_task(a.task);
  data::Manifest m = data::load_manifest(a.manifest).labeled(task);
  if (a.balance) {
    Rng rng(subseed(seed, "balance"));
    m = data::balance_binary(m, task, rng);
  }
  if (a.split == "all") return m;
  const bool tagged = !m.records.empty() && std::all_of(m.records.begin(), m.records.end(), [](const auto& r) {
    return r.split != data::Split::Unassigned;
  });
  if (!tagged) {
    data::SplitOptions opts;
    opts.train_fraction = a.train_fraction;
    opts.stratify = !a.no_stratify;
    opts.task = task;
    auto [train, test] = data::split(m, subseed(seed, "split"), opts);
    return a.split == "train" ? train : test;
  }
  return m.select(a.split == "train" ? data::Split::Train : data::Split::Test);
}

kd::TrainSet load_train_set(const SplitArgs& a, std::uint64_t seed) {
  const auto records = select_records(a, seed);
  auto clips = eval::load_clips(records, data::parse_task(a.task));
  return kd::TrainSet{std::move(clips.clips), std::move(clips.labels)};
}

void write_run_config(const std::string& model_path, const nlohmann::json& config) {
  std::ofstream out(model_path + ".config.json", std::ios::trunc);
  if (!out) throw Error(Errc::IoError, "cannot write run config next to " + model_path);
  out << config.dump(2) << '\n';
}

kd::EpochCallback epoch_logger(std::ostream& err, std::unique_ptr<kd::JsonlLog>& log, const std::string& path) {
  if (!path.empty()) log = std::make_unique<kd::JsonlLog>(path);
  kd::JsonlLog* raw = log.get();
  return [&err, raw](const kd::EpochRecord& r) {
    err << kd::epoch_to_json(r).dump() << '\n';
    if (raw != nullptr) (*raw)(r);
  };
}

nlohmann::json classification_json(const edge::Classification& c) {
  auto j = edge::classification_frame(c, 0);
  j.erase("v");
  j.erase("seq");
  j.erase("type");
  return j;
}

nlohmann::json typed(const std::string& text) {
  if (text == "true" || text == "false") return text == "true";
  if (!text.empty()) {
    char* end = nullptr;
    const long long i = std::strtoll(text.c_str(), &end, 10);
    if (*end == '\0') return i;
    const double d = std::strtod(text.c_str(), &end);
    if (*end == '\0') return d;
  }
  return text;
}

// CLI11 renders vector defaults as "[a,b,c]".
nlohmann::json typed_default(const std::string& text) {
  if (text.size() < 2 || text.front() != '[' || text.back() != ']') return typed(text);
  nlohmann::json arr = nlohmann::json::array();
  std::stringstream in(text.substr(1, text.size() - 2));
  std::string item;
  while (std::getline(in, item, ',')) arr.push_back(typed(item));
  return arr;
}

nlohmann::json option_values(const CLI::App& app) {
  nlohmann::json j = nlohmann::json::object();
  for (const CLI::Option* opt : app.get_options()) {
    if (opt->get_lnames().empty() || opt->get_lnames()[0] == "help" || opt->get_lnames()[0] == "config") continue;
    const std::string key = opt->get_lnames()[0];
    if (opt->count() > 0) {
      const auto& res = opt->results();
      if (opt->get_expected_max() == 0) {
        j[key] = true;
      } else if (res.size() == 1 && opt->get_expected_max() == 1) {
        j[key] = typed(res[0]);
      } else {
        nlohmann::json arr = nlohmann::json::array();
        for (const auto& r : res) arr.push_back(typed(r));
        j[key] = arr;
      }
    } else if (opt->get_expected_max() == 0) {
      j[key] = false;
    } else if (!opt->get_default_str().empty()) {
      j[key] = typed_default(opt->get_default_str());
    }
  }
  return j;
}

nlohmann::json resolved_config(const CLI::App& app) {
  nlohmann::json j = option_values(app);
  for (const CLI::App* sub : app.get_subcommands()) {
    j["command"] = sub->get_name();
    j[sub->get_name()] = option_values(*sub);
  }
  return {{"resolved_config", j}};
}

void print_error(std::ostream& err, const Global& g, const std::string& name, const std::string& msg) {
  if (g.json) {
    err << nlohmann::json{{"error", name}, {"message", msg}}.dump() << '\n';
  } else {
    err << "error: " << msg << '\n';
  }
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv;
  argv.push_back("screamkd");
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Scream detection and scream-type classification with knowledge distillation", "screamkd"};
  app.require_subcommand(1);
  app.set_config("--config", "", "TOML/INI config file; flags override it");
  app.option_defaults()->always_capture_default();
  Global g;
  app.add_option("--seed", g.seed, "Root seed for every random stream");
  app.add_option("--threads", g.threads, "BLAS worker threads")->check(CLI::PositiveNumber);
  app.add_flag("--deterministic", g.deterministic, "Serial execution");
  app.add_flag("--json", g.json, "Machine-readable JSON on stdout");

  // featurize
  std::string feat_in, feat_out;
  auto* featurize = app.add_subcommand("featurize", "WAV -> normalized 128-band mel spectrogram (MELF)");
  featurize->add_option("--in", feat_in, "Input WAV")->required();
  featurize->add_option("--out", feat_out, "Output MELF file")->required();

  // synth-data
  std::size_t synth_n = 64;
  std::string synth_out;
  double synth_scream = 0.5;
  auto* synth = app.add_subcommand("synth-data", "Generate the synthetic scream / non-scream corpus");
  synth->add_option("--n", synth_n, "Number of clips")->check(CLI::Range(2, 1000000));
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--scream-fraction", synth_scream, "Share of scream clips")->check(CLI::Range(0.0, 1.0));

  // train-teacher / distill
  TrainArgs teacher_args;
  auto* train_teacher = app.add_subcommand("train-teacher", "Train and freeze the ResNet18 teacher");
  add_train_options(train_teacher, teacher_args);

  TrainArgs distill_args;
  std::string distill_teacher;
  auto* distill = app.add_subcommand("distill", "Distill a frozen teacher into the student");
  add_train_options(distill, distill_args);
  distill->add_option("--teacher", distill_teacher, "Frozen teacher model")->required();
  distill->add_option("--alpha", distill_args.hyper.alpha, "Distillation weight in [0, 1]")->check(CLI::Range(0.0, 1.0));
  distill->add_option("--temp", distill_args.hyper.temperature, "Softmax temperature (> 0)")
      ->check(CLI::PositiveNumber);

  // eval
  SplitArgs eval_split;
  std::string eval_model, eval_noise_root, eval_snr = "5,10,15,20", eval_report, eval_name;
  std::vector<std::string> eval_categories = data::default_noise_categories();
  auto* evaluate = app.add_subcommand("eval", "Accuracy on clean (and optionally noisy) test records");
  evaluate->add_option("--model", eval_model, "Model file")->required();
  add_split_options(evaluate, eval_split, "test");
  evaluate->add_option("--noise-root", eval_noise_root, "Noise bank root (<root>/<category>/*.wav)");
  evaluate->add_option("--categories", eval_categories, "Noise categories")->delimiter(',');
  evaluate->add_option("--snr", eval_snr, "clean, a fixed dB value, or a comma list to draw from");
  evaluate->add_option("--report", eval_report, "Write the JSON report here");
  evaluate->add_option("--name", eval_name, "Row name for the reference table (default: model kind)");

  // bench
  std::vector<std::string> bench_models;
  int bench_trials = 100, bench_warmup = 10, bench_load_trials = 20;
  std::string bench_plot;
  auto* bench = app.add_subcommand("bench", "Load and forward latency, parameter counts and sizes");
  bench->add_option("--model", bench_models, "Model file (repeatable)")->required();
  bench->add_option("--trials", bench_trials, "Timed forward passes")->check(CLI::Range(10, 1000000));
  bench->add_option("--warmup", bench_warmup, "Untimed warmup passes")->check(CLI::NonNegativeNumber);
  bench->add_option("--load-trials", bench_load_trials, "Timed loads")->check(CLI::Range(10, 1000000));
  bench->add_option("--emit-plot-data", bench_plot, "CSV series for plotting");

  // embed
  std::string embed_model, embed_manifest, embed_out;
  auto* embed = app.add_subcommand("embed", "Export penultimate activations");
  embed->add_option("--model", embed_model, "Model file")->required();
  embed->add_option("--manifest", embed_manifest, "Manifest CSV")->required();
  embed->add_option("--out", embed_out, "Output MELF container")->required();

  // infer / stream
  std::string det_path, typ_path, wav_path, endpoint = "local", sink_file, stream_id = "stream-0";
  double window_s = 3.0, hop_s = 1.5, threshold = 0.5;
  auto* infer = app.add_subcommand("infer", "Classify one clip with both stages");
  auto* stream = app.add_subcommand("stream", "Slide windows over a WAV and send classifications");
  for (auto* cmd : {infer, stream}) {
    cmd->add_option("--detector", det_path, "Scream detection model")->required();
    cmd->add_option("--typer", typ_path, "Scream type model")->required();
    cmd->add_option("--wav", wav_path, "Input WAV")->required();
    cmd->add_option("--threshold", threshold, "Alert threshold on the negative score")->check(CLI::Range(0.0, 1.0));
  }
  stream->add_option("--endpoint", endpoint, "host:port of the decision server, or local");
  stream->add_option("--sink-file", sink_file, "Alert file when --endpoint local");
  stream->add_option("--stream-id", stream_id, "Stream identifier");
  stream->add_option("--window", window_s, "Window seconds")->check(CLI::PositiveNumber);
  stream->add_option("--hop", hop_s, "Hop seconds")->check(CLI::PositiveNumber);

  // serve
  std::string bind = "127.0.0.1:7878", serve_sink, webhook;
  bool serve_stdout = false;
  double serve_seconds = 0.0;
  auto* serve = app.add_subcommand("serve", "Decision server: newline-delimited JSON over TCP");
  serve->add_option("--bind", bind, "host:port to listen on");
  serve->add_option("--sink-file", serve_sink, "Append alerts here, one JSON object per line");
  serve->add_option("--webhook", webhook, "POST alerts to this http:// URL");
  serve->add_flag("--stdout-sink", serve_stdout, "Print alerts on stdout");
  serve->add_option("--threshold", threshold, "Alert threshold on the negative score")->check(CLI::Range(0.0, 1.0));
  serve->add_option("--duration", serve_seconds, "Stop after this many seconds (0 = until SIGINT/SIGTERM)")
      ->check(CLI::NonNegativeNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "UsageError: " << e.what() << '\n';
    const CLI::App* sub = nullptr;
    for (const CLI::App* s : app.get_subcommands()) sub = s;
    err << (sub != nullptr ? sub->help() : app.help());
    return kExitUsage;
  }

  err << resolved_config(app).dump() << '\n';

  try {
    use_threads(g);
    if (*featurize) {
      dsp::write_features(dsp::melspectrogram(audio::read_wav(feat_in)), feat_out);
      out << (g.json ? nlohmann::json{{"out", feat_out}}.dump() : "wrote " + feat_out) << '\n';
    } else if (*synth) {
      data::SynthOptions opts;
      opts.scream_fraction = synth_scream;
      const auto m = data::synth_dataset(synth_n, g.seed, synth_out, opts);
      const auto manifest_path = (std::filesystem::path(synth_out) / "manifest.csv").string();
      if (g.json) {
        out << nlohmann::json{{"records", m.size()}, {"manifest", manifest_path}}.dump() << '\n';
      } else {
        out << "wrote " << m.size() << " clips; manifest " << manifest_path << '\n';
      }
    } else if (*train_teacher || *distill) {
      TrainArgs& a = *train_teacher ? teacher_args : distill_args;
      a.hyper.seed = g.seed;
      a.hyper.augment = !a.no_augment;
      a.hyper.validate();
      const kd::TrainSet set = load_train_set(a.data, g.seed);
      std::unique_ptr<kd::JsonlLog> log;
      const auto on_epoch = epoch_logger(err, log, a.log);
      kd::TrainResult result;
      if (*train_teacher) {
        result = kd::train_teacher(set, a.hyper, on_epoch);
      } else {
        const model::Model teacher = model::load_model(distill_teacher);
        result = kd::distill(teacher, set, a.hyper, on_epoch);
      }
      result.model.metadata["task"] = a.data.task;
      model::save_model(result.model, a.out);
      nlohmann::json config = {{"command", *train_teacher ? "train-teacher" : "distill"},
                               {"manifest", a.data.manifest},
                               {"task", a.data.task},
                               {"split", a.data.split},
                               {"records", set.size()},
                               {"seed", g.seed},
                               {"hyperparams", kd::hyperparams_to_json(a.hyper)}};
      if (*distill) config["teacher"] = distill_teacher;
      write_run_config(a.out, config);
      const nlohmann::json summary = {{"model", a.out},
                                      {"epochs", result.history.epochs()},
                                      {"best_epoch", result.history.best_epoch},
                                      {"final_train_acc", result.history.train_acc.empty()
                                                              ? 0.0
                                                              : result.history.train_acc.back()}};
      out << (g.json ? summary.dump() : "saved " + a.out + " after " + std::to_string(result.history.epochs()) +
                                            " epochs")
          << '\n';
    } else if (*evaluate) {
      const model::Model m = model::load_model(eval_model);
      const data::Task task = data::parse_task(eval_split.task);
      const auto records = select_records(eval_split, g.seed);
      const auto clips = eval::load_clips(records, task);
      const eval::Metrics clean = eval::evaluate_clips(m, clips);
      const std::string name = eval_name.empty() ? std::string(model::kind_name(m.config.kind)) : eval_name;
      nlohmann::json report = {{"model", eval_model},      {"name", name},
                               {"task", eval_split.task},  {"split", eval_split.split},
                               {"clean", eval::metrics_to_json(clean)}};
      std::vector<eval::AccuracyRow> rows{{name, task, 100.0 * clean.accuracy, false}};
      if (!eval_noise_root.empty()) {
        const auto bank = data::build_noise_bank(eval_noise_root, eval_categories);
        const auto noisy = eval::evaluate_noisy(m, records, bank, eval_categories, eval::parse_snr_policy(eval_snr),
                                                subseed(g.seed, "noise"), task);
        nlohmann::json per;
        for (const auto& [cat, met] : noisy.per_category) per[cat] = eval::metrics_to_json(met);
        report["noisy"] = {{"snr", eval_snr}, {"pooled", eval::metrics_to_json(noisy.pooled)}, {"categories", per}};
        rows.push_back({name, task, 100.0 * noisy.pooled.accuracy, true});
      }
      if (!eval_report.empty()) {
        std::ofstream f(eval_report, std::ios::trunc);
        if (!f) throw Error(Errc::IoError, "cannot write " + eval_report);
        f << report.dump(2) << '\n';
      }
      if (g.json) {
        out << report.dump() << '\n';
      } else {
        out << eval::render_accuracy_table(rows);
        out << "accuracy: " << report["clean"]["accuracy_pct"].get<std::string>() << "% (n=" << clean.n << ")\n";
      }
    } else if (*bench) {
      std::vector<eval::LatencyReport> reports;
      nlohmann::json all = nlohmann::json::array();
      std::vector<std::pair<std::string, eval::SizeReport>> sizes;
      for (const auto& path : bench_models) {
        const model::Model m = model::load_model(path);
        const auto fwd = eval::bench_forward(m, {1, static_cast<std::size_t>(m.config.in_channels), 128, 188},
                                             bench_trials, bench_warmup);
        const auto load = eval::bench_load(path, bench_load_trials);
        eval::LatencyReport r = fwd;
        r.load_ms = load.load_ms;
        r.label = std::string(model::kind_name(m.config.kind));
        reports.push_back(r);
        const auto size = eval::size_report(m);
        sizes.emplace_back(r.label, size);
        nlohmann::json j = eval::latency_to_json(r);
        j["model"] = path;
        j["size"] = eval::size_to_json(size);
        all.push_back(j);
      }
      if (!bench_plot.empty()) {
        std::ofstream f(bench_plot, std::ios::trunc);
        if (!f) throw Error(Errc::IoError, "cannot write " + bench_plot);
        f << eval::latency_plot_csv(reports);
      }
      out << (all.size() == 1 ? all[0] : all).dump(2) << '\n';
      if (!g.json) err << eval::render_latency_table(reports) << eval::render_size_table(sizes);
    } else if (*embed) {
      const model::Model m = model::load_model(embed_model);
      const std::size_t rows = eval::export_embeddings(m, data::load_manifest(embed_manifest), embed_out);
      out << (g.json ? nlohmann::json{{"rows", rows}, {"out", embed_out}}.dump()
                     : "wrote " + std::to_string(rows) + " embeddings to " + embed_out)
          << '\n';
    } else if (*infer) {
      const model::Model det = model::load_model(det_path);
      const model::Model typ = model::load_model(typ_path);
      const auto spec = dsp::melspectrogram(audio::read_wav(wav_path));
      const auto chain = edge::classify_window(det, typ, spec);
      edge::Policy policy;
      policy.threshold = threshold;
      nlohmann::json j = {{"classifications", nlohmann::json::array()},
                          {"decision", edge::decision_to_json(edge::decide(chain, policy))}};
      for (const auto& c : chain) j["classifications"].push_back(classification_json(c));
      out << j.dump(g.json ? -1 : 2) << '\n';
    } else if (*stream) {
      const model::Model det = model::load_model(det_path);
      const model::Model typ = model::load_model(typ_path);
      edge::StreamOptions opts;
      opts.stream_id = stream_id;
      opts.window_s = window_s;
      opts.hop_s = hop_s;
      opts.policy.threshold = threshold;
      opts.detector_id = std::filesystem::path(det_path).filename().string();
      opts.typer_id = std::filesystem::path(typ_path).filename().string();
      std::unique_ptr<edge::Endpoint> ep;
      if (endpoint == "local") {
        std::vector<std::shared_ptr<edge::AlertSink>> sinks;
        if (!sink_file.empty()) sinks.push_back(std::make_shared<edge::FileSink>(sink_file));
        ep = std::make_unique<edge::LocalEndpoint>(opts.policy, sinks);
      } else {
        const auto [host, port] = edge::parse_host_port(endpoint);
        ep = std::make_unique<edge::TcpEndpoint>(host, port);
      }
      const auto report = edge::run_stream_file(wav_path, det, typ, *ep, opts);
      nlohmann::json j = {{"windows", report.windows}, {"sent", report.sent},     {"alerts", report.alerts},
                          {"dropped", report.dropped}, {"unsent", report.unsent}, {"window_ms", report.window_ms},
                          {"classifications", nlohmann::json::array()}};
      for (const auto& c : report.classifications) j["classifications"].push_back(classification_json(c));
      out << j.dump(g.json ? -1 : 2) << '\n';
    } else if (*serve) {
      std::vector<std::shared_ptr<edge::AlertSink>> sinks;
      if (!serve_sink.empty()) sinks.push_back(std::make_shared<edge::FileSink>(serve_sink));
      if (serve_stdout) sinks.push_back(std::make_shared<edge::StreamSink>(out));
      if (!webhook.empty()) sinks.push_back(std::make_shared<edge::WebhookSink>(webhook));
      edge::ServerOptions opts;
      opts.bind = bind;
      opts.policy.threshold = threshold;
      edge::DecisionServer server(opts, sinks);
      server.start();
      err << "listening on port " << server.port() << std::endl;
      g_interrupted = false;
      auto old_int = std::signal(SIGINT, on_signal);
      auto old_term = std::signal(SIGTERM, on_signal);
      const auto t0 = std::chrono::steady_clock::now();
      while (!g_interrupted) {
        if (serve_seconds > 0.0 &&
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() >= serve_seconds) {
          break;
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(50));
      }
      std::signal(SIGINT, old_int);
      std::signal(SIGTERM, old_term);
      server.stop();
      const auto s = server.stats();
      err << nlohmann::json{{"connections", s.connections}, {"frames", s.frames}, {"alerts", s.alerts},
                            {"errors", s.errors}}
                 .dump()
          << '\n';
    }
  } catch (const Error& e) {
    print_error(err, g, std::string(errc_name(e.code())), e.what());
    return e.code() == Errc::UsageError ? kExitUsage : kExitDomainError;
  } catch (const std::exception& e) {
    print_error(err, g, "InternalError", e.what());
    return kExitDomainError;
  }
  return kExitOk;
}

}  // namespace screamkd::cli
