#include "commands.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <optional>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "palmpipe/bench.hpp"
#include "palmpipe/eval.hpp"
#include "palmpipe/wire.hpp"

#ifdef PALMPIPE_WITH_SERVER
#include "server.hpp"
#endif

namespace palmpipe::cli {

namespace {

struct Globals {
  std::string config;
  std::string log_level = "info";
};

struct DisplayArgs {
  std::string fusion = "max";
  std::string ordering = "mask-first";
};

struct GenArgs {
  std::string out;
  int n_reps = 36;
  std::uint64_t seed = 0;
  double noise = 0.15;
};

struct TrainArgs {
  std::string data;
  std::string out;
  std::string history;
  int epochs = 50;
  std::uint64_t seed = 0;
  int batch_size = 64;
  double lr = 0.01;
};

struct RunArgs {
  std::string mode = "direct";
  std::string ckpt;
  double duration = 10.0;
  std::string log;
  std::string report;
  std::uint64_t seed = 0;
  double noise = 0.15;
};

struct StudyArgs {
  std::string ckpt;
  int trials = 500;
  double noise = 0.0;
  std::string out;
  std::uint64_t seed = 0;
};

struct BenchArgs {
  std::string ckpt;
  std::uint64_t ticks = 3000;
  std::uint64_t seed = 0;
  std::string json;
};

struct ServeArgs {
  int port = 8080;
  std::string host = "127.0.0.1";
  std::string ckpt;
  std::string static_root = "sandbox_ui/dist";
  std::uint64_t seed = 0;
  double noise = 0.15;
};

struct MasksArgs {
  std::string out;
};

struct Options {
  Globals globals;
  DisplayArgs display;
  GenArgs gen;
  TrainArgs train;
  RunArgs run;
  StudyArgs study;
  BenchArgs bench;
  ServeArgs serve;
  MasksArgs masks;
};

void add_display_flags(CLI::App* sub, DisplayArgs& d) {
  sub->add_option("--fusion", d.fusion, "Finger merge: max (element-wise max of both fingers) or a (finger A only)")
      ->check(CLI::IsMember({"max", "a"}))
      ->capture_default_str();
  sub->add_option("--ordering", d.ordering,
                  "Masked rendering order: mask-first (AND then row peak) or peak-first")
      ->check(CLI::IsMember({"mask-first", "peak-first"}))
      ->capture_default_str();
}

std::unique_ptr<CLI::App> build_app(Options& o) {
  auto app = std::make_unique<CLI::App>("palmpipe: tactile tilt/position rendering pipeline", "palmpipe");
  app->require_subcommand(1);
  app->add_option("--config", o.globals.config,
                  "Plain `key = value` file; keys are long flag names or display geometry keys "
                  "(l1..l5, x_presets, y_retracted, y_engaged, branch_a, branch_e). Flags win over it.");
  app->add_option("--log-level", o.globals.log_level, "trace, debug, info, warn, error or off")
      ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "off"}))
      ->capture_default_str();

  auto* gen = app->add_subcommand("gen", "Generate the synthetic grip dataset");
  gen->add_option("--out", o.gen.out, "Dataset file to write")->required();
  gen->add_option("--n-reps", o.gen.n_reps, "Repetitions per (pattern, grip step) configuration")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  gen->add_option("--seed", o.gen.seed, "Random seed")->capture_default_str();
  gen->add_option("--noise", o.gen.noise, "Per-cell Gaussian noise sigma in N")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();

  auto* train = app->add_subcommand("train", "Split a dataset 0.5/0.25/0.25 and train the classifier");
  train->add_option("--data", o.train.data, "Dataset file from `gen`")->required();
  train->add_option("--out", o.train.out, "Checkpoint file to write")->required();
  train->add_option("--history", o.train.history, "Per-epoch history CSV (default: <out>.history.csv)");
  train->add_option("--epochs", o.train.epochs, "Training epochs")->check(CLI::PositiveNumber)->capture_default_str();
  train->add_option("--seed", o.train.seed, "Seed for the split, initialization and shuffling")
      ->capture_default_str();
  train->add_option("--batch-size", o.train.batch_size, "Minibatch size")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  train->add_option("--lr", o.train.lr, "Initial learning rate")->check(CLI::PositiveNumber)->capture_default_str();

  auto* run = app->add_subcommand("run", "Run the 60 Hz loop against the scripted synthetic sensor");
  run->add_option("--mode", o.run.mode, "direct or masked")
      ->check(CLI::IsMember({"direct", "masked"}))
      ->capture_default_str();
  run->add_option("--ckpt", o.run.ckpt, "Checkpoint (required for masked mode)");
  run->add_option("--duration", o.run.duration, "Run length in seconds")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  run->add_option("--log", o.run.log, "Snapshot log, one JSON record per tick");
  run->add_option("--report", o.run.report, "Also write the JSON run report to this file");
  run->add_option("--seed", o.run.seed, "Sensor noise seed")->capture_default_str();
  run->add_option("--noise", o.run.noise, "Sensor noise sigma in N")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  add_display_flags(run, o.display);

  auto* study = app->add_subcommand("study", "Machine-observer perception study, direct vs masked");
  study->add_option("--ckpt", o.study.ckpt, "Trained checkpoint")->required();
  study->add_option("--trials", o.study.trials, "Trials per pattern")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  study->add_option("--noise", o.study.noise, "Sensor noise sigma in N")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  study->add_option("--out", o.study.out, "Report file (default: stdout)");
  study->add_option("--seed", o.study.seed, "Trial seed")->capture_default_str();
  add_display_flags(study, o.display);

  auto* bench = app->add_subcommand("bench", "Per-stage tick latency in both modes");
  bench->add_option("--ticks", o.bench.ticks, "Ticks per mode")->check(CLI::PositiveNumber)->capture_default_str();
  bench->add_option("--ckpt", o.bench.ckpt, "Checkpoint (default: untrained weights, same cost)");
  bench->add_option("--seed", o.bench.seed, "Sensor noise seed")->capture_default_str();
  bench->add_option("--json", o.bench.json, "Also write the results as JSON");
  add_display_flags(bench, o.display);

#ifdef PALMPIPE_WITH_SERVER
  auto* serve = app->add_subcommand("serve", "Serve the sandbox UI and the /ws tick stream");
  serve->add_option("--port", o.serve.port, "TCP port (0 picks a free one)")
      ->check(CLI::Range(0, 65535))
      ->capture_default_str();
  serve->add_option("--host", o.serve.host, "Listen address")->capture_default_str();
  serve->add_option("--ckpt", o.serve.ckpt, "Checkpoint (without it clients may only use direct mode)");
  serve->add_option("--static", o.serve.static_root, "Directory with the built UI")->capture_default_str();
  serve->add_option("--seed", o.serve.seed, "Sensor noise seed")->capture_default_str();
  serve->add_option("--noise", o.serve.noise, "Sensor noise sigma in N")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  add_display_flags(serve, o.display);
#endif

  auto* masks = app->add_subcommand("masks", "Print the 12 pattern masks as 0/1 rows");
  masks->add_option("--out", o.masks.out, "Write to this file instead of stdout");
  return app;
}

bool flag_given(const std::vector<std::string>& args, const std::string& flag) {
  for (const auto& a : args) {
    if (a == flag || a.rfind(flag + "=", 0) == 0) return true;
  }
  return false;
}

/// Pulls `--config` out of the raw arguments before the real parse.
std::optional<std::string> find_config(const std::vector<std::string>& args) {
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config") {
      if (i + 1 >= args.size()) throw ArgumentError("--config needs a path");
      return args[i + 1];
    }
    if (args[i].rfind("--config=", 0) == 0) return args[i].substr(9);
  }
  return std::nullopt;
}

std::optional<std::string> find_subcommand(const CLI::App& app, const std::vector<std::string>& args) {
  for (const auto& a : args) {
    for (const auto* sub : app.get_subcommands({})) {
      if (sub->get_name() == a) return a;
    }
  }
  return std::nullopt;
}

/// Appends config-file values for flags the user did not pass and returns
/// the display geometry keys for the pipeline.
KeyValues merge_config(const CLI::App& app, std::vector<std::string>& args) {
  const auto path = find_config(args);
  if (!path) return {};
  KeyValues kv;
  try {
    kv = load_key_values(*path);
  } catch (const std::exception& e) {
    throw ArgumentError(std::string("config: ") + e.what());
  }
  const auto sub_name = find_subcommand(app, args);
  KeyValues display;
  std::vector<std::string> extra;
  for (const auto& [key, value] : kv) {
    if (is_display_config_key(key)) {
      display.emplace(key, value);
      continue;
    }
    std::string name = key;
    std::replace(name.begin(), name.end(), '_', '-');
    const std::string flag = "--" + name;
    bool known = flag == "--log-level";
    if (known && !flag_given(args, flag)) {
      extra.insert(extra.begin(), {flag, value});
    }
    for (const auto* sub : app.get_subcommands({})) {
      if (!sub->get_option_no_throw(flag)) continue;
      known = true;
      if (sub_name && sub->get_name() == *sub_name && !flag_given(args, flag)) {
        extra.push_back(flag);
        extra.push_back(value);
      }
    }
    if (!known) throw ArgumentError("config: unknown key '" + key + "'");
  }
  // Subcommand flags must follow the subcommand name; global ones lead.
  std::vector<std::string> lead, tail;
  for (std::size_t i = 0; i < extra.size(); i += 2) {
    auto& dst = extra[i] == "--log-level" ? lead : tail;
    dst.push_back(extra[i]);
    dst.push_back(extra[i + 1]);
  }
  args.insert(args.begin(), lead.begin(), lead.end());
  args.insert(args.end(), tail.begin(), tail.end());
  return display;
}

PipelineConfig pipeline_config(const DisplayArgs& d, const KeyValues& display_kv) {
  PipelineConfig pc;
  pc.fusion = d.fusion == "a" ? FingerFusion::FingerAOnly : FingerFusion::Max;
  try {
    pc.display = display_config_from(display_kv);
  } catch (const std::exception& e) {
    throw ArgumentError(std::string("display config: ") + e.what());
  }
  return pc;
}

PipelineMode masked_mode(const DisplayArgs& d) {
  return PipelineMode::masked(d.ordering == "peak-first" ? MaskOrdering::PeakFirst : MaskOrdering::MaskFirst);
}

std::shared_ptr<const cnn::ModelParams> load_model(const std::string& path) {
  auto p = std::make_shared<cnn::ModelParams>(cnn::load_checkpoint(path));
  spdlog::info("loaded checkpoint {}", path);
  return p;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  return f;
}

int cmd_gen(const GenArgs& a, std::ostream& out) {
  SimConfig sim;
  sim.reps_per_config = a.n_reps;
  sim.noise_sigma = a.noise;
  sim.validate();
  const Dataset d = generate_dataset(sim, a.seed);
  save_dataset(a.out, d);
  out << "wrote " << d.size() << " samples to " << a.out << '\n';
  return 0;
}

int cmd_train(const TrainArgs& a, std::ostream& out) {
  const Dataset d = load_dataset(a.data);
  auto [train_set, val_set, test_set] = split_dataset(d, {}, a.seed);
  spdlog::info("split {} samples: train {}, val {}, test {}", d.size(), train_set.size(), val_set.size(),
               test_set.size());
  cnn::TrainConfig tc;
  tc.epochs = a.epochs;
  tc.seed = a.seed;
  tc.batch_size = a.batch_size;
  tc.base_lr = a.lr;
  auto [model, history] = cnn::train(cnn::init_params({}, a.seed), train_set, val_set, tc,
                                     [&](const cnn::EpochRecord& r) {
                                       spdlog::info(
                                           "epoch {:3d}/{} loss {:.4f} val_loss {:.4f} val_acc angle {:.4f} "
                                           "position {:.4f} lr {:g}",
                                           r.epoch, tc.epochs, r.train_loss, r.val_loss, r.val_angle_accuracy,
                                           r.val_pos_accuracy, r.lr);
                                     });
  cnn::save_checkpoint(model, a.out);
  const std::string history_path = a.history.empty() ? a.out + ".history.csv" : a.history;
  {
    auto f = open_out(history_path);
    history.write_csv(f);
    if (!f) throw std::runtime_error("failed writing " + history_path);
  }
  const cnn::Evaluation ev = cnn::evaluate(model, test_set);
  out << "checkpoint = " << a.out << '\n';
  out << "history = " << history_path << '\n';
  out << std::fixed << std::setprecision(6);
  out << "test_samples = " << test_set.size() << '\n';
  out << "test_angle_accuracy = " << ev.angle_accuracy << '\n';
  out << "test_position_accuracy = " << ev.pos_accuracy << '\n';
  return 0;
}

int cmd_run(const RunArgs& a, const DisplayArgs& d, const KeyValues& display_kv, std::ostream& out) {
  const bool masked = a.mode == "masked";
  if (masked && a.ckpt.empty()) throw ArgumentError("--mode masked needs --ckpt");
  const PipelineConfig pc = pipeline_config(d, display_kv);
  auto model = a.ckpt.empty() ? nullptr : load_model(a.ckpt);
  const PipelineMode mode = masked ? masked_mode(d) : PipelineMode::direct();

  SimConfig sim;
  sim.noise_sigma = a.noise;
  Pipeline pipeline(pc, model);
  SyntheticSource source(sim, a.seed);
  std::ofstream log;
  SnapshotSink sink;
  if (!a.log.empty()) {
    log = open_out(a.log);
    sink = wire::SnapshotLogWriter(log);
  }
  RunOptions ro;
  ro.duration_s = a.duration;
  const RunReport report = run(pipeline, source, mode, sink, ro);
  const auto json = wire::run_report_json(report);
  out << json.dump(2) << '\n';
  if (!a.report.empty()) {
    auto f = open_out(a.report);
    f << json.dump(2) << '\n';
  }
  if (report.starvation) spdlog::warn("source starvation: {} of {} ticks reused a frame", report.starved_ticks, report.ticks);
  if (report.sink_error) throw std::runtime_error("snapshot log: " + *report.sink_error);
  return 0;
}

int cmd_study(const StudyArgs& a, const DisplayArgs& d, const KeyValues& display_kv, std::ostream& out) {
  const PipelineConfig pc = pipeline_config(d, display_kv);
  auto model = load_model(a.ckpt);
  StudyConfig sc;
  sc.trials_per_pattern = a.trials;
  sc.noise_sigma = a.noise;
  sc.seed = a.seed;
  const StudyResult direct = machine_observer_study(model, PipelineMode::direct(), sc, pc);
  const StudyResult masked = machine_observer_study(model, masked_mode(d), sc, pc);
  if (a.out.empty()) {
    write_study_report(out, sc, direct, masked);
  } else {
    auto f = open_out(a.out);
    write_study_report(f, sc, direct, masked);
    out << std::fixed << std::setprecision(4) << "overall_rate_direct = " << direct.overall_rate << '\n'
        << "overall_rate_masked = " << masked.overall_rate << '\n'
        << "report = " << a.out << '\n';
  }
  return 0;
}

int cmd_bench(const BenchArgs& a, const DisplayArgs& d, const KeyValues& display_kv, std::ostream& out) {
  const PipelineConfig pc = pipeline_config(d, display_kv);
  std::shared_ptr<const cnn::ModelParams> model;
  if (a.ckpt.empty()) {
    spdlog::info("no --ckpt: masked mode runs untrained weights (identical cost)");
    model = std::make_shared<cnn::ModelParams>(cnn::init_params({}, a.seed));
  } else {
    model = load_model(a.ckpt);
  }
  Pipeline pipeline(pc, model);
  SyntheticSource source(SimConfig{}, a.seed);
  std::vector<BenchResult> results;
  results.push_back(bench_ticks(pipeline, source, PipelineMode::direct(), a.ticks));
  results.push_back(bench_ticks(pipeline, source, masked_mode(d), a.ticks));
  write_bench_table(out, results);
  if (!a.json.empty()) {
    wire::Json j = wire::Json::array();
    for (const auto& r : results) {
      wire::Json stages;
      for (const auto& s : r.stages) {
        stages[s.stage] = {{"p50", s.latency.p50}, {"p99", s.latency.p99}, {"max", s.latency.max}};
      }
      j.push_back({{"mode", to_string(r.mode)}, {"ticks", r.ticks}, {"stages_ms", stages}});
    }
    auto f = open_out(a.json);
    f << wire::Json{{"budget_ms", kTickBudgetMs}, {"results", j}}.dump(2) << '\n';
  }
  return 0;
}

#ifdef PALMPIPE_WITH_SERVER
int cmd_serve(const ServeArgs& a, const DisplayArgs& d, const KeyValues& display_kv, std::ostream& out) {
  server::ServeOptions so;
  so.host = a.host;
  so.port = static_cast<unsigned short>(a.port);
  so.static_root = a.static_root;
  so.seed = a.seed;
  so.sim.noise_sigma = a.noise;
  so.pipeline = pipeline_config(d, display_kv);
  auto model = a.ckpt.empty() ? nullptr : load_model(a.ckpt);
  if (!model) spdlog::warn("no --ckpt: clients can only use direct mode");
  server::SandboxServer srv(so, model);
  srv.start();
  out << "listening on http://" << a.host << ':' << srv.port() << " (ws: /ws)" << std::endl;
  srv.wait_for_signal();
  return 0;
}
#endif

int cmd_masks(const MasksArgs& a, std::ostream& out) {
  if (a.out.empty()) {
    write_mask_table(out);
    return 0;
  }
  auto f = open_out(a.out);
  write_mask_table(f);
  return 0;
}

void setup_logging(const std::string& level) {
  if (!spdlog::get("palmpipe")) {
    auto logger = spdlog::stderr_color_mt("palmpipe");
    spdlog::set_default_logger(logger);
  }
  spdlog::set_level(spdlog::level::from_str(level));
}

}  // namespace

int run_cli(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
  Options o;
  auto app = build_app(o);
  std::vector<std::string> args = raw_args;
  KeyValues display_kv;
  try {
    display_kv = merge_config(*app, args);
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app->parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app->exit(e, out, err);
    return code == 0 ? 0 : 2;
  } catch (const ArgumentError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
  setup_logging(o.globals.log_level);

  try {
    if (app->got_subcommand("gen")) return cmd_gen(o.gen, out);
    if (app->got_subcommand("train")) return cmd_train(o.train, out);
    if (app->got_subcommand("run")) return cmd_run(o.run, o.display, display_kv, out);
    if (app->got_subcommand("study")) return cmd_study(o.study, o.display, display_kv, out);
    if (app->got_subcommand("bench")) return cmd_bench(o.bench, o.display, display_kv, out);
#ifdef PALMPIPE_WITH_SERVER
    if (app->got_subcommand("serve")) return cmd_serve(o.serve, o.display, display_kv, out);
#endif
    if (app->got_subcommand("masks")) return cmd_masks(o.masks, out);
  } catch (const ArgumentError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  err << "error: no subcommand\n";
  return 2;
}

}  // namespace palmpipe::cli
