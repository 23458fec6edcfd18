#include "cli.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <mutex>
#include <thread>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "laneintent/config.hpp"
#include "laneintent/dataset_io.hpp"
#include "laneintent/evaluation.hpp"
#include "laneintent/pipeline.hpp"
#include "laneintent/session_server.hpp"

namespace laneintent::cli {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Context {
  Seed seed;
  fs::path out_dir;
  std::string config_path;
  RunConfig config;
};

RunConfig load_run_config(const std::string& path) {
  if (path.empty()) return default_config();
  const std::string text = read_text_file(path);
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{') {
    const auto j = json::parse(text, nullptr, false);
    if (!j.is_discarded() && j.is_object() && j.value("format", "") == "laneintent-run") {
      if (!j.contains("config")) throw ConfigError("run manifest " + path + " has no 'config'");
      return parse_config(j["config"].dump(), path + "#config");
    }
  }
  return parse_config(text, path);
}

std::string file_digest(const fs::path& p) { return fnv1a_hex(read_text_file(p)); }

void write_json(const fs::path& path, const json& j) { write_text_file(path, j.dump(2) + "\n"); }

void write_run_manifest(const Context& ctx, std::string_view command, json arguments,
                        json inputs) {
  json j;
  j["format"] = "laneintent-run";
  j["version"] = 1;
  j["command"] = command;
  j["seed"] = ctx.seed.value;
  j["arguments"] = std::move(arguments);
  j["inputs"] = std::move(inputs);
  j["config_source"] = ctx.config_path.empty() ? "<built-in default>" : ctx.config_path;
  j["config_digest"] = ctx.config.digest();
  j["config"] = ctx.config.to_json();
  write_json(ctx.out_dir / "run_manifest.json", j);
}

/// Trace files of a directory in name order (label logs excluded).
std::vector<fs::path> list_traces(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw std::runtime_error("trace directory not found: " + dir.string());
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    const auto name = e.path().filename().string();
    if (!e.is_regular_file() || e.path().extension() != ".jsonl") continue;
    if (name.size() > 13 && name.ends_with(".labels.jsonl")) continue;
    out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::string directory_digest(const std::vector<fs::path>& files) {
  std::string acc;
  for (const auto& f : files) acc += f.filename().string() + ":" + file_digest(f) + "\n";
  return fnv1a_hex(acc);
}

// ---------------------------------------------------------------------------

struct GenerateArgs {
  int episodes = 0;
  int threads = 0;
  bool force = false;
};

int cmd_generate(Context& ctx, const GenerateArgs& args) {
  if (args.episodes < 0) throw UsageError("--episodes must be >= 0");
  if (args.episodes > 0) ctx.config.batch.episodes_per_profile = args.episodes;
  const RunConfig& cfg = ctx.config;
  const auto plans = plan_batch(cfg, ctx.seed);

  const fs::path traces_dir = ctx.out_dir / "traces";
  if (fs::exists(traces_dir) && !fs::is_empty(traces_dir)) {
    if (!args.force) {
      throw std::runtime_error(traces_dir.string() +
                               " is not empty; use --force to replace it or pick another --out-dir");
    }
    fs::remove_all(traces_dir);
  }
  fs::create_directories(traces_dir);

  std::vector<ProfileSummary> per_episode(plans.size());
  std::atomic<std::size_t> next{0};
  std::mutex error_mutex;
  std::exception_ptr error;
  auto worker = [&] {
    for (std::size_t i = next++; i < plans.size(); i = next++) {
      try {
        const Trace t = run_planned_episode(cfg, plans[i]);
        write_trace(t, traces_dir / (t.episode_id + ".jsonl"));
        tally(t, per_episode[i]);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        next = plans.size();
      }
    }
  };
  unsigned n_threads = args.threads > 0 ? static_cast<unsigned>(args.threads)
                                        : std::max(1u, std::thread::hardware_concurrency());
  n_threads = std::min<unsigned>(n_threads, static_cast<unsigned>(std::max<std::size_t>(plans.size(), 1)));
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < n_threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);

  std::vector<ProfileSummary> profiles(cfg.profiles.size());
  for (std::size_t i = 0; i < plans.size(); ++i) {
    auto& p = profiles[plans[i].profile_index];
    const auto& e = per_episode[i];
    p.driver_id = cfg.profiles[plans[i].profile_index].name;
    p.episodes += e.episodes;
    p.collisions += e.collisions;
    p.ticks += e.ticks;
    p.lane_changes_started += e.lane_changes_started;
    p.lane_changes_completed += e.lane_changes_completed;
    p.aborts += e.aborts;
  }
  write_manifest(split_for(plans, cfg, ctx.seed), ctx.out_dir / "split.json");
  write_json(ctx.out_dir / "summary.json",
             {{"episodes", plans.size()}, {"profiles", summary_json(profiles)}});
  write_run_manifest(ctx, "generate", {{"episodes_per_profile", cfg.batch.episodes_per_profile}},
                     json::object());

  for (const auto& p : profiles) {
    std::printf("%-10s episodes %4zu  lane changes completed %4zu  started %4zu  aborts %3zu  collisions %3zu\n",
                p.driver_id.c_str(), p.episodes, p.lane_changes_completed, p.lane_changes_started,
                p.aborts, p.collisions);
  }
  std::printf("wrote %zu traces to %s\n", plans.size(), traces_dir.string().c_str());
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct FeaturizeArgs {
  std::string traces;
  std::string split;
};

int cmd_featurize(Context& ctx, const FeaturizeArgs& args) {
  const auto files = list_traces(args.traces);
  if (files.empty()) throw std::runtime_error("no trace files in " + args.traces);

  SplitManifest manifest;
  bool derived_split = false;
  if (!args.split.empty()) {
    manifest = read_manifest(args.split);
  } else {
    std::vector<EpisodeRef> refs;
    for (const auto& f : files) {
      const Trace t = read_trace(f);
      refs.push_back({t.episode_id, t.driver_id});
    }
    manifest = make_split(std::move(refs), split_seed(ctx.seed), ctx.config.batch.train_fraction);
    derived_split = true;
  }

  DatasetBuilder builder(ctx.config.sensor, ctx.config.geometry, manifest);
  std::size_t ticks_included = 0;
  for (const auto& f : files) {
    const Trace t = read_trace(f);
    if (!t.collided && !t.partial) ticks_included += t.records.size();
    builder.add(t);
  }
  DatasetBundle bundle = std::move(builder).finish();

  fs::create_directories(ctx.out_dir);
  write_feature_table(bundle.train, ctx.out_dir / "train.csv");
  write_feature_table(bundle.test, ctx.out_dir / "test.csv");
  write_normalizer(bundle.normalizer, ctx.out_dir / "normalizer.json");
  if (derived_split) write_manifest(manifest, ctx.out_dir / "split.json");

  write_json(ctx.out_dir / "summary.json", {{"traces", files.size()},
                                            {"included_traces", bundle.included_traces},
                                            {"excluded_traces", bundle.excluded_traces},
                                            {"included_ticks", ticks_included},
                                            {"train_rows", bundle.train.rows()},
                                            {"test_rows", bundle.test.rows()}});
  json inputs{{"traces", {{"path", args.traces}, {"digest", directory_digest(files)}}}};
  if (!args.split.empty()) inputs["split"] = {{"path", args.split}, {"digest", file_digest(args.split)}};
  write_run_manifest(ctx, "featurize", {{"traces", args.traces}, {"split", args.split}}, inputs);

  std::printf("traces %zu (excluded %zu)  train rows %zu  test rows %zu\n", files.size(),
              bundle.excluded_traces, bundle.train.rows(), bundle.test.rows());
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string dataset;
  std::string normalizer;
  std::string algo;
  bool per_driver = false;
  std::size_t cv_stride = TrainingBudget{}.cv_stride;
  std::size_t fit_stride = TrainingBudget{}.fit_stride;
  int folds = kDefaultFolds;
};

json cv_json(const CvResult& cv, ModelKind kind) {
  json points = json::array();
  for (const auto& p : cv.points) {
    points.push_back({{"params", hyper_to_json(kind, p.params)},
                      {"fold_scores", p.fold_scores},
                      {"mean_score", p.mean_score}});
  }
  return {{"best", hyper_to_json(kind, cv.best)}, {"points", points}};
}

int cmd_train(Context& ctx, const TrainArgs& args) {
  ModelKind kind;
  try {
    kind = parse_model_kind(args.algo);
  } catch (const DomainError& e) {
    throw UsageError(e.what());
  }
  if (args.cv_stride == 0 || args.fit_stride == 0) throw UsageError("strides must be >= 1");
  if (args.folds < 2) throw UsageError("--folds must be >= 2");

  const LabeledDataset data = read_feature_table(args.dataset);
  fs::path norm_path = args.normalizer;
  if (norm_path.empty()) {
    const auto sibling = fs::path(args.dataset).parent_path() / "normalizer.json";
    if (fs::exists(sibling)) norm_path = sibling;
  }
  const Normalizer normalizer = norm_path.empty() ? Normalizer{} : read_normalizer(norm_path);
  const TrainingBudget budget{args.cv_stride, args.fit_stride, args.folds};
  const std::string algo(model_kind_name(kind));

  fs::create_directories(ctx.out_dir / "models");
  json models = json::array();
  json cvs = json::array();
  auto fit_one = [&](const LabeledDataset& rows, const std::string& driver, Seed seed) {
    TrainedModel tm = fit_with_cv(rows, normalizer, kind, seed, budget);
    tm.model.driver_id = driver;
    const std::string name = driver.empty() ? algo : algo + "_" + driver;
    const fs::path path = ctx.out_dir / "models" / (name + ".json");
    save_model(tm.model, path);
    models.push_back({{"driver_id", driver},
                      {"path", fs::path("models") / (name + ".json")},
                      {"rows", rows.rows()},
                      {"cv_score", tm.cv.points.empty() ? 0.0 : [&] {
                         double best = 0.0;
                         for (const auto& p : tm.cv.points) best = std::max(best, p.mean_score);
                         return best;
                       }()},
                      {"converged", tm.model.converged}});
    json c = cv_json(tm.cv, kind);
    c["driver_id"] = driver;
    cvs.push_back(std::move(c));
    std::printf("%s%s%s: rows %zu  cv best %.4f\n", algo.c_str(), driver.empty() ? "" : " ",
                driver.c_str(), rows.rows(), models.back()["cv_score"].get<double>());
  };

  if (args.per_driver) {
    for (std::size_t i = 0; i < data.driver_names.size(); ++i) {
      const auto rows = data.for_driver(data.driver_names[i]);
      if (rows.rows() == 0) continue;
      fit_one(rows, data.driver_names[i], derive_seed(ctx.seed, i));
    }
  } else {
    fit_one(data, "", ctx.seed);
  }

  write_json(ctx.out_dir / "cv.json", cvs);
  write_json(ctx.out_dir / "summary.json", {{"algorithm", algo}, {"models", models}});
  json inputs{{"dataset", {{"path", args.dataset}, {"digest", file_digest(args.dataset)}}}};
  if (!norm_path.empty()) {
    inputs["normalizer"] = {{"path", norm_path.string()}, {"digest", file_digest(norm_path)}};
  }
  write_run_manifest(ctx, "train",
                     {{"dataset", args.dataset},
                      {"normalizer", norm_path.string()},
                      {"algo", algo},
                      {"per_driver", args.per_driver},
                      {"cv_stride", args.cv_stride},
                      {"fit_stride", args.fit_stride},
                      {"folds", args.folds}},
                     inputs);
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct EvalArgs {
  std::vector<std::string> models;
  std::string dataset;
  std::string traces;
};

int cmd_eval(Context& ctx, const EvalArgs& args) {
  const LabeledDataset data = read_feature_table(args.dataset);
  std::vector<Model> models;
  for (const auto& p : args.models) models.push_back(load_model(p));

  EvalReport report;
  for (const auto& m : models) {
    const LabeledDataset rows = m.driver_id.empty() ? data : data.for_driver(m.driver_id);
    if (rows.rows() == 0) {
      throw std::runtime_error("dataset has no rows for driver '" + m.driver_id + "'");
    }
    const auto pred = predict_all(m, rows);
    report.models.push_back({m.driver_id, m.kind, accuracy_report(pred, rows)});
  }

  json inputs{{"dataset", {{"path", args.dataset}, {"digest", file_digest(args.dataset)}}}};
  json model_inputs = json::array();
  for (const auto& p : args.models) model_inputs.push_back({{"path", p}, {"digest", file_digest(p)}});
  inputs["models"] = model_inputs;

  if (!args.traces.empty()) {
    const auto files = list_traces(args.traces);
    const Model* prob_model = nullptr;
    for (const auto& m : models) {
      if (m.kind != ModelKind::SVM) {
        prob_model = &m;
        break;
      }
    }
    std::map<std::string, DriverTiming> timing;
    for (const auto& f : files) {
      const Trace t = read_trace(f);
      ++report.episodes;
      if (t.collided || t.partial) {
        ++report.excluded_episodes;
        continue;
      }
      auto& dt = timing[t.driver_id];
      dt.driver_id = t.driver_id;
      const auto baselines = lane_exit_baseline(t, ctx.config.geometry);
      const auto tm = timing_metrics(t, baselines);
      dt.timing.events.insert(dt.timing.events.end(), tm.events.begin(), tm.events.end());
      dt.timing.aborted_t_p.insert(dt.timing.aborted_t_p.end(), tm.aborted_t_p.begin(),
                                   tm.aborted_t_p.end());
      dt.excluded_lane_changes += baselines.excluded;
      dt.aborts += tm.aborted_t_p.size();
      collect_distributions(t, ctx.config.geometry, ctx.config.sensor, report.distributions);
      if (prob_model && report.probability.empty() && !baselines.events.empty() &&
          (prob_model->driver_id.empty() || prob_model->driver_id == t.driver_id)) {
        report.probability = probability_trace(*prob_model, t, prob_model->normalizer,
                                               ctx.config.sensor, ctx.config.geometry);
      }
    }
    for (auto& [id, dt] : timing) report.timing.push_back(std::move(dt));
    const auto& lk = report.distributions.lateral[mode_index(ModeLabel::LaneKeep)];
    const auto& pr = report.distributions.lateral[mode_index(ModeLabel::Prepare)];
    if (lk.size() >= 8 && pr.size() >= 8) report.lateral_ks = ks_two_sample(lk, pr);
    inputs["traces"] = {{"path", args.traces}, {"digest", directory_digest(files)}};
  }

  fs::create_directories(ctx.out_dir);
  write_report(report, ctx.out_dir);
  write_run_manifest(ctx, "eval", {{"models", args.models}, {"dataset", args.dataset}, {"traces", args.traces}},
                     inputs);
  json summary = json::array();
  for (const auto& m : report.models) {
    json by = json::array();
    for (int s = 1; s <= 3; ++s) {
      const double v = m.accuracy.by_scenario[s];
      by.push_back(std::isnan(v) ? json(nullptr) : json(v));
    }
    summary.push_back({{"driver_id", m.driver_id},
                       {"algorithm", model_kind_name(m.kind)},
                       {"overall", m.accuracy.overall},
                       {"by_scenario", by},
                       {"samples", m.accuracy.samples}});
  }
  write_json(ctx.out_dir / "summary.json", {{"models", summary}});
  std::cout << format_report(report);
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct ServeArgs {
  std::string host = "127.0.0.1";
  int port = 8765;
  bool headless_check = false;
  bool fast = false;
  int max_sessions = 0;
  int decimation = kDefaultDecimation;
};

int cmd_serve(Context& ctx, const ServeArgs& args) {
  if (args.port < 0 || args.port > 65535) throw UsageError("--port must be in [0, 65535]");
  if (args.decimation < 1) throw UsageError("--decimation must be >= 1");
  if (args.headless_check) {
    const auto r = headless_check(ctx.config, ctx.seed);
    std::printf("%s: %s\n", r.ok ? "ok" : "failed", r.detail.c_str());
    return r.ok ? kExitOk : kExitFailure;
  }
  ServeOptions o;
  o.host = args.host;
  o.port = static_cast<unsigned short>(args.port);
  o.out_dir = (ctx.out_dir / "sessions").string();
  o.seed = ctx.seed;
  o.decimation = args.decimation;
  o.realtime = !args.fast;
  o.max_sessions = args.max_sessions;
  o.stop_on_signals = true;
  SessionServer server(ctx.config, o);
  fs::create_directories(ctx.out_dir);
  write_run_manifest(ctx, "serve",
                     {{"host", args.host},
                      {"port", args.port},
                      {"decimation", args.decimation},
                      {"realtime", !args.fast},
                      {"max_sessions", args.max_sessions}},
                     json::object());
  std::printf("listening on ws://%s:%u (protocol %d)\n", args.host.c_str(), server.port(),
              kProtocolVersion);
  std::fflush(stdout);
  server.run();
  write_json(ctx.out_dir / "summary.json",
             {{"sessions", server.sessions_finished()}, {"traces", server.trace_paths()}});
  std::printf("served %d session(s)\n", server.sessions_finished());
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& argv_in) {
  CLI::App app{"Lane-change intent pipeline: generate, featurize, train, eval, serve."};
  app.name("laneintent");
  app.require_subcommand(1);

  std::uint64_t seed = 1;
  std::string out_dir = "out";
  std::string config_path;
  app.add_option("--seed", seed, "Base seed")->capture_default_str();
  app.add_option("--out-dir", out_dir, "Output directory")
      ->envname("INTENT_OUT_DIR")
      ->capture_default_str();
  app.add_option("--config", config_path, "YAML config or a run_manifest.json")
      ->check(CLI::ExistingFile);

  GenerateArgs gen;
  auto* g = app.add_subcommand("generate", "Run surrogate batch episodes and write traces");
  g->add_option("--episodes", gen.episodes, "Episodes per profile (overrides config)");
  g->add_option("--threads", gen.threads, "Worker threads (default: hardware)");
  g->add_flag("--force", gen.force, "Replace an existing traces directory");

  FeaturizeArgs feat;
  auto* f = app.add_subcommand("featurize", "Build train/test feature tables from traces");
  f->add_option("--traces", feat.traces, "Trace directory")->required();
  f->add_option("--split", feat.split, "Split manifest (default: new per-driver split)");

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Cross-validate and fit a classifier");
  t->add_option("--dataset", tr.dataset, "Training feature table")->required()->check(CLI::ExistingFile);
  t->add_option("--algo", tr.algo, "svm, rf or lr")->required();
  t->add_option("--normalizer", tr.normalizer, "Normalizer (default: next to the dataset)");
  t->add_flag("--per-driver", tr.per_driver, "One model per driver");
  t->add_option("--cv-stride", tr.cv_stride, "Use every n-th row for cross-validation")->capture_default_str();
  t->add_option("--fit-stride", tr.fit_stride, "Use every n-th row for the final fit")->capture_default_str();
  t->add_option("--folds", tr.folds, "Cross-validation folds")->capture_default_str();

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Evaluate models and write the report");
  e->add_option("--model", ev.models, "Model file (repeatable)")->required()->check(CLI::ExistingFile);
  e->add_option("--dataset", ev.dataset, "Feature table to score")->required()->check(CLI::ExistingFile);
  e->add_option("--traces", ev.traces, "Trace directory for timing and distributions");

  ServeArgs sv;
  auto* s = app.add_subcommand("serve", "Interactive labelling session server (WebSocket)");
  s->add_option("--host", sv.host)->capture_default_str();
  s->add_option("--port", sv.port)->capture_default_str();
  s->add_flag("--headless-check", sv.headless_check, "Run one synthetic client handshake and exit");
  s->add_flag("--fast", sv.fast, "Step as fast as possible instead of 60 Hz wall clock");
  s->add_option("--max-sessions", sv.max_sessions, "Exit after this many sessions (0 = never)");
  s->add_option("--decimation", sv.decimation, "Send every n-th tick")->capture_default_str();

  for (auto* sub : {g, f, t, e, s}) sub->fallthrough();

  std::vector<std::string> args = argv_in;
  if (args.empty()) args.emplace_back("laneintent");
  std::vector<char*> cargs;
  for (auto& a : args) cargs.push_back(a.data());
  try {
    app.parse(static_cast<int>(cargs.size()), cargs.data());
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    Context ctx;
    ctx.seed = Seed{seed};
    ctx.out_dir = out_dir;
    ctx.config_path = config_path;
    ctx.config = load_run_config(config_path);
    if (g->parsed()) return cmd_generate(ctx, gen);
    if (f->parsed()) return cmd_featurize(ctx, feat);
    if (t->parsed()) return cmd_train(ctx, tr);
    if (e->parsed()) return cmd_eval(ctx, ev);
    if (s->parsed()) return cmd_serve(ctx, sv);
  } catch (const ConfigError& err) {
    std::fprintf(stderr, "error: %s\n", err.what());
    return kExitUsage;
  } catch (const UsageError& err) {
    std::fprintf(stderr, "error: %s\n", err.what());
    return kExitUsage;
  } catch (const std::exception& err) {
    std::fprintf(stderr, "error: %s\n", err.what());
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace laneintent::cli
