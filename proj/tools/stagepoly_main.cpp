// Command-line driver: train / predict / bench / regret / parallel.
//
// Exit codes: 0 success, 1 usage, 2 data error, 3 numeric failure,
// 4 regret assertion failure.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "stagepoly/bench.hpp"
#include "stagepoly/learner.hpp"
#include "stagepoly/parallel.hpp"
#include "stagepoly/regret.hpp"

namespace {

using namespace stagepoly;

struct RegretAssertionFailed : Error {
  using Error::Error;
};

struct TrainFlags {
  std::string data;
  std::string manifest;
  std::string model_out;
  std::string task = "binary";
  bool stage_poly = false;
  std::string expand;  // quad|cubic|bigram
  double sched_exponent = 1.0;
  std::uint32_t epochs = 6;
  std::uint32_t bits = 18;
  bool bits_explicit = false;
  std::string heuristic = "weight";
  bool fallback = false;
  double lambda = 0.0;
  std::string step_mode = "adaptive";
  double learning_rate = 0.5;
  std::uint32_t passes = 1;
  std::uint64_t seed = 0;
  std::uint32_t max_degree = 8;
  std::string schedule = "equal";
  std::uint64_t doubling_tau1 = 1000;
  std::int64_t declared_n = -1;
};

Task parse_task(const std::string& s) {
  if (s == "binary") return Task::binary;
  if (s == "regression") return Task::regression;
  throw InvalidParam("task must be binary or regression");
}

LearnerConfig learner_config(const TrainFlags& f) {
  LearnerConfig cfg;
  cfg.task = parse_task(f.task);
  cfg.lambda = f.lambda;
  if (f.step_mode == "theorem")
    cfg.step_mode = StepMode::theorem;
  else if (f.step_mode == "fixed")
    cfg.step_mode = StepMode::fixed;
  else if (f.step_mode == "adaptive")
    cfg.step_mode = StepMode::adaptive;
  else
    throw InvalidParam("step mode must be theorem, fixed or adaptive");
  cfg.learning_rate = f.learning_rate;
  cfg.epochs = f.epochs;
  cfg.alpha = f.sched_exponent;
  if (f.heuristic == "weight")
    cfg.heuristic = SelectHeuristic::weight;
  else if (f.heuristic == "ssm")
    cfg.heuristic = SelectHeuristic::ssm;
  else
    throw InvalidParam("heuristic must be weight or ssm");
  cfg.fallback = f.fallback;
  cfg.passes = f.passes;
  cfg.bits = f.bits;
  cfg.seed = f.seed;
  cfg.max_degree = f.max_degree;
  cfg.schedule = f.schedule == "doubling" ? ScheduleMode::doubling
                                          : ScheduleMode::equal_spaced;
  cfg.doubling_tau1 = f.doubling_tau1;

  if (f.stage_poly && (f.expand == "quad" || f.expand == "cubic"))
    throw InvalidParam("--stage-poly excludes --expand " + f.expand);
  if (!f.expand.empty() && f.expand != "quad" && f.expand != "cubic" &&
      f.expand != "bigram")
    throw InvalidParam("--expand must be quad, cubic or bigram");

  cfg.map = FeatureMap::linear;
  if (f.stage_poly) cfg.map = FeatureMap::adaptive;
  if (f.expand == "quad") cfg.map = FeatureMap::quad;
  if (f.expand == "cubic") {
    cfg.map = FeatureMap::cubic;
    if (!f.bits_explicit) cfg.bits = 24;
  }
  cfg.bigram = f.expand == "bigram";
  return cfg;
}

const char* map_name(FeatureMap m) {
  switch (m) {
    case FeatureMap::linear: return "linear";
    case FeatureMap::adaptive: return "stage-poly";
    case FeatureMap::quad: return "quad";
    case FeatureMap::cubic: return "cubic";
  }
  return "?";
}

void print_config(const LearnerConfig& cfg, const std::string& data) {
  std::cout << "config: data=" << data
            << " task=" << (cfg.task == Task::binary ? "binary" : "regression")
            << " map=" << map_name(cfg.map)
            << " bigram=" << (cfg.bigram ? 1 : 0)
            << " sched-exponent=" << cfg.alpha << " epochs=" << cfg.epochs
            << " bits=" << cfg.bits << " heuristic="
            << (cfg.heuristic == SelectHeuristic::weight ? "weight" : "ssm")
            << " fallback=" << (cfg.fallback ? 1 : 0)
            << " lambda=" << cfg.lambda << " step-mode="
            << (cfg.step_mode == StepMode::theorem
                    ? "theorem"
                    : cfg.step_mode == StepMode::fixed ? "fixed" : "adaptive")
            << " learning-rate=" << cfg.learning_rate
            << " passes=" << cfg.passes << " seed=" << cfg.seed
            << " max-degree=" << cfg.max_degree << " schedule="
            << (cfg.schedule == ScheduleMode::doubling ? "doubling" : "equal")
            << std::endl;
}

void add_learner_flags(CLI::App* cmd, TrainFlags& f) {
  cmd->add_flag("--stage-poly", f.stage_poly,
                "adaptive staged polynomial expansion");
  cmd->add_option("--expand", f.expand,
                  "non-adaptive baseline expansion: quad|cubic|bigram");
  cmd->add_option("--sched-exponent", f.sched_exponent,
                  "parent budget exponent alpha (default 1)");
  cmd->add_option("--epochs", f.epochs, "epoch count (default 6)");
  cmd->add_option("--bits", f.bits, "hash bits (default 18; cubic forces 24)");
  cmd->add_option("--heuristic", f.heuristic, "parent heuristic: weight|ssm");
  cmd->add_flag("--fallback", f.fallback,
                "reserve one slot for the smallest-degree missing monomial");
  cmd->add_option("--lambda", f.lambda, "l2 coefficient");
  cmd->add_option("--step-mode", f.step_mode, "theorem|fixed|adaptive");
  cmd->add_option("--learning-rate", f.learning_rate, "step size scale");
  cmd->add_option("--passes", f.passes, "passes over the data");
  cmd->add_option("--seed", f.seed, "hash/split seed");
  cmd->add_option("--max-degree", f.max_degree, "monomial degree cap");
  cmd->add_option("--schedule", f.schedule,
                  "expansion schedule: equal|doubling");
  cmd->add_option("--doubling-tau1", f.doubling_tau1,
                  "first expansion point for the doubling schedule");
  cmd->add_option("--declared-n", f.declared_n,
                  "declared example count (skips the counting pass)");
}

int cmd_train(TrainFlags& f, const CLI::App& cmd) {
  f.bits_explicit = cmd.count("--bits") > 0;
  std::string data_path = f.data;
  Task task = parse_task(f.task);
  std::optional<std::uint64_t> declared_n;
  if (f.declared_n >= 0) declared_n = static_cast<std::uint64_t>(f.declared_n);

  if (!f.manifest.empty()) {
    const DatasetManifest m = load_manifest(f.manifest);
    data_path = m.path;
    task = m.task;
    f.task = task == Task::binary ? "binary" : "regression";
    if (m.declared_examples) {
      const std::uint64_t counted = count_examples(m.path);
      if (counted != *m.declared_examples)
        throw ParseError(m.name + ": manifest declares " +
                         std::to_string(*m.declared_examples) +
                         " examples but the file has " +
                         std::to_string(counted));
      declared_n = m.declared_examples;
    }
  }
  if (data_path.empty()) throw InvalidParam("train needs --data or --manifest");

  LearnerConfig cfg = learner_config(f);
  print_config(cfg, data_path);

  FileStream stream(data_path, cfg.task, cfg.hash());
  TrainReport report = train(stream, cfg, declared_n);

  std::cout << "examples=" << report.examples_seen
            << " progressive_error=" << report.progressive_error
            << " progressive_error_last_epoch="
            << report.progressive_error_last_epoch
            << " features_per_example=" << report.features_per_example
            << " parents=" << report.model.state.parents.size()
            << " wall_seconds=" << report.wall_seconds << std::endl;
  const double final_train_error = evaluate(report.model, stream, cfg.task);
  std::cout << "final_train_error=" << final_train_error << std::endl;

  if (!f.model_out.empty()) {
    save_model(report.model, f.model_out);
    std::cout << "model=" << f.model_out << std::endl;
  }
  return 0;
}

int cmd_predict(const std::string& model_path, const std::string& data,
                const std::string& out, const std::string& task_name,
                bool print_error) {
  const Model model = load_model(model_path);
  const Task task = parse_task(task_name);
  std::cout << "config: model=" << model_path << " data=" << data
            << " task=" << task_name << " map=" << map_name(model.map)
            << " bigram=" << (model.bigram ? 1 : 0)
            << " bits=" << model.hash.bits << " seed=" << model.hash.seed
            << " parents=" << model.state.parents.size() << std::endl;

  FileStream stream(data, task, model.hash);
  const std::vector<double> preds = predict_all(model, stream);

  std::ostream* os = &std::cout;
  std::ofstream file;
  if (!out.empty()) {
    file.open(out, std::ios::trunc);
    if (!file) throw EmptyData("cannot write " + out);
    os = &file;
  }
  os->precision(10);
  for (double p : preds) (*os) << p << '\n';

  if (print_error) {
    const double err = evaluate(model, stream, task);
    std::cout << "error=" << err << std::endl;
  }
  return 0;
}

int cmd_bench(const std::vector<std::string>& manifest_paths,
              const std::string& methods_csv, bench::SuiteConfig suite,
              const std::string& records_path, const std::string& cdf_path) {
  std::vector<DatasetManifest> datasets;
  for (const auto& p : manifest_paths) datasets.push_back(load_manifest(p));
  if (datasets.empty()) throw InvalidParam("bench needs at least one manifest");

  std::vector<bench::MethodSpec> methods;
  std::stringstream ss(methods_csv);
  std::string tok;
  while (std::getline(ss, tok, ','))
    if (!tok.empty()) methods.push_back(bench::parse_method(tok));
  if (methods.empty()) throw InvalidParam("bench needs --methods");

  std::cout << "config: datasets=" << datasets.size() << " methods=";
  for (std::size_t i = 0; i < methods.size(); ++i)
    std::cout << (i ? "," : "") << methods[i].name();
  std::cout << " fraction=" << suite.train_fraction
            << " split-seed=" << suite.split_seed
            << " reps=" << suite.timing_reps << " workers=" << suite.workers
            << " epochs=" << suite.epochs << " bits=" << suite.bits
            << " cubic-bits=" << suite.cubic_bits << " seed=" << suite.seed
            << std::endl;

  const auto records = bench::run_suite(datasets, methods, suite);
  bench::write_records_csv(records, records_path);
  bench::write_cdf_csv(records, cdf_path);

  for (const auto& rec : records) {
    if (rec.failed) {
      std::cout << rec.dataset << ": FAILED (" << rec.error << ")"
                << std::endl;
      continue;
    }
    for (const auto& m : rec.methods) {
      std::cout << rec.dataset << " " << m.method
                << ": test_error=" << m.test_error
                << " seconds=" << m.train_seconds;
      if (m.rel_err) std::cout << " rel_err=" << *m.rel_err;
      if (m.rel_time) std::cout << " rel_time=" << *m.rel_time;
      std::cout << std::endl;
    }
  }
  std::cout << "records=" << records_path << " cdf=" << cdf_path << std::endl;
  if (bench::any_failed(records)) throw EmptyData("one or more datasets failed");
  return 0;
}

int cmd_regret(const std::string& instances, const std::string& t_csv,
               std::uint32_t seeds, const std::string& trace_path,
               bool run_dev_check, bool trace_steps) {
  std::vector<std::uint64_t> horizons;
  {
    std::stringstream ss(t_csv);
    std::string tok;
    while (std::getline(ss, tok, ','))
      if (!tok.empty()) horizons.push_back(std::stoull(tok));
  }
  if (horizons.empty()) throw InvalidParam("regret needs --T");

  std::cout << "config: instances=" << instances << " T=" << t_csv
            << " seeds=" << seeds << " dev-check=" << (run_dev_check ? 1 : 0)
            << " trace-steps=" << (trace_steps ? 1 : 0) << std::endl;

  std::ofstream trace;
  if (!trace_path.empty()) {
    trace.open(trace_path, std::ios::trunc);
    if (!trace) throw EmptyData("cannot write " + trace_path);
  }

  bool all_pass = true;
  for (const auto& problem : regret::builtin_problems()) {
    if (instances != "all" && instances != problem.name) continue;
    for (const std::uint64_t T : horizons) {
      const auto result = regret::run_regret_experiment(
          problem, T, seeds, false, 1, trace_steps && trace.is_open());
      std::cout << (result.bound_holds ? "PASS" : "FAIL") << " "
                << problem.name << " T=" << T
                << " lhs_mean=" << result.lhs_mean
                << " bound=" << result.bound_theorem1 << " X=" << result.X
                << " D=" << result.D << std::endl;
      all_pass = all_pass && result.bound_holds;
      if (trace.is_open()) regret::write_experiment_jsonl(result, trace);
    }
  }

  if (run_dev_check) {
    const auto& problem = regret::builtin_problems()[1];  // d20-staged
    const auto result =
        regret::run_regret_experiment(problem, 500, 400, true);
    const double envelope = result.azuma_envelope(0.05);
    const double p95 = result.dev_quantile(0.95);
    const bool mean_ok =
        std::abs(result.dev_mean) <= 3.0 * result.dev_stderr;
    const bool tail_ok = p95 <= envelope;
    std::cout << (mean_ok ? "PASS" : "FAIL") << " " << problem.name
              << " dev_mean=" << result.dev_mean
              << " dev_stderr=" << result.dev_stderr << std::endl;
    std::cout << (tail_ok ? "PASS" : "FAIL") << " " << problem.name
              << " dev_p95=" << p95 << " azuma=" << envelope << std::endl;
    all_pass = all_pass && mean_ok && tail_ok;
    if (trace.is_open()) regret::write_experiment_jsonl(result, trace);
  }

  if (!all_pass) throw RegretAssertionFailed("a regret assertion failed");
  return 0;
}

int cmd_parallel(const std::string& plan_path, const std::string& model_out,
                 const std::string& test_path) {
  std::ifstream in(plan_path);
  if (!in) throw EmptyData("cannot open plan " + plan_path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("plan: ") + e.what());
  }

  TrainFlags f;
  if (j.contains("learner")) {
    const auto& l = j["learner"];
    if (l.contains("sched_exponent")) f.sched_exponent = l["sched_exponent"];
    if (l.contains("epochs")) f.epochs = l["epochs"];
    if (l.contains("bits")) f.bits = l["bits"];
    if (l.contains("seed")) f.seed = l["seed"];
    if (l.contains("learning_rate")) f.learning_rate = l["learning_rate"];
    if (l.contains("lambda")) f.lambda = l["lambda"];
    if (l.contains("heuristic")) f.heuristic = l["heuristic"];
    if (l.contains("step_mode")) f.step_mode = l["step_mode"];
    if (l.contains("fallback")) f.fallback = l["fallback"];
    if (l.contains("max_degree")) f.max_degree = l["max_degree"];
  }
  f.task = j.value("task", std::string("binary"));
  f.stage_poly = true;
  if (j.value("base", std::string("linear")) == "bigram") f.expand = "bigram";
  LearnerConfig cfg = learner_config(f);

  const auto dir = std::filesystem::path(plan_path).parent_path();
  par::ShardPlan plan;
  plan.passes = j.value("passes", 5u);
  plan.weight_by_examples = j.value("weight_by_examples", false);
  for (const auto& shard : j.at("shards")) {
    const auto path = (dir / shard.get<std::string>()).string();
    plan.shards.push_back(
        std::make_shared<FileStream>(path, cfg.task, cfg.hash()));
  }

  std::cout << "config: plan=" << plan_path << " shards=" << plan.shards.size()
            << " passes=" << plan.passes << " base="
            << (cfg.bigram ? "bigram" : "linear") << std::endl;
  print_config(cfg, plan_path);

  auto phase1 = par::phase1_discover(plan, cfg);
  std::vector<std::vector<Monomial>> parent_sets;
  for (const auto& o : phase1) parent_sets.push_back(o.parents);
  const auto frozen = par::union_and_freeze(parent_sets, cfg);
  std::cout << "union_parents=" << frozen.parents.size() << std::endl;

  Model model = par::averaged_passes(plan, frozen, cfg, phase1);
  if (!model_out.empty()) {
    save_model(model, model_out);
    std::cout << "model=" << model_out << std::endl;
  }

  if (!test_path.empty()) {
    FileStream test(test_path, cfg.task, cfg.hash());
    std::vector<double> scores = predict_all(model, test);
    std::vector<int> labels;
    test.reset();
    Example ex;
    while (test.next(ex)) labels.push_back(ex.label > 0.5 ? 1 : 0);
    std::cout << "test_auc=" << par::auc(scores, labels) << std::endl;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"streaming learner with staged polynomial feature expansion"};
  app.require_subcommand(1);

  TrainFlags train_flags;
  auto* train_cmd = app.add_subcommand("train", "train a model on a file");
  train_cmd->add_option("--data", train_flags.data, "input file");
  train_cmd->add_option("--manifest", train_flags.manifest, "dataset manifest");
  train_cmd->add_option("--task", train_flags.task, "binary|regression");
  train_cmd->add_option("--model", train_flags.model_out, "model output path");
  add_learner_flags(train_cmd, train_flags);

  std::string predict_model, predict_data, predict_out;
  std::string predict_task = "binary";
  bool predict_error = false;
  auto* predict_cmd =
      app.add_subcommand("predict", "score a file with a saved model");
  predict_cmd->add_option("--model", predict_model, "model file")->required();
  predict_cmd->add_option("--data", predict_data, "input file")->required();
  predict_cmd->add_option("--out", predict_out,
                          "predictions file (default stdout)");
  predict_cmd->add_option("--task", predict_task, "binary|regression");
  predict_cmd->add_flag("--print-error", predict_error,
                        "also evaluate against the file's labels");

  std::vector<std::string> bench_manifests;
  std::string bench_methods = "lin,quad,cubic";
  std::string bench_records = "bench_records.csv";
  std::string bench_cdf = "bench_cdf.csv";
  bench::SuiteConfig suite;
  auto* bench_cmd =
      app.add_subcommand("bench", "baseline/adaptive comparison suite");
  bench_cmd->add_option("--manifest", bench_manifests, "dataset manifests")
      ->required();
  bench_cmd->add_option("--methods", bench_methods,
                        "comma list: lin,quad,cubic,bigram,apple(a),ssm(a),"
                        "apple-best,ssm-best");
  bench_cmd->add_option("--records", bench_records, "records CSV path");
  bench_cmd->add_option("--cdf", bench_cdf, "CDF CSV path");
  bench_cmd->add_option("--fraction", suite.train_fraction, "train share");
  bench_cmd->add_option("--split-seed", suite.split_seed, "split seed");
  bench_cmd->add_option("--reps", suite.timing_reps, "timing repetitions");
  bench_cmd->add_option("--workers", suite.workers, "datasets in parallel");
  bench_cmd->add_option("--epochs", suite.epochs, "epochs per run");
  bench_cmd->add_option("--bits", suite.bits, "hash bits");
  bench_cmd->add_option("--cubic-bits", suite.cubic_bits, "cubic hash bits");
  bench_cmd->add_option("--seed", suite.seed, "hash seed");

  std::string regret_instances = "all";
  std::string regret_T = "100,1000";
  std::uint32_t regret_seeds = 20;
  std::string regret_trace;
  bool regret_dev = false;
  auto* regret_cmd =
      app.add_subcommand("regret", "bound verification on synthetic problems");
  regret_cmd->add_option("--instances", regret_instances,
                         "instance name or 'all'");
  regret_cmd->add_option("--T", regret_T, "comma list of horizons");
  regret_cmd->add_option("--seeds", regret_seeds, "seeds per experiment");
  regret_cmd->add_option("--trace", regret_trace, "JSONL trace output");
  regret_cmd->add_flag("--dev-check", regret_dev,
                       "also run the martingale deviation checks");
  bool regret_steps = false;
  regret_cmd->add_flag("--trace-steps", regret_steps,
                       "include the first seed's per-step records in the "
                       "trace");

  std::string plan_path, parallel_model, parallel_test;
  auto* parallel_cmd =
      app.add_subcommand("parallel", "sharded discovery + averaged passes");
  parallel_cmd->add_option("--plan", plan_path, "shard plan JSON")->required();
  parallel_cmd->add_option("--model", parallel_model, "model output path");
  parallel_cmd->add_option("--test", parallel_test, "test file for AUC");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (*train_cmd) return cmd_train(train_flags, *train_cmd);
    if (*predict_cmd)
      return cmd_predict(predict_model, predict_data, predict_out,
                         predict_task, predict_error);
    if (*bench_cmd)
      return cmd_bench(bench_manifests, bench_methods, suite, bench_records,
                       bench_cdf);
    if (*regret_cmd)
      return cmd_regret(regret_instances, regret_T, regret_seeds, regret_trace,
                        regret_dev, regret_steps);
    if (*parallel_cmd)
      return cmd_parallel(plan_path, parallel_model, parallel_test);
  } catch (const RegretAssertionFailed& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 4;
  } catch (const NumericOverflow& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 3;
  } catch (const SolverFailure& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 3;
  } catch (const InvalidParam& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 2;
  }
  return 0;
}
