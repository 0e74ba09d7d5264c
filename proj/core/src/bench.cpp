#include "stagepoly/bench.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <thread>

namespace stagepoly::bench {

std::string MethodSpec::name() const {
  switch (kind) {
    case Kind::lin: return "lin";
    case Kind::quad: return "quad";
    case Kind::cubic: return "cubic";
    case Kind::bigram: return "bigram";
    case Kind::apple:
    case Kind::ssm: {
      std::string base = kind == Kind::apple ? "apple" : "ssm";
      if (best_alpha) return base + "-best";
      std::ostringstream os;
      os << base << '(' << alpha << ')';
      return os.str();
    }
  }
  return "?";
}

MethodSpec parse_method(std::string_view text) {
  MethodSpec m;
  if (text == "lin") { m.kind = MethodSpec::Kind::lin; return m; }
  if (text == "quad") { m.kind = MethodSpec::Kind::quad; return m; }
  if (text == "cubic") { m.kind = MethodSpec::Kind::cubic; return m; }
  if (text == "bigram") { m.kind = MethodSpec::Kind::bigram; return m; }

  auto parse_adaptive = [&](std::string_view base,
                            MethodSpec::Kind kind) -> bool {
    if (!text.starts_with(base)) return false;
    m.kind = kind;
    std::string_view rest = text.substr(base.size());
    if (rest.empty()) { m.alpha = 1.0; return true; }
    if (rest == "-best") { m.best_alpha = true; return true; }
    if (rest.size() >= 3 && rest.front() == '(' && rest.back() == ')') {
      try {
        m.alpha = std::stod(std::string(rest.substr(1, rest.size() - 2)));
      } catch (...) {
        return false;
      }
      return m.alpha > 0.0;
    }
    return false;
  };
  if (parse_adaptive("apple", MethodSpec::Kind::apple)) return m;
  if (parse_adaptive("ssm", MethodSpec::Kind::ssm)) return m;
  throw InvalidParam("unknown method '" + std::string(text) + "'");
}

double relative_error(double err, double l, double q, double c) {
  const double lo = std::min({l, q, c});
  const double hi = std::max({l, q, c});
  if (hi == lo)
    throw DegenerateBaselines("baseline errors are all equal");
  return (err - lo) / (hi - lo);
}

double relative_time(double time, double time_lin) {
  if (time_lin <= 0.0) throw InvalidTiming("linear baseline time must be > 0");
  return time / time_lin;
}

std::vector<std::pair<double, std::uint64_t>> cdf(std::vector<double> values) {
  if (values.empty()) throw InvalidParam("cdf needs at least one value");
  std::sort(values.begin(), values.end());
  std::vector<std::pair<double, std::uint64_t>> points;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!points.empty() && points.back().first == values[i])
      points.back().second = i + 1;
    else
      points.emplace_back(values[i], i + 1);
  }
  return points;
}

namespace {

LearnerConfig config_for(const MethodSpec& m, double alpha, Task task,
                         const SuiteConfig& suite) {
  LearnerConfig cfg;
  cfg.task = task;
  cfg.step_mode = StepMode::adaptive;
  cfg.epochs = suite.epochs;
  cfg.seed = suite.seed;
  cfg.bits = suite.bits;
  cfg.fallback = suite.fallback;
  switch (m.kind) {
    case MethodSpec::Kind::lin:
      cfg.map = FeatureMap::linear;
      break;
    case MethodSpec::Kind::quad:
      cfg.map = FeatureMap::quad;
      break;
    case MethodSpec::Kind::cubic:
      cfg.map = FeatureMap::cubic;
      cfg.bits = suite.cubic_bits;
      break;
    case MethodSpec::Kind::bigram:
      cfg.map = FeatureMap::linear;
      cfg.bigram = true;
      break;
    case MethodSpec::Kind::apple:
      cfg.map = FeatureMap::adaptive;
      cfg.alpha = alpha;
      cfg.heuristic = SelectHeuristic::weight;
      break;
    case MethodSpec::Kind::ssm:
      cfg.map = FeatureMap::adaptive;
      cfg.alpha = alpha;
      cfg.heuristic = SelectHeuristic::ssm;
      break;
  }
  return cfg;
}

struct SingleRun {
  double test_error = 0.0;
  double train_seconds = 0.0;
  double features_per_example = 0.0;
  double learning_rate = 0.0;
};

// tune the learning rate by progressive error (untimed), then run timed
// repetitions of the winner and report the median time
SingleRun run_method_once(const DatasetManifest& data, LearnerConfig cfg,
                          const SuiteConfig& suite, std::uint64_t train_n) {
  const HashConfig hash = cfg.hash();
  SplitStream train_stream(data.path, data.task, hash, suite.train_fraction,
                           suite.split_seed, SplitSide::train);
  SplitStream test_stream(data.path, data.task, hash, suite.train_fraction,
                          suite.split_seed, SplitSide::test);

  double best_lr = suite.lr_grid.front();
  double best_prog = std::numeric_limits<double>::infinity();
  for (double lr : suite.lr_grid) {
    cfg.learning_rate = lr;
    try {
      TrainReport r = train(train_stream, cfg, train_n);
      if (r.progressive_error < best_prog) {
        best_prog = r.progressive_error;
        best_lr = lr;
      }
    } catch (const NumericOverflow&) {
      // diverged at this rate; skip it
    }
  }

  cfg.learning_rate = best_lr;
  std::vector<double> times;
  TrainReport final_report;
  for (std::uint32_t rep = 0; rep < std::max(1u, suite.timing_reps); ++rep) {
    TrainReport r = train(train_stream, cfg, train_n);
    times.push_back(r.wall_seconds);
    if (rep == 0) final_report = std::move(r);
  }
  std::sort(times.begin(), times.end());

  SingleRun out;
  out.learning_rate = best_lr;
  out.train_seconds = times[times.size() / 2];
  out.features_per_example = final_report.features_per_example;
  out.test_error = evaluate(final_report.model, test_stream, data.task);
  return out;
}

BenchRecord run_dataset(const DatasetManifest& data,
                        const std::vector<MethodSpec>& methods,
                        const SuiteConfig& suite) {
  BenchRecord record;
  record.dataset = data.name;
  record.task = data.task;
  try {
    const std::uint64_t n = count_examples(data.path);
    if (data.declared_examples && *data.declared_examples != n)
      throw ParseError(data.name + ": manifest declares " +
                       std::to_string(*data.declared_examples) +
                       " examples but the file has " + std::to_string(n));
    // SplitStream keeps the train share exact per block; the train-side
    // count is what the expansion schedule needs (same epsilon as the
    // split quota)
    const auto train_n = static_cast<std::uint64_t>(
        n - static_cast<std::uint64_t>(
                std::floor(static_cast<double>(n) *
                               (1.0 - suite.train_fraction) +
                           1e-9)));

    for (const MethodSpec& m : methods) {
      if (m.best_alpha) {
        MethodResult best;
        bool first = true;
        for (double alpha : suite.alpha_grid) {
          SingleRun run = run_method_once(
              data, config_for(m, alpha, data.task, suite), suite, train_n);
          if (first || run.test_error < best.test_error) {
            best.method = m.name();
            best.learning_rate = run.learning_rate;
            best.alpha = alpha;
            best.test_error = run.test_error;
            best.train_seconds = run.train_seconds;
            best.features_per_example = run.features_per_example;
            first = false;
          }
        }
        record.methods.push_back(std::move(best));
      } else {
        SingleRun run = run_method_once(
            data, config_for(m, m.alpha, data.task, suite), suite, train_n);
        MethodResult r;
        r.method = m.name();
        r.learning_rate = run.learning_rate;
        r.alpha = m.alpha;
        r.test_error = run.test_error;
        r.train_seconds = run.train_seconds;
        r.features_per_example = run.features_per_example;
        record.methods.push_back(std::move(r));
      }
    }

    // relative metrics need all three baselines
    const auto find = [&](std::string_view name) -> const MethodResult* {
      for (const auto& r : record.methods)
        if (r.method == name) return &r;
      return nullptr;
    };
    const MethodResult* lin = find("lin");
    const MethodResult* quad = find("quad");
    const MethodResult* cubic = find("cubic");
    if (lin) {
      for (auto& r : record.methods)
        r.rel_time = relative_time(r.train_seconds, lin->train_seconds);
    }
    if (lin && quad && cubic) {
      for (auto& r : record.methods) {
        try {
          r.rel_err = relative_error(r.test_error, lin->test_error,
                                     quad->test_error, cubic->test_error);
        } catch (const DegenerateBaselines&) {
          r.rel_err = std::nullopt;  // marked undefined, never a fabricated 0
        }
      }
    }
  } catch (const std::exception& e) {
    record.failed = true;
    record.error = e.what();
  }
  return record;
}

}  // namespace

std::vector<BenchRecord> run_suite(const std::vector<DatasetManifest>& datasets,
                                   const std::vector<MethodSpec>& methods,
                                   const SuiteConfig& config) {
  std::vector<BenchRecord> records(datasets.size());
  const std::uint32_t workers =
      std::max(1u, std::min<std::uint32_t>(
                       config.workers,
                       static_cast<std::uint32_t>(datasets.size())));
  if (workers == 1) {
    for (std::size_t i = 0; i < datasets.size(); ++i)
      records[i] = run_dataset(datasets[i], methods, config);
    return records;
  }
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= datasets.size()) return;
      records[i] = run_dataset(datasets[i], methods, config);
    }
  };
  std::vector<std::thread> threads;
  for (std::uint32_t w = 0; w < workers; ++w) threads.emplace_back(worker);
  for (auto& th : threads) th.join();
  return records;
}

namespace {

void write_csv_field(std::ostream& os, const std::optional<double>& v) {
  if (v) os << *v;
  // undefined values stay empty
}

}  // namespace

void write_records_csv(const std::vector<BenchRecord>& records,
                       const std::string& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw EmptyData("cannot write " + path);
  os << "dataset,task,method,learning_rate,alpha,test_error,train_seconds,"
        "features_per_example,rel_err,rel_time,error\n";
  os.precision(10);
  for (const auto& rec : records) {
    if (rec.failed) {
      os << rec.dataset << ','
         << (rec.task == Task::binary ? "binary" : "regression")
         << ",,,,,,,,," << '"' << rec.error << '"' << '\n';
      continue;
    }
    for (const auto& m : rec.methods) {
      os << rec.dataset << ','
         << (rec.task == Task::binary ? "binary" : "regression") << ','
         << m.method << ',' << m.learning_rate << ',' << m.alpha << ','
         << m.test_error << ',' << m.train_seconds << ','
         << m.features_per_example << ',';
      write_csv_field(os, m.rel_err);
      os << ',';
      write_csv_field(os, m.rel_time);
      os << ",\n";
    }
  }
}

void write_cdf_csv(const std::vector<BenchRecord>& records,
                   const std::string& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw EmptyData("cannot write " + path);
  os << "metric,method,x,datasets_at_most_x\n";
  os.precision(10);

  // collect per-method value lists across datasets
  std::vector<std::string> method_order;
  auto values_of = [&](bool rel_err_metric, const std::string& method) {
    std::vector<double> vals;
    for (const auto& rec : records) {
      if (rec.failed) continue;
      for (const auto& m : rec.methods) {
        if (m.method != method) continue;
        const auto& v = rel_err_metric ? m.rel_err : m.rel_time;
        if (v) vals.push_back(*v);
      }
    }
    return vals;
  };
  for (const auto& rec : records) {
    if (rec.failed) continue;
    for (const auto& m : rec.methods)
      if (std::find(method_order.begin(), method_order.end(), m.method) ==
          method_order.end())
        method_order.push_back(m.method);
  }

  for (const bool rel_err_metric : {true, false}) {
    for (const auto& method : method_order) {
      auto vals = values_of(rel_err_metric, method);
      if (vals.empty()) continue;
      for (const auto& [x, count] : cdf(std::move(vals)))
        os << (rel_err_metric ? "rel_err" : "rel_time") << ',' << method << ','
           << x << ',' << count << '\n';
    }
  }
}

bool any_failed(const std::vector<BenchRecord>& records) {
  for (const auto& r : records)
    if (r.failed) return true;
  return false;
}

}  // namespace stagepoly::bench
