#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "stagepoly/io.hpp"
#include "stagepoly/learner.hpp"

namespace stagepoly::bench {

struct MethodSpec {
  enum class Kind { lin, quad, cubic, apple, ssm, bigram };
  Kind kind = Kind::lin;
  double alpha = 1.0;      // apple/ssm only
  bool best_alpha = false; // pick alpha per dataset by test error

  std::string name() const;
};

/// Accepts lin|quad|cubic|bigram, apple(α)|ssm(α), apple-best|ssm-best,
/// and bare apple|ssm (α = 1).
MethodSpec parse_method(std::string_view text);

/// (err - min(l,q,c)) / (max(l,q,c) - min(l,q,c)); may be negative or
/// exceed 1. Throws DegenerateBaselines when max == min.
double relative_error(double err, double l, double q, double c);

/// time / time_lin. Throws InvalidTiming when time_lin <= 0.
double relative_time(double time, double time_lin);

/// Right-continuous CDF step points: (x, count of values <= x), ending at
/// the total count.
std::vector<std::pair<double, std::uint64_t>> cdf(std::vector<double> values);

struct MethodResult {
  std::string method;
  double learning_rate = 0.0;
  double alpha = 0.0;
  double test_error = 0.0;
  double train_seconds = 0.0;  // median over timing repetitions
  double features_per_example = 0.0;
  std::optional<double> rel_err;
  std::optional<double> rel_time;
};

struct BenchRecord {
  std::string dataset;
  Task task = Task::binary;
  std::vector<MethodResult> methods;
  bool failed = false;
  std::string error;
};

struct SuiteConfig {
  double train_fraction = 0.8;
  std::uint64_t split_seed = 0;
  std::vector<double> lr_grid = {0.05, 0.1, 0.25, 0.5, 1.0};
  std::vector<double> alpha_grid = {0.125, 0.25, 0.5, 0.75, 1.0};
  std::uint32_t timing_reps = 3;
  std::uint32_t workers = 1;  // datasets in parallel; methods stay serial
  std::uint32_t epochs = 6;
  std::uint32_t bits = 18;
  std::uint32_t cubic_bits = 24;
  std::uint64_t seed = 0;
  bool fallback = false;
};

/// The full protocol per dataset: split, tune the learning rate by
/// progressive error, run timed repetitions per method, evaluate, and
/// derive the relative metrics. Per-dataset failures are recorded and the
/// suite continues.
std::vector<BenchRecord> run_suite(const std::vector<DatasetManifest>& datasets,
                                   const std::vector<MethodSpec>& methods,
                                   const SuiteConfig& config);

/// One row per (dataset, method); columns documented in the README.
void write_records_csv(const std::vector<BenchRecord>& records,
                       const std::string& path);

/// CDF points of rel_err and rel_time per method across datasets.
void write_cdf_csv(const std::vector<BenchRecord>& records,
                   const std::string& path);

bool any_failed(const std::vector<BenchRecord>& records);

}  // namespace stagepoly::bench
