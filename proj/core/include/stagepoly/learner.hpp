#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "stagepoly/expansion.hpp"
#include "stagepoly/io.hpp"

namespace stagepoly {

enum class StepMode { theorem, fixed, adaptive };
enum class SelectHeuristic { weight, ssm };
enum class FeatureMap { linear, adaptive, quad, cubic };
enum class ScheduleMode { equal_spaced, doubling };

/// Hashed parameter array: one weight per slot, plus per-slot squared
/// gradient sums when the per-coordinate step mode is on. Slots never
/// touched by a materialized monomial stay exactly 0.
struct WeightVector {
  std::vector<double> weights;
  std::vector<double> grad_sq;  // allocated only for the adaptive step mode
  std::uint32_t bits = 18;

  WeightVector() = default;
  WeightVector(std::uint32_t bits_, bool adaptive)
      : weights(std::size_t{1} << bits_, 0.0),
        grad_sq(adaptive ? (std::size_t{1} << bits_) : 0, 0.0),
        bits(bits_) {}
};

struct LearnerConfig {
  Task task = Task::binary;
  double lambda = 0.0;
  StepMode step_mode = StepMode::adaptive;
  double learning_rate = 0.5;
  std::uint32_t epochs = 6;
  double alpha = 1.0;
  SelectHeuristic heuristic = SelectHeuristic::weight;
  bool fallback = false;
  std::uint32_t passes = 1;
  std::uint32_t bits = 18;
  std::uint64_t seed = 0;
  std::uint32_t max_degree = 8;
  FeatureMap map = FeatureMap::linear;
  bool bigram = false;
  ScheduleMode schedule = ScheduleMode::equal_spaced;
  std::uint64_t doubling_tau1 = 1000;
  std::optional<std::size_t> max_registry;
  std::optional<std::uint64_t> budget_override;  // fixed parent budget

  void validate() const;
  HashConfig hash() const noexcept { return HashConfig{bits, seed}; }
};

/// A trained predictor: hashed weights plus the frozen support snapshot
/// and the feature-map settings needed to reproduce its expansion.
struct Model {
  WeightVector weights;
  ExpansionState state;
  FeatureMap map = FeatureMap::linear;
  bool bigram = false;
  HashConfig hash;
  std::uint32_t max_degree = 8;
};

struct TrainReport {
  Model model;
  double progressive_error = 0.0;        // whole-stream progressive error
  double progressive_error_last_epoch = 0.0;  // since the last expansion
  double wall_seconds = 0.0;
  std::uint64_t examples_seen = 0;
  double features_per_example = 0.0;  // avg materialized nonzeros
};

/// Step size for the scalar modes; the per-coordinate mode is handled
/// inside the update. t is 1-based.
double step_size(StepMode mode, double lambda, double eta0, std::uint64_t t);

/// Squared-loss gradient over the feature support, with the ridge term
/// applied lazily to the touched slots:
///   g[i] = importance * (yhat - y) * feats[i] + lambda * w[i].
/// Throws NumericOverflow on a non-finite prediction.
SparseVector gradient(const WeightVector& w, const SparseVector& feats,
                      double y, double lambda, double importance = 1.0);

double predict_raw(const WeightVector& w, const SparseVector& feats);

/// w[i] -= eta * g[i] on the gradient's support. Throws NumericOverflow if
/// a weight leaves the finite range.
void sgd_step(WeightVector& w, const SparseVector& grad, double eta);

/// Per-coordinate step: accumulates squared gradients and scales each
/// coordinate by eta0 / sqrt(sum g^2).
void sgd_step_adaptive(WeightVector& w, const SparseVector& grad, double eta0);

struct TrainHooks {
  // called right after each support expansion
  std::function<void(const ExpansionState&, const std::vector<Monomial>&)>
      on_expand;
  // called after each example with the materialized term count
  std::function<void(std::uint64_t t, const std::vector<Term>&)> on_example;
};

/// The streaming loop: per-example progressive validation, gradient step,
/// and support expansion at the scheduled points. declared_n overrides the
/// counting pass used to place the equally-spaced schedule.
TrainReport train(ExampleStream& stream, const LearnerConfig& cfg,
                  std::optional<std::uint64_t> declared_n = std::nullopt,
                  const TrainHooks* hooks = nullptr);

/// One additional pass of SGD with the model's support frozen. t_start is
/// the example counter reached so far; returns the updated counter.
std::uint64_t train_frozen(ExampleStream& stream, Model& model,
                           const LearnerConfig& cfg, std::uint64_t t_start);

/// Materializes an example under the model's feature map (identity level).
void featurize(const Example& ex, const Model& model, std::vector<Term>& out);

double predict_example(const Model& model, const Example& ex);

/// Mean 0-1 error (binary, threshold 0.5) or mean squared error
/// (regression) over the stream, on the frozen final support.
double evaluate(const Model& model, ExampleStream& stream, Task task);

std::vector<double> predict_all(const Model& model, ExampleStream& stream);

/// Binary model file. Layout (all little-endian), documented in README:
/// magic "SPLM", u32 version, u32 bits, u64 seed, u32 max_degree, u8
/// feature map, u8 bigram flag, varint parent count, parents as varint
/// degree + varint var ids (sorted), then 2^bits float32 weights.
void save_model(const Model& model, const std::string& path);
Model load_model(const std::string& path);

}  // namespace stagepoly
