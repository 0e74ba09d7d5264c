#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "stagepoly/error.hpp"

namespace stagepoly::regret {

/// Twice differentiable convex losses with value >= 0 and first/second
/// derivatives bounded by 1. smooth_abs is centered at 0, which makes the
/// zero vector a stationary point of any margin objective; smooth_abs_margin
/// shifts the elbow to margin 1 so minimizers are non-trivial.
enum class LossKind { logistic, smooth_abs, smooth_abs_margin };

double loss_value(LossKind kind, double z);
double loss_d1(LossKind kind, double z);
double loss_d2(LossKind kind, double z);

/// One level of the nested support schedule. Fractional stages start at
/// ceil(frac * T) so the same instance scales to any horizon; absolute
/// stages start at a fixed step.
struct StageSpec {
  bool absolute = false;
  double frac = 0.0;        // used when !absolute
  std::uint64_t start = 1;  // used when absolute
  std::vector<std::size_t> coords;  // supersets down the list
};

/// Finite-support instance of the regularized objective
///   f(w) = sum_j p_j loss(<w, v_j>) + lambda ||w||^2 / 2,
/// with an explicit nested support schedule. Everything about it is exact:
/// expectations are finite sums.
struct SyntheticProblem {
  std::string name;
  std::size_t dim = 0;
  std::vector<std::vector<double>> points;  // the x*y vectors v_j
  std::vector<double> probs;
  double lambda = 1.0;
  LossKind loss = LossKind::logistic;
  std::vector<StageSpec> stages;  // first stage must cover t = 1

  double objective(const std::vector<double>& w) const;
  void gradient(const std::vector<double>& w, std::vector<double>& g) const;
  /// Dense Hessian, row-major dim x dim.
  void hessian(const std::vector<double>& w, std::vector<double>& h) const;
  double x_bound() const;  // max_j ||v_j||

  /// Resolved schedule for horizon T: (start_t, coords) pairs, start_t
  /// increasing, first entry at t = 1.
  std::vector<std::pair<std::uint64_t, const std::vector<std::size_t>*>>
  schedule(std::uint64_t T) const;

  void validate() const;
};

/// argmin of f over vectors supported on coords, by damped Newton to
/// gradient-norm tolerance 1e-10. Throws SolverFailure on non-convergence.
std::vector<double> restricted_argmin(const SyntheticProblem& problem,
                                      const std::vector<std::size_t>& coords);

/// u_t for t = 1..T: the argmin over the support active at step t (stages
/// are solved once and shared across their steps).
std::vector<std::vector<double>> comparator_sequence(
    const SyntheticProblem& problem, std::uint64_t T);

/// f(u_t) for t = 1..T where u_t is the argmin over the support active at
/// step t. Nested supports make this non-increasing.
std::vector<double> comparator_values(const SyntheticProblem& problem,
                                      std::uint64_t T);

/// sum_t (t+2) f(u_t) / sum_t (t+2).
double weighted_comparator_average(const std::vector<double>& values);

/// (X^2 + lambda) (X + lambda D)^2 / (2 lambda^2 (T+1)).
double bound_rhs_theorem1(double X, double D, double lambda, std::uint64_t T);

/// (beta G^2 / (2 lambda^2) + dev_sum / lambda) / (T+1).
double bound_rhs_generic(double beta, double G, double lambda, std::uint64_t T,
                         double dev_sum);

struct SeedTrace {
  std::uint64_t seed = 0;
  double lhs = 0.0;       // f(w_{T+1}) - weighted comparator average
  double final_f = 0.0;
  double dev_sum = 0.0;
  double max_w_norm = 0.0;
  double max_g_norm = 0.0;
};

/// Per-step record of the first seed's run (optional, for trace output).
struct StepRecord {
  std::uint64_t t = 0;
  double f_w = 0.0;
  double eta = 0.0;
  double f_u = 0.0;
  std::size_t support = 0;
  double dev = 0.0;
};

struct ExperimentResult {
  std::string instance;
  std::uint64_t T = 0;
  std::uint32_t n_seeds = 0;
  double comparator_avg = 0.0;
  double lhs_mean = 0.0;
  double lambda = 0.0;
  double X = 0.0;          // declared data bound
  double D = 0.0;          // measured max iterate/comparator norm
  double G = 0.0;          // measured max stochastic gradient norm
  double beta_bound = 0.0; // smoothness certificate X^2 max l'' + lambda
  double bound_theorem1 = 0.0;
  bool bound_holds = false;
  double dev_mean = 0.0;
  double dev_stderr = 0.0;
  std::vector<SeedTrace> per_seed;       // ordered by seed
  std::vector<StepRecord> first_seed_steps;  // filled when requested

  double dev_quantile(double q) const;
  double azuma_envelope(double delta) const;  // 4 G^2 sqrt(T ln(1/delta))
};

/// Dense restricted SGD (step 1/(lambda (t+1))) over n_seeds independent
/// runs; asserts nothing itself, just measures. Per-step objective/dev
/// tracking can be disabled for speed; track_steps records the first
/// seed's full per-step trajectory.
ExperimentResult run_regret_experiment(const SyntheticProblem& problem,
                                       std::uint64_t T, std::uint32_t n_seeds,
                                       bool track_dev = true,
                                       std::uint64_t seed0 = 1,
                                       bool track_steps = false);

/// The synthetic instances shipped with the library (fixed construction,
/// deterministic across runs).
const std::vector<SyntheticProblem>& builtin_problems();

/// One JSON object per line: a summary record then per-seed records.
void write_experiment_jsonl(const ExperimentResult& result, std::ostream& os);

}  // namespace stagepoly::regret
