#include "stagepoly/regret.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <random>

#include <json.hpp>

#include "stagepoly/features.hpp"

namespace stagepoly::regret {

double loss_value(LossKind kind, double z) {
  switch (kind) {
    case LossKind::logistic:
      // log(1 + e^{-z}) without overflow on either tail
      return z > 0 ? std::log1p(std::exp(-z)) : -z + std::log1p(std::exp(z));
    case LossKind::smooth_abs:
      return std::sqrt(1.0 + z * z) - 1.0;
    case LossKind::smooth_abs_margin: {
      const double r = z - 1.0;
      return std::sqrt(1.0 + r * r) - 1.0;
    }
  }
  return 0.0;
}

double loss_d1(LossKind kind, double z) {
  switch (kind) {
    case LossKind::logistic:
      return z > 0 ? -std::exp(-z) / (1.0 + std::exp(-z))
                   : -1.0 / (1.0 + std::exp(z));
    case LossKind::smooth_abs:
      return z / std::sqrt(1.0 + z * z);
    case LossKind::smooth_abs_margin: {
      const double r = z - 1.0;
      return r / std::sqrt(1.0 + r * r);
    }
  }
  return 0.0;
}

double loss_d2(LossKind kind, double z) {
  switch (kind) {
    case LossKind::logistic: {
      const double e = std::exp(-std::abs(z));
      const double denom = (1.0 + e) * (1.0 + e);
      return e / denom;
    }
    case LossKind::smooth_abs: {
      const double s = 1.0 + z * z;
      return 1.0 / (s * std::sqrt(s));
    }
    case LossKind::smooth_abs_margin: {
      const double r = z - 1.0;
      const double s = 1.0 + r * r;
      return 1.0 / (s * std::sqrt(s));
    }
  }
  return 0.0;
}

double SyntheticProblem::objective(const std::vector<double>& w) const {
  double f = 0.0;
  for (std::size_t j = 0; j < points.size(); ++j) {
    const double z =
        std::inner_product(w.begin(), w.end(), points[j].begin(), 0.0);
    f += probs[j] * loss_value(loss, z);
  }
  const double norm_sq =
      std::inner_product(w.begin(), w.end(), w.begin(), 0.0);
  return f + 0.5 * lambda * norm_sq;
}

void SyntheticProblem::gradient(const std::vector<double>& w,
                                std::vector<double>& g) const {
  g.assign(dim, 0.0);
  for (std::size_t j = 0; j < points.size(); ++j) {
    const double z =
        std::inner_product(w.begin(), w.end(), points[j].begin(), 0.0);
    const double scale = probs[j] * loss_d1(loss, z);
    for (std::size_t i = 0; i < dim; ++i) g[i] += scale * points[j][i];
  }
  for (std::size_t i = 0; i < dim; ++i) g[i] += lambda * w[i];
}

void SyntheticProblem::hessian(const std::vector<double>& w,
                               std::vector<double>& h) const {
  h.assign(dim * dim, 0.0);
  for (std::size_t j = 0; j < points.size(); ++j) {
    const double z =
        std::inner_product(w.begin(), w.end(), points[j].begin(), 0.0);
    const double scale = probs[j] * loss_d2(loss, z);
    for (std::size_t a = 0; a < dim; ++a)
      for (std::size_t b = 0; b < dim; ++b)
        h[a * dim + b] += scale * points[j][a] * points[j][b];
  }
  for (std::size_t i = 0; i < dim; ++i) h[i * dim + i] += lambda;
}

double SyntheticProblem::x_bound() const {
  double X = 0.0;
  for (const auto& v : points)
    X = std::max(X, std::sqrt(std::inner_product(v.begin(), v.end(),
                                                 v.begin(), 0.0)));
  return X;
}

std::vector<std::pair<std::uint64_t, const std::vector<std::size_t>*>>
SyntheticProblem::schedule(std::uint64_t T) const {
  std::vector<std::pair<std::uint64_t, const std::vector<std::size_t>*>> out;
  for (const StageSpec& s : stages) {
    std::uint64_t start =
        s.absolute ? s.start
                   : static_cast<std::uint64_t>(
                         std::ceil(s.frac * static_cast<double>(T)));
    if (start < 1) start = 1;
    out.emplace_back(start, &s.coords);
  }
  std::sort(out.begin(), out.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  return out;
}

void SyntheticProblem::validate() const {
  if (points.empty() || points.size() != probs.size())
    throw InvalidParam(name + ": malformed support");
  double total = 0.0;
  for (double p : probs) {
    if (p < 0.0) throw InvalidParam(name + ": negative probability");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9)
    throw InvalidParam(name + ": probabilities must sum to 1");
  if (lambda <= 0.0) throw InvalidParam(name + ": lambda must be > 0");
  if (stages.empty()) throw InvalidParam(name + ": no support stages");
  // nested supports
  for (std::size_t i = 1; i < stages.size(); ++i)
    for (std::size_t c : stages[i - 1].coords)
      if (std::find(stages[i].coords.begin(), stages[i].coords.end(), c) ==
          stages[i].coords.end())
        throw InvalidParam(name + ": stages are not nested");
}

namespace {

// Cholesky factor+solve for a small SPD system; A is n*n row-major and is
// clobbered. Returns false if a pivot degenerates.
bool cholesky_solve(std::vector<double>& A, std::vector<double>& b,
                    std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      double s = A[i * n + j];
      for (std::size_t k = 0; k < j; ++k) s -= A[i * n + k] * A[j * n + k];
      if (i == j) {
        if (s <= 0.0) return false;
        A[i * n + i] = std::sqrt(s);
      } else {
        A[i * n + j] = s / A[j * n + j];
      }
    }
  }
  // forward substitution L y = b
  for (std::size_t i = 0; i < n; ++i) {
    double s = b[i];
    for (std::size_t k = 0; k < i; ++k) s -= A[i * n + k] * b[k];
    b[i] = s / A[i * n + i];
  }
  // back substitution L^T x = y
  for (std::size_t ii = n; ii > 0; --ii) {
    const std::size_t i = ii - 1;
    double s = b[i];
    for (std::size_t k = i + 1; k < n; ++k) s -= A[k * n + i] * b[k];
    b[i] = s / A[i * n + i];
  }
  return true;
}

}  // namespace

std::vector<double> restricted_argmin(const SyntheticProblem& problem,
                                      const std::vector<std::size_t>& coords) {
  constexpr double kGradTol = 1e-10;
  constexpr int kMaxIter = 200;

  const std::size_t m = coords.size();
  std::vector<double> u(problem.dim, 0.0);
  std::vector<double> g, h;
  std::vector<double> gr(m), hr(m * m);

  double f = problem.objective(u);
  for (int iter = 0; iter < kMaxIter; ++iter) {
    problem.gradient(u, g);
    double gnorm = 0.0;
    for (std::size_t a = 0; a < m; ++a) {
      gr[a] = g[coords[a]];
      gnorm += gr[a] * gr[a];
    }
    if (std::sqrt(gnorm) <= kGradTol) return u;

    problem.hessian(u, h);
    for (std::size_t a = 0; a < m; ++a)
      for (std::size_t b = 0; b < m; ++b)
        hr[a * m + b] = h[coords[a] * problem.dim + coords[b]];
    std::vector<double> step = gr;
    std::vector<double> chol = hr;
    if (!cholesky_solve(chol, step, m))
      throw SolverFailure(problem.name + ": Hessian not positive definite");

    // damped acceptance: halve until the objective decreases
    double alpha = 1.0;
    for (int bt = 0; bt < 60; ++bt) {
      std::vector<double> trial = u;
      for (std::size_t a = 0; a < m; ++a)
        trial[coords[a]] -= alpha * step[a];
      const double ft = problem.objective(trial);
      if (ft <= f) {
        u = std::move(trial);
        f = ft;
        break;
      }
      alpha *= 0.5;
      if (bt == 59)
        throw SolverFailure(problem.name + ": line search stalled");
    }
  }
  throw SolverFailure(problem.name + ": Newton did not reach tolerance");
}

std::vector<std::vector<double>> comparator_sequence(
    const SyntheticProblem& problem, std::uint64_t T) {
  const auto sched = problem.schedule(T);
  std::vector<std::vector<double>> stage_u(sched.size());
  for (std::size_t s = 0; s < sched.size(); ++s)
    stage_u[s] = restricted_argmin(problem, *sched[s].second);
  std::vector<std::vector<double>> out(T);
  std::size_t s = 0;
  for (std::uint64_t t = 1; t <= T; ++t) {
    while (s + 1 < sched.size() && sched[s + 1].first <= t) ++s;
    out[t - 1] = stage_u[s];
  }
  return out;
}

std::vector<double> comparator_values(const SyntheticProblem& problem,
                                      std::uint64_t T) {
  const auto sched = problem.schedule(T);
  std::vector<double> stage_value(sched.size());
  for (std::size_t s = 0; s < sched.size(); ++s) {
    const auto u = restricted_argmin(problem, *sched[s].second);
    stage_value[s] = problem.objective(u);
  }
  std::vector<double> values(T);
  std::size_t s = 0;
  for (std::uint64_t t = 1; t <= T; ++t) {
    while (s + 1 < sched.size() && sched[s + 1].first <= t) ++s;
    values[t - 1] = stage_value[s];
  }
  return values;
}

double weighted_comparator_average(const std::vector<double>& values) {
  if (values.empty()) throw InvalidParam("comparator average needs T >= 1");
  double num = 0.0, den = 0.0;
  for (std::size_t t = 1; t <= values.size(); ++t) {
    const double wgt = static_cast<double>(t + 2);
    num += wgt * values[t - 1];
    den += wgt;
  }
  return num / den;
}

double bound_rhs_theorem1(double X, double D, double lambda, std::uint64_t T) {
  if (lambda <= 0.0) throw InvalidParam("bound needs lambda > 0");
  if (X < 0.0 || D < 0.0) throw InvalidParam("bound needs X, D >= 0");
  if (T < 1) throw InvalidParam("bound needs T >= 1");
  const double a = X * X + lambda;
  const double b = X + lambda * D;
  return a * b * b / (2.0 * lambda * lambda * static_cast<double>(T + 1));
}

double bound_rhs_generic(double beta, double G, double lambda, std::uint64_t T,
                         double dev_sum) {
  if (lambda <= 0.0) throw InvalidParam("bound needs lambda > 0");
  return (beta * G * G / (2.0 * lambda * lambda) + dev_sum / lambda) /
         static_cast<double>(T + 1);
}

double ExperimentResult::dev_quantile(double q) const {
  std::vector<double> sums;
  sums.reserve(per_seed.size());
  for (const auto& s : per_seed) sums.push_back(s.dev_sum);
  std::sort(sums.begin(), sums.end());
  if (sums.empty()) return 0.0;
  const auto rank = static_cast<std::size_t>(
      std::ceil(q * static_cast<double>(sums.size())));
  return sums[std::min(sums.size() - 1, rank == 0 ? 0 : rank - 1)];
}

double ExperimentResult::azuma_envelope(double delta) const {
  return 4.0 * G * G *
         std::sqrt(static_cast<double>(T) * std::log(1.0 / delta));
}

ExperimentResult run_regret_experiment(const SyntheticProblem& problem,
                                       std::uint64_t T, std::uint32_t n_seeds,
                                       bool track_dev, std::uint64_t seed0,
                                       bool track_steps) {
  problem.validate();
  ExperimentResult result;
  result.instance = problem.name;
  result.T = T;
  result.n_seeds = n_seeds;
  result.lambda = problem.lambda;
  result.X = problem.x_bound();
  // max l'' is 1/4 for the logistic loss and 1 for the smoothed-absolute
  // family, so this certifies the data term's smoothness
  result.beta_bound =
      result.X * result.X *
          (problem.loss == LossKind::logistic ? 0.25 : 1.0) +
      problem.lambda;

  const auto fu = comparator_values(problem, T);
  result.comparator_avg = weighted_comparator_average(fu);

  // comparator norms enter the measured D
  double max_u_norm = 0.0;
  {
    const auto sched = problem.schedule(T);
    for (const auto& [start, coords] : sched) {
      const auto u = restricted_argmin(problem, *coords);
      max_u_norm = std::max(
          max_u_norm,
          std::sqrt(std::inner_product(u.begin(), u.end(), u.begin(), 0.0)));
    }
  }

  const auto sched = problem.schedule(T);
  const std::size_t d = problem.dim;
  std::vector<double> w(d), g(d), grad_true(d);
  double lhs_sum = 0.0;

  for (std::uint32_t s = 0; s < n_seeds; ++s) {
    std::mt19937_64 rng(mix64(seed0 + s));
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    std::fill(w.begin(), w.end(), 0.0);
    SeedTrace trace;
    trace.seed = seed0 + s;
    std::size_t stage = 0;
    const bool record_steps = track_steps && s == 0;

    for (std::uint64_t t = 1; t <= T; ++t) {
      while (stage + 1 < sched.size() && sched[stage + 1].first <= t) ++stage;
      const auto& coords = *sched[stage].second;

      // sample a support point
      double r = unif(rng);
      std::size_t j = 0;
      for (; j + 1 < problem.probs.size(); ++j) {
        if (r < problem.probs[j]) break;
        r -= problem.probs[j];
      }
      const auto& v = problem.points[j];

      const double z = std::inner_product(w.begin(), w.end(), v.begin(), 0.0);
      const double d1 = loss_d1(problem.loss, z);
      double gnorm = 0.0;
      for (std::size_t i = 0; i < d; ++i) {
        g[i] = d1 * v[i] + problem.lambda * w[i];
        gnorm += g[i] * g[i];
      }
      trace.max_g_norm = std::max(trace.max_g_norm, std::sqrt(gnorm));

      double dev_t = 0.0;
      if (track_dev || record_steps) {
        problem.gradient(w, grad_true);
        double inner = 0.0;
        for (std::size_t c : coords)
          inner += (grad_true[c] - g[c]) * grad_true[c];
        dev_t = static_cast<double>(t + 2) / static_cast<double>(T + 2) *
                inner;
        if (track_dev) trace.dev_sum += dev_t;
      }

      const double eta =
          1.0 / (problem.lambda * static_cast<double>(t + 1));
      if (record_steps)
        result.first_seed_steps.push_back(StepRecord{
            t, problem.objective(w), eta, fu[t - 1], coords.size(), dev_t});
      for (std::size_t c : coords) w[c] -= eta * g[c];

      const double wnorm =
          std::sqrt(std::inner_product(w.begin(), w.end(), w.begin(), 0.0));
      trace.max_w_norm = std::max(trace.max_w_norm, wnorm);
    }

    trace.final_f = problem.objective(w);
    trace.lhs = trace.final_f - result.comparator_avg;
    lhs_sum += trace.lhs;
    result.G = std::max(result.G, trace.max_g_norm);
    result.D = std::max(result.D, std::max(trace.max_w_norm, max_u_norm));
    result.per_seed.push_back(trace);
  }

  result.lhs_mean = lhs_sum / static_cast<double>(n_seeds);
  result.bound_theorem1 =
      bound_rhs_theorem1(result.X, result.D, problem.lambda, T);
  result.bound_holds = result.lhs_mean <= result.bound_theorem1;

  if (track_dev && n_seeds > 0) {
    double mean = 0.0;
    for (const auto& tr : result.per_seed) mean += tr.dev_sum;
    mean /= static_cast<double>(n_seeds);
    double var = 0.0;
    for (const auto& tr : result.per_seed) {
      const double dlt = tr.dev_sum - mean;
      var += dlt * dlt;
    }
    var = n_seeds > 1 ? var / static_cast<double>(n_seeds - 1) : 0.0;
    result.dev_mean = mean;
    result.dev_stderr = std::sqrt(var / static_cast<double>(n_seeds));
  }
  return result;
}

namespace {

std::vector<double> random_point(std::mt19937_64& rng, std::size_t dim) {
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  std::vector<double> v(dim);
  for (double& x : v) x = unif(rng);
  double norm = std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
  if (norm > 1.0)
    for (double& x : v) x /= norm;  // keep ||v|| <= 1
  return v;
}

SyntheticProblem make_problem(std::string name, std::size_t dim,
                              std::size_t n_points, double lambda,
                              LossKind loss, std::uint64_t gen_seed,
                              std::vector<StageSpec> stages) {
  std::mt19937_64 rng(gen_seed);
  SyntheticProblem p;
  p.name = std::move(name);
  p.dim = dim;
  p.lambda = lambda;
  p.loss = loss;
  p.stages = std::move(stages);
  std::uniform_real_distribution<double> unif(0.1, 1.0);
  double total = 0.0;
  for (std::size_t j = 0; j < n_points; ++j) {
    p.points.push_back(random_point(rng, dim));
    p.probs.push_back(unif(rng));
    total += p.probs.back();
  }
  for (double& pr : p.probs) pr /= total;
  p.validate();
  return p;
}

std::vector<std::size_t> coord_range(std::size_t n) {
  std::vector<std::size_t> c(n);
  std::iota(c.begin(), c.end(), 0);
  return c;
}

}  // namespace

const std::vector<SyntheticProblem>& builtin_problems() {
  static const std::vector<SyntheticProblem> problems = [] {
    std::vector<SyntheticProblem> out;

    // fixed full support: the clean 1/T-rate instance
    out.push_back(make_problem(
        "d5-fixed", 5, 16, 1.0, LossKind::logistic, 0x5eed0001,
        {StageSpec{false, 0.0, 1, coord_range(5)}}));

    // fractional three-level schedule
    out.push_back(make_problem(
        "d20-staged", 20, 64, 0.1, LossKind::logistic, 0x5eed0002,
        {StageSpec{false, 0.0, 1, coord_range(5)},
         StageSpec{false, 1.0 / 3.0, 1, coord_range(10)},
         StageSpec{false, 2.0 / 3.0, 1, coord_range(20)}}));

    // fractional six-level schedule, smoothed-absolute loss
    {
      std::vector<StageSpec> stages;
      for (int k = 0; k < 6; ++k) {
        const std::size_t n = std::min<std::size_t>(20, 4 + 3 * k);
        stages.push_back(
            StageSpec{false, static_cast<double>(k) / 6.0, 1, coord_range(n)});
      }
      out.push_back(make_problem("d20-smooth", 20, 32, 1.0,
                                 LossKind::smooth_abs_margin, 0x5eed0003,
                                 std::move(stages)));
    }

    // absolute schedule finishing early
    out.push_back(make_problem(
        "d5-abs", 5, 24, 0.1, LossKind::smooth_abs_margin, 0x5eed0004,
        {StageSpec{true, 0.0, 1, coord_range(2)},
         StageSpec{true, 0.0, 11, coord_range(3)},
         StageSpec{true, 0.0, 31, coord_range(4)},
         StageSpec{true, 0.0, 61, coord_range(5)}}));

    return out;
  }();
  return problems;
}

void write_experiment_jsonl(const ExperimentResult& result, std::ostream& os) {
  nlohmann::json summary{
      {"record", "summary"},
      {"instance", result.instance},
      {"T", result.T},
      {"seeds", result.n_seeds},
      {"comparator_avg", result.comparator_avg},
      {"lhs_mean", result.lhs_mean},
      {"lambda", result.lambda},
      {"X", result.X},
      {"D", result.D},
      {"G", result.G},
      {"beta_bound", result.beta_bound},
      {"bound_theorem1", result.bound_theorem1},
      {"bound_generic_expectation",
       bound_rhs_generic(result.beta_bound, result.G, result.lambda, result.T,
                         0.0)},
      {"bound_holds", result.bound_holds},
      {"dev_mean", result.dev_mean},
      {"dev_stderr", result.dev_stderr},
  };
  os << summary.dump() << '\n';
  for (const auto& tr : result.per_seed) {
    nlohmann::json line{
        {"record", "seed"},   {"instance", result.instance},
        {"T", result.T},      {"seed", tr.seed},
        {"lhs", tr.lhs},      {"final_f", tr.final_f},
        {"dev_sum", tr.dev_sum}, {"max_w_norm", tr.max_w_norm},
        {"max_g_norm", tr.max_g_norm},
    };
    os << line.dump() << '\n';
  }
  for (const auto& st : result.first_seed_steps) {
    nlohmann::json line{
        {"record", "step"}, {"instance", result.instance},
        {"T", result.T},    {"t", st.t},
        {"f_w", st.f_w},    {"eta", st.eta},
        {"f_u", st.f_u},    {"support", st.support},
        {"dev", st.dev},
    };
    os << line.dump() << '\n';
  }
}

}  // namespace stagepoly::regret
