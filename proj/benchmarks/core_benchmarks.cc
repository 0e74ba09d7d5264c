#include <benchmark/benchmark.h>

#include <random>

#include "stagepoly/expansion.hpp"
#include "stagepoly/io.hpp"
#include "stagepoly/learner.hpp"
#include "stagepoly/parallel.hpp"

using namespace stagepoly;

namespace {

const HashConfig kCfg{18, 0};

Example dense_example(unsigned nnz) {
  Example ex;
  for (VarId v = 0; v < nnz; ++v)
    ex.features.emplace_back(v * 37 + 5, 0.5 + 0.01 * v);
  ex.label = 1.0;
  return ex;
}

ParentSet parents_of_degree1(unsigned count) {
  ParentSet parents;
  for (VarId v = 0; v < count; ++v) parents.insert(Monomial{{v * 37 + 5}});
  return parents;
}

void BM_HashMonomial(benchmark::State& state) {
  const Monomial m = canonicalize({17, 3, 3, 91});
  for (auto _ : state) benchmark::DoNotOptimize(hash_monomial(m, kCfg));
}
BENCHMARK(BM_HashMonomial);

void BM_ExpandLinear(benchmark::State& state) {
  const Example ex = dense_example(static_cast<unsigned>(state.range(0)));
  const ParentSet none;
  std::vector<Term> out;
  for (auto _ : state) {
    expand_terms(ex, none, 8, kCfg, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * ex.features.size());
}
BENCHMARK(BM_ExpandLinear)->Arg(10)->Arg(50)->Arg(200);

void BM_ExpandWithParents(benchmark::State& state) {
  const Example ex = dense_example(20);
  const ParentSet parents = parents_of_degree1(static_cast<unsigned>(state.range(0)));
  std::vector<Term> out;
  for (auto _ : state) {
    expand_terms(ex, parents, 8, kCfg, out);
    benchmark::DoNotOptimize(out.data());
  }
}
BENCHMARK(BM_ExpandWithParents)->Arg(2)->Arg(8)->Arg(20);

void BM_NonadaptiveCubic(benchmark::State& state) {
  const Example ex = dense_example(static_cast<unsigned>(state.range(0)));
  for (auto _ : state) {
    auto terms = nonadaptive_terms(ex, 3, kCfg);
    benchmark::DoNotOptimize(terms.data());
  }
}
BENCHMARK(BM_NonadaptiveCubic)->Arg(10)->Arg(20);

void BM_ParseExample(benchmark::State& state) {
  const std::string line =
      "1 | height:0.5 weight:2.25 rings:9 diameter:0.41 whole:1.2 "
      "shucked:0.9 viscera:0.3 shell:0.25";
  for (auto _ : state) {
    Example ex = parse_example(line, Task::binary, kCfg);
    benchmark::DoNotOptimize(ex.features.data());
  }
}
BENCHMARK(BM_ParseExample);

void BM_SgdStep(benchmark::State& state) {
  WeightVector w(18, true);
  const Example ex = dense_example(30);
  const auto feats = expand_example(ex, parents_of_degree1(8), 8, kCfg);
  for (auto _ : state) {
    auto g = gradient(w, feats, 1.0, 0.0);
    sgd_step_adaptive(w, g, 0.1);
    benchmark::DoNotOptimize(w.weights.data());
  }
}
BENCHMARK(BM_SgdStep);

void BM_Auc(benchmark::State& state) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const auto n = static_cast<std::size_t>(state.range(0));
  std::vector<double> scores(n);
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    scores[i] = std::round(unif(rng) * 64.0) / 64.0;
    labels[i] = i % 4 == 0;
  }
  for (auto _ : state) benchmark::DoNotOptimize(par::auc(scores, labels));
}
BENCHMARK(BM_Auc)->Arg(1000)->Arg(100000);

}  // namespace

BENCHMARK_MAIN();
