#include "stagepoly/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <thread>

namespace stagepoly::par {

std::vector<ShardOutcome> phase1_discover(ShardPlan& plan,
                                          const LearnerConfig& cfg) {
  if (plan.shards.empty()) throw InvalidParam("shard plan has no shards");
  if (plan.passes < 2) throw InvalidParam("shard plan needs passes >= 2");

  LearnerConfig local = cfg;
  local.map = FeatureMap::adaptive;
  local.passes = 1;  // discovery runs over the local pass only

  const std::size_t n = plan.shards.size();
  std::vector<ShardOutcome> out(n);
  std::vector<std::exception_ptr> errors(n);

  auto run_shard = [&](std::size_t i) {
    try {
      TrainReport report = train(*plan.shards[i], local);
      ShardOutcome& o = out[i];
      o.examples = report.examples_seen;
      o.parents.assign(report.model.state.parents.begin(),
                       report.model.state.parents.end());
      std::sort(o.parents.begin(), o.parents.end());
      o.model = std::move(report.model);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };

  std::vector<std::thread> threads;
  threads.reserve(n);
  for (std::size_t i = 0; i < n; ++i) threads.emplace_back(run_shard, i);
  for (auto& th : threads) th.join();

  for (std::size_t i = 0; i < n; ++i)
    if (errors[i]) std::rethrow_exception(errors[i]);  // no partial union
  return out;
}

ExpansionState union_and_freeze(
    const std::vector<std::vector<Monomial>>& parent_sets,
    const LearnerConfig& cfg) {
  if (parent_sets.empty()) throw InvalidParam("no parent sets to union");
  const HashConfig hash = cfg.hash();
  ExpansionState state;
  state.alpha = cfg.alpha;
  state.max_degree = cfg.max_degree;
  state.max_registry = cfg.max_registry.value_or(hash.table_size());
  for (const auto& set : parent_sets)
    for (const Monomial& m : set) {
      if (state.parents.insert(m).second)
        state.registry.emplace(m, RegistryEntry{hash_monomial(m, hash)});
    }
  state.frozen = true;
  return state;
}

namespace {

// fixed shard order, pairwise accumulation, then scale
void average_into(std::vector<double>& global,
                  const std::vector<const std::vector<double>*>& locals,
                  const std::vector<double>& weights) {
  const std::size_t n = global.size();
  std::fill(global.begin(), global.end(), 0.0);
  for (std::size_t s = 0; s < locals.size(); ++s) {
    const auto& src = *locals[s];
    const double wgt = weights[s];
    for (std::size_t i = 0; i < n; ++i) global[i] += wgt * src[i];
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(global[i]))
      throw NumericOverflow("non-finite averaged weight");
  }
}

}  // namespace

Model averaged_passes(ShardPlan& plan, const ExpansionState& frozen,
                      const LearnerConfig& cfg,
                      const std::vector<ShardOutcome>& phase1) {
  if (phase1.size() != plan.shards.size())
    throw InvalidParam("phase-1 outcomes do not match the shard plan");
  const std::size_t n = plan.shards.size();

  std::vector<double> shard_weight(n, 1.0 / static_cast<double>(n));
  if (plan.weight_by_examples) {
    double total = 0.0;
    for (const auto& o : phase1) total += static_cast<double>(o.examples);
    for (std::size_t i = 0; i < n; ++i)
      shard_weight[i] = static_cast<double>(phase1[i].examples) / total;
  }

  // global model starts from the averaged discovery-pass weights
  Model global;
  global.map = FeatureMap::adaptive;
  global.bigram = cfg.bigram;
  global.hash = cfg.hash();
  global.max_degree = cfg.max_degree;
  global.state = frozen;
  global.weights = WeightVector(cfg.bits, cfg.step_mode == StepMode::adaptive);
  {
    std::vector<const std::vector<double>*> locals;
    for (const auto& o : phase1) locals.push_back(&o.model.weights.weights);
    average_into(global.weights.weights, locals, shard_weight);
    if (cfg.step_mode == StepMode::adaptive) {
      locals.clear();
      for (const auto& o : phase1) locals.push_back(&o.model.weights.grad_sq);
      average_into(global.weights.grad_sq, locals, shard_weight);
    }
  }

  std::vector<std::uint64_t> t_counters(n);
  for (std::size_t i = 0; i < n; ++i) t_counters[i] = phase1[i].examples;

  std::vector<Model> locals(n);
  std::vector<std::exception_ptr> errors(n);
  for (std::uint32_t pass = 1; pass < plan.passes; ++pass) {
    for (std::size_t i = 0; i < n; ++i) locals[i] = global;

    auto run_shard = [&](std::size_t i) {
      try {
        t_counters[i] =
            train_frozen(*plan.shards[i], locals[i], cfg, t_counters[i]);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    };
    std::vector<std::thread> threads;
    threads.reserve(n);
    for (std::size_t i = 0; i < n; ++i) threads.emplace_back(run_shard, i);
    for (auto& th : threads) th.join();
    for (std::size_t i = 0; i < n; ++i)
      if (errors[i]) std::rethrow_exception(errors[i]);

    std::vector<const std::vector<double>*> views;
    for (const auto& m : locals) views.push_back(&m.weights.weights);
    average_into(global.weights.weights, views, shard_weight);
    if (cfg.step_mode == StepMode::adaptive) {
      views.clear();
      for (const auto& m : locals) views.push_back(&m.weights.grad_sq);
      average_into(global.weights.grad_sq, views, shard_weight);
    }
  }
  return global;
}

double auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size() || scores.empty())
    throw InvalidParam("auc needs matching nonempty scores and labels");

  std::vector<std::size_t> order(scores.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] < scores[b];
  });

  // midranks over tie groups
  std::vector<double> rank(scores.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]])
      ++j;
    const double mid = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = mid;
    i = j + 1;
  }

  std::uint64_t n_pos = 0, n_neg = 0;
  double rank_sum_pos = 0.0;
  for (std::size_t k = 0; k < labels.size(); ++k) {
    if (labels[k] > 0) {
      ++n_pos;
      rank_sum_pos += rank[k];
    } else {
      ++n_neg;
    }
  }
  if (n_pos == 0 || n_neg == 0)
    throw UndefinedAUC("auc needs both classes present");

  const double u = rank_sum_pos -
                   static_cast<double>(n_pos) *
                       (static_cast<double>(n_pos) + 1.0) / 2.0;
  return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

}  // namespace stagepoly::par
