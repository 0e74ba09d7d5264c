#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "stagepoly/learner.hpp"

namespace stagepoly::par {

/// Simulated cluster layout: one stream per shard (a partition of the
/// dataset), a pass count, and the base expansion the learner composes on.
struct ShardPlan {
  std::vector<std::shared_ptr<ExampleStream>> shards;
  std::uint32_t passes = 5;         // pass 1 discovers, the rest average
  bool weight_by_examples = false;  // else uniform shard averaging
};

struct ShardOutcome {
  std::vector<Monomial> parents;  // sorted
  Model model;                    // weights after the discovery pass
  std::uint64_t examples = 0;
};

/// Pass 1: each shard runs the full staged-expansion loop on its local
/// stream (concurrently). A shard failure aborts the whole job.
std::vector<ShardOutcome> phase1_discover(ShardPlan& plan,
                                          const LearnerConfig& cfg);

/// Union of the locally discovered parents, frozen for the remaining
/// passes.
ExpansionState union_and_freeze(
    const std::vector<std::vector<Monomial>>& parent_sets,
    const LearnerConfig& cfg);

/// passes-1 further passes: every shard trains locally from the current
/// global weights over the frozen support; at each pass end the global
/// weights become the shard average (fixed shard order, then scale).
Model averaged_passes(ShardPlan& plan, const ExpansionState& frozen,
                      const LearnerConfig& cfg,
                      const std::vector<ShardOutcome>& phase1);

/// Exact Mann-Whitney AUC with ties counted 1/2. Labels are 0/1; throws
/// UndefinedAUC when only one class is present.
double auc(const std::vector<double>& scores, const std::vector<int>& labels);

}  // namespace stagepoly::par
