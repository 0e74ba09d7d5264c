#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <unordered_map>
#include <vector>

#include "stagepoly/features.hpp"

namespace stagepoly {

// Candidates whose mean squared value estimate falls below this are not
// scoreable under the residual heuristic.
inline constexpr double kSsmDenominatorFloor = 1e-12;

struct RegistryEntry {
  std::uint32_t index = 0;  // hashed weight slot
  // residual-heuristic running sums, reset at each epoch boundary
  double sum_r2m2 = 0.0;
  double sum_m2 = 0.0;
  std::uint64_t count = 0;
};

struct CandidateScore {
  Monomial monomial;
  double score = 0.0;
  std::uint32_t tiebreak = 0;  // hash index
};

/// The evolving support of the staged expansion: the epoch counter, the
/// parent set, the registry of every monomial materialized so far, and the
/// expansion schedule. Mutated by exactly one training thread; read-only
/// snapshots may be shared for prediction.
struct ExpansionState {
  std::uint32_t epoch = 1;
  ParentSet parents;
  std::unordered_map<Monomial, RegistryEntry, MonomialHash> registry;
  std::vector<std::uint64_t> schedule;  // expansion points, strictly increasing
  double alpha = 1.0;
  std::uint32_t max_degree = 8;
  std::size_t max_registry = std::size_t{1} << 18;
  bool frozen = false;  // set when the parent set is fixed for good

  // running mean of base-feature nonzeros per example
  std::uint64_t examples_seen = 0;
  double input_nnz_sum = 0.0;
  std::set<VarId> base_vars;  // universe observed so far (sorted)

  double avg_nnz() const noexcept {
    return examples_seen ? input_nnz_sum / static_cast<double>(examples_seen)
                         : 0.0;
  }

  void observe_example(const Example& ex);

  /// Inserts the monomial if the registry has room; no-op when present.
  RegistryEntry* register_term(const Monomial& m, std::uint32_t index);

  void record_ssm(RegistryEntry& entry, double value, double residual);
  void reset_ssm_stats();
};

/// Parent budget: max(1, round(avg_nnz^alpha)).
std::uint64_t compute_budget(double avg_nnz, double alpha);

/// Top-budget non-parent registry monomials by |weight| at their slot,
/// best first. Ties: ascending slot index, then lexicographic vars.
std::vector<Monomial> select_parents_weight(const ExpansionState& state,
                                            std::span<const double> weights,
                                            std::uint64_t budget);

/// Top-budget non-parent registry monomials by the running estimate of
/// E[r^2 m^2]/E[m^2]; candidates with a degenerate denominator estimate are
/// excluded. Same tie-breaking as the weight heuristic.
std::vector<Monomial> select_parents_ssm(const ExpansionState& state,
                                         std::uint64_t budget);

/// Reserves one slot for the smallest-degree non-parent monomial over the
/// base variables seen so far (lexicographic within a degree). Appends when
/// the budget allows, otherwise replaces the lowest-scored pick. Unchanged
/// if the candidate is already picked or no candidate exists.
std::vector<Monomial> apply_fallback(std::vector<Monomial> picks,
                                     const ExpansionState& state,
                                     std::uint64_t budget);

/// Marks the picks as parents and advances the epoch. Children enter the
/// registry lazily when first materialized during training. Throws
/// InvalidExpansion if a pick is already a parent.
void expand_support(ExpansionState& state, const std::vector<Monomial>& picks,
                    const HashConfig& cfg);

/// All monomials of degree <= degree over the example's support (with
/// repetition), hashed and collision-summed. Degree 1 is the raw example.
std::vector<Term> nonadaptive_terms(const Example& ex, std::uint32_t degree,
                                    const HashConfig& cfg);
SparseVector nonadaptive_expand(const Example& ex, std::uint32_t degree,
                                const HashConfig& cfg);

/// Base features plus one conjunction feature per consecutive feature pair
/// (token order); 2n-1 features for an n-feature example.
Example bigram_expand(const Example& ex, const HashConfig& cfg);

// state-bound wrappers over the recursive expansion
void expand_terms(const Example& ex, const ExpansionState& state,
                  const HashConfig& cfg, std::vector<Term>& out);
SparseVector expand_example(const Example& ex, const ExpansionState& state,
                            const HashConfig& cfg);

}  // namespace stagepoly
