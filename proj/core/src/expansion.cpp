#include "stagepoly/expansion.hpp"

#include <algorithm>
#include <cmath>

namespace stagepoly {

void ExpansionState::observe_example(const Example& ex) {
  ++examples_seen;
  input_nnz_sum += static_cast<double>(ex.features.size());
  for (const auto& [id, value] : ex.features) base_vars.insert(id);
}

RegistryEntry* ExpansionState::register_term(const Monomial& m,
                                             std::uint32_t index) {
  auto it = registry.find(m);
  if (it != registry.end()) return &it->second;
  if (registry.size() >= max_registry) return nullptr;
  auto [ins, ok] = registry.emplace(m, RegistryEntry{index});
  return &ins->second;
}

void ExpansionState::record_ssm(RegistryEntry& entry, double value,
                                double residual) {
  const double m2 = value * value;
  entry.sum_r2m2 += residual * residual * m2;
  entry.sum_m2 += m2;
  ++entry.count;
}

void ExpansionState::reset_ssm_stats() {
  for (auto& [mono, entry] : registry) {
    entry.sum_r2m2 = 0.0;
    entry.sum_m2 = 0.0;
    entry.count = 0;
  }
}

std::uint64_t compute_budget(double avg_nnz, double alpha) {
  if (avg_nnz < 0.0 || alpha <= 0.0)
    throw InvalidParam("budget needs avg_nnz >= 0 and alpha > 0");
  const double raw = std::pow(avg_nnz, alpha);
  if (raw >= 1e18) return static_cast<std::uint64_t>(1e18);
  const auto rounded = static_cast<std::uint64_t>(std::llround(raw));
  return std::max<std::uint64_t>(1, rounded);
}

namespace {

bool candidate_before(const CandidateScore& a, const CandidateScore& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.tiebreak != b.tiebreak) return a.tiebreak < b.tiebreak;
  return a.monomial.vars < b.monomial.vars;
}

std::vector<Monomial> take_top(std::vector<CandidateScore>& scored,
                               std::uint64_t budget) {
  std::sort(scored.begin(), scored.end(), candidate_before);
  if (scored.size() > budget) scored.resize(budget);
  std::vector<Monomial> picks;
  picks.reserve(scored.size());
  for (auto& c : scored) picks.push_back(std::move(c.monomial));
  return picks;
}

}  // namespace

std::vector<Monomial> select_parents_weight(const ExpansionState& state,
                                            std::span<const double> weights,
                                            std::uint64_t budget) {
  std::vector<CandidateScore> scored;
  scored.reserve(state.registry.size());
  for (const auto& [mono, entry] : state.registry) {
    if (state.parents.contains(mono)) continue;
    scored.push_back(
        CandidateScore{mono, std::abs(weights[entry.index]), entry.index});
  }
  return take_top(scored, budget);
}

std::vector<Monomial> select_parents_ssm(const ExpansionState& state,
                                         std::uint64_t budget) {
  std::vector<CandidateScore> scored;
  scored.reserve(state.registry.size());
  for (const auto& [mono, entry] : state.registry) {
    if (state.parents.contains(mono)) continue;
    if (entry.count == 0) continue;
    const double mean_m2 = entry.sum_m2 / static_cast<double>(entry.count);
    if (mean_m2 < kSsmDenominatorFloor) continue;
    scored.push_back(
        CandidateScore{mono, entry.sum_r2m2 / entry.sum_m2, entry.index});
  }
  return take_top(scored, budget);
}

namespace {

// First monomial in (degree, lex) order over the seen base variables that
// is not yet a parent. Enumeration is an odometer over sorted combinations
// with repetition; it stops at the first gap, so the work is bounded by the
// number of parents it skips.
std::optional<Monomial> smallest_missing(const ExpansionState& state) {
  if (state.base_vars.empty()) return std::nullopt;
  std::vector<VarId> universe(state.base_vars.begin(), state.base_vars.end());
  const std::size_t n = universe.size();
  for (std::uint32_t deg = 1; deg <= state.max_degree; ++deg) {
    std::vector<std::size_t> pos(deg, 0);  // non-decreasing positions
    for (;;) {
      Monomial candidate;
      candidate.vars.reserve(deg);
      for (std::size_t p : pos) candidate.vars.push_back(universe[p]);
      if (!state.parents.contains(candidate)) return candidate;
      // advance odometer
      std::size_t i = deg;
      while (i > 0) {
        --i;
        if (pos[i] + 1 < n) {
          ++pos[i];
          for (std::size_t j = i + 1; j < deg; ++j) pos[j] = pos[i];
          break;
        }
        if (i == 0) goto next_degree;
      }
    }
  next_degree:;
  }
  return std::nullopt;
}

}  // namespace

std::vector<Monomial> apply_fallback(std::vector<Monomial> picks,
                                     const ExpansionState& state,
                                     std::uint64_t budget) {
  auto candidate = smallest_missing(state);
  if (!candidate) return picks;
  if (std::find(picks.begin(), picks.end(), *candidate) != picks.end())
    return picks;
  if (picks.size() < budget)
    picks.push_back(std::move(*candidate));
  else if (!picks.empty())
    picks.back() = std::move(*candidate);  // consume the lowest-scored slot
  else
    picks.push_back(std::move(*candidate));
  return picks;
}

void expand_support(ExpansionState& state, const std::vector<Monomial>& picks,
                    const HashConfig& cfg) {
  if (state.frozen) throw InvalidExpansion("support is frozen");
  for (const Monomial& m : picks)
    if (state.parents.contains(m))
      throw InvalidExpansion("pick is already a parent");
  for (const Monomial& m : picks) {
    // fallback picks may not have materialized yet; keep parents within
    // the registry so selection state stays consistent
    auto it = state.registry.find(m);
    if (it == state.registry.end())
      state.registry.emplace(m, RegistryEntry{hash_monomial(m, cfg)});
    state.parents.insert(m);
  }
  ++state.epoch;
}

namespace {

void enumerate_upto(const std::vector<std::pair<VarId, double>>& feats,
                    std::uint32_t degree, const HashConfig& cfg,
                    std::size_t start, Monomial& current, double value,
                    std::vector<Term>& out) {
  for (std::size_t i = start; i < feats.size(); ++i) {
    current.vars.push_back(feats[i].first);
    const double v = value * feats[i].second;
    out.push_back(Term{current, hash_monomial(current, cfg), v});
    if (current.degree() < degree)
      enumerate_upto(feats, degree, cfg, i, current, v, out);
    current.vars.pop_back();
  }
}

}  // namespace

std::vector<Term> nonadaptive_terms(const Example& ex, std::uint32_t degree,
                                    const HashConfig& cfg) {
  std::vector<Term> out;
  if (ex.features.empty() || degree == 0) return out;
  auto feats = ex.features;
  std::sort(feats.begin(), feats.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  Monomial scratch;
  scratch.vars.reserve(degree);
  enumerate_upto(feats, degree, cfg, 0, scratch, 1.0, out);
  return out;
}

SparseVector nonadaptive_expand(const Example& ex, std::uint32_t degree,
                                const HashConfig& cfg) {
  return collapse_terms(nonadaptive_terms(ex, degree, cfg));
}

Example bigram_expand(const Example& ex, const HashConfig& cfg) {
  Example out;
  out.label = ex.label;
  out.importance = ex.importance;
  out.features.reserve(ex.features.empty() ? 0 : 2 * ex.features.size() - 1);
  auto add = [&](VarId id, double v) {
    for (auto& [eid, ev] : out.features)
      if (eid == id) {
        ev += v;  // id collision: merge like duplicate tokens
        return;
      }
    out.features.emplace_back(id, v);
  };
  for (const auto& [id, v] : ex.features) add(id, v);
  for (std::size_t i = 0; i + 1 < ex.features.size(); ++i) {
    const auto& a = ex.features[i];
    const auto& b = ex.features[i + 1];
    add(pair_feature_id(a.first, b.first, cfg), a.second * b.second);
  }
  return out;
}

void expand_terms(const Example& ex, const ExpansionState& state,
                  const HashConfig& cfg, std::vector<Term>& out) {
  expand_terms(ex, state.parents, state.max_degree, cfg, out);
}

SparseVector expand_example(const Example& ex, const ExpansionState& state,
                            const HashConfig& cfg) {
  return expand_example(ex, state.parents, state.max_degree, cfg);
}

}  // namespace stagepoly
