#include "stagepoly/features.hpp"

#include <algorithm>

namespace stagepoly {

namespace {
// Domain-separation salts so token ids, pair ids and monomial slots do not
// alias each other under the same seed.
constexpr std::uint64_t kMonomialSalt = 0x243f6a8885a308d3ULL;
constexpr std::uint64_t kTokenSalt = 0x13198a2e03707344ULL;
constexpr std::uint64_t kPairSalt = 0xa4093822299f31d0ULL;
}  // namespace

Monomial canonicalize(std::vector<VarId> ids) {
  if (ids.empty()) throw InvalidMonomial("monomial needs at least one variable");
  std::sort(ids.begin(), ids.end());
  return Monomial{std::move(ids)};
}

std::uint64_t monomial_hash64(const Monomial& m, std::uint64_t seed) noexcept {
  std::uint64_t h = mix64(seed ^ kMonomialSalt);
  for (VarId v : m.vars) h = mix64(h ^ mix64(v + 0x9e3779b97f4a7c15ULL));
  // fold in the degree so prefixes cannot alias
  return mix64(h ^ static_cast<std::uint64_t>(m.vars.size()));
}

void HashConfig::validate() const {
  if (bits < 1 || bits > 31)
    throw InvalidParam("hash bits must be in [1, 31]");
}

std::uint32_t hash_monomial(const Monomial& m, const HashConfig& cfg) noexcept {
  return static_cast<std::uint32_t>(monomial_hash64(m, cfg.seed) &
                                    (cfg.table_size() - 1));
}

VarId hash_token(std::string_view token, const HashConfig& cfg) noexcept {
  // FNV-1a over the bytes, then seed-mixed and masked to the table.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : token) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  h = mix64(h ^ mix64(cfg.seed ^ kTokenSalt));
  return static_cast<VarId>(h & (cfg.table_size() - 1));
}

VarId pair_feature_id(VarId first, VarId second, const HashConfig& cfg) noexcept {
  std::uint64_t h = mix64(cfg.seed ^ kPairSalt);
  h = mix64(h ^ mix64(first + 0x9e3779b97f4a7c15ULL));
  h = mix64(h ^ mix64(second + 0x9e3779b97f4a7c15ULL));
  return h;
}

void expand_terms(const Example& ex, const ParentSet& parents,
                  std::uint32_t max_degree, const HashConfig& cfg,
                  std::vector<Term>& out) {
  out.clear();
  if (ex.features.empty()) return;

  std::unordered_set<Monomial, MonomialHash> seen;
  seen.reserve(ex.features.size() * 4);
  // parents already emitted, awaiting child expansion
  std::vector<std::pair<Monomial, double>> pending;

  auto emit = [&](Monomial m, double value) {
    auto [it, fresh] = seen.insert(std::move(m));
    if (!fresh) return;
    const Monomial& key = *it;
    out.push_back(Term{key, hash_monomial(key, cfg), value});
    if (key.degree() < max_degree && parents.contains(key))
      pending.emplace_back(key, value);
  };

  for (const auto& [id, value] : ex.features) emit(Monomial{{id}}, value);

  while (!pending.empty()) {
    auto [mono, mval] = std::move(pending.back());
    pending.pop_back();
    for (const auto& [id, value] : ex.features) {
      Monomial child = mono;
      child.vars.insert(
          std::upper_bound(child.vars.begin(), child.vars.end(), id), id);
      emit(std::move(child), mval * value);
    }
  }
}

std::vector<Term> expand_terms(const Example& ex, const ParentSet& parents,
                               std::uint32_t max_degree, const HashConfig& cfg) {
  std::vector<Term> out;
  expand_terms(ex, parents, max_degree, cfg, out);
  return out;
}

SparseVector collapse_terms(const std::vector<Term>& terms) {
  SparseVector v;
  v.reserve(terms.size());
  for (const Term& t : terms) v.emplace_back(t.index, t.value);
  std::sort(v.begin(), v.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  SparseVector out;
  out.reserve(v.size());
  for (const auto& [idx, val] : v) {
    if (!out.empty() && out.back().first == idx)
      out.back().second += val;
    else
      out.emplace_back(idx, val);
  }
  return out;
}

SparseVector expand_example(const Example& ex, const ParentSet& parents,
                            std::uint32_t max_degree, const HashConfig& cfg) {
  return collapse_terms(expand_terms(ex, parents, max_degree, cfg));
}

}  // namespace stagepoly
