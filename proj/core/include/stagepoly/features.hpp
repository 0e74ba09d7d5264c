#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <vector>

#include "stagepoly/error.hpp"

namespace stagepoly {

using VarId = std::uint64_t;

// splitmix64 finalizer; the mixing step behind all hashing in this library.
inline std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// A product of base variables, stored as the sorted multiset of their ids.
/// Repeated ids encode powers. The sorted form is the canonical identity:
/// two monomials are equal iff their var sequences are equal.
struct Monomial {
  std::vector<VarId> vars;

  std::size_t degree() const noexcept { return vars.size(); }
  bool operator==(const Monomial&) const = default;
  auto operator<=>(const Monomial&) const = default;  // lexicographic
};

/// Sorts ids into canonical form. Idempotent. Throws InvalidMonomial on
/// empty input.
Monomial canonicalize(std::vector<VarId> ids);

std::uint64_t monomial_hash64(const Monomial& m, std::uint64_t seed) noexcept;

struct MonomialHash {
  std::size_t operator()(const Monomial& m) const noexcept {
    return static_cast<std::size_t>(monomial_hash64(m, 0));
  }
};

using ParentSet = std::unordered_set<Monomial, MonomialHash>;

struct HashConfig {
  std::uint32_t bits = 18;
  std::uint64_t seed = 0;

  std::uint32_t table_size() const noexcept { return 1u << bits; }
  void validate() const;  // 1 <= bits <= 31
};

/// Deterministic b-bit slot index of a canonical monomial. Stable across
/// runs and processes for a fixed (monomial, config).
std::uint32_t hash_monomial(const Monomial& m, const HashConfig& cfg) noexcept;

/// Base-variable id for a text token (salted differently from monomial
/// hashing, masked to the same b-bit space).
VarId hash_token(std::string_view token, const HashConfig& cfg) noexcept;

/// Base-variable id for an adjacent-pair conjunction feature. Full 64-bit
/// (not masked) so distinct pairs keep distinct ids.
VarId pair_feature_id(VarId first, VarId second, const HashConfig& cfg) noexcept;

/// One streaming input record: sparse base features (ids unique, input
/// order preserved), a label, and an importance weight.
struct Example {
  std::vector<std::pair<VarId, double>> features;
  double label = 0.0;
  double importance = 1.0;
};

/// A materialized feature: the monomial identity, its hashed slot, and its
/// value on the example (product of var values with multiplicity).
struct Term {
  Monomial mono;
  std::uint32_t index = 0;
  double value = 0.0;
};

/// (slot index, value) pairs, sorted by index, one entry per slot.
using SparseVector = std::vector<std::pair<std::uint32_t, double>>;

/// Recursive on-the-fly expansion of an example against a parent set:
/// emits every base feature, then for each reachable parent whose vars all
/// appear in the example, its products with the example's base features.
/// Each reachable monomial is emitted once per identity.
void expand_terms(const Example& ex, const ParentSet& parents,
                  std::uint32_t max_degree, const HashConfig& cfg,
                  std::vector<Term>& out);

std::vector<Term> expand_terms(const Example& ex, const ParentSet& parents,
                               std::uint32_t max_degree, const HashConfig& cfg);

/// Sums the values of terms that share a slot. Result sorted by index.
SparseVector collapse_terms(const std::vector<Term>& terms);

/// expand_terms followed by collapse_terms: the hashed feature vector.
SparseVector expand_example(const Example& ex, const ParentSet& parents,
                            std::uint32_t max_degree, const HashConfig& cfg);

}  // namespace stagepoly
