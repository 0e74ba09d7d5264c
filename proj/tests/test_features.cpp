#include <doctest.h>

#include <random>
#include <set>
#include <unordered_set>

#include "oracles.hpp"
#include "stagepoly/expansion.hpp"
#include "stagepoly/features.hpp"

using namespace stagepoly;

TEST_CASE("canonicalize sorts ids") {
  CHECK(canonicalize({3, 1, 1}).vars == std::vector<VarId>{1, 1, 3});
  CHECK(canonicalize({7}).vars == std::vector<VarId>{7});
}

TEST_CASE("canonicalize rejects empty input") {
  CHECK_THROWS_AS(canonicalize({}), InvalidMonomial);
}

TEST_CASE("canonicalize is idempotent and permutation-invariant") {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<VarId> pick(0, 50);
  std::uniform_int_distribution<int> len(1, 6);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<VarId> ids(len(rng));
    for (auto& id : ids) id = pick(rng);
    const Monomial once = canonicalize(ids);
    CHECK(canonicalize(once.vars) == once);
    std::shuffle(ids.begin(), ids.end(), rng);
    CHECK(canonicalize(ids) == once);
  }
}

TEST_CASE("hash_monomial is deterministic and in range") {
  const HashConfig cfg{18, 42};
  const Monomial m = canonicalize({5, 2, 9});
  CHECK(hash_monomial(m, cfg) == hash_monomial(m, cfg));
  for (VarId v = 0; v < 1000; ++v)
    CHECK(hash_monomial(Monomial{{v}}, cfg) < (1u << 18));
}

TEST_CASE("hash_monomial mixes: degree-1 ids 0..9999 at 18 bits") {
  const HashConfig cfg{18, 0};
  std::set<std::uint32_t> seen;
  for (VarId v = 0; v < 10000; ++v)
    seen.insert(hash_monomial(Monomial{{v}}, cfg));
  CHECK(seen.size() > 9800);
  // regression fixture for this exact hash
  CHECK(seen.size() == 9821);
}

TEST_CASE("expansion with no parents yields exactly the base features") {
  const HashConfig cfg{18, 0};
  Example ex;
  ex.features = {{1, 2.0}, {2, 3.0}};
  const auto terms = expand_terms(ex, ParentSet{}, 8, cfg);
  REQUIRE(terms.size() == 2);
  CHECK(terms[0].mono == Monomial{{1}});
  CHECK(terms[0].value == 2.0);
  CHECK(terms[1].mono == Monomial{{2}});
  CHECK(terms[1].value == 3.0);
}

namespace {

std::map<Monomial, double> term_map(const std::vector<Term>& terms) {
  std::map<Monomial, double> out;
  for (const Term& t : terms) out.emplace(t.mono, t.value);
  return out;
}

}  // namespace

TEST_CASE("one degree-1 parent expands into squares and pairs") {
  const HashConfig cfg{18, 0};
  ParentSet parents{Monomial{{1}}};
  Example ex;
  ex.features = {{1, 2.0}, {2, 3.0}};
  const auto got = term_map(expand_terms(ex, parents, 8, cfg));
  const std::map<Monomial, double> want{
      {Monomial{{1}}, 2.0},
      {Monomial{{2}}, 3.0},
      {Monomial{{1, 1}}, 4.0},
      {Monomial{{1, 2}}, 6.0},
  };
  CHECK(got == want);
}

TEST_CASE("chained parents reach degree 3") {
  const HashConfig cfg{18, 0};
  ParentSet parents{Monomial{{1}}, Monomial{{1, 2}}};
  Example ex;
  ex.features = {{1, 1.0}, {2, 1.0}};
  const auto got = term_map(expand_terms(ex, parents, 8, cfg));
  const std::map<Monomial, double> want{
      {Monomial{{1}}, 1.0},          {Monomial{{2}}, 1.0},
      {Monomial{{1, 1}}, 1.0},       {Monomial{{1, 2}}, 1.0},
      {Monomial{{1, 1, 2}}, 1.0},    {Monomial{{1, 2, 2}}, 1.0},
  };
  CHECK(got == want);
}

TEST_CASE("expansion equals the fixpoint closure on random parent DAGs") {
  const HashConfig cfg{18, 3};
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 60; ++trial) {
    const unsigned d = 3 + static_cast<unsigned>(rng() % 6);  // up to 8 vars
    std::vector<VarId> universe(d);
    for (unsigned i = 0; i < d; ++i) universe[i] = i;

    // grow a legitimate parent set through up to 3 expansion rounds
    std::set<Monomial> parents;
    for (int round = 0; round < 3; ++round) {
      auto closure =
          oracles::closure_materializable(universe, parents, 8);
      std::vector<Monomial> pool(closure.begin(), closure.end());
      std::shuffle(pool.begin(), pool.end(), rng);
      for (std::size_t k = 0; k < pool.size() && k < 2; ++k)
        parents.insert(pool[k]);
    }

    // random example over a subset of the universe
    Example ex;
    for (unsigned i = 0; i < d; ++i)
      if (rng() % 2) ex.features.emplace_back(universe[i], 1.0 + i);
    std::vector<VarId> support;
    for (auto& [id, value] : ex.features) support.push_back(id);

    ParentSet pset(parents.begin(), parents.end());
    const auto terms = expand_terms(ex, pset, 8, cfg);
    std::set<Monomial> got;
    for (const Term& t : terms) got.insert(t.mono);
    CHECK(got == oracles::closure_materializable(support, parents, 8));
    CHECK(got.size() == terms.size());  // once per identity
  }
}

TEST_CASE("max emitted degree is bounded by expansions plus one") {
  const HashConfig cfg{18, 5};
  std::vector<VarId> universe{0, 1, 2, 3};
  std::set<Monomial> parents;
  Example ex;
  for (VarId v : universe) ex.features.emplace_back(v, 1.0);

  for (int expansions = 0; expansions <= 4; ++expansions) {
    ParentSet pset(parents.begin(), parents.end());
    std::size_t max_deg = 0;
    for (const Term& t : expand_terms(ex, pset, 16, cfg))
      max_deg = std::max(max_deg, t.mono.degree());
    CHECK(max_deg <= static_cast<std::size_t>(expansions) + 1);
    // expand everything materializable, as an exhaustive-budget round
    for (const Monomial& m :
         oracles::closure_materializable(universe, parents, 16))
      parents.insert(m);
  }
}

TEST_CASE("expansion cost tracks the example support, not the dimension") {
  const HashConfig cfg{18, 9};
  // parents over a huge universe; the example touches three variables
  ParentSet parents;
  for (VarId v = 0; v < 1000; ++v) parents.insert(Monomial{{v}});
  Example ex;
  ex.features = {{10, 1.0}, {500, 2.0}, {999, 3.0}};
  const auto terms = expand_terms(ex, parents, 8, cfg);
  const auto closure = oracles::closure_materializable(
      {10, 500, 999}, std::set<Monomial>(parents.begin(), parents.end()), 8);
  CHECK(terms.size() == closure.size());
}

TEST_CASE("colliding slots sum their contributions") {
  const HashConfig cfg{1, 0};  // two slots: collisions guaranteed
  ParentSet parents{Monomial{{0}}, Monomial{{1}}};
  Example ex;
  ex.features = {{0, 2.0}, {1, 3.0}, {2, 5.0}};
  const auto terms = expand_terms(ex, parents, 8, cfg);
  const auto sv = collapse_terms(terms);

  double by_slot[2] = {0.0, 0.0};
  for (const Term& t : terms) {
    REQUIRE(t.index < 2);
    by_slot[t.index] += t.value;
  }
  for (const auto& [idx, value] : sv) CHECK(value == by_slot[idx]);
  CHECK(sv.size() <= 2);
}

TEST_CASE("empty example expands to nothing") {
  const HashConfig cfg{18, 0};
  CHECK(expand_terms(Example{}, ParentSet{}, 8, cfg).empty());
  CHECK(expand_example(Example{}, ParentSet{}, 8, cfg).empty());
}

TEST_CASE("hash config validation") {
  const HashConfig zero{0, 0}, wide{32, 0}, fine{18, 0};
  CHECK_THROWS_AS(zero.validate(), InvalidParam);
  CHECK_THROWS_AS(wide.validate(), InvalidParam);
  CHECK_NOTHROW(fine.validate());
}
