// Brute-force reference implementations used to pin expected values.
// Everything here is deliberately independent of the library's own code
// paths: fixpoint set construction instead of the recursive expander,
// explicit nested loops instead of the odometer, Gaussian elimination
// instead of the Newton/Cholesky solver, pair enumeration instead of the
// rank-based AUC.
#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <set>
#include <vector>

#include "stagepoly/features.hpp"

namespace oracles {

using stagepoly::Monomial;
using stagepoly::VarId;

// All monomials of degree 1..max_degree over the given variables, with
// repetition, by explicit nested growth.
inline std::set<Monomial> enumerate_upto_degree(const std::vector<VarId>& vars,
                                                unsigned max_degree) {
  std::set<Monomial> out;
  std::vector<Monomial> frontier;
  for (VarId v : vars) {
    Monomial m{{v}};
    out.insert(m);
    frontier.push_back(m);
  }
  for (unsigned deg = 2; deg <= max_degree; ++deg) {
    std::vector<Monomial> next;
    for (const Monomial& m : frontier)
      for (VarId v : vars) {
        std::vector<VarId> ids = m.vars;
        ids.push_back(v);
        std::sort(ids.begin(), ids.end());
        Monomial child{ids};
        if (out.insert(child).second) next.push_back(child);
      }
    frontier = std::move(next);
  }
  return out;
}

// Materializable monomials over an example's support, as the fixpoint of
// "base variables, plus every parent member times every base variable".
inline std::set<Monomial> closure_materializable(
    const std::vector<VarId>& support, const std::set<Monomial>& parents,
    unsigned max_degree) {
  std::set<Monomial> out;
  for (VarId v : support) out.insert(Monomial{{v}});
  bool grew = true;
  while (grew) {
    grew = false;
    std::vector<Monomial> additions;
    for (const Monomial& m : out) {
      if (!parents.count(m) || m.degree() >= max_degree) continue;
      for (VarId v : support) {
        std::vector<VarId> ids = m.vars;
        ids.push_back(v);
        std::sort(ids.begin(), ids.end());
        Monomial child{ids};
        if (!out.count(child)) additions.push_back(child);
      }
    }
    for (const Monomial& m : additions)
      if (out.insert(m).second) grew = true;
  }
  return out;
}

// The fall-back dynamics with a budget of one: each stage adds the first
// (degree, lex)-ordered monomial missing from the parent set. Returns the
// parent set after each stage.
inline std::vector<std::set<Monomial>> stage_simulator(
    const std::vector<VarId>& vars, unsigned max_degree, unsigned stages) {
  std::set<Monomial> parents;
  std::vector<std::set<Monomial>> history;
  std::vector<Monomial> order;
  for (unsigned deg = 1; deg <= max_degree; ++deg) {
    // lex enumeration of sorted multisets of this degree
    std::vector<std::size_t> pos(deg, 0);
    for (;;) {
      Monomial m;
      for (std::size_t p : pos) m.vars.push_back(vars[p]);
      order.push_back(m);
      std::size_t i = deg;
      bool done = true;
      while (i-- > 0) {
        if (pos[i] + 1 < vars.size()) {
          ++pos[i];
          for (std::size_t j = i + 1; j < deg; ++j) pos[j] = pos[i];
          done = false;
          break;
        }
      }
      if (done) break;
    }
  }
  for (unsigned s = 0; s < stages; ++s) {
    for (const Monomial& m : order)
      if (!parents.count(m)) {
        parents.insert(m);
        break;
      }
    history.push_back(parents);
  }
  return history;
}

// Gaussian elimination with partial pivoting; returns x solving A x = b.
inline std::vector<double> solve_gauss(std::vector<std::vector<double>> A,
                                       std::vector<double> b) {
  const std::size_t n = A.size();
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::abs(A[r][col]) > std::abs(A[pivot][col])) pivot = r;
    std::swap(A[col], A[pivot]);
    std::swap(b[col], b[pivot]);
    for (std::size_t r = col + 1; r < n; ++r) {
      const double f = A[r][col] / A[col][col];
      for (std::size_t c = col; c < n; ++c) A[r][c] -= f * A[col][c];
      b[r] -= f * b[col];
    }
  }
  std::vector<double> x(n);
  for (std::size_t ii = n; ii-- > 0;) {
    double s = b[ii];
    for (std::size_t c = ii + 1; c < n; ++c) s -= A[ii][c] * x[c];
    x[ii] = s / A[ii][ii];
  }
  return x;
}

// AUC by exhaustive positive-negative pair enumeration, ties counted 1/2.
inline double auc_pairs(const std::vector<double>& scores,
                        const std::vector<int>& labels) {
  double wins = 0.0;
  std::uint64_t pairs = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] <= 0) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] > 0) continue;
      ++pairs;
      if (scores[i] > scores[j])
        wins += 1.0;
      else if (scores[i] == scores[j])
        wins += 0.5;
    }
  }
  return wins / static_cast<double>(pairs);
}

}  // namespace oracles
