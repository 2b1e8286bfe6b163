// Brute-force satisfiability oracle for priority constraint sets.
//
// Independent of the production solver on purpose: no union-find, no graph.
// Equalities are eliminated by textual substitution to a fixpoint; the
// remaining variables are enumerated over {0..n-1} by backtracking, pruning a
// branch as soon as any fully-assigned constraint fails.  If an assignment
// over the naturals exists at all, one exists with values below the variable
// count (compress any model to its rank order), so the enumeration is
// complete.  Frozen; production code must not include this header.

#ifndef LASTC_TESTS_PRIO_ORACLE_HPP
#define LASTC_TESTS_PRIO_ORACLE_HPP

#include <algorithm>
#include <cassert>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace lastc::oracle {

// "w" is the absorbing top: every finite value is below it, nothing is below
// a "w" on the left of a strict bound.
struct OracleTerm {
  bool omega = false;
  bool is_nat = false;
  int nat = 0;
  std::string var;  // meaningful when !omega && !is_nat
};

struct OracleConstraint {
  bool equality = false;  // true: lhs = rhs, false: lhs < rhs
  OracleTerm lhs, rhs;
};

inline OracleTerm oracle_var(std::string name) {
  OracleTerm t;
  t.var = std::move(name);
  return t;
}

inline OracleTerm oracle_nat(int n) {
  OracleTerm t;
  t.is_nat = true;
  t.nat = n;
  return t;
}

inline OracleTerm oracle_omega() {
  OracleTerm t;
  t.omega = true;
  return t;
}

inline OracleConstraint oracle_lt(OracleTerm a, OracleTerm b) {
  return OracleConstraint{false, std::move(a), std::move(b)};
}

inline OracleConstraint oracle_eq(OracleTerm a, OracleTerm b) {
  return OracleConstraint{true, std::move(a), std::move(b)};
}

struct OracleResult {
  bool sat = false;
  std::map<std::string, int> assignment;  // covers every named variable
};

namespace detail {

inline bool term_known(const OracleTerm& t,
                       const std::map<std::string, int>& partial, long* value,
                       bool* omega) {
  if (t.omega) {
    *omega = true;
    return true;
  }
  *omega = false;
  if (t.is_nat) {
    *value = t.nat;
    return true;
  }
  auto it = partial.find(t.var);
  if (it == partial.end()) return false;
  *value = it->second;
  return true;
}

// True when the constraint is already violated by the partial assignment.
// Unknown operands make a constraint undecided, never violated.
inline bool violated(const OracleConstraint& c,
                     const std::map<std::string, int>& partial) {
  long lv = 0, rv = 0;
  bool lo = false, ro = false;
  bool lk = term_known(c.lhs, partial, &lv, &lo);
  bool rk = term_known(c.rhs, partial, &rv, &ro);
  if (c.equality) {
    if (lk && rk) {
      if (lo != ro) return true;
      return !lo && lv != rv;
    }
    return false;
  }
  if (lo) return true;          // w < anything is impossible
  if (ro) return false;         // finite < w always holds
  if (lk && rk) return lv >= rv;
  return false;
}

}  // namespace detail

// Exhaustively decides satisfiability over the naturals.  The variable count
// is capped so a runaway test fails loudly instead of spinning.
inline OracleResult oracle_solve(std::vector<OracleConstraint> cs,
                                 int max_vars = 34) {
  // Eliminate equalities between two variables by substitution.
  bool changed = true;
  while (changed) {
    changed = false;
    for (std::size_t i = 0; i < cs.size(); ++i) {
      const OracleConstraint& c = cs[i];
      if (!c.equality || c.lhs.omega || c.lhs.is_nat || c.rhs.omega ||
          c.rhs.is_nat) {
        continue;
      }
      if (c.lhs.var == c.rhs.var) {
        cs.erase(cs.begin() + static_cast<long>(i));
        changed = true;
        break;
      }
      std::string from = c.rhs.var, to = c.lhs.var;
      cs.erase(cs.begin() + static_cast<long>(i));
      for (OracleConstraint& d : cs) {
        if (!d.lhs.omega && !d.lhs.is_nat && d.lhs.var == from) d.lhs.var = to;
        if (!d.rhs.omega && !d.rhs.is_nat && d.rhs.var == from) d.rhs.var = to;
      }
      changed = true;
      break;
    }
  }

  std::vector<std::string> vars;
  for (const OracleConstraint& c : cs) {
    for (const OracleTerm* t : {&c.lhs, &c.rhs}) {
      if (!t->omega && !t->is_nat &&
          std::find(vars.begin(), vars.end(), t->var) == vars.end()) {
        vars.push_back(t->var);
      }
    }
  }
  assert(static_cast<int>(vars.size()) <= max_vars);
  (void)max_vars;

  // Domain bound: variable count plus the largest nat mentioned plus one,
  // so pinned values and rank-compressed models both fit.
  int domain = static_cast<int>(vars.size());
  for (const OracleConstraint& c : cs) {
    for (const OracleTerm* t : {&c.lhs, &c.rhs}) {
      if (t->is_nat) domain = std::max(domain, t->nat + 2);
    }
  }
  if (domain == 0) domain = 1;

  std::map<std::string, int> partial;
  OracleResult result;

  // Depth-first enumeration with early pruning.
  std::vector<std::size_t> order(vars.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  // Recursive lambda via explicit stack of (var index, next value to try).
  std::vector<int> tried(vars.size(), 0);
  std::size_t depth = 0;
  bool any_violated = false;
  for (const OracleConstraint& c : cs) {
    if (detail::violated(c, partial)) any_violated = true;
  }
  if (any_violated) return result;
  if (vars.empty()) {
    result.sat = true;
    return result;
  }
  while (true) {
    if (tried[depth] >= domain) {
      if (depth == 0) return result;  // exhausted: unsat
      tried[depth] = 0;
      --depth;
      partial.erase(vars[depth]);
      ++tried[depth];
      continue;
    }
    partial[vars[depth]] = tried[depth];
    bool bad = false;
    for (const OracleConstraint& c : cs) {
      if (detail::violated(c, partial)) {
        bad = true;
        break;
      }
    }
    if (bad) {
      partial.erase(vars[depth]);
      ++tried[depth];
      continue;
    }
    if (depth + 1 == vars.size()) {
      result.sat = true;
      result.assignment = partial;
      return result;
    }
    ++depth;
    tried[depth] = 0;
  }
}

}  // namespace lastc::oracle

#endif  // LASTC_TESTS_PRIO_ORACLE_HPP
