// Seeded random generators for property tests. All draws go through the
// passed-in engine so a fixed seed reproduces the full case list.
#pragma once

#include <random>
#include <string>

#include "lastc/ast.hpp"

namespace lastc::gen {

inline Name random_label(std::mt19937_64& rng, int i) {
  static const char* pool[] = {"go", "stop", "left", "right", "ack", "err"};
  return pool[i % 6] + (i >= 6 ? std::to_string(i) : std::string());
}

TypePtr random_type(std::mt19937_64& rng, int depth);

inline SessionPtr random_session(std::mt19937_64& rng, int depth) {
  if (depth <= 0) return mk_end();
  switch (std::uniform_int_distribution<int>(0, 4)(rng)) {
    case 0:
      return mk_out(random_type(rng, depth - 1), random_session(rng, depth - 1));
    case 1:
      return mk_in(random_type(rng, depth - 1), random_session(rng, depth - 1));
    case 2:
    case 3: {
      bool sel = std::uniform_int_distribution<int>(0, 1)(rng) == 0;
      int n = std::uniform_int_distribution<int>(1, 3)(rng);
      SessionBranches bs;
      for (int i = 0; i < n; ++i) {
        bs.emplace(random_label(rng, i), random_session(rng, depth - 1));
      }
      return sel ? mk_sel(std::move(bs)) : mk_bra(std::move(bs));
    }
    default:
      return mk_end();
  }
}

inline TypePtr random_type(std::mt19937_64& rng, int depth) {
  if (depth <= 0) {
    return std::uniform_int_distribution<int>(0, 1)(rng) == 0
               ? mk_unit_t()
               : mk_sess_t(mk_end());
  }
  switch (std::uniform_int_distribution<int>(0, 3)(rng)) {
    case 0:
      return mk_pair_t(random_type(rng, depth - 1), random_type(rng, depth - 1));
    case 1:
      return mk_fun_t(random_type(rng, depth - 1), random_type(rng, depth - 1));
    case 2:
      return mk_sess_t(random_session(rng, depth));
    default:
      return mk_unit_t();
  }
}

}  // namespace lastc::gen
