#pragma once

// Operational semantics for configurations.
//
// The machine separates the two layers of the semantics:
//   - normalize() applies structural-congruence rules only (flattening,
//     buffer enqueues, substitution extrusion/placement, garbage collection)
//     and returns a canonical representative of the congruence class;
//   - enabled_redexes()/step() enumerate and apply the reduction rules
//     proper, each identified by name and by path into the normalized tree.
//
// run() drives a configuration to a terminal with a chosen strategy;
// explore() walks all interleavings breadth-first up to a depth bound,
// deduplicating states by canonical_key().

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "lastc/ast.hpp"

namespace lastc {

// Child indices from the configuration root. Config nodes: BufRes body = 0;
// CPar left = 0, right = 1; CSub body = 0, replacement = 1; Thread term = 0.
// Term nodes: App fun = 0, arg = 1; Abs body = 0; Pair fst = 0, snd = 1;
// LetPair scrutinee = 0, body = 1; Spawn/Send/Recv/Select argument = 0;
// Case scrutinee = 0, branches 1.. in label order; Sub body = 0,
// replacement = 1; send' payload = 0, channel = 1.
using Path = std::vector<int>;

struct RedexDescriptor {
  // One of: E-Lam, E-Pair, E-SubstName, E-NameSubst, E-Send, E-New,
  // E-Spawn, E-Recv, E-Case.
  std::string rule;
  Path path;          // position of the redex term in the normalized config
  std::string label;  // E-Case: the label dequeued; otherwise empty
};

// Congruence events a normalize pass may report: SC-ParNil, SC-ResNil,
// SC-ResSwap, SC-Send', SC-Select, SC-SubExt, SC-ConfSubst,
// SC-ConfSubstExt. Pure reordering (commutativity/associativity, scope
// extrusion of restrictions) is silent.
struct TraceStep {
  RedexDescriptor redex;
  std::vector<std::string> sc_before;  // congruences that exposed the redex
  std::vector<std::string> sc_after;   // congruences applied by normalize
  ConfigPtr config;                    // normalized result
};

enum class Terminal {
  Finished,  // no redex and every thread reduced to ()
  Stuck,     // no redex but some thread is not ()
  Budget,    // step budget exhausted with redexes remaining
};

struct Trace {
  ConfigPtr initial;  // normalized starting point
  std::vector<std::string> initial_sc;
  std::vector<TraceStep> steps;
  Terminal status = Terminal::Stuck;
};

enum class Strategy { Leftmost, Random };

struct EvalOptions {
  // Capacity-zero test mode: an enqueue is allowed only when the buffer is
  // empty and the receiving endpoint's owner is already at the matching
  // recv/case. Not the reference semantics; used to contrast asynchronous
  // and synchronous behavior of the same program.
  bool synchronous = false;
};

struct ExploreResult {
  std::vector<ConfigPtr> terminals;  // deduplicated by canonical_key
  bool truncated = false;  // depth bound hit with states left to expand
  std::size_t states = 0;  // distinct states visited
};

struct EvalError : std::runtime_error {
  std::string kind;  // StaleRedex
  EvalError(std::string kind_, const std::string& msg)
      : std::runtime_error(msg), kind(std::move(kind_)) {}
};

ConfigPtr normalize(const ConfigPtr& c, std::vector<std::string>* events = nullptr,
                    const EvalOptions& opts = {});

// Complete enumeration of the reduction rules applicable to a normalized
// configuration, in deterministic (preorder path) order.
std::vector<RedexDescriptor> enabled_redexes(const ConfigPtr& c,
                                             const EvalOptions& opts = {});

// Apply one enabled redex to a normalized configuration and renormalize.
// Throws EvalError{StaleRedex} if r does not match an enabled redex of c.
TraceStep step(const ConfigPtr& c, const RedexDescriptor& r,
               const EvalOptions& opts = {});

Trace run(const ConfigPtr& c, Strategy strategy = Strategy::Leftmost,
          std::uint64_t seed = 0, std::size_t budget = 1000,
          const EvalOptions& opts = {});

ExploreResult explore(const ConfigPtr& c, std::size_t depth,
                      const EvalOptions& opts = {});

// Name-independent fingerprint of a normalized configuration. Equal keys
// imply structural equality up to bound-name renaming, component order, and
// empty-buffer orientation; distinct configurations never collide.
std::string canonical_key(const ConfigPtr& c);

// True when every thread's term is (); leftover buffered messages that were
// never received do not count against completion.
bool is_finished(const ConfigPtr& c);

}  // namespace lastc
