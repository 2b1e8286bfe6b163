// Algorithmic linear type checker for terms, buffers, and configurations.
//
// The checker is leftover-based: every judgment consumes bindings from the
// environment it is given and hands the unused rest back, so context splits
// are never guessed. Unknown types (unannotated restriction endpoints,
// runtime substitution binders) are reconstructed with unification
// placeholders that are solved during the traversal and defaulted to `end`
// when nothing constrains them; placeholders never appear in results.
//
// Emitted derivations are declarative: every node instantiates one typing
// rule with the exact environment it consumed, end-typed weakening is made
// explicit as End-left nodes, and replay_derivation re-checks the tree
// rule-by-rule without consulting the algorithm.
#pragma once

#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "lastc/ast.hpp"

namespace lastc {

// Ordered so that printed environments and error messages are stable.
using TypingEnv = std::map<Name, TypePtr>;

struct TypeError : std::runtime_error {
  // One of: UnboundName, LinearityViolation, TypeMismatch,
  // BufferTypeMismatch, TwoMainThreads, ChildNotUnit.
  std::string kind;
  TypeError(std::string kind_, const std::string& msg)
      : std::runtime_error(kind_ + ": " + msg), kind(std::move(kind_)) {}
};

struct Derivation;
using DerivPtr = std::shared_ptr<const Derivation>;

// env |- subject : type
struct TermJudgment {
  TypingEnv env;
  TermPtr subject;
  TypePtr type;
};
// env |-B [msgs] : from > to; msgs listed newest first, oldest peeled first.
struct BufferJudgment {
  TypingEnv env;
  std::vector<Message> msgs;
  SessionPtr from;
  SessionPtr to;
};
// env |-marker subject : type
struct ConfigJudgment {
  TypingEnv env;
  ConfigPtr subject;
  TypePtr type;
  Marker marker;
};

struct Derivation {
  int id = 0;  // preorder index within one checker run; stable across reruns
  std::string rule;
  std::variant<TermJudgment, BufferJudgment, ConfigJudgment> judgment;
  std::vector<DerivPtr> premises;
};

// Main if exactly one side is Main; throws TwoMainThreads on Main + Main.
Marker combine_markers(Marker a, Marker b);

struct TermResult {
  TypePtr type;
  TypingEnv leftover;  // unconsumed bindings; guaranteed all end-typed
  DerivPtr deriv;      // root environment is env minus leftover
};
TermResult type_term(const TypingEnv& env, const TermPtr& t);

struct BufferResult {
  SessionPtr from;  // S' with env |-B [msgs] : S' > target
  TypingEnv leftover;
  DerivPtr deriv;
};
BufferResult type_buffer(const TypingEnv& env, const std::vector<Message>& msgs,
                         const SessionPtr& target);

struct ConfigResult {
  TypePtr type;
  Marker marker;
  DerivPtr deriv;
};
// Unused end-typed bindings of env are dropped (weakening); any other
// leftover is a LinearityViolation.
ConfigResult type_config(const TypingEnv& env, const ConfigPtr& c);

// Declarative re-check of an emitted derivation, node by node. Returns false
// and fills *why (if given) at the first node that is not a valid rule
// instance.
bool replay_derivation(const DerivPtr& d, std::string* why = nullptr);

// Rule-labeled tree: {id, rule, env, subject, type | from/to, marker?,
// premises}. Deterministic field order for byte-stable output.
std::string derivation_to_json(const DerivPtr& d, int indent = 2);

}  // namespace lastc
