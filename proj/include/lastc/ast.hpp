#pragma once

// Core ASTs for the source calculus: functional/session types, terms
// (including the runtime-only explicit substitutions and send'), and
// configurations (threads, parallel composition, buffered channel
// restrictions, configuration-level substitutions).
//
// All nodes are immutable and shared; builders return shared_ptr<const T>.

#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

namespace lastc {

using Name = std::string;
using NameSet = std::set<Name>;

// ---------------------------------------------------------------- types

struct SessionType;
struct TypeExpr;
using SessionPtr = std::shared_ptr<const SessionType>;
using TypePtr = std::shared_ptr<const TypeExpr>;

// Branch maps are ordered by label for deterministic printing/equality.
using SessionBranches = std::map<Name, SessionPtr>;

struct OutS {
  TypePtr payload;
  SessionPtr cont;
};
struct InS {
  TypePtr payload;
  SessionPtr cont;
};
struct SelS {
  SessionBranches branches;  // internal choice: this endpoint selects
};
struct BraS {
  SessionBranches branches;  // external choice: this endpoint offers
};
struct EndS {};
// Inference placeholder for an unknown protocol (unannotated restriction
// endpoints, substitution binders). Never escapes the type checker.
struct MetaS {
  int id;
};

struct SessionType {
  std::variant<OutS, InS, SelS, BraS, EndS, MetaS> v;
};

struct PairT {
  TypePtr fst, snd;
};
struct FunT {
  TypePtr dom, cod;
};
struct UnitT {};
struct SessT {
  SessionPtr s;
};
// Inference placeholder for an unknown value type; never escapes the checker.
struct MetaT {
  int id;
};

struct TypeExpr {
  std::variant<PairT, FunT, UnitT, SessT, MetaT> v;
};

SessionPtr mk_out(TypePtr payload, SessionPtr cont);
SessionPtr mk_in(TypePtr payload, SessionPtr cont);
SessionPtr mk_sel(SessionBranches branches);
SessionPtr mk_bra(SessionBranches branches);
SessionPtr mk_end();

TypePtr mk_pair_t(TypePtr fst, TypePtr snd);
TypePtr mk_fun_t(TypePtr dom, TypePtr cod);
TypePtr mk_unit_t();
TypePtr mk_sess_t(SessionPtr s);
SessionPtr mk_meta_s(int id);
TypePtr mk_meta_t(int id);

// Complement protocol: swaps !/? and +/& on the spine; payloads untouched.
// Rejects unresolved placeholders (std::logic_error).
SessionPtr dual(const SessionPtr& s);

bool type_equal(const TypePtr& a, const TypePtr& b);
bool session_equal(const SessionPtr& a, const SessionPtr& b);

// ---------------------------------------------------------------- terms

struct Term;
using TermPtr = std::shared_ptr<const Term>;
using TermBranches = std::map<Name, TermPtr>;

struct Var {
  Name name;
};
struct Unit {};
struct Abs {
  Name binder;
  TermPtr body;
};
struct App {
  TermPtr fun, arg;
};
struct Pair {
  TermPtr fst, snd;
};
struct LetPair {
  Name fst_binder, snd_binder;
  TermPtr scrutinee, body;
};
struct New {
  SessionPtr annot;  // user-supplied protocol of the first endpoint
};
struct Spawn {
  TermPtr arg;  // a pair: (child body, continuation)
};
struct Send {
  TermPtr arg;  // a pair: (payload, channel)
};
struct Recv {
  TermPtr arg;
};
struct Select {
  Name label;
  TermPtr arg;
};
struct Case {
  TermPtr scrutinee;
  TermBranches branches;
};
// Explicit substitution body[replacement/binder]; runtime only.
struct Sub {
  TermPtr body;
  TermPtr replacement;
  Name binder;
};
// Staged send with the pair already split; runtime only, ready to enqueue.
struct SendPrime {
  TermPtr payload;
  TermPtr channel;
};

struct Term {
  std::variant<Var, Unit, Abs, App, Pair, LetPair, New, Spawn, Send, Recv,
               Select, Case, Sub, SendPrime>
      v;
};

TermPtr mk_var(Name n);
TermPtr mk_unit();
TermPtr mk_abs(Name binder, TermPtr body);
TermPtr mk_app(TermPtr fun, TermPtr arg);
TermPtr mk_pair(TermPtr fst, TermPtr snd);
TermPtr mk_letpair(Name fst_binder, Name snd_binder, TermPtr scrutinee,
                   TermPtr body);
TermPtr mk_new(SessionPtr annot);
TermPtr mk_spawn(TermPtr arg);
TermPtr mk_send(TermPtr arg);
TermPtr mk_recv(TermPtr arg);
TermPtr mk_select(Name label, TermPtr arg);
TermPtr mk_case(TermPtr scrutinee, TermBranches branches);
TermPtr mk_sub(TermPtr body, TermPtr replacement, Name binder);
TermPtr mk_send_prime(TermPtr payload, TermPtr channel);

// ------------------------------------------------------- configurations

struct Config;
using ConfigPtr = std::shared_ptr<const Config>;

enum class Marker { Main, Child };

// Buffered message: a term payload or a selection label.
struct Message {
  std::variant<TermPtr, Name> v;
  bool is_label() const { return std::holds_alternative<Name>(v); }
  const Name& label() const { return std::get<Name>(v); }
  const TermPtr& term() const { return std::get<TermPtr>(v); }
};

struct Thread {
  Marker marker;
  TermPtr term;
};
struct CPar {
  ConfigPtr left, right;
};
// Channel restriction with a directed buffer: messages enqueue on out_ep
// and dequeue on in_ep. buf.front() is the newest message, buf.back() the
// next to dequeue.
struct BufRes {
  Name out_ep;
  std::vector<Message> buf;
  Name in_ep;
  ConfigPtr body;
};
struct CSub {
  ConfigPtr body;
  TermPtr replacement;
  Name binder;
};

struct Config {
  std::variant<Thread, CPar, BufRes, CSub> v;
};

ConfigPtr mk_thread(Marker m, TermPtr t);
ConfigPtr mk_cpar(ConfigPtr left, ConfigPtr right);
ConfigPtr mk_bufres(Name out_ep, std::vector<Message> buf, Name in_ep,
                    ConfigPtr body);
ConfigPtr mk_csub(ConfigPtr body, TermPtr replacement, Name binder);

// ----------------------------------------------------------- utilities

NameSet free_names(const TermPtr& t);
NameSet free_names(const ConfigPtr& c);
NameSet free_names(const Message& m);

// Capture-avoiding rename t{new_name/old_name}.
TermPtr substitute_name(const TermPtr& t, const Name& new_name,
                        const Name& old_name);
ConfigPtr substitute_name(const ConfigPtr& c, const Name& new_name,
                          const Name& old_name);

// Every name (free or bound) occurring anywhere, binders included.
void collect_names(const TermPtr& t, NameSet& out);
void collect_names(const ConfigPtr& c, NameSet& out);

// Structural equality up to renaming of bound names (and of buffer
// endpoints). Free names must match exactly.
bool alpha_equal(const TermPtr& a, const TermPtr& b);
bool alpha_equal(const ConfigPtr& a, const ConfigPtr& b);

// Deterministic supply of names that avoids a given used set. fresh("x")
// yields "x" if unused, otherwise "x_2", "x_3", ...
class NameSupply {
 public:
  NameSupply() = default;
  explicit NameSupply(NameSet used) : used_(std::move(used)) {}
  Name fresh(const Name& base);
  void mark_used(const Name& n) { used_.insert(n); }

 private:
  NameSet used_;
};

}  // namespace lastc
