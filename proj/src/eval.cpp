// Structural-congruence normalization and small-step reduction.
//
// normalize() keeps configurations in a spine form: pending config-level
// substitutions and buffered restrictions nested outermost-to-innermost,
// with the flattened parallel threads at the bottom. Within that shape it
// performs the congruence work of the semantics: eager enqueue of staged
// sends/selects (extruding blocking explicit substitutions to config level
// when that is what unblocks them), direction swap of empty buffers,
// placement of config substitutions next to the occurrence of their binder,
// and garbage collection of finished threads and dead channels.
//
// Reduction rules are applied only by step(), against paths into the
// normalized tree, so every trace is replayable.

#include "lastc/eval.hpp"

#include <algorithm>
#include <cassert>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <sstream>

#include "lastc/printer.hpp"

namespace lastc {

namespace {

// ------------------------------------------------------------- freshening

// Renames every binder so that all binders are distinct from each other and
// from every free name. Deterministic, and the identity on configurations
// that already satisfy the convention.
class Freshener {
 public:
  explicit Freshener(NameSet used) : supply_(std::move(used)) {}

  TermPtr term(const TermPtr& t, std::map<Name, Name> env) {
    return std::visit(
        [&](const auto& node) -> TermPtr {
          using T = std::decay_t<decltype(node)>;
          if constexpr (std::is_same_v<T, Var>) {
            auto it = env.find(node.name);
            return it == env.end() ? t : mk_var(it->second);
          } else if constexpr (std::is_same_v<T, Unit>) {
            return t;
          } else if constexpr (std::is_same_v<T, Abs>) {
            Name b = bind(node.binder, env);
            return mk_abs(b, term(node.body, env));
          } else if constexpr (std::is_same_v<T, App>) {
            return mk_app(term(node.fun, env), term(node.arg, env));
          } else if constexpr (std::is_same_v<T, Pair>) {
            return mk_pair(term(node.fst, env), term(node.snd, env));
          } else if constexpr (std::is_same_v<T, LetPair>) {
            TermPtr scrut = term(node.scrutinee, env);
            Name a = bind(node.fst_binder, env);
            Name b = bind(node.snd_binder, env);
            return mk_letpair(a, b, scrut, term(node.body, env));
          } else if constexpr (std::is_same_v<T, New>) {
            return t;
          } else if constexpr (std::is_same_v<T, Spawn>) {
            return mk_spawn(term(node.arg, env));
          } else if constexpr (std::is_same_v<T, Send>) {
            return mk_send(term(node.arg, env));
          } else if constexpr (std::is_same_v<T, Recv>) {
            return mk_recv(term(node.arg, env));
          } else if constexpr (std::is_same_v<T, Select>) {
            return mk_select(node.label, term(node.arg, env));
          } else if constexpr (std::is_same_v<T, Case>) {
            TermPtr scrut = term(node.scrutinee, env);
            TermBranches bs;
            for (const auto& [l, m] : node.branches) bs.emplace(l, term(m, env));
            return mk_case(scrut, std::move(bs));
          } else if constexpr (std::is_same_v<T, Sub>) {
            TermPtr repl = term(node.replacement, env);
            Name b = bind(node.binder, env);
            return mk_sub(term(node.body, env), repl, b);
          } else {
            static_assert(std::is_same_v<T, SendPrime>);
            return mk_send_prime(term(node.payload, env),
                                 term(node.channel, env));
          }
        },
        t->v);
  }

  ConfigPtr config(const ConfigPtr& c, std::map<Name, Name> env) {
    return std::visit(
        [&](const auto& node) -> ConfigPtr {
          using T = std::decay_t<decltype(node)>;
          if constexpr (std::is_same_v<T, Thread>) {
            return mk_thread(node.marker, term(node.term, env));
          } else if constexpr (std::is_same_v<T, CPar>) {
            return mk_cpar(config(node.left, env), config(node.right, env));
          } else if constexpr (std::is_same_v<T, BufRes>) {
            Name out = bind(node.out_ep, env);
            Name in = bind(node.in_ep, env);
            std::vector<Message> buf;
            buf.reserve(node.buf.size());
            for (const auto& m : node.buf) buf.push_back(message(m, env));
            return mk_bufres(out, std::move(buf), in, config(node.body, env));
          } else {
            static_assert(std::is_same_v<T, CSub>);
            TermPtr repl = term(node.replacement, env);
            Name b = bind(node.binder, env);
            return mk_csub(config(node.body, env), repl, b);
          }
        },
        c->v);
  }

 private:
  Message message(const Message& m, const std::map<Name, Name>& env) {
    if (m.is_label()) return m;
    return Message{term(m.term(), env)};
  }

  Name bind(const Name& b, std::map<Name, Name>& env) {
    Name fresh = supply_.fresh(b);
    supply_.mark_used(fresh);
    env[b] = fresh;
    return fresh;
  }

  NameSupply supply_;
};

ConfigPtr freshen_config(const ConfigPtr& c) {
  Freshener f(free_names(c));
  return f.config(c, {});
}

// ------------------------------------------------------------- spine form

struct FRestr {
  Name out;
  std::vector<Message> buf;
  Name in;
};
struct FCSub {
  TermPtr repl;
  Name binder;
};
using SpineItem = std::variant<FRestr, FCSub>;
struct FThread {
  Marker marker;
  TermPtr term;
};
struct Flat {
  std::vector<SpineItem> spine;  // outermost first
  std::vector<FThread> comps;
};

// Hoists restrictions and config substitutions out of parallel compositions
// and flattens the threads. With globally distinct binders every hoist is
// side-condition free; only reorderings between spine items carry
// conditions, and those are handled separately.
void flatten_into(const ConfigPtr& c, Flat& f) {
  std::visit(
      [&](const auto& node) {
        using T = std::decay_t<decltype(node)>;
        if constexpr (std::is_same_v<T, Thread>) {
          f.comps.push_back({node.marker, node.term});
        } else if constexpr (std::is_same_v<T, CPar>) {
          flatten_into(node.left, f);
          flatten_into(node.right, f);
        } else if constexpr (std::is_same_v<T, BufRes>) {
          f.spine.push_back(FRestr{node.out_ep, node.buf, node.in_ep});
          flatten_into(node.body, f);
        } else {
          static_assert(std::is_same_v<T, CSub>);
          f.spine.push_back(FCSub{node.replacement, node.binder});
          flatten_into(node.body, f);
        }
      },
      c->v);
}

Flat flatten(const ConfigPtr& c) {
  Flat f;
  flatten_into(c, f);
  return f;
}

ConfigPtr rebuild(const Flat& f) {
  ConfigPtr body;
  if (f.comps.empty()) {
    body = mk_thread(Marker::Child, mk_unit());
  } else {
    body = mk_thread(f.comps.back().marker, f.comps.back().term);
    for (std::size_t i = f.comps.size() - 1; i-- > 0;)
      body = mk_cpar(mk_thread(f.comps[i].marker, f.comps[i].term), body);
  }
  for (std::size_t i = f.spine.size(); i-- > 0;) {
    if (const auto* r = std::get_if<FRestr>(&f.spine[i]))
      body = mk_bufres(r->out, r->buf, r->in, body);
    else {
      const auto& s = std::get<FCSub>(f.spine[i]);
      body = mk_csub(body, s.repl, s.binder);
    }
  }
  return body;
}

NameSet free_of(const std::vector<Message>& buf) {
  NameSet out;
  for (const auto& m : buf) {
    NameSet f = free_names(m);
    out.insert(f.begin(), f.end());
  }
  return out;
}

// Adjacent exchange legality on the spine: `outer` directly above `inner`,
// asking whether the nesting may be inverted. Restriction/restriction is
// scope commutation; restriction/substitution in either orientation is
// substitution extrusion, which requires the binder not to occur in the
// crossed buffer and the crossed endpoints not to occur in the replacement.
bool can_swap(const SpineItem& outer, const SpineItem& inner) {
  const auto* ro = std::get_if<FRestr>(&outer);
  const auto* ri = std::get_if<FRestr>(&inner);
  const auto* so = std::get_if<FCSub>(&outer);
  const auto* si = std::get_if<FCSub>(&inner);
  auto in_buf = [](const Name& n, const FRestr& r) {
    return free_of(r.buf).count(n) > 0;
  };
  auto in_repl = [](const Name& n, const FCSub& s) {
    return free_names(s.repl).count(n) > 0;
  };
  if (ro && ri)
    return !in_buf(ro->out, *ri) && !in_buf(ro->in, *ri) &&
           !in_buf(ri->out, *ro) && !in_buf(ri->in, *ro);
  if (ro && si)
    return !in_buf(si->binder, *ro) && !in_repl(ro->out, *si) &&
           !in_repl(ro->in, *si);
  if (so && ri)
    return !in_buf(so->binder, *ri) && !in_repl(ri->out, *so) &&
           !in_repl(ri->in, *so);
  return !in_repl(so->binder, *si) && !in_repl(si->binder, *so);
}

// Whether restriction spine[i] can be brought directly around the subtree
// that starts below spine[limit] (limit = spine.size() targets the thread
// level), by legal adjacent exchanges with everything in between.
bool reaches(const Flat& f, std::size_t i, std::size_t limit) {
  for (std::size_t j = i + 1; j < limit; ++j)
    if (!can_swap(f.spine[i], f.spine[j])) return false;
  return true;
}

// --------------------------------------------------- term-level structure

// Child indices that are evaluation positions. Explicit-substitution bodies
// are evaluation positions too, but several rules refuse to fire under
// them; the descent tracks that crossing separately.
struct REdge {
  int index;
  bool sub_body;
};

std::vector<REdge> r_edges(const Term& t) {
  return std::visit(
      [](const auto& node) -> std::vector<REdge> {
        using T = std::decay_t<decltype(node)>;
        if constexpr (std::is_same_v<T, App>) return {{0, false}};
        if constexpr (std::is_same_v<T, Spawn>) return {{0, false}};
        if constexpr (std::is_same_v<T, Send>) return {{0, false}};
        if constexpr (std::is_same_v<T, Recv>) return {{0, false}};
        if constexpr (std::is_same_v<T, Select>) return {{0, false}};
        if constexpr (std::is_same_v<T, LetPair>) return {{0, false}};
        if constexpr (std::is_same_v<T, Case>) return {{0, false}};
        if constexpr (std::is_same_v<T, Sub>) return {{0, true}, {1, false}};
        if constexpr (std::is_same_v<T, SendPrime>) return {{1, false}};
        return {};
      },
      t.v);
}

const TermPtr& term_child(const TermPtr& t, int index) {
  return std::visit(
      [&](const auto& node) -> const TermPtr& {
        using T = std::decay_t<decltype(node)>;
        if constexpr (std::is_same_v<T, App>)
          return index == 0 ? node.fun : node.arg;
        else if constexpr (std::is_same_v<T, Abs>)
          return node.body;
        else if constexpr (std::is_same_v<T, Pair>)
          return index == 0 ? node.fst : node.snd;
        else if constexpr (std::is_same_v<T, LetPair>)
          return index == 0 ? node.scrutinee : node.body;
        else if constexpr (std::is_same_v<T, Spawn>)
          return node.arg;
        else if constexpr (std::is_same_v<T, Send>)
          return node.arg;
        else if constexpr (std::is_same_v<T, Recv>)
          return node.arg;
        else if constexpr (std::is_same_v<T, Select>)
          return node.arg;
        else if constexpr (std::is_same_v<T, Case>) {
          if (index == 0) return node.scrutinee;
          auto it = node.branches.begin();
          std::advance(it, index - 1);
          return it->second;
        } else if constexpr (std::is_same_v<T, Sub>)
          return index == 0 ? node.body : node.replacement;
        else if constexpr (std::is_same_v<T, SendPrime>)
          return index == 0 ? node.payload : node.channel;
        else
          throw std::logic_error("term_child: leaf node");
      },
      t->v);
}

TermPtr term_with_child(const TermPtr& t, int index, TermPtr nc) {
  return std::visit(
      [&](const auto& node) -> TermPtr {
        using T = std::decay_t<decltype(node)>;
        if constexpr (std::is_same_v<T, App>)
          return index == 0 ? mk_app(nc, node.arg) : mk_app(node.fun, nc);
        else if constexpr (std::is_same_v<T, Abs>)
          return mk_abs(node.binder, nc);
        else if constexpr (std::is_same_v<T, Pair>)
          return index == 0 ? mk_pair(nc, node.snd) : mk_pair(node.fst, nc);
        else if constexpr (std::is_same_v<T, LetPair>)
          return index == 0 ? mk_letpair(node.fst_binder, node.snd_binder, nc,
                                         node.body)
                            : mk_letpair(node.fst_binder, node.snd_binder,
                                         node.scrutinee, nc);
        else if constexpr (std::is_same_v<T, Spawn>)
          return mk_spawn(nc);
        else if constexpr (std::is_same_v<T, Send>)
          return mk_send(nc);
        else if constexpr (std::is_same_v<T, Recv>)
          return mk_recv(nc);
        else if constexpr (std::is_same_v<T, Select>)
          return mk_select(node.label, nc);
        else if constexpr (std::is_same_v<T, Case>) {
          if (index == 0) return mk_case(nc, node.branches);
          TermBranches bs = node.branches;
          auto it = bs.begin();
          std::advance(it, index - 1);
          it->second = nc;
          return mk_case(node.scrutinee, std::move(bs));
        } else if constexpr (std::is_same_v<T, Sub>)
          return index == 0 ? mk_sub(nc, node.replacement, node.binder)
                            : mk_sub(node.body, nc, node.binder);
        else if constexpr (std::is_same_v<T, SendPrime>)
          return index == 0 ? mk_send_prime(nc, node.channel)
                            : mk_send_prime(node.payload, nc);
        else
          throw std::logic_error("term_with_child: leaf node");
      },
      t->v);
}

TermPtr term_replace(const TermPtr& t, const Path& p, std::size_t i,
                     const TermPtr& repl) {
  if (i == p.size()) return repl;
  return term_with_child(t, p[i],
                         term_replace(term_child(t, p[i]), p, i + 1, repl));
}

const TermPtr* term_at(const TermPtr& t, const Path& p, std::size_t i) {
  if (i == p.size()) return &t;
  return term_at(term_child(t, p[i]), p, i + 1);
}

int count_var(const TermPtr& t, const Name& z) {
  if (const auto* v = std::get_if<Var>(&t->v)) return v->name == z ? 1 : 0;
  int n = 0;
  std::visit(
      [&](const auto& node) {
        using T = std::decay_t<decltype(node)>;
        if constexpr (std::is_same_v<T, Abs>) {
          n += count_var(node.body, z);
        } else if constexpr (std::is_same_v<T, App>) {
          n += count_var(node.fun, z) + count_var(node.arg, z);
        } else if constexpr (std::is_same_v<T, Pair>) {
          n += count_var(node.fst, z) + count_var(node.snd, z);
        } else if constexpr (std::is_same_v<T, LetPair>) {
          n += count_var(node.scrutinee, z) + count_var(node.body, z);
        } else if constexpr (std::is_same_v<T, Spawn> ||
                             std::is_same_v<T, Send> ||
                             std::is_same_v<T, Recv>) {
          n += count_var(node.arg, z);
        } else if constexpr (std::is_same_v<T, Select>) {
          n += count_var(node.arg, z);
        } else if constexpr (std::is_same_v<T, Case>) {
          n += count_var(node.scrutinee, z);
          for (const auto& [l, m] : node.branches) n += count_var(m, z);
        } else if constexpr (std::is_same_v<T, Sub>) {
          n += count_var(node.body, z) + count_var(node.replacement, z);
        } else if constexpr (std::is_same_v<T, SendPrime>) {
          n += count_var(node.payload, z) + count_var(node.channel, z);
        }
      },
      t->v);
  return n;
}

// Path along evaluation positions from `body` to the unique free occurrence
// of z, if the occurrence is unique and every step of the way is an
// evaluation position. This is where a substitution may sink to expose
// the occurrence for discharge.
std::optional<Path> sink_path(const TermPtr& body, const Name& z) {
  if (count_var(body, z) != 1) return std::nullopt;
  Path p;
  TermPtr cur = body;
  for (;;) {
    if (const auto* v = std::get_if<Var>(&cur->v); v && v->name == z) return p;
    bool advanced = false;
    for (const REdge& e : r_edges(*cur)) {
      const TermPtr& ch = term_child(cur, e.index);
      if (count_var(ch, z) == 1) {
        p.push_back(e.index);
        cur = ch;
        advanced = true;
        break;
      }
    }
    if (!advanced) return std::nullopt;  // occurrence off evaluation spine
  }
}

// A substitution that the reduction rules can clear without congruence
// help: name replacement, or an occurrence the substitution can sink to.
bool sub_dischargeable(const Sub& s) {
  if (std::holds_alternative<Var>(s.replacement->v)) return true;
  if (const auto* v = std::get_if<Var>(&s.body->v); v && v->name == s.binder)
    return true;
  return sink_path(s.body, s.binder).has_value();
}

// --------------------------------------------------------- staged actions

struct Staged {
  Path path;  // to the send'/select node within the scanned term
  bool is_select = false;
  Name label;
  bool masked = false;  // reached through an explicit-substitution body
};

void find_staged_in(const TermPtr& t, const Name& x, Path& cur, bool masked,
                    std::vector<Staged>& out) {
  if (const auto* sp = std::get_if<SendPrime>(&t->v)) {
    if (const auto* v = std::get_if<Var>(&sp->channel->v); v && v->name == x)
      out.push_back({cur, false, {}, masked});
  } else if (const auto* sel = std::get_if<Select>(&t->v)) {
    if (const auto* v = std::get_if<Var>(&sel->arg->v); v && v->name == x)
      out.push_back({cur, true, sel->label, masked});
  }
  for (const REdge& e : r_edges(*t)) {
    cur.push_back(e.index);
    find_staged_in(term_child(t, e.index), x, cur, masked || e.sub_body, out);
    cur.pop_back();
  }
}

std::vector<Staged> find_staged(const TermPtr& t, const Name& x) {
  std::vector<Staged> out;
  Path cur;
  find_staged_in(t, x, cur, false, out);
  return out;
}

bool has_ready_reader(const Flat& f, const Name& in_ep);

// Synchronous test mode: enqueue only into an empty buffer whose reader is
// already waiting.
bool enqueue_allowed(const Flat& f, const FRestr& r, const EvalOptions& opts) {
  if (!opts.synchronous) return true;
  return r.buf.empty() && has_ready_reader(f, r.in);
}

// recv at a position no reduction rule would refuse (not under a
// substitution body); case anywhere on the evaluation spine.
void find_readers(const TermPtr& t, const Name& y, bool masked, bool& found) {
  if (found) return;
  if (const auto* rc = std::get_if<Recv>(&t->v)) {
    if (const auto* v = std::get_if<Var>(&rc->arg->v); v && v->name == y)
      if (!masked) {
        found = true;
        return;
      }
  } else if (const auto* cs = std::get_if<Case>(&t->v)) {
    if (const auto* v = std::get_if<Var>(&cs->scrutinee->v); v && v->name == y) {
      found = true;
      return;
    }
  }
  for (const REdge& e : r_edges(*t))
    find_readers(term_child(t, e.index), y, masked || e.sub_body, found);
}

bool has_ready_reader(const Flat& f, const Name& in_ep) {
  bool found = false;
  for (const auto& c : f.comps) {
    find_readers(c.term, in_ep, false, found);
    if (found) return true;
  }
  for (const auto& it : f.spine)
    if (const auto* s = std::get_if<FCSub>(&it)) {
      find_readers(s->repl, in_ep, false, found);
      if (found) return true;
    }
  return false;
}

void push_event(std::vector<std::string>* ev, const char* name) {
  if (ev) ev->push_back(name);
}

// ------------------------------------------------------- normalize passes

bool name_free_in_flat_below(const Flat& f, std::size_t from, const Name& n) {
  for (std::size_t j = from; j < f.spine.size(); ++j) {
    if (const auto* r = std::get_if<FRestr>(&f.spine[j])) {
      if (free_of(r->buf).count(n)) return true;
    } else if (free_names(std::get<FCSub>(f.spine[j]).repl).count(n)) {
      return true;
    }
  }
  for (const auto& c : f.comps)
    if (free_names(c.term).count(n)) return true;
  return false;
}

bool drop_finished_children(Flat& f, std::vector<std::string>* ev) {
  bool changed = false;
  for (std::size_t k = 0; k < f.comps.size();) {
    bool unit = std::holds_alternative<Unit>(f.comps[k].term->v);
    if (unit && f.comps[k].marker == Marker::Child && f.comps.size() > 1) {
      f.comps.erase(f.comps.begin() + static_cast<std::ptrdiff_t>(k));
      push_event(ev, "SC-ParNil");
      changed = true;
    } else {
      ++k;
    }
  }
  return changed;
}

bool drop_dead_restrictions(Flat& f, std::vector<std::string>* ev) {
  for (std::size_t i = 0; i < f.spine.size(); ++i) {
    const auto* r = std::get_if<FRestr>(&f.spine[i]);
    if (!r || !r->buf.empty()) continue;
    if (name_free_in_flat_below(f, i + 1, r->out)) continue;
    if (name_free_in_flat_below(f, i + 1, r->in)) continue;
    f.spine.erase(f.spine.begin() + static_cast<std::ptrdiff_t>(i));
    push_event(ev, "SC-ResNil");
    return true;
  }
  return false;
}

// The outermost explicit substitution crossed on the way to a masked
// action, provided the substitution itself sits on the evaluation spine
// (a precondition for lifting it out with SC-SubExt).
std::optional<Path> liftable_mask(const TermPtr& root, const Path& full) {
  Path p;
  TermPtr cur = root;
  for (int idx : full) {
    if (std::holds_alternative<Sub>(cur->v) && idx == 0) return p;
    bool eval_pos = false;
    for (const REdge& e : r_edges(*cur)) eval_pos = eval_pos || e.index == idx;
    if (!eval_pos) return std::nullopt;
    p.push_back(idx);
    cur = term_child(cur, idx);
  }
  return std::nullopt;
}

// Inserts a promoted config substitution at the outermost legal spine
// position (floated by SC-ConfSubstExt across everything it may cross).
std::size_t float_in(Flat& f, FCSub promoted) {
  std::size_t pos = f.spine.size();
  while (pos > 0 && can_swap(f.spine[pos - 1], SpineItem{promoted})) --pos;
  f.spine.insert(f.spine.begin() + static_cast<std::ptrdiff_t>(pos),
                 SpineItem{promoted});
  return pos;
}

// Moves restriction i down to sit directly above `level` (the spine index
// of the enqueue source, or spine.size() for the thread components), by
// the adjacent exchanges that reaches() validated. Keeps the flat spine's
// nesting consistent with the scope of a payload taken from that level.
// Returns the restriction's new index.
std::size_t sink_restriction(Flat& f, std::size_t i, std::size_t level) {
  SpineItem item = f.spine[i];
  f.spine.erase(f.spine.begin() + static_cast<std::ptrdiff_t>(i));
  std::size_t at = level - 1;  // one slot vacated above `level`
  f.spine.insert(f.spine.begin() + static_cast<std::ptrdiff_t>(at), item);
  return at;
}

// One enqueue onto the out endpoint of spine[i], searched across thread
// components and config-substitution replacements. Masked sends are
// unblocked first by extruding the masking substitutions to config level
// (as far out as the side conditions allow).
bool try_enqueue(Flat& f, std::size_t i, const EvalOptions& opts,
                 std::vector<std::string>* ev) {
  const Name out_ep = std::get<FRestr>(f.spine[i]).out;
  auto commit = [&](std::size_t restr_at, TermPtr scanned, const Staged& st,
                    const std::function<void(TermPtr)>& put) {
    auto& r = std::get<FRestr>(f.spine[restr_at]);
    const TermPtr* node = term_at(scanned, st.path, 0);
    Message msg = st.is_select
                      ? Message{st.label}
                      : Message{std::get<SendPrime>((*node)->v).payload};
    put(term_replace(scanned, st.path, 0, mk_var(r.out)));
    r.buf.insert(r.buf.begin(), std::move(msg));
    push_event(ev, st.is_select ? "SC-Select" : "SC-Send'");
  };

  // Thread components: the restriction must commute down to the thread
  // level past everything below it on the spine.
  if (reaches(f, i, f.spine.size()) &&
      enqueue_allowed(f, std::get<FRestr>(f.spine[i]), opts)) {
    for (std::size_t k = 0; k < f.comps.size(); ++k) {
      for (const Staged& st : find_staged(f.comps[k].term, out_ep)) {
        if (!st.is_select && st.masked) continue;  // handled by extrusion
        std::size_t at = sink_restriction(f, i, f.spine.size());
        commit(at, f.comps[k].term, st,
               [&](TermPtr nt) { f.comps[k].term = nt; });
        return true;
      }
    }
  }

  // Config-substitution replacements on the spine below the restriction.
  for (std::size_t j = i + 1; j < f.spine.size(); ++j) {
    if (!std::holds_alternative<FCSub>(f.spine[j])) continue;
    if (!reaches(f, i, j)) continue;
    if (!enqueue_allowed(f, std::get<FRestr>(f.spine[i]), opts)) continue;
    for (const Staged& st :
         find_staged(std::get<FCSub>(f.spine[j]).repl, out_ep)) {
      if (!st.is_select && st.masked) continue;
      std::size_t at = sink_restriction(f, i, j);
      auto& src = std::get<FCSub>(f.spine[at + 1]);
      commit(at, src.repl, st, [&](TermPtr nt) { src.repl = nt; });
      return true;
    }
  }

  // Masked sends in thread components: lift the masking substitution to
  // the top of its term, promote it to a config substitution, and float it
  // out past this restriction so the send sits in an unmasked position.
  if (!reaches(f, i, f.spine.size()) ||
      !enqueue_allowed(f, std::get<FRestr>(f.spine[i]), opts))
    return false;
  for (std::size_t k = 0; k < f.comps.size(); ++k) {
    for (const Staged& st : find_staged(f.comps[k].term, out_ep)) {
      if (st.is_select || !st.masked) continue;
      std::optional<Path> to_sub = liftable_mask(f.comps[k].term, st.path);
      if (!to_sub) continue;
      const Sub sub =
          std::get<Sub>((*term_at(f.comps[k].term, *to_sub, 0))->v);
      // The promoted substitution must clear this restriction, so the
      // formerly masked send ends up in an unrestricted thread context.
      FCSub promoted{sub.replacement, sub.binder};
      bool crossable = true;
      for (std::size_t j = i; j < f.spine.size(); ++j)
        if (!can_swap(f.spine[j], SpineItem{promoted})) crossable = false;
      if (!crossable) continue;
      if (!to_sub->empty()) push_event(ev, "SC-SubExt");
      f.comps[k].term = term_replace(f.comps[k].term, *to_sub, 0, sub.body);
      push_event(ev, "SC-ConfSubst");
      float_in(f, promoted);
      push_event(ev, "SC-ConfSubstExt");
      return true;  // enqueue happens on the next pass, now unmasked
    }
  }
  return false;
}

// Extrudes a substitution that is not dischargeable by reduction and whose
// body holds a recv/spawn the rules would otherwise refuse to fire.
bool unmask_blocked_receivers(Flat& f, std::vector<std::string>* ev) {
  for (std::size_t k = 0; k < f.comps.size(); ++k) {
    // Find a masked recv/spawn under a non-dischargeable substitution whose
    // lift is legal.
    struct Hit {
      Path to_sub;
    };
    std::optional<Hit> hit;
    std::function<void(const TermPtr&, Path&, std::optional<Path>)> scan =
        [&](const TermPtr& t, Path& cur, std::optional<Path> mask) {
          if (hit) return;
          bool is_target = false;
          if (const auto* rc = std::get_if<Recv>(&t->v))
            is_target = std::holds_alternative<Var>(rc->arg->v);
          else if (const auto* sp = std::get_if<Spawn>(&t->v))
            is_target = std::holds_alternative<Pair>(sp->arg->v);
          if (is_target && mask) {
            hit = Hit{*mask};
            return;
          }
          for (const REdge& e : r_edges(*t)) {
            std::optional<Path> m = mask;
            if (e.sub_body && !m) {
              const Sub& s = std::get<Sub>(t->v);
              if (!sub_dischargeable(s)) m = cur;
            }
            if (e.sub_body && !m) continue;  // dischargeable: wait for steps
            cur.push_back(e.index);
            scan(term_child(t, e.index), cur, m);
            cur.pop_back();
          }
        };
    Path cur;
    scan(f.comps[k].term, cur, std::nullopt);
    if (!hit) continue;
    // The scan descends evaluation edges only, so the lift is legal.
    const Sub sub =
        std::get<Sub>((*term_at(f.comps[k].term, hit->to_sub, 0))->v);
    // Must clear every restriction on the spine for the receiver to sit
    // under a plain config context.
    FCSub promoted{sub.replacement, sub.binder};
    bool crossable = true;
    for (const auto& it : f.spine)
      if (!can_swap(it, SpineItem{promoted})) crossable = false;
    if (!crossable) continue;
    if (!hit->to_sub.empty()) push_event(ev, "SC-SubExt");
    f.comps[k].term = term_replace(f.comps[k].term, hit->to_sub, 0, sub.body);
    push_event(ev, "SC-ConfSubst");
    float_in(f, promoted);
    push_event(ev, "SC-ConfSubstExt");
    return true;
  }
  return false;
}

// Moves a config substitution next to the unique thread holding its binder
// free, and into that thread when it can discharge there, so the reduction
// rules see it as an ordinary term substitution.
bool narrow_csubs(Flat& f, std::vector<std::string>* ev) {
  for (std::size_t j = 0; j < f.spine.size(); ++j) {
    auto* s = std::get_if<FCSub>(&f.spine[j]);
    if (!s) continue;
    const Name& z = s->binder;
    // Occurrences below on the spine pin the substitution where it is.
    bool pinned = false;
    for (std::size_t k = j + 1; k < f.spine.size() && !pinned; ++k) {
      if (const auto* q = std::get_if<FRestr>(&f.spine[k])) {
        if (free_of(q->buf).count(z)) pinned = true;
      } else if (free_names(std::get<FCSub>(f.spine[k]).repl).count(z)) {
        pinned = true;
      }
    }
    if (pinned) continue;
    std::vector<std::size_t> holders;
    for (std::size_t k = 0; k < f.comps.size(); ++k)
      if (free_names(f.comps[k].term).count(z)) holders.push_back(k);
    if (holders.size() > 1) continue;
    std::size_t target = holders.empty() ? 0 : holders.front();
    if (f.comps.empty()) continue;
    const TermPtr& tt = f.comps[target].term;
    bool dischargeable =
        std::holds_alternative<Var>(s->repl->v) ||
        (holders.size() == 1 && sink_path(tt, z).has_value());
    if (!dischargeable) continue;
    // It must commute past everything below it on the spine first.
    bool crossable = true;
    for (std::size_t k = j + 1; k < f.spine.size(); ++k)
      if (!can_swap(f.spine[j], f.spine[k])) crossable = false;
    if (!crossable) continue;
    FCSub moved = *s;
    f.spine.erase(f.spine.begin() + static_cast<std::ptrdiff_t>(j));
    push_event(ev, "SC-ConfSubstExt");
    f.comps[target].term = mk_sub(f.comps[target].term, moved.repl, moved.binder);
    push_event(ev, "SC-ConfSubst");
    return true;
  }
  return false;
}

// Flips an empty buffer when only the in-side has anything to enqueue.
bool swap_idle_buffers(Flat& f, std::vector<std::string>* ev) {
  auto activity = [&](const Name& ep) {
    for (const auto& c : f.comps)
      if (!find_staged(c.term, ep).empty()) return true;
    for (const auto& it : f.spine)
      if (const auto* s = std::get_if<FCSub>(&it))
        if (!find_staged(s->repl, ep).empty()) return true;
    return false;
  };
  for (auto& it : f.spine) {
    auto* r = std::get_if<FRestr>(&it);
    if (!r || !r->buf.empty()) continue;
    if (!activity(r->out) && activity(r->in)) {
      std::swap(r->out, r->in);
      push_event(ev, "SC-ResSwap");
      return true;
    }
  }
  return false;
}

// ------------------------------------------------------- canonical order

TermPtr erase_term(const TermPtr& t, NameSet& bound) {
  return std::visit(
      [&](const auto& node) -> TermPtr {
        using T = std::decay_t<decltype(node)>;
        if constexpr (std::is_same_v<T, Var>)
          return bound.count(node.name) ? mk_var("_") : t;
        else if constexpr (std::is_same_v<T, Unit>)
          return t;
        else if constexpr (std::is_same_v<T, Abs>) {
          bound.insert(node.binder);
          return mk_abs("_", erase_term(node.body, bound));
        } else if constexpr (std::is_same_v<T, App>)
          return mk_app(erase_term(node.fun, bound),
                        erase_term(node.arg, bound));
        else if constexpr (std::is_same_v<T, Pair>)
          return mk_pair(erase_term(node.fst, bound),
                         erase_term(node.snd, bound));
        else if constexpr (std::is_same_v<T, LetPair>) {
          TermPtr sc = erase_term(node.scrutinee, bound);
          bound.insert(node.fst_binder);
          bound.insert(node.snd_binder);
          return mk_letpair("_", "_", sc, erase_term(node.body, bound));
        } else if constexpr (std::is_same_v<T, New>)
          return t;
        else if constexpr (std::is_same_v<T, Spawn>)
          return mk_spawn(erase_term(node.arg, bound));
        else if constexpr (std::is_same_v<T, Send>)
          return mk_send(erase_term(node.arg, bound));
        else if constexpr (std::is_same_v<T, Recv>)
          return mk_recv(erase_term(node.arg, bound));
        else if constexpr (std::is_same_v<T, Select>)
          return mk_select(node.label, erase_term(node.arg, bound));
        else if constexpr (std::is_same_v<T, Case>) {
          TermPtr sc = erase_term(node.scrutinee, bound);
          TermBranches bs;
          for (const auto& [l, m] : node.branches)
            bs.emplace(l, erase_term(m, bound));
          return mk_case(sc, std::move(bs));
        } else if constexpr (std::is_same_v<T, Sub>) {
          TermPtr repl = erase_term(node.replacement, bound);
          bound.insert(node.binder);
          return mk_sub(erase_term(node.body, bound), repl, "_");
        } else {
          static_assert(std::is_same_v<T, SendPrime>);
          return mk_send_prime(erase_term(node.payload, bound),
                               erase_term(node.channel, bound));
        }
      },
      t->v);
}

std::string erased_print(const TermPtr& t, NameSet bound) {
  return pretty(erase_term(t, bound));
}

NameSet config_binders(const Flat& f) {
  NameSet bound;
  for (const auto& it : f.spine) {
    if (const auto* r = std::get_if<FRestr>(&it)) {
      bound.insert(r->out);
      bound.insert(r->in);
    } else {
      bound.insert(std::get<FCSub>(it).binder);
    }
  }
  return bound;
}

std::string spine_key(const SpineItem& it, const NameSet& bound) {
  std::ostringstream os;
  if (const auto* r = std::get_if<FRestr>(&it)) {
    os << "R[";
    for (const auto& m : r->buf)
      os << (m.is_label() ? m.label() : erased_print(m.term(), bound)) << ",";
    os << "]";
  } else {
    os << "S[" << erased_print(std::get<FCSub>(it).repl, bound) << "]";
  }
  return os.str();
}

std::string comp_key(const FThread& c, const NameSet& bound) {
  return (c.marker == Marker::Main ? "0|" : "1|") + erased_print(c.term, bound);
}

bool sort_canonically(Flat& f) {
  bool changed = false;
  NameSet bound = config_binders(f);
  for (bool moved = true; moved;) {
    moved = false;
    for (std::size_t j = 0; j + 1 < f.spine.size(); ++j) {
      if (spine_key(f.spine[j + 1], bound) < spine_key(f.spine[j], bound) &&
          can_swap(f.spine[j], f.spine[j + 1])) {
        std::swap(f.spine[j], f.spine[j + 1]);
        moved = changed = true;
      }
    }
  }
  std::vector<FThread> sorted = f.comps;
  std::stable_sort(sorted.begin(), sorted.end(),
                   [&](const FThread& a, const FThread& b) {
                     return comp_key(a, bound) < comp_key(b, bound);
                   });
  for (std::size_t k = 0; k < sorted.size(); ++k)
    if (sorted[k].term != f.comps[k].term ||
        sorted[k].marker != f.comps[k].marker)
      changed = true;
  f.comps = std::move(sorted);
  return changed;
}

Flat normalize_flat(const ConfigPtr& c, std::vector<std::string>* ev,
                    const EvalOptions& opts) {
  Flat f = flatten(freshen_config(c));
  for (int guard = 0; guard < 10000; ++guard) {
    bool changed = false;
    changed |= drop_finished_children(f, ev);
    changed |= drop_dead_restrictions(f, ev);
    if (!changed)
      for (std::size_t i = 0; i < f.spine.size() && !changed; ++i)
        if (std::holds_alternative<FRestr>(f.spine[i]))
          changed = try_enqueue(f, i, opts, ev);
    if (!changed) changed = unmask_blocked_receivers(f, ev);
    if (!changed) changed = narrow_csubs(f, ev);
    if (!changed) changed = swap_idle_buffers(f, ev);
    sort_canonically(f);
    if (!changed) return f;
  }
  throw std::logic_error("normalize did not converge");
}

// ---------------------------------------------------------- redex scan

struct RestrInfo {
  Name out, in;
  std::size_t index;          // spine position
  bool reaches_comps = false;
  const std::vector<Message>* buf = nullptr;
};

struct ScanCtx {
  const Flat* flat;
  std::map<Name, RestrInfo> by_in;  // keyed by in endpoint
  const EvalOptions* opts;
  std::vector<RedexDescriptor>* out;
};

bool dequeue_ready(const ScanCtx& ctx, const Name& y, bool want_label,
                   std::size_t source_limit, const TermBranches* branches,
                   Name* label_out) {
  auto it = ctx.by_in.find(y);
  if (it == ctx.by_in.end()) return false;
  const RestrInfo& r = it->second;
  if (!reaches(*ctx.flat, r.index, source_limit)) return false;
  if (r.buf->empty()) return false;
  const Message& oldest = r.buf->back();
  if (want_label) {
    if (!oldest.is_label()) return false;
    if (!branches->count(oldest.label())) return false;
    if (label_out) *label_out = oldest.label();
    return true;
  }
  return !oldest.is_label();
}

void scan_term(const ScanCtx& ctx, const TermPtr& t, Path& path,
               bool in_sub_body, std::size_t source_limit) {
  std::visit(
      [&](const auto& node) {
        using T = std::decay_t<decltype(node)>;
        if constexpr (std::is_same_v<T, App>) {
          if (std::holds_alternative<Abs>(node.fun->v))
            ctx.out->push_back({"E-Lam", path, ""});
        } else if constexpr (std::is_same_v<T, LetPair>) {
          if (std::holds_alternative<Pair>(node.scrutinee->v))
            ctx.out->push_back({"E-Pair", path, ""});
        } else if constexpr (std::is_same_v<T, Send>) {
          if (std::holds_alternative<Pair>(node.arg->v))
            ctx.out->push_back({"E-Send", path, ""});
        } else if constexpr (std::is_same_v<T, Spawn>) {
          if (std::holds_alternative<Pair>(node.arg->v) && !in_sub_body)
            ctx.out->push_back({"E-Spawn", path, ""});
        } else if constexpr (std::is_same_v<T, New>) {
          ctx.out->push_back({"E-New", path, ""});
        } else if constexpr (std::is_same_v<T, Recv>) {
          if (const auto* v = std::get_if<Var>(&node.arg->v))
            if (!in_sub_body &&
                dequeue_ready(ctx, v->name, false, source_limit, nullptr,
                              nullptr))
              ctx.out->push_back({"E-Recv", path, ""});
        } else if constexpr (std::is_same_v<T, Case>) {
          if (const auto* v = std::get_if<Var>(&node.scrutinee->v)) {
            Name label;
            if (dequeue_ready(ctx, v->name, true, source_limit,
                              &node.branches, &label))
              ctx.out->push_back({"E-Case", path, label});
          }
        } else if constexpr (std::is_same_v<T, Sub>) {
          const auto* bv = std::get_if<Var>(&node.body->v);
          if ((bv && bv->name == node.binder) ||
              sink_path(node.body, node.binder).has_value())
            ctx.out->push_back({"E-NameSubst", path, ""});
          if (std::holds_alternative<Var>(node.replacement->v))
            ctx.out->push_back({"E-SubstName", path, ""});
        }
        for (const REdge& e : r_edges(*t)) {
          path.push_back(e.index);
          scan_term(ctx, term_child(t, e.index), path,
                    in_sub_body || e.sub_body, source_limit);
          path.pop_back();
        }
      },
      t->v);
}

std::vector<RedexDescriptor> scan_config(const ConfigPtr& c,
                                         const EvalOptions& opts) {
  Flat f = flatten(c);
  ScanCtx ctx;
  ctx.flat = &f;
  ctx.opts = &opts;
  std::vector<RedexDescriptor> out;
  ctx.out = &out;
  for (std::size_t i = 0; i < f.spine.size(); ++i)
    if (const auto* r = std::get_if<FRestr>(&f.spine[i]))
      ctx.by_in[r->in] = RestrInfo{r->out, r->in, i, false, &r->buf};

  // Spine config substitutions: replacements are evaluation positions.
  for (std::size_t j = 0; j < f.spine.size(); ++j)
    if (const auto* s = std::get_if<FCSub>(&f.spine[j])) {
      Path p(j, 0);          // descend j bodies
      p.push_back(1);        // replacement edge
      scan_term(ctx, s->repl, p, false, j);
    }
  // Thread components.
  Path base(f.spine.size(), 0);
  for (std::size_t k = 0; k < f.comps.size(); ++k) {
    Path p = base;
    if (f.comps.size() > 1)
      for (std::size_t step = 0; step < k; ++step) p.push_back(1);
    if (f.comps.size() > 1 && k + 1 < f.comps.size()) p.push_back(0);
    p.push_back(0);  // thread term edge
    scan_term(ctx, f.comps[k].term, p, false, f.spine.size());
  }
  return out;
}

// --------------------------------------------------------- tree surgery

ConfigPtr cfg_child_replaced(const ConfigPtr& c, int index, ConfigPtr nc) {
  return std::visit(
      [&](const auto& node) -> ConfigPtr {
        using T = std::decay_t<decltype(node)>;
        if constexpr (std::is_same_v<T, CPar>)
          return index == 0 ? mk_cpar(nc, node.right)
                            : mk_cpar(node.left, nc);
        else if constexpr (std::is_same_v<T, BufRes>)
          return mk_bufres(node.out_ep, node.buf, node.in_ep, nc);
        else if constexpr (std::is_same_v<T, CSub>)
          return mk_csub(nc, node.replacement, node.binder);
        else
          throw std::logic_error("cfg_child_replaced: thread");
      },
      c->v);
}

const ConfigPtr* cfg_child(const ConfigPtr& c, int index) {
  return std::visit(
      [&](const auto& node) -> const ConfigPtr* {
        using T = std::decay_t<decltype(node)>;
        if constexpr (std::is_same_v<T, CPar>)
          return index == 0 ? &node.left : &node.right;
        else if constexpr (std::is_same_v<T, BufRes>)
          return &node.body;
        else if constexpr (std::is_same_v<T, CSub>)
          return index == 0 ? &node.body : nullptr;
        else
          return nullptr;
      },
      c->v);
}

// The term hanging off a config node at the given edge, if that edge leaves
// configuration territory: a thread's term, or a substitution replacement.
const TermPtr* cfg_term_edge(const ConfigPtr& c, int index) {
  if (const auto* th = std::get_if<Thread>(&c->v))
    return index == 0 ? &th->term : nullptr;
  if (const auto* s = std::get_if<CSub>(&c->v))
    return index == 1 ? &s->replacement : nullptr;
  return nullptr;
}

ConfigPtr cfg_with_term_edge(const ConfigPtr& c, int index, TermPtr nt) {
  if (const auto* th = std::get_if<Thread>(&c->v); th && index == 0)
    return mk_thread(th->marker, nt);
  if (const auto* s = std::get_if<CSub>(&c->v); s && index == 1)
    return mk_csub(s->body, nt, s->binder);
  throw std::logic_error("cfg_with_term_edge: not a term edge");
}

// Rewrites the term node at `path` via fn; wrap, when set, is applied to
// the innermost config subtree owning that term (for E-New / E-Spawn).
ConfigPtr rewrite_at(const ConfigPtr& c, const Path& path, std::size_t i,
                     const std::function<TermPtr(const TermPtr&)>& fn,
                     const std::function<ConfigPtr(ConfigPtr)>& wrap) {
  if (i < path.size()) {
    if (const TermPtr* t = cfg_term_edge(c, path[i])) {
      Path rest(path.begin() + static_cast<std::ptrdiff_t>(i) + 1, path.end());
      TermPtr target = *term_at(*t, rest, 0);
      ConfigPtr replaced =
          cfg_with_term_edge(c, path[i], term_replace(*t, rest, 0, fn(target)));
      return wrap ? wrap(replaced) : replaced;
    }
    const ConfigPtr* ch = cfg_child(c, path[i]);
    if (!ch) throw std::logic_error("rewrite_at: bad path");
    return cfg_child_replaced(c, path[i], rewrite_at(*ch, path, i + 1, fn, wrap));
  }
  throw std::logic_error("rewrite_at: path ended inside configs");
}

ConfigPtr pop_buffer(const ConfigPtr& c, const Name& in_ep, bool* done) {
  if (const auto* b = std::get_if<BufRes>(&c->v)) {
    if (b->in_ep == in_ep) {
      std::vector<Message> buf = b->buf;
      assert(!buf.empty());
      buf.pop_back();
      *done = true;
      return mk_bufres(b->out_ep, std::move(buf), b->in_ep, b->body);
    }
    return mk_bufres(b->out_ep, b->buf, b->in_ep,
                     pop_buffer(b->body, in_ep, done));
  }
  if (const auto* p = std::get_if<CPar>(&c->v)) {
    ConfigPtr l = pop_buffer(p->left, in_ep, done);
    if (*done) return mk_cpar(l, p->right);
    return mk_cpar(l, pop_buffer(p->right, in_ep, done));
  }
  if (const auto* s = std::get_if<CSub>(&c->v))
    return mk_csub(pop_buffer(s->body, in_ep, done), s->replacement, s->binder);
  return c;
}

Message oldest_message(const ConfigPtr& c, const Name& in_ep) {
  Flat f = flatten(c);
  for (const auto& it : f.spine)
    if (const auto* r = std::get_if<FRestr>(&it))
      if (r->in == in_ep) {
        assert(!r->buf.empty());
        return r->buf.back();
      }
  throw std::logic_error("oldest_message: no such channel");
}

// ---------------------------------------------------------- canonical key

struct Renumber {
  std::map<Name, Name> map;
  int next = 0;
  Name bind(const Name& n) {
    Name fresh = "%" + std::to_string(next++);
    map[n] = fresh;
    return fresh;
  }
  Name use(const Name& n) const {
    auto it = map.find(n);
    return it == map.end() ? n : it->second;
  }
};

TermPtr renumber_term(const TermPtr& t, Renumber& r) {
  return std::visit(
      [&](const auto& node) -> TermPtr {
        using T = std::decay_t<decltype(node)>;
        if constexpr (std::is_same_v<T, Var>)
          return mk_var(r.use(node.name));
        else if constexpr (std::is_same_v<T, Unit>)
          return t;
        else if constexpr (std::is_same_v<T, Abs>) {
          Name b = r.bind(node.binder);
          return mk_abs(b, renumber_term(node.body, r));
        } else if constexpr (std::is_same_v<T, App>) {
          TermPtr f = renumber_term(node.fun, r);
          return mk_app(f, renumber_term(node.arg, r));
        } else if constexpr (std::is_same_v<T, Pair>) {
          TermPtr a = renumber_term(node.fst, r);
          return mk_pair(a, renumber_term(node.snd, r));
        } else if constexpr (std::is_same_v<T, LetPair>) {
          TermPtr sc = renumber_term(node.scrutinee, r);
          Name a = r.bind(node.fst_binder);
          Name b = r.bind(node.snd_binder);
          return mk_letpair(a, b, sc, renumber_term(node.body, r));
        } else if constexpr (std::is_same_v<T, New>)
          return t;
        else if constexpr (std::is_same_v<T, Spawn>)
          return mk_spawn(renumber_term(node.arg, r));
        else if constexpr (std::is_same_v<T, Send>)
          return mk_send(renumber_term(node.arg, r));
        else if constexpr (std::is_same_v<T, Recv>)
          return mk_recv(renumber_term(node.arg, r));
        else if constexpr (std::is_same_v<T, Select>)
          return mk_select(node.label, renumber_term(node.arg, r));
        else if constexpr (std::is_same_v<T, Case>) {
          TermPtr sc = renumber_term(node.scrutinee, r);
          TermBranches bs;
          for (const auto& [l, m] : node.branches)
            bs.emplace(l, renumber_term(m, r));
          return mk_case(sc, std::move(bs));
        } else if constexpr (std::is_same_v<T, Sub>) {
          TermPtr repl = renumber_term(node.replacement, r);
          Name b = r.bind(node.binder);
          return mk_sub(renumber_term(node.body, r), repl, b);
        } else {
          static_assert(std::is_same_v<T, SendPrime>);
          TermPtr p = renumber_term(node.payload, r);
          return mk_send_prime(p, renumber_term(node.channel, r));
        }
      },
      t->v);
}

std::string print_candidate(const Flat& f) {
  Renumber r;
  Flat g;
  g.spine.reserve(f.spine.size());
  for (const auto& it : f.spine) {
    if (const auto* br = std::get_if<FRestr>(&it)) {
      Name out = r.bind(br->out);
      Name in = r.bind(br->in);
      std::vector<Message> buf;
      for (const auto& m : br->buf)
        buf.push_back(m.is_label() ? m
                                   : Message{renumber_term(m.term(), r)});
      g.spine.push_back(FRestr{out, std::move(buf), in});
    } else {
      const auto& s = std::get<FCSub>(it);
      TermPtr repl = renumber_term(s.repl, r);
      g.spine.push_back(FCSub{repl, r.bind(s.binder)});
    }
  }
  for (const auto& c : f.comps)
    g.comps.push_back({c.marker, renumber_term(c.term, r)});
  return pretty(rebuild(g));
}

void key_candidates(Flat f, std::size_t restr_from, int& budget,
                    std::string& best) {
  // Flip empty-buffer orientations one restriction at a time, then print.
  for (std::size_t i = restr_from; i < f.spine.size(); ++i) {
    if (auto* r = std::get_if<FRestr>(&f.spine[i]); r && r->buf.empty()) {
      if (budget-- <= 0) return;
      Flat flipped = f;
      auto& fr = std::get<FRestr>(flipped.spine[i]);
      std::swap(fr.out, fr.in);
      key_candidates(std::move(flipped), i + 1, budget, best);
    }
  }
  std::string s = print_candidate(f);
  if (best.empty() || s < best) best = std::move(s);
}

// --------------------------------------------------------------- helpers

bool all_threads_unit(const ConfigPtr& c) {
  return std::visit(
      [&](const auto& node) -> bool {
        using T = std::decay_t<decltype(node)>;
        if constexpr (std::is_same_v<T, Thread>)
          return std::holds_alternative<Unit>(node.term->v);
        else if constexpr (std::is_same_v<T, CPar>)
          return all_threads_unit(node.left) && all_threads_unit(node.right);
        else if constexpr (std::is_same_v<T, BufRes>)
          return all_threads_unit(node.body);
        else
          return false;  // a pending substitution is unfinished work
      },
      c->v);
}

}  // namespace

// ----------------------------------------------------------- public API

ConfigPtr normalize(const ConfigPtr& c, std::vector<std::string>* events,
                    const EvalOptions& opts) {
  return rebuild(normalize_flat(c, events, opts));
}

std::vector<RedexDescriptor> enabled_redexes(const ConfigPtr& c,
                                             const EvalOptions& opts) {
  return scan_config(c, opts);
}

TraceStep step(const ConfigPtr& c, const RedexDescriptor& r,
               const EvalOptions& opts) {
  std::vector<RedexDescriptor> enabled = enabled_redexes(c, opts);
  bool found = false;
  for (const auto& e : enabled)
    if (e.rule == r.rule && e.path == r.path && e.label == r.label)
      found = true;
  if (!found)
    throw EvalError("StaleRedex", "redex " + r.rule +
                                      " is not enabled in this configuration");

  TraceStep out;
  out.redex = r;
  ConfigPtr next;

  if (r.rule == "E-Lam") {
    next = rewrite_at(c, r.path, 0,
                      [](const TermPtr& t) {
                        const auto& app = std::get<App>(t->v);
                        const auto& lam = std::get<Abs>(app.fun->v);
                        return mk_sub(lam.body, app.arg, lam.binder);
                      },
                      nullptr);
  } else if (r.rule == "E-Pair") {
    next = rewrite_at(c, r.path, 0,
                      [](const TermPtr& t) {
                        const auto& lp = std::get<LetPair>(t->v);
                        const auto& pr = std::get<Pair>(lp.scrutinee->v);
                        return mk_sub(mk_sub(lp.body, pr.fst, lp.fst_binder),
                                      pr.snd, lp.snd_binder);
                      },
                      nullptr);
  } else if (r.rule == "E-Send") {
    next = rewrite_at(c, r.path, 0,
                      [](const TermPtr& t) {
                        const auto& pr =
                            std::get<Pair>(std::get<Send>(t->v).arg->v);
                        return mk_send_prime(pr.fst, pr.snd);
                      },
                      nullptr);
  } else if (r.rule == "E-SubstName") {
    next = rewrite_at(c, r.path, 0,
                      [](const TermPtr& t) {
                        const auto& s = std::get<Sub>(t->v);
                        const auto& w = std::get<Var>(s.replacement->v);
                        return substitute_name(s.body, w.name, s.binder);
                      },
                      nullptr);
  } else if (r.rule == "E-NameSubst") {
    next = rewrite_at(c, r.path, 0,
                      [&](const TermPtr& t) {
                        const auto& s = std::get<Sub>(t->v);
                        if (const auto* v = std::get_if<Var>(&s.body->v);
                            v && v->name == s.binder)
                          return s.replacement;
                        std::optional<Path> sp = sink_path(s.body, s.binder);
                        assert(sp.has_value());
                        out.sc_before.push_back("SC-SubExt");
                        return term_replace(s.body, *sp, 0, s.replacement);
                      },
                      nullptr);
  } else if (r.rule == "E-New") {
    NameSet used;
    collect_names(c, used);
    NameSupply supply(used);
    Name nx = supply.fresh("x");
    supply.mark_used(nx);
    Name ny = supply.fresh("y");
    next = rewrite_at(
        c, r.path, 0,
        [&](const TermPtr&) { return mk_pair(mk_var(nx), mk_var(ny)); },
        [&](ConfigPtr owner) { return mk_bufres(nx, {}, ny, owner); });
  } else if (r.rule == "E-Spawn") {
    TermPtr child;
    next = rewrite_at(
        c, r.path, 0,
        [&](const TermPtr& t) {
          const auto& pr = std::get<Pair>(std::get<Spawn>(t->v).arg->v);
          child = pr.fst;
          return pr.snd;
        },
        [&](ConfigPtr owner) {
          return mk_cpar(owner, mk_thread(Marker::Child, child));
        });
  } else if (r.rule == "E-Recv") {
    Name in_ep;
    next = rewrite_at(c, r.path, 0,
                      [&](const TermPtr& t) {
                        const auto& rc = std::get<Recv>(t->v);
                        in_ep = std::get<Var>(rc.arg->v).name;
                        const Message& m = oldest_message(c, in_ep);
                        return mk_pair(m.term(), rc.arg);
                      },
                      nullptr);
    bool done = false;
    next = pop_buffer(next, in_ep, &done);
    assert(done);
  } else if (r.rule == "E-Case") {
    Name in_ep;
    next = rewrite_at(c, r.path, 0,
                      [&](const TermPtr& t) {
                        const auto& cs = std::get<Case>(t->v);
                        in_ep = std::get<Var>(cs.scrutinee->v).name;
                        return mk_app(cs.branches.at(r.label), cs.scrutinee);
                      },
                      nullptr);
    bool done = false;
    next = pop_buffer(next, in_ep, &done);
    assert(done);
  } else {
    throw EvalError("StaleRedex", "unknown rule " + r.rule);
  }

  out.config = normalize(next, &out.sc_after, opts);
  return out;
}

Trace run(const ConfigPtr& c, Strategy strategy, std::uint64_t seed,
          std::size_t budget, const EvalOptions& opts) {
  Trace tr;
  tr.initial = normalize(c, &tr.initial_sc, opts);
  std::mt19937_64 rng(seed);
  ConfigPtr cur = tr.initial;
  for (std::size_t n = 0; n < budget; ++n) {
    std::vector<RedexDescriptor> rs = enabled_redexes(cur, opts);
    if (rs.empty()) {
      tr.status = is_finished(cur) ? Terminal::Finished : Terminal::Stuck;
      return tr;
    }
    std::size_t pick = 0;
    if (strategy == Strategy::Random && rs.size() > 1)
      pick = std::uniform_int_distribution<std::size_t>(0, rs.size() - 1)(rng);
    tr.steps.push_back(step(cur, rs[pick], opts));
    cur = tr.steps.back().config;
  }
  tr.status = enabled_redexes(cur, opts).empty()
                  ? (is_finished(cur) ? Terminal::Finished : Terminal::Stuck)
                  : Terminal::Budget;
  return tr;
}

ExploreResult explore(const ConfigPtr& c, std::size_t depth,
                      const EvalOptions& opts) {
  ExploreResult res;
  ConfigPtr start = normalize(c, nullptr, opts);
  std::map<std::string, ConfigPtr> seen{{canonical_key(start), start}};
  std::deque<std::pair<ConfigPtr, std::size_t>> frontier{{start, 0}};
  std::map<std::string, ConfigPtr> terminals;
  while (!frontier.empty()) {
    auto [cur, d] = frontier.front();
    frontier.pop_front();
    std::vector<RedexDescriptor> rs = enabled_redexes(cur, opts);
    if (rs.empty()) {
      terminals.emplace(canonical_key(cur), cur);
      continue;
    }
    if (d == depth) {
      res.truncated = true;
      continue;
    }
    for (const auto& r : rs) {
      ConfigPtr nxt = step(cur, r, opts).config;
      std::string key = canonical_key(nxt);
      if (seen.emplace(key, nxt).second) frontier.emplace_back(nxt, d + 1);
    }
  }
  res.states = seen.size();
  for (auto& [k, v] : terminals) res.terminals.push_back(v);
  return res;
}

std::string canonical_key(const ConfigPtr& c) {
  Flat f = flatten(c);
  int budget = 64;
  std::string best;
  key_candidates(std::move(f), 0, budget, best);
  return best;
}

bool is_finished(const ConfigPtr& c) { return all_threads_unit(c); }

}  // namespace lastc
