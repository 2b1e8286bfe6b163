#include "lastc/typecheck.hpp"

#include <algorithm>
#include <cassert>
#include <optional>
#include <set>
#include <sstream>

#include "json.hpp"
#include "lastc/printer.hpp"

namespace lastc {

Marker combine_markers(Marker a, Marker b) {
  if (a == Marker::Main && b == Marker::Main) {
    throw TypeError("TwoMainThreads",
                    "parallel composition of two main threads");
  }
  return (a == Marker::Main || b == Marker::Main) ? Marker::Main
                                                  : Marker::Child;
}

namespace {

[[noreturn]] void fail_mismatch(const std::string& what, const std::string& a,
                           const std::string& b) {
  throw TypeError("TypeMismatch", what + ": " + a + " vs " + b);
}

// ------------------------------------------------------------- meta store
//
// Placeholders for unknown sessions and value types, solved by unification.
// A session placeholder may carry a partial branch map: selections only
// bound an internal choice from below, so labels accumulate until either a
// concrete type closes them or finalization freezes exactly the labels seen.

class MetaStore {
 public:
  SessionPtr fresh_s() {
    sess_.push_back(SEntry{static_cast<int>(sess_.size())});
    return mk_meta_s(static_cast<int>(sess_.size()) - 1);
  }
  TypePtr fresh_t() {
    type_.push_back(TEntry{static_cast<int>(type_.size())});
    return mk_meta_t(static_cast<int>(type_.size()) - 1);
  }

  // Resolve chains until a non-placeholder or an unbound root.
  SessionPtr shallow_s(SessionPtr s) {
    assert(s);
    while (const auto* m = std::get_if<MetaS>(&s->v)) {
      SEntry& e = sess_[find_s(m->id)];
      if (!e.bound) return mk_meta_s(e.parent);
      s = *e.bound;
    }
    return s;
  }
  TypePtr shallow_t(TypePtr t) {
    assert(t);
    while (const auto* m = std::get_if<MetaT>(&t->v)) {
      TEntry& e = type_[find_t(m->id)];
      if (!e.bound) return mk_meta_t(e.parent);
      t = *e.bound;
    }
    return t;
  }

  void unify_t(const TypePtr& a0, const TypePtr& b0) {
    TypePtr a = shallow_t(a0), b = shallow_t(b0);
    const auto* ma = std::get_if<MetaT>(&a->v);
    const auto* mb = std::get_if<MetaT>(&b->v);
    if (ma && mb && find_t(ma->id) == find_t(mb->id)) return;
    if (ma) return bind_t(ma->id, b);
    if (mb) return bind_t(mb->id, a);
    if (a->v.index() != b->v.index()) fail_mismatch("type", pretty(a), pretty(b));
    if (const auto* pa = std::get_if<PairT>(&a->v)) {
      const auto& pb = std::get<PairT>(b->v);
      unify_t(pa->fst, pb.fst);
      unify_t(pa->snd, pb.snd);
    } else if (const auto* fa = std::get_if<FunT>(&a->v)) {
      const auto& fb = std::get<FunT>(b->v);
      unify_t(fa->dom, fb.dom);
      unify_t(fa->cod, fb.cod);
    } else if (const auto* sa = std::get_if<SessT>(&a->v)) {
      unify_s(sa->s, std::get<SessT>(b->v).s);
    }
  }

  void unify_s(const SessionPtr& a0, const SessionPtr& b0) {
    SessionPtr a = shallow_s(a0), b = shallow_s(b0);
    const auto* ma = std::get_if<MetaS>(&a->v);
    const auto* mb = std::get_if<MetaS>(&b->v);
    if (ma && mb && find_s(ma->id) == find_s(mb->id)) return;
    if (ma && mb) return union_s(ma->id, mb->id);
    if (ma) return bind_s(ma->id, b);
    if (mb) return bind_s(mb->id, a);
    if (a->v.index() != b->v.index()) {
      fail_mismatch("session", pretty(a), pretty(b));
    }
    if (const auto* oa = std::get_if<OutS>(&a->v)) {
      const auto& ob = std::get<OutS>(b->v);
      unify_t(oa->payload, ob.payload);
      unify_s(oa->cont, ob.cont);
    } else if (const auto* ia = std::get_if<InS>(&a->v)) {
      const auto& ib = std::get<InS>(b->v);
      unify_t(ia->payload, ib.payload);
      unify_s(ia->cont, ib.cont);
    } else if (const auto* la = std::get_if<SelS>(&a->v)) {
      unify_branches(la->branches, std::get<SelS>(b->v).branches, a, b);
    } else if (const auto* ba = std::get_if<BraS>(&a->v)) {
      unify_branches(ba->branches, std::get<BraS>(b->v).branches, a, b);
    }
  }

  // One step of the constraint a = dual(b): matched head constructors are
  // consumed, and a known head on either side is mirrored onto the other
  // with a fresh placeholder tail. Tails still to be related are appended
  // to defer. Returns false (re-queueing the pair untouched) only when both
  // heads are placeholders, where no direction of progress exists.
  bool dual_step(const SessionPtr& a0, const SessionPtr& b0,
                 std::vector<std::pair<SessionPtr, SessionPtr>>& defer) {
    SessionPtr a = shallow_s(a0), b = shallow_s(b0);
    bool ma = std::holds_alternative<MetaS>(a->v);
    bool mb = std::holds_alternative<MetaS>(b->v);
    if (ma && mb) {
      defer.emplace_back(a, b);
      return false;
    }
    if (ma || mb) {
      // Mirror the known head, then relate the fresh tail to the known one.
      const SessionPtr& known = ma ? b : a;
      const SessionPtr& hole = ma ? a : b;
      if (std::holds_alternative<EndS>(known->v)) {
        unify_s(hole, mk_end());
        return true;
      }
      if (const auto* o = std::get_if<OutS>(&known->v)) {
        SessionPtr tail = fresh_s();
        unify_s(hole, mk_in(o->payload, tail));
        if (ma) defer.emplace_back(tail, o->cont);
        else defer.emplace_back(o->cont, tail);
        return true;
      }
      if (const auto* i = std::get_if<InS>(&known->v)) {
        SessionPtr tail = fresh_s();
        unify_s(hole, mk_out(i->payload, tail));
        if (ma) defer.emplace_back(tail, i->cont);
        else defer.emplace_back(i->cont, tail);
        return true;
      }
      const SessionBranches* bs = branches_of(known);
      SessionBranches mirror;
      std::vector<std::pair<SessionPtr, SessionPtr>> tails;
      for (const auto& [l, cont] : *bs) {
        SessionPtr tail = fresh_s();
        mirror.emplace(l, tail);
        if (ma) tails.emplace_back(tail, cont);
        else tails.emplace_back(cont, tail);
      }
      unify_s(hole, std::holds_alternative<SelS>(known->v)
                        ? mk_bra(std::move(mirror))
                        : mk_sel(std::move(mirror)));
      defer.insert(defer.end(), tails.begin(), tails.end());
      return true;
    }
    if (std::holds_alternative<EndS>(a->v) &&
        std::holds_alternative<EndS>(b->v)) {
      return true;
    }
    const auto* oa = std::get_if<OutS>(&a->v);
    const auto* ib = std::get_if<InS>(&b->v);
    if (oa && ib) {
      unify_t(oa->payload, ib->payload);
      defer.emplace_back(oa->cont, ib->cont);
      return true;
    }
    const auto* ia = std::get_if<InS>(&a->v);
    const auto* ob = std::get_if<OutS>(&b->v);
    if (ia && ob) {
      unify_t(ia->payload, ob->payload);
      defer.emplace_back(ia->cont, ob->cont);
      return true;
    }
    const SessionBranches* la =
        std::holds_alternative<SelS>(a->v) ? branches_of(a) : nullptr;
    const SessionBranches* rb =
        std::holds_alternative<BraS>(b->v) ? branches_of(b) : nullptr;
    if (!la && !rb) {
      la = std::holds_alternative<BraS>(a->v) ? branches_of(a) : nullptr;
      rb = std::holds_alternative<SelS>(b->v) ? branches_of(b) : nullptr;
    }
    if (la && rb) {
      if (la->size() != rb->size()) {
        fail_mismatch("session", pretty(a), "dual of " + pretty(b));
      }
      auto il = la->begin();
      auto ir = rb->begin();
      for (; il != la->end(); ++il, ++ir) {
        if (il->first != ir->first) {
          fail_mismatch("session", pretty(a), "dual of " + pretty(b));
        }
        defer.emplace_back(il->second, ir->second);
      }
      return true;
    }
    fail_mismatch("session", pretty(a), "dual of " + pretty(b));
  }

  // Records that session s selects label j and returns the continuation.
  SessionPtr select_branch(const SessionPtr& s0, const Name& j) {
    SessionPtr s = shallow_s(s0);
    if (const auto* sel = std::get_if<SelS>(&s->v)) {
      auto it = sel->branches.find(j);
      if (it == sel->branches.end()) {
        throw TypeError("TypeMismatch", "label '" + j +
                                            "' is not offered by " +
                                            pretty(s));
      }
      return it->second;
    }
    if (const auto* m = std::get_if<MetaS>(&s->v)) {
      return partial_branch(m->id, true, j);
    }
    throw TypeError("TypeMismatch", "select applied to non-selection type " +
                                        pretty(s));
  }

  // Same from the buffer side: a label in transit means the receiving
  // endpoint offers at least j.
  SessionPtr offer_branch(const SessionPtr& s0, const Name& j) {
    SessionPtr s = shallow_s(s0);
    if (const auto* bra = std::get_if<BraS>(&s->v)) {
      auto it = bra->branches.find(j);
      if (it == bra->branches.end()) {
        throw TypeError("BufferTypeMismatch",
                        "buffered label '" + j + "' is not offered by " +
                            pretty(s));
      }
      return it->second;
    }
    if (const auto* m = std::get_if<MetaS>(&s->v)) {
      return partial_branch(m->id, false, j);
    }
    throw TypeError("BufferTypeMismatch", "buffered label '" + j +
                                              "' against " +
                                              pretty(s));
  }

  bool ground_t(const TypePtr& t0) {
    TypePtr t = shallow_t(t0);
    if (std::holds_alternative<MetaT>(t->v)) return false;
    if (const auto* p = std::get_if<PairT>(&t->v)) {
      return ground_t(p->fst) && ground_t(p->snd);
    }
    if (const auto* f = std::get_if<FunT>(&t->v)) {
      return ground_t(f->dom) && ground_t(f->cod);
    }
    if (const auto* s = std::get_if<SessT>(&t->v)) return ground_s(s->s);
    return true;
  }
  bool ground_s(const SessionPtr& s0) {
    SessionPtr s = shallow_s(s0);
    if (std::holds_alternative<MetaS>(s->v)) return false;
    if (const auto* o = std::get_if<OutS>(&s->v)) {
      return ground_t(o->payload) && ground_s(o->cont);
    }
    if (const auto* i = std::get_if<InS>(&s->v)) {
      return ground_t(i->payload) && ground_s(i->cont);
    }
    const SessionBranches* bs = branches_of(s);
    if (!bs) return true;  // end
    return std::all_of(bs->begin(), bs->end(),
                       [&](const auto& kv) { return ground_s(kv.second); });
  }

  // Grounds out fully: unbound placeholders become end, partial branch maps
  // close over exactly the labels seen. Binds as it goes so every reference
  // resolves identically.
  TypePtr close_t(const TypePtr& t0) {
    TypePtr t = shallow_t(t0);
    if (const auto* m = std::get_if<MetaT>(&t->v)) {
      TypePtr e = mk_sess_t(mk_end());
      bind_t(m->id, e);
      return e;
    }
    if (const auto* p = std::get_if<PairT>(&t->v)) {
      return mk_pair_t(close_t(p->fst), close_t(p->snd));
    }
    if (const auto* f = std::get_if<FunT>(&t->v)) {
      return mk_fun_t(close_t(f->dom), close_t(f->cod));
    }
    if (const auto* s = std::get_if<SessT>(&t->v)) {
      return mk_sess_t(close_s(s->s));
    }
    return t;
  }
  SessionPtr close_s(const SessionPtr& s0) {
    SessionPtr s = shallow_s(s0);
    if (const auto* m = std::get_if<MetaS>(&s->v)) {
      SEntry& e = sess_[find_s(m->id)];
      SessionPtr closed;
      if (e.has_partial) {
        // Clear the partial before closing branches so self-references via
        // the same root cannot revisit this entry.
        SessionBranches raw = std::move(e.partial);
        bool sel = e.partial_sel;
        e.partial.clear();
        e.has_partial = false;
        SessionBranches bs;
        for (const auto& [l, b] : raw) bs.emplace(l, close_s(b));
        closed = sel ? mk_sel(std::move(bs)) : mk_bra(std::move(bs));
      } else {
        closed = mk_end();
      }
      sess_[find_s(m->id)].bound = closed;
      return closed;
    }
    if (const auto* o = std::get_if<OutS>(&s->v)) {
      return mk_out(close_t(o->payload), close_s(o->cont));
    }
    if (const auto* i = std::get_if<InS>(&s->v)) {
      return mk_in(close_t(i->payload), close_s(i->cont));
    }
    if (const auto* l = std::get_if<SelS>(&s->v)) {
      SessionBranches bs;
      for (const auto& [lb, b] : l->branches) bs.emplace(lb, close_s(b));
      return mk_sel(std::move(bs));
    }
    if (const auto* b = std::get_if<BraS>(&s->v)) {
      SessionBranches bs;
      for (const auto& [lb, br] : b->branches) bs.emplace(lb, close_s(br));
      return mk_bra(std::move(bs));
    }
    return s;
  }

 private:
  struct SEntry {
    int parent;
    std::optional<SessionPtr> bound;
    bool has_partial = false;
    bool partial_sel = false;  // true: selects labels; false: offers them
    SessionBranches partial;
  };
  struct TEntry {
    int parent;
    std::optional<TypePtr> bound;
  };

  static const SessionBranches* branches_of(const SessionPtr& s) {
    if (const auto* l = std::get_if<SelS>(&s->v)) return &l->branches;
    if (const auto* b = std::get_if<BraS>(&s->v)) return &b->branches;
    return nullptr;
  }

  int find_s(int i) {
    while (sess_[i].parent != i) {
      sess_[i].parent = sess_[sess_[i].parent].parent;
      i = sess_[i].parent;
    }
    return i;
  }
  int find_t(int i) {
    while (type_[i].parent != i) {
      type_[i].parent = type_[type_[i].parent].parent;
      i = type_[i].parent;
    }
    return i;
  }

  SessionPtr partial_branch(int id, bool sel, const Name& j) {
    int root = find_s(id);
    if (!sess_[root].has_partial) {
      sess_[root].has_partial = true;
      sess_[root].partial_sel = sel;
    } else if (sess_[root].partial_sel != sel) {
      throw TypeError("TypeMismatch",
                      "endpoint both selects and offers labels");
    }
    auto it = sess_[root].partial.find(j);
    if (it != sess_[root].partial.end()) return it->second;
    // fresh_s may grow sess_, so never touch an entry across the call.
    SessionPtr b = fresh_s();
    sess_[root].partial.emplace(j, b);
    return b;
  }

  void bind_t(int id, const TypePtr& t) {
    int root = find_t(id);
    if (const auto* m = std::get_if<MetaT>(&t->v)) {
      int other = find_t(m->id);
      if (other != root) type_[other].parent = root;
      return;
    }
    if (occurs_in_type(std::nullopt, root, t)) {
      throw TypeError("TypeMismatch", "cyclic type constraint");
    }
    type_[root].bound = t;
  }

  void bind_s(int id, const SessionPtr& s) {
    int root = find_s(id);
    if (occurs_s(root, std::nullopt, s)) {
      throw TypeError("TypeMismatch", "cyclic session constraint");
    }
    SEntry& e = sess_[root];
    if (!e.has_partial) {
      e.bound = s;
      return;
    }
    // The concrete session must honor every label already recorded.
    SessionBranches partial = std::move(e.partial);
    bool sel = e.partial_sel;
    e.partial.clear();
    e.has_partial = false;
    e.bound = s;
    const SessionBranches* concrete = nullptr;
    if (sel) {
      if (const auto* c = std::get_if<SelS>(&s->v)) concrete = &c->branches;
    } else {
      if (const auto* c = std::get_if<BraS>(&s->v)) concrete = &c->branches;
    }
    if (!concrete) {
      fail_mismatch("session", sel ? "a selection" : "an offer", pretty(s));
    }
    for (const auto& [l, b] : partial) {
      auto it = concrete->find(l);
      if (it == concrete->end()) {
        throw TypeError("TypeMismatch", "label '" + l +
                                            "' is not offered by " +
                                            pretty(s));
      }
      unify_s(b, it->second);
    }
  }

  void union_s(int a, int b) {
    int ra = find_s(a), rb = find_s(b);
    if (ra == rb) return;
    if (sess_[ra].has_partial && sess_[rb].has_partial &&
        sess_[ra].partial_sel != sess_[rb].partial_sel) {
      throw TypeError("TypeMismatch",
                      "endpoint both selects and offers labels");
    }
    // Fold b's partial into a, then point b at a.
    if (sess_[rb].has_partial) {
      SessionBranches moved = std::move(sess_[rb].partial);
      bool sel = sess_[rb].partial_sel;
      sess_[rb].partial.clear();
      sess_[rb].has_partial = false;
      if (!sess_[ra].has_partial) {
        sess_[ra].has_partial = true;
        sess_[ra].partial_sel = sel;
      }
      for (auto& [l, s] : moved) {
        auto it = sess_[ra].partial.find(l);
        if (it == sess_[ra].partial.end()) {
          sess_[ra].partial.emplace(l, s);
        } else {
          // Recursion can rebind ra's entry and drop its partial map, so
          // unify against a copy rather than the map node.
          SessionPtr prior = it->second;
          unify_s(prior, s);
        }
      }
    }
    sess_[rb].parent = ra;
  }

  void unify_branches(const SessionBranches& a, const SessionBranches& b,
                      const SessionPtr& wa, const SessionPtr& wb) {
    if (a.size() != b.size()) {
      fail_mismatch("session", pretty(wa), pretty(wb));
    }
    auto ia = a.begin();
    auto ib = b.begin();
    for (; ia != a.end(); ++ia, ++ib) {
      if (ia->first != ib->first) {
        fail_mismatch("session", pretty(wa), pretty(wb));
      }
      unify_s(ia->second, ib->second);
    }
  }

  // Occurs checks walk both layers; sroot/troot pick which root is sought.
  bool occurs_s(std::optional<int> sroot, std::optional<int> troot,
                const SessionPtr& s0) {
    SessionPtr s = shallow_s(s0);
    if (const auto* m = std::get_if<MetaS>(&s->v)) {
      int r = find_s(m->id);
      if (sroot && r == *sroot) return true;
      const SEntry& e = sess_[r];
      if (e.has_partial) {
        for (const auto& [l, b] : e.partial) {
          if (occurs_s(sroot, troot, b)) return true;
        }
      }
      return false;
    }
    if (const auto* o = std::get_if<OutS>(&s->v)) {
      return occurs_in_type(sroot, troot, o->payload) ||
             occurs_s(sroot, troot, o->cont);
    }
    if (const auto* i = std::get_if<InS>(&s->v)) {
      return occurs_in_type(sroot, troot, i->payload) ||
             occurs_s(sroot, troot, i->cont);
    }
    if (const SessionBranches* bs = branches_of(s)) {
      for (const auto& [l, b] : *bs) {
        if (occurs_s(sroot, troot, b)) return true;
      }
    }
    return false;
  }
  bool occurs_s(int sroot, std::optional<int> troot, const SessionPtr& s) {
    return occurs_s(std::optional<int>(sroot), troot, s);
  }
  bool occurs_in_type(std::optional<int> sroot, std::optional<int> troot,
                      const TypePtr& t0) {
    TypePtr t = shallow_t(t0);
    if (const auto* m = std::get_if<MetaT>(&t->v)) {
      return troot && find_t(m->id) == *troot;
    }
    if (const auto* p = std::get_if<PairT>(&t->v)) {
      return occurs_in_type(sroot, troot, p->fst) ||
             occurs_in_type(sroot, troot, p->snd);
    }
    if (const auto* f = std::get_if<FunT>(&t->v)) {
      return occurs_in_type(sroot, troot, f->dom) ||
             occurs_in_type(sroot, troot, f->cod);
    }
    if (const auto* s = std::get_if<SessT>(&t->v)) {
      return occurs_s(sroot, troot, s->s);
    }
    return false;
  }

  std::vector<SEntry> sess_;
  std::vector<TEntry> type_;
};

// --------------------------------------------------------------- checker
//
// Leftover threading: each rule consumes bindings from an environment passed
// by value and returns what remains. Judgment environments record exactly
// the bindings the subtree consumed, so splitting contexts never needs
// search. Derivation nodes stay mutable until finalize grounds them.

using MDeriv = std::shared_ptr<Derivation>;

TypingEnv consumed_env(const TypingEnv& before, const TypingEnv& after) {
  TypingEnv out;
  for (const auto& [n, t] : before) {
    if (!after.count(n)) out.emplace(n, t);
  }
  return out;
}

class Checker {
 public:
  struct TermOut {
    TypePtr type;
    TypingEnv env;  // what remains
    MDeriv d;
  };
  struct BufOut {
    SessionPtr y_rest;  // receiving endpoint's protocol past the buffer
    TypingEnv env;
    MDeriv d;
  };
  struct ConfOut {
    TypePtr type;
    Marker marker;
    TypingEnv env;
    MDeriv d;
  };

  TermOut term(TypingEnv env, const TermPtr& t) {
    TypingEnv before = env;
    TermOut out = term_impl(std::move(env), t);
    std::get<TermJudgment>(out.d->judgment).env =
        consumed_env(before, out.env);
    return out;
  }

  BufOut buffer(TypingEnv env, const std::vector<Message>& msgs, size_t count,
                const SessionPtr& y_view) {
    TypingEnv before = env;
    BufOut out = buffer_impl(std::move(env), msgs, count, y_view);
    std::get<BufferJudgment>(out.d->judgment).env =
        consumed_env(before, out.env);
    return out;
  }

  ConfOut config(TypingEnv env, const ConfigPtr& c) {
    TypingEnv before = env;
    ConfOut out = config_impl(std::move(env), c);
    std::get<ConfigJudgment>(out.d->judgment).env =
        consumed_env(before, out.env);
    return out;
  }

  // Grounds every type in the tree and stamps preorder ids.
  void finalize(const MDeriv& root) {
    resolve_dual_pairs();
    int next_id = 0;
    finalize_node(root, next_id);
  }

  MetaStore& store() { return store_; }

 private:
  TermOut term_impl(TypingEnv env, const TermPtr& t) {
    return std::visit(
        [&](const auto& node) -> TermOut {
          using T = std::decay_t<decltype(node)>;
          if constexpr (std::is_same_v<T, Var>) {
            auto it = env.find(node.name);
            if (it == env.end()) {
              // A name the context does not own finishes at end.
              return leaf(std::move(env), "T-EndR", t, mk_sess_t(mk_end()));
            }
            TypePtr ty = it->second;
            env.erase(it);
            return leaf(std::move(env), "T-Var", t, ty);
          } else if constexpr (std::is_same_v<T, Unit>) {
            return leaf(std::move(env), "T-Unit", t, mk_unit_t());
          } else if constexpr (std::is_same_v<T, Abs>) {
            TypePtr dom = store_.fresh_t();
            env.emplace(node.binder, dom);
            TermOut body = term(std::move(env), node.body);
            discharge(body, node.binder);
            return node1("T-Abs", t, mk_fun_t(dom, body.type),
                         std::move(body));
          } else if constexpr (std::is_same_v<T, App>) {
            TermOut f = term(std::move(env), node.fun);
            TypePtr dom = store_.fresh_t();
            TypePtr cod = store_.fresh_t();
            store_.unify_t(f.type, mk_fun_t(dom, cod));
            TermOut a = term(std::move(f.env), node.arg);
            store_.unify_t(a.type, dom);
            return node2("T-App", t, cod, f.d, std::move(a));
          } else if constexpr (std::is_same_v<T, Pair>) {
            TermOut fst = term(std::move(env), node.fst);
            TermOut snd = term(std::move(fst.env), node.snd);
            TypePtr ty = mk_pair_t(fst.type, snd.type);
            return node2("T-Pair", t, ty, fst.d, std::move(snd));
          } else if constexpr (std::is_same_v<T, LetPair>) {
            TermOut scrut = term(std::move(env), node.scrutinee);
            TypePtr a = store_.fresh_t();
            TypePtr b = store_.fresh_t();
            store_.unify_t(scrut.type, mk_pair_t(a, b));
            scrut.env.emplace(node.fst_binder, a);
            scrut.env.emplace(node.snd_binder, b);
            TermOut body = term(std::move(scrut.env), node.body);
            discharge(body, node.snd_binder);
            discharge(body, node.fst_binder);
            return node2("T-Split", t, body.type, scrut.d, std::move(body));
          } else if constexpr (std::is_same_v<T, New>) {
            TypePtr ty = mk_pair_t(mk_sess_t(node.annot),
                                   mk_sess_t(dual(node.annot)));
            return leaf(std::move(env), "T-New", t, ty);
          } else if constexpr (std::is_same_v<T, Spawn>) {
            TermOut a = term(std::move(env), node.arg);
            TypePtr cont = store_.fresh_t();
            store_.unify_t(a.type, mk_pair_t(mk_unit_t(), cont));
            return node1("T-Spawn", t, cont, std::move(a));
          } else if constexpr (std::is_same_v<T, Send>) {
            TermOut a = term(std::move(env), node.arg);
            TypePtr payload = store_.fresh_t();
            SessionPtr cont = store_.fresh_s();
            store_.unify_t(
                a.type,
                mk_pair_t(payload, mk_sess_t(mk_out(payload, cont))));
            return node1("T-Send", t, mk_sess_t(cont), std::move(a));
          } else if constexpr (std::is_same_v<T, Recv>) {
            TermOut a = term(std::move(env), node.arg);
            TypePtr payload = store_.fresh_t();
            SessionPtr cont = store_.fresh_s();
            store_.unify_t(a.type, mk_sess_t(mk_in(payload, cont)));
            TypePtr ty = mk_pair_t(payload, mk_sess_t(cont));
            return node1("T-Recv", t, ty, std::move(a));
          } else if constexpr (std::is_same_v<T, Select>) {
            TermOut a = term(std::move(env), node.arg);
            SessionPtr sel = store_.fresh_s();
            store_.unify_t(a.type, mk_sess_t(sel));
            SessionPtr cont = store_.select_branch(sel, node.label);
            return node1("T-Select", t, mk_sess_t(cont), std::move(a));
          } else if constexpr (std::is_same_v<T, Case>) {
            return case_term(std::move(env), t, node);
          } else if constexpr (std::is_same_v<T, Sub>) {
            TypePtr bt = store_.fresh_t();
            env.emplace(node.binder, bt);
            TermOut body = term(std::move(env), node.body);
            discharge(body, node.binder);
            TermOut repl = term(std::move(body.env), node.replacement);
            store_.unify_t(repl.type, bt);
            return node2("T-Sub", t, body.type, body.d, std::move(repl));
          } else {
            static_assert(std::is_same_v<T, SendPrime>);
            TermOut m = term(std::move(env), node.payload);
            TermOut n = term(std::move(m.env), node.channel);
            SessionPtr cont = store_.fresh_s();
            store_.unify_t(n.type, mk_sess_t(mk_out(m.type, cont)));
            return node2("T-Send'", t, mk_sess_t(cont), m.d, std::move(n));
          }
        },
        t->v);
  }

  TermOut case_term(TypingEnv env, const TermPtr& t, const Case& node) {
    TermOut scrut = term(std::move(env), node.scrutinee);
    SessionBranches offered;
    for (const auto& [l, unused] : node.branches) {
      offered.emplace(l, store_.fresh_s());
    }
    store_.unify_t(scrut.type, mk_sess_t(mk_bra(offered)));
    TypePtr result = store_.fresh_t();
    std::vector<MDeriv> premises{scrut.d};
    std::optional<TypingEnv> after;
    for (const auto& [l, branch] : node.branches) {
      // Branches split the remaining context identically.
      TermOut b = term(scrut.env, branch);
      store_.unify_t(b.type, mk_fun_t(mk_sess_t(offered.at(l)), result));
      if (after && keys(*after) != keys(b.env)) {
        throw TypeError("LinearityViolation",
                        "case branches consume different names");
      }
      after = std::move(b.env);
      premises.push_back(b.d);
    }
    MDeriv d = std::make_shared<Derivation>();
    d->rule = "T-Case";
    d->judgment = TermJudgment{{}, t, result};
    d->premises.assign(premises.begin(), premises.end());
    return {result, after ? std::move(*after) : std::move(scrut.env), d};
  }

  // Peels messages oldest-first against the receiving endpoint's protocol.
  // All sessions here are the receiving side's view; finalize dualizes the
  // recorded from/to once ground, restoring the sending side's S' > S.
  BufOut buffer_impl(TypingEnv env, const std::vector<Message>& msgs,
                     size_t count, const SessionPtr& y_view) {
    if (count == 0) {
      MDeriv d = std::make_shared<Derivation>();
      d->rule = "T-Buf";
      d->judgment = BufferJudgment{{}, {}, y_view, y_view};
      dualize_.insert(d.get());
      return {y_view, std::move(env), d};
    }
    const Message& back = msgs[count - 1];
    std::vector<Message> listed(msgs.begin(), msgs.begin() + count);
    if (back.is_label()) {
      SessionPtr next = store_.offer_branch(y_view, back.label());
      BufOut rest = buffer(std::move(env), msgs, count - 1, next);
      MDeriv d = std::make_shared<Derivation>();
      d->rule = "T-BufSelect";
      d->judgment = BufferJudgment{{}, std::move(listed), rest.y_rest, y_view};
      d->premises = {rest.d};
      dualize_.insert(d.get());
      return {rest.y_rest, std::move(rest.env), d};
    }
    // A term in transit: the receiving view's head must be an input.
    SessionPtr head = store_.shallow_s(y_view);
    if (!std::holds_alternative<MetaS>(head->v) &&
        !std::holds_alternative<InS>(head->v)) {
      throw TypeError("BufferTypeMismatch",
                      "buffered term against " + pretty(head));
    }
    TypePtr payload = store_.fresh_t();
    SessionPtr next = store_.fresh_s();
    store_.unify_s(y_view, mk_in(payload, next));
    TermOut m = term(std::move(env), back.term());
    store_.unify_t(m.type, payload);
    BufOut rest = buffer(std::move(m.env), msgs, count - 1, next);
    MDeriv d = std::make_shared<Derivation>();
    d->rule = "T-BufSend";
    d->judgment = BufferJudgment{{}, std::move(listed), rest.y_rest, y_view};
    d->premises = {m.d, rest.d};
    dualize_.insert(d.get());
    return {rest.y_rest, std::move(rest.env), d};
  }

  ConfOut config_impl(TypingEnv env, const ConfigPtr& c) {
    return std::visit(
        [&](const auto& node) -> ConfOut {
          using T = std::decay_t<decltype(node)>;
          if constexpr (std::is_same_v<T, Thread>) {
            TermOut t = term(std::move(env), node.term);
            const bool main = node.marker == Marker::Main;
            if (!main) {
              try {
                store_.unify_t(t.type, mk_unit_t());
              } catch (const TypeError&) {
                throw TypeError("ChildNotUnit",
                                "child thread of type " + pretty(t.type));
              }
            }
            MDeriv d = std::make_shared<Derivation>();
            d->rule = main ? "T-Main" : "T-Child";
            d->judgment = ConfigJudgment{{}, c, t.type, node.marker};
            d->premises = {t.d};
            return {t.type, node.marker, std::move(t.env), d};
          } else if constexpr (std::is_same_v<T, CPar>) {
            ConfOut l = config(std::move(env), node.left);
            ConfOut r = config(std::move(l.env), node.right);
            Marker m = combine_markers(l.marker, r.marker);
            const bool right_child = r.marker == Marker::Child;
            TypePtr ty = right_child ? l.type : r.type;
            MDeriv d = std::make_shared<Derivation>();
            d->rule = right_child ? "T-ParR" : "T-ParL";
            d->judgment = ConfigJudgment{{}, c, ty, m};
            d->premises = {l.d, r.d};
            return {ty, m, std::move(r.env), d};
          } else if constexpr (std::is_same_v<T, BufRes>) {
            return buf_res(std::move(env), c, node);
          } else {
            static_assert(std::is_same_v<T, CSub>);
            TypePtr bt = store_.fresh_t();
            env.emplace(node.binder, bt);
            ConfOut body = config(std::move(env), node.body);
            discharge_config(body, node.binder);
            TermOut repl = term(std::move(body.env), node.replacement);
            store_.unify_t(repl.type, bt);
            MDeriv d = std::make_shared<Derivation>();
            d->rule = "T-ConfSub";
            d->judgment = ConfigJudgment{{}, c, body.type, body.marker};
            d->premises = {body.d, repl.d};
            return {body.type, body.marker, std::move(repl.env), d};
          }
        },
        c->v);
  }

  ConfOut buf_res(TypingEnv env, const ConfigPtr& c, const BufRes& node) {
    SessionPtr sx = store_.fresh_s();
    SessionPtr sy = store_.fresh_s();
    env.emplace(node.out_ep, mk_sess_t(sx));
    env.emplace(node.in_ep, mk_sess_t(sy));
    ConfOut body = config(std::move(env), node.body);
    // The sending endpoint can only be used by the configuration itself.
    discharge_config(body, node.out_ep);
    bool y_in_body = !body.env.count(node.in_ep);
    BufOut buf = buffer(std::move(body.env), node.buf, node.buf.size(), sy);
    bool y_in_buffer = !y_in_body && !buf.env.count(node.in_ep);
    if (!y_in_body && !y_in_buffer) {
      // Unused receiving endpoint: its protocol must already be spent.
      force_end(mk_sess_t(sy));
      buf.env.erase(node.in_ep);
      absorb_end(body.d, node.in_ep);
    }
    // The sender resumes exactly where the buffered messages leave off.
    dual_pairs_.emplace_back(sx, buf.y_rest);
    MDeriv d = std::make_shared<Derivation>();
    d->rule = y_in_buffer ? "T-ResBuf" : "T-Res";
    d->judgment = ConfigJudgment{{}, c, body.type, body.marker};
    d->premises = {buf.d, body.d};
    return {body.type, body.marker, std::move(buf.env), d};
  }

  // Unused binder: its type collapses to end and the premise is weakened
  // explicitly so the derivation stays a valid rule instance.
  void discharge(TermOut& out, const Name& x) {
    auto it = out.env.find(x);
    if (it == out.env.end()) return;
    force_end(it->second);
    out.env.erase(it);
    out.d = end_wrap(out.d, x);
  }

  void discharge_config(ConfOut& out, const Name& x) {
    auto it = out.env.find(x);
    if (it == out.env.end()) return;
    force_end(it->second);
    out.env.erase(it);
    absorb_end(out.d, x);
  }

  MDeriv end_wrap(const MDeriv& inner, const Name& x) {
    const auto& j = std::get<TermJudgment>(inner->judgment);
    MDeriv wrap = std::make_shared<Derivation>();
    wrap->rule = "T-EndL";
    TypingEnv extended = j.env;
    extended.emplace(x, mk_sess_t(mk_end()));
    wrap->judgment = TermJudgment{std::move(extended), j.subject, j.type};
    wrap->premises = {inner};
    return wrap;
  }

  // There is no configuration-level weakening rule, so an unused
  // configuration binding is pushed down to the leftmost thread and
  // discharged there; every judgment on the way records it.
  void absorb_end(const MDeriv& d, const Name& x) {
    auto& j = std::get<ConfigJudgment>(d->judgment);
    j.env.emplace(x, mk_sess_t(mk_end()));
    if (d->rule == "T-Main" || d->rule == "T-Child") {
      d->premises[0] =
          end_wrap(std::const_pointer_cast<Derivation>(d->premises[0]), x);
      return;
    }
    for (auto& p : d->premises) {
      if (std::holds_alternative<ConfigJudgment>(p->judgment)) {
        absorb_end(std::const_pointer_cast<Derivation>(p), x);
        return;
      }
    }
    throw TypeError("LinearityViolation",
                    "no thread to absorb unused binding " + x);
  }

  void force_end(const TypePtr& t) {
    if (store_.ground_t(t)) {
      TypePtr g = store_.close_t(t);
      const auto* s = std::get_if<SessT>(&g->v);
      if (!s || !std::holds_alternative<EndS>(s->s->v)) {
        throw TypeError("LinearityViolation",
                        "unused binding of type " + pretty(g));
      }
      return;
    }
    // Unconstrained: commit it to end.
    try {
      store_.unify_t(t, mk_sess_t(mk_end()));
    } catch (const TypeError&) {
      throw TypeError("LinearityViolation",
                      "unused binding of type " + pretty(t));
    }
  }

  // A restriction's sending endpoint must follow the dual of what remains
  // for the receiver past the buffer. Neither side need be ground when the
  // restriction closes (the receiver may escape as a payload), so the
  // constraints are peeled head by head until only placeholder-against-
  // placeholder tails remain.
  void resolve_dual_pairs() {
    std::vector<std::pair<SessionPtr, SessionPtr>> work =
        std::move(dual_pairs_);
    bool progress = true;
    while (progress) {
      progress = false;
      std::vector<std::pair<SessionPtr, SessionPtr>> next;
      for (const auto& [sx, yr] : work) {
        progress = store_.dual_step(sx, yr, next) || progress;
      }
      work = std::move(next);
    }
    // Whatever stayed open is unconstrained from both ends: ground the
    // receiving side and push the dual across.
    for (const auto& [sx, yr] : work) {
      store_.unify_s(sx, dual(store_.close_s(yr)));
    }
  }

  void finalize_node(const MDeriv& d, int& next_id) {
    d->id = next_id++;
    std::visit(
        [&](auto& j) {
          using J = std::decay_t<decltype(j)>;
          for (auto& [n, t] : j.env) t = store_.close_t(t);
          if constexpr (std::is_same_v<J, BufferJudgment>) {
            j.from = store_.close_s(j.from);
            j.to = store_.close_s(j.to);
            if (dualize_.count(d.get())) {
              j.from = dual(j.from);
              j.to = dual(j.to);
            }
          } else {
            j.type = store_.close_t(j.type);
          }
        },
        d->judgment);
    for (auto& p : d->premises) {
      finalize_node(std::const_pointer_cast<Derivation>(p), next_id);
    }
  }

  static std::set<Name> keys(const TypingEnv& e) {
    std::set<Name> out;
    for (const auto& [n, t] : e) out.insert(n);
    return out;
  }

  TermOut leaf(TypingEnv env, const char* rule_name, const TermPtr& t,
               TypePtr ty) {
    MDeriv d = std::make_shared<Derivation>();
    d->rule = rule_name;
    d->judgment = TermJudgment{{}, t, ty};
    return {ty, std::move(env), d};
  }

  // Premises bind by reference: call sites read fields of the same TermOut
  // in sibling arguments, and by-value binding could move it first.
  TermOut node1(const char* rule_name, const TermPtr& t, TypePtr ty,
                TermOut&& premise) {
    MDeriv d = std::make_shared<Derivation>();
    d->rule = rule_name;
    d->judgment = TermJudgment{{}, t, ty};
    d->premises = {premise.d};
    return {ty, std::move(premise.env), d};
  }

  TermOut node2(const char* rule_name, const TermPtr& t, TypePtr ty,
                const MDeriv& first, TermOut&& second) {
    MDeriv d = std::make_shared<Derivation>();
    d->rule = rule_name;
    d->judgment = TermJudgment{{}, t, ty};
    d->premises = {first, second.d};
    return {ty, std::move(second.env), d};
  }

  MetaStore store_;
  std::vector<std::pair<SessionPtr, SessionPtr>> dual_pairs_;
  std::set<const Derivation*> dualize_;
};

void require_end_leftover(const TypingEnv& leftover) {
  for (const auto& [n, t] : leftover) {
    const auto* s = std::get_if<SessT>(&t->v);
    if (!s || !std::holds_alternative<EndS>(s->s->v)) {
      throw TypeError("LinearityViolation",
                      "unconsumed binding " + n + " : " + pretty(t));
    }
  }
}

}  // namespace

TermResult type_term(const TypingEnv& env, const TermPtr& t) {
  Checker ck;
  auto out = ck.term(env, t);
  ck.finalize(out.d);
  require_end_leftover(out.env);
  return {ck.store().close_t(out.type), std::move(out.env), out.d};
}

BufferResult type_buffer(const TypingEnv& env,
                         const std::vector<Message>& msgs,
                         const SessionPtr& target) {
  Checker ck;
  auto out = ck.buffer(env, msgs, msgs.size(), dual(target));
  ck.finalize(out.d);
  require_end_leftover(out.env);
  return {dual(ck.store().close_s(out.y_rest)), std::move(out.env), out.d};
}

ConfigResult type_config(const TypingEnv& env, const ConfigPtr& c) {
  Checker ck;
  auto out = ck.config(env, c);
  ck.finalize(out.d);
  require_end_leftover(out.env);  // end-typed leftovers are simply dropped
  return {ck.store().close_t(out.type), out.marker, out.d};
}

// ------------------------------------------------------------------ json

namespace {

nlohmann::ordered_json env_json(const TypingEnv& env) {
  auto out = nlohmann::ordered_json::object();
  for (const auto& [n, t] : env) out[n] = pretty(t);
  return out;
}

nlohmann::ordered_json deriv_json(const DerivPtr& d) {
  nlohmann::ordered_json out;
  out["id"] = d->id;
  out["rule"] = d->rule;
  std::visit(
      [&](const auto& j) {
        using J = std::decay_t<decltype(j)>;
        out["env"] = env_json(j.env);
        if constexpr (std::is_same_v<J, TermJudgment>) {
          out["judgment"] = "term";
          out["subject"] = pretty(j.subject);
          out["type"] = pretty(j.type);
        } else if constexpr (std::is_same_v<J, BufferJudgment>) {
          out["judgment"] = "buffer";
          auto msgs = nlohmann::ordered_json::array();
          for (const auto& m : j.msgs) {
            msgs.push_back(m.is_label() ? m.label() : pretty(m.term()));
          }
          out["buffer"] = msgs;
          out["from"] = pretty(j.from);
          out["to"] = pretty(j.to);
        } else {
          out["judgment"] = "config";
          out["subject"] = pretty(j.subject);
          out["type"] = pretty(j.type);
          out["marker"] = j.marker == Marker::Main ? "main" : "child";
        }
      },
      d->judgment);
  auto premises = nlohmann::ordered_json::array();
  for (const auto& p : d->premises) premises.push_back(deriv_json(p));
  out["premises"] = premises;
  return out;
}

}  // namespace

std::string derivation_to_json(const DerivPtr& d, int indent) {
  return deriv_json(d).dump(indent);
}

}  // namespace lastc
