#include "lastc/ast.hpp"

#include <cassert>
#include <stdexcept>

namespace lastc {

// ---------------------------------------------------------------- types

SessionPtr mk_out(TypePtr payload, SessionPtr cont) {
  return std::make_shared<const SessionType>(
      SessionType{OutS{std::move(payload), std::move(cont)}});
}
SessionPtr mk_in(TypePtr payload, SessionPtr cont) {
  return std::make_shared<const SessionType>(
      SessionType{InS{std::move(payload), std::move(cont)}});
}
SessionPtr mk_sel(SessionBranches branches) {
  return std::make_shared<const SessionType>(
      SessionType{SelS{std::move(branches)}});
}
SessionPtr mk_bra(SessionBranches branches) {
  return std::make_shared<const SessionType>(
      SessionType{BraS{std::move(branches)}});
}
SessionPtr mk_end() {
  static const SessionPtr end = std::make_shared<const SessionType>(
      SessionType{EndS{}});
  return end;
}

TypePtr mk_pair_t(TypePtr fst, TypePtr snd) {
  return std::make_shared<const TypeExpr>(
      TypeExpr{PairT{std::move(fst), std::move(snd)}});
}
TypePtr mk_fun_t(TypePtr dom, TypePtr cod) {
  return std::make_shared<const TypeExpr>(
      TypeExpr{FunT{std::move(dom), std::move(cod)}});
}
TypePtr mk_unit_t() {
  static const TypePtr unit =
      std::make_shared<const TypeExpr>(TypeExpr{UnitT{}});
  return unit;
}
TypePtr mk_sess_t(SessionPtr s) {
  return std::make_shared<const TypeExpr>(TypeExpr{SessT{std::move(s)}});
}
SessionPtr mk_meta_s(int id) {
  return std::make_shared<const SessionType>(SessionType{MetaS{id}});
}
TypePtr mk_meta_t(int id) {
  return std::make_shared<const TypeExpr>(TypeExpr{MetaT{id}});
}

SessionPtr dual(const SessionPtr& s) {
  return std::visit(
      [](const auto& node) -> SessionPtr {
        using T = std::decay_t<decltype(node)>;
        if constexpr (std::is_same_v<T, OutS>) {
          return mk_in(node.payload, dual(node.cont));
        } else if constexpr (std::is_same_v<T, InS>) {
          return mk_out(node.payload, dual(node.cont));
        } else if constexpr (std::is_same_v<T, SelS>) {
          SessionBranches out;
          for (const auto& [l, b] : node.branches) out.emplace(l, dual(b));
          return mk_bra(std::move(out));
        } else if constexpr (std::is_same_v<T, BraS>) {
          SessionBranches out;
          for (const auto& [l, b] : node.branches) out.emplace(l, dual(b));
          return mk_sel(std::move(out));
        } else if constexpr (std::is_same_v<T, MetaS>) {
          throw std::logic_error("dual of unresolved session placeholder");
        } else {
          return mk_end();
        }
      },
      s->v);
}

bool session_equal(const SessionPtr& a, const SessionPtr& b) {
  if (a.get() == b.get()) return true;
  if (a->v.index() != b->v.index()) return false;
  return std::visit(
      [&](const auto& na) -> bool {
        using T = std::decay_t<decltype(na)>;
        const auto& nb = std::get<T>(b->v);
        if constexpr (std::is_same_v<T, OutS> || std::is_same_v<T, InS>) {
          return type_equal(na.payload, nb.payload) &&
                 session_equal(na.cont, nb.cont);
        } else if constexpr (std::is_same_v<T, SelS> ||
                             std::is_same_v<T, BraS>) {
          if (na.branches.size() != nb.branches.size()) return false;
          auto ia = na.branches.begin();
          auto ib = nb.branches.begin();
          for (; ia != na.branches.end(); ++ia, ++ib) {
            if (ia->first != ib->first) return false;
            if (!session_equal(ia->second, ib->second)) return false;
          }
          return true;
        } else if constexpr (std::is_same_v<T, MetaS>) {
          return na.id == nb.id;
        } else {
          return true;
        }
      },
      a->v);
}

bool type_equal(const TypePtr& a, const TypePtr& b) {
  if (a.get() == b.get()) return true;
  if (a->v.index() != b->v.index()) return false;
  return std::visit(
      [&](const auto& na) -> bool {
        using T = std::decay_t<decltype(na)>;
        const auto& nb = std::get<T>(b->v);
        if constexpr (std::is_same_v<T, PairT>) {
          return type_equal(na.fst, nb.fst) && type_equal(na.snd, nb.snd);
        } else if constexpr (std::is_same_v<T, FunT>) {
          return type_equal(na.dom, nb.dom) && type_equal(na.cod, nb.cod);
        } else if constexpr (std::is_same_v<T, SessT>) {
          return session_equal(na.s, nb.s);
        } else if constexpr (std::is_same_v<T, MetaT>) {
          return na.id == nb.id;
        } else {
          return true;
        }
      },
      a->v);
}

// ---------------------------------------------------------------- terms

TermPtr mk_var(Name n) {
  return std::make_shared<const Term>(Term{Var{std::move(n)}});
}
TermPtr mk_unit() {
  static const TermPtr unit = std::make_shared<const Term>(Term{Unit{}});
  return unit;
}
TermPtr mk_abs(Name binder, TermPtr body) {
  return std::make_shared<const Term>(
      Term{Abs{std::move(binder), std::move(body)}});
}
TermPtr mk_app(TermPtr fun, TermPtr arg) {
  return std::make_shared<const Term>(
      Term{App{std::move(fun), std::move(arg)}});
}
TermPtr mk_pair(TermPtr fst, TermPtr snd) {
  return std::make_shared<const Term>(
      Term{Pair{std::move(fst), std::move(snd)}});
}
TermPtr mk_letpair(Name fst_binder, Name snd_binder, TermPtr scrutinee,
                   TermPtr body) {
  return std::make_shared<const Term>(
      Term{LetPair{std::move(fst_binder), std::move(snd_binder),
                   std::move(scrutinee), std::move(body)}});
}
TermPtr mk_new(SessionPtr annot) {
  return std::make_shared<const Term>(Term{New{std::move(annot)}});
}
TermPtr mk_spawn(TermPtr arg) {
  return std::make_shared<const Term>(Term{Spawn{std::move(arg)}});
}
TermPtr mk_send(TermPtr arg) {
  return std::make_shared<const Term>(Term{Send{std::move(arg)}});
}
TermPtr mk_recv(TermPtr arg) {
  return std::make_shared<const Term>(Term{Recv{std::move(arg)}});
}
TermPtr mk_select(Name label, TermPtr arg) {
  return std::make_shared<const Term>(
      Term{Select{std::move(label), std::move(arg)}});
}
TermPtr mk_case(TermPtr scrutinee, TermBranches branches) {
  return std::make_shared<const Term>(
      Term{Case{std::move(scrutinee), std::move(branches)}});
}
TermPtr mk_sub(TermPtr body, TermPtr replacement, Name binder) {
  return std::make_shared<const Term>(
      Term{Sub{std::move(body), std::move(replacement), std::move(binder)}});
}
TermPtr mk_send_prime(TermPtr payload, TermPtr channel) {
  return std::make_shared<const Term>(
      Term{SendPrime{std::move(payload), std::move(channel)}});
}

// ------------------------------------------------------- configurations

ConfigPtr mk_thread(Marker m, TermPtr t) {
  return std::make_shared<const Config>(Config{Thread{m, std::move(t)}});
}
ConfigPtr mk_cpar(ConfigPtr left, ConfigPtr right) {
  return std::make_shared<const Config>(
      Config{CPar{std::move(left), std::move(right)}});
}
ConfigPtr mk_bufres(Name out_ep, std::vector<Message> buf, Name in_ep,
                    ConfigPtr body) {
  return std::make_shared<const Config>(Config{BufRes{
      std::move(out_ep), std::move(buf), std::move(in_ep), std::move(body)}});
}
ConfigPtr mk_csub(ConfigPtr body, TermPtr replacement, Name binder) {
  return std::make_shared<const Config>(
      Config{CSub{std::move(body), std::move(replacement), std::move(binder)}});
}

// ----------------------------------------------------------- free names

static void fn_term(const TermPtr& t, NameSet& bound, NameSet& out) {
  std::visit(
      [&](const auto& node) {
        using T = std::decay_t<decltype(node)>;
        if constexpr (std::is_same_v<T, Var>) {
          if (!bound.count(node.name)) out.insert(node.name);
        } else if constexpr (std::is_same_v<T, Abs>) {
          bool added = bound.insert(node.binder).second;
          fn_term(node.body, bound, out);
          if (added) bound.erase(node.binder);
        } else if constexpr (std::is_same_v<T, App>) {
          fn_term(node.fun, bound, out);
          fn_term(node.arg, bound, out);
        } else if constexpr (std::is_same_v<T, Pair>) {
          fn_term(node.fst, bound, out);
          fn_term(node.snd, bound, out);
        } else if constexpr (std::is_same_v<T, LetPair>) {
          fn_term(node.scrutinee, bound, out);
          bool a1 = bound.insert(node.fst_binder).second;
          bool a2 = bound.insert(node.snd_binder).second;
          fn_term(node.body, bound, out);
          if (a1) bound.erase(node.fst_binder);
          if (a2) bound.erase(node.snd_binder);
        } else if constexpr (std::is_same_v<T, Spawn> ||
                             std::is_same_v<T, Send> ||
                             std::is_same_v<T, Recv>) {
          fn_term(node.arg, bound, out);
        } else if constexpr (std::is_same_v<T, Select>) {
          fn_term(node.arg, bound, out);
        } else if constexpr (std::is_same_v<T, Case>) {
          fn_term(node.scrutinee, bound, out);
          for (const auto& [l, b] : node.branches) fn_term(b, bound, out);
        } else if constexpr (std::is_same_v<T, Sub>) {
          // binder scopes over the body only; the replacement is outside.
          bool added = bound.insert(node.binder).second;
          fn_term(node.body, bound, out);
          if (added) bound.erase(node.binder);
          fn_term(node.replacement, bound, out);
        } else if constexpr (std::is_same_v<T, SendPrime>) {
          fn_term(node.payload, bound, out);
          fn_term(node.channel, bound, out);
        }
      },
      t->v);
}

static void fn_config(const ConfigPtr& c, NameSet& bound, NameSet& out) {
  std::visit(
      [&](const auto& node) {
        using T = std::decay_t<decltype(node)>;
        if constexpr (std::is_same_v<T, Thread>) {
          fn_term(node.term, bound, out);
        } else if constexpr (std::is_same_v<T, CPar>) {
          fn_config(node.left, bound, out);
          fn_config(node.right, bound, out);
        } else if constexpr (std::is_same_v<T, BufRes>) {
          bool a1 = bound.insert(node.out_ep).second;
          bool a2 = bound.insert(node.in_ep).second;
          for (const auto& m : node.buf) {
            if (!m.is_label()) fn_term(m.term(), bound, out);
          }
          fn_config(node.body, bound, out);
          if (a1) bound.erase(node.out_ep);
          if (a2) bound.erase(node.in_ep);
        } else if constexpr (std::is_same_v<T, CSub>) {
          bool added = bound.insert(node.binder).second;
          fn_config(node.body, bound, out);
          if (added) bound.erase(node.binder);
          fn_term(node.replacement, bound, out);
        }
      },
      c->v);
}

NameSet free_names(const TermPtr& t) {
  NameSet bound, out;
  fn_term(t, bound, out);
  return out;
}

NameSet free_names(const ConfigPtr& c) {
  NameSet bound, out;
  fn_config(c, bound, out);
  return out;
}

NameSet free_names(const Message& m) {
  if (m.is_label()) return {};
  return free_names(m.term());
}

// ------------------------------------------------------ name collection

void collect_names(const TermPtr& t, NameSet& out) {
  std::visit(
      [&](const auto& node) {
        using T = std::decay_t<decltype(node)>;
        if constexpr (std::is_same_v<T, Var>) {
          out.insert(node.name);
        } else if constexpr (std::is_same_v<T, Abs>) {
          out.insert(node.binder);
          collect_names(node.body, out);
        } else if constexpr (std::is_same_v<T, App>) {
          collect_names(node.fun, out);
          collect_names(node.arg, out);
        } else if constexpr (std::is_same_v<T, Pair>) {
          collect_names(node.fst, out);
          collect_names(node.snd, out);
        } else if constexpr (std::is_same_v<T, LetPair>) {
          out.insert(node.fst_binder);
          out.insert(node.snd_binder);
          collect_names(node.scrutinee, out);
          collect_names(node.body, out);
        } else if constexpr (std::is_same_v<T, Spawn> ||
                             std::is_same_v<T, Send> ||
                             std::is_same_v<T, Recv>) {
          collect_names(node.arg, out);
        } else if constexpr (std::is_same_v<T, Select>) {
          collect_names(node.arg, out);
        } else if constexpr (std::is_same_v<T, Case>) {
          collect_names(node.scrutinee, out);
          for (const auto& [l, b] : node.branches) collect_names(b, out);
        } else if constexpr (std::is_same_v<T, Sub>) {
          out.insert(node.binder);
          collect_names(node.body, out);
          collect_names(node.replacement, out);
        } else if constexpr (std::is_same_v<T, SendPrime>) {
          collect_names(node.payload, out);
          collect_names(node.channel, out);
        }
      },
      t->v);
}

void collect_names(const ConfigPtr& c, NameSet& out) {
  std::visit(
      [&](const auto& node) {
        using T = std::decay_t<decltype(node)>;
        if constexpr (std::is_same_v<T, Thread>) {
          collect_names(node.term, out);
        } else if constexpr (std::is_same_v<T, CPar>) {
          collect_names(node.left, out);
          collect_names(node.right, out);
        } else if constexpr (std::is_same_v<T, BufRes>) {
          out.insert(node.out_ep);
          out.insert(node.in_ep);
          for (const auto& m : node.buf) {
            if (!m.is_label()) collect_names(m.term(), out);
          }
          collect_names(node.body, out);
        } else if constexpr (std::is_same_v<T, CSub>) {
          out.insert(node.binder);
          collect_names(node.body, out);
          collect_names(node.replacement, out);
        }
      },
      c->v);
}

// --------------------------------------------------------------- rename

// All binders are globally fresh after parsing, so capture cannot occur in
// practice; the checks below keep the operation total anyway.
TermPtr substitute_name(const TermPtr& t, const Name& new_name,
                        const Name& old_name) {
  if (new_name == old_name) return t;
  return std::visit(
      [&](const auto& node) -> TermPtr {
        using T = std::decay_t<decltype(node)>;
        if constexpr (std::is_same_v<T, Var>) {
          return node.name == old_name ? mk_var(new_name) : t;
        } else if constexpr (std::is_same_v<T, Unit> ||
                             std::is_same_v<T, New>) {
          return t;
        } else if constexpr (std::is_same_v<T, Abs>) {
          if (node.binder == old_name) return t;
          return mk_abs(node.binder,
                        substitute_name(node.body, new_name, old_name));
        } else if constexpr (std::is_same_v<T, App>) {
          return mk_app(substitute_name(node.fun, new_name, old_name),
                        substitute_name(node.arg, new_name, old_name));
        } else if constexpr (std::is_same_v<T, Pair>) {
          return mk_pair(substitute_name(node.fst, new_name, old_name),
                         substitute_name(node.snd, new_name, old_name));
        } else if constexpr (std::is_same_v<T, LetPair>) {
          TermPtr scrut = substitute_name(node.scrutinee, new_name, old_name);
          TermPtr body = node.body;
          if (node.fst_binder != old_name && node.snd_binder != old_name) {
            body = substitute_name(body, new_name, old_name);
          }
          return mk_letpair(node.fst_binder, node.snd_binder, scrut, body);
        } else if constexpr (std::is_same_v<T, Spawn>) {
          return mk_spawn(substitute_name(node.arg, new_name, old_name));
        } else if constexpr (std::is_same_v<T, Send>) {
          return mk_send(substitute_name(node.arg, new_name, old_name));
        } else if constexpr (std::is_same_v<T, Recv>) {
          return mk_recv(substitute_name(node.arg, new_name, old_name));
        } else if constexpr (std::is_same_v<T, Select>) {
          return mk_select(node.label,
                           substitute_name(node.arg, new_name, old_name));
        } else if constexpr (std::is_same_v<T, Case>) {
          TermBranches out;
          for (const auto& [l, b] : node.branches) {
            out.emplace(l, substitute_name(b, new_name, old_name));
          }
          return mk_case(substitute_name(node.scrutinee, new_name, old_name),
                         std::move(out));
        } else if constexpr (std::is_same_v<T, Sub>) {
          TermPtr repl = substitute_name(node.replacement, new_name, old_name);
          TermPtr body = node.body;
          if (node.binder != old_name) {
            body = substitute_name(body, new_name, old_name);
          }
          return mk_sub(body, repl, node.binder);
        } else if constexpr (std::is_same_v<T, SendPrime>) {
          return mk_send_prime(
              substitute_name(node.payload, new_name, old_name),
              substitute_name(node.channel, new_name, old_name));
        } else {
          return t;
        }
      },
      t->v);
}

ConfigPtr substitute_name(const ConfigPtr& c, const Name& new_name,
                          const Name& old_name) {
  if (new_name == old_name) return c;
  return std::visit(
      [&](const auto& node) -> ConfigPtr {
        using T = std::decay_t<decltype(node)>;
        if constexpr (std::is_same_v<T, Thread>) {
          return mk_thread(node.marker,
                           substitute_name(node.term, new_name, old_name));
        } else if constexpr (std::is_same_v<T, CPar>) {
          return mk_cpar(substitute_name(node.left, new_name, old_name),
                         substitute_name(node.right, new_name, old_name));
        } else if constexpr (std::is_same_v<T, BufRes>) {
          if (node.out_ep == old_name || node.in_ep == old_name) return c;
          std::vector<Message> buf;
          buf.reserve(node.buf.size());
          for (const auto& m : node.buf) {
            if (m.is_label()) {
              buf.push_back(m);
            } else {
              buf.push_back(
                  Message{substitute_name(m.term(), new_name, old_name)});
            }
          }
          return mk_bufres(node.out_ep, std::move(buf), node.in_ep,
                           substitute_name(node.body, new_name, old_name));
        } else if constexpr (std::is_same_v<T, CSub>) {
          TermPtr repl = substitute_name(node.replacement, new_name, old_name);
          ConfigPtr body = node.body;
          if (node.binder != old_name) {
            body = substitute_name(body, new_name, old_name);
          }
          return mk_csub(body, repl, node.binder);
        } else {
          return c;
        }
      },
      c->v);
}

// ---------------------------------------------------- alpha equivalence

namespace {

// Bound names are compared through paired scopes; free names literally.
struct AlphaEnv {
  std::map<Name, Name> left_to_right;
  std::map<Name, Name> right_to_left;

  bool matches(const Name& a, const Name& b) const {
    auto it = left_to_right.find(a);
    auto jt = right_to_left.find(b);
    if (it == left_to_right.end() && jt == right_to_left.end()) return a == b;
    if (it == left_to_right.end() || jt == right_to_left.end()) return false;
    return it->second == b && jt->second == a;
  }
};

struct ScopedPair {
  AlphaEnv& env;
  Name a, b;
  std::optional<Name> saved_ab, saved_ba;
  ScopedPair(AlphaEnv& e, Name a_, Name b_) : env(e), a(a_), b(b_) {
    if (auto it = env.left_to_right.find(a); it != env.left_to_right.end()) {
      saved_ab = it->second;
    }
    if (auto it = env.right_to_left.find(b); it != env.right_to_left.end()) {
      saved_ba = it->second;
    }
    env.left_to_right[a] = b;
    env.right_to_left[b] = a;
  }
  ~ScopedPair() {
    if (saved_ab) {
      env.left_to_right[a] = *saved_ab;
    } else {
      env.left_to_right.erase(a);
    }
    if (saved_ba) {
      env.right_to_left[b] = *saved_ba;
    } else {
      env.right_to_left.erase(b);
    }
  }
};

bool alpha_term(const TermPtr& a, const TermPtr& b, AlphaEnv& env) {
  if (a->v.index() != b->v.index()) return false;
  return std::visit(
      [&](const auto& na) -> bool {
        using T = std::decay_t<decltype(na)>;
        const auto& nb = std::get<T>(b->v);
        if constexpr (std::is_same_v<T, Var>) {
          return env.matches(na.name, nb.name);
        } else if constexpr (std::is_same_v<T, Unit>) {
          return true;
        } else if constexpr (std::is_same_v<T, Abs>) {
          ScopedPair s(env, na.binder, nb.binder);
          return alpha_term(na.body, nb.body, env);
        } else if constexpr (std::is_same_v<T, App>) {
          return alpha_term(na.fun, nb.fun, env) &&
                 alpha_term(na.arg, nb.arg, env);
        } else if constexpr (std::is_same_v<T, Pair>) {
          return alpha_term(na.fst, nb.fst, env) &&
                 alpha_term(na.snd, nb.snd, env);
        } else if constexpr (std::is_same_v<T, LetPair>) {
          if (!alpha_term(na.scrutinee, nb.scrutinee, env)) return false;
          ScopedPair s1(env, na.fst_binder, nb.fst_binder);
          ScopedPair s2(env, na.snd_binder, nb.snd_binder);
          return alpha_term(na.body, nb.body, env);
        } else if constexpr (std::is_same_v<T, New>) {
          return session_equal(na.annot, nb.annot);
        } else if constexpr (std::is_same_v<T, Spawn> ||
                             std::is_same_v<T, Send> ||
                             std::is_same_v<T, Recv>) {
          return alpha_term(na.arg, nb.arg, env);
        } else if constexpr (std::is_same_v<T, Select>) {
          return na.label == nb.label && alpha_term(na.arg, nb.arg, env);
        } else if constexpr (std::is_same_v<T, Case>) {
          if (!alpha_term(na.scrutinee, nb.scrutinee, env)) return false;
          if (na.branches.size() != nb.branches.size()) return false;
          auto ia = na.branches.begin();
          auto ib = nb.branches.begin();
          for (; ia != na.branches.end(); ++ia, ++ib) {
            if (ia->first != ib->first) return false;
            if (!alpha_term(ia->second, ib->second, env)) return false;
          }
          return true;
        } else if constexpr (std::is_same_v<T, Sub>) {
          if (!alpha_term(na.replacement, nb.replacement, env)) return false;
          ScopedPair s(env, na.binder, nb.binder);
          return alpha_term(na.body, nb.body, env);
        } else if constexpr (std::is_same_v<T, SendPrime>) {
          return alpha_term(na.payload, nb.payload, env) &&
                 alpha_term(na.channel, nb.channel, env);
        } else {
          return false;
        }
      },
      a->v);
}

bool alpha_config(const ConfigPtr& a, const ConfigPtr& b, AlphaEnv& env) {
  if (a->v.index() != b->v.index()) return false;
  return std::visit(
      [&](const auto& na) -> bool {
        using T = std::decay_t<decltype(na)>;
        const auto& nb = std::get<T>(b->v);
        if constexpr (std::is_same_v<T, Thread>) {
          return na.marker == nb.marker && alpha_term(na.term, nb.term, env);
        } else if constexpr (std::is_same_v<T, CPar>) {
          return alpha_config(na.left, nb.left, env) &&
                 alpha_config(na.right, nb.right, env);
        } else if constexpr (std::is_same_v<T, BufRes>) {
          if (na.buf.size() != nb.buf.size()) return false;
          ScopedPair s1(env, na.out_ep, nb.out_ep);
          ScopedPair s2(env, na.in_ep, nb.in_ep);
          for (size_t i = 0; i < na.buf.size(); ++i) {
            const auto& ma = na.buf[i];
            const auto& mb = nb.buf[i];
            if (ma.is_label() != mb.is_label()) return false;
            if (ma.is_label()) {
              if (ma.label() != mb.label()) return false;
            } else if (!alpha_term(ma.term(), mb.term(), env)) {
              return false;
            }
          }
          return alpha_config(na.body, nb.body, env);
        } else if constexpr (std::is_same_v<T, CSub>) {
          if (!alpha_term(na.replacement, nb.replacement, env)) return false;
          ScopedPair s(env, na.binder, nb.binder);
          return alpha_config(na.body, nb.body, env);
        } else {
          return false;
        }
      },
      a->v);
}

}  // namespace

bool alpha_equal(const TermPtr& a, const TermPtr& b) {
  AlphaEnv env;
  return alpha_term(a, b, env);
}

bool alpha_equal(const ConfigPtr& a, const ConfigPtr& b) {
  AlphaEnv env;
  return alpha_config(a, b, env);
}

// ------------------------------------------------------------ freshness

Name NameSupply::fresh(const Name& base) {
  if (!used_.count(base)) {
    used_.insert(base);
    return base;
  }
  for (int i = 2;; ++i) {
    Name candidate = base + "_" + std::to_string(i);
    if (!used_.count(candidate)) {
      used_.insert(candidate);
      return candidate;
    }
  }
}

}  // namespace lastc
