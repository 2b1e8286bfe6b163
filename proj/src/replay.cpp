// Declarative re-check of typing derivations. Deliberately independent of
// the inference engine: every node is verified as a rule instance using only
// structural equality, so a bug in unification cannot vouch for itself.
#include <sstream>

#include "lastc/printer.hpp"
#include "lastc/typecheck.hpp"

namespace lastc {

namespace {

struct Replay {
  std::string why;

  bool fail(const DerivPtr& d, const std::string& msg) {
    std::ostringstream os;
    os << "node " << d->id << " (" << d->rule << "): " << msg;
    why = os.str();
    return false;
  }

  static bool env_eq(const TypingEnv& a, const TypingEnv& b) {
    if (a.size() != b.size()) return false;
    for (const auto& [n, t] : a) {
      auto it = b.find(n);
      if (it == b.end() || !type_equal(t, it->second)) return false;
    }
    return true;
  }

  // conclusion == a disjoint-union b
  static bool env_union(const TypingEnv& conclusion, const TypingEnv& a,
                        const TypingEnv& b) {
    if (conclusion.size() != a.size() + b.size()) return false;
    for (const auto& [n, t] : a) {
      auto it = conclusion.find(n);
      if (it == conclusion.end() || !type_equal(t, it->second)) return false;
      if (b.count(n)) return false;
    }
    for (const auto& [n, t] : b) {
      auto it = conclusion.find(n);
      if (it == conclusion.end() || !type_equal(t, it->second)) return false;
    }
    return true;
  }

  static TypingEnv without(TypingEnv env, const Name& x) {
    env.erase(x);
    return env;
  }

  static const TypePtr* lookup(const TypingEnv& env, const Name& x) {
    auto it = env.find(x);
    return it == env.end() ? nullptr : &it->second;
  }

  static bool is_unit(const TypePtr& t) {
    return std::holds_alternative<UnitT>(t->v);
  }
  static bool is_end(const TypePtr& t) {
    const auto* s = std::get_if<SessT>(&t->v);
    return s && std::holds_alternative<EndS>(s->s->v);
  }
  static const SessionPtr* session_of(const TypePtr& t) {
    const auto* s = std::get_if<SessT>(&t->v);
    return s ? &s->s : nullptr;
  }

  static bool msgs_match(const std::vector<Message>& a,
                         const std::vector<Message>& b) {
    if (a.size() != b.size()) return false;
    for (size_t i = 0; i < a.size(); ++i) {
      if (a[i].is_label() != b[i].is_label()) return false;
      if (a[i].is_label()) {
        if (a[i].label() != b[i].label()) return false;
      } else if (!alpha_equal(a[i].term(), b[i].term())) {
        return false;
      }
    }
    return true;
  }

  bool node(const DerivPtr& d) {
    for (const auto& p : d->premises) {
      if (!node(p)) return false;
    }
    if (const auto* tj = std::get_if<TermJudgment>(&d->judgment)) {
      return term_node(d, *tj);
    }
    if (const auto* bj = std::get_if<BufferJudgment>(&d->judgment)) {
      return buffer_node(d, *bj);
    }
    return config_node(d, std::get<ConfigJudgment>(d->judgment));
  }

  const TermJudgment* term_premise(const DerivPtr& d, size_t i) {
    if (i >= d->premises.size()) return nullptr;
    return std::get_if<TermJudgment>(&d->premises[i]->judgment);
  }
  const BufferJudgment* buffer_premise(const DerivPtr& d, size_t i) {
    if (i >= d->premises.size()) return nullptr;
    return std::get_if<BufferJudgment>(&d->premises[i]->judgment);
  }
  const ConfigJudgment* config_premise(const DerivPtr& d, size_t i) {
    if (i >= d->premises.size()) return nullptr;
    return std::get_if<ConfigJudgment>(&d->premises[i]->judgment);
  }

  bool term_node(const DerivPtr& d, const TermJudgment& j) {
    const std::string& r = d->rule;

    if (r == "T-Var") {
      if (!d->premises.empty()) return fail(d, "expected no premises");
      const auto* v = std::get_if<Var>(&j.subject->v);
      if (!v) return fail(d, "subject is not a name");
      const TypePtr* t = lookup(j.env, v->name);
      if (!t || j.env.size() != 1) {
        return fail(d, "environment must be exactly the used name");
      }
      if (!type_equal(*t, j.type)) return fail(d, "type differs from binding");
      return true;
    }

    if (r == "T-Unit") {
      if (!d->premises.empty() || !j.env.empty()) {
        return fail(d, "expected no premises and empty environment");
      }
      if (!std::holds_alternative<Unit>(j.subject->v)) {
        return fail(d, "subject is not ()");
      }
      if (!is_unit(j.type)) return fail(d, "type is not 1");
      return true;
    }

    if (r == "T-EndR") {
      if (!d->premises.empty() || !j.env.empty()) {
        return fail(d, "expected no premises and empty environment");
      }
      if (!std::holds_alternative<Var>(j.subject->v)) {
        return fail(d, "subject is not a name");
      }
      if (!is_end(j.type)) return fail(d, "type is not end");
      return true;
    }

    if (r == "T-EndL") {
      const auto* p = term_premise(d, 0);
      if (!p || d->premises.size() != 1) return fail(d, "expected one premise");
      if (!alpha_equal(j.subject, p->subject)) {
        return fail(d, "subject differs from premise");
      }
      if (!type_equal(j.type, p->type)) {
        return fail(d, "type differs from premise");
      }
      // Exactly one extra end-typed binding over the premise.
      if (j.env.size() != p->env.size() + 1) {
        return fail(d, "environment must add exactly one binding");
      }
      std::optional<Name> extra;
      for (const auto& [n, t] : j.env) {
        const TypePtr* pt = lookup(p->env, n);
        if (pt) {
          if (!type_equal(t, *pt)) return fail(d, "binding changed type");
        } else if (extra) {
          return fail(d, "more than one added binding");
        } else {
          if (!is_end(t)) return fail(d, "added binding is not end");
          extra = n;
        }
      }
      if (!extra) return fail(d, "no added binding");
      return true;
    }

    if (r == "T-Abs") {
      const auto* p = term_premise(d, 0);
      if (!p || d->premises.size() != 1) return fail(d, "expected one premise");
      const auto* a = std::get_if<Abs>(&j.subject->v);
      if (!a) return fail(d, "subject is not an abstraction");
      const auto* f = std::get_if<FunT>(&j.type->v);
      if (!f) return fail(d, "type is not a function");
      if (!alpha_equal(p->subject, a->body)) {
        return fail(d, "premise subject is not the body");
      }
      if (!type_equal(p->type, f->cod)) return fail(d, "codomain differs");
      const TypePtr* bt = lookup(p->env, a->binder);
      if (!bt || !type_equal(*bt, f->dom)) {
        return fail(d, "binder type differs from domain");
      }
      if (!env_eq(j.env, without(p->env, a->binder))) {
        return fail(d, "environment differs from premise minus binder");
      }
      return true;
    }

    if (r == "T-App") {
      const auto* pf = term_premise(d, 0);
      const auto* pa = term_premise(d, 1);
      if (!pf || !pa || d->premises.size() != 2) {
        return fail(d, "expected two premises");
      }
      const auto* app = std::get_if<App>(&j.subject->v);
      if (!app) return fail(d, "subject is not an application");
      if (!alpha_equal(pf->subject, app->fun) ||
          !alpha_equal(pa->subject, app->arg)) {
        return fail(d, "premise subjects do not match");
      }
      const auto* f = std::get_if<FunT>(&pf->type->v);
      if (!f) return fail(d, "function premise is not a function type");
      if (!type_equal(f->dom, pa->type)) return fail(d, "argument type differs");
      if (!type_equal(f->cod, j.type)) return fail(d, "result type differs");
      if (!env_union(j.env, pf->env, pa->env)) {
        return fail(d, "environment does not split");
      }
      return true;
    }

    if (r == "T-Pair") {
      const auto* p0 = term_premise(d, 0);
      const auto* p1 = term_premise(d, 1);
      if (!p0 || !p1 || d->premises.size() != 2) {
        return fail(d, "expected two premises");
      }
      const auto* pr = std::get_if<Pair>(&j.subject->v);
      if (!pr) return fail(d, "subject is not a pair");
      if (!alpha_equal(p0->subject, pr->fst) ||
          !alpha_equal(p1->subject, pr->snd)) {
        return fail(d, "premise subjects do not match");
      }
      const auto* pt = std::get_if<PairT>(&j.type->v);
      if (!pt || !type_equal(pt->fst, p0->type) ||
          !type_equal(pt->snd, p1->type)) {
        return fail(d, "type is not the pair of premise types");
      }
      if (!env_union(j.env, p0->env, p1->env)) {
        return fail(d, "environment does not split");
      }
      return true;
    }

    if (r == "T-Split") {
      const auto* ps = term_premise(d, 0);
      const auto* pb = term_premise(d, 1);
      if (!ps || !pb || d->premises.size() != 2) {
        return fail(d, "expected two premises");
      }
      const auto* lp = std::get_if<LetPair>(&j.subject->v);
      if (!lp) return fail(d, "subject is not a pair split");
      if (!alpha_equal(ps->subject, lp->scrutinee) ||
          !alpha_equal(pb->subject, lp->body)) {
        return fail(d, "premise subjects do not match");
      }
      const auto* pt = std::get_if<PairT>(&ps->type->v);
      if (!pt) return fail(d, "scrutinee is not a pair");
      const TypePtr* xt = lookup(pb->env, lp->fst_binder);
      const TypePtr* yt = lookup(pb->env, lp->snd_binder);
      if (!xt || !yt || !type_equal(*xt, pt->fst) ||
          !type_equal(*yt, pt->snd)) {
        return fail(d, "binder types differ from components");
      }
      if (!type_equal(j.type, pb->type)) return fail(d, "type differs");
      TypingEnv body_outer =
          without(without(pb->env, lp->fst_binder), lp->snd_binder);
      if (!env_union(j.env, ps->env, body_outer)) {
        return fail(d, "environment does not split");
      }
      return true;
    }

    if (r == "T-New") {
      if (!d->premises.empty() || !j.env.empty()) {
        return fail(d, "expected no premises and empty environment");
      }
      const auto* nw = std::get_if<New>(&j.subject->v);
      if (!nw) return fail(d, "subject is not new");
      const auto* pt = std::get_if<PairT>(&j.type->v);
      if (!pt) return fail(d, "type is not a pair");
      const SessionPtr* s1 = session_of(pt->fst);
      const SessionPtr* s2 = session_of(pt->snd);
      if (!s1 || !s2 || !session_equal(*s1, nw->annot) ||
          !session_equal(*s2, dual(*s1))) {
        return fail(d, "type is not the annotated protocol and its dual");
      }
      return true;
    }

    if (r == "T-Spawn") {
      const auto* p = term_premise(d, 0);
      if (!p || d->premises.size() != 1) return fail(d, "expected one premise");
      const auto* sp = std::get_if<Spawn>(&j.subject->v);
      if (!sp || !alpha_equal(p->subject, sp->arg)) {
        return fail(d, "subject is not spawn of the premise");
      }
      const auto* pt = std::get_if<PairT>(&p->type->v);
      if (!pt || !is_unit(pt->fst)) {
        return fail(d, "premise is not 1 x T");
      }
      if (!type_equal(j.type, pt->snd)) return fail(d, "type differs");
      if (!env_eq(j.env, p->env)) return fail(d, "environment differs");
      return true;
    }

    if (r == "T-Send") {
      const auto* p = term_premise(d, 0);
      if (!p || d->premises.size() != 1) return fail(d, "expected one premise");
      const auto* sn = std::get_if<Send>(&j.subject->v);
      if (!sn || !alpha_equal(p->subject, sn->arg)) {
        return fail(d, "subject is not send of the premise");
      }
      const auto* pt = std::get_if<PairT>(&p->type->v);
      if (!pt) return fail(d, "premise is not a pair");
      const SessionPtr* ch = session_of(pt->snd);
      if (!ch) return fail(d, "second component is not a session");
      const auto* out = std::get_if<OutS>(&(*ch)->v);
      if (!out || !type_equal(out->payload, pt->fst)) {
        return fail(d, "channel does not send the payload type");
      }
      const SessionPtr* res = session_of(j.type);
      if (!res || !session_equal(*res, out->cont)) {
        return fail(d, "type is not the continuation");
      }
      if (!env_eq(j.env, p->env)) return fail(d, "environment differs");
      return true;
    }

    if (r == "T-Recv") {
      const auto* p = term_premise(d, 0);
      if (!p || d->premises.size() != 1) return fail(d, "expected one premise");
      const auto* rc = std::get_if<Recv>(&j.subject->v);
      if (!rc || !alpha_equal(p->subject, rc->arg)) {
        return fail(d, "subject is not recv of the premise");
      }
      const SessionPtr* ch = session_of(p->type);
      if (!ch) return fail(d, "premise is not a session");
      const auto* in = std::get_if<InS>(&(*ch)->v);
      if (!in) return fail(d, "premise does not receive");
      const auto* pt = std::get_if<PairT>(&j.type->v);
      const SessionPtr* res = pt ? session_of(pt->snd) : nullptr;
      if (!pt || !res || !type_equal(pt->fst, in->payload) ||
          !session_equal(*res, in->cont)) {
        return fail(d, "type is not payload x continuation");
      }
      if (!env_eq(j.env, p->env)) return fail(d, "environment differs");
      return true;
    }

    if (r == "T-Select") {
      const auto* p = term_premise(d, 0);
      if (!p || d->premises.size() != 1) return fail(d, "expected one premise");
      const auto* se = std::get_if<Select>(&j.subject->v);
      if (!se || !alpha_equal(p->subject, se->arg)) {
        return fail(d, "subject is not select of the premise");
      }
      const SessionPtr* ch = session_of(p->type);
      if (!ch) return fail(d, "premise is not a session");
      const auto* sel = std::get_if<SelS>(&(*ch)->v);
      if (!sel) return fail(d, "premise is not a selection");
      auto it = sel->branches.find(se->label);
      if (it == sel->branches.end()) return fail(d, "label is not offered");
      const SessionPtr* res = session_of(j.type);
      if (!res || !session_equal(*res, it->second)) {
        return fail(d, "type is not the selected branch");
      }
      if (!env_eq(j.env, p->env)) return fail(d, "environment differs");
      return true;
    }

    if (r == "T-Case") {
      const auto* ps = term_premise(d, 0);
      if (!ps) return fail(d, "expected a scrutinee premise");
      const auto* ca = std::get_if<Case>(&j.subject->v);
      if (!ca || !alpha_equal(ps->subject, ca->scrutinee)) {
        return fail(d, "subject is not case of the premise");
      }
      if (d->premises.size() != ca->branches.size() + 1) {
        return fail(d, "premise count differs from branch count");
      }
      const SessionPtr* ch = session_of(ps->type);
      if (!ch) return fail(d, "scrutinee is not a session");
      const auto* bra = std::get_if<BraS>(&(*ch)->v);
      if (!bra || bra->branches.size() != ca->branches.size()) {
        return fail(d, "offered labels differ from branches");
      }
      size_t i = 1;
      const TypingEnv* shared = nullptr;
      for (const auto& [l, body] : ca->branches) {
        auto bit = bra->branches.find(l);
        if (bit == bra->branches.end()) {
          return fail(d, "branch label '" + l + "' is not offered");
        }
        const auto* pb = term_premise(d, i++);
        if (!pb || !alpha_equal(pb->subject, body)) {
          return fail(d, "branch premise does not match");
        }
        const auto* f = std::get_if<FunT>(&pb->type->v);
        const SessionPtr* fd = f ? session_of(f->dom) : nullptr;
        if (!f || !fd || !session_equal(*fd, bit->second) ||
            !type_equal(f->cod, j.type)) {
          return fail(d, "branch is not continuation -o result");
        }
        if (shared && !env_eq(*shared, pb->env)) {
          return fail(d, "branches use different environments");
        }
        shared = &pb->env;
      }
      TypingEnv delta = shared ? *shared : TypingEnv{};
      if (!env_union(j.env, ps->env, delta)) {
        return fail(d, "environment does not split");
      }
      return true;
    }

    if (r == "T-Sub") {
      const auto* pm = term_premise(d, 0);
      const auto* pn = term_premise(d, 1);
      if (!pm || !pn || d->premises.size() != 2) {
        return fail(d, "expected two premises");
      }
      const auto* su = std::get_if<Sub>(&j.subject->v);
      if (!su) return fail(d, "subject is not a substitution");
      if (!alpha_equal(pm->subject, su->body) ||
          !alpha_equal(pn->subject, su->replacement)) {
        return fail(d, "premise subjects do not match");
      }
      const TypePtr* bt = lookup(pm->env, su->binder);
      if (!bt || !type_equal(*bt, pn->type)) {
        return fail(d, "binder type differs from replacement");
      }
      if (!type_equal(j.type, pm->type)) return fail(d, "type differs");
      if (!env_union(j.env, without(pm->env, su->binder), pn->env)) {
        return fail(d, "environment does not split");
      }
      return true;
    }

    if (r == "T-Send'") {
      const auto* pm = term_premise(d, 0);
      const auto* pn = term_premise(d, 1);
      if (!pm || !pn || d->premises.size() != 2) {
        return fail(d, "expected two premises");
      }
      const auto* sp = std::get_if<SendPrime>(&j.subject->v);
      if (!sp) return fail(d, "subject is not a staged send");
      if (!alpha_equal(pm->subject, sp->payload) ||
          !alpha_equal(pn->subject, sp->channel)) {
        return fail(d, "premise subjects do not match");
      }
      const SessionPtr* ch = session_of(pn->type);
      if (!ch) return fail(d, "channel is not a session");
      const auto* out = std::get_if<OutS>(&(*ch)->v);
      if (!out || !type_equal(out->payload, pm->type)) {
        return fail(d, "channel does not send the payload type");
      }
      const SessionPtr* res = session_of(j.type);
      if (!res || !session_equal(*res, out->cont)) {
        return fail(d, "type is not the continuation");
      }
      if (!env_union(j.env, pm->env, pn->env)) {
        return fail(d, "environment does not split");
      }
      return true;
    }

    return fail(d, "unknown term rule");
  }

  bool buffer_node(const DerivPtr& d, const BufferJudgment& j) {
    const std::string& r = d->rule;

    if (r == "T-Buf") {
      if (!d->premises.empty() || !j.env.empty() || !j.msgs.empty()) {
        return fail(d, "expected empty premises, environment and buffer");
      }
      if (!session_equal(j.from, j.to)) return fail(d, "from differs from to");
      return true;
    }

    if (r == "T-BufSend") {
      const auto* pm = term_premise(d, 0);
      const auto* pb = buffer_premise(d, 1);
      if (!pm || !pb || d->premises.size() != 2) {
        return fail(d, "expected payload and buffer premises");
      }
      if (j.msgs.empty() || j.msgs.back().is_label()) {
        return fail(d, "oldest message is not a term");
      }
      if (!alpha_equal(j.msgs.back().term(), pm->subject)) {
        return fail(d, "payload premise does not match oldest message");
      }
      std::vector<Message> rest(j.msgs.begin(), j.msgs.end() - 1);
      if (!msgs_match(rest, pb->msgs)) {
        return fail(d, "buffer premise does not match remaining messages");
      }
      if (!session_equal(j.from, pb->from)) return fail(d, "from differs");
      const auto* out = std::get_if<OutS>(&j.to->v);
      if (!out || !type_equal(out->payload, pm->type) ||
          !session_equal(out->cont, pb->to)) {
        return fail(d, "to is not sending the payload before the premise to");
      }
      if (!env_union(j.env, pm->env, pb->env)) {
        return fail(d, "environment does not split");
      }
      return true;
    }

    if (r == "T-BufSelect") {
      const auto* pb = buffer_premise(d, 0);
      if (!pb || d->premises.size() != 1) {
        return fail(d, "expected one buffer premise");
      }
      if (j.msgs.empty() || !j.msgs.back().is_label()) {
        return fail(d, "oldest message is not a label");
      }
      std::vector<Message> rest(j.msgs.begin(), j.msgs.end() - 1);
      if (!msgs_match(rest, pb->msgs)) {
        return fail(d, "buffer premise does not match remaining messages");
      }
      if (!session_equal(j.from, pb->from)) return fail(d, "from differs");
      const auto* sel = std::get_if<SelS>(&j.to->v);
      if (!sel) return fail(d, "to is not a selection");
      auto it = sel->branches.find(j.msgs.back().label());
      if (it == sel->branches.end()) {
        return fail(d, "label is not offered by to");
      }
      if (!session_equal(it->second, pb->to)) {
        return fail(d, "premise to is not the selected branch");
      }
      if (!env_eq(j.env, pb->env)) return fail(d, "environment differs");
      return true;
    }

    return fail(d, "unknown buffer rule");
  }

  bool config_node(const DerivPtr& d, const ConfigJudgment& j) {
    const std::string& r = d->rule;

    if (r == "T-Main" || r == "T-Child") {
      const auto* p = term_premise(d, 0);
      if (!p || d->premises.size() != 1) return fail(d, "expected one premise");
      const auto* th = std::get_if<Thread>(&j.subject->v);
      if (!th) return fail(d, "subject is not a thread");
      const bool main = r == "T-Main";
      if ((th->marker == Marker::Main) != main || j.marker != th->marker) {
        return fail(d, "marker differs");
      }
      if (!alpha_equal(p->subject, th->term)) {
        return fail(d, "premise subject is not the thread body");
      }
      if (!main && !is_unit(p->type)) return fail(d, "child body is not 1");
      if (!type_equal(j.type, p->type)) return fail(d, "type differs");
      if (!env_eq(j.env, p->env)) return fail(d, "environment differs");
      return true;
    }

    if (r == "T-ParL" || r == "T-ParR") {
      const auto* pl = config_premise(d, 0);
      const auto* pr = config_premise(d, 1);
      if (!pl || !pr || d->premises.size() != 2) {
        return fail(d, "expected two premises");
      }
      const auto* par = std::get_if<CPar>(&j.subject->v);
      if (!par) return fail(d, "subject is not a parallel composition");
      if (!alpha_equal(pl->subject, par->left) ||
          !alpha_equal(pr->subject, par->right)) {
        return fail(d, "premise subjects do not match");
      }
      const ConfigJudgment* child = r == "T-ParL" ? pl : pr;
      const ConfigJudgment* other = r == "T-ParL" ? pr : pl;
      if (child->marker != Marker::Child) {
        return fail(d, "discarded side is not a child");
      }
      if (!is_unit(child->type)) return fail(d, "child side is not 1");
      if (pl->marker == Marker::Main && pr->marker == Marker::Main) {
        return fail(d, "two main threads");
      }
      Marker m = (pl->marker == Marker::Main || pr->marker == Marker::Main)
                     ? Marker::Main
                     : Marker::Child;
      if (j.marker != m) return fail(d, "marker differs");
      if (!type_equal(j.type, other->type)) return fail(d, "type differs");
      if (!env_union(j.env, pl->env, pr->env)) {
        return fail(d, "environment does not split");
      }
      return true;
    }

    if (r == "T-Res" || r == "T-ResBuf") {
      const auto* pb = buffer_premise(d, 0);
      const auto* pc = config_premise(d, 1);
      if (!pb || !pc || d->premises.size() != 2) {
        return fail(d, "expected buffer and configuration premises");
      }
      const auto* res = std::get_if<BufRes>(&j.subject->v);
      if (!res) return fail(d, "subject is not a restriction");
      if (!alpha_equal(pc->subject, res->body)) {
        return fail(d, "configuration premise is not the body");
      }
      if (!msgs_match(pb->msgs, res->buf)) {
        return fail(d, "buffer premise does not match the messages");
      }
      if (j.marker != pc->marker) return fail(d, "marker differs");
      if (!type_equal(j.type, pc->type)) return fail(d, "type differs");
      const TypePtr* xt = lookup(pc->env, res->out_ep);
      const SessionPtr* xs = xt ? session_of(*xt) : nullptr;
      if (!xs || !session_equal(*xs, pb->from)) {
        return fail(d, "sending endpoint does not resume at from");
      }
      if (pb->env.count(res->out_ep)) {
        return fail(d, "sending endpoint used inside the buffer");
      }
      SessionPtr expect_y = dual(pb->to);
      if (r == "T-Res") {
        const TypePtr* yt = lookup(pc->env, res->in_ep);
        const SessionPtr* ys = yt ? session_of(*yt) : nullptr;
        if (!ys || !session_equal(*ys, expect_y)) {
          return fail(d, "receiving endpoint is not the dual protocol");
        }
        if (pb->env.count(res->in_ep)) {
          return fail(d, "receiving endpoint used inside the buffer");
        }
        TypingEnv body_outer =
            without(without(pc->env, res->out_ep), res->in_ep);
        if (!env_union(j.env, pb->env, body_outer)) {
          return fail(d, "environment does not split");
        }
      } else {
        const TypePtr* yt = lookup(pb->env, res->in_ep);
        const SessionPtr* ys = yt ? session_of(*yt) : nullptr;
        if (!ys || !session_equal(*ys, expect_y)) {
          return fail(d, "receiving endpoint is not the dual protocol");
        }
        if (pc->env.count(res->in_ep)) {
          return fail(d, "receiving endpoint also used by the body");
        }
        if (!env_union(j.env, without(pb->env, res->in_ep),
                       without(pc->env, res->out_ep))) {
          return fail(d, "environment does not split");
        }
      }
      if (j.env.count(res->out_ep) || j.env.count(res->in_ep)) {
        return fail(d, "endpoint escapes the restriction");
      }
      return true;
    }

    if (r == "T-ConfSub") {
      const auto* pc = config_premise(d, 0);
      const auto* pm = term_premise(d, 1);
      if (!pc || !pm || d->premises.size() != 2) {
        return fail(d, "expected configuration and term premises");
      }
      const auto* su = std::get_if<CSub>(&j.subject->v);
      if (!su) return fail(d, "subject is not a substitution");
      if (!alpha_equal(pc->subject, su->body) ||
          !alpha_equal(pm->subject, su->replacement)) {
        return fail(d, "premise subjects do not match");
      }
      const TypePtr* bt = lookup(pc->env, su->binder);
      if (!bt || !type_equal(*bt, pm->type)) {
        return fail(d, "binder type differs from replacement");
      }
      if (j.marker != pc->marker) return fail(d, "marker differs");
      if (!type_equal(j.type, pc->type)) return fail(d, "type differs");
      if (!env_union(j.env, without(pc->env, su->binder), pm->env)) {
        return fail(d, "environment does not split");
      }
      return true;
    }

    return fail(d, "unknown configuration rule");
  }
};

}  // namespace

bool replay_derivation(const DerivPtr& d, std::string* why) {
  Replay rp;
  if (rp.node(d)) return true;
  if (why) *why = rp.why;
  return false;
}

}  // namespace lastc
