#include "lastc/printer.hpp"

#include <sstream>

namespace lastc {

namespace {

// ----------------------------------------------------------------- types

void print_session(std::ostream& os, const SessionPtr& s);
void print_type(std::ostream& os, const TypePtr& t, int level);

// Payloads of ! and ? print as atoms: 1, end, +{...}, &{...} stay bare,
// anything else is parenthesized to keep the '.' unambiguous.
void print_payload(std::ostream& os, const TypePtr& t) {
  if (std::holds_alternative<UnitT>(t->v)) {
    os << "1";
    return;
  }
  if (const auto* st = std::get_if<SessT>(&t->v)) {
    if (std::holds_alternative<EndS>(st->s->v)) {
      os << "end";
      return;
    }
    if (std::holds_alternative<SelS>(st->s->v) ||
        std::holds_alternative<BraS>(st->s->v)) {
      print_session(os, st->s);
      return;
    }
  }
  os << "(";
  print_type(os, t, 0);
  os << ")";
}

void print_branches(std::ostream& os, const SessionBranches& bs) {
  os << "{";
  bool first = true;
  for (const auto& [l, b] : bs) {
    if (!first) os << ", ";
    first = false;
    os << l << ": ";
    print_session(os, b);
  }
  os << "}";
}

void print_session(std::ostream& os, const SessionPtr& s) {
  std::visit(
      [&](const auto& node) {
        using T = std::decay_t<decltype(node)>;
        if constexpr (std::is_same_v<T, OutS>) {
          os << "!";
          print_payload(os, node.payload);
          os << ".";
          print_session(os, node.cont);
        } else if constexpr (std::is_same_v<T, InS>) {
          os << "?";
          print_payload(os, node.payload);
          os << ".";
          print_session(os, node.cont);
        } else if constexpr (std::is_same_v<T, SelS>) {
          os << "+";
          print_branches(os, node.branches);
        } else if constexpr (std::is_same_v<T, BraS>) {
          os << "&";
          print_branches(os, node.branches);
        } else if constexpr (std::is_same_v<T, MetaS>) {
          os << "?s" << node.id;  // checker-internal, diagnostic only
        } else {
          os << "end";
        }
      },
      s->v);
}

// level 0: full type (-o allowed bare); level 1: product operand.
void print_type(std::ostream& os, const TypePtr& t, int level) {
  std::visit(
      [&](const auto& node) {
        using T = std::decay_t<decltype(node)>;
        if constexpr (std::is_same_v<T, PairT>) {
          // '*' is left-associative and binds tighter than '-o'.
          print_type(os, node.fst, 1);
          os << " * ";
          bool parens = std::holds_alternative<PairT>(node.snd->v) ||
                        std::holds_alternative<FunT>(node.snd->v);
          if (parens) os << "(";
          print_type(os, node.snd, 1);
          if (parens) os << ")";
        } else if constexpr (std::is_same_v<T, FunT>) {
          if (level > 0) os << "(";
          print_type(os, node.dom, 1);
          os << " -o ";
          print_type(os, node.cod, 0);
          if (level > 0) os << ")";
        } else if constexpr (std::is_same_v<T, UnitT>) {
          os << "1";
        } else if constexpr (std::is_same_v<T, MetaT>) {
          os << "?t" << node.id;  // checker-internal, diagnostic only
        } else {
          print_session(os, node.s);
        }
      },
      t->v);
}

// ----------------------------------------------------------------- terms

// level 0: full term (lambdas extend right); level 1: application head or
// left operand; level 2: application argument / keyword operand (atom).
void print_term(std::ostream& os, const TermPtr& t, int level) {
  std::visit(
      [&](const auto& node) {
        using T = std::decay_t<decltype(node)>;
        if constexpr (std::is_same_v<T, Var>) {
          os << node.name;
        } else if constexpr (std::is_same_v<T, Unit>) {
          os << "()";
        } else if constexpr (std::is_same_v<T, Abs>) {
          if (level > 0) os << "(";
          os << "\\" << node.binder << " -> ";
          print_term(os, node.body, 0);
          if (level > 0) os << ")";
        } else if constexpr (std::is_same_v<T, App>) {
          if (level > 1) os << "(";
          print_term(os, node.fun, 1);
          os << " ";
          print_term(os, node.arg, 2);
          if (level > 1) os << ")";
        } else if constexpr (std::is_same_v<T, Pair>) {
          os << "(";
          print_term(os, node.fst, 0);
          os << ", ";
          print_term(os, node.snd, 0);
          os << ")";
        } else if constexpr (std::is_same_v<T, LetPair>) {
          if (level > 0) os << "(";
          os << "let (" << node.fst_binder << ", " << node.snd_binder
             << ") = ";
          print_term(os, node.scrutinee, 0);
          os << " in ";
          print_term(os, node.body, 0);
          if (level > 0) os << ")";
        } else if constexpr (std::is_same_v<T, New>) {
          os << "new[";
          print_session(os, node.annot);
          os << "]";
        } else if constexpr (std::is_same_v<T, Spawn>) {
          if (level > 1) os << "(";
          os << "spawn ";
          print_term(os, node.arg, 2);
          if (level > 1) os << ")";
        } else if constexpr (std::is_same_v<T, Send>) {
          if (level > 1) os << "(";
          os << "send ";
          print_term(os, node.arg, 2);
          if (level > 1) os << ")";
        } else if constexpr (std::is_same_v<T, Recv>) {
          if (level > 1) os << "(";
          os << "recv ";
          print_term(os, node.arg, 2);
          if (level > 1) os << ")";
        } else if constexpr (std::is_same_v<T, Select>) {
          if (level > 1) os << "(";
          os << "select " << node.label << " ";
          print_term(os, node.arg, 2);
          if (level > 1) os << ")";
        } else if constexpr (std::is_same_v<T, Case>) {
          if (level > 1) os << "(";
          os << "case ";
          print_term(os, node.scrutinee, 0);
          os << " of { ";
          bool first = true;
          for (const auto& [l, b] : node.branches) {
            if (!first) os << ", ";
            first = false;
            os << l << ": ";
            print_term(os, b, 0);
          }
          os << " }";
          if (level > 1) os << ")";
        } else if constexpr (std::is_same_v<T, Sub>) {
          // Display form: subject[replacement/binder]; not source syntax.
          print_term(os, node.body, 2);
          os << "[";
          print_term(os, node.replacement, 0);
          os << "/" << node.binder << "]";
        } else if constexpr (std::is_same_v<T, SendPrime>) {
          os << "send'(";
          print_term(os, node.payload, 0);
          os << ", ";
          print_term(os, node.channel, 0);
          os << ")";
        }
      },
      t->v);
}

void print_config(std::ostream& os, const ConfigPtr& c) {
  std::visit(
      [&](const auto& node) {
        using T = std::decay_t<decltype(node)>;
        if constexpr (std::is_same_v<T, Thread>) {
          os << (node.marker == Marker::Main ? "main { " : "child { ");
          print_term(os, node.term, 0);
          os << " }";
        } else if constexpr (std::is_same_v<T, CPar>) {
          print_config(os, node.left);
          os << " || ";
          print_config(os, node.right);
        } else if constexpr (std::is_same_v<T, BufRes>) {
          os << "nu " << node.out_ep << " [";
          bool first = true;
          for (const auto& m : node.buf) {
            if (!first) os << ", ";
            first = false;
            if (m.is_label()) {
              os << m.label();
            } else {
              print_term(os, m.term(), 0);
            }
          }
          os << "] " << node.in_ep << " (";
          print_config(os, node.body);
          os << ")";
        } else if constexpr (std::is_same_v<T, CSub>) {
          os << "(";
          print_config(os, node.body);
          os << ")[";
          print_term(os, node.replacement, 0);
          os << "/" << node.binder << "]";
        }
      },
      c->v);
}

}  // namespace

std::string pretty(const SessionPtr& s) {
  std::ostringstream os;
  print_session(os, s);
  return os.str();
}

std::string pretty(const TypePtr& t) {
  std::ostringstream os;
  print_type(os, t, 0);
  return os.str();
}

std::string pretty(const TermPtr& t) {
  std::ostringstream os;
  print_term(os, t, 0);
  return os.str();
}

std::string pretty(const ConfigPtr& c) {
  std::ostringstream os;
  print_config(os, c);
  return os.str();
}

std::string pretty(const Message& m) {
  if (m.is_label()) return m.label();
  return pretty(m.term());
}

}  // namespace lastc
