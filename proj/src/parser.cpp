#include "lastc/parser.hpp"

#include <cctype>
#include <map>
#include <sstream>
#include <vector>

namespace lastc {

namespace {

enum class Tok {
  Ident,
  Number,
  LParen,
  RParen,
  LBrace,
  RBrace,
  LBracket,
  RBracket,
  Comma,
  Colon,
  Dot,
  Star,
  Lambda,
  Arrow,   // ->
  Lolli,   // -o
  Equals,
  Bang,
  Question,
  Plus,
  Amp,
  Eof,
};

struct Token {
  Tok kind;
  std::string text;
  int line, column;
};

class Lexer {
 public:
  explicit Lexer(const std::string& src) : src_(src) { advance(); }

  const Token& peek() const { return tok_; }

  Token next() {
    Token t = tok_;
    advance();
    return t;
  }

 private:
  void advance() {
    skip_trivia();
    tok_.line = line_;
    tok_.column = col_;
    if (pos_ >= src_.size()) {
      tok_ = {Tok::Eof, "", line_, col_};
      return;
    }
    char c = src_[pos_];
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      size_t start = pos_;
      while (pos_ < src_.size() && (std::isalnum(static_cast<unsigned char>(
                                        src_[pos_])) ||
                                    src_[pos_] == '_' || src_[pos_] == '\'')) {
        bump();
      }
      tok_ = {Tok::Ident, src_.substr(start, pos_ - start), tok_.line,
              tok_.column};
      return;
    }
    if (std::isdigit(static_cast<unsigned char>(c))) {
      size_t start = pos_;
      while (pos_ < src_.size() &&
             std::isdigit(static_cast<unsigned char>(src_[pos_]))) {
        bump();
      }
      tok_ = {Tok::Number, src_.substr(start, pos_ - start), tok_.line,
              tok_.column};
      return;
    }
    switch (c) {
      case '(': one(Tok::LParen); return;
      case ')': one(Tok::RParen); return;
      case '{': one(Tok::LBrace); return;
      case '}': one(Tok::RBrace); return;
      case '[': one(Tok::LBracket); return;
      case ']': one(Tok::RBracket); return;
      case ',': one(Tok::Comma); return;
      case ':': one(Tok::Colon); return;
      case '.': one(Tok::Dot); return;
      case '*': one(Tok::Star); return;
      case '\\': one(Tok::Lambda); return;
      case '=': one(Tok::Equals); return;
      case '!': one(Tok::Bang); return;
      case '?': one(Tok::Question); return;
      case '+': one(Tok::Plus); return;
      case '&': one(Tok::Amp); return;
      case '-': {
        if (pos_ + 1 < src_.size() && src_[pos_ + 1] == '>') {
          bump();
          bump();
          tok_ = {Tok::Arrow, "->", tok_.line, tok_.column};
          return;
        }
        if (pos_ + 1 < src_.size() && src_[pos_ + 1] == 'o') {
          bump();
          bump();
          tok_ = {Tok::Lolli, "-o", tok_.line, tok_.column};
          return;
        }
        throw ParseError("stray '-'", line_, col_);
      }
      default:
        throw ParseError(std::string("unexpected character '") + c + "'",
                         line_, col_);
    }
  }

  void one(Tok kind) {
    tok_ = {kind, std::string(1, src_[pos_]), tok_.line, tok_.column};
    bump();
  }

  void skip_trivia() {
    for (;;) {
      while (pos_ < src_.size() &&
             std::isspace(static_cast<unsigned char>(src_[pos_]))) {
        bump();
      }
      if (pos_ + 1 < src_.size() && src_[pos_] == '-' &&
          src_[pos_ + 1] == '-') {
        while (pos_ < src_.size() && src_[pos_] != '\n') bump();
        continue;
      }
      break;
    }
  }

  void bump() {
    if (src_[pos_] == '\n') {
      ++line_;
      col_ = 1;
    } else {
      ++col_;
    }
    ++pos_;
  }

  const std::string& src_;
  size_t pos_ = 0;
  int line_ = 1, col_ = 1;
  Token tok_;
};

bool is_keyword(const std::string& s) {
  return s == "main" || s == "let" || s == "in" || s == "new" ||
         s == "spawn" || s == "send" || s == "recv" || s == "select" ||
         s == "case" || s == "of" || s == "end";
}

class Parser {
 public:
  explicit Parser(const std::string& src) : lex_(src) {}

  ConfigPtr program() {
    expect_ident("main");
    expect(Tok::LBrace);
    TermPtr body = term();
    expect(Tok::RBrace);
    expect(Tok::Eof);
    return mk_thread(Marker::Main, freshen_binders(body));
  }

  TermPtr term_only() {
    TermPtr t = term();
    expect(Tok::Eof);
    return t;
  }

  SessionPtr session_only() {
    SessionPtr s = session();
    expect(Tok::Eof);
    return s;
  }

  TypePtr type_only() {
    TypePtr t = type();
    expect(Tok::Eof);
    return t;
  }

 private:
  [[noreturn]] void fail(const std::string& msg) {
    const Token& t = lex_.peek();
    throw ParseError(msg, t.line, t.column);
  }

  Token expect(Tok kind) {
    if (lex_.peek().kind != kind) {
      fail("unexpected token '" + lex_.peek().text + "'");
    }
    return lex_.next();
  }

  void expect_ident(const std::string& word) {
    if (lex_.peek().kind != Tok::Ident || lex_.peek().text != word) {
      fail("expected '" + word + "'");
    }
    lex_.next();
  }

  bool at_ident(const std::string& word) {
    return lex_.peek().kind == Tok::Ident && lex_.peek().text == word;
  }

  Name ident() {
    if (lex_.peek().kind != Tok::Ident || is_keyword(lex_.peek().text) ||
        lex_.peek().text == "send'") {
      fail("expected identifier");
    }
    return lex_.next().text;
  }

  // ------------------------------------------------------------- terms

  TermPtr term() {
    if (lex_.peek().kind == Tok::Lambda) {
      lex_.next();
      Name binder = ident();
      expect(Tok::Arrow);
      return mk_abs(binder, term());
    }
    if (at_ident("let")) {
      lex_.next();
      if (lex_.peek().kind == Tok::LParen) {
        lex_.next();
        Name a = ident();
        expect(Tok::Comma);
        Name b = ident();
        if (a == b) fail("pattern binds '" + a + "' twice");
        expect(Tok::RParen);
        expect(Tok::Equals);
        TermPtr scrut = term();
        expect_ident("in");
        return mk_letpair(a, b, scrut, term());
      }
      Name binder = ident();
      expect(Tok::Equals);
      TermPtr bound = term();
      expect_ident("in");
      return mk_app(mk_abs(binder, term()), bound);
    }
    return app();
  }

  TermPtr app() {
    TermPtr head = prefix();
    while (starts_atom()) head = mk_app(head, atom());
    return head;
  }

  bool starts_atom() {
    const Token& t = lex_.peek();
    if (t.kind == Tok::LParen) return true;
    if (t.kind == Tok::Ident) {
      return t.text == "new" || !is_keyword(t.text);
    }
    return false;
  }

  TermPtr prefix() {
    if (at_ident("send")) {
      lex_.next();
      return mk_send(atom());
    }
    if (at_ident("recv")) {
      lex_.next();
      return mk_recv(atom());
    }
    if (at_ident("spawn")) {
      lex_.next();
      return mk_spawn(atom());
    }
    if (at_ident("select")) {
      lex_.next();
      Name label = ident();
      return mk_select(label, atom());
    }
    if (at_ident("case")) {
      lex_.next();
      TermPtr scrut = term();  // the 'of' keyword terminates it
      expect_ident("of");
      expect(Tok::LBrace);
      TermBranches branches;
      for (;;) {
        Token where = lex_.peek();
        Name label = ident();
        expect(Tok::Colon);
        if (!branches.emplace(label, term()).second) {
          throw ParseError("duplicate branch label '" + label + "'",
                           where.line, where.column);
        }
        if (lex_.peek().kind == Tok::Comma) {
          lex_.next();
          continue;
        }
        break;
      }
      expect(Tok::RBrace);
      return mk_case(scrut, std::move(branches));
    }
    return atom();
  }

  TermPtr atom() {
    if (at_ident("new")) {
      lex_.next();
      if (lex_.peek().kind != Tok::LBracket) {
        fail("'new' requires a session annotation: new[S]");
      }
      lex_.next();
      SessionPtr s = session();
      expect(Tok::RBracket);
      return mk_new(s);
    }
    if (lex_.peek().kind == Tok::Ident) return mk_var(ident());
    if (lex_.peek().kind == Tok::LParen) {
      lex_.next();
      if (lex_.peek().kind == Tok::RParen) {
        lex_.next();
        return mk_unit();
      }
      TermPtr first = term();
      if (lex_.peek().kind == Tok::Comma) {
        lex_.next();
        TermPtr second = term();
        expect(Tok::RParen);
        return mk_pair(first, second);
      }
      expect(Tok::RParen);
      return first;
    }
    fail("expected a term");
  }

  // ------------------------------------------------------------- types

  TypePtr type() {
    TypePtr lhs = prod();
    if (lex_.peek().kind == Tok::Lolli) {
      lex_.next();
      return mk_fun_t(lhs, type());
    }
    return lhs;
  }

  TypePtr prod() {
    TypePtr lhs = tatom();
    while (lex_.peek().kind == Tok::Star) {
      lex_.next();
      lhs = mk_pair_t(lhs, tatom());
    }
    return lhs;
  }

  TypePtr tatom() {
    const Token& t = lex_.peek();
    if (t.kind == Tok::Number && t.text == "1") {
      lex_.next();
      return mk_unit_t();
    }
    if (t.kind == Tok::LParen) {
      lex_.next();
      TypePtr inner = type();
      expect(Tok::RParen);
      return inner;
    }
    return mk_sess_t(session());
  }

  SessionPtr session() {
    const Token& t = lex_.peek();
    switch (t.kind) {
      case Tok::Bang: {
        lex_.next();
        TypePtr p = payload();
        expect(Tok::Dot);
        return mk_out(p, session());
      }
      case Tok::Question: {
        lex_.next();
        TypePtr p = payload();
        expect(Tok::Dot);
        return mk_in(p, session());
      }
      case Tok::Plus: {
        lex_.next();
        return mk_sel(branches());
      }
      case Tok::Amp: {
        lex_.next();
        return mk_bra(branches());
      }
      case Tok::LParen: {
        lex_.next();
        SessionPtr s = session();
        expect(Tok::RParen);
        return s;
      }
      case Tok::Ident:
        if (t.text == "end") {
          lex_.next();
          return mk_end();
        }
        [[fallthrough]];
      default:
        fail("expected a session type");
    }
  }

  SessionBranches branches() {
    expect(Tok::LBrace);
    SessionBranches out;
    for (;;) {
      Token where = lex_.peek();
      Name label = ident();
      expect(Tok::Colon);
      if (!out.emplace(label, session()).second) {
        throw ParseError("duplicate branch label '" + label + "'", where.line,
                         where.column);
      }
      if (lex_.peek().kind == Tok::Comma) {
        lex_.next();
        continue;
      }
      break;
    }
    expect(Tok::RBrace);
    return out;
  }

  // Compound payloads need parentheses so that '.' stays unambiguous.
  TypePtr payload() {
    const Token& t = lex_.peek();
    if (t.kind == Tok::Number && t.text == "1") {
      lex_.next();
      return mk_unit_t();
    }
    if (t.kind == Tok::LParen) {
      lex_.next();
      TypePtr inner = type();
      expect(Tok::RParen);
      return inner;
    }
    if (at_ident("end")) {
      lex_.next();
      return mk_sess_t(mk_end());
    }
    if (t.kind == Tok::Plus) {
      lex_.next();
      return mk_sess_t(mk_sel(branches()));
    }
    if (t.kind == Tok::Amp) {
      lex_.next();
      return mk_sess_t(mk_bra(branches()));
    }
    fail("expected a payload type (parenthesize compound payloads)");
  }

  Lexer lex_;
};

// --------------------------------------------------------- freshening

using RenameEnv = std::map<Name, Name>;

TermPtr freshen(const TermPtr& t, RenameEnv& env, NameSupply& supply) {
  return std::visit(
      [&](const auto& node) -> TermPtr {
        using T = std::decay_t<decltype(node)>;
        if constexpr (std::is_same_v<T, Var>) {
          auto it = env.find(node.name);
          return it == env.end() ? t : mk_var(it->second);
        } else if constexpr (std::is_same_v<T, Unit> ||
                             std::is_same_v<T, New>) {
          return t;
        } else if constexpr (std::is_same_v<T, Abs>) {
          Name nb = supply.fresh(node.binder);
          RenameEnv inner = env;
          inner[node.binder] = nb;
          return mk_abs(nb, freshen(node.body, inner, supply));
        } else if constexpr (std::is_same_v<T, App>) {
          return mk_app(freshen(node.fun, env, supply),
                        freshen(node.arg, env, supply));
        } else if constexpr (std::is_same_v<T, Pair>) {
          return mk_pair(freshen(node.fst, env, supply),
                         freshen(node.snd, env, supply));
        } else if constexpr (std::is_same_v<T, LetPair>) {
          TermPtr scrut = freshen(node.scrutinee, env, supply);
          Name nf = supply.fresh(node.fst_binder);
          Name ns = supply.fresh(node.snd_binder);
          RenameEnv inner = env;
          inner[node.fst_binder] = nf;
          inner[node.snd_binder] = ns;
          return mk_letpair(nf, ns, scrut, freshen(node.body, inner, supply));
        } else if constexpr (std::is_same_v<T, Spawn>) {
          return mk_spawn(freshen(node.arg, env, supply));
        } else if constexpr (std::is_same_v<T, Send>) {
          return mk_send(freshen(node.arg, env, supply));
        } else if constexpr (std::is_same_v<T, Recv>) {
          return mk_recv(freshen(node.arg, env, supply));
        } else if constexpr (std::is_same_v<T, Select>) {
          return mk_select(node.label, freshen(node.arg, env, supply));
        } else if constexpr (std::is_same_v<T, Case>) {
          TermPtr scrut = freshen(node.scrutinee, env, supply);
          TermBranches out;
          for (const auto& [l, b] : node.branches) {
            out.emplace(l, freshen(b, env, supply));
          }
          return mk_case(scrut, std::move(out));
        } else if constexpr (std::is_same_v<T, Sub>) {
          TermPtr repl = freshen(node.replacement, env, supply);
          Name nb = supply.fresh(node.binder);
          RenameEnv inner = env;
          inner[node.binder] = nb;
          return mk_sub(freshen(node.body, inner, supply), repl, nb);
        } else if constexpr (std::is_same_v<T, SendPrime>) {
          return mk_send_prime(freshen(node.payload, env, supply),
                               freshen(node.channel, env, supply));
        } else {
          return t;
        }
      },
      t->v);
}

}  // namespace

TermPtr freshen_binders(const TermPtr& t) {
  // Seeding with just the free names keeps unique binders stable while
  // renaming duplicates and shadowers deterministically.
  NameSupply supply(free_names(t));
  RenameEnv env;
  return freshen(t, env, supply);
}

ConfigPtr parse_program(const std::string& text) {
  return Parser(text).program();
}

TermPtr parse_term_text(const std::string& text) {
  return freshen_binders(Parser(text).term_only());
}

SessionPtr parse_session_text(const std::string& text) {
  return Parser(text).session_only();
}

TypePtr parse_type_text(const std::string& text) {
  return Parser(text).type_only();
}

}  // namespace lastc
