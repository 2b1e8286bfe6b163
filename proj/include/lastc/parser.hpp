#pragma once

// Recursive-descent parser for the source language.
//
//   program  := "main" "{" term "}"
//   term     := "\" ident "->" term
//             | "let" "(" ident "," ident ")" "=" term "in" term
//             | "let" ident "=" term "in" term            -- sugar: (\x -> N) M
//             | app
//   app      := prefix atom*                               -- left-assoc
//   prefix   := "send" atom | "recv" atom | "spawn" atom
//             | "select" ident atom
//             | "case" term "of" "{" ident ":" term ("," ident ":" term)* "}"
//             | atom
//   atom     := "()" | "(" term ")" | "(" term "," term ")" | ident
//             | "new" "[" session "]"
//   type     := prod ("-o" type)?                          -- right-assoc
//   prod     := tatom ("*" tatom)*                         -- left-assoc
//   tatom    := "1" | session | "(" type ")"
//   session  := "end" | "!" payload "." session | "?" payload "." session
//             | "+{" branches "}" | "&{" branches "}" | "(" session ")"
//   payload  := "1" | "end" | "+{...}" | "&{...}" | "(" type ")"
//
// Line comments start with "--". Identifiers are [A-Za-z_][A-Za-z0-9_']*.
// After parsing, binders are renamed apart so every binder is globally
// fresh; free names are never renamed.

#include <stdexcept>
#include <string>

#include "lastc/ast.hpp"

namespace lastc {

struct ParseError : std::runtime_error {
  int line, column;
  ParseError(const std::string& msg, int line_, int column_)
      : std::runtime_error(msg + " at line " + std::to_string(line_) +
                           ", column " + std::to_string(column_)),
        line(line_),
        column(column_) {}
};

ConfigPtr parse_program(const std::string& text);
TermPtr parse_term_text(const std::string& text);  // freshened, for tests
SessionPtr parse_session_text(const std::string& text);
TypePtr parse_type_text(const std::string& text);

// Rename binders apart (Barendregt convention); free names untouched.
TermPtr freshen_binders(const TermPtr& t);

}  // namespace lastc
