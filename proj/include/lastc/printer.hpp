#pragma once

// Pretty-printers for types, terms, and configurations.
//
// Source-level constructs print in the concrete grammar accepted by the
// parser, so parse(pretty(c)) round-trips for parsed programs. Runtime
// constructs (explicit substitutions, send', buffers) have a display form
// that is not part of the source grammar: M[N/x], send'(M, N),
// nu x [m, ...] y (C), C[M/x].

#include <string>

#include "lastc/ast.hpp"

namespace lastc {

std::string pretty(const SessionPtr& s);
std::string pretty(const TypePtr& t);
std::string pretty(const TermPtr& t);
std::string pretty(const ConfigPtr& c);
std::string pretty(const Message& m);

}  // namespace lastc
