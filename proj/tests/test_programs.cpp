#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "lastc/ast.hpp"
#include "lastc/eval.hpp"
#include "lastc/parser.hpp"
#include "lastc/printer.hpp"
#include "lastc/typecheck.hpp"

using namespace lastc;

namespace {

std::filesystem::path programs_dir() {
  return std::filesystem::path(LASTC_SOURCE_DIR) / "programs";
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  REQUIRE_MESSAGE(in.good(), "cannot open ", p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ConfigPtr load(const std::string& name) {
  return parse_program(slurp(programs_dir() / name));
}

}  // namespace

TEST_CASE("every shipped program parses and round-trips") {
  int seen = 0;
  for (const auto& entry : std::filesystem::directory_iterator(programs_dir())) {
    if (entry.path().extension() != ".last") continue;
    ++seen;
    ConfigPtr c = parse_program(slurp(entry.path()));
    ConfigPtr back = parse_program(pretty(c));
    CHECK_MESSAGE(alpha_equal(c, back), "round-trip failed for ",
                  entry.path().filename().string());
  }
  CHECK(seen >= 7);
}

TEST_CASE("shipped double-session program drains from every interleaving") {
  ConfigPtr c = load("c1.last");
  auto typed = type_config({}, c);
  CHECK(type_equal(typed.type, parse_type_text("1")));
  CHECK(typed.marker == Marker::Main);

  Trace tr = run(c, Strategy::Leftmost, 0, 100);
  CHECK(tr.status == Terminal::Finished);
  CHECK(pretty(tr.steps.back().config) == "main { () }");

  ExploreResult r = explore(c, 50);
  CHECK_FALSE(r.truncated);
  REQUIRE(r.terminals.size() == 1);
  CHECK(pretty(r.terminals[0]) == "main { () }");
}

TEST_CASE("shipped higher-order program drains from every interleaving") {
  ConfigPtr c = load("ex3.last");
  auto typed = type_config({}, c);
  CHECK(type_equal(typed.type, parse_type_text("1")));

  ExploreResult r = explore(c, 60);
  CHECK_FALSE(r.truncated);
  REQUIRE(r.terminals.size() == 1);
  CHECK(pretty(r.terminals[0]) == "main { () }");
}

TEST_CASE("shipped relay cycle drains and stays typed") {
  ConfigPtr c = load("intro3.last");
  auto typed = type_config({}, c);
  CHECK(type_equal(typed.type, parse_type_text("1")));

  ExploreResult r = explore(c, 60);
  CHECK_FALSE(r.truncated);
  REQUIRE(r.terminals.size() == 1);
  CHECK(pretty(r.terminals[0]) == "main { () }");

  // The relay also completes under the synchronous mode: every send has a
  // reader already waiting somewhere in the cycle.
  EvalOptions sync;
  sync.synchronous = true;
  Trace str = run(c, Strategy::Leftmost, 0, 100, sync);
  CHECK(str.status == Terminal::Finished);
}

TEST_CASE("shipped unread-send cycle contrasts the two semantics") {
  ConfigPtr c = load("intro1.last");
  Trace async = run(c, Strategy::Leftmost, 0, 100);
  CHECK(async.status == Terminal::Finished);
  std::string fin = pretty(async.steps.back().config);
  CHECK(fin.find("main { () }") != std::string::npos);
  CHECK(fin.find("nu ") != std::string::npos);  // the parked message

  EvalOptions sync;
  sync.synchronous = true;
  Trace blocked = run(c, Strategy::Leftmost, 0, 100, sync);
  CHECK(blocked.status == Terminal::Stuck);
}

TEST_CASE("shipped self-capturing buffer is typed yet always gets stuck") {
  ConfigPtr c = load("selfbuf.last");
  auto typed = type_config({}, c);
  CHECK(type_equal(typed.type, parse_type_text("1")));

  ExploreResult r = explore(c, 40);
  CHECK_FALSE(r.truncated);
  REQUIRE(!r.terminals.empty());
  for (const auto& t : r.terminals) CHECK_FALSE(is_finished(t));
}

TEST_CASE("shipped open fragments run to quiescence without errors") {
  for (const char* name : {"ex1.last", "intro2.last"}) {
    ConfigPtr c = load(name);
    Trace tr = run(c, Strategy::Leftmost, 0, 100);
    CHECK(tr.status == Terminal::Stuck);  // free channels block completion
  }
}
