#include <algorithm>
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

struct Driven {
  ConfigPtr config;
  std::vector<std::string> events;
};

// Applies steps by rule name (first enabled redex with that name, in scan
// order), collecting the flattened congruence-and-rule event stream.
Driven drive(const ConfigPtr& c, const std::vector<std::string>& rules,
             const EvalOptions& opts = {}) {
  Driven d;
  d.config = normalize(c, &d.events, opts);
  for (const std::string& r : rules) {
    std::vector<RedexDescriptor> rs = enabled_redexes(d.config, opts);
    const RedexDescriptor* pick = nullptr;
    for (const auto& e : rs)
      if (e.rule == r) {
        pick = &e;
        break;
      }
    REQUIRE_MESSAGE(pick != nullptr, "no enabled redex named ", r, " in ",
                    pretty(d.config));
    TraceStep s = step(d.config, *pick, opts);
    for (const auto& e : s.sc_before) d.events.push_back(e);
    d.events.push_back(s.redex.rule);
    for (const auto& e : s.sc_after) d.events.push_back(e);
    d.config = s.config;
  }
  return d;
}

std::vector<std::string> rule_names(const std::vector<RedexDescriptor>& rs) {
  std::vector<std::string> out;
  out.reserve(rs.size());
  for (const auto& r : rs) out.push_back(r.rule);
  return out;
}

bool has_rule(const std::vector<RedexDescriptor>& rs, const std::string& r) {
  for (const auto& e : rs)
    if (e.rule == r) return true;
  return false;
}

const char* kC1 = R"(
main {
  let (f, g) = new[!end.end] in
  let (h, k) = new[?end.end] in
  spawn (let f' = send (u, f) in let (v', h') = recv h in (),
         let k' = send (v, k) in let (u', g') = recv g in ())
}
)";

// Two threads in a cycle; the send on the first channel is never received,
// so it only ever finishes because buffering is non-blocking.
const char* kLoneSend = R"(
main {
  let (x1, x2) = new[!end.end] in
  let (y1, y2) = new[!end.end] in
  spawn (let y1' = send (w, y1) in (),
         let x1' = send (u, x1) in let (v, y2') = recv y2 in ())
}
)";

// Closed instance of a self-referential buffer: the payload sent on x
// captures x's peer endpoint y, so the recv on b below can never be served.
const char* kSelfBuf = R"(
main {
  let (x, y) = new[!end.end] in
  let (a, b) = new[!end.end] in
  let x' = send ((let (z, y') = recv y in let a' = send (z, a) in y'), x) in
  let (w, b') = recv b in
  ()
}
)";

// Buffer and threads already set up: the main thread sends a function that
// the child applies to its own endpoint to answer back.
ConfigPtr higher_order_config() {
  TermPtr m = parse_term_text(
      "let x' = send (\\z -> send ((), z), x) in let (v, x'') = recv x' in v");
  TermPtr c = parse_term_text("let (w, y') = recv y in let y'' = w y' in ()");
  return mk_bufres("x", {}, "y",
                   mk_cpar(mk_thread(Marker::Main, m),
                           mk_thread(Marker::Child, c)));
}

}  // namespace

TEST_CASE("normalize leaves a finished main thread alone") {
  ConfigPtr c = parse_program("main { () }");
  std::vector<std::string> ev;
  ConfigPtr n = normalize(c, &ev);
  CHECK(pretty(n) == "main { () }");
  CHECK(ev.empty());
  CHECK(is_finished(n));
  CHECK(enabled_redexes(n).empty());
}

TEST_CASE("normalize drops finished child threads") {
  ConfigPtr c = mk_cpar(mk_thread(Marker::Main, parse_term_text("f u")),
                        mk_thread(Marker::Child, mk_unit()));
  std::vector<std::string> ev;
  ConfigPtr n = normalize(c, &ev);
  CHECK(pretty(n) == "main { f u }");
  CHECK(ev == std::vector<std::string>{"SC-ParNil"});
}

TEST_CASE("normalize garbage-collects drained unused channels") {
  ConfigPtr c = mk_bufres("p", {}, "q", mk_thread(Marker::Main, mk_unit()));
  std::vector<std::string> ev;
  ConfigPtr n = normalize(c, &ev);
  CHECK(pretty(n) == "main { () }");
  CHECK(ev == std::vector<std::string>{"SC-ResNil"});
}

TEST_CASE("normalize keeps channels with buffered messages") {
  ConfigPtr c = mk_bufres("p", {Message{mk_unit()}}, "q",
                          mk_thread(Marker::Main, mk_unit()));
  ConfigPtr n = normalize(c, nullptr);
  CHECK(pretty(n) == "nu p [()] q (main { () })");
  CHECK(is_finished(n));
}

TEST_CASE("normalize orders the main thread first") {
  ConfigPtr c = mk_cpar(mk_thread(Marker::Child, parse_term_text("g v")),
                        mk_thread(Marker::Main, mk_unit()));
  CHECK(pretty(normalize(c, nullptr)) == "main { () } || child { g v }");
}

TEST_CASE("normalize is idempotent on mid-run configurations") {
  Trace tr = run(parse_program(kC1), Strategy::Leftmost, 0, 100);
  REQUIRE(tr.status == Terminal::Finished);
  for (const TraceStep& s : tr.steps) {
    std::vector<std::string> ev;
    ConfigPtr again = normalize(s.config, &ev);
    CHECK(alpha_equal(s.config, again));
    CHECK(ev.empty());
  }
}

TEST_CASE("enqueue into an empty buffer from a send' in a thread") {
  // nu x [] y (main { send'((), x) } || child { recv y })
  ConfigPtr c = mk_bufres(
      "x", {}, "y",
      mk_cpar(mk_thread(Marker::Main,
                        mk_send_prime(mk_unit(), mk_var("x"))),
              mk_thread(Marker::Child, mk_recv(mk_var("y")))));
  std::vector<std::string> ev;
  ConfigPtr n = normalize(c, &ev);
  CHECK(pretty(n) == "nu x [()] y (main { x } || child { recv y })");
  CHECK(ev == std::vector<std::string>{"SC-Send'"});
}

TEST_CASE("a staged send under an explicit substitution extrudes it first") {
  // nu x [] y (main { (send'(z, x))[v/z] } || child { recv y })
  // must become (nu x [z] y (main { x } || child { recv y }))[v/z]: the
  // substitution has to leave the restriction before the payload, which
  // mentions its binder, can enter the buffer.
  ConfigPtr c = mk_bufres(
      "x", {}, "y",
      mk_cpar(mk_thread(Marker::Main,
                        mk_sub(mk_send_prime(mk_var("z"), mk_var("x")),
                               mk_var("v"), "z")),
              mk_thread(Marker::Child, mk_recv(mk_var("y")))));
  std::vector<std::string> ev;
  ConfigPtr n = normalize(c, &ev);
  CHECK(pretty(n) == "(nu x [z] y (main { x } || child { recv y }))[v/z]");
  CHECK(ev == std::vector<std::string>{"SC-ConfSubst", "SC-ConfSubstExt",
                                       "SC-Send'"});
}

TEST_CASE("select labels enqueue through the congruence") {
  ConfigPtr c = mk_bufres(
      "x", {}, "y",
      mk_cpar(mk_thread(Marker::Main, mk_select("go", mk_var("x"))),
              mk_thread(Marker::Child,
                        mk_case(mk_var("y"),
                                {{"go", parse_term_text("\\e -> ()")}}))));
  std::vector<std::string> ev;
  ConfigPtr n = normalize(c, &ev);
  CHECK(ev == std::vector<std::string>{"SC-Select"});
  CHECK(pretty(n).find("nu x [go] y") != std::string::npos);
  CHECK(has_rule(enabled_redexes(n), "E-Case"));
}

TEST_CASE("empty buffers swap direction when only the reader side sends") {
  // nu x [] y with the only staged send on y: the buffer must flip.
  ConfigPtr c = mk_bufres(
      "x", {}, "y",
      mk_cpar(mk_thread(Marker::Main, mk_send_prime(mk_unit(), mk_var("y"))),
              mk_thread(Marker::Child, mk_recv(mk_var("x")))));
  std::vector<std::string> ev;
  ConfigPtr n = normalize(c, &ev);
  CHECK(std::count(ev.begin(), ev.end(), "SC-ResSwap") == 1);
  CHECK(pretty(n) == "nu y [()] x (main { y } || child { recv x })");
}

TEST_CASE("runtime evaluation of a send applied under nested abstractions") {
  // (\x -> send ((), x)) ((\y -> y) z) reaches send'((), z) through the
  // exact six-event path: the substitution of x must sink into the send'
  // before it can discharge.
  TermPtr t = parse_term_text("(\\x -> send ((), x)) ((\\y -> y) z)");
  ConfigPtr c = mk_thread(Marker::Main, t);
  Driven d = drive(
      c, {"E-Lam", "E-Send", "E-Lam", "E-NameSubst", "E-SubstName"});
  CHECK(d.events ==
        std::vector<std::string>{"E-Lam", "E-Send", "E-Lam", "SC-SubExt",
                                 "E-NameSubst", "E-SubstName"});
  CHECK(pretty(d.config) == "main { send'((), z) }");
  CHECK(enabled_redexes(d.config).empty());
  CHECK_FALSE(is_finished(d.config));
}

TEST_CASE("E-New wraps the thread in a fresh empty restriction") {
  ConfigPtr c = parse_program("main { new[!end.end] }");
  std::vector<RedexDescriptor> rs = enabled_redexes(normalize(c, nullptr));
  REQUIRE(rule_names(rs) == std::vector<std::string>{"E-New"});
  TraceStep s = step(normalize(c, nullptr), rs[0]);
  CHECK(pretty(s.config) == "nu x [] y (main { (x, y) })");
}

TEST_CASE("E-Spawn makes the pair's first element the child thread") {
  ConfigPtr c = parse_program("main { spawn (f u, g v) }");
  ConfigPtr n = normalize(c, nullptr);
  std::vector<RedexDescriptor> rs = enabled_redexes(n);
  REQUIRE(has_rule(rs, "E-Spawn"));
  Driven d = drive(c, {"E-Spawn"});
  CHECK(pretty(d.config) == "main { g v } || child { f u }");
}

TEST_CASE("spawn waits for an enclosing substitution to discharge") {
  // The substitution can be eliminated by a step (its replacement is a
  // name), so it is not extruded to configuration level; until that step
  // runs, the spawn underneath is not a redex.
  TermPtr t = mk_sub(mk_spawn(mk_pair(mk_var("a"), mk_unit())), mk_var("w"),
                     "unused");
  ConfigPtr n = normalize(mk_thread(Marker::Main, t), nullptr);
  CHECK_FALSE(has_rule(enabled_redexes(n), "E-Spawn"));
  REQUIRE(has_rule(enabled_redexes(n), "E-SubstName"));
  Driven d = drive(n, {"E-SubstName"});
  CHECK(has_rule(enabled_redexes(d.config), "E-Spawn"));
}

TEST_CASE("an inert substitution is extruded to free the spawn under it") {
  // Here the replacement is a blocked application, so no term step can
  // remove the substitution; it must move to configuration level for the
  // spawn to fire.
  TermPtr t = mk_sub(mk_spawn(mk_pair(mk_var("a"), mk_unit())),
                     parse_term_text("f u"), "unused");
  std::vector<std::string> ev;
  ConfigPtr n = normalize(mk_thread(Marker::Main, t), &ev);
  CHECK(has_rule(enabled_redexes(n), "E-Spawn"));
  CHECK(std::count(ev.begin(), ev.end(), "SC-ConfSubst") == 1);
}

TEST_CASE("E-Recv takes the oldest message and pairs it with the endpoint") {
  ConfigPtr c = mk_bufres(
      "x", {Message{mk_var("newer")}, Message{mk_var("older")}}, "y",
      mk_thread(Marker::Main, mk_recv(mk_var("y"))));
  ConfigPtr n = normalize(c, nullptr);
  REQUIRE(has_rule(enabled_redexes(n), "E-Recv"));
  Driven d = drive(c, {"E-Recv"});
  CHECK(pretty(d.config) == "nu x [newer] y (main { (older, y) })");
}

TEST_CASE("E-Case applies the labelled branch to the endpoint") {
  ConfigPtr c = mk_bufres(
      "x", {Message{Name("right")}}, "y",
      mk_thread(Marker::Main,
                mk_case(mk_var("y"), {{"left", parse_term_text("\\e -> e")},
                                      {"right", parse_term_text("\\e -> e")}})));
  Driven d = drive(c, {"E-Case", "E-Lam", "E-NameSubst"});
  CHECK(pretty(d.config) == "nu x [] y (main { y })");
}

TEST_CASE("a case with no branch for the buffered label is stuck") {
  ConfigPtr c = mk_bufres(
      "x", {Message{Name("other")}}, "y",
      mk_thread(Marker::Main,
                mk_case(mk_var("y"), {{"left", parse_term_text("\\e -> e")}})));
  CHECK(enabled_redexes(normalize(c, nullptr)).empty());
}

TEST_CASE("a recv whose buffer holds only a label is stuck") {
  ConfigPtr c = mk_bufres("x", {Message{Name("l")}}, "y",
                          mk_thread(Marker::Main, mk_recv(mk_var("y"))));
  CHECK(enabled_redexes(normalize(c, nullptr)).empty());
}

TEST_CASE("stepping with a descriptor from another state reports staleness") {
  ConfigPtr a = normalize(parse_program(kC1), nullptr);
  std::vector<RedexDescriptor> rs = enabled_redexes(a);
  REQUIRE(!rs.empty());
  ConfigPtr b = step(a, rs[0]).config;
  bool threw = false;
  try {
    step(b, rs[0]);
  } catch (const EvalError& e) {
    threw = true;
    CHECK(e.kind == "StaleRedex");
  }
  CHECK(threw);
}

TEST_CASE("cyclic double-channel setup runs to the finished main thread") {
  ConfigPtr c = parse_program(kC1);

  auto typed = type_config({}, c);
  CHECK(type_equal(typed.type, parse_type_text("1")));
  CHECK(typed.marker == Marker::Main);

  Trace tr = run(c, Strategy::Leftmost, 0, 100);
  CHECK(tr.status == Terminal::Finished);
  REQUIRE(!tr.steps.empty());
  CHECK(pretty(tr.steps.back().config) == "main { () }");

  // Typing is preserved along the whole trace.
  ConfigPtr cur = tr.initial;
  auto at_start = type_config({}, cur);
  CHECK(type_equal(at_start.type, parse_type_text("1")));
  for (const TraceStep& s : tr.steps) {
    auto r = type_config({}, s.config);
    CHECK(type_equal(r.type, parse_type_text("1")));
    CHECK(r.marker == Marker::Main);
  }
}

TEST_CASE("all interleavings of the cyclic setup share one terminal") {
  ExploreResult r = explore(parse_program(kC1), 50);
  CHECK_FALSE(r.truncated);
  REQUIRE(r.terminals.size() == 1);
  CHECK(pretty(r.terminals[0]) == "main { () }");
  CHECK(is_finished(r.terminals[0]));
}

TEST_CASE("higher-order function sent over a channel answers back") {
  ConfigPtr c = higher_order_config();
  auto typed = type_config({}, c);
  CHECK(type_equal(typed.type, parse_type_text("1")));

  Trace tr = run(c, Strategy::Leftmost, 0, 200);
  CHECK(tr.status == Terminal::Finished);
  CHECK(pretty(tr.steps.back().config) == "main { () }");

  ExploreResult r = explore(c, 60);
  CHECK_FALSE(r.truncated);
  REQUIRE(r.terminals.size() == 1);
  CHECK(pretty(r.terminals[0]) == "main { () }");
}

TEST_CASE("unreceived buffered messages do not prevent finishing") {
  Trace tr = run(parse_program(kLoneSend), Strategy::Leftmost, 0, 100);
  CHECK(tr.status == Terminal::Finished);
  // The stranded message is still in its buffer at the end.
  std::string fin = pretty(tr.steps.back().config);
  CHECK(fin.find("nu ") != std::string::npos);
  CHECK(fin.find("main { () }") != std::string::npos);
}

TEST_CASE("the same lone send deadlocks under the synchronous mode") {
  EvalOptions sync;
  sync.synchronous = true;
  Trace tr = run(parse_program(kLoneSend), Strategy::Leftmost, 0, 100, sync);
  CHECK(tr.status == Terminal::Stuck);
}

TEST_CASE("a buffer that captures its own reading endpoint deadlocks") {
  ConfigPtr c = parse_program(kSelfBuf);
  auto typed = type_config({}, c);
  CHECK(type_equal(typed.type, parse_type_text("1")));

  Trace tr = run(c, Strategy::Leftmost, 0, 100);
  CHECK(tr.status == Terminal::Stuck);
  std::string fin = pretty(tr.steps.back().config);
  CHECK(fin.find("recv") != std::string::npos);  // the unserved receive
  CHECK(fin.find("nu ") != std::string::npos);   // the poisoned buffer

  ExploreResult r = explore(c, 40);
  bool some_stuck = false;
  for (const auto& t : r.terminals) some_stuck = some_stuck || !is_finished(t);
  CHECK(some_stuck);
}

TEST_CASE("random strategy is deterministic per seed") {
  auto rules_of = [](const Trace& t) {
    std::vector<std::string> out;
    for (const auto& s : t.steps) out.push_back(s.redex.rule);
    return out;
  };
  Trace a = run(parse_program(kC1), Strategy::Random, 42, 100);
  Trace b = run(parse_program(kC1), Strategy::Random, 42, 100);
  CHECK(a.status == Terminal::Finished);
  CHECK(rules_of(a) == rules_of(b));
  CHECK(alpha_equal(a.steps.back().config, b.steps.back().config));
}

TEST_CASE("run stops with Budget status when out of steps") {
  Trace tr = run(parse_program(kC1), Strategy::Leftmost, 0, 3);
  CHECK(tr.status == Terminal::Budget);
  CHECK(tr.steps.size() == 3);
}

TEST_CASE("canonical keys ignore bound-name spelling and buffer direction") {
  ConfigPtr a = mk_bufres("a", {}, "b",
                          mk_thread(Marker::Main, mk_recv(mk_var("b"))));
  ConfigPtr b = mk_bufres("p", {}, "q",
                          mk_thread(Marker::Main, mk_recv(mk_var("q"))));
  CHECK(canonical_key(a) == canonical_key(b));

  // Same channel with the empty buffer oriented the other way.
  ConfigPtr flipped = mk_bufres("b", {}, "a",
                                mk_thread(Marker::Main, mk_recv(mk_var("b"))));
  ConfigPtr straight = mk_bufres("a", {}, "b",
                                 mk_thread(Marker::Main, mk_recv(mk_var("b"))));
  CHECK(canonical_key(flipped) == canonical_key(straight));

  // With an empty buffer the two endpoints are symmetric, so even receiving
  // on the nominal sending side is the same state up to congruence.
  ConfigPtr on_out = mk_bufres("a", {}, "b",
                               mk_thread(Marker::Main, mk_recv(mk_var("a"))));
  CHECK(canonical_key(on_out) == canonical_key(straight));

  // A buffered message breaks the symmetry: receiving on the sending side
  // is a stuck state, not a renaming of the deliverable one.
  ConfigPtr deliverable =
      mk_bufres("a", {Message{mk_unit()}}, "b",
                mk_thread(Marker::Main, mk_recv(mk_var("b"))));
  ConfigPtr wrong_side =
      mk_bufres("a", {Message{mk_unit()}}, "b",
                mk_thread(Marker::Main, mk_recv(mk_var("a"))));
  CHECK(canonical_key(deliverable) != canonical_key(wrong_side));
}

TEST_CASE("canonical keys separate free names") {
  ConfigPtr a = mk_thread(Marker::Main, mk_var("u"));
  ConfigPtr b = mk_thread(Marker::Main, mk_var("v"));
  CHECK(canonical_key(a) != canonical_key(b));
}

TEST_CASE("normalize preserves typing") {
  for (const char* src : {kC1, kSelfBuf}) {
    ConfigPtr c = parse_program(src);
    auto before = type_config({}, c);
    auto after = type_config({}, normalize(c, nullptr));
    CHECK(type_equal(before.type, after.type));
    CHECK(before.marker == after.marker);
  }
}

TEST_CASE("explored states of the cyclic setup stay well-typed") {
  // Walk the reachable graph shallowly and type every state.
  ConfigPtr start = normalize(parse_program(kC1), nullptr);
  std::vector<ConfigPtr> frontier{start};
  std::vector<std::string> seen{canonical_key(start)};
  int typed_states = 0;
  for (int depth = 0; depth < 6 && !frontier.empty(); ++depth) {
    std::vector<ConfigPtr> next;
    for (const ConfigPtr& c : frontier) {
      auto r = type_config({}, c);
      CHECK(type_equal(r.type, parse_type_text("1")));
      ++typed_states;
      for (const auto& rd : enabled_redexes(c)) {
        ConfigPtr n = step(c, rd).config;
        std::string key = canonical_key(n);
        if (std::find(seen.begin(), seen.end(), key) == seen.end()) {
          seen.push_back(key);
          next.push_back(n);
        }
      }
    }
    frontier = std::move(next);
  }
  CHECK(typed_states > 5);
}
