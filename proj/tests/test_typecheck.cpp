#include <functional>
#include <string>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "lastc/ast.hpp"
#include "lastc/parser.hpp"
#include "lastc/printer.hpp"
#include "lastc/typecheck.hpp"

using namespace lastc;

namespace {

bool replays(const DerivPtr& d) {
  std::string why;
  bool ok = replay_derivation(d, &why);
  if (!ok) INFO("replay failed: ", why);
  CHECK(ok);
  return ok;
}

TypePtr ty(const std::string& s) { return parse_type_text(s); }
SessionPtr se(const std::string& s) { return parse_session_text(s); }

// Preorder ids must be 0..n-1 in a preorder walk.
int check_ids(const DerivPtr& d, int expected) {
  CHECK(d->id == expected);
  int next = expected + 1;
  for (const auto& p : d->premises) next = check_ids(p, next);
  return next;
}

std::string kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const TypeError& e) {
    return e.kind;
  }
  return "";
}

}  // namespace

TEST_CASE("unit types at 1 with an empty environment") {
  auto r = type_term({}, mk_unit());
  CHECK(type_equal(r.type, ty("1")));
  CHECK(r.leftover.empty());
  CHECK(r.deriv->rule == "T-Unit");
  CHECK(r.deriv->premises.empty());
  check_ids(r.deriv, 0);
  replays(r.deriv);
}

TEST_CASE("receiving on ?end.end gives end * end") {
  TypingEnv env{{"h", ty("?end.end")}};
  auto r = type_term(env, mk_recv(mk_var("h")));
  CHECK(type_equal(r.type, ty("end * end")));
  CHECK(r.leftover.empty());
  CHECK(r.deriv->rule == "T-Recv");
  REQUIRE(r.deriv->premises.size() == 1);
  CHECK(r.deriv->premises[0]->rule == "T-Var");
  replays(r.deriv);
}

TEST_CASE("variables consume their binding; unbound names finish at end") {
  TypingEnv env{{"x", ty("!1.end")}};
  auto r = type_term(env, mk_var("x"));
  CHECK(type_equal(r.type, ty("!1.end")));
  CHECK(r.deriv->rule == "T-Var");
  replays(r.deriv);

  auto free = type_term({}, mk_var("nobody"));
  CHECK(type_equal(free.type, ty("end")));
  CHECK(free.deriv->rule == "T-EndR");
  replays(free.deriv);
}

TEST_CASE("two cyclically connected threads typecheck") {
  // Two channels, one thread sends on the first and receives on the second,
  // the other does the opposite. u and v are free names passed along.
  const char* src =
      "let (f, g) = new[!end.end] in "
      "let (h, k) = new[?end.end] in "
      "spawn (let f' = send (u, f) in let (v', h') = recv h in (), "
      "       let k' = send (v, k) in let (u', g') = recv g in ())";
  auto body = parse_term_text(src);
  auto r = type_term({}, body);
  CHECK(type_equal(r.type, ty("1")));
  CHECK(r.leftover.empty());
  check_ids(r.deriv, 0);
  replays(r.deriv);

  auto c = type_config({}, mk_thread(Marker::Main, body));
  CHECK(type_equal(c.type, ty("1")));
  CHECK(c.marker == Marker::Main);
  CHECK(c.deriv->rule == "T-Main");
  replays(c.deriv);
}

TEST_CASE("abstraction, application and let-splitting") {
  auto r = type_term({}, parse_term_text("(\\x -> x) ()"));
  CHECK(type_equal(r.type, ty("1")));
  CHECK(r.deriv->rule == "T-App");
  replays(r.deriv);

  auto split = type_term({}, parse_term_text(
                                 "let (a, b) = ((), ()) in (a, b)"));
  CHECK(type_equal(split.type, ty("1 * 1")));
  CHECK(split.deriv->rule == "T-Split");
  replays(split.deriv);
}

TEST_CASE("unused lambda binder is weakened explicitly at end") {
  auto r = type_term({}, parse_term_text("\\x -> ()"));
  CHECK(type_equal(r.type, ty("end -o 1")));
  REQUIRE(r.deriv->premises.size() == 1);
  CHECK(r.deriv->premises[0]->rule == "T-EndL");
  CHECK(r.deriv->premises[0]->premises[0]->rule == "T-Unit");
  replays(r.deriv);
}

TEST_CASE("selection on an unannotated channel infers the labels used") {
  auto r = type_term({}, parse_term_text("\\ch -> select go ch"));
  CHECK(type_equal(r.type, ty("+{go: end} -o end")));
  replays(r.deriv);
}

TEST_CASE("select and case against concrete protocols") {
  const char* src =
      "let (i, o) = new[+{go: end, stop: end}] in "
      "let i2 = select go i in "
      "case o of { go: \\c -> (), stop: \\c -> () }";
  auto r = type_term({}, parse_term_text(src));
  CHECK(type_equal(r.type, ty("1")));
  replays(r.deriv);
}

TEST_CASE("case branches must consume the same names") {
  TypingEnv env{{"p", ty("&{go: end, stop: end}")},
                {"q", ty("!1.end")}};
  // The go branch sends on q, the stop branch ignores it.
  const char* src =
      "case p of { go: \\c -> let q' = send ((), q) in (), "
      "            stop: \\c -> () }";
  CHECK(kind_of([&] { type_term(env, parse_term_text(src)); }) ==
        "LinearityViolation");
}

TEST_CASE("explicit substitution types body first, then the replacement") {
  // Replacement is a bare lambda whose type only the body determines.
  auto t = mk_sub(mk_app(mk_var("f"), mk_unit()), parse_term_text("\\x -> x"),
                  "f");
  auto r = type_term({}, t);
  CHECK(type_equal(r.type, ty("1")));
  CHECK(r.deriv->rule == "T-Sub");
  REQUIRE(r.deriv->premises.size() == 2);
  CHECK(type_equal(std::get<TermJudgment>(r.deriv->premises[1]->judgment).type,
                   ty("1 -o 1")));
  replays(r.deriv);
}

TEST_CASE("staged send types the payload and channel separately") {
  TypingEnv env{{"z", ty("!1.end")}};
  auto r = type_term(env, mk_send_prime(mk_unit(), mk_var("z")));
  CHECK(type_equal(r.type, ty("end")));
  CHECK(r.deriv->rule == "T-Send'");
  replays(r.deriv);
}

TEST_CASE("non-end leftovers are linearity violations") {
  TypingEnv env{{"x", ty("!1.end")}};
  CHECK(kind_of([&] { type_term(env, mk_unit()); }) == "LinearityViolation");

  // An end-typed leftover is fine and is reported back.
  TypingEnv ok{{"x", ty("end")}};
  auto r = type_term(ok, mk_unit());
  CHECK(r.leftover.size() == 1);
  CHECK(r.leftover.count("x") == 1);
}

TEST_CASE("ill-typed sends are type mismatches") {
  CHECK(kind_of([&] { type_term({}, parse_term_text("send ((), ())")); }) ==
        "TypeMismatch");
  TypingEnv env{{"h", ty("?end.end")}};
  CHECK(kind_of([&] {
          type_term(env, parse_term_text("send ((), h)"));
        }) == "TypeMismatch");
}

// ----------------------------------------------------------------- buffers

TEST_CASE("the empty buffer relates a protocol to itself") {
  auto r = type_buffer({}, {}, se("!end.end"));
  CHECK(session_equal(r.from, se("!end.end")));
  CHECK(r.leftover.empty());
  CHECK(r.deriv->rule == "T-Buf");
  replays(r.deriv);
}

TEST_CASE("messages peel the target protocol oldest first") {
  // Buffer [h, go, ()]: front h is newest, back () is dequeued next.
  TypingEnv env{{"h", ty("!end.end")}};
  std::vector<Message> msgs{Message{mk_var("h")}, Message{Name("go")},
                            Message{mk_unit()}};
  SessionPtr target = se("!1.+{go: !(!end.end).?1.end, stop: end}");
  auto r = type_buffer(env, msgs, target);
  CHECK(session_equal(r.from, se("?1.end")));
  CHECK(r.leftover.empty());

  // One rule per message, ending in the empty buffer.
  CHECK(r.deriv->rule == "T-BufSend");
  const auto& j0 = std::get<BufferJudgment>(r.deriv->judgment);
  CHECK(session_equal(j0.to, target));
  CHECK(session_equal(j0.from, se("?1.end")));
  REQUIRE(r.deriv->premises.size() == 2);
  CHECK(r.deriv->premises[0]->rule == "T-Unit");
  auto sel = r.deriv->premises[1];
  CHECK(sel->rule == "T-BufSelect");
  REQUIRE(sel->premises.size() == 1);
  auto snd = sel->premises[0];
  CHECK(snd->rule == "T-BufSend");
  REQUIRE(snd->premises.size() == 2);
  CHECK(snd->premises[0]->rule == "T-Var");
  CHECK(snd->premises[1]->rule == "T-Buf");
  check_ids(r.deriv, 0);
  replays(r.deriv);
}

TEST_CASE("a buffered label outside the offered set is rejected") {
  std::vector<Message> msgs{Message{Name("oops")}};
  CHECK(kind_of([&] {
          type_buffer({}, msgs, se("+{go: end, stop: end}"));
        }) == "BufferTypeMismatch");
}

TEST_CASE("a buffered term against a selection is rejected") {
  std::vector<Message> msgs{Message{mk_unit()}};
  CHECK(kind_of([&] { type_buffer({}, msgs, se("+{go: end}")); }) ==
        "BufferTypeMismatch");
}

// ----------------------------------------------------------- configurations

TEST_CASE("a main thread types at its body's type") {
  auto c = type_config({}, mk_thread(Marker::Main, mk_unit()));
  CHECK(type_equal(c.type, ty("1")));
  CHECK(c.marker == Marker::Main);
  CHECK(c.deriv->rule == "T-Main");
  REQUIRE(c.deriv->premises.size() == 1);
  CHECK(c.deriv->premises[0]->rule == "T-Unit");
  replays(c.deriv);
}

TEST_CASE("restriction reconstructs the buffered protocol") {
  // nu y'[z']y (main { let (z, y0) = recv y in () }): the buffered z' is a
  // free name at end, so y runs ?end.end and the buffer types end > !end.end.
  auto body = mk_thread(Marker::Main,
                        parse_term_text("let (z, y0) = recv y in ()"));
  auto c = type_config(
      {}, mk_bufres("y'", {Message{mk_var("z'")}}, "y", body));
  CHECK(type_equal(c.type, ty("1")));
  CHECK(c.marker == Marker::Main);
  CHECK(c.deriv->rule == "T-Res");
  REQUIRE(c.deriv->premises.size() == 2);
  const auto& buf = std::get<BufferJudgment>(c.deriv->premises[0]->judgment);
  CHECK(session_equal(buf.from, se("end")));
  CHECK(session_equal(buf.to, se("!end.end")));
  check_ids(c.deriv, 0);
  replays(c.deriv);
}

TEST_CASE("restriction with both endpoints unused discharges them at end") {
  auto c = type_config({}, mk_bufres("a", {}, "b",
                                     mk_thread(Marker::Main, mk_unit())));
  CHECK(c.deriv->rule == "T-Res");
  // Both bindings are pushed into the thread as end weakenings.
  auto thread = c.deriv->premises[1];
  CHECK(thread->rule == "T-Main");
  CHECK(thread->premises[0]->rule == "T-EndL");
  CHECK(thread->premises[0]->premises[0]->rule == "T-EndL");
  replays(c.deriv);
}

TEST_CASE("a receiving endpoint used inside its own buffer") {
  // nu x[let (z, y0) = recv y in y0]y (main { () }): the in-flight message
  // itself receives on y, so y is consumed by the buffer, not the body.
  auto msg = parse_term_text("let (z, y0) = recv y in y0");
  auto c = type_config(
      {}, mk_bufres("x", {Message{msg}}, "y",
                    mk_thread(Marker::Main, mk_unit())));
  CHECK(type_equal(c.type, ty("1")));
  CHECK(c.deriv->rule == "T-ResBuf");
  const auto& buf = std::get<BufferJudgment>(c.deriv->premises[0]->judgment);
  CHECK(session_equal(buf.to, se("!end.end")));
  CHECK(buf.env.count("y") == 1);
  replays(c.deriv);
}

TEST_CASE("parallel composition combines markers") {
  auto child = mk_thread(Marker::Child, mk_unit());
  auto main_thread = mk_thread(Marker::Main, mk_unit());

  auto l = type_config({}, mk_cpar(child, main_thread));
  CHECK(l.deriv->rule == "T-ParL");
  CHECK(l.marker == Marker::Main);
  replays(l.deriv);

  auto r = type_config({}, mk_cpar(main_thread, child));
  CHECK(r.deriv->rule == "T-ParR");
  replays(r.deriv);

  auto cc = type_config({}, mk_cpar(child, child));
  CHECK(cc.marker == Marker::Child);
  CHECK(cc.deriv->rule == "T-ParR");
  replays(cc.deriv);

  CHECK(kind_of([&] {
          type_config({}, mk_cpar(main_thread, main_thread));
        }) == "TwoMainThreads");
}

TEST_CASE("child threads must finish at unit") {
  auto bad = mk_thread(Marker::Child, parse_term_text("\\x -> x"));
  CHECK(kind_of([&] { type_config({}, bad); }) == "ChildNotUnit");
}

TEST_CASE("configuration substitution mirrors the term rule") {
  auto c = mk_csub(mk_thread(Marker::Main, mk_app(mk_var("f"), mk_unit())),
                   parse_term_text("\\x -> x"), "f");
  auto r = type_config({}, c);
  CHECK(type_equal(r.type, ty("1")));
  CHECK(r.deriv->rule == "T-ConfSub");
  replays(r.deriv);
}

TEST_CASE("combine_markers") {
  CHECK(combine_markers(Marker::Main, Marker::Child) == Marker::Main);
  CHECK(combine_markers(Marker::Child, Marker::Main) == Marker::Main);
  CHECK(combine_markers(Marker::Child, Marker::Child) == Marker::Child);
  CHECK_THROWS_AS(combine_markers(Marker::Main, Marker::Main), TypeError);
}

// ----------------------------------------------------------------- replay

TEST_CASE("replay rejects a forged node") {
  auto forged = std::make_shared<Derivation>();
  forged->rule = "T-Unit";
  forged->judgment = TermJudgment{{}, mk_unit(), ty("end")};
  std::string why;
  CHECK_FALSE(replay_derivation(forged, &why));
  CHECK(why.find("T-Unit") != std::string::npos);

  auto wrong_env = std::make_shared<Derivation>();
  wrong_env->rule = "T-Var";
  wrong_env->judgment =
      TermJudgment{{{"x", ty("!1.end")}, {"y", ty("end")}}, mk_var("x"),
                   ty("!1.end")};
  CHECK_FALSE(replay_derivation(wrong_env, &why));
}

TEST_CASE("derivations serialize deterministically") {
  auto term = parse_term_text("let (a, b) = new[!1.end] in "
                              "let a2 = send ((), a) in "
                              "let (u, b2) = recv b in u");
  auto r1 = type_term({}, term);
  auto r2 = type_term({}, term);
  std::string j1 = derivation_to_json(r1.deriv);
  CHECK(j1 == derivation_to_json(r2.deriv));

  auto parsed = nlohmann::json::parse(j1);
  CHECK(parsed["rule"] == "T-Split");
  CHECK(parsed["judgment"] == "term");
  CHECK(parsed["id"] == 0);
  CHECK(parsed["premises"].is_array());
  replays(r1.deriv);
}

TEST_CASE("identity function sends a channel through itself") {
  // Payload and continuation of the same protocol meet in one unification.
  const char* src =
      "let (x, y) = new[!(!1.end).end] in "
      "let (i, o) = new[!1.end] in "
      "let x2 = send (i, x) in "
      "let (got, y2) = recv y in "
      "let g2 = send ((), got) in "
      "let (q, o2) = recv o in q";
  auto r = type_term({}, parse_term_text(src));
  CHECK(type_equal(r.type, ty("1")));
  replays(r.deriv);
}
