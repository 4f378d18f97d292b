#include <doctest.h>

#include "gem/error.hpp"
#include "gem/reader.hpp"
#include "gem/term.hpp"

using namespace gem;

TEST_CASE("unify binds variables both ways") {
  Term a = parse_term("f(X, b, g(Y))");
  Term b = parse_term("f(a, Z, g(Z))");
  auto s = unify(a, b, Substitution{});
  REQUIRE(s.has_value());
  CHECK(to_string(apply(a, *s)) == "f(a,b,g(b))");
  CHECK(apply(a, *s) == apply(b, *s));
}

TEST_CASE("unify fails on clashes and the occurs check") {
  CHECK_FALSE(unify(parse_term("f(a)"), parse_term("f(b)"), {}).has_value());
  CHECK_FALSE(unify(parse_term("f(a)"), parse_term("g(a)"), {}).has_value());
  CHECK_FALSE(unify(parse_term("f(a)"), parse_term("f(a,b)"), {}).has_value());
  CHECK_FALSE(unify(parse_term("X"), parse_term("f(X)"), {}).has_value());
  CHECK_FALSE(unify(parse_term("1"), parse_term("2"), {}).has_value());
  CHECK(unify(parse_term("3"), parse_term("3"), {}).has_value());
}

TEST_CASE("in-place unification restores the substitution on failure") {
  Substitution s;
  Term x = Term::var("X"), y = Term::var("Y");
  REQUIRE(unify_in_place(x, parse_term("a"), s));
  size_t before = s.size();
  CHECK_FALSE(unify_in_place(parse_term("f(Y, b)"), parse_term("f(c, c)"), s));
  CHECK(s.size() == before);
  CHECK(s.walk(y).is_var());
  size_t mark = s.mark();
  REQUIRE(unify_in_place(y, parse_term("q"), s));
  s.undo_to(mark);
  CHECK(s.walk(y).is_var());
}

TEST_CASE("rename moves variables to a fresh scope") {
  Term t = parse_term("p(X, Y, X)");
  Term r = rename(t, 7);
  CHECK(r.arg(0).var_id().scope == 7);
  CHECK(r.arg(0) == r.arg(2));
  CHECK_FALSE(r.arg(0) == t.arg(0));
  auto s = unify(t, r, {});
  CHECK(s.has_value());
}

TEST_CASE("standard order and hashing") {
  CHECK(compare(Term::var("X"), Term::integer(1)) < 0);
  CHECK(compare(Term::integer(5), parse_term("a")) < 0);
  CHECK(compare(parse_term("a"), parse_term("f(a)")) < 0);
  CHECK(compare(parse_term("f(a)"), parse_term("f(b)")) < 0);
  CHECK(compare(parse_term("g(a)"), parse_term("f(a,a)")) < 0);
  CHECK(compare(parse_term("f(a,b)"), parse_term("f(a,b)")) == 0);
  CHECK(parse_term("f([1,2],x)").hash() == parse_term("f([1,2],x)").hash());
}

TEST_CASE("printing round-trips through the reader") {
  for (const char* text : {"f(a,[1,2|T],'Hello world')", "msw(out(s0),3,a)", "[]", "-(3)", "a:-b",
                           "(a , b ; c)", "x is 1+2*3", "'A'", "[[1,2],a]"}) {
    Term t = parse_term(text);
    CHECK(parse_term(to_string(t)) == t);
  }
  CHECK(to_string(parse_term("[a,b,c]")) == "[a,b,c]");
  CHECK(to_string(parse_term("'AB'")) == "'AB'");
  CHECK(to_string(parse_term("-3")) == "-3");
}

TEST_CASE("reader operator priorities") {
  Term t = parse_term("X is 1 + 2 * 3 - 4");
  CHECK(t.functor().str() == "is");
  CHECK(to_string(t.arg(1)) == "1+2*3 - 4");
  Term c = parse_term("(a :- b, c ; d)");
  CHECK(c.functor().str() == ":-");
  CHECK(c.arg(1).functor().str() == ";");
  Term d = parse_term(":- table f/0, g/1");
  CHECK(d.functor().str() == ":-");
  CHECK(d.arg(0).has_functor("table", 1));
}

TEST_CASE("reader clauses and anonymous variables") {
  TermReader r("p(_, _) :- q.\n% comment\nr(X, X).\n");
  auto c1 = r.next_clause();
  REQUIRE(c1.has_value());
  CHECK_FALSE(c1->arg(0).arg(0) == c1->arg(0).arg(1));
  auto c2 = r.next_clause();
  REQUIRE(c2.has_value());
  CHECK(c2->arg(0) == c2->arg(1));
  CHECK_FALSE(r.next_clause().has_value());
}

TEST_CASE("syntax errors carry a position") {
  try {
    TermReader r("p(a :- .");
    (void)r.next_clause();
    FAIL("expected a syntax error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Syntax);
    CHECK(std::string(e.token()) == "E_SYNTAX");
    CHECK(std::string(e.what()).find("line 1") != std::string::npos);
  }
}
