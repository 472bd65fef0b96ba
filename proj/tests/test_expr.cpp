#include <gtest/gtest.h>

#include <cctype>
#include <cmath>
#include <random>

#include "oracles.hpp"
#include "slm/expr.hpp"

using namespace slm;

namespace {

Expr X(const char* v = "x") { return Expr::variable(v); }
Expr N(double c, const char* v = "x") { return Expr::number(c, v); }

// Independent recognizer for the grammar, used to police the fuzz test.
class Recognizer {
 public:
  Recognizer(const std::string& s, const std::string& var) : s_(s), var_(var) {}
  bool accepts() {
    try {
      skip();
      if (i_ == s_.size()) return false;
      expr(0);
      skip();
      return i_ == s_.size();
    } catch (int) {
      return false;
    }
  }

 private:
  void skip() {
    while (i_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[i_]))) ++i_;
  }
  bool eat(char c) {
    skip();
    if (i_ < s_.size() && s_[i_] == c) {
      ++i_;
      return true;
    }
    return false;
  }
  void expr(int d) {
    if (d > 150) throw 0;
    term(d);
    while (eat('+') || eat('-')) term(d);
  }
  void term(int d) {
    factor(d);
    while (eat('*') || eat('/')) factor(d);
  }
  void factor(int d) {
    eat('-');
    power(d);
  }
  void power(int d) {
    atom(d);
    if (eat('^')) factor(d + 1);
  }
  void atom(int d) {
    skip();
    if (i_ >= s_.size()) throw 0;
    const char c = s_[i_];
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      number();
      return;
    }
    if (std::isalpha(static_cast<unsigned char>(c))) {
      std::size_t j = i_;
      while (j < s_.size() && std::isalnum(static_cast<unsigned char>(s_[j]))) ++j;
      const std::string id = s_.substr(i_, j - i_);
      i_ = j;
      if (id == var_) return;
      static const std::set<std::string> fns{"exp", "log", "abs", "sqrt", "erf", "normcdf"};
      if (!fns.count(id)) throw 0;
      if (!eat('(')) throw 0;
      expr(d + 1);
      if (!eat(')')) throw 0;
      return;
    }
    if (eat('(')) {
      expr(d + 1);
      if (!eat(')')) throw 0;
      return;
    }
    throw 0;
  }
  void number() {
    std::size_t digits = 0;
    while (i_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[i_]))) ++i_, ++digits;
    if (i_ < s_.size() && s_[i_] == '.') {
      ++i_;
      while (i_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[i_]))) ++i_, ++digits;
    }
    if (digits == 0) throw 0;
    if (i_ < s_.size() && (s_[i_] == 'e' || s_[i_] == 'E')) {
      std::size_t j = i_ + 1;
      if (j < s_.size() && (s_[j] == '+' || s_[j] == '-')) ++j;
      std::size_t k = j;
      while (k < s_.size() && std::isdigit(static_cast<unsigned char>(s_[k]))) ++k;
      if (k == j) throw 0;
      i_ = k;
    }
  }

  std::string s_;
  std::string var_;
  std::size_t i_ = 0;
};

}  // namespace

TEST(Parse, Square) { EXPECT_TRUE(parse_expr("x^2", "x").structurally_equal(pow(X(), N(2)))); }

TEST(Parse, ExpAbsCube) {
  const Expr e = parse_expr("exp(abs(x)^3)", "x");
  EXPECT_TRUE(e.structurally_equal(Expr::call(Op::Exp, pow(Expr::call(Op::Abs, X()), N(3)))));
}

TEST(Parse, MeanTarget) {
  EXPECT_TRUE(parse_expr("1/(1+t)", "t").structurally_equal(N(1, "t") / (N(1, "t") + X("t"))));
}

TEST(Parse, TrailingOperatorOffset) {
  try {
    parse_expr("x +", "x");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.kind(), ParseErrorKind::Syntax);
    EXPECT_EQ(e.offset(), 3u);
  }
}

TEST(Parse, UnaryMinusBindsLooserThanPower) {
  EXPECT_TRUE(parse_expr("-x^2", "x").structurally_equal(-pow(X(), N(2))));
  EXPECT_EQ(parse_expr("-x^2", "x").eval(3).value, -9.0);
}

TEST(Parse, PowerRightAssociative) {
  EXPECT_TRUE(parse_expr("x^2^3", "x").structurally_equal(pow(X(), pow(N(2), N(3)))));
  EXPECT_EQ(parse_expr("2^-1", "x").eval(0).value, 0.5);
}

TEST(Parse, WhitespaceAndExponents) {
  EXPECT_TRUE(parse_expr("  x*\t2.5e-1 ", "x").structurally_equal(X() * N(0.25)));
  EXPECT_EQ(parse_expr(".5", "x").eval(0).value, 0.5);
}

TEST(Parse, Errors) {
  EXPECT_THROW(parse_expr("", "x"), ParseError);
  try {
    parse_expr("y+1", "x");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.kind(), ParseErrorKind::WrongVariable);
    EXPECT_EQ(e.offset(), 0u);
  }
  try {
    parse_expr("x + foo(x)", "x");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.kind(), ParseErrorKind::UnknownIdentifier);
    EXPECT_EQ(e.offset(), 4u);
  }
  EXPECT_THROW(parse_expr("(x", "x"), ParseError);
  EXPECT_THROW(parse_expr("x)", "x"), ParseError);
  EXPECT_THROW(parse_expr("--x", "x"), ParseError);
  EXPECT_THROW(parse_expr("1e", "x"), ParseError);
  EXPECT_THROW(parse_expr(std::string(5000, '(') + "x" + std::string(5000, ')'), "x"), ParseError);
}

TEST(Eval, Square) { EXPECT_EQ(parse_expr("x^2", "x").eval(3).value, 9.0); }

TEST(Eval, OverflowSignalAndLogForm) {
  const Expr e = parse_expr("exp(abs(x)^3)", "x");
  const EvalResult r = e.eval(10);
  EXPECT_EQ(r.status, EvalStatus::Overflow);
  EXPECT_TRUE(std::isinf(r.value));
  const LogEvalResult l = e.eval_log(10);
  EXPECT_TRUE(l.ok());
  EXPECT_EQ(l.sign, 1);
  EXPECT_NEAR(l.log_abs, 1000.0, 1e-9);
}

TEST(Eval, DomainErrors) {
  EXPECT_EQ(parse_expr("log(x)", "x").eval(-1).status, EvalStatus::DomainError);
  EXPECT_EQ(parse_expr("sqrt(x)", "x").eval(-1).status, EvalStatus::DomainError);
  EXPECT_EQ(parse_expr("x^0.5", "x").eval(-2).status, EvalStatus::DomainError);
  EXPECT_EQ(parse_expr("x^3", "x").eval(-2).value, -8.0);
  EXPECT_EQ(parse_expr("log(x)", "x").eval_log(-1).status, EvalStatus::DomainError);
}

TEST(Eval, Functions) {
  EXPECT_NEAR(parse_expr("normcdf(x)", "x").eval(1).value, 0.8413447460685429, 1e-15);
  EXPECT_NEAR(parse_expr("erf(x)", "x").eval(0.5).value, std::erf(0.5), 1e-16);
  EXPECT_EQ(parse_expr("abs(x)", "x").eval(-4).value, 4.0);
  EXPECT_NEAR(parse_expr("2*normcdf(1/sqrt(t))-1", "t").eval(1).value, 0.6826894921370859, 1e-15);
}

TEST(EvalLog, ProductsAndTails) {
  // exp(x^2) * exp(-x^2/(2s)) overflows term by term but not in log form.
  const Expr e = parse_expr("exp(x^2)^2*exp(-x^2/0.6)", "x");
  const LogEvalResult l = e.eval_log(40.0);
  EXPECT_TRUE(l.ok());
  EXPECT_NEAR(l.log_abs, 2 * 1600.0 - 1600.0 / 0.6, 1e-9 * 1600);
  const LogEvalResult c = parse_expr("normcdf(x)", "x").eval_log(-40.0);
  // log Phi(-40) ~ -800 - log(40 sqrt(2 pi))
  EXPECT_NEAR(c.log_abs, -800.0 - std::log(40.0 * std::sqrt(2 * M_PI)) + std::log1p(-1.0 / 1600 + 3.0 / 2560000),
              1e-6);
}

TEST(Compose, Substitution) {
  const Expr g = parse_expr("x^2+1", "x");
  const Expr shifted = g.compose(parse_expr("x+2", "x"));
  EXPECT_EQ(shifted.eval(1).value, 10.0);
}

TEST(RoundTrip, RandomGrammarExpressions) {
  std::mt19937_64 rng(2024);
  for (int i = 0; i < 1000; ++i) {
    const std::string src = oracle::random_expression(rng, "x", 5);
    const Expr e = parse_expr(src, "x");
    const std::string printed = e.to_string();
    const Expr again = parse_expr(printed, "x");
    ASSERT_TRUE(e.structurally_equal(again)) << src << " -> " << printed;
    EXPECT_EQ(again.to_string(), printed);
  }
}

TEST(EvalLog, AgreesWithLogOfEval) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> xs(-5.0, 5.0);
  int checked = 0;
  for (int i = 0; i < 1000; ++i) {
    const Expr e = parse_expr(oracle::random_expression(rng, "x", 4), "x");
    for (int j = 0; j < 5; ++j) {
      const double x = xs(rng);
      const EvalResult r = e.eval(x);
      if (!r.ok() || !(r.value > 0.0) || !std::isnormal(r.value)) continue;
      const LogEvalResult l = e.eval_log(x);
      ASSERT_TRUE(l.ok());
      ASSERT_EQ(l.sign, 1);
      ASSERT_NEAR(l.log_abs, std::log(r.value), 1e-9 * std::max(1.0, std::abs(std::log(r.value))));
      ++checked;
    }
  }
  EXPECT_GT(checked, 1000);
}

// Products of huge and tiny factors: the structural log path must agree with
// the exact log where the direct value is out of range.
TEST(EvalLog, StructuralPathMatchesAnalyticLog) {
  const Expr e = parse_expr("exp(abs(x)^3)*exp(-x^2/2)/sqrt(2*3.141592653589793)", "x");
  for (double x : {5.0, 10.0, 20.0, 50.0}) {
    const double expect = std::abs(x * x * x) - 0.5 * x * x - 0.5 * std::log(2 * M_PI);
    EXPECT_NEAR(e.eval_log(x).log_abs, expect, 1e-9 * std::max(1.0, std::abs(expect))) << x;
  }
}

TEST(Fuzz, RandomBytesNeverCrash) {
  std::mt19937_64 rng(99);
  int accepted = 0;
  for (int i = 0; i < 10000; ++i) {
    const std::string s = oracle::random_bytes(rng, 24);
    bool parsed = false;
    try {
      const Expr e = parse_expr(s, "x");
      (void)e.eval(0.7);
      (void)e.eval_log(0.7);
      parsed = true;
      ++accepted;
    } catch (const ParseError&) {
    }
    ASSERT_EQ(parsed, Recognizer(s, "x").accepts()) << "input: '" << s << "'";
  }
  EXPECT_GT(accepted, 0);
}
