#pragma once

// One-variable arithmetic expressions: coefficients a(x), integrands g(x),
// moment functions F(y) and mean targets m(t).
//
// Grammar (whitespace ignored between tokens):
//   expr   := term { ("+"|"-") term }
//   term   := factor { ("*"|"/") factor }
//   factor := ["-"] power
//   power  := atom [ "^" factor ]
//   atom   := NUMBER | VAR | FUNC "(" expr ")" | "(" expr ")"
//   FUNC   := exp | log | abs | sqrt | erf | normcdf

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace slm {

enum class ParseErrorKind { Syntax, UnknownIdentifier, WrongVariable, TooDeep };

class ParseError : public std::invalid_argument {
 public:
  ParseError(ParseErrorKind kind, std::size_t offset, const std::string& what)
      : std::invalid_argument(what), kind_(kind), offset_(offset) {}
  ParseErrorKind kind() const { return kind_; }
  // Byte offset into the source where parsing failed.
  std::size_t offset() const { return offset_; }

 private:
  ParseErrorKind kind_;
  std::size_t offset_;
};

enum class Op { Num, Var, Neg, Add, Sub, Mul, Div, Pow, Exp, Log, Abs, Sqrt, Erf, NormCdf };

enum class EvalStatus { Ok, Overflow, DomainError };

struct EvalResult {
  double value = 0.0;
  EvalStatus status = EvalStatus::Ok;
  bool ok() const { return status == EvalStatus::Ok; }
};

// log|e(v)| with the sign of e(v) (0 when e(v) == 0).
struct LogEvalResult {
  double log_abs = 0.0;
  int sign = 0;
  EvalStatus status = EvalStatus::Ok;
  bool ok() const { return status != EvalStatus::DomainError; }
};

class Expr {
 public:
  struct Node {
    Op op = Op::Num;
    double value = 0.0;
    int lhs = -1;
    int rhs = -1;
  };

  static Expr number(double v, std::string var = "x");
  static Expr variable(std::string var = "x");

  friend Expr operator+(const Expr& a, const Expr& b) { return binary(Op::Add, a, b); }
  friend Expr operator-(const Expr& a, const Expr& b) { return binary(Op::Sub, a, b); }
  friend Expr operator*(const Expr& a, const Expr& b) { return binary(Op::Mul, a, b); }
  friend Expr operator/(const Expr& a, const Expr& b) { return binary(Op::Div, a, b); }
  friend Expr operator-(const Expr& a) { return unary(Op::Neg, a); }
  friend Expr pow(const Expr& a, const Expr& b) { return binary(Op::Pow, a, b); }
  static Expr call(Op fn, const Expr& a) { return unary(fn, a); }

  // Substitute `inner` for the variable.
  Expr compose(const Expr& inner) const;

  EvalResult eval(double v) const;
  LogEvalResult eval_log(double v) const;

  // Fully parenthesised form that re-parses to the same tree.
  std::string to_string() const;

  bool structurally_equal(const Expr& other) const;

  const std::string& var_name() const { return var_; }
  const std::vector<Node>& nodes() const { return nodes_; }
  std::size_t root() const { return nodes_.size() - 1; }

 private:
  friend class Parser;
  Expr() = default;

  static Expr binary(Op op, const Expr& a, const Expr& b);
  static Expr unary(Op op, const Expr& a);
  int append(const Expr& other);

  // Post-order: children always precede their parent; root is last.
  std::vector<Node> nodes_;
  std::string var_;
};

Expr parse_expr(std::string_view source, std::string_view var_name);

const char* op_name(Op op);

}  // namespace slm
