#include "slm/expr.hpp"

#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <limits>

#include "slm/core.hpp"

namespace slm {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr std::size_t kMaxDepth = 200;

bool is_binary(Op op) {
  return op == Op::Add || op == Op::Sub || op == Op::Mul || op == Op::Div || op == Op::Pow;
}

int sign_of(double v) { return v > 0.0 ? 1 : (v < 0.0 ? -1 : 0); }

bool is_integer(double v) { return std::isfinite(v) && std::floor(v) == v; }

// log Phi(u) for any u, using the Mills-ratio expansion deep in the left tail.
double log_normal_cdf(double u) {
  if (u > -37.0) return std::log(normal_cdf(u));
  if (u == -kInf) return -kInf;
  const double u2 = u * u;
  return -0.5 * u2 - 0.91893853320467274178 - std::log(-u) + std::log1p(-1.0 / u2 + 3.0 / (u2 * u2));
}

// Signed log-magnitude pair used by eval_log.
struct SignedLog {
  double la = -kInf;
  int s = 0;

  double value() const { return s == 0 ? 0.0 : s * std::exp(la); }
};

SignedLog from_value(double v) { return SignedLog{std::log(std::abs(v)), sign_of(v)}; }

SignedLog signed_log_add(SignedLog a, SignedLog b) {
  if (a.s == 0) return b;
  if (b.s == 0) return a;
  if (a.la < b.la) std::swap(a, b);
  if (a.la == kInf && b.la == kInf && a.s != b.s) return SignedLog{std::numeric_limits<double>::quiet_NaN(), 0};
  const double d = b.la - a.la;  // <= 0
  if (a.s == b.s) return SignedLog{a.la + std::log1p(std::exp(d)), a.s};
  if (d == 0.0) return SignedLog{-kInf, 0};
  return SignedLog{a.la + std::log1p(-std::exp(d)), a.s};
}

}  // namespace

const char* op_name(Op op) {
  switch (op) {
    case Op::Num: return "num";
    case Op::Var: return "var";
    case Op::Neg: return "neg";
    case Op::Add: return "+";
    case Op::Sub: return "-";
    case Op::Mul: return "*";
    case Op::Div: return "/";
    case Op::Pow: return "^";
    case Op::Exp: return "exp";
    case Op::Log: return "log";
    case Op::Abs: return "abs";
    case Op::Sqrt: return "sqrt";
    case Op::Erf: return "erf";
    case Op::NormCdf: return "normcdf";
  }
  return "?";
}

class Parser {
 public:
  Parser(std::string_view src, std::string_view var) : src_(src), var_(var) {}

  Expr run() {
    if (var_.empty()) throw std::invalid_argument("variable name must be nonempty");
    out_.var_ = std::string(var_);
    skip_ws();
    if (pos_ == src_.size()) fail(ParseErrorKind::Syntax, "empty expression");
    parse_expr(0);
    skip_ws();
    if (pos_ != src_.size()) fail(ParseErrorKind::Syntax, "unexpected trailing input");
    return std::move(out_);
  }

 private:
  [[noreturn]] void fail(ParseErrorKind kind, const std::string& msg) const {
    throw ParseError(kind, pos_, msg + " at offset " + std::to_string(pos_));
  }

  void skip_ws() {
    while (pos_ < src_.size() && (src_[pos_] == ' ' || src_[pos_] == '\t' || src_[pos_] == '\n' || src_[pos_] == '\r'))
      ++pos_;
  }

  bool accept(char c) {
    skip_ws();
    if (pos_ < src_.size() && src_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  void expect(char c) {
    if (!accept(c)) fail(ParseErrorKind::Syntax, std::string("expected '") + c + "'");
  }

  int push(Op op, double value = 0.0, int lhs = -1, int rhs = -1) {
    out_.nodes_.push_back({op, value, lhs, rhs});
    return static_cast<int>(out_.nodes_.size()) - 1;
  }

  void guard(std::size_t depth) const {
    if (depth > kMaxDepth) throw ParseError(ParseErrorKind::TooDeep, pos_, "expression nested too deeply");
  }

  int parse_expr(std::size_t depth) {
    guard(depth);
    int lhs = parse_term(depth + 1);
    for (;;) {
      if (accept('+')) {
        lhs = push(Op::Add, 0.0, lhs, parse_term(depth + 1));
      } else if (accept('-')) {
        lhs = push(Op::Sub, 0.0, lhs, parse_term(depth + 1));
      } else {
        return lhs;
      }
    }
  }

  int parse_term(std::size_t depth) {
    guard(depth);
    int lhs = parse_factor(depth + 1);
    for (;;) {
      if (accept('*')) {
        lhs = push(Op::Mul, 0.0, lhs, parse_factor(depth + 1));
      } else if (accept('/')) {
        lhs = push(Op::Div, 0.0, lhs, parse_factor(depth + 1));
      } else {
        return lhs;
      }
    }
  }

  int parse_factor(std::size_t depth) {
    guard(depth);
    if (accept('-')) return push(Op::Neg, 0.0, parse_power(depth + 1));
    return parse_power(depth + 1);
  }

  int parse_power(std::size_t depth) {
    guard(depth);
    const int base = parse_atom(depth + 1);
    if (accept('^')) return push(Op::Pow, 0.0, base, parse_factor(depth + 1));
    return base;
  }

  int parse_atom(std::size_t depth) {
    guard(depth);
    skip_ws();
    if (pos_ >= src_.size()) fail(ParseErrorKind::Syntax, "unexpected end of input");
    const char c = src_[pos_];
    if (c == '(') {
      ++pos_;
      const int inner = parse_expr(depth + 1);
      expect(')');
      return inner;
    }
    if ((c >= '0' && c <= '9') || c == '.') return parse_number();
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      const std::size_t start = pos_;
      while (pos_ < src_.size() &&
             (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_'))
        ++pos_;
      const std::string_view ident = src_.substr(start, pos_ - start);
      if (ident == var_) return push(Op::Var);
      static constexpr std::array<std::pair<std::string_view, Op>, 6> kFuncs{{{"exp", Op::Exp},
                                                                             {"log", Op::Log},
                                                                             {"abs", Op::Abs},
                                                                             {"sqrt", Op::Sqrt},
                                                                             {"erf", Op::Erf},
                                                                             {"normcdf", Op::NormCdf}}};
      for (const auto& [name, op] : kFuncs) {
        if (ident == name) {
          expect('(');
          const int arg = parse_expr(depth + 1);
          expect(')');
          return push(op, 0.0, arg);
        }
      }
      pos_ = start;
      if (ident.size() == 1) {
        fail(ParseErrorKind::WrongVariable,
             "variable '" + std::string(ident) + "' used, expected '" + std::string(var_) + "'");
      }
      throw ParseError(ParseErrorKind::UnknownIdentifier, start,
                       "unknown identifier '" + std::string(ident) + "' at offset " + std::to_string(start));
    }
    fail(ParseErrorKind::Syntax, std::string("unexpected character '") + c + "'");
  }

  int parse_number() {
    const std::size_t start = pos_;
    auto digits = [&] {
      const std::size_t s = pos_;
      while (pos_ < src_.size() && src_[pos_] >= '0' && src_[pos_] <= '9') ++pos_;
      return pos_ - s;
    };
    std::size_t n = digits();
    if (pos_ < src_.size() && src_[pos_] == '.') {
      ++pos_;
      n += digits();
    }
    if (n == 0) {
      pos_ = start;
      fail(ParseErrorKind::Syntax, "malformed number");
    }
    if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
      const std::size_t save = pos_;
      ++pos_;
      if (pos_ < src_.size() && (src_[pos_] == '+' || src_[pos_] == '-')) ++pos_;
      if (digits() == 0) {
        pos_ = save;
        fail(ParseErrorKind::Syntax, "malformed exponent");
      }
    }
    double value = 0.0;
    const char* first = src_.data() + start;
    const char* last = src_.data() + pos_;
    // from_chars rejects a leading '.', so give it a zero to lean on.
    std::string buf;
    if (*first == '.') {
      buf = "0" + std::string(first, last);
      first = buf.data();
      last = buf.data() + buf.size();
    }
    const auto res = std::from_chars(first, last, value);
    if (res.ec == std::errc::result_out_of_range) {
      value = kInf;
    } else if (res.ec != std::errc() || res.ptr != last) {
      pos_ = start;
      fail(ParseErrorKind::Syntax, "malformed number");
    }
    return push(Op::Num, value);
  }

  std::string_view src_;
  std::string_view var_;
  std::size_t pos_ = 0;
  Expr out_;
};

Expr parse_expr(std::string_view source, std::string_view var_name) { return Parser(source, var_name).run(); }

Expr Expr::number(double v, std::string var) {
  Expr e;
  e.var_ = std::move(var);
  if (std::signbit(v) && v != 0.0) {
    e.nodes_.push_back({Op::Num, -v, -1, -1});
    e.nodes_.push_back({Op::Neg, 0.0, 0, -1});
  } else {
    e.nodes_.push_back({Op::Num, v, -1, -1});
  }
  return e;
}

Expr Expr::variable(std::string var) {
  Expr e;
  e.var_ = std::move(var);
  e.nodes_.push_back({Op::Var, 0.0, -1, -1});
  return e;
}

int Expr::append(const Expr& other) {
  const int offset = static_cast<int>(nodes_.size());
  for (Node n : other.nodes_) {
    if (n.lhs >= 0) n.lhs += offset;
    if (n.rhs >= 0) n.rhs += offset;
    nodes_.push_back(n);
  }
  return static_cast<int>(nodes_.size()) - 1;
}

Expr Expr::binary(Op op, const Expr& a, const Expr& b) {
  Expr e;
  e.var_ = a.var_;
  const int l = e.append(a);
  const int r = e.append(b);
  e.nodes_.push_back({op, 0.0, l, r});
  return e;
}

Expr Expr::unary(Op op, const Expr& a) {
  Expr e;
  e.var_ = a.var_;
  const int c = e.append(a);
  e.nodes_.push_back({op, 0.0, c, -1});
  return e;
}

Expr Expr::compose(const Expr& inner) const {
  Expr e;
  e.var_ = inner.var_;
  std::vector<int> remap(nodes_.size());
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    Node n = nodes_[i];
    if (n.op == Op::Var) {
      remap[i] = e.append(inner);
      continue;
    }
    if (n.lhs >= 0) n.lhs = remap[n.lhs];
    if (n.rhs >= 0) n.rhs = remap[n.rhs];
    e.nodes_.push_back(n);
    remap[i] = static_cast<int>(e.nodes_.size()) - 1;
  }
  return e;
}

EvalResult Expr::eval(double v) const {
  constexpr std::size_t kInline = 64;
  std::array<double, kInline> inline_buf;
  std::vector<double> heap_buf;
  double* val = inline_buf.data();
  if (nodes_.size() > kInline) {
    heap_buf.resize(nodes_.size());
    val = heap_buf.data();
  }
  bool domain = false;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const Node& n = nodes_[i];
    const double a = n.lhs >= 0 ? val[n.lhs] : 0.0;
    const double b = n.rhs >= 0 ? val[n.rhs] : 0.0;
    double r = 0.0;
    switch (n.op) {
      case Op::Num: r = n.value; break;
      case Op::Var: r = v; break;
      case Op::Neg: r = -a; break;
      case Op::Add: r = a + b; break;
      case Op::Sub: r = a - b; break;
      case Op::Mul: r = a * b; break;
      case Op::Div: r = a / b; break;
      case Op::Pow:
        if (a < 0.0 && !is_integer(b)) {
          domain = true;
          r = std::numeric_limits<double>::quiet_NaN();
        } else {
          r = std::pow(a, b);
        }
        break;
      case Op::Exp: r = std::exp(a); break;
      case Op::Log:
        if (a < 0.0) domain = true;
        r = std::log(a);
        break;
      case Op::Abs: r = std::abs(a); break;
      case Op::Sqrt:
        if (a < 0.0) domain = true;
        r = std::sqrt(a);
        break;
      case Op::Erf: r = std::erf(a); break;
      case Op::NormCdf: r = normal_cdf(a); break;
    }
    if (std::isnan(r)) domain = true;
    val[i] = r;
  }
  const double out = val[nodes_.size() - 1];
  if (domain) return {std::numeric_limits<double>::quiet_NaN(), EvalStatus::DomainError};
  if (!std::isfinite(out)) return {out, EvalStatus::Overflow};
  return {out, EvalStatus::Ok};
}

LogEvalResult Expr::eval_log(double v) const {
  std::vector<double> direct(nodes_.size());
  std::vector<SignedLog> lg(nodes_.size());
  bool domain = false;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const Node& n = nodes_[i];
    const double a = n.lhs >= 0 ? direct[n.lhs] : 0.0;
    const double b = n.rhs >= 0 ? direct[n.rhs] : 0.0;
    const SignedLog la = n.lhs >= 0 ? lg[n.lhs] : SignedLog{};
    const SignedLog lb = n.rhs >= 0 ? lg[n.rhs] : SignedLog{};

    // Direct IEEE value first; the structural log form is used when the
    // direct value over- or underflowed.
    double d = 0.0;
    switch (n.op) {
      case Op::Num: d = n.value; break;
      case Op::Var: d = v; break;
      case Op::Neg: d = -a; break;
      case Op::Add: d = a + b; break;
      case Op::Sub: d = a - b; break;
      case Op::Mul: d = a * b; break;
      case Op::Div: d = a / b; break;
      case Op::Pow: d = (a < 0.0 && !is_integer(b)) ? std::numeric_limits<double>::quiet_NaN() : std::pow(a, b); break;
      case Op::Exp: d = std::exp(a); break;
      case Op::Log: d = std::log(a); break;
      case Op::Abs: d = std::abs(a); break;
      case Op::Sqrt: d = std::sqrt(a); break;
      case Op::Erf: d = std::erf(a); break;
      case Op::NormCdf: d = normal_cdf(a); break;
    }
    direct[i] = d;

    SignedLog r;
    if (std::isnormal(d) || n.op == Op::Num || n.op == Op::Var) {
      r = from_value(d);
    } else {
      switch (n.op) {
        case Op::Num:
        case Op::Var: break;
        case Op::Neg: r = {la.la, -la.s}; break;
        case Op::Add: r = signed_log_add(la, lb); break;
        case Op::Sub: r = signed_log_add(la, {lb.la, -lb.s}); break;
        case Op::Mul:
          r = (la.s == 0 || lb.s == 0) ? SignedLog{} : SignedLog{la.la + lb.la, la.s * lb.s};
          break;
        case Op::Div:
          if (lb.s == 0) {
            if (la.s == 0) domain = true;
            r = {kInf, la.s};
          } else {
            r = la.s == 0 ? SignedLog{} : SignedLog{la.la - lb.la, la.s * lb.s};
          }
          break;
        case Op::Pow: {
          const double expo = lb.value();
          if (la.s == 0) {
            r = expo > 0.0 ? SignedLog{} : (expo < 0.0 ? SignedLog{kInf, 1} : SignedLog{0.0, 1});
          } else if (la.s < 0 && !is_integer(expo)) {
            domain = true;
          } else {
            const bool odd = la.s < 0 && std::fmod(std::abs(expo), 2.0) == 1.0;
            r = {expo * la.la, odd ? -1 : 1};
          }
          break;
        }
        case Op::Exp: {
          const double u = la.value();
          r = u == -kInf ? SignedLog{} : SignedLog{u, 1};
          break;
        }
        case Op::Log:
          if (la.s < 0) {
            domain = true;
          } else if (la.s == 0) {
            r = {kInf, -1};
          } else {
            r = from_value(la.la);
          }
          break;
        case Op::Abs: r = {la.la, la.s == 0 ? 0 : 1}; break;
        case Op::Sqrt:
          if (la.s < 0) domain = true;
          r = {0.5 * la.la, la.s};
          break;
        case Op::Erf:
          if (la.la < -700.0) {
            r = {la.la + std::log(1.12837916709551257390), la.s};
          } else {
            r = from_value(std::erf(la.value()));
          }
          break;
        case Op::NormCdf: {
          const double u = la.value();
          const double l = log_normal_cdf(u);
          r = l == -kInf ? SignedLog{} : SignedLog{l, 1};
          break;
        }
      }
    }
    if (std::isnan(r.la)) domain = true;
    lg[i] = r;
  }
  const SignedLog out = lg.back();
  if (domain) return {std::numeric_limits<double>::quiet_NaN(), 0, EvalStatus::DomainError};
  const double d = direct.back();
  return {out.la, out.s, std::isfinite(d) ? EvalStatus::Ok : EvalStatus::Overflow};
}

namespace {

void print_node(const Expr& e, int idx, std::string& out) {
  const auto& n = e.nodes()[idx];
  switch (n.op) {
    case Op::Num: out += format_double(n.value); return;
    case Op::Var: out += e.var_name(); return;
    case Op::Neg:
      out += "(-";
      print_node(e, n.lhs, out);
      out += ")";
      return;
    default: break;
  }
  if (is_binary(n.op)) {
    out += "(";
    print_node(e, n.lhs, out);
    out += op_name(n.op);
    print_node(e, n.rhs, out);
    out += ")";
    return;
  }
  out += op_name(n.op);
  out += "(";
  print_node(e, n.lhs, out);
  out += ")";
}

bool equal_nodes(const Expr& a, int ia, const Expr& b, int ib) {
  const auto& na = a.nodes()[ia];
  const auto& nb = b.nodes()[ib];
  if (na.op != nb.op) return false;
  if (na.op == Op::Num) return na.value == nb.value;
  if (na.op == Op::Var) return true;
  if (!equal_nodes(a, na.lhs, b, nb.lhs)) return false;
  if (is_binary(na.op)) return equal_nodes(a, na.rhs, b, nb.rhs);
  return true;
}

}  // namespace

std::string Expr::to_string() const {
  std::string out;
  print_node(*this, static_cast<int>(root()), out);
  return out;
}

bool Expr::structurally_equal(const Expr& other) const {
  return equal_nodes(*this, static_cast<int>(root()), other, static_cast<int>(other.root()));
}

}  // namespace slm
