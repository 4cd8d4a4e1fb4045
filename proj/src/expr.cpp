#include "degdiff/expr.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>

namespace degdiff {

namespace {

// Dual arithmetic: product/chain rule is exact.
inline Dual operator+(Dual a, Dual b) { return {a.v + b.v, a.d + b.d}; }
inline Dual operator-(Dual a, Dual b) { return {a.v - b.v, a.d - b.d}; }
inline Dual operator-(Dual a) { return {-a.v, -a.d}; }
inline Dual operator*(Dual a, Dual b) { return {a.v * b.v, a.v * b.d + a.d * b.v}; }
inline Dual operator/(Dual a, Dual b) {
  if (b.v == 0.0) throw EvalDomainError("division by zero");
  return {a.v / b.v, (a.d * b.v - a.v * b.d) / (b.v * b.v)};
}

inline double dval(double x) { return x; }
inline double dval(Dual x) { return x.v; }

template <class T>
T from_const(double c);
template <>
double from_const<double>(double c) { return c; }
template <>
Dual from_const<Dual>(double c) { return {c, 0.0}; }

inline double check_div(double a, double b) {
  if (b == 0.0) throw EvalDomainError("division by zero");
  return a / b;
}

template <class T>
T pow_int(T base, int n) {
  if (n == 0) return from_const<T>(1.0);
  bool invert = n < 0;
  unsigned k = invert ? static_cast<unsigned>(-(static_cast<long long>(n))) : static_cast<unsigned>(n);
  T acc = from_const<T>(1.0);
  T b = base;
  while (k) {
    if (k & 1u) acc = acc * b;
    b = b * b;
    k >>= 1;
  }
  if (invert) {
    if (dval(acc) == 0.0) throw EvalDomainError("zero raised to a negative power");
    return from_const<T>(1.0) / acc;
  }
  return acc;
}
template <>
double pow_int<double>(double base, int n) {
  if (n == 0) return 1.0;
  bool invert = n < 0;
  unsigned k = invert ? static_cast<unsigned>(-(static_cast<long long>(n))) : static_cast<unsigned>(n);
  double acc = 1.0, b = base;
  while (k) {
    if (k & 1u) acc *= b;
    b *= b;
    k >>= 1;
  }
  if (invert) return check_div(1.0, acc);
  return acc;
}

inline double f_exp(double x) { return std::exp(x); }
inline Dual f_exp(Dual x) {
  const double e = std::exp(x.v);
  return {e, e * x.d};
}
inline double f_log(double x) {
  if (x <= 0.0) throw EvalDomainError("log of non-positive value");
  return std::log(x);
}
inline Dual f_log(Dual x) {
  if (x.v <= 0.0) throw EvalDomainError("log of non-positive value");
  return {std::log(x.v), x.d / x.v};
}
inline double f_sin(double x) { return std::sin(x); }
inline Dual f_sin(Dual x) { return {std::sin(x.v), std::cos(x.v) * x.d}; }
inline double f_cos(double x) { return std::cos(x); }
inline Dual f_cos(Dual x) { return {std::cos(x.v), -std::sin(x.v) * x.d}; }
inline double f_sqrt(double x) {
  if (x < 0.0) throw EvalDomainError("sqrt of negative value");
  return std::sqrt(x);
}
inline Dual f_sqrt(Dual x) {
  if (x.v < 0.0) throw EvalDomainError("sqrt of negative value");
  if (x.v == 0.0) throw EvalDomainError("sqrt derivative at zero");
  const double r = std::sqrt(x.v);
  return {r, x.d / (2.0 * r)};
}
inline double f_abs(double x) { return std::abs(x); }
inline Dual f_abs(Dual x) {
  const double s = x.v > 0.0 ? 1.0 : (x.v < 0.0 ? -1.0 : 0.0);
  return {std::abs(x.v), s * x.d};
}

}  // namespace

class Parser {
 public:
  Parser(std::string_view text, int arity) : s_(text), arity_(arity) {}

  Expr run() {
    Expr e;
    e.arity_ = arity_;
    nodes_ = &e.nodes_;
    e.root_ = parse_expr();
    skip_ws();
    if (pos_ != s_.size()) fail_syntax(pos_, "unexpected trailing input");
    e.has_abs_ = has_abs_;
    return e;
  }

 private:
  int make(auto op, int a = -1, int b = -1, int ivalue = 0, double value = 0.0) {
    nodes_->push_back({op, a, b, ivalue, value});
    return static_cast<int>(nodes_->size()) - 1;
  }

  void skip_ws() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }

  bool eat(char c) {
    skip_ws();
    if (pos_ < s_.size() && s_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  [[noreturn]] void fail_syntax(size_t at, const std::string& what) {
    throw ParseError(ParseErrorKind::syntax, at, "syntax error at offset " + std::to_string(at) + ": " + what);
  }

  int parse_expr() {
    int lhs = parse_term();
    for (;;) {
      skip_ws();
      if (pos_ < s_.size() && (s_[pos_] == '+' || s_[pos_] == '-')) {
        const char op = s_[pos_++];
        const int rhs = parse_term();
        lhs = make(op == '+' ? ExprOp::add : ExprOp::sub, lhs, rhs);
      } else {
        return lhs;
      }
    }
  }

  int parse_term() {
    int lhs = parse_factor();
    for (;;) {
      skip_ws();
      if (pos_ < s_.size() && (s_[pos_] == '*' || s_[pos_] == '/')) {
        const char op = s_[pos_++];
        const int rhs = parse_factor();
        lhs = make(op == '*' ? ExprOp::mul : ExprOp::div, lhs, rhs);
      } else {
        return lhs;
      }
    }
  }

  // '^' binds tighter than unary minus: -x1^2 == -(x1^2).
  int parse_factor() {
    skip_ws();
    if (pos_ < s_.size() && s_[pos_] == '-') {
      ++pos_;
      const int inner = parse_factor();
      return make(ExprOp::neg, inner);
    }
    int base = parse_atom();
    skip_ws();
    if (pos_ < s_.size() && s_[pos_] == '^') {
      ++pos_;
      const int expo = parse_int_literal();
      base = make(ExprOp::pow_int, base, -1, expo);
    }
    return base;
  }

  int parse_int_literal() {
    skip_ws();
    const size_t start = pos_;
    bool neg = false;
    if (pos_ < s_.size() && s_[pos_] == '-') {
      neg = true;
      ++pos_;
    }
    if (pos_ >= s_.size() || !std::isdigit(static_cast<unsigned char>(s_[pos_])))
      fail_syntax(pos_, "expected integer exponent");
    long long v = 0;
    while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) {
      v = v * 10 + (s_[pos_] - '0');
      if (v > 1000000) fail_syntax(start, "exponent too large");
      ++pos_;
    }
    return static_cast<int>(neg ? -v : v);
  }

  int parse_atom() {
    skip_ws();
    if (pos_ >= s_.size()) fail_syntax(pos_, "expected expression");
    const char c = s_[pos_];
    if (c == '(') {
      ++pos_;
      const int inner = parse_expr();
      if (!eat(')')) fail_syntax(pos_, "expected ')'");
      return inner;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return parse_number();
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return parse_identifier();
    fail_syntax(pos_, std::string("unexpected character '") + c + "'");
  }

  int parse_number() {
    const size_t start = pos_;
    while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    if (pos_ < s_.size() && s_[pos_] == '.') {
      ++pos_;
      while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    }
    if (pos_ < s_.size() && (s_[pos_] == 'e' || s_[pos_] == 'E')) {
      size_t save = pos_;
      ++pos_;
      if (pos_ < s_.size() && (s_[pos_] == '+' || s_[pos_] == '-')) ++pos_;
      if (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) {
        while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) ++pos_;
      } else {
        pos_ = save;  // 'e' belongs to something else; not part of the number
      }
    }
    if (pos_ == start || (pos_ == start + 1 && s_[start] == '.')) fail_syntax(start, "malformed number");
    const std::string tok(s_.substr(start, pos_ - start));
    return make(ExprOp::constant, -1, -1, 0, std::strtod(tok.c_str(), nullptr));
  }

  int parse_identifier() {
    const size_t start = pos_;
    while (pos_ < s_.size() &&
           (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_'))
      ++pos_;
    const std::string_view name = s_.substr(start, pos_ - start);

    // Variables: 'x' followed directly by a 1-based index.
    if (name.size() >= 2 && name[0] == 'x' &&
        std::all_of(name.begin() + 1, name.end(), [](char ch) { return std::isdigit(static_cast<unsigned char>(ch)); })) {
      long long idx = 0;
      for (size_t i = 1; i < name.size(); ++i) idx = idx * 10 + (name[i] - '0');
      if (idx < 1 || idx > arity_)
        throw ParseError(ParseErrorKind::bad_var_index, start,
                         "variable x" + std::to_string(idx) + " at offset " + std::to_string(start) +
                             " exceeds arity " + std::to_string(arity_));
      return make(ExprOp::var, -1, -1, static_cast<int>(idx - 1));
    }

    ExprOp fop;
    if (name == "exp") fop = ExprOp::exp;
    else if (name == "log") fop = ExprOp::log;
    else if (name == "sin") fop = ExprOp::sin;
    else if (name == "cos") fop = ExprOp::cos;
    else if (name == "sqrt") fop = ExprOp::sqrt;
    else if (name == "abs") fop = ExprOp::abs;
    else
      throw ParseError(ParseErrorKind::unknown_identifier, start,
                       "unknown identifier '" + std::string(name) + "' at offset " + std::to_string(start));
    if (fop == ExprOp::abs) has_abs_ = true;
    if (!eat('(')) fail_syntax(pos_, "expected '(' after function name");
    const int arg = parse_expr();
    if (!eat(')')) fail_syntax(pos_, "expected ')'");
    return make(fop, arg);
  }

  // The node Op enum lives inside Expr; aliased here for readability.
  using ExprOp = decltype(Expr::Node::op);

  std::string_view s_;
  int arity_;
  size_t pos_ = 0;
  bool has_abs_ = false;
  std::vector<Expr::Node>* nodes_ = nullptr;
};

Expr Expr::parse(std::string_view text, int arity) {
  if (text.empty()) throw ParseError(ParseErrorKind::syntax, 0, "empty expression");
  if (arity < 0) throw std::invalid_argument("negative arity");
  return Parser(text, arity).run();
}

template <class T>
T Expr::eval_node(int idx, std::span<const double> x, int wrt) const {
  const Node& n = nodes_[idx];
  switch (n.op) {
    case Op::constant:
      return from_const<T>(n.value);
    case Op::var:
      if constexpr (std::is_same_v<T, Dual>)
        return Dual{x[n.ivalue], n.ivalue == wrt ? 1.0 : 0.0};
      else
        return x[n.ivalue];
    case Op::add:
      return eval_node<T>(n.a, x, wrt) + eval_node<T>(n.b, x, wrt);
    case Op::sub:
      return eval_node<T>(n.a, x, wrt) - eval_node<T>(n.b, x, wrt);
    case Op::mul:
      return eval_node<T>(n.a, x, wrt) * eval_node<T>(n.b, x, wrt);
    case Op::div: {
      if constexpr (std::is_same_v<T, Dual>)
        return eval_node<T>(n.a, x, wrt) / eval_node<T>(n.b, x, wrt);
      else
        return check_div(eval_node<double>(n.a, x, wrt), eval_node<double>(n.b, x, wrt));
    }
    case Op::neg:
      return -eval_node<T>(n.a, x, wrt);
    case Op::pow_int:
      return pow_int<T>(eval_node<T>(n.a, x, wrt), n.ivalue);
    case Op::exp:
      return f_exp(eval_node<T>(n.a, x, wrt));
    case Op::log:
      return f_log(eval_node<T>(n.a, x, wrt));
    case Op::sin:
      return f_sin(eval_node<T>(n.a, x, wrt));
    case Op::cos:
      return f_cos(eval_node<T>(n.a, x, wrt));
    case Op::sqrt:
      return f_sqrt(eval_node<T>(n.a, x, wrt));
    case Op::abs:
      return f_abs(eval_node<T>(n.a, x, wrt));
  }
  throw std::logic_error("unreachable");
}

double Expr::eval(std::span<const double> x) const {
  if (static_cast<int>(x.size()) != arity_) throw std::invalid_argument("eval: point dimension != arity");
  return eval_node<double>(root_, x, -1);
}

Dual Expr::eval_dual(std::span<const double> x, int wrt) const {
  if (static_cast<int>(x.size()) != arity_) throw std::invalid_argument("eval_dual: point dimension != arity");
  return eval_node<Dual>(root_, x, wrt);
}

Vec Expr::grad(std::span<const double> x) const {
  Vec g(arity_);
  for (int i = 0; i < arity_; ++i) g[i] = eval_dual(x, i).d;
  return g;
}

namespace {
// precedence levels for printing: 0 add/sub, 1 mul/div, 2 unary minus, 3 pow/atom
constexpr int kPrecAdd = 0, kPrecMul = 1, kPrecNeg = 2, kPrecPow = 3;
}  // namespace

void Expr::print_node(int idx, std::string& out, int parent_prec) const {
  const Node& n = nodes_[idx];
  auto wrap = [&](int prec, auto&& body) {
    const bool paren = prec < parent_prec;
    if (paren) out += '(';
    body();
    if (paren) out += ')';
  };
  switch (n.op) {
    case Op::constant: {
      char buf[32];
      snprintf(buf, sizeof(buf), "%.17g", n.value);
      if (n.value < 0) {
        out += '(';
        out += buf;
        out += ')';
      } else {
        out += buf;
      }
      break;
    }
    case Op::var:
      out += "x" + std::to_string(n.ivalue + 1);
      break;
    case Op::add:
      wrap(kPrecAdd, [&] {
        print_node(n.a, out, kPrecAdd);
        out += " + ";
        print_node(n.b, out, kPrecMul);
      });
      break;
    case Op::sub:
      wrap(kPrecAdd, [&] {
        print_node(n.a, out, kPrecAdd);
        out += " - ";
        print_node(n.b, out, kPrecMul);
      });
      break;
    case Op::mul:
      wrap(kPrecMul, [&] {
        print_node(n.a, out, kPrecMul);
        out += "*";
        print_node(n.b, out, kPrecNeg);
      });
      break;
    case Op::div:
      wrap(kPrecMul, [&] {
        print_node(n.a, out, kPrecMul);
        out += "/";
        print_node(n.b, out, kPrecNeg);
      });
      break;
    case Op::neg:
      wrap(kPrecNeg, [&] {
        out += "-";
        print_node(n.a, out, kPrecNeg);
      });
      break;
    case Op::pow_int:
      wrap(kPrecPow, [&] {
        print_node(n.a, out, kPrecPow + 1);  // force parens around non-atoms
        out += "^";
        out += std::to_string(n.ivalue);
      });
      break;
    case Op::exp:
    case Op::log:
    case Op::sin:
    case Op::cos:
    case Op::sqrt:
    case Op::abs: {
      const char* name = n.op == Op::exp ? "exp"
                         : n.op == Op::log ? "log"
                         : n.op == Op::sin ? "sin"
                         : n.op == Op::cos ? "cos"
                         : n.op == Op::sqrt ? "sqrt"
                                            : "abs";
      out += name;
      out += '(';
      print_node(n.a, out, kPrecAdd);
      out += ')';
      break;
    }
  }
}

std::string Expr::to_string() const {
  std::string out;
  print_node(root_, out, kPrecAdd);
  return out;
}

HField hfield_from_name(std::string_view name) {
  if (name == "X") return HField::X;
  if (name == "Y") return HField::Y;
  if (name == "Xhat") return HField::Xhat;
  if (name == "Yhat") return HField::Yhat;
  throw std::invalid_argument("unknown Heisenberg field: " + std::string(name));
}

double heisenberg_field_apply(const Expr& f, std::span<const double> p, HField field) {
  if (f.arity() != 3) throw std::invalid_argument("heisenberg_field_apply: arity must be 3");
  const double x = p[0], y = p[1];
  double coef[3] = {0.0, 0.0, 0.0};
  switch (field) {
    case HField::X:
      coef[0] = 1.0; coef[1] = 0.0; coef[2] = -y / 2.0;
      break;
    case HField::Y:
      coef[0] = 0.0; coef[1] = 1.0; coef[2] = x / 2.0;
      break;
    case HField::Xhat:
      coef[0] = 1.0; coef[1] = 0.0; coef[2] = y / 2.0;
      break;
    case HField::Yhat:
      coef[0] = 0.0; coef[1] = 1.0; coef[2] = -x / 2.0;
      break;
  }
  const Vec g = f.grad(p);
  return coef[0] * g[0] + coef[1] * g[1] + coef[2] * g[2];
}

}  // namespace degdiff
