#pragma once

#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "degdiff/linalg.hpp"

namespace degdiff {

// Forward-mode dual number; arithmetic carries the exact first derivative.
struct Dual {
  double v = 0.0;
  double d = 0.0;
};

enum class ParseErrorKind { syntax, unknown_identifier, bad_var_index };

class ParseError : public std::runtime_error {
 public:
  ParseError(ParseErrorKind kind, size_t offset, const std::string& msg)
      : std::runtime_error(msg), kind(kind), offset(offset) {}
  ParseErrorKind kind;
  size_t offset;  // 0-based byte offset into the input
};

class EvalDomainError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Parsed scalar test function f: R^k -> R.
// Grammar (documented in the README):
//   expr   := term (('+'|'-') term)*
//   term   := factor (('*'|'/') factor)*
//   factor := '-' factor | atom ('^' integer)?
//   atom   := number | var | func '(' expr ')' | '(' expr ')'
//   var    := 'x' integer   (1-based)
//   func   := exp | log | sin | cos | sqrt | abs
// '^' takes a constant (possibly negative) integer exponent and binds
// tighter than unary minus.
class Expr {
 public:
  static Expr parse(std::string_view text, int arity);

  double eval(std::span<const double> x) const;
  // Value and d/dx_wrt at x.
  Dual eval_dual(std::span<const double> x, int wrt) const;
  Vec grad(std::span<const double> x) const;

  int arity() const { return arity_; }
  bool has_abs() const { return has_abs_; }
  std::string to_string() const;

 private:
  enum class Op : uint8_t { constant, var, add, sub, mul, div, neg, pow_int, exp, log, sin, cos, sqrt, abs };
  struct Node {
    Op op;
    int a = -1;      // left / only child
    int b = -1;      // right child
    int ivalue = 0;  // var index (0-based) or integer exponent
    double value = 0.0;
  };

  template <class T>
  T eval_node(int idx, std::span<const double> x, int wrt) const;

  void print_node(int idx, std::string& out, int parent_prec) const;

  std::vector<Node> nodes_;
  int root_ = -1;
  int arity_ = 0;
  bool has_abs_ = false;

  friend class Parser;
};

enum class HField { X, Y, Xhat, Yhat };
HField hfield_from_name(std::string_view name);

// Directional derivative of f (arity 3) along the Heisenberg field at point p.
double heisenberg_field_apply(const Expr& f, std::span<const double> p, HField field);

}  // namespace degdiff
