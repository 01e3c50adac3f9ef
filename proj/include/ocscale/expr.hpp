#pragma once

#include <cstddef>
#include <map>
#include <memory>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace ocscale {

/// Node kinds of a scalar expression tree.
///
/// `Sign` never comes out of the parser; it only appears in derivatives of
/// `abs` (with sign(0) = 0).
enum class Op {
  Const,
  Var,
  Neg,
  Add,
  Sub,
  Mul,
  Div,
  Pow,
  Sin,
  Cos,
  Tan,
  Exp,
  Log,
  Sqrt,
  Abs,
  Atan,
  Atan2,
  Sign,
};

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& message, std::size_t offset);
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

class UnboundVariable : public std::runtime_error {
 public:
  explicit UnboundVariable(const std::string& name);
  const std::string& name() const { return name_; }

 private:
  std::string name_;
};

using Env = std::unordered_map<std::string, double>;

/// Result of a checked evaluation. `domain_error` is set when a finite
/// input produced a NaN or infinity somewhere in the tree (sqrt(-1),
/// log(0), 1/0, ...).
struct Evaluation {
  double value = 0.0;
  bool domain_error = false;
};

/// Immutable scalar expression. Copies share structure; an Expr can be
/// evaluated from any number of threads.
class Expr {
 public:
  struct Node;

  /// The constant 0.
  Expr();

  static Expr constant(double value);
  static Expr variable(std::string name);
  /// Builds a node exactly as given, without folding. Used by the parser.
  static Expr make(Op op, Expr a, Expr b = Expr());
  static Expr make_unary(Op op, Expr a);

  Op op() const;
  bool is_constant() const { return op() == Op::Const; }
  bool is_constant(double v) const { return is_constant() && value() == v; }
  double value() const;
  const std::string& name() const;
  /// First operand (unary argument, or left side of a binary node).
  const Expr& lhs() const;
  const Expr& rhs() const;
  std::size_t arity() const;

  double eval(const Env& env) const;
  Evaluation evaluate(const Env& env) const;

  /// Structural equality (same tree, bitwise-equal constants).
  bool same_as(const Expr& other) const;

  std::set<std::string> variables() const;

 private:
  explicit Expr(std::shared_ptr<const Node> node) : node_(std::move(node)) {}
  std::shared_ptr<const Node> node_;
};

struct Expr::Node {
  Op op = Op::Const;
  double value = 0.0;
  std::string name;
  Expr a;
  Expr b;
};

/// Parses the expression grammar:
///   expr    := term (('+'|'-') term)*
///   term    := unary (('*'|'/') unary)*
///   unary   := ('-'|'+') unary | power
///   power   := primary ('^' unary)?
///   primary := number | ident | func '(' args ')' | '(' expr ')'
/// Functions: sin cos tan exp log sqrt abs atan (one argument), atan2 (two).
Expr parse(std::string_view source);

/// Minimal-parenthesis printing; `parse(to_string(e))` rebuilds `e`.
std::string to_string(const Expr& e);

/// Exact symbolic derivative with constant folding.
Expr diff(const Expr& e, const std::string& var);

/// Replaces variables by expressions, folding constants on the way back up.
Expr substitute(const Expr& e, const std::map<std::string, Expr>& replacements);

// Folding constructors. Constant subtrees are evaluated and the additive and
// multiplicative identities (x+0, x*1, x*0, 0/x, x^1, x^0) are dropped.
Expr operator+(const Expr& a, const Expr& b);
Expr operator-(const Expr& a, const Expr& b);
Expr operator*(const Expr& a, const Expr& b);
Expr operator/(const Expr& a, const Expr& b);
Expr operator-(const Expr& a);
Expr pow(const Expr& base, const Expr& exponent);
Expr apply(Op unary, const Expr& a);
Expr atan2(const Expr& y, const Expr& x);

/// Expression compiled against a fixed ordering of variable slots, for the
/// hot loops in the integrator and the residual functions.
class BoundExpr {
 public:
  BoundExpr() = default;
  /// Throws UnboundVariable if `e` uses a name not in `slots`.
  BoundExpr(const Expr& e, const std::vector<std::string>& slots);

  double operator()(std::span<const double> values) const;
  bool is_zero() const { return code_.size() == 1 && code_[0].op == Op::Const && code_[0].value == 0.0; }

 private:
  struct Instr {
    Op op;
    double value;
    std::size_t slot;
  };
  // Postfix program evaluated on a small stack.
  std::vector<Instr> code_;
  std::size_t max_depth_ = 0;
};

}  // namespace ocscale
