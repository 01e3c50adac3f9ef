#include "ocscale/expr.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <cmath>
#include <functional>

namespace ocscale {

ParseError::ParseError(const std::string& message, std::size_t offset)
    : std::runtime_error(message + " at byte " + std::to_string(offset)), offset_(offset) {}

UnboundVariable::UnboundVariable(const std::string& name)
    : std::runtime_error("unbound variable '" + name + "'"), name_(name) {}

namespace {

bool is_binary(Op op) {
  switch (op) {
    case Op::Add:
    case Op::Sub:
    case Op::Mul:
    case Op::Div:
    case Op::Pow:
    case Op::Atan2:
      return true;
    default:
      return false;
  }
}

bool is_leaf(Op op) { return op == Op::Const || op == Op::Var; }

double apply_unary(Op op, double a) {
  switch (op) {
    case Op::Neg:
      return -a;
    case Op::Sin:
      return std::sin(a);
    case Op::Cos:
      return std::cos(a);
    case Op::Tan:
      return std::tan(a);
    case Op::Exp:
      return std::exp(a);
    case Op::Log:
      return std::log(a);
    case Op::Sqrt:
      return std::sqrt(a);
    case Op::Abs:
      return std::fabs(a);
    case Op::Atan:
      return std::atan(a);
    case Op::Sign:
      return a > 0.0 ? 1.0 : (a < 0.0 ? -1.0 : 0.0);
    default:
      throw std::logic_error("apply_unary: not a unary op");
  }
}

double apply_binary(Op op, double a, double b) {
  switch (op) {
    case Op::Add:
      return a + b;
    case Op::Sub:
      return a - b;
    case Op::Mul:
      return a * b;
    case Op::Div:
      return a / b;
    case Op::Pow:
      return std::pow(a, b);
    case Op::Atan2:
      return std::atan2(a, b);
    default:
      throw std::logic_error("apply_binary: not a binary op");
  }
}

double eval_node(const Expr& e, const Env& env, bool& domain_error) {
  switch (e.op()) {
    case Op::Const:
      return e.value();
    case Op::Var: {
      auto it = env.find(e.name());
      if (it == env.end()) throw UnboundVariable(e.name());
      return it->second;
    }
    default:
      break;
  }
  double result;
  bool finite_inputs;
  if (is_binary(e.op())) {
    const double a = eval_node(e.lhs(), env, domain_error);
    const double b = eval_node(e.rhs(), env, domain_error);
    finite_inputs = std::isfinite(a) && std::isfinite(b);
    result = apply_binary(e.op(), a, b);
  } else {
    const double a = eval_node(e.lhs(), env, domain_error);
    finite_inputs = std::isfinite(a);
    result = apply_unary(e.op(), a);
  }
  if (finite_inputs && !std::isfinite(result)) domain_error = true;
  return result;
}

}  // namespace

// A null node stands for the constant 0, so that default-constructed
// children inside Node do not need an allocation.
Expr::Expr() = default;

Expr Expr::constant(double value) {
  auto n = std::make_shared<Node>();
  n->op = Op::Const;
  n->value = value;
  return Expr(std::move(n));
}

Expr Expr::variable(std::string name) {
  auto n = std::make_shared<Node>();
  n->op = Op::Var;
  n->name = std::move(name);
  return Expr(std::move(n));
}

Expr Expr::make(Op op, Expr a, Expr b) {
  if (is_leaf(op)) throw std::logic_error("Expr::make: leaf op");
  auto n = std::make_shared<Node>();
  n->op = op;
  n->a = std::move(a);
  if (is_binary(op)) n->b = std::move(b);
  return Expr(std::move(n));
}

Expr Expr::make_unary(Op op, Expr a) {
  if (is_leaf(op) || is_binary(op)) throw std::logic_error("Expr::make_unary: not unary");
  return make(op, std::move(a));
}

Op Expr::op() const { return node_ ? node_->op : Op::Const; }
double Expr::value() const { return node_ ? node_->value : 0.0; }

const std::string& Expr::name() const {
  static const std::string empty;
  return node_ ? node_->name : empty;
}

const Expr& Expr::lhs() const {
  static const Expr zero;
  return node_ ? node_->a : zero;
}

const Expr& Expr::rhs() const {
  static const Expr zero;
  return node_ ? node_->b : zero;
}

std::size_t Expr::arity() const {
  if (is_leaf(op())) return 0;
  return is_binary(op()) ? 2 : 1;
}

double Expr::eval(const Env& env) const {
  bool ignored = false;
  return eval_node(*this, env, ignored);
}

Evaluation Expr::evaluate(const Env& env) const {
  Evaluation out;
  out.value = eval_node(*this, env, out.domain_error);
  return out;
}

bool Expr::same_as(const Expr& other) const {
  if (node_ == other.node_) return true;
  if (op() != other.op()) return false;
  switch (op()) {
    case Op::Const:
      return std::bit_cast<std::uint64_t>(value()) == std::bit_cast<std::uint64_t>(other.value());
    case Op::Var:
      return name() == other.name();
    default:
      break;
  }
  if (!lhs().same_as(other.lhs())) return false;
  return arity() < 2 || rhs().same_as(other.rhs());
}

std::set<std::string> Expr::variables() const {
  std::set<std::string> out;
  std::function<void(const Expr&)> walk = [&](const Expr& e) {
    if (e.op() == Op::Var) {
      out.insert(e.name());
      return;
    }
    if (e.arity() >= 1) walk(e.lhs());
    if (e.arity() == 2) walk(e.rhs());
  };
  walk(*this);
  return out;
}

// ---------------------------------------------------------------------------
// Folding constructors

Expr operator+(const Expr& a, const Expr& b) {
  if (a.is_constant() && b.is_constant()) return Expr::constant(a.value() + b.value());
  if (a.is_constant(0.0)) return b;
  if (b.is_constant(0.0)) return a;
  return Expr::make(Op::Add, a, b);
}

Expr operator-(const Expr& a, const Expr& b) {
  if (a.is_constant() && b.is_constant()) return Expr::constant(a.value() - b.value());
  if (b.is_constant(0.0)) return a;
  if (a.is_constant(0.0)) return -b;
  return Expr::make(Op::Sub, a, b);
}

Expr operator*(const Expr& a, const Expr& b) {
  if (a.is_constant() && b.is_constant()) return Expr::constant(a.value() * b.value());
  if (a.is_constant(0.0) || b.is_constant(0.0)) return Expr::constant(0.0);
  if (a.is_constant(1.0)) return b;
  if (b.is_constant(1.0)) return a;
  if (a.is_constant(-1.0)) return -b;
  if (b.is_constant(-1.0)) return -a;
  return Expr::make(Op::Mul, a, b);
}

Expr operator/(const Expr& a, const Expr& b) {
  if (a.is_constant() && b.is_constant()) return Expr::constant(a.value() / b.value());
  if (a.is_constant(0.0)) return Expr::constant(0.0);
  if (b.is_constant(1.0)) return a;
  return Expr::make(Op::Div, a, b);
}

Expr operator-(const Expr& a) {
  if (a.is_constant()) return Expr::constant(-a.value());
  return Expr::make(Op::Neg, a);
}

Expr pow(const Expr& base, const Expr& exponent) {
  if (base.is_constant() && exponent.is_constant())
    return Expr::constant(std::pow(base.value(), exponent.value()));
  if (exponent.is_constant(1.0)) return base;
  if (exponent.is_constant(0.0)) return Expr::constant(1.0);
  return Expr::make(Op::Pow, base, exponent);
}

Expr apply(Op unary, const Expr& a) {
  if (unary == Op::Neg) return -a;
  if (a.is_constant()) return Expr::constant(apply_unary(unary, a.value()));
  return Expr::make_unary(unary, a);
}

Expr atan2(const Expr& y, const Expr& x) {
  if (y.is_constant() && x.is_constant()) return Expr::constant(std::atan2(y.value(), x.value()));
  return Expr::make(Op::Atan2, y, x);
}

// ---------------------------------------------------------------------------
// Differentiation

Expr diff(const Expr& e, const std::string& var) {
  switch (e.op()) {
    case Op::Const:
      return Expr::constant(0.0);
    case Op::Var:
      return Expr::constant(e.name() == var ? 1.0 : 0.0);
    default:
      break;
  }
  const Expr& a = e.lhs();
  const Expr da = diff(a, var);
  if (e.arity() == 1) {
    if (da.is_constant(0.0)) return Expr::constant(0.0);
    switch (e.op()) {
      case Op::Neg:
        return -da;
      case Op::Sin:
        return apply(Op::Cos, a) * da;
      case Op::Cos:
        return -(apply(Op::Sin, a) * da);
      case Op::Tan:
        return da / pow(apply(Op::Cos, a), Expr::constant(2.0));
      case Op::Exp:
        return e * da;
      case Op::Log:
        return da / a;
      case Op::Sqrt:
        return da / (Expr::constant(2.0) * e);
      case Op::Abs:
        return apply(Op::Sign, a) * da;
      case Op::Atan:
        return da / (Expr::constant(1.0) + pow(a, Expr::constant(2.0)));
      case Op::Sign:
        return Expr::constant(0.0);
      default:
        throw std::logic_error("diff: unexpected unary op");
    }
  }
  const Expr& b = e.rhs();
  const Expr db = diff(b, var);
  switch (e.op()) {
    case Op::Add:
      return da + db;
    case Op::Sub:
      return da - db;
    case Op::Mul:
      return da * b + a * db;
    case Op::Div:
      if (db.is_constant(0.0)) return da / b;
      return (da * b - a * db) / pow(b, Expr::constant(2.0));
    case Op::Pow:
      if (b.is_constant()) {
        if (da.is_constant(0.0)) return Expr::constant(0.0);
        return b * pow(a, Expr::constant(b.value() - 1.0)) * da;
      }
      // d(a^b) = a^b (b' log a + b a'/a)
      return e * (db * apply(Op::Log, a) + b * da / a);
    case Op::Atan2:
      // d atan2(y, x) = (x dy - y dx) / (x^2 + y^2)
      if (da.is_constant(0.0) && db.is_constant(0.0)) return Expr::constant(0.0);
      return (b * da - a * db) / (pow(b, Expr::constant(2.0)) + pow(a, Expr::constant(2.0)));
    default:
      throw std::logic_error("diff: unexpected binary op");
  }
}

Expr substitute(const Expr& e, const std::map<std::string, Expr>& replacements) {
  switch (e.op()) {
    case Op::Const:
      return e;
    case Op::Var: {
      auto it = replacements.find(e.name());
      return it == replacements.end() ? e : it->second;
    }
    default:
      break;
  }
  const Expr a = substitute(e.lhs(), replacements);
  if (e.arity() == 1) return apply(e.op(), a);
  const Expr b = substitute(e.rhs(), replacements);
  switch (e.op()) {
    case Op::Add:
      return a + b;
    case Op::Sub:
      return a - b;
    case Op::Mul:
      return a * b;
    case Op::Div:
      return a / b;
    case Op::Pow:
      return pow(a, b);
    case Op::Atan2:
      return atan2(a, b);
    default:
      throw std::logic_error("substitute: unexpected op");
  }
}

// ---------------------------------------------------------------------------
// Compiled evaluation

BoundExpr::BoundExpr(const Expr& e, const std::vector<std::string>& slots) {
  std::function<std::size_t(const Expr&)> emit = [&](const Expr& n) -> std::size_t {
    switch (n.op()) {
      case Op::Const:
        code_.push_back({Op::Const, n.value(), 0});
        return 1;
      case Op::Var: {
        for (std::size_t i = 0; i < slots.size(); ++i) {
          if (slots[i] == n.name()) {
            code_.push_back({Op::Var, 0.0, i});
            return 1;
          }
        }
        throw UnboundVariable(n.name());
      }
      default:
        break;
    }
    const std::size_t da = emit(n.lhs());
    std::size_t depth = da;
    if (n.arity() == 2) depth = std::max(da, 1 + emit(n.rhs()));
    code_.push_back({n.op(), 0.0, 0});
    return depth;
  };
  max_depth_ = emit(e);
}

double BoundExpr::operator()(std::span<const double> values) const {
  constexpr std::size_t kInline = 64;
  std::array<double, kInline> inline_stack{};
  std::vector<double> heap_stack;
  double* stack = inline_stack.data();
  if (max_depth_ > kInline) {
    heap_stack.resize(max_depth_);
    stack = heap_stack.data();
  }
  std::size_t top = 0;
  for (const Instr& in : code_) {
    switch (in.op) {
      case Op::Const:
        stack[top++] = in.value;
        break;
      case Op::Var:
        stack[top++] = values[in.slot];
        break;
      case Op::Add:
      case Op::Sub:
      case Op::Mul:
      case Op::Div:
      case Op::Pow:
      case Op::Atan2: {
        const double b = stack[--top];
        stack[top - 1] = apply_binary(in.op, stack[top - 1], b);
        break;
      }
      default:
        stack[top - 1] = apply_unary(in.op, stack[top - 1]);
        break;
    }
  }
  return stack[0];
}

}  // namespace ocscale
