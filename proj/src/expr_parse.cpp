#include <cctype>
#include <charconv>
#include <cmath>
#include <string>

#include "ocscale/expr.hpp"

namespace ocscale {
namespace {

struct FunctionEntry {
  std::string_view name;
  Op op;
  int arity;
};

constexpr FunctionEntry kFunctions[] = {
    {"sin", Op::Sin, 1},   {"cos", Op::Cos, 1},  {"tan", Op::Tan, 1},
    {"exp", Op::Exp, 1},   {"log", Op::Log, 1},  {"sqrt", Op::Sqrt, 1},
    {"abs", Op::Abs, 1},   {"atan", Op::Atan, 1}, {"atan2", Op::Atan2, 2},
};

class Parser {
 public:
  explicit Parser(std::string_view src) : src_(src) {}

  Expr parse_all() {
    Expr e = parse_expr();
    skip_space();
    if (pos_ != src_.size()) fail("unexpected trailing input '" + std::string(1, src_[pos_]) + "'");
    return e;
  }

 private:
  [[noreturn]] void fail(const std::string& what) const { throw ParseError(what, pos_); }

  void skip_space() {
    while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) ++pos_;
  }

  bool accept(char c) {
    skip_space();
    if (pos_ < src_.size() && src_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  void expect(char c) {
    if (!accept(c)) {
      if (pos_ >= src_.size()) fail(std::string("expected '") + c + "' but reached end of input");
      fail(std::string("expected '") + c + "'");
    }
  }

  Expr parse_expr() {
    Expr lhs = parse_term();
    while (true) {
      if (accept('+')) {
        lhs = Expr::make(Op::Add, lhs, parse_term());
      } else if (accept('-')) {
        lhs = Expr::make(Op::Sub, lhs, parse_term());
      } else {
        return lhs;
      }
    }
  }

  Expr parse_term() {
    Expr lhs = parse_unary();
    while (true) {
      if (accept('*')) {
        lhs = Expr::make(Op::Mul, lhs, parse_unary());
      } else if (accept('/')) {
        lhs = Expr::make(Op::Div, lhs, parse_unary());
      } else {
        return lhs;
      }
    }
  }

  Expr parse_unary() {
    if (accept('-')) {
      // A negated literal is a negative constant, which is also how the
      // printer writes one.
      Expr operand = parse_unary();
      if (operand.is_constant()) return Expr::constant(-operand.value());
      return Expr::make_unary(Op::Neg, std::move(operand));
    }
    if (accept('+')) return parse_unary();
    return parse_power();
  }

  Expr parse_power() {
    Expr base = parse_primary();
    if (accept('^')) return Expr::make(Op::Pow, base, parse_unary());
    return base;
  }

  Expr parse_primary() {
    skip_space();
    if (pos_ >= src_.size()) fail("unexpected end of input");
    const char c = src_[pos_];
    if (c == '(') {
      ++pos_;
      Expr inner = parse_expr();
      expect(')');
      return inner;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return parse_number();
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return parse_identifier();
    if (c == ')') fail("unbalanced ')'");
    fail(std::string("unexpected character '") + c + "'");
  }

  Expr parse_number() {
    const std::size_t start = pos_;
    auto digits = [&] {
      while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) ++pos_;
    };
    digits();
    if (pos_ < src_.size() && src_[pos_] == '.') {
      ++pos_;
      digits();
    }
    if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
      std::size_t save = pos_++;
      if (pos_ < src_.size() && (src_[pos_] == '+' || src_[pos_] == '-')) ++pos_;
      if (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) {
        digits();
      } else {
        pos_ = save;
      }
    }
    double value = 0.0;
    const auto res = std::from_chars(src_.data() + start, src_.data() + pos_, value);
    if (res.ec != std::errc() || res.ptr != src_.data() + pos_) {
      pos_ = start;
      fail("malformed number");
    }
    return Expr::constant(value);
  }

  Expr parse_identifier() {
    const std::size_t start = pos_;
    while (pos_ < src_.size() &&
           (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_'))
      ++pos_;
    const std::string_view ident = src_.substr(start, pos_ - start);
    skip_space();
    if (pos_ < src_.size() && src_[pos_] == '(') {
      const FunctionEntry* fn = nullptr;
      for (const auto& entry : kFunctions)
        if (entry.name == ident) fn = &entry;
      if (fn == nullptr) {
        pos_ = start;
        fail("unknown function '" + std::string(ident) + "'");
      }
      ++pos_;
      Expr first = parse_expr();
      if (fn->arity == 2) {
        expect(',');
        Expr second = parse_expr();
        expect(')');
        return Expr::make(fn->op, first, second);
      }
      expect(')');
      return Expr::make_unary(fn->op, first);
    }
    return Expr::variable(std::string(ident));
  }

  std::string_view src_;
  std::size_t pos_ = 0;
};

// Printing precedence levels.
constexpr int kSum = 1;
constexpr int kProduct = 2;
constexpr int kUnary = 3;
constexpr int kPower = 4;
constexpr int kAtom = 5;

int precedence(const Expr& e) {
  switch (e.op()) {
    case Op::Add:
    case Op::Sub:
      return kSum;
    case Op::Mul:
    case Op::Div:
      return kProduct;
    case Op::Neg:
      return kUnary;
    case Op::Pow:
      return kPower;
    case Op::Const:
      return std::signbit(e.value()) ? kUnary : kAtom;
    default:
      return kAtom;
  }
}

std::string format_number(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string_view function_name(Op op) {
  for (const auto& entry : kFunctions)
    if (entry.op == op) return entry.name;
  if (op == Op::Sign) return "sign";
  return "?";
}

void print(const Expr& e, std::string& out);

void print_child(const Expr& child, int min_prec, std::string& out) {
  if (precedence(child) < min_prec) {
    out += '(';
    print(child, out);
    out += ')';
  } else {
    print(child, out);
  }
}

void print(const Expr& e, std::string& out) {
  switch (e.op()) {
    case Op::Const:
      if (std::signbit(e.value())) {
        out += '-';
        out += format_number(-e.value());
      } else {
        out += format_number(e.value());
      }
      return;
    case Op::Var:
      out += e.name();
      return;
    case Op::Neg:
      out += '-';
      print_child(e.lhs(), kUnary, out);
      return;
    case Op::Add:
    case Op::Sub:
      print_child(e.lhs(), kSum, out);
      out += e.op() == Op::Add ? " + " : " - ";
      print_child(e.rhs(), kSum + 1, out);
      return;
    case Op::Mul:
    case Op::Div:
      print_child(e.lhs(), kProduct, out);
      out += e.op() == Op::Mul ? "*" : "/";
      print_child(e.rhs(), kProduct + 1, out);
      return;
    case Op::Pow:
      print_child(e.lhs(), kAtom, out);
      out += '^';
      print_child(e.rhs(), kUnary, out);
      return;
    case Op::Atan2:
      out += "atan2(";
      print(e.lhs(), out);
      out += ", ";
      print(e.rhs(), out);
      out += ')';
      return;
    default:
      out += function_name(e.op());
      out += '(';
      print(e.lhs(), out);
      out += ')';
      return;
  }
}

}  // namespace

Expr parse(std::string_view source) { return Parser(source).parse_all(); }

std::string to_string(const Expr& e) {
  std::string out;
  print(e, out);
  return out;
}

}  // namespace ocscale
