#include "srgeo/expr.hpp"

#include <charconv>
#include <cctype>
#include <cmath>
#include <cstdio>

namespace srgeo {

ParseError::ParseError(const std::string& message, std::size_t offset)
    : std::runtime_error(message + " (offset " + std::to_string(offset) + ")"), offset_(offset) {}

struct Expr::Node {
  Kind kind;
  double num = 0.0;
  int ipow = 0;
  std::string name;
  std::shared_ptr<const Node> a, b;
};

namespace {

using NodePtr = std::shared_ptr<const Expr::Node>;

}  // namespace

Expr::Expr() : node_(nullptr) {}

Expr Expr::number(double v) {
  auto n = std::make_shared<Node>();
  n->kind = Kind::Number;
  n->num = v;
  return Expr(std::move(n));
}

Expr Expr::var(std::string name) {
  auto n = std::make_shared<Node>();
  n->kind = Kind::Var;
  n->name = std::move(name);
  return Expr(std::move(n));
}

Expr::Kind Expr::kind() const { return node_ ? node_->kind : Kind::Number; }

double Expr::number_value() const { return node_ ? node_->num : 0.0; }

const std::string& Expr::var_name() const { return node_->name; }

int Expr::exponent() const { return node_->ipow; }

Expr Expr::child(int i) const { return Expr(i == 0 ? node_->a : node_->b); }

bool Expr::is_zero() const { return kind() == Kind::Number && number_value() == 0.0; }

bool Expr::is_one() const { return kind() == Kind::Number && number_value() == 1.0; }

Expr Expr::neg(const Expr& e) {
  if (e.kind() == Kind::Number) return number(-e.number_value());
  if (e.kind() == Kind::Neg) return e.child(0);
  auto n = std::make_shared<Node>();
  n->kind = Kind::Neg;
  n->a = e.node_;
  return Expr(std::move(n));
}

Expr Expr::add(const Expr& a, const Expr& b) {
  if (a.kind() == Kind::Number && b.kind() == Kind::Number)
    return number(a.number_value() + b.number_value());
  if (a.is_zero()) return b;
  if (b.is_zero()) return a;
  if (b.kind() == Kind::Neg) return sub(a, b.child(0));
  auto n = std::make_shared<Node>();
  n->kind = Kind::Add;
  n->a = a.node_;
  n->b = b.node_;
  return Expr(std::move(n));
}

Expr Expr::sub(const Expr& a, const Expr& b) {
  if (a.kind() == Kind::Number && b.kind() == Kind::Number)
    return number(a.number_value() - b.number_value());
  if (b.is_zero()) return a;
  if (a.is_zero()) return neg(b);
  if (b.kind() == Kind::Neg) return add(a, b.child(0));
  auto n = std::make_shared<Node>();
  n->kind = Kind::Sub;
  n->a = a.node_;
  n->b = b.node_;
  return Expr(std::move(n));
}

Expr Expr::mul(const Expr& a, const Expr& b) {
  if (a.kind() == Kind::Number && b.kind() == Kind::Number)
    return number(a.number_value() * b.number_value());
  if (a.is_zero() || b.is_zero()) return number(0.0);
  if (a.is_one()) return b;
  if (b.is_one()) return a;
  if (a.kind() == Kind::Number && a.number_value() == -1.0) return neg(b);
  if (b.kind() == Kind::Number && b.number_value() == -1.0) return neg(a);
  auto n = std::make_shared<Node>();
  n->kind = Kind::Mul;
  n->a = a.node_;
  n->b = b.node_;
  return Expr(std::move(n));
}

Expr Expr::div(const Expr& a, const Expr& b) {
  if (a.kind() == Kind::Number && b.kind() == Kind::Number && b.number_value() != 0.0)
    return number(a.number_value() / b.number_value());
  if (b.is_one()) return a;
  auto n = std::make_shared<Node>();
  n->kind = Kind::Div;
  n->a = a.node_;
  n->b = b.node_;
  return Expr(std::move(n));
}

Expr Expr::pow(const Expr& base, int exponent) {
  if (exponent == 0) return number(1.0);
  if (exponent == 1) return base;
  if (base.kind() == Kind::Number) return number(std::pow(base.number_value(), exponent));
  auto n = std::make_shared<Node>();
  n->kind = Kind::Pow;
  n->ipow = exponent;
  n->a = base.node_;
  return Expr(std::move(n));
}

Expr Expr::sin(const Expr& e) {
  if (e.kind() == Kind::Number) return number(std::sin(e.number_value()));
  auto n = std::make_shared<Node>();
  n->kind = Kind::Sin;
  n->a = e.node_;
  return Expr(std::move(n));
}

Expr Expr::cos(const Expr& e) {
  if (e.kind() == Kind::Number) return number(std::cos(e.number_value()));
  auto n = std::make_shared<Node>();
  n->kind = Kind::Cos;
  n->a = e.node_;
  return Expr(std::move(n));
}

Expr Expr::exp(const Expr& e) {
  if (e.kind() == Kind::Number) return number(std::exp(e.number_value()));
  auto n = std::make_shared<Node>();
  n->kind = Kind::Exp;
  n->a = e.node_;
  return Expr(std::move(n));
}

Expr operator+(const Expr& a, const Expr& b) { return Expr::add(a, b); }
Expr operator-(const Expr& a, const Expr& b) { return Expr::sub(a, b); }
Expr operator*(const Expr& a, const Expr& b) { return Expr::mul(a, b); }
Expr operator/(const Expr& a, const Expr& b) { return Expr::div(a, b); }
Expr operator-(const Expr& e) { return Expr::neg(e); }

namespace {

double ipow_checked(double base, int e) {
  bool invert = e < 0;
  unsigned long long n = invert ? -static_cast<long long>(e) : e;
  double acc = 1.0, p = base;
  while (n) {
    if (n & 1) acc *= p;
    p *= p;
    n >>= 1;
  }
  if (invert) {
    if (acc == 0.0) throw EvalError("division by zero in negative power");
    return 1.0 / acc;
  }
  return acc;
}

}  // namespace

double Expr::evaluate(std::span<const std::string> coords, std::span<const double> values) const {
  double out;
  switch (kind()) {
    case Kind::Number:
      out = number_value();
      break;
    case Kind::Var: {
      const std::string& name = var_name();
      for (std::size_t i = 0; i < coords.size(); ++i)
        if (coords[i] == name) return values[i];
      throw EvalError("unknown identifier '" + name + "'");
    }
    case Kind::Neg:
      out = -child(0).evaluate(coords, values);
      break;
    case Kind::Add:
      out = child(0).evaluate(coords, values) + child(1).evaluate(coords, values);
      break;
    case Kind::Sub:
      out = child(0).evaluate(coords, values) - child(1).evaluate(coords, values);
      break;
    case Kind::Mul:
      out = child(0).evaluate(coords, values) * child(1).evaluate(coords, values);
      break;
    case Kind::Div: {
      double den = child(1).evaluate(coords, values);
      if (den == 0.0) throw EvalError("division by zero");
      out = child(0).evaluate(coords, values) / den;
      break;
    }
    case Kind::Pow:
      out = ipow_checked(child(0).evaluate(coords, values), exponent());
      break;
    case Kind::Sin:
      out = std::sin(child(0).evaluate(coords, values));
      break;
    case Kind::Cos:
      out = std::cos(child(0).evaluate(coords, values));
      break;
    case Kind::Exp:
      out = std::exp(child(0).evaluate(coords, values));
      break;
    default:
      throw EvalError("corrupt expression node");
  }
  if (!std::isfinite(out)) throw EvalError("non-finite value in evaluation");
  return out;
}

Expr Expr::derivative(const std::string& coord) const {
  switch (kind()) {
    case Kind::Number:
      return number(0.0);
    case Kind::Var:
      return number(var_name() == coord ? 1.0 : 0.0);
    case Kind::Neg:
      return neg(child(0).derivative(coord));
    case Kind::Add:
      return add(child(0).derivative(coord), child(1).derivative(coord));
    case Kind::Sub:
      return sub(child(0).derivative(coord), child(1).derivative(coord));
    case Kind::Mul:
      return add(mul(child(0).derivative(coord), child(1)), mul(child(0), child(1).derivative(coord)));
    case Kind::Div:
      return div(sub(mul(child(0).derivative(coord), child(1)), mul(child(0), child(1).derivative(coord))),
                 pow(child(1), 2));
    case Kind::Pow:
      return mul(mul(number(exponent()), pow(child(0), exponent() - 1)), child(0).derivative(coord));
    case Kind::Sin:
      return mul(cos(child(0)), child(0).derivative(coord));
    case Kind::Cos:
      return neg(mul(sin(child(0)), child(0).derivative(coord)));
    case Kind::Exp:
      return mul(exp(child(0)), child(0).derivative(coord));
  }
  return number(0.0);
}

namespace {

// Precedence levels for printing: sum 1, product 2, unary minus 3, power 4, atom 5.
int precedence(Expr::Kind k) {
  switch (k) {
    case Expr::Kind::Add:
    case Expr::Kind::Sub:
      return 1;
    case Expr::Kind::Mul:
    case Expr::Kind::Div:
      return 2;
    case Expr::Kind::Neg:
      return 3;
    case Expr::Kind::Pow:
      return 4;
    default:
      return 5;
  }
}

std::string format_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void print(const Expr& e, int parent_prec, std::string& out) {
  int prec = precedence(e.kind());
  bool negative_literal = e.kind() == Expr::Kind::Number && e.number_value() < 0.0;
  bool parens = prec < parent_prec || (negative_literal && parent_prec > 0);
  if (parens) out += '(';
  switch (e.kind()) {
    case Expr::Kind::Number:
      out += format_number(e.number_value());
      break;
    case Expr::Kind::Var:
      out += e.var_name();
      break;
    case Expr::Kind::Neg:
      out += '-';
      print(e.child(0), 4, out);
      break;
    case Expr::Kind::Add:
      print(e.child(0), 1, out);
      out += '+';
      print(e.child(1), 2, out);
      break;
    case Expr::Kind::Sub:
      print(e.child(0), 1, out);
      out += '-';
      print(e.child(1), 2, out);
      break;
    case Expr::Kind::Mul:
      print(e.child(0), 2, out);
      out += '*';
      print(e.child(1), 3, out);
      break;
    case Expr::Kind::Div:
      print(e.child(0), 2, out);
      out += '/';
      print(e.child(1), 3, out);
      break;
    case Expr::Kind::Pow:
      print(e.child(0), 5, out);
      out += '^';
      out += std::to_string(e.exponent());
      break;
    case Expr::Kind::Sin:
      out += "sin(";
      print(e.child(0), 0, out);
      out += ')';
      break;
    case Expr::Kind::Cos:
      out += "cos(";
      print(e.child(0), 0, out);
      out += ')';
      break;
    case Expr::Kind::Exp:
      out += "exp(";
      print(e.child(0), 0, out);
      out += ')';
      break;
  }
  if (parens) out += ')';
}

}  // namespace

std::string Expr::str() const {
  std::string out;
  print(*this, 0, out);
  return out;
}

namespace {

struct Parser {
  std::string_view s;
  std::size_t pos = 0;

  void skip_ws() {
    while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
  }

  bool at_end() {
    skip_ws();
    return pos >= s.size();
  }

  char peek() {
    skip_ws();
    return pos < s.size() ? s[pos] : '\0';
  }

  bool accept(char c) {
    if (peek() == c) {
      ++pos;
      return true;
    }
    return false;
  }

  [[noreturn]] void fail(const std::string& msg) { throw ParseError(msg, pos); }

  Expr parse_sum() {
    Expr e = parse_product();
    for (;;) {
      if (accept('+'))
        e = Expr::add(e, parse_product());
      else if (accept('-'))
        e = Expr::sub(e, parse_product());
      else
        return e;
    }
  }

  Expr parse_product() {
    Expr e = parse_unary();
    for (;;) {
      if (accept('*'))
        e = Expr::mul(e, parse_unary());
      else if (accept('/'))
        e = Expr::div(e, parse_unary());
      else
        return e;
    }
  }

  Expr parse_unary() {
    if (accept('-')) return Expr::neg(parse_unary());
    return parse_power();
  }

  Expr parse_power() {
    Expr base = parse_atom();
    if (accept('^')) return Expr::pow(base, parse_int_exponent());
    return base;
  }

  int parse_int_exponent() {
    skip_ws();
    std::size_t start = pos;
    int value = 0;
    auto res = std::from_chars(s.data() + pos, s.data() + s.size(), value);
    if (res.ec != std::errc() || res.ptr == s.data() + pos) {
      pos = start;
      fail("expected integer exponent");
    }
    pos = res.ptr - s.data();
    return value;
  }

  Expr parse_atom() {
    skip_ws();
    if (pos >= s.size()) fail("unexpected end of expression");
    char c = s[pos];
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return parse_number();
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return parse_identifier();
    if (c == '(') {
      ++pos;
      Expr e = parse_sum();
      if (!accept(')')) fail("expected ')'");
      return e;
    }
    fail(std::string("unexpected character '") + c + "'");
  }

  Expr parse_number() {
    double value = 0.0;
    auto res = std::from_chars(s.data() + pos, s.data() + s.size(), value);
    if (res.ec != std::errc() || res.ptr == s.data() + pos) fail("malformed number");
    pos = res.ptr - s.data();
    return Expr::number(value);
  }

  Expr parse_identifier() {
    std::size_t start = pos;
    while (pos < s.size() &&
           (std::isalnum(static_cast<unsigned char>(s[pos])) || s[pos] == '_'))
      ++pos;
    std::string name(s.substr(start, pos - start));
    if (accept('(')) {
      Expr arg = parse_sum();
      if (!accept(')')) fail("expected ')'");
      if (name == "sin") return Expr::sin(arg);
      if (name == "cos") return Expr::cos(arg);
      if (name == "exp") return Expr::exp(arg);
      pos = start;
      fail("unknown function '" + name + "'");
    }
    return Expr::var(std::move(name));
  }
};

}  // namespace

Expr parse_expression(std::string_view text) {
  Parser p{text};
  if (p.at_end()) p.fail("empty expression");
  Expr e = p.parse_sum();
  if (!p.at_end()) p.fail("unexpected trailing characters");
  return e;
}

CompiledExpr::CompiledExpr() : constant_(true), constant_value_(0.0) {}

CompiledExpr CompiledExpr::compile(const Expr& e, std::span<const std::string> coords) {
  CompiledExpr out;
  out.constant_ = false;

  struct Walker {
    std::span<const std::string> coords;
    std::vector<Instr>& code;

    void walk(const Expr& e) {
      switch (e.kind()) {
        case Expr::Kind::Number:
          code.push_back({Op::Num, 0, e.number_value()});
          return;
        case Expr::Kind::Var: {
          for (std::size_t i = 0; i < coords.size(); ++i)
            if (coords[i] == e.var_name()) {
              code.push_back({Op::Var, static_cast<std::int32_t>(i), 0.0});
              return;
            }
          throw EvalError("unknown identifier '" + e.var_name() + "'");
        }
        case Expr::Kind::Neg:
          walk(e.child(0));
          code.push_back({Op::Neg, 0, 0.0});
          return;
        case Expr::Kind::Add:
          walk(e.child(0));
          walk(e.child(1));
          code.push_back({Op::Add, 0, 0.0});
          return;
        case Expr::Kind::Sub:
          walk(e.child(0));
          walk(e.child(1));
          code.push_back({Op::Sub, 0, 0.0});
          return;
        case Expr::Kind::Mul:
          walk(e.child(0));
          walk(e.child(1));
          code.push_back({Op::Mul, 0, 0.0});
          return;
        case Expr::Kind::Div:
          walk(e.child(0));
          walk(e.child(1));
          code.push_back({Op::Div, 0, 0.0});
          return;
        case Expr::Kind::Pow:
          walk(e.child(0));
          code.push_back({Op::Pow, e.exponent(), 0.0});
          return;
        case Expr::Kind::Sin:
          walk(e.child(0));
          code.push_back({Op::Sin, 0, 0.0});
          return;
        case Expr::Kind::Cos:
          walk(e.child(0));
          code.push_back({Op::Cos, 0, 0.0});
          return;
        case Expr::Kind::Exp:
          walk(e.child(0));
          code.push_back({Op::Exp, 0, 0.0});
          return;
      }
    }
  };

  Walker{coords, out.code_}.walk(e);
  if (out.code_.size() == 1 && out.code_[0].op == Op::Num) {
    out.constant_ = true;
    out.constant_value_ = out.code_[0].num;
  }
  return out;
}

double CompiledExpr::eval(const double* vars) const {
  if (constant_) return constant_value_;
  double stack[64];
  int top = -1;
  for (const Instr& ins : code_) {
    switch (ins.op) {
      case Op::Num:
        stack[++top] = ins.num;
        break;
      case Op::Var:
        stack[++top] = vars[ins.arg];
        break;
      case Op::Neg:
        stack[top] = -stack[top];
        break;
      case Op::Add:
        --top;
        stack[top] += stack[top + 1];
        break;
      case Op::Sub:
        --top;
        stack[top] -= stack[top + 1];
        break;
      case Op::Mul:
        --top;
        stack[top] *= stack[top + 1];
        break;
      case Op::Div:
        --top;
        if (stack[top + 1] == 0.0) throw EvalError("division by zero");
        stack[top] /= stack[top + 1];
        break;
      case Op::Pow:
        stack[top] = ipow_checked(stack[top], ins.arg);
        break;
      case Op::Sin:
        stack[top] = std::sin(stack[top]);
        break;
      case Op::Cos:
        stack[top] = std::cos(stack[top]);
        break;
      case Op::Exp:
        stack[top] = std::exp(stack[top]);
        break;
    }
  }
  return stack[0];
}

}  // namespace srgeo
