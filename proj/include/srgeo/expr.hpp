#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace srgeo {

// Syntax error with the byte offset into the original text.
class ParseError : public std::runtime_error {
public:
  ParseError(const std::string& message, std::size_t offset);
  std::size_t offset() const { return offset_; }

private:
  std::size_t offset_;
};

// Runtime evaluation failure (unknown identifier, division by zero, ...).
class EvalError : public std::runtime_error {
public:
  explicit EvalError(const std::string& message) : std::runtime_error(message) {}
};

// Immutable scalar expression over named coordinates.
//
// Grammar of the node kinds: numeric literals, identifiers, unary minus,
// + - * /, integer powers, and sin/cos/exp.  Construction goes through the
// smart factories below, which fold constants and strip identities so that
// derivative towers stay small.
class Expr {
public:
  enum class Kind : std::uint8_t { Number, Var, Neg, Add, Sub, Mul, Div, Pow, Sin, Cos, Exp };
  struct Node;  // opaque; defined in the implementation

  Expr();  // literal 0

  static Expr number(double v);
  static Expr var(std::string name);
  static Expr neg(const Expr& e);
  static Expr add(const Expr& a, const Expr& b);
  static Expr sub(const Expr& a, const Expr& b);
  static Expr mul(const Expr& a, const Expr& b);
  static Expr div(const Expr& a, const Expr& b);
  static Expr pow(const Expr& base, int exponent);
  static Expr sin(const Expr& e);
  static Expr cos(const Expr& e);
  static Expr exp(const Expr& e);

  Kind kind() const;
  double number_value() const;          // Kind::Number only
  const std::string& var_name() const;  // Kind::Var only
  int exponent() const;                 // Kind::Pow only
  Expr child(int i) const;              // 0 = left/only, 1 = right

  bool is_zero() const;
  bool is_one() const;

  // Tree evaluation; coords/values are parallel.  Throws EvalError on unknown
  // identifiers and division by zero, NaN/Inf results included.
  double evaluate(std::span<const std::string> coords, std::span<const double> values) const;

  // Exact symbolic partial derivative with respect to one coordinate name.
  Expr derivative(const std::string& coord) const;

  // Printable form that parses back to an equivalent tree.
  std::string str() const;

private:
  explicit Expr(std::shared_ptr<const Node> n) : node_(std::move(n)) {}
  std::shared_ptr<const Node> node_;
};

Expr operator+(const Expr& a, const Expr& b);
Expr operator-(const Expr& a, const Expr& b);
Expr operator*(const Expr& a, const Expr& b);
Expr operator/(const Expr& a, const Expr& b);
Expr operator-(const Expr& e);

Expr parse_expression(std::string_view text);

// Expression flattened to a postfix tape with coordinate indices resolved,
// for evaluation in integrator loops.
class CompiledExpr {
public:
  CompiledExpr();  // constant 0
  static CompiledExpr compile(const Expr& e, std::span<const std::string> coords);

  // vars must point at one double per chart coordinate.
  double eval(const double* vars) const;

  bool constant() const { return constant_; }
  double constant_value() const { return constant_value_; }

private:
  enum class Op : std::uint8_t { Num, Var, Neg, Add, Sub, Mul, Div, Pow, Sin, Cos, Exp };
  struct Instr {
    Op op;
    std::int32_t arg;
    double num;
  };
  std::vector<Instr> code_;
  bool constant_ = false;
  double constant_value_ = 0.0;
};

}  // namespace srgeo
