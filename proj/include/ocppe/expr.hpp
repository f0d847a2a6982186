#pragma once

#include <cctype>
#include <memory>
#include <string>

#include <Eigen/Dense>

#include "ocppe/common.hpp"

namespace ocppe {

// Tiny symbolic expression language for intervention functions.
// Variables: d (treatment), delta (intervention step), x1..xK (controls,
// 1-based), s1..sK (sigma components, 1-based). Operators: + - * / and
// parentheses. Derivatives are exact; no numeric differentiation anywhere.

class Expr;
using ExprPtr = std::shared_ptr<const Expr>;

class Expr {
 public:
  enum class Kind { Const, VarD, VarDelta, VarX, VarSigma, Add, Sub, Mul, Div, Neg };

  Kind kind;
  double value = 0.0;  // Const
  int index = 0;       // VarX / VarSigma, 0-based
  ExprPtr lhs, rhs;

  static ExprPtr constant(double v) {
    auto e = std::make_shared<Expr>();
    e->kind = Kind::Const;
    e->value = v;
    return e;
  }
  static ExprPtr var_d() { return simple(Kind::VarD); }
  static ExprPtr var_delta() { return simple(Kind::VarDelta); }
  static ExprPtr var_x(int j) {
    auto e = std::make_shared<Expr>();
    e->kind = Kind::VarX;
    e->index = j;
    return e;
  }
  static ExprPtr var_sigma(int j) {
    auto e = std::make_shared<Expr>();
    e->kind = Kind::VarSigma;
    e->index = j;
    return e;
  }

  // Smart constructors fold constants and drop identities, so the symbolic
  // derivatives stay small.
  static ExprPtr add(ExprPtr a, ExprPtr b) {
    if (is_zero(a)) return b;
    if (is_zero(b)) return a;
    if (both_const(a, b)) return constant(a->value + b->value);
    return binary(Kind::Add, std::move(a), std::move(b));
  }
  static ExprPtr sub(ExprPtr a, ExprPtr b) {
    if (is_zero(b)) return a;
    if (both_const(a, b)) return constant(a->value - b->value);
    if (is_zero(a)) return neg(b);
    return binary(Kind::Sub, std::move(a), std::move(b));
  }
  static ExprPtr mul(ExprPtr a, ExprPtr b) {
    if (is_zero(a) || is_zero(b)) return constant(0.0);
    if (is_one(a)) return b;
    if (is_one(b)) return a;
    if (both_const(a, b)) return constant(a->value * b->value);
    return binary(Kind::Mul, std::move(a), std::move(b));
  }
  static ExprPtr div(ExprPtr a, ExprPtr b) {
    if (is_zero(a)) return constant(0.0);
    if (is_one(b)) return a;
    if (both_const(a, b)) return constant(a->value / b->value);
    return binary(Kind::Div, std::move(a), std::move(b));
  }
  static ExprPtr neg(ExprPtr a) {
    if (a->kind == Kind::Const) return constant(-a->value);
    auto e = std::make_shared<Expr>();
    e->kind = Kind::Neg;
    e->lhs = std::move(a);
    return e;
  }

 private:
  static ExprPtr simple(Kind k) {
    auto e = std::make_shared<Expr>();
    e->kind = k;
    return e;
  }
  static ExprPtr binary(Kind k, ExprPtr a, ExprPtr b) {
    auto e = std::make_shared<Expr>();
    e->kind = k;
    e->lhs = std::move(a);
    e->rhs = std::move(b);
    return e;
  }
  static bool is_zero(const ExprPtr& e) {
    return e->kind == Kind::Const && e->value == 0.0;
  }
  static bool is_one(const ExprPtr& e) {
    return e->kind == Kind::Const && e->value == 1.0;
  }
  static bool both_const(const ExprPtr& a, const ExprPtr& b) {
    return a->kind == Kind::Const && b->kind == Kind::Const;
  }
};

struct ExprEnv {
  double d = 0.0;
  double delta = 0.0;
  const double* x = nullptr;
  int n_x = 0;
  const double* sigma = nullptr;
  int n_sigma = 0;
};

inline double expr_eval(const ExprPtr& e, const ExprEnv& env) {
  using K = Expr::Kind;
  switch (e->kind) {
    case K::Const: return e->value;
    case K::VarD: return env.d;
    case K::VarDelta: return env.delta;
    case K::VarX:
      if (e->index >= env.n_x)
        throw ConfigError("expression references x" + std::to_string(e->index + 1) +
                          " but only " + std::to_string(env.n_x) + " controls exist");
      return env.x[e->index];
    case K::VarSigma:
      if (e->index >= env.n_sigma)
        throw ConfigError("expression references s" + std::to_string(e->index + 1) +
                          " but sigma has length " + std::to_string(env.n_sigma));
      return env.sigma[e->index];
    case K::Add: return expr_eval(e->lhs, env) + expr_eval(e->rhs, env);
    case K::Sub: return expr_eval(e->lhs, env) - expr_eval(e->rhs, env);
    case K::Mul: return expr_eval(e->lhs, env) * expr_eval(e->rhs, env);
    case K::Div: return expr_eval(e->lhs, env) / expr_eval(e->rhs, env);
    case K::Neg: return -expr_eval(e->lhs, env);
  }
  throw NumericError("expr_eval: corrupt expression node");
}

enum class DiffVar { D, Delta };

inline ExprPtr expr_diff(const ExprPtr& e, DiffVar v) {
  using K = Expr::Kind;
  switch (e->kind) {
    case K::Const:
    case K::VarX:
    case K::VarSigma:
      return Expr::constant(0.0);
    case K::VarD: return Expr::constant(v == DiffVar::D ? 1.0 : 0.0);
    case K::VarDelta: return Expr::constant(v == DiffVar::Delta ? 1.0 : 0.0);
    case K::Add: return Expr::add(expr_diff(e->lhs, v), expr_diff(e->rhs, v));
    case K::Sub: return Expr::sub(expr_diff(e->lhs, v), expr_diff(e->rhs, v));
    case K::Mul:
      return Expr::add(Expr::mul(expr_diff(e->lhs, v), e->rhs),
                       Expr::mul(e->lhs, expr_diff(e->rhs, v)));
    case K::Div:
      // (a/b)' = a'/b - a b' / b^2
      return Expr::sub(Expr::div(expr_diff(e->lhs, v), e->rhs),
                       Expr::div(Expr::mul(e->lhs, expr_diff(e->rhs, v)),
                                 Expr::mul(e->rhs, e->rhs)));
    case K::Neg: return Expr::neg(expr_diff(e->lhs, v));
  }
  throw NumericError("expr_diff: corrupt expression node");
}

// Substitute delta = 0 and fold.
inline ExprPtr expr_at_delta0(const ExprPtr& e) {
  using K = Expr::Kind;
  switch (e->kind) {
    case K::VarDelta: return Expr::constant(0.0);
    case K::Const:
    case K::VarD:
    case K::VarX:
    case K::VarSigma:
      return e;
    case K::Add: return Expr::add(expr_at_delta0(e->lhs), expr_at_delta0(e->rhs));
    case K::Sub: return Expr::sub(expr_at_delta0(e->lhs), expr_at_delta0(e->rhs));
    case K::Mul: return Expr::mul(expr_at_delta0(e->lhs), expr_at_delta0(e->rhs));
    case K::Div: return Expr::div(expr_at_delta0(e->lhs), expr_at_delta0(e->rhs));
    case K::Neg: return Expr::neg(expr_at_delta0(e->lhs));
  }
  throw NumericError("expr_at_delta0: corrupt expression node");
}

namespace detail {

class ExprParser {
 public:
  explicit ExprParser(const std::string& s) : s_(s) {}

  ExprPtr parse() {
    auto e = expr();
    skip_ws();
    if (pos_ != s_.size())
      throw ConfigError("expression: unexpected trailing input at position " +
                        std::to_string(pos_) + " in '" + s_ + "'");
    return e;
  }

 private:
  ExprPtr expr() {
    auto e = term();
    for (;;) {
      skip_ws();
      if (peek() == '+') {
        ++pos_;
        e = Expr::add(e, term());
      } else if (peek() == '-') {
        ++pos_;
        e = Expr::sub(e, term());
      } else {
        return e;
      }
    }
  }

  ExprPtr term() {
    auto e = factor();
    for (;;) {
      skip_ws();
      if (peek() == '*') {
        ++pos_;
        e = Expr::mul(e, factor());
      } else if (peek() == '/') {
        ++pos_;
        e = Expr::div(e, factor());
      } else {
        return e;
      }
    }
  }

  ExprPtr factor() {
    skip_ws();
    if (peek() == '-') {
      ++pos_;
      return Expr::neg(factor());
    }
    if (peek() == '+') {
      ++pos_;
      return factor();
    }
    return primary();
  }

  ExprPtr primary() {
    skip_ws();
    const char c = peek();
    if (c == '(') {
      ++pos_;
      auto e = expr();
      skip_ws();
      if (peek() != ')') throw ConfigError("expression: missing ')' in '" + s_ + "'");
      ++pos_;
      return e;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
    if (std::isalpha(static_cast<unsigned char>(c))) return ident();
    throw ConfigError("expression: unexpected character '" + std::string(1, c) +
                      "' in '" + s_ + "'");
  }

  ExprPtr number() {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(s_.substr(pos_), &used);
    } catch (const std::exception&) {
      throw ConfigError("expression: bad number in '" + s_ + "'");
    }
    pos_ += used;
    return Expr::constant(v);
  }

  ExprPtr ident() {
    std::size_t start = pos_;
    while (pos_ < s_.size() &&
           (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_'))
      ++pos_;
    const std::string name = s_.substr(start, pos_ - start);
    if (name == "d") return Expr::var_d();
    if (name == "delta") return Expr::var_delta();
    if (name.size() >= 2 && (name[0] == 'x' || name[0] == 's')) {
      const std::string digits = name.substr(1);
      bool all_digits = !digits.empty();
      for (char ch : digits)
        if (!std::isdigit(static_cast<unsigned char>(ch))) all_digits = false;
      if (all_digits) {
        const int j = std::stoi(digits);
        if (j < 1) throw ConfigError("expression: indices are 1-based in '" + s_ + "'");
        return name[0] == 'x' ? Expr::var_x(j - 1) : Expr::var_sigma(j - 1);
      }
    }
    throw ConfigError("expression: unknown identifier '" + name + "' in '" + s_ + "'");
  }

  char peek() const { return pos_ < s_.size() ? s_[pos_] : '\0'; }
  void skip_ws() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }

  const std::string& s_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline ExprPtr parse_expr(const std::string& s) { return detail::ExprParser(s).parse(); }

}  // namespace ocppe
