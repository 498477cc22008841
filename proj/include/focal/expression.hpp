#pragma once

// Small closed-form expression language used for surface profiles, chart
// metrics and closed-form circle maps.
//
//   expr   := term (('+' | '-') term)*
//   term   := unary (('*' | '/') unary)*
//   unary  := ('-' | '+') unary | power
//   power  := atom ('^' unary)?
//   atom   := number | identifier | func '(' expr ')' | '(' expr ')'
//   func   := sin | cos | exp | log | sqrt
//
// Identifiers are the variable names bound at parse time plus the constant pi.
// Evaluation is templated on the scalar so the same tree runs on doubles and
// on forward-mode autodiff variables.

#include <cctype>
#include <charconv>
#include <cmath>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "focal/error.hpp"

namespace focal {

class Expression {
 public:
  Expression() = default;

  static Expression parse(std::string_view text, std::vector<std::string> variables) {
    Parser parser{text, variables, 0};
    auto root = parser.expr();
    parser.skip_ws();
    if (parser.pos != text.size()) {
      parser.fail("unexpected trailing input");
    }
    Expression e;
    e.text_ = std::string(text);
    e.variables_ = std::move(variables);
    e.root_ = std::move(root);
    return e;
  }

  const std::string& text() const { return text_; }
  const std::vector<std::string>& variables() const { return variables_; }
  bool empty() const { return root_ == nullptr; }

  template <class T>
  T operator()(std::span<const T> vars) const {
    return eval<T>(*root_, vars);
  }

  double operator()(double x) const {
    const double v[1] = {x};
    return eval<double>(*root_, std::span<const double>(v, 1));
  }

  template <class T>
  T eval1(const T& x) const {
    return eval<T>(*root_, std::span<const T>(&x, 1));
  }

 private:
  enum class Kind { Constant, Variable, Negate, Add, Sub, Mul, Div, Pow, Sin, Cos, Exp, Log, Sqrt };

  struct Node {
    Kind kind;
    double value = 0.0;
    std::size_t index = 0;
    std::shared_ptr<const Node> lhs;
    std::shared_ptr<const Node> rhs;
  };
  using NodePtr = std::shared_ptr<const Node>;

  struct Parser {
    std::string_view text;
    const std::vector<std::string>& vars;
    std::size_t pos;

    [[noreturn]] void fail(const std::string& msg) const {
      throw Error(ErrorCode::ParseError,
                  msg + " at column " + std::to_string(pos + 1) + " in '" + std::string(text) + "'");
    }

    void skip_ws() {
      while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos]))) ++pos;
    }

    bool accept(char c) {
      skip_ws();
      if (pos < text.size() && text[pos] == c) {
        ++pos;
        return true;
      }
      return false;
    }

    static NodePtr make(Kind k, NodePtr a = nullptr, NodePtr b = nullptr) {
      return std::make_shared<const Node>(Node{k, 0.0, 0, std::move(a), std::move(b)});
    }

    NodePtr expr() {
      auto lhs = term();
      for (;;) {
        if (accept('+')) {
          lhs = make(Kind::Add, lhs, term());
        } else if (accept('-')) {
          lhs = make(Kind::Sub, lhs, term());
        } else {
          return lhs;
        }
      }
    }

    NodePtr term() {
      auto lhs = unary();
      for (;;) {
        if (accept('*')) {
          lhs = make(Kind::Mul, lhs, unary());
        } else if (accept('/')) {
          lhs = make(Kind::Div, lhs, unary());
        } else {
          return lhs;
        }
      }
    }

    NodePtr unary() {
      if (accept('-')) {
        auto operand = unary();
        if (operand->kind == Kind::Constant) {
          return std::make_shared<const Node>(Node{Kind::Constant, -operand->value, 0, nullptr, nullptr});
        }
        return make(Kind::Negate, std::move(operand));
      }
      if (accept('+')) return unary();
      return power();
    }

    NodePtr power() {
      auto base = atom();
      if (accept('^')) return make(Kind::Pow, base, unary());
      return base;
    }

    NodePtr atom() {
      skip_ws();
      if (pos >= text.size()) fail("unexpected end of expression");
      const char c = text[pos];
      if (c == '(') {
        ++pos;
        auto inner = expr();
        if (!accept(')')) fail("expected ')'");
        return inner;
      }
      if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
        double value = 0.0;
        const auto* first = text.data() + pos;
        const auto* last = text.data() + text.size();
        auto [ptr, ec] = std::from_chars(first, last, value);
        if (ec != std::errc()) fail("malformed number");
        pos += static_cast<std::size_t>(ptr - first);
        return std::make_shared<const Node>(Node{Kind::Constant, value, 0, nullptr, nullptr});
      }
      if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
        const std::size_t start = pos;
        while (pos < text.size() &&
               (std::isalnum(static_cast<unsigned char>(text[pos])) || text[pos] == '_')) {
          ++pos;
        }
        const std::string_view name = text.substr(start, pos - start);
        for (std::size_t i = 0; i < vars.size(); ++i) {
          if (vars[i] == name) {
            return std::make_shared<const Node>(Node{Kind::Variable, 0.0, i, nullptr, nullptr});
          }
        }
        if (name == "pi") {
          return std::make_shared<const Node>(Node{Kind::Constant, M_PI, 0, nullptr, nullptr});
        }
        Kind fn;
        if (name == "sin") {
          fn = Kind::Sin;
        } else if (name == "cos") {
          fn = Kind::Cos;
        } else if (name == "exp") {
          fn = Kind::Exp;
        } else if (name == "log") {
          fn = Kind::Log;
        } else if (name == "sqrt") {
          fn = Kind::Sqrt;
        } else {
          pos = start;
          fail("unknown identifier '" + std::string(name) + "'");
        }
        if (!accept('(')) fail("expected '(' after function name");
        auto arg = expr();
        if (!accept(')')) fail("expected ')'");
        return make(fn, arg);
      }
      fail(std::string("unexpected character '") + c + "'");
    }
  };

  template <class T>
  static T eval(const Node& n, std::span<const T> vars) {
    using std::cos;
    using std::exp;
    using std::log;
    using std::pow;
    using std::sin;
    using std::sqrt;
    switch (n.kind) {
      case Kind::Constant: return T(n.value);
      case Kind::Variable: return vars[n.index];
      case Kind::Negate: return -eval<T>(*n.lhs, vars);
      case Kind::Add: return eval<T>(*n.lhs, vars) + eval<T>(*n.rhs, vars);
      case Kind::Sub: return eval<T>(*n.lhs, vars) - eval<T>(*n.rhs, vars);
      case Kind::Mul: return eval<T>(*n.lhs, vars) * eval<T>(*n.rhs, vars);
      case Kind::Div: return eval<T>(*n.lhs, vars) / eval<T>(*n.rhs, vars);
      case Kind::Pow: {
        const T base = eval<T>(*n.lhs, vars);
        if (n.rhs->kind == Kind::Constant) {
          const double e = n.rhs->value;
          // small integer exponents by repeated products so negative bases work
          if (e == std::floor(e) && std::fabs(e) <= 16.0) {
            const int k = static_cast<int>(std::fabs(e));
            T acc = T(1.0);
            for (int i = 0; i < k; ++i) acc = acc * base;
            return e < 0 ? T(1.0) / acc : acc;
          }
          return pow(base, e);
        }
        return exp(eval<T>(*n.rhs, vars) * log(base));
      }
      case Kind::Sin: return sin(eval<T>(*n.lhs, vars));
      case Kind::Cos: return cos(eval<T>(*n.lhs, vars));
      case Kind::Exp: return exp(eval<T>(*n.lhs, vars));
      case Kind::Log: return log(eval<T>(*n.lhs, vars));
      case Kind::Sqrt: return sqrt(eval<T>(*n.lhs, vars));
    }
    return T(0.0);
  }

  std::string text_;
  std::vector<std::string> variables_;
  NodePtr root_;
};

}  // namespace focal
