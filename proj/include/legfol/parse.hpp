#ifndef LEGFOL_PARSE_HPP_
#define LEGFOL_PARSE_HPP_

// Infix grammar for fields and forms:
//
//   expr    := term (('+' | '-') term)*
//   term    := unary (('*' | '/') unary)*
//   unary   := ('-' | '+') unary | power
//   power   := primary ('^' (integer | power))?
//   primary := number | name | name '(' expr ')' | '(' expr ')'
//
// Names are chart coordinates, differentials d<coord>, the functions
// sin cos exp bump d, or objects supplied by a resolver. '^' between a scalar
// and an integer literal is a power; otherwise it is the wedge product.

#include <cctype>
#include <functional>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "legfol/forms.hpp"

namespace legfol {

class ParseError : public Error {
 public:
  ParseError(const std::string& msg, int line, int column)
      : Error("line " + std::to_string(line) + ", column " + std::to_string(column) + ": " + msg),
        message_(msg), line_(line), column_(column) {}
  const std::string& message() const { return message_; }
  int line() const { return line_; }
  int column() const { return column_; }

 private:
  std::string message_;
  int line_;
  int column_;
};

/// Looks up a named object; returns nullopt for unknown names.
using FormResolver = std::function<std::optional<DiffForm>(std::string_view)>;

namespace detail {

struct Token {
  enum Kind { Number, Name, Symbol, End } kind = End;
  std::string text;
  double number = 0.0;
  int column = 0;  // 1-based
};

class FormParser {
 public:
  FormParser(std::string_view text, Chart chart, FormResolver resolver, int line, int column_offset)
      : chart_(std::move(chart)), resolver_(std::move(resolver)), line_(line) {
    tokenize(text, column_offset);
  }

  DiffForm parse() {
    if (tokens_.size() == 1) fail("empty expression", tokens_.back());
    DiffForm out = expr();
    if (peek().kind != Token::End) fail("unexpected '" + peek().text + "'", peek());
    return out;
  }

 private:
  [[noreturn]] void fail(const std::string& msg, const Token& at) const {
    throw ParseError(msg, line_, at.column);
  }

  void tokenize(std::string_view s, int offset) {
    std::size_t i = 0;
    while (i < s.size()) {
      char c = s[i];
      if (std::isspace(static_cast<unsigned char>(c))) {
        ++i;
        continue;
      }
      Token t;
      t.column = static_cast<int>(i) + 1 + offset;
      if (std::isdigit(static_cast<unsigned char>(c)) || (c == '.' && i + 1 < s.size() && std::isdigit(static_cast<unsigned char>(s[i + 1])))) {
        std::size_t j = i;
        while (j < s.size() && (std::isdigit(static_cast<unsigned char>(s[j])) || s[j] == '.')) ++j;
        if (j < s.size() && (s[j] == 'e' || s[j] == 'E')) {
          std::size_t k = j + 1;
          if (k < s.size() && (s[k] == '+' || s[k] == '-')) ++k;
          if (k < s.size() && std::isdigit(static_cast<unsigned char>(s[k]))) {
            j = k;
            while (j < s.size() && std::isdigit(static_cast<unsigned char>(s[j]))) ++j;
          }
        }
        t.kind = Token::Number;
        t.text = std::string(s.substr(i, j - i));
        char* end = nullptr;
        t.number = std::strtod(t.text.c_str(), &end);
        if (end != t.text.c_str() + t.text.size()) {
          Token bad = t;
          fail("malformed number '" + t.text + "'", bad);
        }
        i = j;
      } else if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
        std::size_t j = i;
        while (j < s.size() && (std::isalnum(static_cast<unsigned char>(s[j])) || s[j] == '_' || s[j] == '.')) ++j;
        t.kind = Token::Name;
        t.text = std::string(s.substr(i, j - i));
        i = j;
      } else if (std::string_view("+-*/^(),").find(c) != std::string_view::npos) {
        t.kind = Token::Symbol;
        t.text = std::string(1, c);
        ++i;
      } else {
        fail(std::string("unexpected character '") + c + "'", t);
      }
      tokens_.push_back(t);
    }
    Token end;
    end.kind = Token::End;
    end.text = "end of expression";
    end.column = static_cast<int>(s.size()) + 1 + offset;
    tokens_.push_back(end);
  }

  const Token& peek(std::size_t ahead = 0) const {
    return tokens_[std::min(pos_ + ahead, tokens_.size() - 1)];
  }
  const Token& take() { return tokens_[std::min(pos_++, tokens_.size() - 1)]; }
  bool at_symbol(const char* s) const { return peek().kind == Token::Symbol && peek().text == s; }

  void expect_operand(const Token& op) {
    if (peek().kind == Token::End) fail("missing operand after '" + op.text + "'", op);
  }

  DiffForm combine_add(const DiffForm& a, const DiffForm& b, bool subtract, const Token& op) {
    if (a.degree() != b.degree())
      fail("cannot add forms of degree " + std::to_string(a.degree()) + " and " + std::to_string(b.degree()), op);
    return subtract ? a - b : a + b;
  }

  DiffForm multiply(const DiffForm& a, const DiffForm& b, const Token& op) {
    if (a.degree() == 0) return a.function() * b;
    if (b.degree() == 0) return b.function() * a;
    return wedge_checked(a, b, op);
  }

  DiffForm wedge_checked(const DiffForm& a, const DiffForm& b, const Token& op) {
    if (a.degree() + b.degree() > chart_.dim()) fail("wedge product exceeds the chart dimension", op);
    return wedge(a, b);
  }

  DiffForm expr() {
    DiffForm lhs = term();
    while (at_symbol("+") || at_symbol("-")) {
      Token op = take();
      expect_operand(op);
      DiffForm rhs = term();
      lhs = combine_add(lhs, rhs, op.text == "-", op);
    }
    return lhs;
  }

  DiffForm term() {
    DiffForm lhs = unary();
    while (at_symbol("*") || at_symbol("/")) {
      Token op = take();
      expect_operand(op);
      DiffForm rhs = unary();
      if (op.text == "*") {
        lhs = multiply(lhs, rhs, op);
      } else {
        if (rhs.degree() != 0) fail("cannot divide by a form of positive degree", op);
        if (rhs.function().is_zero()) fail("division by zero", op);
        lhs = (Expr(1.0) / rhs.function()) * lhs;
      }
    }
    return lhs;
  }

  DiffForm unary() {
    if (at_symbol("-") || at_symbol("+")) {
      Token op = take();
      expect_operand(op);
      DiffForm inner = unary();
      return op.text == "-" ? -inner : inner;
    }
    return power();
  }

  std::optional<int> integer_exponent() {
    // integer | '-' integer | '(' '-'? integer ')'
    std::size_t save = pos_;
    bool paren = false, neg = false;
    if (at_symbol("(")) {
      paren = true;
      take();
    }
    if (at_symbol("-")) {
      neg = true;
      take();
    }
    if (peek().kind == Token::Number) {
      Token num = take();
      if (paren) {
        if (!at_symbol(")")) {
          pos_ = save;
          return std::nullopt;
        }
        take();
      }
      double v = num.number;
      if (v != std::floor(v) || std::abs(v) > 64) fail("exponent must be a small integer", num);
      return neg ? -static_cast<int>(v) : static_cast<int>(v);
    }
    pos_ = save;
    return std::nullopt;
  }

  DiffForm power() {
    DiffForm base = primary();
    if (!at_symbol("^")) return base;
    Token op = take();
    expect_operand(op);
    if (base.degree() == 0) {
      if (auto k = integer_exponent()) {
        if (*k < 0 && base.function().is_zero()) fail("zero raised to a negative power", op);
        return DiffForm::scalar(chart_, pow(base.function(), *k));
      }
    }
    DiffForm rhs = power();
    if (base.degree() == 0 && rhs.degree() == 0) fail("exponent must be an integer literal", op);
    return wedge_checked(base, rhs, op);
  }

  DiffForm primary() {
    const Token& t = peek();
    if (t.kind == Token::Number) {
      take();
      return DiffForm::scalar(chart_, Expr(t.number));
    }
    if (at_symbol("(")) {
      Token open = take();
      expect_operand(open);
      DiffForm inner = expr();
      if (!at_symbol(")")) fail("expected ')'", peek());
      take();
      return inner;
    }
    if (t.kind == Token::Name) {
      Token name = take();
      if (at_symbol("(")) return call(name);
      if (auto i = chart_.find(name.text)) return DiffForm::scalar(chart_, Expr::var(*i));
      if (resolver_) {
        if (auto obj = resolver_(name.text)) {
          if (obj->chart() != chart_) fail("'" + name.text + "' lives on a different chart", name);
          return *obj;
        }
      }
      if (name.text.size() > 1 && name.text[0] == 'd') {
        if (auto i = chart_.find(std::string_view(name.text).substr(1)))
          return DiffForm::differential(chart_, *i);
      }
      if (name.text == "pi") return DiffForm::scalar(chart_, Expr(std::numbers::pi));
      fail("unknown identifier '" + name.text + "'", name);
    }
    if (t.kind == Token::End) fail("unexpected end of expression", t);
    fail("unexpected '" + t.text + "'", t);
  }

  DiffForm call(const Token& name) {
    Token open = take();
    expect_operand(open);
    DiffForm arg = expr();
    if (!at_symbol(")")) fail("expected ')' to close call to '" + name.text + "'", peek());
    take();
    if (name.text == "d") {
      if (arg.degree() >= chart_.dim()) fail("d of a top-degree form", name);
      return exterior_d(arg);
    }
    if (arg.degree() != 0) fail("function '" + name.text + "' needs a scalar argument", name);
    Expr a = arg.function();
    if (name.text == "sin") return DiffForm::scalar(chart_, sin(a));
    if (name.text == "cos") return DiffForm::scalar(chart_, cos(a));
    if (name.text == "exp") return DiffForm::scalar(chart_, exp(a));
    if (name.text == "bump") return DiffForm::scalar(chart_, bump(a));
    fail("unknown function '" + name.text + "'", name);
  }

  Chart chart_;
  FormResolver resolver_;
  int line_;
  std::vector<Token> tokens_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline DiffForm parse_form(std::string_view text, const Chart& chart, FormResolver resolver = {},
                           int line = 1, int column_offset = 0) {
  return detail::FormParser(text, chart, std::move(resolver), line, column_offset).parse();
}

inline Expr parse_expr(std::string_view text, const Chart& chart, FormResolver resolver = {},
                       int line = 1, int column_offset = 0) {
  DiffForm w = parse_form(text, chart, std::move(resolver), line, column_offset);
  if (w.degree() != 0)
    throw ParseError("expected a scalar expression, got a " + std::to_string(w.degree()) + "-form", line,
                     column_offset + 1);
  return w.function();
}

inline ExprField parse_field(std::string_view text, const Chart& chart) {
  return ExprField(chart, parse_expr(text, chart));
}

}  // namespace legfol

#endif  // LEGFOL_PARSE_HPP_
