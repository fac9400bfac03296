#include "wyf/expression.hpp"

#include "wyf/core.hpp"

#include <cctype>
#include <cmath>
#include <cstdlib>

namespace wyf {

struct Expression::Node {
  enum class Op { number, variable, neg, add, sub, mul, div, pow, call } op;
  double value = 0.0;
  int variable = 0;
  double (*fn)(double) = nullptr;
  std::shared_ptr<const Node> lhs, rhs;

  double eval(const double* x) const {
    switch (op) {
      case Op::number: return value;
      case Op::variable: return x[variable];
      case Op::neg: return -lhs->eval(x);
      case Op::add: return lhs->eval(x) + rhs->eval(x);
      case Op::sub: return lhs->eval(x) - rhs->eval(x);
      case Op::mul: return lhs->eval(x) * rhs->eval(x);
      case Op::div: return lhs->eval(x) / rhs->eval(x);
      case Op::pow: return std::pow(lhs->eval(x), rhs->eval(x));
      case Op::call: return fn(lhs->eval(x));
    }
    return 0.0;
  }
};

namespace {

using NodePtr = std::shared_ptr<const Expression::Node>;
using Op = Expression::Node::Op;

NodePtr make(Op op, NodePtr lhs = nullptr, NodePtr rhs = nullptr) {
  auto n = std::make_shared<Expression::Node>();
  n->op = op;
  n->lhs = std::move(lhs);
  n->rhs = std::move(rhs);
  return n;
}

double fn_sin(double v) { return std::sin(v); }
double fn_cos(double v) { return std::cos(v); }
double fn_exp(double v) { return std::exp(v); }
double fn_log(double v) { return std::log(v); }
double fn_sqrt(double v) { return std::sqrt(v); }

class Parser {
 public:
  Parser(const std::string& s, int vars) : s_(s), vars_(vars) {}

  NodePtr parse() {
    NodePtr e = expr();
    skip();
    if (pos_ != s_.size()) fail("unexpected '" + std::string(1, s_[pos_]) + "'");
    return e;
  }

 private:
  void skip() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }
  bool accept(char c) {
    skip();
    if (pos_ < s_.size() && s_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }
  [[noreturn]] void fail(const std::string& msg) const {
    throw ValidationError("expression '" + s_ + "': " + msg + " at offset " + std::to_string(pos_));
  }

  NodePtr expr() {
    NodePtr lhs = term();
    for (;;) {
      if (accept('+')) lhs = make(Op::add, lhs, term());
      else if (accept('-')) lhs = make(Op::sub, lhs, term());
      else return lhs;
    }
  }
  NodePtr term() {
    NodePtr lhs = unary();
    for (;;) {
      if (accept('*')) lhs = make(Op::mul, lhs, unary());
      else if (accept('/')) lhs = make(Op::div, lhs, unary());
      else return lhs;
    }
  }
  NodePtr unary() {
    if (accept('-')) return make(Op::neg, unary());
    if (accept('+')) return unary();
    return power();
  }
  NodePtr power() {
    NodePtr base = primary();
    if (accept('^')) return make(Op::pow, base, unary());
    return base;
  }
  NodePtr primary() {
    skip();
    if (pos_ >= s_.size()) fail("unexpected end");
    char c = s_[pos_];
    if (accept('(')) {
      NodePtr e = expr();
      if (!accept(')')) fail("missing ')'");
      return e;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      const char* begin = s_.c_str() + pos_;
      char* end = nullptr;
      double v = std::strtod(begin, &end);
      if (end == begin) fail("bad number");
      pos_ += static_cast<std::size_t>(end - begin);
      auto n = std::make_shared<Expression::Node>();
      n->op = Op::number;
      n->value = v;
      return n;
    }
    if (std::isalpha(static_cast<unsigned char>(c))) {
      std::size_t start = pos_;
      while (pos_ < s_.size() && std::isalnum(static_cast<unsigned char>(s_[pos_]))) ++pos_;
      std::string name = s_.substr(start, pos_ - start);
      if (name == "pi") {
        auto n = std::make_shared<Expression::Node>();
        n->op = Op::number;
        n->value = M_PI;
        return n;
      }
      if (name.size() > 1 && name[0] == 'x' &&
          name.find_first_not_of("0123456789", 1) == std::string::npos) {
        int k = std::stoi(name.substr(1));
        if (k < 1 || k > vars_) fail("variable " + name + " out of range");
        auto n = std::make_shared<Expression::Node>();
        n->op = Op::variable;
        n->variable = k - 1;
        return n;
      }
      double (*fn)(double) = nullptr;
      if (name == "sin") fn = fn_sin;
      else if (name == "cos") fn = fn_cos;
      else if (name == "exp") fn = fn_exp;
      else if (name == "log") fn = fn_log;
      else if (name == "sqrt") fn = fn_sqrt;
      else fail("unknown identifier '" + name + "'");
      if (!accept('(')) fail("expected '(' after " + name);
      auto n = std::make_shared<Expression::Node>();
      n->op = Op::call;
      n->fn = fn;
      n->lhs = expr();
      if (!accept(')')) fail("missing ')'");
      return n;
    }
    fail("unexpected '" + std::string(1, c) + "'");
  }

  const std::string& s_;
  int vars_;
  std::size_t pos_ = 0;
};

}  // namespace

Expression Expression::parse(const std::string& text, int variables) {
  Expression e;
  e.root_ = Parser(text, variables).parse();
  e.text_ = text;
  return e;
}

double Expression::operator()(const double* x) const { return root_->eval(x); }

}  // namespace wyf
