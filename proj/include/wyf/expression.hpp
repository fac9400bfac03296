#pragma once

#include <memory>
#include <string>
#include <vector>

namespace wyf {

// Arithmetic in x1..xn with + - * / ^, parentheses, sin, cos, exp, log, sqrt and the constant pi.
class Expression {
 public:
  static Expression parse(const std::string& text, int variables);

  double operator()(const double* x) const;
  const std::string& text() const { return text_; }

  struct Node;

 private:
  std::shared_ptr<const Node> root_;
  std::string text_;
};

}  // namespace wyf
