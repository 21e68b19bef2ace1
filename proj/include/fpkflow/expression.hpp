#pragma once

#include <memory>
#include <string>

namespace fpkflow {

/// Arithmetic expressions over t, x, y with +, -, *, /, min, max, sqrt, tanh,
/// abs and numeric constants. Used for custom coefficient specifications.
class Expression {
 public:
  struct Node;

  static Expression parse(const std::string& text);

  double eval(double t, double x, double y = 0.0) const;
  bool uses_time() const;
  const std::string& text() const { return text_; }

 private:
  std::shared_ptr<const Node> root_;
  std::string text_;
};

}  // namespace fpkflow
