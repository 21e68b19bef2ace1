#include "fpkflow/expression.hpp"

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <stdexcept>
#include <vector>

namespace fpkflow {

struct Expression::Node {
  enum class Op { Const, VarT, VarX, VarY, Add, Sub, Mul, Div, Neg, Min, Max, Sqrt, Tanh, Abs };
  Op op;
  double constant = 0.0;
  std::shared_ptr<const Node> lhs, rhs;
};

namespace {

using Node = Expression::Node;
using NodePtr = std::shared_ptr<const Node>;

NodePtr make(Node::Op op, NodePtr l = nullptr, NodePtr r = nullptr) {
  auto n = std::make_shared<Node>();
  n->op = op;
  n->lhs = std::move(l);
  n->rhs = std::move(r);
  return n;
}

class Parser {
 public:
  explicit Parser(const std::string& text) : text_(text) {}

  NodePtr parse() {
    auto e = expr();
    skip_ws();
    if (pos_ != text_.size()) fail("unexpected trailing input");
    return e;
  }

 private:
  [[noreturn]] void fail(const std::string& why) const {
    throw std::invalid_argument("expression parse error at position " + std::to_string(pos_) +
                                " in \"" + text_ + "\": " + why);
  }

  void skip_ws() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  bool consume(char c) {
    skip_ws();
    if (pos_ < text_.size() && text_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  NodePtr expr() {
    auto node = term();
    while (true) {
      if (consume('+')) {
        node = make(Node::Op::Add, node, term());
      } else if (consume('-')) {
        node = make(Node::Op::Sub, node, term());
      } else {
        return node;
      }
    }
  }

  NodePtr term() {
    auto node = unary();
    while (true) {
      if (consume('*')) {
        node = make(Node::Op::Mul, node, unary());
      } else if (consume('/')) {
        node = make(Node::Op::Div, node, unary());
      } else {
        return node;
      }
    }
  }

  NodePtr unary() {
    if (consume('-')) return make(Node::Op::Neg, unary());
    if (consume('+')) return unary();
    return primary();
  }

  NodePtr primary() {
    skip_ws();
    if (pos_ >= text_.size()) fail("unexpected end of input");
    const char c = text_[pos_];
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
    if (std::isalpha(static_cast<unsigned char>(c))) return identifier();
    if (consume('(')) {
      auto e = expr();
      if (!consume(')')) fail("expected ')'");
      return e;
    }
    fail(std::string("unexpected character '") + c + "'");
  }

  NodePtr number() {
    const char* start = text_.c_str() + pos_;
    char* end = nullptr;
    const double v = std::strtod(start, &end);
    if (end == start) fail("malformed number");
    pos_ += static_cast<std::size_t>(end - start);
    auto n = std::make_shared<Node>();
    n->op = Node::Op::Const;
    n->constant = v;
    return n;
  }

  NodePtr identifier() {
    std::size_t begin = pos_;
    while (pos_ < text_.size() &&
           (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_')) {
      ++pos_;
    }
    const std::string name = text_.substr(begin, pos_ - begin);
    if (name == "t") return make(Node::Op::VarT);
    if (name == "x") return make(Node::Op::VarX);
    if (name == "y") return make(Node::Op::VarY);
    if (name == "pi") {
      auto n = std::make_shared<Node>();
      n->op = Node::Op::Const;
      n->constant = M_PI;
      return n;
    }
    if (name == "min" || name == "max") {
      if (!consume('(')) fail(name + " expects '('");
      auto a = expr();
      if (!consume(',')) fail(name + " expects two arguments");
      auto b = expr();
      if (!consume(')')) fail("expected ')'");
      return make(name == "min" ? Node::Op::Min : Node::Op::Max, a, b);
    }
    if (name == "sqrt" || name == "tanh" || name == "abs") {
      if (!consume('(')) fail(name + " expects '('");
      auto a = expr();
      if (!consume(')')) fail("expected ')'");
      Node::Op op = name == "sqrt" ? Node::Op::Sqrt
                  : name == "tanh" ? Node::Op::Tanh
                                   : Node::Op::Abs;
      return make(op, a);
    }
    fail("unknown identifier '" + name + "'");
  }

  const std::string& text_;
  std::size_t pos_ = 0;
};

double eval_node(const Node& n, double t, double x, double y) {
  switch (n.op) {
    case Node::Op::Const: return n.constant;
    case Node::Op::VarT: return t;
    case Node::Op::VarX: return x;
    case Node::Op::VarY: return y;
    case Node::Op::Add: return eval_node(*n.lhs, t, x, y) + eval_node(*n.rhs, t, x, y);
    case Node::Op::Sub: return eval_node(*n.lhs, t, x, y) - eval_node(*n.rhs, t, x, y);
    case Node::Op::Mul: return eval_node(*n.lhs, t, x, y) * eval_node(*n.rhs, t, x, y);
    case Node::Op::Div: return eval_node(*n.lhs, t, x, y) / eval_node(*n.rhs, t, x, y);
    case Node::Op::Neg: return -eval_node(*n.lhs, t, x, y);
    case Node::Op::Min:
      return std::min(eval_node(*n.lhs, t, x, y), eval_node(*n.rhs, t, x, y));
    case Node::Op::Max:
      return std::max(eval_node(*n.lhs, t, x, y), eval_node(*n.rhs, t, x, y));
    case Node::Op::Sqrt: return std::sqrt(eval_node(*n.lhs, t, x, y));
    case Node::Op::Tanh: return std::tanh(eval_node(*n.lhs, t, x, y));
    case Node::Op::Abs: return std::abs(eval_node(*n.lhs, t, x, y));
  }
  return 0.0;
}

bool node_uses_time(const Node& n) {
  if (n.op == Node::Op::VarT) return true;
  if (n.lhs && node_uses_time(*n.lhs)) return true;
  if (n.rhs && node_uses_time(*n.rhs)) return true;
  return false;
}

}  // namespace

Expression Expression::parse(const std::string& text) {
  Expression e;
  e.root_ = Parser(text).parse();
  e.text_ = text;
  return e;
}

double Expression::eval(double t, double x, double y) const {
  return eval_node(*root_, t, x, y);
}

bool Expression::uses_time() const { return node_uses_time(*root_); }

}  // namespace fpkflow
