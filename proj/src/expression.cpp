#include "slowfast/expression.hpp"

#include <cctype>
#include <cmath>
#include <vector>

namespace slowfast {

struct Expression::Node {
  enum class Op {
    constant,
    var_t,
    var_x,
    var_y,
    mu_mean,
    mu_m2,
    add,
    sub,
    mul,
    divide,
    pow,
    neg,
    fn
  };
  Op op = Op::constant;
  double value = 0.0;
  double (*fn)(double) = nullptr;
  std::shared_ptr<const Node> a, b;

  double eval(double t, double x, double y, const MeasureHandle& mu) const {
    switch (op) {
      case Op::constant: return value;
      case Op::var_t: return t;
      case Op::var_x: return x;
      case Op::var_y: return y;
      case Op::mu_mean: return mu.mean();
      case Op::mu_m2: return mu.second_moment();
      case Op::add: return a->eval(t, x, y, mu) + b->eval(t, x, y, mu);
      case Op::sub: return a->eval(t, x, y, mu) - b->eval(t, x, y, mu);
      case Op::mul: return a->eval(t, x, y, mu) * b->eval(t, x, y, mu);
      case Op::divide: return a->eval(t, x, y, mu) / b->eval(t, x, y, mu);
      case Op::pow: return std::pow(a->eval(t, x, y, mu), b->eval(t, x, y, mu));
      case Op::neg: return -a->eval(t, x, y, mu);
      case Op::fn: return fn(a->eval(t, x, y, mu));
    }
    return 0.0;
  }
};

namespace {

using NodePtr = std::shared_ptr<const Expression::Node>;
using Node = Expression::Node;

struct Parser {
  const std::string& s;
  std::size_t pos = 0;
  bool uses_t = false, uses_x = false, uses_y = false, uses_mu = false;

  explicit Parser(const std::string& text) : s(text) {}

  void skip() {
    while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos])))
      ++pos;
  }

  bool consume(char c) {
    skip();
    if (pos < s.size() && s[pos] == c) {
      ++pos;
      return true;
    }
    return false;
  }

  [[noreturn]] void err(const std::string& what) {
    fault(FaultKind::usage,
          "expression parse error at position " + std::to_string(pos) + ": " +
              what + " in \"" + s + "\"");
  }

  NodePtr make(Node::Op op, NodePtr a = nullptr, NodePtr b = nullptr) {
    auto n = std::make_shared<Node>();
    n->op = op;
    n->a = std::move(a);
    n->b = std::move(b);
    return n;
  }

  NodePtr number() {
    skip();
    std::size_t end = pos;
    while (end < s.size() &&
           (std::isdigit(static_cast<unsigned char>(s[end])) || s[end] == '.' ||
            s[end] == 'e' || s[end] == 'E' ||
            ((s[end] == '+' || s[end] == '-') && end > pos &&
             (s[end - 1] == 'e' || s[end - 1] == 'E'))))
      ++end;
    if (end == pos) err("expected number");
    auto n = std::make_shared<Node>();
    n->op = Node::Op::constant;
    n->value = std::stod(s.substr(pos, end - pos));
    pos = end;
    return n;
  }

  NodePtr ident() {
    skip();
    std::size_t end = pos;
    while (end < s.size() && (std::isalnum(static_cast<unsigned char>(s[end])) ||
                              s[end] == '_'))
      ++end;
    const std::string name = s.substr(pos, end - pos);
    pos = end;
    if (name == "t") {
      uses_t = true;
      return make(Node::Op::var_t);
    }
    if (name == "x") {
      uses_x = true;
      return make(Node::Op::var_x);
    }
    if (name == "y") {
      uses_y = true;
      return make(Node::Op::var_y);
    }
    if (name == "mu_mean") {
      uses_mu = true;
      return make(Node::Op::mu_mean);
    }
    if (name == "mu_m2") {
      uses_mu = true;
      return make(Node::Op::mu_m2);
    }
    if (name == "pi") {
      auto n = std::make_shared<Node>();
      n->op = Node::Op::constant;
      n->value = 3.14159265358979323846;
      return n;
    }
    static const struct {
      const char* name;
      double (*fn)(double);
    } fns[] = {{"sin", std::sin},   {"cos", std::cos},   {"tan", std::tan},
               {"tanh", std::tanh}, {"exp", std::exp},   {"log", std::log},
               {"sqrt", std::sqrt}, {"abs", std::fabs}};
    for (const auto& f : fns) {
      if (name == f.name) {
        if (!consume('(')) err("expected ( after function name");
        NodePtr arg = expr();
        if (!consume(')')) err("expected )");
        auto n = std::make_shared<Node>();
        n->op = Node::Op::fn;
        n->fn = f.fn;
        n->a = std::move(arg);
        return n;
      }
    }
    err("unknown identifier \"" + name + "\"");
  }

  NodePtr primary() {
    skip();
    if (pos >= s.size()) err("unexpected end of input");
    const char c = s[pos];
    if (c == '(') {
      ++pos;
      NodePtr e = expr();
      if (!consume(')')) err("expected )");
      return e;
    }
    if (c == '-') {
      ++pos;
      return make(Node::Op::neg, primary_pow());
    }
    if (c == '+') {
      ++pos;
      return primary_pow();
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return ident();
    err("unexpected character");
  }

  NodePtr primary_pow() {
    NodePtr base = primary();
    skip();
    if (pos < s.size() && s[pos] == '^') {
      ++pos;
      return make(Node::Op::pow, std::move(base), primary_pow());
    }
    return base;
  }

  NodePtr term() {
    NodePtr lhs = primary_pow();
    for (;;) {
      skip();
      if (pos < s.size() && s[pos] == '*') {
        ++pos;
        lhs = make(Node::Op::mul, std::move(lhs), primary_pow());
      } else if (pos < s.size() && s[pos] == '/') {
        ++pos;
        lhs = make(Node::Op::divide, std::move(lhs), primary_pow());
      } else {
        return lhs;
      }
    }
  }

  NodePtr expr() {
    NodePtr lhs = term();
    for (;;) {
      skip();
      if (pos < s.size() && s[pos] == '+') {
        ++pos;
        lhs = make(Node::Op::add, std::move(lhs), term());
      } else if (pos < s.size() && s[pos] == '-') {
        ++pos;
        lhs = make(Node::Op::sub, std::move(lhs), term());
      } else {
        return lhs;
      }
    }
  }
};

}  // namespace

Expression Expression::parse(const std::string& text) {
  Parser p(text);
  Expression e;
  NodePtr root = p.expr();
  p.skip();
  if (p.pos != text.size()) p.err("trailing input");
  e.root_ = std::move(root);
  e.uses_t_ = p.uses_t;
  e.uses_x_ = p.uses_x;
  e.uses_y_ = p.uses_y;
  e.uses_mu_ = p.uses_mu;
  return e;
}

double Expression::eval(double x, double y, const MeasureHandle& mu) const {
  return root_->eval(0.0, x, y, mu);
}

double Expression::eval_txy(double t, double x, double y) const {
  static const MeasureHandle unit = MeasureHandle::dirac(0.0);
  return root_->eval(t, x, y, unit);
}

}  // namespace slowfast
