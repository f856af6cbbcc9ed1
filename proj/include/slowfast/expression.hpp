#pragma once

#include "slowfast/measure.hpp"

#include <functional>
#include <memory>
#include <string>

namespace slowfast {

/// Compiled arithmetic expression in the variables t, x, y, mu_mean, mu_m2.
/// Supports + - * / ^, parentheses, numeric literals, pi, and the functions
/// sin cos tan tanh exp log sqrt abs. Enough to write custom coefficient
/// sets and control fields in a JSON config; no symbolic differentiation.
class Expression {
 public:
  static Expression parse(const std::string& text);

  double eval(double x, double y, const MeasureHandle& mu) const;
  double eval_txy(double t, double x, double y) const;
  bool uses_t() const { return uses_t_; }
  bool uses_x() const { return uses_x_; }
  bool uses_y() const { return uses_y_; }
  bool uses_mu() const { return uses_mu_; }

  struct Node;

 private:
  std::shared_ptr<const Node> root_;
  bool uses_t_ = false, uses_x_ = false, uses_y_ = false, uses_mu_ = false;
};

}  // namespace slowfast
