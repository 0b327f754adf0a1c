#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace deepritz {

// Arithmetic expression over parameter coordinates p0,p1,... and spatial
// coordinates x0,x1,..., with +-*/^, unary minus, pi, and the functions
// sin cos exp log sqrt abs tanh. Parsed once, evaluated as postfix code.
//
// Examples: "p0^2*sin(p0*pi*x0)", "1",
//           "p0/(2*pi*p1)*exp(-((x0-p2)^2+(x1-p3)^2)/(2*p1^2))".
class Expr {
 public:
  Expr() = default;

  static Expr parse(const std::string& text, int n_params, int n_spatial);

  double eval(std::span<const double> p, std::span<const double> x) const;

  const std::string& text() const { return text_; }
  bool empty() const { return code_.empty(); }

 private:
  enum class Ins : std::uint8_t {
    PushConst,
    PushParam,
    PushSpatial,
    Add,
    Sub,
    Mul,
    Div,
    Pow,
    Neg,
    Sin,
    Cos,
    Exp,
    Log,
    Sqrt,
    Abs,
    Tanh,
  };
  struct Step {
    Ins ins;
    double c = 0.0;
    int slot = 0;
  };
  std::vector<Step> code_;
  int max_stack_ = 0;
  std::string text_;

  friend class ExprParser;
};

}  // namespace deepritz
