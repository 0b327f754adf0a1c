#include "deepritz/expression.hpp"

#include <cctype>
#include <cmath>
#include <stdexcept>

namespace deepritz {

class ExprParser {
 public:
  ExprParser(const std::string& s, int n_params, int n_spatial, Expr& out)
      : s_(s), np_(n_params), nx_(n_spatial), out_(out) {}

  void run() {
    parse_expr();
    skip_ws();
    if (pos_ != s_.size()) fail("trailing input");
    int depth = 0, peak = 0;
    for (const auto& st : out_.code_) {
      switch (st.ins) {
        case Expr::Ins::PushConst:
        case Expr::Ins::PushParam:
        case Expr::Ins::PushSpatial: ++depth; break;
        case Expr::Ins::Add:
        case Expr::Ins::Sub:
        case Expr::Ins::Mul:
        case Expr::Ins::Div:
        case Expr::Ins::Pow: --depth; break;
        default: break;  // unary, depth unchanged
      }
      peak = std::max(peak, depth);
    }
    if (depth != 1) fail("malformed expression");
    out_.max_stack_ = peak;
  }

 private:
  [[noreturn]] void fail(const std::string& why) const {
    throw std::invalid_argument("expression '" + s_ + "': " + why + " at position " +
                                std::to_string(pos_));
  }

  void skip_ws() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }

  bool eat(char c) {
    skip_ws();
    if (pos_ < s_.size() && s_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  void parse_expr() {
    skip_ws();
    bool neg = false;
    if (eat('+')) {
    } else if (eat('-')) {
      neg = true;
    }
    parse_term();
    if (neg) emit(Expr::Ins::Neg);
    for (;;) {
      if (eat('+')) {
        parse_term();
        emit(Expr::Ins::Add);
      } else if (eat('-')) {
        parse_term();
        emit(Expr::Ins::Sub);
      } else {
        return;
      }
    }
  }

  void parse_term() {
    parse_unary();
    for (;;) {
      if (eat('*')) {
        parse_unary();
        emit(Expr::Ins::Mul);
      } else if (eat('/')) {
        parse_unary();
        emit(Expr::Ins::Div);
      } else {
        return;
      }
    }
  }

  void parse_unary() {
    skip_ws();
    if (eat('-')) {
      parse_unary();
      emit(Expr::Ins::Neg);
      return;
    }
    parse_power();
  }

  void parse_power() {
    parse_atom();
    if (eat('^')) {
      parse_unary();  // right-associative
      emit(Expr::Ins::Pow);
    }
  }

  void parse_atom() {
    skip_ws();
    if (pos_ >= s_.size()) fail("unexpected end");
    const char c = s_[pos_];
    if (c == '(') {
      ++pos_;
      parse_expr();
      if (!eat(')')) fail("missing ')'");
      return;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      std::size_t used = 0;
      const double v = std::stod(s_.substr(pos_), &used);
      pos_ += used;
      emit_const(v);
      return;
    }
    if (std::isalpha(static_cast<unsigned char>(c))) {
      std::size_t end = pos_;
      while (end < s_.size() &&
             (std::isalnum(static_cast<unsigned char>(s_[end])) || s_[end] == '_'))
        ++end;
      const std::string name = s_.substr(pos_, end - pos_);
      pos_ = end;
      if (name == "pi") {
        emit_const(M_PI);
        return;
      }
      if ((name[0] == 'p' || name[0] == 'x') && name.size() > 1 &&
          std::isdigit(static_cast<unsigned char>(name[1]))) {
        const int slot = std::stoi(name.substr(1));
        if (name[0] == 'p') {
          if (slot >= np_) fail("parameter index out of range: " + name);
          emit_slot(Expr::Ins::PushParam, slot);
        } else {
          if (slot >= nx_) fail("spatial index out of range: " + name);
          emit_slot(Expr::Ins::PushSpatial, slot);
        }
        return;
      }
      Expr::Ins fn;
      if (name == "sin") fn = Expr::Ins::Sin;
      else if (name == "cos") fn = Expr::Ins::Cos;
      else if (name == "exp") fn = Expr::Ins::Exp;
      else if (name == "log") fn = Expr::Ins::Log;
      else if (name == "sqrt") fn = Expr::Ins::Sqrt;
      else if (name == "abs") fn = Expr::Ins::Abs;
      else if (name == "tanh") fn = Expr::Ins::Tanh;
      else fail("unknown identifier '" + name + "'");
      if (!eat('(')) fail("expected '(' after function name");
      parse_expr();
      if (!eat(')')) fail("missing ')'");
      emit(fn);
      return;
    }
    fail(std::string("unexpected character '") + c + "'");
  }

  void emit(Expr::Ins ins) { out_.code_.push_back({ins, 0.0, 0}); }
  void emit_const(double v) { out_.code_.push_back({Expr::Ins::PushConst, v, 0}); }
  void emit_slot(Expr::Ins ins, int slot) { out_.code_.push_back({ins, 0.0, slot}); }

  const std::string& s_;
  std::size_t pos_ = 0;
  int np_, nx_;
  Expr& out_;
};

Expr Expr::parse(const std::string& text, int n_params, int n_spatial) {
  Expr e;
  e.text_ = text;
  ExprParser(text, n_params, n_spatial, e).run();
  return e;
}

double Expr::eval(std::span<const double> p, std::span<const double> x) const {
  double stack[32];
  if (max_stack_ > 32) throw std::runtime_error("expression too deep");
  int top = -1;
  for (const Step& st : code_) {
    switch (st.ins) {
      case Ins::PushConst: stack[++top] = st.c; break;
      case Ins::PushParam: stack[++top] = p[static_cast<std::size_t>(st.slot)]; break;
      case Ins::PushSpatial: stack[++top] = x[static_cast<std::size_t>(st.slot)]; break;
      case Ins::Add: stack[top - 1] += stack[top]; --top; break;
      case Ins::Sub: stack[top - 1] -= stack[top]; --top; break;
      case Ins::Mul: stack[top - 1] *= stack[top]; --top; break;
      case Ins::Div: stack[top - 1] /= stack[top]; --top; break;
      case Ins::Pow: stack[top - 1] = std::pow(stack[top - 1], stack[top]); --top; break;
      case Ins::Neg: stack[top] = -stack[top]; break;
      case Ins::Sin: stack[top] = std::sin(stack[top]); break;
      case Ins::Cos: stack[top] = std::cos(stack[top]); break;
      case Ins::Exp: stack[top] = std::exp(stack[top]); break;
      case Ins::Log: stack[top] = std::log(stack[top]); break;
      case Ins::Sqrt: stack[top] = std::sqrt(stack[top]); break;
      case Ins::Abs: stack[top] = std::abs(stack[top]); break;
      case Ins::Tanh: stack[top] = std::tanh(stack[top]); break;
    }
  }
  return stack[0];
}

}  // namespace deepritz
