#pragma once

#include <array>
#include <span>

#include "deepritz/tape.hpp"

namespace deepritz {

// Forward-mode spatial derivatives whose components live on the reverse
// tape, so everything stays differentiable with respect to the parameters.
// An invalid Var in a slot is a structural zero; arithmetic prunes it.
struct Jet {
  static constexpr int kMaxDirs = 3;

  Var v{};
  std::array<Var, kMaxDirs> d{};
  int ndirs = 0;

  Var dir(int i) const { return d[static_cast<std::size_t>(i)]; }
};

inline Jet jet_const(Tape& tape, double value, int ndirs) {
  Jet j;
  j.v = tape.constant(value);
  j.ndirs = ndirs;
  return j;
}

// Input coordinate jet: unit seed in direction `seed_dir`, or no seed when
// seed_dir < 0. The seed slot holds the shared constant one.
inline Jet jet_input(Tape& tape, double value, int ndirs, int seed_dir) {
  Jet j = jet_const(tape, value, ndirs);
  if (seed_dir >= 0) j.d[static_cast<std::size_t>(seed_dir)] = tape.one();
  return j;
}

inline Jet jet_add(const Jet& x, const Jet& y) {
  Tape& t = *x.v.tape;
  Jet r;
  r.v = t.add(x.v, y.v);
  r.ndirs = x.ndirs;
  for (int i = 0; i < r.ndirs; ++i) {
    const Var a = x.dir(i), b = y.dir(i);
    if (a.valid() && b.valid()) r.d[static_cast<std::size_t>(i)] = t.add(a, b);
    else if (a.valid()) r.d[static_cast<std::size_t>(i)] = a;
    else if (b.valid()) r.d[static_cast<std::size_t>(i)] = b;
  }
  return r;
}

inline Jet jet_sub(const Jet& x, const Jet& y) {
  Tape& t = *x.v.tape;
  Jet r;
  r.v = t.sub(x.v, y.v);
  r.ndirs = x.ndirs;
  for (int i = 0; i < r.ndirs; ++i) {
    const Var a = x.dir(i), b = y.dir(i);
    if (a.valid() && b.valid()) r.d[static_cast<std::size_t>(i)] = t.sub(a, b);
    else if (a.valid()) r.d[static_cast<std::size_t>(i)] = a;
    else if (b.valid()) r.d[static_cast<std::size_t>(i)] = t.neg(b);
  }
  return r;
}

inline Jet jet_mul(const Jet& x, const Jet& y) {
  Tape& t = *x.v.tape;
  Jet r;
  r.v = t.mul(x.v, y.v);
  r.ndirs = x.ndirs;
  for (int i = 0; i < r.ndirs; ++i) {
    const Var a = x.dir(i), b = y.dir(i);
    if (a.valid() && b.valid()) {
      r.d[static_cast<std::size_t>(i)] = t.add(t.mul(a, y.v), t.mul(x.v, b));
    } else if (a.valid()) {
      r.d[static_cast<std::size_t>(i)] = t.mul(a, y.v);
    } else if (b.valid()) {
      r.d[static_cast<std::size_t>(i)] = t.mul(x.v, b);
    }
  }
  return r;
}

inline Jet jet_div(const Jet& x, const Jet& y) {
  Tape& t = *x.v.tape;
  Jet r;
  r.v = t.div(x.v, y.v);
  r.ndirs = x.ndirs;
  for (int i = 0; i < r.ndirs; ++i) {
    const Var a = x.dir(i), b = y.dir(i);
    // (a - r*b) / y
    if (a.valid() && b.valid()) {
      r.d[static_cast<std::size_t>(i)] = t.div(t.sub(a, t.mul(r.v, b)), y.v);
    } else if (a.valid()) {
      r.d[static_cast<std::size_t>(i)] = t.div(a, y.v);
    } else if (b.valid()) {
      r.d[static_cast<std::size_t>(i)] = t.div(t.nmul(r.v, b), y.v);
    }
  }
  return r;
}

inline Jet jet_scale(const Jet& x, double c) {
  Tape& t = *x.v.tape;
  Jet r;
  r.v = t.scale(x.v, c);
  r.ndirs = x.ndirs;
  for (int i = 0; i < r.ndirs; ++i) {
    if (x.dir(i).valid()) r.d[static_cast<std::size_t>(i)] = t.scale(x.dir(i), c);
  }
  return r;
}

// g(jet): records g at the value and g' for the chain rule, so the reverse
// pass through the directional components consumes g''.
inline Jet jet_activation(Activation act, const Jet& x) {
  Tape& t = *x.v.tape;
  Jet r;
  r.ndirs = x.ndirs;
  bool any = false;
  for (int i = 0; i < r.ndirs; ++i) any = any || x.dir(i).valid();
  if (!any) {
    r.v = t.activation(act, x.v);
    return r;
  }
  const Tape::VarPair gp = t.activation_pair(act, x.v);
  r.v = gp.first;
  for (int i = 0; i < r.ndirs; ++i) {
    if (x.dir(i).valid()) r.d[static_cast<std::size_t>(i)] = t.mul(gp.second, x.dir(i));
  }
  return r;
}

inline Jet jet_sin(const Jet& x) {
  Tape& t = *x.v.tape;
  Jet r;
  r.v = t.sin(x.v);
  r.ndirs = x.ndirs;
  bool any = false;
  for (int i = 0; i < r.ndirs; ++i) any = any || x.dir(i).valid();
  if (any) {
    const Var dv = t.cos(x.v);
    for (int i = 0; i < r.ndirs; ++i) {
      if (x.dir(i).valid()) r.d[static_cast<std::size_t>(i)] = t.mul(dv, x.dir(i));
    }
  }
  return r;
}

inline Jet jet_cos(const Jet& x) {
  Tape& t = *x.v.tape;
  Jet r;
  r.v = t.cos(x.v);
  r.ndirs = x.ndirs;
  const Var sv = [&] {
    for (int i = 0; i < r.ndirs; ++i)
      if (x.dir(i).valid()) return t.sin(x.v);
    return Var{};
  }();
  for (int i = 0; i < r.ndirs; ++i) {
    if (x.dir(i).valid()) r.d[static_cast<std::size_t>(i)] = t.nmul(sv, x.dir(i));
  }
  return r;
}

// A jet-valued program of the spatial point; parameters enter via capture.
using JetProgram = std::function<Jet(Tape&, std::span<const Jet>)>;

// Evaluates `program` at x with unit seeds on the tracked coordinates.
// The resulting directional components equal the partial derivatives of the
// value in those coordinates.
inline Jet jet_eval(Tape& tape, const JetProgram& program, std::span<const double> x,
                    std::span<const int> tracked) {
  std::vector<Jet> inputs(x.size());
  const int ndirs = static_cast<int>(tracked.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    int seed = -1;
    for (std::size_t k = 0; k < tracked.size(); ++k) {
      if (tracked[k] == static_cast<int>(i)) seed = static_cast<int>(k);
    }
    inputs[i] = jet_input(tape, x[i], ndirs, seed);
  }
  return program(tape, inputs);
}

}  // namespace deepritz
