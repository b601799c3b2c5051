#pragma once

#include <cassert>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

namespace screcon::ad {

// Reverse-mode differentiation over an explicit record of the computation.
// Every operation appends one node holding its value plus the local partial
// derivatives with respect to its inputs (a Wengert list with precomputed
// partials). The backward sweep is then a single reverse pass:
//   adj[input] += partial * adj[node].
// Values are evaluated eagerly, so code can branch on them while recording.
class Tape {
 public:
  void reserve(std::size_t nodes, std::size_t args) {
    val_.reserve(nodes);
    arg_begin_.reserve(nodes + 1);
    arg_idx_.reserve(args);
    arg_partial_.reserve(args);
  }

  // Drops all nodes but keeps allocated capacity.
  void rewind() {
    val_.clear();
    arg_begin_.clear();
    arg_idx_.clear();
    arg_partial_.clear();
  }

  std::size_t size() const { return val_.size(); }
  std::size_t arg_count() const { return arg_idx_.size(); }

  std::int32_t leaf(double value) {
    ensure_begin();
    val_.push_back(value);
    arg_begin_.push_back(static_cast<std::uint32_t>(arg_idx_.size()));
    return static_cast<std::int32_t>(val_.size() - 1);
  }

  std::int32_t record1(double value, std::int32_t a, double pa) {
    ensure_begin();
    val_.push_back(value);
    arg_idx_.push_back(a);
    arg_partial_.push_back(pa);
    arg_begin_.push_back(static_cast<std::uint32_t>(arg_idx_.size()));
    return static_cast<std::int32_t>(val_.size() - 1);
  }

  std::int32_t record2(double value, std::int32_t a, double pa, std::int32_t b, double pb) {
    ensure_begin();
    val_.push_back(value);
    arg_idx_.push_back(a);
    arg_idx_.push_back(b);
    arg_partial_.push_back(pa);
    arg_partial_.push_back(pb);
    arg_begin_.push_back(static_cast<std::uint32_t>(arg_idx_.size()));
    return static_cast<std::int32_t>(val_.size() - 1);
  }

  std::int32_t record3(double value, std::int32_t a, double pa, std::int32_t b, double pb,
                       std::int32_t c, double pc) {
    ensure_begin();
    val_.push_back(value);
    arg_idx_.push_back(a);
    arg_idx_.push_back(b);
    arg_idx_.push_back(c);
    arg_partial_.push_back(pa);
    arg_partial_.push_back(pb);
    arg_partial_.push_back(pc);
    arg_begin_.push_back(static_cast<std::uint32_t>(arg_idx_.size()));
    return static_cast<std::int32_t>(val_.size() - 1);
  }

  std::int32_t record_n(double value, std::span<const std::int32_t> args,
                        std::span<const double> partials) {
    assert(args.size() == partials.size());
    ensure_begin();
    val_.push_back(value);
    arg_idx_.insert(arg_idx_.end(), args.begin(), args.end());
    arg_partial_.insert(arg_partial_.end(), partials.begin(), partials.end());
    arg_begin_.push_back(static_cast<std::uint32_t>(arg_idx_.size()));
    return static_cast<std::int32_t>(val_.size() - 1);
  }

  double value(std::int32_t i) const { return val_[static_cast<std::size_t>(i)]; }

  // Seeds d(seed)/d(seed) = 1 and propagates adjoints backwards. Adjoints of
  // all nodes (in particular parameter leaves) are readable afterwards.
  void backward(std::int32_t seed) {
    const std::size_t n = val_.size();
    assert(seed >= 0 && static_cast<std::size_t>(seed) < n);
    adj_.assign(n, 0.0);
    adj_[static_cast<std::size_t>(seed)] = 1.0;
    for (std::size_t i = static_cast<std::size_t>(seed) + 1; i-- > 0;) {
      const double a = adj_[i];
      if (a == 0.0) continue;
      const std::uint32_t b = arg_begin_[i];
      const std::uint32_t e = arg_begin_[i + 1];
      for (std::uint32_t k = b; k < e; ++k)
        adj_[static_cast<std::size_t>(arg_idx_[k])] += arg_partial_[k] * a;
    }
  }

  double adjoint(std::int32_t i) const { return adj_[static_cast<std::size_t>(i)]; }

 private:
  void ensure_begin() {
    if (arg_begin_.empty()) arg_begin_.push_back(0);
  }

  std::vector<double> val_;
  std::vector<std::uint32_t> arg_begin_;  // prefix offsets into arg arrays, size() == nodes + 1
  std::vector<std::int32_t> arg_idx_;
  std::vector<double> arg_partial_;
  std::vector<double> adj_;
};

// The tape operators record onto the active tape of the current thread.
inline thread_local Tape* tls_active_tape = nullptr;

inline Tape* active_tape() {
  assert(tls_active_tape != nullptr && "no active tape on this thread");
  return tls_active_tape;
}

// RAII activation of a tape for the current thread.
class TapeScope {
 public:
  explicit TapeScope(Tape& t) : prev_(tls_active_tape) { tls_active_tape = &t; }
  ~TapeScope() { tls_active_tape = prev_; }
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* prev_;
};

// Handle to one tape node. Cheap to copy; only meaningful while the tape it
// was recorded on is alive and unrewound.
struct Var {
  std::int32_t idx = -1;
};

inline Var constant(double v) { return Var{active_tape()->leaf(v)}; }

inline double value_of(double x) { return x; }
inline double value_of(Var x) { return active_tape()->value(x.idx); }

// Creates an S-typed scalar from a plain value (leaf when S = Var). Lets
// templated numeric code introduce constants generically.
template <class S>
S make_scalar(double v);
template <>
inline double make_scalar<double>(double v) { return v; }
template <>
inline Var make_scalar<Var>(double v) { return constant(v); }

// ---- arithmetic -----------------------------------------------------------

inline Var operator+(Var a, Var b) {
  Tape* t = active_tape();
  return Var{t->record2(t->value(a.idx) + t->value(b.idx), a.idx, 1.0, b.idx, 1.0)};
}
inline Var operator+(Var a, double b) {
  Tape* t = active_tape();
  return Var{t->record1(t->value(a.idx) + b, a.idx, 1.0)};
}
inline Var operator+(double a, Var b) { return b + a; }

inline Var operator-(Var a, Var b) {
  Tape* t = active_tape();
  return Var{t->record2(t->value(a.idx) - t->value(b.idx), a.idx, 1.0, b.idx, -1.0)};
}
inline Var operator-(Var a, double b) {
  Tape* t = active_tape();
  return Var{t->record1(t->value(a.idx) - b, a.idx, 1.0)};
}
inline Var operator-(double a, Var b) {
  Tape* t = active_tape();
  return Var{t->record1(a - t->value(b.idx), b.idx, -1.0)};
}
inline Var operator-(Var a) {
  Tape* t = active_tape();
  return Var{t->record1(-t->value(a.idx), a.idx, -1.0)};
}

inline Var operator*(Var a, Var b) {
  Tape* t = active_tape();
  const double va = t->value(a.idx), vb = t->value(b.idx);
  return Var{t->record2(va * vb, a.idx, vb, b.idx, va)};
}
inline Var operator*(Var a, double b) {
  Tape* t = active_tape();
  return Var{t->record1(t->value(a.idx) * b, a.idx, b)};
}
inline Var operator*(double a, Var b) { return b * a; }

inline Var operator/(Var a, Var b) {
  Tape* t = active_tape();
  const double va = t->value(a.idx), vb = t->value(b.idx);
  const double inv = 1.0 / vb;
  return Var{t->record2(va * inv, a.idx, inv, b.idx, -va * inv * inv)};
}
inline Var operator/(Var a, double b) {
  Tape* t = active_tape();
  const double inv = 1.0 / b;
  return Var{t->record1(t->value(a.idx) * inv, a.idx, inv)};
}
inline Var operator/(double a, Var b) {
  Tape* t = active_tape();
  const double vb = t->value(b.idx);
  const double inv = 1.0 / vb;
  return Var{t->record1(a * inv, b.idx, -a * inv * inv)};
}

// ---- elementary functions -------------------------------------------------

// d|x|/dx uses the subgradient 0 at x == 0.
inline Var abs(Var a) {
  Tape* t = active_tape();
  const double v = t->value(a.idx);
  const double s = v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0);
  return Var{t->record1(std::abs(v), a.idx, s)};
}

inline Var sqrt(Var a) {
  Tape* t = active_tape();
  const double r = std::sqrt(t->value(a.idx));
  return Var{t->record1(r, a.idx, 0.5 / r)};
}

inline Var exp(Var a) {
  Tape* t = active_tape();
  const double e = std::exp(t->value(a.idx));
  return Var{t->record1(e, a.idx, e)};
}

inline Var log(Var a) {
  Tape* t = active_tape();
  const double v = t->value(a.idx);
  return Var{t->record1(std::log(v), a.idx, 1.0 / v)};
}

inline Var sin(Var a) {
  Tape* t = active_tape();
  const double v = t->value(a.idx);
  return Var{t->record1(std::sin(v), a.idx, std::cos(v))};
}

inline Var cos(Var a) {
  Tape* t = active_tape();
  const double v = t->value(a.idx);
  return Var{t->record1(std::cos(v), a.idx, -std::sin(v))};
}

inline double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }
inline double softplus_inverse(double y) { return y > 30.0 ? y : std::log(std::expm1(y)); }

inline Var softplus(Var a) {
  Tape* t = active_tape();
  const double v = t->value(a.idx);
  return Var{t->record1(softplus(v), a.idx, 1.0 / (1.0 + std::exp(-v)))};
}

// ---- fused helpers ---------------------------------------------------------

// bias + sum_i coeffs[i] * x[i] as a single node.
inline Var linear_combination(std::span<const Var> x, std::span<const double> coeffs,
                              double bias = 0.0) {
  assert(x.size() == coeffs.size());
  Tape* t = active_tape();
  double v = bias;
  static thread_local std::vector<std::int32_t> idx;
  idx.clear();
  for (std::size_t i = 0; i < x.size(); ++i) {
    v += coeffs[i] * t->value(x[i].idx);
    idx.push_back(x[i].idx);
  }
  return Var{t->record_n(v, idx, coeffs)};
}

// sum_i w[i] * x[i]. The double overload keeps templated numeric code usable
// outside any tape, which is what the finite-difference paths rely on.
inline double dot(std::span<const double> x, std::span<const double> w) {
  double v = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) v += w[i] * x[i];
  return v;
}
inline Var dot(std::span<const Var> x, std::span<const double> w) {
  return linear_combination(x, w, 0.0);
}

// w[0]*a + w[1]*b + w[2]*c + w[3]*d as one node (bilinear upsampling blend).
inline double blend4(double a, double b, double c, double d, const double* w) {
  return w[0] * a + w[1] * b + w[2] * c + w[3] * d;
}
inline Var blend4(Var a, Var b, Var c, Var d, const double* w) {
  Tape* t = active_tape();
  const double v = w[0] * t->value(a.idx) + w[1] * t->value(b.idx) + w[2] * t->value(c.idx) +
                   w[3] * t->value(d.idx);
  const std::int32_t idx[4] = {a.idx, b.idx, c.idx, d.idx};
  return Var{t->record_n(v, idx, std::span<const double>(w, 4))};
}

// a * x + b as one node.
inline double mul_add(double a, double x, double b) { return a * x + b; }
inline Var mul_add(Var a, Var x, Var b) {
  Tape* t = active_tape();
  const double va = t->value(a.idx), vx = t->value(x.idx);
  return Var{t->record3(va * vx + t->value(b.idx), a.idx, vx, x.idx, va, b.idx, 1.0)};
}

// alpha * x + beta with a constant x as one node.
inline double scale_shift(double alpha, double beta, double x) { return alpha * x + beta; }
inline Var scale_shift(Var alpha, Var beta, double x) {
  Tape* t = active_tape();
  return Var{t->record2(t->value(alpha.idx) * x + t->value(beta.idx), alpha.idx, x, beta.idx, 1.0)};
}

}  // namespace screcon::ad
