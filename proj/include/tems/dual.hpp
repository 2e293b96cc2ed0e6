#pragma once

// Forward-mode AD scalar. A Dual carries a value and a dense gradient with
// respect to whatever seed basis the caller set up. Plain constants convert
// implicitly and carry an empty gradient, which every operator treats as a
// zero vector of the right size, so model code can mix doubles and Duals
// freely.

#include <Eigen/Core>

#include <cmath>
#include <stdexcept>
#include <utility>
#include <vector>

namespace tems {

class Dual {
 public:
  Dual() : v_(0.0) {}
  Dual(double v) : v_(v) {}  // NOLINT: implicit on purpose
  Dual(double v, Eigen::VectorXd g) : v_(v), g_(std::move(g)) {}

  // A variable seeded as component `index` of a `dim`-dimensional basis.
  static Dual seeded(double v, int dim, int index) {
    Eigen::VectorXd g = Eigen::VectorXd::Zero(dim);
    g(index) = 1.0;
    return Dual(v, std::move(g));
  }

  double value() const { return v_; }
  bool has_grad() const { return g_.size() > 0; }
  const Eigen::VectorXd& grad() const { return g_; }

  // Gradient as a vector of exactly `dim` entries (constants widen to zero).
  Eigen::VectorXd grad_or_zero(int dim) const {
    if (g_.size() == 0) return Eigen::VectorXd::Zero(dim);
    if (g_.size() != dim)
      throw std::logic_error("Dual: mixed seed dimensions");
    return g_;
  }

  Dual operator-() const {
    return has_grad() ? Dual(-v_, -g_) : Dual(-v_);
  }

  Dual& operator+=(const Dual& o) {
    v_ += o.v_;
    add_grad(o.g_, 1.0);
    return *this;
  }
  Dual& operator-=(const Dual& o) {
    v_ -= o.v_;
    add_grad(o.g_, -1.0);
    return *this;
  }
  Dual& operator*=(const Dual& o) {
    // d(ab) = a db + b da; scale our grad by b first, then add a*db.
    if (has_grad()) g_ *= o.v_;
    add_grad(o.g_, v_);
    v_ *= o.v_;
    return *this;
  }
  Dual& operator/=(const Dual& o) {
    // d(a/b) = da/b - a db/b^2
    if (has_grad()) g_ /= o.v_;
    add_grad(o.g_, -v_ / (o.v_ * o.v_));
    v_ /= o.v_;
    return *this;
  }

  friend Dual operator+(Dual a, const Dual& b) { return a += b; }
  friend Dual operator-(Dual a, const Dual& b) { return a -= b; }
  friend Dual operator*(Dual a, const Dual& b) { return a *= b; }
  friend Dual operator/(Dual a, const Dual& b) { return a /= b; }

  friend bool operator<(const Dual& a, const Dual& b) { return a.v_ < b.v_; }
  friend bool operator>(const Dual& a, const Dual& b) { return a.v_ > b.v_; }
  friend bool operator<=(const Dual& a, const Dual& b) { return a.v_ <= b.v_; }
  friend bool operator>=(const Dual& a, const Dual& b) { return a.v_ >= b.v_; }

 private:
  // g += w * og, where either side may be the empty "constant" gradient.
  void add_grad(const Eigen::VectorXd& og, double w) {
    if (og.size() == 0) return;
    if (g_.size() == 0) {
      g_ = w * og;
    } else {
      if (g_.size() != og.size())
        throw std::logic_error("Dual: mixed seed dimensions");
      g_ += w * og;
    }
  }

  double v_;
  Eigen::VectorXd g_;
};

// Chain rule for unary elementary functions: f(a), f'(a).
inline Dual chain(const Dual& a, double f, double df) {
  if (!a.has_grad()) return Dual(f);
  return Dual(f, df * a.grad());
}

inline Dual exp(const Dual& a) {
  double e = std::exp(a.value());
  return chain(a, e, e);
}
inline Dual log(const Dual& a) { return chain(a, std::log(a.value()), 1.0 / a.value()); }
inline Dual sqrt(const Dual& a) {
  double s = std::sqrt(a.value());
  return chain(a, s, 0.5 / s);
}
inline Dual sin(const Dual& a) { return chain(a, std::sin(a.value()), std::cos(a.value())); }
inline Dual cos(const Dual& a) { return chain(a, std::cos(a.value()), -std::sin(a.value())); }
inline Dual tanh(const Dual& a) {
  double t = std::tanh(a.value());
  return chain(a, t, 1.0 - t * t);
}
inline Dual pow(const Dual& a, double p) {
  return chain(a, std::pow(a.value(), p), p * std::pow(a.value(), p - 1.0));
}
inline Dual square(const Dual& a) { return chain(a, a.value() * a.value(), 2.0 * a.value()); }
inline double square(double a) { return a * a; }
inline double value_of(double x) { return x; }
inline double value_of(const Dual& x) { return x.value(); }

using DualVector = std::vector<Dual>;

// Seed a point as AD variables, optionally offset into a larger basis
// (used when differentiating w.r.t. several argument blocks at once).
inline DualVector seed_vector(const Eigen::VectorXd& x, int dim, int offset) {
  DualVector out(x.size());
  for (int i = 0; i < x.size(); ++i) out[i] = Dual::seeded(x(i), dim, offset + i);
  return out;
}

// Wrap a point as AD constants (zero gradient).
inline DualVector constant_vector(const Eigen::VectorXd& x) {
  DualVector out(x.size());
  for (int i = 0; i < x.size(); ++i) out[i] = Dual(x(i));
  return out;
}

inline Eigen::VectorXd values_of(const DualVector& v) {
  Eigen::VectorXd out(v.size());
  for (size_t i = 0; i < v.size(); ++i) out(i) = v[i].value();
  return out;
}

// Stack gradients of a vector-valued result into a Jacobian (rows follow v).
inline Eigen::MatrixXd jacobian_of(const DualVector& v, int dim) {
  Eigen::MatrixXd J(v.size(), dim);
  for (size_t i = 0; i < v.size(); ++i) J.row(i) = v[i].grad_or_zero(dim).transpose();
  return J;
}

}  // namespace tems
