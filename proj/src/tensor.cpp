#include "nidlab/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "nidlab/error.hpp"

namespace nidlab {

std::string Shape::str() const {
  switch (rank) {
    case 0: return "[]";
    case 1: return "[" + std::to_string(d0) + "]";
    default: return "[" + std::to_string(d0) + "," + std::to_string(d1) + "]";
  }
}

Tensor Tensor::scalar(double v) {
  Tensor t(Shape::scalar());
  t.data[0] = v;
  return t;
}

Tensor Tensor::full(Shape s, double v) {
  Tensor t(s);
  std::fill(t.data.begin(), t.data.end(), v);
  return t;
}

Tensor Tensor::vec(std::initializer_list<double> v) {
  Tensor t(Shape::vec(v.size()));
  std::copy(v.begin(), v.end(), t.data.begin());
  return t;
}

Tensor Tensor::mat(std::size_t r, std::size_t c, std::initializer_list<double> v) {
  if (v.size() != r * c) throw Error("mat: literal size does not match " + Shape::mat(r, c).str());
  Tensor t(Shape::mat(r, c));
  std::copy(v.begin(), v.end(), t.data.begin());
  return t;
}

Tensor Tensor::one_hot(std::size_t n, std::size_t i) {
  if (i >= n) throw Error("one_hot: index " + std::to_string(i) + " out of range " + std::to_string(n));
  Tensor t(Shape::vec(n));
  t.data[i] = 1.0;
  return t;
}

bool Tensor::all_finite() const {
  for (double v : data)
    if (!std::isfinite(v)) return false;
  return true;
}

void softmax_row_inplace(double* x, std::size_t n) {
  double m = x[0];
  for (std::size_t i = 1; i < n; ++i) m = std::max(m, x[i]);
  double z = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = std::exp(x[i] - m);
    z += x[i];
  }
  for (std::size_t i = 0; i < n; ++i) x[i] /= z;
}

void conv1d_same(const double* x, std::size_t n, const double* k, std::size_t klen,
                 double* out) {
  const std::ptrdiff_t s = static_cast<std::ptrdiff_t>(klen / 2);
  const std::ptrdiff_t nn = static_cast<std::ptrdiff_t>(n);
  for (std::ptrdiff_t p = 0; p < nn; ++p) {
    double acc = 0.0;
    for (std::ptrdiff_t l = -s; l <= s; ++l) {
      const std::ptrdiff_t q = p - l;
      if (q >= 0 && q < nn) acc += k[l + s] * x[q];
    }
    out[p] = acc;
  }
}

double bce_mean(const double* target, const double* pred, std::size_t n, double eps) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    // The floor is applied per log argument so an exact hit (pred equal to a
    // 0/1 target) contributes exactly zero.
    acc -= target[i] * std::log(std::max(pred[i], eps)) +
           (1.0 - target[i]) * std::log(std::max(1.0 - pred[i], eps));
  }
  return acc / static_cast<double>(n);
}

}  // namespace nidlab
