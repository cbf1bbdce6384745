#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

namespace nidlab {

// Dense shape of rank 0, 1 or 2. Unused dimensions stay 1 so numel() is
// always d0*d1.
struct Shape {
  std::uint8_t rank = 0;
  std::size_t d0 = 1;
  std::size_t d1 = 1;

  static Shape scalar() { return {}; }
  static Shape vec(std::size_t n) { return {1, n, 1}; }
  static Shape mat(std::size_t r, std::size_t c) { return {2, r, c}; }

  std::size_t numel() const { return d0 * d1; }
  bool operator==(const Shape& o) const {
    return rank == o.rank && d0 == o.d0 && d1 == o.d1;
  }
  bool operator!=(const Shape& o) const { return !(*this == o); }
  std::string str() const;
};

// Row-major tensor of doubles. All math in the library runs on these; the
// value type is deliberately plain so buffers can be reused across steps.
struct Tensor {
  Shape shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(Shape s) : shape(s), data(s.numel(), 0.0) {}

  static Tensor scalar(double v);
  static Tensor zeros(Shape s) { return Tensor(s); }
  static Tensor full(Shape s, double v);
  static Tensor vec(std::initializer_list<double> v);
  static Tensor mat(std::size_t r, std::size_t c, std::initializer_list<double> v);
  // Length-n one-hot with a single 1 at position i.
  static Tensor one_hot(std::size_t n, std::size_t i);

  std::size_t numel() const { return shape.numel(); }
  std::size_t rows() const { return shape.d0; }
  std::size_t cols() const { return shape.d1; }

  double& at(std::size_t i) { return data[i]; }
  double at(std::size_t i) const { return data[i]; }
  double& at(std::size_t i, std::size_t j) { return data[i * shape.d1 + j]; }
  double at(std::size_t i, std::size_t j) const { return data[i * shape.d1 + j]; }

  bool all_finite() const;
};

// Stable softmax of a contiguous row, written in place.
void softmax_row_inplace(double* x, std::size_t n);

// Zero-padded same-size 1-D convolution: out[p] = sum_l k[l]*x[p-l] with the
// kernel index l running over [-(klen/2), klen/2]. klen must be odd. out and
// x must not alias.
void conv1d_same(const double* x, std::size_t n, const double* k, std::size_t klen,
                 double* out);

// Mean binary cross entropy between a target and a prediction of equal size.
// Predictions are clamped to [eps, 1-eps] so the result is always finite.
double bce_mean(const double* target, const double* pred, std::size_t n, double eps);

// Clamp floor used by log and BCE throughout the library.
inline constexpr double kLogEps = 1e-12;

}  // namespace nidlab
