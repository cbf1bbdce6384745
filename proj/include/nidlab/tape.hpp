#pragma once

#include <cstdint>
#include <initializer_list>
#include <vector>

#include "nidlab/tensor.hpp"

namespace nidlab {

// Reverse-mode autodiff over a fixed primitive set. Values are computed
// eagerly as the graph is built, so shape errors surface at the op call.
// Nodes are stored in construction order, which is already a topological
// order; backward() makes a single reverse sweep.
//
// reset() rewinds the tape without releasing buffers. A training loop that
// rebuilds the same graph every step therefore stops allocating after the
// first step.
class Tape {
 public:
  using Ref = std::int32_t;

  enum class Op : std::uint8_t {
    Input, Add, Sub, Mul, Scale, MatMul, AddRowVec, Sigmoid, Tanh, SoftmaxRows,
    Log, Conv1d, Unfold1d, ConcatVec, ConcatCols, StackRows, Sum, Mean, Row,
    Rows, Col, Transpose, Reshape, Bce
  };

  Ref input(const Tensor& t);
  Ref input_scalar(double v);

  Ref add(Ref a, Ref b);
  Ref sub(Ref a, Ref b);
  Ref mul(Ref a, Ref b);
  // Multiplication by a compile-time constant; c receives no gradient.
  Ref scale(Ref a, double c);
  // [n,k]x[k,m] -> [n,m];  [k]x[k,m] -> [m];  [n,k]x[k] -> [n].
  Ref matmul(Ref a, Ref b);
  // Adds a length-c vector to every row of an [r,c] matrix.
  Ref add_rowvec(Ref m, Ref v);
  Ref sigmoid(Ref a);
  Ref tanh(Ref a);
  // Row-wise stable softmax; a rank-1 input is treated as a single row.
  Ref softmax_rows(Ref a);
  // Elementwise log with inputs clamped to >= kLogEps; the adjoint is zero
  // where the clamp is active so it matches the clamped forward exactly.
  Ref log(Ref a);
  // Zero-padded same-size 1-D convolution of a vector, or of each row of a
  // matrix, with an odd-length kernel vector.
  Ref conv1d(Ref x, Ref kernel);
  // Sliding zero-padded windows of a vector: [n] -> [n, 2*halfwidth+1],
  // row p holding x[p-halfwidth .. p+halfwidth].
  Ref unfold1d(Ref x, int halfwidth);
  // Vectors joined end to end.
  Ref concat_vec(std::initializer_list<Ref> parts);
  Ref concat_vec(const std::vector<Ref>& parts);
  // Matrices with equal row counts joined left to right.
  Ref concat_cols(std::initializer_list<Ref> parts);
  Ref concat_cols(const std::vector<Ref>& parts);
  // Equal-length vectors stacked as the rows of a matrix.
  Ref stack_rows(const std::vector<Ref>& parts);
  Ref sum(Ref a);
  Ref mean(Ref a);
  Ref row(Ref m, int i);
  // Rows [i0, i0+n) of a matrix as an [n, cols] block.
  Ref rows(Ref m, int i0, int n);
  Ref col(Ref m, int j);
  Ref transpose(Ref m);
  Ref reshape(Ref a, Shape s);
  // Mean binary cross entropy with predictions clamped to [kLogEps, 1-kLogEps].
  Ref bce(Ref target, Ref pred);

  const Tensor& val(Ref r) const { return nodes_[r].val; }
  // Valid after backward(); zero-shaped if the node was never reached.
  const Tensor& grad(Ref r) const { return nodes_[r].grad; }
  bool reached(Ref r) const { return nodes_[r].grad_live; }

  // Accumulates adjoints of every node on a path to `loss`, which must be a
  // scalar.
  void backward(Ref loss);

  // backward() plus gathering: one gradient tensor per requested ref, exact
  // zeros for parameters with no path to the loss.
  std::vector<Tensor> gradients(Ref loss, const std::vector<Ref>& wrt);

  void reset();
  std::size_t size() const { return live_; }

 private:
  struct Node {
    Op op = Op::Input;
    Ref a = -1, b = -1;
    std::int32_t i0 = 0, n = 0;  // op-specific: row index, halfwidth, pack span
    double c = 0.0;
    Shape aux_shape;
    Tensor val;
    Tensor grad;
    bool grad_live = false;
  };

  std::vector<Node> nodes_;
  std::size_t live_ = 0;
  std::vector<Ref> packs_;
  std::size_t packs_live_ = 0;

  Node& fresh(Op op);
  std::int32_t push_pack(const Ref* parts, std::size_t count);
  Ref nary(Op op, const Ref* parts, std::size_t count);
  void check_ref(Ref r, const char* who) const;
  Tensor& ensure_grad(Node& nd);
  void adjoint(Node& nd);
};

using Ref = Tape::Ref;

}  // namespace nidlab
