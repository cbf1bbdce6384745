#include "nidlab/tape.hpp"

#include <algorithm>
#include <cmath>

#include "nidlab/error.hpp"

namespace nidlab {

namespace {

[[noreturn]] void shape_fail(const char* op, const Shape& a, const Shape& b) {
  throw Error(std::string(op) + ": incompatible shapes " + a.str() + " and " + b.str());
}

[[noreturn]] void shape_fail(const char* op, const Shape& a, const char* why) {
  throw Error(std::string(op) + ": shape " + a.str() + " " + why);
}

}  // namespace

Tape::Node& Tape::fresh(Op op) {
  if (live_ == nodes_.size()) nodes_.emplace_back();
  Node& nd = nodes_[live_++];
  nd.op = op;
  nd.a = nd.b = -1;
  nd.i0 = nd.n = 0;
  nd.c = 0.0;
  nd.aux_shape = Shape{};
  nd.grad_live = false;
  return nd;
}

void Tape::check_ref(Ref r, const char* who) const {
  if (r < 0 || static_cast<std::size_t>(r) >= live_)
    throw Error(std::string(who) + ": ref " + std::to_string(r) + " is not on the tape");
}

std::int32_t Tape::push_pack(const Ref* parts, std::size_t count) {
  const std::int32_t begin = static_cast<std::int32_t>(packs_live_);
  for (std::size_t i = 0; i < count; ++i) {
    if (packs_live_ == packs_.size())
      packs_.push_back(parts[i]);
    else
      packs_[packs_live_] = parts[i];
    ++packs_live_;
  }
  return begin;
}

Tape::Ref Tape::input(const Tensor& t) {
  Node& nd = fresh(Op::Input);
  nd.val.shape = t.shape;
  nd.val.data = t.data;
  return static_cast<Ref>(live_ - 1);
}

Tape::Ref Tape::input_scalar(double v) {
  Node& nd = fresh(Op::Input);
  nd.val.shape = Shape::scalar();
  nd.val.data.assign(1, v);
  return static_cast<Ref>(live_ - 1);
}

Tape::Ref Tape::add(Ref a, Ref b) {
  check_ref(a, "add");
  check_ref(b, "add");
  if (nodes_[a].val.shape != nodes_[b].val.shape)
    shape_fail("add", nodes_[a].val.shape, nodes_[b].val.shape);
  Node& nd = fresh(Op::Add);
  nd.a = a;
  nd.b = b;
  const Tensor& x = nodes_[a].val;
  const Tensor& y = nodes_[b].val;
  nd.val.shape = x.shape;
  nd.val.data.resize(x.numel());
  for (std::size_t i = 0; i < x.numel(); ++i) nd.val.data[i] = x.data[i] + y.data[i];
  return static_cast<Ref>(live_ - 1);
}

Tape::Ref Tape::sub(Ref a, Ref b) {
  check_ref(a, "sub");
  check_ref(b, "sub");
  if (nodes_[a].val.shape != nodes_[b].val.shape)
    shape_fail("sub", nodes_[a].val.shape, nodes_[b].val.shape);
  Node& nd = fresh(Op::Sub);
  nd.a = a;
  nd.b = b;
  const Tensor& x = nodes_[a].val;
  const Tensor& y = nodes_[b].val;
  nd.val.shape = x.shape;
  nd.val.data.resize(x.numel());
  for (std::size_t i = 0; i < x.numel(); ++i) nd.val.data[i] = x.data[i] - y.data[i];
  return static_cast<Ref>(live_ - 1);
}

Tape::Ref Tape::mul(Ref a, Ref b) {
  check_ref(a, "mul");
  check_ref(b, "mul");
  if (nodes_[a].val.shape != nodes_[b].val.shape)
    shape_fail("mul", nodes_[a].val.shape, nodes_[b].val.shape);
  Node& nd = fresh(Op::Mul);
  nd.a = a;
  nd.b = b;
  const Tensor& x = nodes_[a].val;
  const Tensor& y = nodes_[b].val;
  nd.val.shape = x.shape;
  nd.val.data.resize(x.numel());
  for (std::size_t i = 0; i < x.numel(); ++i) nd.val.data[i] = x.data[i] * y.data[i];
  return static_cast<Ref>(live_ - 1);
}

Tape::Ref Tape::scale(Ref a, double c) {
  check_ref(a, "scale");
  Node& nd = fresh(Op::Scale);
  nd.a = a;
  nd.c = c;
  const Tensor& x = nodes_[a].val;
  nd.val.shape = x.shape;
  nd.val.data.resize(x.numel());
  for (std::size_t i = 0; i < x.numel(); ++i) nd.val.data[i] = c * x.data[i];
  return static_cast<Ref>(live_ - 1);
}

Tape::Ref Tape::matmul(Ref a, Ref b) {
  check_ref(a, "matmul");
  check_ref(b, "matmul");
  const Shape sa = nodes_[a].val.shape;
  const Shape sb = nodes_[b].val.shape;
  // i0 records the case: 0 mat x mat, 1 vec x mat, 2 mat x vec.
  std::int32_t mode;
  Shape out;
  if (sa.rank == 2 && sb.rank == 2 && sa.d1 == sb.d0) {
    mode = 0;
    out = Shape::mat(sa.d0, sb.d1);
  } else if (sa.rank == 1 && sb.rank == 2 && sa.d0 == sb.d0) {
    mode = 1;
    out = Shape::vec(sb.d1);
  } else if (sa.rank == 2 && sb.rank == 1 && sa.d1 == sb.d0) {
    mode = 2;
    out = Shape::vec(sa.d0);
  } else {
    shape_fail("matmul", sa, sb);
  }
  Node& nd = fresh(Op::MatMul);
  nd.a = a;
  nd.b = b;
  nd.i0 = mode;
  const Tensor& x = nodes_[a].val;
  const Tensor& y = nodes_[b].val;
  nd.val.shape = out;
  nd.val.data.assign(out.numel(), 0.0);
  if (mode == 0) {
    const std::size_t n = sa.d0, k = sa.d1, m = sb.d1;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t t = 0; t < k; ++t) {
        const double xv = x.data[i * k + t];
        if (xv == 0.0) continue;
        for (std::size_t j = 0; j < m; ++j) nd.val.data[i * m + j] += xv * y.data[t * m + j];
      }
  } else if (mode == 1) {
    const std::size_t k = sa.d0, m = sb.d1;
    for (std::size_t t = 0; t < k; ++t) {
      const double xv = x.data[t];
      if (xv == 0.0) continue;
      for (std::size_t j = 0; j < m; ++j) nd.val.data[j] += xv * y.data[t * m + j];
    }
  } else {
    const std::size_t n = sa.d0, k = sa.d1;
    for (std::size_t i = 0; i < n; ++i) {
      double acc = 0.0;
      for (std::size_t t = 0; t < k; ++t) acc += x.data[i * k + t] * y.data[t];
      nd.val.data[i] = acc;
    }
  }
  return static_cast<Ref>(live_ - 1);
}

Tape::Ref Tape::add_rowvec(Ref m, Ref v) {
  check_ref(m, "add_rowvec");
  check_ref(v, "add_rowvec");
  const Shape sm = nodes_[m].val.shape;
  const Shape sv = nodes_[v].val.shape;
  if (sm.rank != 2 || sv.rank != 1 || sm.d1 != sv.d0) shape_fail("add_rowvec", sm, sv);
  Node& nd = fresh(Op::AddRowVec);
  nd.a = m;
  nd.b = v;
  const Tensor& x = nodes_[m].val;
  const Tensor& y = nodes_[v].val;
  nd.val.shape = sm;
  nd.val.data.resize(x.numel());
  for (std::size_t i = 0; i < sm.d0; ++i)
    for (std::size_t j = 0; j < sm.d1; ++j)
      nd.val.data[i * sm.d1 + j] = x.data[i * sm.d1 + j] + y.data[j];
  return static_cast<Ref>(live_ - 1);
}

Tape::Ref Tape::sigmoid(Ref a) {
  check_ref(a, "sigmoid");
  Node& nd = fresh(Op::Sigmoid);
  nd.a = a;
  const Tensor& x = nodes_[a].val;
  nd.val.shape = x.shape;
  nd.val.data.resize(x.numel());
  for (std::size_t i = 0; i < x.numel(); ++i) nd.val.data[i] = 1.0 / (1.0 + std::exp(-x.data[i]));
  return static_cast<Ref>(live_ - 1);
}

Tape::Ref Tape::tanh(Ref a) {
  check_ref(a, "tanh");
  Node& nd = fresh(Op::Tanh);
  nd.a = a;
  const Tensor& x = nodes_[a].val;
  nd.val.shape = x.shape;
  nd.val.data.resize(x.numel());
  for (std::size_t i = 0; i < x.numel(); ++i) nd.val.data[i] = std::tanh(x.data[i]);
  return static_cast<Ref>(live_ - 1);
}

Tape::Ref Tape::softmax_rows(Ref a) {
  check_ref(a, "softmax_rows");
  const Shape s = nodes_[a].val.shape;
  if (s.rank == 0) shape_fail("softmax_rows", s, "must be a vector or matrix");
  Node& nd = fresh(Op::SoftmaxRows);
  nd.a = a;
  const Tensor& x = nodes_[a].val;
  nd.val.shape = s;
  nd.val.data = x.data;
  const std::size_t rows = (s.rank == 2) ? s.d0 : 1;
  const std::size_t cols = (s.rank == 2) ? s.d1 : s.d0;
  for (std::size_t i = 0; i < rows; ++i) softmax_row_inplace(nd.val.data.data() + i * cols, cols);
  return static_cast<Ref>(live_ - 1);
}

Tape::Ref Tape::log(Ref a) {
  check_ref(a, "log");
  Node& nd = fresh(Op::Log);
  nd.a = a;
  const Tensor& x = nodes_[a].val;
  nd.val.shape = x.shape;
  nd.val.data.resize(x.numel());
  for (std::size_t i = 0; i < x.numel(); ++i)
    nd.val.data[i] = std::log(std::max(x.data[i], kLogEps));
  return static_cast<Ref>(live_ - 1);
}

Tape::Ref Tape::conv1d(Ref x, Ref kernel) {
  check_ref(x, "conv1d");
  check_ref(kernel, "conv1d");
  const Shape sx = nodes_[x].val.shape;
  const Shape sk = nodes_[kernel].val.shape;
  if (sk.rank != 1 || sk.d0 % 2 == 0) shape_fail("conv1d", sk, "kernel must be an odd-length vector");
  if (sx.rank == 0) shape_fail("conv1d", sx, "input must be a vector or matrix");
  Node& nd = fresh(Op::Conv1d);
  nd.a = x;
  nd.b = kernel;
  const Tensor& xv = nodes_[x].val;
  const Tensor& kv = nodes_[kernel].val;
  nd.val.shape = sx;
  nd.val.data.resize(xv.numel());
  const std::size_t rows = (sx.rank == 2) ? sx.d0 : 1;
  const std::size_t cols = (sx.rank == 2) ? sx.d1 : sx.d0;
  for (std::size_t i = 0; i < rows; ++i)
    conv1d_same(xv.data.data() + i * cols, cols, kv.data.data(), sk.d0,
                nd.val.data.data() + i * cols);
  return static_cast<Ref>(live_ - 1);
}

Tape::Ref Tape::unfold1d(Ref x, int halfwidth) {
  check_ref(x, "unfold1d");
  const Shape sx = nodes_[x].val.shape;
  if (sx.rank != 1) shape_fail("unfold1d", sx, "input must be a vector");
  if (halfwidth < 0) throw Error("unfold1d: halfwidth must be nonnegative");
  Node& nd = fresh(Op::Unfold1d);
  nd.a = x;
  nd.i0 = halfwidth;
  const Tensor& xv = nodes_[x].val;
  const std::size_t n = sx.d0;
  const std::size_t w = 2 * static_cast<std::size_t>(halfwidth) + 1;
  nd.val.shape = Shape::mat(n, w);
  nd.val.data.assign(n * w, 0.0);
  for (std::size_t p = 0; p < n; ++p)
    for (std::size_t j = 0; j < w; ++j) {
      const std::ptrdiff_t q = static_cast<std::ptrdiff_t>(p + j) - halfwidth;
      if (q >= 0 && q < static_cast<std::ptrdiff_t>(n)) nd.val.data[p * w + j] = xv.data[q];
    }
  return static_cast<Ref>(live_ - 1);
}

Tape::Ref Tape::nary(Op op, const Ref* parts, std::size_t count) {
  const char* who = op == Op::ConcatVec ? "concat_vec"
                    : op == Op::ConcatCols ? "concat_cols"
                                           : "stack_rows";
  if (count == 0) throw Error(std::string(who) + ": needs at least one part");
  for (std::size_t i = 0; i < count; ++i) check_ref(parts[i], who);

  if (op == Op::ConcatVec) {
    std::size_t total = 0;
    for (std::size_t i = 0; i < count; ++i) {
      const Shape s = nodes_[parts[i]].val.shape;
      if (s.rank != 1) shape_fail(who, s, "parts must be vectors");
      total += s.d0;
    }
    const std::int32_t pk = push_pack(parts, count);
    Node& nd = fresh(op);
    nd.i0 = pk;
    nd.n = static_cast<std::int32_t>(count);
    nd.val.shape = Shape::vec(total);
    nd.val.data.resize(total);
    std::size_t off = 0;
    for (std::size_t i = 0; i < count; ++i) {
      const Tensor& p = nodes_[packs_[pk + i]].val;
      std::copy(p.data.begin(), p.data.end(), nd.val.data.begin() + off);
      off += p.numel();
    }
    return static_cast<Ref>(live_ - 1);
  }

  if (op == Op::ConcatCols) {
    const Shape first = nodes_[parts[0]].val.shape;
    if (first.rank != 2) shape_fail(who, first, "parts must be matrices");
    std::size_t total_cols = 0;
    for (std::size_t i = 0; i < count; ++i) {
      const Shape s = nodes_[parts[i]].val.shape;
      if (s.rank != 2 || s.d0 != first.d0) shape_fail(who, first, s);
      total_cols += s.d1;
    }
    const std::int32_t pk = push_pack(parts, count);
    Node& nd = fresh(op);
    nd.i0 = pk;
    nd.n = static_cast<std::int32_t>(count);
    nd.val.shape = Shape::mat(first.d0, total_cols);
    nd.val.data.resize(first.d0 * total_cols);
    for (std::size_t r = 0; r < first.d0; ++r) {
      std::size_t off = 0;
      for (std::size_t i = 0; i < count; ++i) {
        const Tensor& p = nodes_[packs_[pk + i]].val;
        const std::size_t c = p.cols();
        std::copy(p.data.begin() + r * c, p.data.begin() + (r + 1) * c,
                  nd.val.data.begin() + r * total_cols + off);
        off += c;
      }
    }
    return static_cast<Ref>(live_ - 1);
  }

  // StackRows
  const Shape first = nodes_[parts[0]].val.shape;
  if (first.rank != 1) shape_fail(who, first, "parts must be vectors");
  for (std::size_t i = 1; i < count; ++i) {
    const Shape s = nodes_[parts[i]].val.shape;
    if (s.rank != 1 || s.d0 != first.d0) shape_fail(who, first, s);
  }
  const std::int32_t pk = push_pack(parts, count);
  Node& nd = fresh(op);
  nd.i0 = pk;
  nd.n = static_cast<std::int32_t>(count);
  nd.val.shape = Shape::mat(count, first.d0);
  nd.val.data.resize(count * first.d0);
  for (std::size_t i = 0; i < count; ++i) {
    const Tensor& p = nodes_[packs_[pk + i]].val;
    std::copy(p.data.begin(), p.data.end(), nd.val.data.begin() + i * first.d0);
  }
  return static_cast<Ref>(live_ - 1);
}

Tape::Ref Tape::concat_vec(std::initializer_list<Ref> parts) {
  return nary(Op::ConcatVec, parts.begin(), parts.size());
}
Tape::Ref Tape::concat_vec(const std::vector<Ref>& parts) {
  return nary(Op::ConcatVec, parts.data(), parts.size());
}
Tape::Ref Tape::concat_cols(std::initializer_list<Ref> parts) {
  return nary(Op::ConcatCols, parts.begin(), parts.size());
}
Tape::Ref Tape::concat_cols(const std::vector<Ref>& parts) {
  return nary(Op::ConcatCols, parts.data(), parts.size());
}
Tape::Ref Tape::stack_rows(const std::vector<Ref>& parts) {
  return nary(Op::StackRows, parts.data(), parts.size());
}

Tape::Ref Tape::sum(Ref a) {
  check_ref(a, "sum");
  Node& nd = fresh(Op::Sum);
  nd.a = a;
  const Tensor& x = nodes_[a].val;
  double acc = 0.0;
  for (double v : x.data) acc += v;
  nd.val.shape = Shape::scalar();
  nd.val.data.assign(1, acc);
  return static_cast<Ref>(live_ - 1);
}

Tape::Ref Tape::mean(Ref a) {
  check_ref(a, "mean");
  Node& nd = fresh(Op::Mean);
  nd.a = a;
  const Tensor& x = nodes_[a].val;
  double acc = 0.0;
  for (double v : x.data) acc += v;
  nd.val.shape = Shape::scalar();
  nd.val.data.assign(1, acc / static_cast<double>(x.numel()));
  return static_cast<Ref>(live_ - 1);
}

Tape::Ref Tape::row(Ref m, int i) {
  check_ref(m, "row");
  const Shape s = nodes_[m].val.shape;
  if (s.rank != 2) shape_fail("row", s, "input must be a matrix");
  if (i < 0 || static_cast<std::size_t>(i) >= s.d0)
    throw Error("row: index " + std::to_string(i) + " out of range for " + s.str());
  Node& nd = fresh(Op::Row);
  nd.a = m;
  nd.i0 = i;
  const Tensor& x = nodes_[m].val;
  nd.val.shape = Shape::vec(s.d1);
  nd.val.data.assign(x.data.begin() + i * s.d1, x.data.begin() + (i + 1) * s.d1);
  return static_cast<Ref>(live_ - 1);
}

Tape::Ref Tape::rows(Ref m, int i0, int n) {
  check_ref(m, "rows");
  const Shape s = nodes_[m].val.shape;
  if (s.rank != 2) shape_fail("rows", s, "input must be a matrix");
  if (i0 < 0 || n <= 0 || static_cast<std::size_t>(i0 + n) > s.d0)
    throw Error("rows: range [" + std::to_string(i0) + "," + std::to_string(i0 + n) +
                ") out of range for " + s.str());
  Node& nd = fresh(Op::Rows);
  nd.a = m;
  nd.i0 = i0;
  nd.n = n;
  const Tensor& x = nodes_[m].val;
  nd.val.shape = Shape::mat(n, s.d1);
  nd.val.data.assign(x.data.begin() + i0 * s.d1, x.data.begin() + (i0 + n) * s.d1);
  return static_cast<Ref>(live_ - 1);
}

Tape::Ref Tape::col(Ref m, int j) {
  check_ref(m, "col");
  const Shape s = nodes_[m].val.shape;
  if (s.rank != 2) shape_fail("col", s, "input must be a matrix");
  if (j < 0 || static_cast<std::size_t>(j) >= s.d1)
    throw Error("col: index " + std::to_string(j) + " out of range for " + s.str());
  Node& nd = fresh(Op::Col);
  nd.a = m;
  nd.i0 = j;
  const Tensor& x = nodes_[m].val;
  nd.val.shape = Shape::vec(s.d0);
  nd.val.data.resize(s.d0);
  for (std::size_t i = 0; i < s.d0; ++i) nd.val.data[i] = x.data[i * s.d1 + j];
  return static_cast<Ref>(live_ - 1);
}

Tape::Ref Tape::transpose(Ref m) {
  check_ref(m, "transpose");
  const Shape s = nodes_[m].val.shape;
  if (s.rank != 2) shape_fail("transpose", s, "input must be a matrix");
  Node& nd = fresh(Op::Transpose);
  nd.a = m;
  const Tensor& x = nodes_[m].val;
  nd.val.shape = Shape::mat(s.d1, s.d0);
  nd.val.data.resize(x.numel());
  for (std::size_t i = 0; i < s.d0; ++i)
    for (std::size_t j = 0; j < s.d1; ++j) nd.val.data[j * s.d0 + i] = x.data[i * s.d1 + j];
  return static_cast<Ref>(live_ - 1);
}

Tape::Ref Tape::reshape(Ref a, Shape s) {
  check_ref(a, "reshape");
  if (nodes_[a].val.numel() != s.numel())
    shape_fail("reshape", nodes_[a].val.shape, s);
  Node& nd = fresh(Op::Reshape);
  nd.a = a;
  nd.aux_shape = s;
  nd.val.shape = s;
  nd.val.data = nodes_[a].val.data;
  return static_cast<Ref>(live_ - 1);
}

Tape::Ref Tape::bce(Ref target, Ref pred) {
  check_ref(target, "bce");
  check_ref(pred, "bce");
  if (nodes_[target].val.shape != nodes_[pred].val.shape)
    shape_fail("bce", nodes_[target].val.shape, nodes_[pred].val.shape);
  Node& nd = fresh(Op::Bce);
  nd.a = target;
  nd.b = pred;
  const Tensor& t = nodes_[target].val;
  const Tensor& p = nodes_[pred].val;
  nd.val.shape = Shape::scalar();
  nd.val.data.assign(1, bce_mean(t.data.data(), p.data.data(), t.numel(), kLogEps));
  return static_cast<Ref>(live_ - 1);
}

Tensor& Tape::ensure_grad(Node& nd) {
  if (!nd.grad_live) {
    nd.grad.shape = nd.val.shape;
    nd.grad.data.assign(nd.val.numel(), 0.0);
    nd.grad_live = true;
  }
  return nd.grad;
}

void Tape::backward(Ref loss) {
  check_ref(loss, "backward");
  Node& top = nodes_[loss];
  if (top.val.shape.rank != 0)
    throw Error("backward: loss must be a scalar, got shape " + top.val.shape.str());
  for (std::size_t i = 0; i < live_; ++i) nodes_[i].grad_live = false;
  ensure_grad(top).data[0] = 1.0;
  for (Ref i = loss; i >= 0; --i) {
    Node& nd = nodes_[i];
    if (!nd.grad_live || nd.op == Op::Input) continue;
    adjoint(nd);
  }
}

void Tape::adjoint(Node& nd) {
  const Tensor& g = nd.grad;
  switch (nd.op) {
    case Op::Input:
      break;
    case Op::Add: {
      Tensor& ga = ensure_grad(nodes_[nd.a]);
      Tensor& gb = ensure_grad(nodes_[nd.b]);
      for (std::size_t i = 0; i < g.numel(); ++i) {
        ga.data[i] += g.data[i];
        gb.data[i] += g.data[i];
      }
      break;
    }
    case Op::Sub: {
      Tensor& ga = ensure_grad(nodes_[nd.a]);
      Tensor& gb = ensure_grad(nodes_[nd.b]);
      for (std::size_t i = 0; i < g.numel(); ++i) {
        ga.data[i] += g.data[i];
        gb.data[i] -= g.data[i];
      }
      break;
    }
    case Op::Mul: {
      const Tensor& x = nodes_[nd.a].val;
      const Tensor& y = nodes_[nd.b].val;
      Tensor& ga = ensure_grad(nodes_[nd.a]);
      Tensor& gb = ensure_grad(nodes_[nd.b]);
      for (std::size_t i = 0; i < g.numel(); ++i) {
        ga.data[i] += g.data[i] * y.data[i];
        gb.data[i] += g.data[i] * x.data[i];
      }
      break;
    }
    case Op::Scale: {
      Tensor& ga = ensure_grad(nodes_[nd.a]);
      for (std::size_t i = 0; i < g.numel(); ++i) ga.data[i] += nd.c * g.data[i];
      break;
    }
    case Op::MatMul: {
      const Tensor& x = nodes_[nd.a].val;
      const Tensor& y = nodes_[nd.b].val;
      Tensor& ga = ensure_grad(nodes_[nd.a]);
      Tensor& gb = ensure_grad(nodes_[nd.b]);
      if (nd.i0 == 0) {
        const std::size_t n = x.rows(), k = x.cols(), m = y.cols();
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t t = 0; t < k; ++t) {
            double acc = 0.0;
            for (std::size_t j = 0; j < m; ++j) acc += g.data[i * m + j] * y.data[t * m + j];
            ga.data[i * k + t] += acc;
          }
        for (std::size_t t = 0; t < k; ++t)
          for (std::size_t j = 0; j < m; ++j) {
            double acc = 0.0;
            for (std::size_t i = 0; i < n; ++i) acc += x.data[i * k + t] * g.data[i * m + j];
            gb.data[t * m + j] += acc;
          }
      } else if (nd.i0 == 1) {
        const std::size_t k = x.numel(), m = y.cols();
        for (std::size_t t = 0; t < k; ++t) {
          double acc = 0.0;
          for (std::size_t j = 0; j < m; ++j) acc += g.data[j] * y.data[t * m + j];
          ga.data[t] += acc;
        }
        for (std::size_t t = 0; t < k; ++t)
          for (std::size_t j = 0; j < m; ++j) gb.data[t * m + j] += x.data[t] * g.data[j];
      } else {
        const std::size_t n = x.rows(), k = x.cols();
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t t = 0; t < k; ++t) {
            ga.data[i * k + t] += g.data[i] * y.data[t];
            gb.data[t] += x.data[i * k + t] * g.data[i];
          }
      }
      break;
    }
    case Op::AddRowVec: {
      const Shape s = nd.val.shape;
      Tensor& gm = ensure_grad(nodes_[nd.a]);
      Tensor& gv = ensure_grad(nodes_[nd.b]);
      for (std::size_t i = 0; i < s.d0; ++i)
        for (std::size_t j = 0; j < s.d1; ++j) {
          gm.data[i * s.d1 + j] += g.data[i * s.d1 + j];
          gv.data[j] += g.data[i * s.d1 + j];
        }
      break;
    }
    case Op::Sigmoid: {
      Tensor& ga = ensure_grad(nodes_[nd.a]);
      for (std::size_t i = 0; i < g.numel(); ++i) {
        const double y = nd.val.data[i];
        ga.data[i] += g.data[i] * y * (1.0 - y);
      }
      break;
    }
    case Op::Tanh: {
      Tensor& ga = ensure_grad(nodes_[nd.a]);
      for (std::size_t i = 0; i < g.numel(); ++i) {
        const double y = nd.val.data[i];
        ga.data[i] += g.data[i] * (1.0 - y * y);
      }
      break;
    }
    case Op::SoftmaxRows: {
      const Shape s = nd.val.shape;
      const std::size_t rows = (s.rank == 2) ? s.d0 : 1;
      const std::size_t cols = (s.rank == 2) ? s.d1 : s.d0;
      Tensor& ga = ensure_grad(nodes_[nd.a]);
      for (std::size_t i = 0; i < rows; ++i) {
        const double* y = nd.val.data.data() + i * cols;
        const double* gr = g.data.data() + i * cols;
        double dot = 0.0;
        for (std::size_t j = 0; j < cols; ++j) dot += gr[j] * y[j];
        for (std::size_t j = 0; j < cols; ++j) ga.data[i * cols + j] += y[j] * (gr[j] - dot);
      }
      break;
    }
    case Op::Log: {
      const Tensor& x = nodes_[nd.a].val;
      Tensor& ga = ensure_grad(nodes_[nd.a]);
      for (std::size_t i = 0; i < g.numel(); ++i)
        if (x.data[i] > kLogEps) ga.data[i] += g.data[i] / x.data[i];
      break;
    }
    case Op::Conv1d: {
      const Tensor& x = nodes_[nd.a].val;
      const Tensor& k = nodes_[nd.b].val;
      Tensor& gx = ensure_grad(nodes_[nd.a]);
      Tensor& gk = ensure_grad(nodes_[nd.b]);
      const Shape s = x.shape;
      const std::size_t rows = (s.rank == 2) ? s.d0 : 1;
      const std::ptrdiff_t cols = static_cast<std::ptrdiff_t>((s.rank == 2) ? s.d1 : s.d0);
      const std::ptrdiff_t hw = static_cast<std::ptrdiff_t>(k.numel() / 2);
      for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = x.data.data() + r * cols;
        const double* gr = g.data.data() + r * cols;
        double* gxr = gx.data.data() + r * cols;
        for (std::ptrdiff_t p = 0; p < cols; ++p) {
          const double gp = gr[p];
          if (gp == 0.0) continue;
          for (std::ptrdiff_t l = -hw; l <= hw; ++l) {
            const std::ptrdiff_t q = p - l;
            if (q >= 0 && q < cols) {
              gxr[q] += gp * k.data[l + hw];
              gk.data[l + hw] += gp * xr[q];
            }
          }
        }
      }
      break;
    }
    case Op::Unfold1d: {
      const std::ptrdiff_t hw = nd.i0;
      const std::size_t n = nd.val.rows();
      const std::size_t w = nd.val.cols();
      Tensor& gx = ensure_grad(nodes_[nd.a]);
      for (std::size_t p = 0; p < n; ++p)
        for (std::size_t j = 0; j < w; ++j) {
          const std::ptrdiff_t q = static_cast<std::ptrdiff_t>(p + j) - hw;
          if (q >= 0 && q < static_cast<std::ptrdiff_t>(n)) gx.data[q] += g.data[p * w + j];
        }
      break;
    }
    case Op::ConcatVec: {
      std::size_t off = 0;
      for (std::int32_t i = 0; i < nd.n; ++i) {
        Node& part = nodes_[packs_[nd.i0 + i]];
        Tensor& gp = ensure_grad(part);
        for (std::size_t j = 0; j < gp.numel(); ++j) gp.data[j] += g.data[off + j];
        off += gp.numel();
      }
      break;
    }
    case Op::ConcatCols: {
      const std::size_t total_cols = nd.val.cols();
      const std::size_t rows = nd.val.rows();
      std::size_t off = 0;
      for (std::int32_t i = 0; i < nd.n; ++i) {
        Node& part = nodes_[packs_[nd.i0 + i]];
        Tensor& gp = ensure_grad(part);
        const std::size_t c = part.val.cols();
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < c; ++j) gp.data[r * c + j] += g.data[r * total_cols + off + j];
        off += c;
      }
      break;
    }
    case Op::StackRows: {
      const std::size_t len = nd.val.cols();
      for (std::int32_t i = 0; i < nd.n; ++i) {
        Node& part = nodes_[packs_[nd.i0 + i]];
        Tensor& gp = ensure_grad(part);
        for (std::size_t j = 0; j < len; ++j) gp.data[j] += g.data[i * len + j];
      }
      break;
    }
    case Op::Sum: {
      Tensor& ga = ensure_grad(nodes_[nd.a]);
      const double gv = g.data[0];
      for (std::size_t i = 0; i < ga.numel(); ++i) ga.data[i] += gv;
      break;
    }
    case Op::Mean: {
      Tensor& ga = ensure_grad(nodes_[nd.a]);
      const double gv = g.data[0] / static_cast<double>(ga.numel());
      for (std::size_t i = 0; i < ga.numel(); ++i) ga.data[i] += gv;
      break;
    }
    case Op::Row: {
      Tensor& ga = ensure_grad(nodes_[nd.a]);
      const std::size_t c = ga.cols();
      for (std::size_t j = 0; j < c; ++j) ga.data[nd.i0 * c + j] += g.data[j];
      break;
    }
    case Op::Rows: {
      Tensor& ga = ensure_grad(nodes_[nd.a]);
      const std::size_t c = ga.cols();
      for (std::size_t i = 0; i < static_cast<std::size_t>(nd.n); ++i)
        for (std::size_t j = 0; j < c; ++j) ga.data[(nd.i0 + i) * c + j] += g.data[i * c + j];
      break;
    }
    case Op::Col: {
      Tensor& ga = ensure_grad(nodes_[nd.a]);
      const std::size_t c = ga.cols();
      for (std::size_t i = 0; i < ga.rows(); ++i) ga.data[i * c + nd.i0] += g.data[i];
      break;
    }
    case Op::Transpose: {
      Tensor& ga = ensure_grad(nodes_[nd.a]);
      const std::size_t r = ga.rows(), c = ga.cols();
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) ga.data[i * c + j] += g.data[j * r + i];
      break;
    }
    case Op::Reshape: {
      Tensor& ga = ensure_grad(nodes_[nd.a]);
      for (std::size_t i = 0; i < g.numel(); ++i) ga.data[i] += g.data[i];
      break;
    }
    case Op::Bce: {
      const Tensor& t = nodes_[nd.a].val;
      const Tensor& p = nodes_[nd.b].val;
      Tensor& gt = ensure_grad(nodes_[nd.a]);
      Tensor& gp = ensure_grad(nodes_[nd.b]);
      const double gv = g.data[0] / static_cast<double>(t.numel());
      for (std::size_t i = 0; i < t.numel(); ++i) {
        const double pc = std::min(std::max(p.data[i], kLogEps), 1.0 - kLogEps);
        if (p.data[i] > kLogEps && p.data[i] < 1.0 - kLogEps)
          gp.data[i] += gv * (-t.data[i] / pc + (1.0 - t.data[i]) / (1.0 - pc));
        gt.data[i] += gv * (std::log(1.0 - pc) - std::log(pc));
      }
      break;
    }
  }
}

std::vector<Tensor> Tape::gradients(Ref loss, const std::vector<Ref>& wrt) {
  backward(loss);
  std::vector<Tensor> out;
  out.reserve(wrt.size());
  for (Ref r : wrt) {
    check_ref(r, "gradients");
    if (nodes_[r].grad_live)
      out.push_back(nodes_[r].grad);
    else
      out.push_back(Tensor::zeros(nodes_[r].val.shape));
  }
  return out;
}

void Tape::reset() {
  live_ = 0;
  packs_live_ = 0;
}

}  // namespace nidlab
