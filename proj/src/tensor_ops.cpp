#include <Eigen/Core>
#include <algorithm>
#include <cmath>

#include "softmesh/tensor.hpp"

SOFTMESH_BEGIN_NAMESPACE

namespace {

using RowMatrix =
    Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMatrix>;
using ConstMatMap = Eigen::Map<const RowMatrix>;

[[noreturn]] void shape_fail(const char* op, const std::string& detail) {
  throw ShapeError(std::string(op) + ": " + detail);
}

Shape broadcast_shape(const char* op, const Shape& a, const Shape& b) {
  const std::size_t rank = std::max(a.size(), b.size());
  Shape out(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    const std::int64_t da =
        i < rank - a.size() ? 1 : a[i - (rank - a.size())];
    const std::int64_t db =
        i < rank - b.size() ? 1 : b[i - (rank - b.size())];
    if (da != db && da != 1 && db != 1) {
      shape_fail(op, "cannot broadcast " + shape_string(a) + " with " +
                         shape_string(b) + " (dimension " + std::to_string(i) +
                         ": " + std::to_string(da) + " vs " +
                         std::to_string(db) + ")");
    }
    out[i] = std::max(da, db);
  }
  return out;
}

// Maps every flat index of `out` to the flat index of `in` under numpy
// broadcasting. Fixed iteration order.
std::vector<std::int64_t> broadcast_index(const Shape& in, const Shape& out) {
  const std::size_t rank = out.size();
  std::vector<std::int64_t> in_stride(rank, 0);
  std::int64_t stride = 1;
  for (std::size_t k = 0; k < in.size(); ++k) {
    const std::size_t i = in.size() - 1 - k;
    const std::size_t o = rank - 1 - k;
    in_stride[o] = in[i] == 1 ? 0 : stride;
    stride *= in[i];
  }
  const std::int64_t n = numel_of(out);
  std::vector<std::int64_t> map(static_cast<std::size_t>(n));
  std::vector<std::int64_t> idx(rank, 0);
  std::int64_t src = 0;
  for (std::int64_t flat = 0; flat < n; ++flat) {
    map[static_cast<std::size_t>(flat)] = src;
    for (std::size_t d = rank; d-- > 0;) {
      ++idx[d];
      src += in_stride[d];
      if (idx[d] < out[d]) break;
      src -= in_stride[d] * idx[d];
      idx[d] = 0;
    }
  }
  return map;
}

template <class Fwd, class Dfdx>
Tensor unary(OpKind kind, const Tensor& a, Fwd f, Dfdx dfdx) {
  const auto x = a.data();
  std::vector<Real> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  return make_result(kind, a.shape(), std::move(y), {a}, [dfdx](Node& self) {
    Node& in = *self.inputs[0];
    if (!in.requires_grad) return;
    auto& g = in.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      g[i] += self.grad[i] * dfdx(in.data[i], self.data[i]);
    }
  });
}

// Elementwise binary op on equal shapes; callers broadcast first.
template <class Fwd, class Da, class Db>
Tensor binary(OpKind kind, const Tensor& a0, const Tensor& b0, Fwd f, Da da,
              Db db) {
  Tensor a = a0, b = b0;
  if (a.shape() != b.shape()) {
    Shape out = broadcast_shape(op_name(kind), a.shape(), b.shape());
    if (a.shape() != out) a = broadcast_to(a, out);
    if (b.shape() != out) b = broadcast_to(b, out);
  }
  const auto x = a.data();
  const auto z = b.data();
  std::vector<Real> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i], z[i]);
  return make_result(kind, a.shape(), std::move(y), {a, b},
                     [da, db](Node& self) {
                       Node& na = *self.inputs[0];
                       Node& nb = *self.inputs[1];
                       if (na.requires_grad) {
                         auto& g = na.grad_buffer();
                         for (std::size_t i = 0; i < g.size(); ++i) {
                           g[i] += self.grad[i] *
                                   da(na.data[i], nb.data[i], self.data[i]);
                         }
                       }
                       if (nb.requires_grad) {
                         auto& g = nb.grad_buffer();
                         for (std::size_t i = 0; i < g.size(); ++i) {
                           g[i] += self.grad[i] *
                                   db(na.data[i], nb.data[i], self.data[i]);
                         }
                       }
                     });
}

int normalize_axis(const char* op, int axis, std::size_t rank) {
  const int r = static_cast<int>(rank);
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) {
    shape_fail(op, "axis " + std::to_string(axis) + " out of range for rank " +
                       std::to_string(rank));
  }
  return axis;
}

struct AxisSplit {
  std::int64_t outer = 1;
  std::int64_t extent = 1;
  std::int64_t inner = 1;
};

AxisSplit split_axis(const Shape& shape, int axis) {
  AxisSplit s;
  for (int i = 0; i < axis; ++i) s.outer *= shape[static_cast<std::size_t>(i)];
  s.extent = shape[static_cast<std::size_t>(axis)];
  for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < shape.size();
       ++i) {
    s.inner *= shape[i];
  }
  return s;
}

Real stable_softplus(Real x) {
  return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

Real stable_sigmoid(Real x) {
  if (x >= 0) {
    const Real e = std::exp(-x);
    return Real(1) / (Real(1) + e);
  }
  const Real e = std::exp(x);
  return e / (Real(1) + e);
}

}  // namespace

Tensor broadcast_to(const Tensor& a, const Shape& shape) {
  const Shape out = broadcast_shape("broadcast", a.shape(), shape);
  if (out != shape) {
    shape_fail("broadcast", "cannot broadcast " + shape_string(a.shape()) +
                                " to " + shape_string(shape));
  }
  auto map = std::make_shared<std::vector<std::int64_t>>(
      broadcast_index(a.shape(), shape));
  const auto x = a.data();
  std::vector<Real> y(map->size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    y[i] = x[static_cast<std::size_t>((*map)[i])];
  }
  return make_result(OpKind::broadcast, shape, std::move(y), {a},
                     [map](Node& self) {
                       auto& g = self.inputs[0]->grad_buffer();
                       for (std::size_t i = 0; i < map->size(); ++i) {
                         g[static_cast<std::size_t>((*map)[i])] += self.grad[i];
                       }
                     });
}

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      OpKind::add, a, b, [](Real x, Real z) { return x + z; },
      [](Real, Real, Real) { return Real(1); },
      [](Real, Real, Real) { return Real(1); });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      OpKind::sub, a, b, [](Real x, Real z) { return x - z; },
      [](Real, Real, Real) { return Real(1); },
      [](Real, Real, Real) { return Real(-1); });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      OpKind::mul, a, b, [](Real x, Real z) { return x * z; },
      [](Real, Real z, Real) { return z; },
      [](Real x, Real, Real) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary(
      OpKind::div, a, b, [](Real x, Real z) { return x / z; },
      [](Real, Real z, Real) { return Real(1) / z; },
      [](Real, Real z, Real y) { return -y / z; });
}

Tensor atan2(const Tensor& y, const Tensor& x) {
  return binary(
      OpKind::atan2, y, x,
      [](Real yy, Real xx) {
        return (yy == 0 && xx == 0) ? Real(0) : std::atan2(yy, xx);
      },
      [](Real yy, Real xx, Real) {
        const Real r2 = xx * xx + yy * yy;
        return r2 > 0 ? xx / r2 : Real(0);
      },
      [](Real yy, Real xx, Real) {
        const Real r2 = xx * xx + yy * yy;
        return r2 > 0 ? -yy / r2 : Real(0);
      });
}

Tensor negate(const Tensor& a) {
  return unary(
      OpKind::negate, a, [](Real x) { return -x; },
      [](Real, Real) { return Real(-1); });
}

Tensor add_scalar(const Tensor& a, Real s) {
  return unary(
      OpKind::add, a, [s](Real x) { return x + s; },
      [](Real, Real) { return Real(1); });
}

Tensor mul_scalar(const Tensor& a, Real s) {
  return unary(
      OpKind::mul, a, [s](Real x) { return x * s; },
      [s](Real, Real) { return s; });
}

Tensor relu(const Tensor& a) {
  return unary(
      OpKind::relu, a, [](Real x) { return x > 0 ? x : Real(0); },
      [](Real x, Real) { return x > 0 ? Real(1) : Real(0); });
}

Tensor tanh(const Tensor& a) {
  return unary(
      OpKind::tanh, a, [](Real x) { return std::tanh(x); },
      [](Real, Real y) { return Real(1) - y * y; });
}

Tensor sigmoid(const Tensor& a) {
  return unary(OpKind::sigmoid, a, stable_sigmoid,
               [](Real, Real y) { return y * (Real(1) - y); });
}

Tensor exp(const Tensor& a) {
  return unary(
      OpKind::exp, a, [](Real x) { return std::exp(x); },
      [](Real, Real y) { return y; });
}

Tensor log(const Tensor& a) {
  return unary(
      OpKind::log, a, [](Real x) { return std::log(x); },
      [](Real x, Real) { return Real(1) / x; });
}

Tensor abs(const Tensor& a) {
  return unary(
      OpKind::abs, a, [](Real x) { return std::abs(x); },
      [](Real x, Real) {
        return x > 0 ? Real(1) : (x < 0 ? Real(-1) : Real(0));
      });
}

Tensor softplus(const Tensor& a) {
  return unary(OpKind::softplus, a, stable_softplus,
               [](Real x, Real) { return stable_sigmoid(x); });
}

Tensor clamp(const Tensor& a, Real lo, Real hi) {
  if (!(lo <= hi)) shape_fail("clamp", "lo > hi");
  return unary(
      OpKind::clamp, a, [lo, hi](Real x) { return std::clamp(x, lo, hi); },
      [lo, hi](Real x, Real) {
        return (x >= lo && x <= hi) ? Real(1) : Real(0);
      });
}

Tensor sum(const Tensor& a) {
  Real total = 0;
  for (Real v : a.data()) total += v;
  return make_result(OpKind::sum, {}, {total}, {a}, [](Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    const Real s = self.grad[0];
    for (auto& v : g) v += s;
  });
}

Tensor mean(const Tensor& a) {
  const auto n = static_cast<Real>(a.numel());
  Real total = 0;
  for (Real v : a.data()) total += v;
  return make_result(OpKind::mean, {}, {total / n}, {a}, [n](Node& self) {
    auto& g = self.inputs[0]->grad_buffer();
    const Real s = self.grad[0] / n;
    for (auto& v : g) v += s;
  });
}

namespace {
Tensor reduce_axis(OpKind kind, const Tensor& a, int axis, Real scale) {
  axis = normalize_axis(op_name(kind), axis, a.rank());
  const AxisSplit s = split_axis(a.shape(), axis);
  Shape out_shape = a.shape();
  out_shape.erase(out_shape.begin() + axis);
  const auto x = a.data();
  std::vector<Real> y(static_cast<std::size_t>(s.outer * s.inner), Real(0));
  for (std::int64_t o = 0; o < s.outer; ++o) {
    for (std::int64_t k = 0; k < s.extent; ++k) {
      const Real* src = x.data() + (o * s.extent + k) * s.inner;
      Real* dst = y.data() + o * s.inner;
      for (std::int64_t i = 0; i < s.inner; ++i) dst[i] += src[i];
    }
  }
  if (scale != Real(1)) {
    for (auto& v : y) v *= scale;
  }
  return make_result(kind, std::move(out_shape), std::move(y), {a},
                     [s, scale](Node& self) {
                       auto& g = self.inputs[0]->grad_buffer();
                       for (std::int64_t o = 0; o < s.outer; ++o) {
                         const Real* src = self.grad.data() + o * s.inner;
                         for (std::int64_t k = 0; k < s.extent; ++k) {
                           Real* dst = g.data() + (o * s.extent + k) * s.inner;
                           for (std::int64_t i = 0; i < s.inner; ++i) {
                             dst[i] += src[i] * scale;
                           }
                         }
                       }
                     });
}
}  // namespace

Tensor sum(const Tensor& a, int axis) {
  return reduce_axis(OpKind::sum, a, axis, Real(1));
}

Tensor mean(const Tensor& a, int axis) {
  const int ax = normalize_axis("mean", axis, a.rank());
  return reduce_axis(OpKind::mean, a, ax,
                     Real(1) / static_cast<Real>(a.shape()[ax]));
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (numel_of(shape) != a.numel()) {
    shape_fail("reshape", "cannot reshape " + shape_string(a.shape()) +
                              " to " + shape_string(shape));
  }
  std::vector<Real> y(a.data().begin(), a.data().end());
  return make_result(OpKind::reshape, std::move(shape), std::move(y), {a},
                     [](Node& self) {
                       auto& g = self.inputs[0]->grad_buffer();
                       for (std::size_t i = 0; i < g.size(); ++i) {
                         g[i] += self.grad[i];
                       }
                     });
}

Tensor concat(std::initializer_list<Tensor> parts, int axis) {
  return concat(std::span<const Tensor>(parts.begin(), parts.size()), axis);
}

Tensor concat(std::span<const Tensor> parts, int axis) {
  if (parts.empty()) shape_fail("concat", "no inputs");
  const Shape& first = parts[0].shape();
  axis = normalize_axis("concat", axis, first.size());
  Shape out_shape = first;
  out_shape[static_cast<std::size_t>(axis)] = 0;
  for (const auto& p : parts) {
    if (p.rank() != first.size()) {
      shape_fail("concat", "rank mismatch " + shape_string(first) + " vs " +
                               shape_string(p.shape()));
    }
    for (std::size_t d = 0; d < first.size(); ++d) {
      if (static_cast<int>(d) != axis && p.shape()[d] != first[d]) {
        shape_fail("concat", "dimension " + std::to_string(d) + " mismatch " +
                                 shape_string(first) + " vs " +
                                 shape_string(p.shape()));
      }
    }
    out_shape[static_cast<std::size_t>(axis)] +=
        p.shape()[static_cast<std::size_t>(axis)];
  }
  const AxisSplit total = split_axis(out_shape, axis);
  std::vector<Real> y(static_cast<std::size_t>(numel_of(out_shape)));
  std::vector<std::int64_t> offsets;
  std::int64_t offset = 0;
  for (const auto& p : parts) {
    const AxisSplit s = split_axis(p.shape(), axis);
    const std::int64_t block = s.extent * s.inner;
    for (std::int64_t o = 0; o < s.outer; ++o) {
      std::copy_n(p.data().data() + o * block, block,
                  y.data() + o * total.extent * total.inner + offset * s.inner);
    }
    offsets.push_back(offset);
    offset += s.extent;
  }
  std::vector<Tensor> inputs(parts.begin(), parts.end());
  return make_result(
      OpKind::concat, std::move(out_shape), std::move(y), std::move(inputs),
      [total, offsets, axis](Node& self) {
        for (std::size_t k = 0; k < self.inputs.size(); ++k) {
          Node& in = *self.inputs[k];
          if (!in.requires_grad) continue;
          const AxisSplit s = split_axis(in.shape, axis);
          const std::int64_t block = s.extent * s.inner;
          auto& g = in.grad_buffer();
          for (std::int64_t o = 0; o < s.outer; ++o) {
            const Real* src = self.grad.data() +
                              o * total.extent * total.inner +
                              offsets[k] * s.inner;
            Real* dst = g.data() + o * block;
            for (std::int64_t i = 0; i < block; ++i) dst[i] += src[i];
          }
        }
      });
}

Tensor slice(const Tensor& a, int axis, std::int64_t start,
             std::int64_t stop) {
  axis = normalize_axis("slice", axis, a.rank());
  const AxisSplit s = split_axis(a.shape(), axis);
  if (start < 0 || stop > s.extent || start >= stop) {
    shape_fail("slice", "range [" + std::to_string(start) + "," +
                            std::to_string(stop) + ") invalid for axis " +
                            std::to_string(axis) + " of " +
                            shape_string(a.shape()));
  }
  Shape out_shape = a.shape();
  out_shape[static_cast<std::size_t>(axis)] = stop - start;
  const std::int64_t len = (stop - start) * s.inner;
  std::vector<Real> y(static_cast<std::size_t>(s.outer * len));
  for (std::int64_t o = 0; o < s.outer; ++o) {
    std::copy_n(a.data().data() + (o * s.extent + start) * s.inner, len,
                y.data() + o * len);
  }
  return make_result(OpKind::slice, std::move(out_shape), std::move(y), {a},
                     [s, start, len](Node& self) {
                       auto& g = self.inputs[0]->grad_buffer();
                       for (std::int64_t o = 0; o < s.outer; ++o) {
                         Real* dst =
                             g.data() + (o * s.extent + start) * s.inner;
                         const Real* src = self.grad.data() + o * len;
                         for (std::int64_t i = 0; i < len; ++i) {
                           dst[i] += src[i];
                         }
                       }
                     });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0]) {
    shape_fail("matmul", "incompatible " + shape_string(a.shape()) + " x " +
                             shape_string(b.shape()));
  }
  const auto m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  std::vector<Real> y(static_cast<std::size_t>(m * n));
  MatMap(y.data(), m, n).noalias() =
      ConstMatMap(a.data().data(), m, k) * ConstMatMap(b.data().data(), k, n);
  return make_result(
      OpKind::matmul, {m, n}, std::move(y), {a, b}, [m, k, n](Node& self) {
        Node& na = *self.inputs[0];
        Node& nb = *self.inputs[1];
        ConstMatMap g(self.grad.data(), m, n);
        if (na.requires_grad) {
          MatMap(na.grad_buffer().data(), m, k).noalias() +=
              g * ConstMatMap(nb.data.data(), k, n).transpose();
        }
        if (nb.requires_grad) {
          MatMap(nb.grad_buffer().data(), k, n).noalias() +=
              ConstMatMap(na.data.data(), m, k).transpose() * g;
        }
      });
}

Tensor conv2d(const Tensor& input, const Tensor& weight, int stride,
              int padding) {
  if (input.rank() != 4 || weight.rank() != 4) {
    shape_fail("conv2d", "expected input [N,H,W,C] and weight [KH,KW,Cin,Cout]"
                         ", got " +
                             shape_string(input.shape()) + " and " +
                             shape_string(weight.shape()));
  }
  if (stride < 1 || padding < 0) shape_fail("conv2d", "bad stride/padding");
  const auto n = input.shape()[0], h = input.shape()[1], w = input.shape()[2],
             cin = input.shape()[3];
  const auto kh = weight.shape()[0], kw = weight.shape()[1],
             cout = weight.shape()[3];
  if (weight.shape()[2] != cin) {
    shape_fail("conv2d", "input channels " + std::to_string(cin) +
                             " vs weight channels " +
                             std::to_string(weight.shape()[2]));
  }
  const auto ho = (h + 2 * padding - kh) / stride + 1;
  const auto wo = (w + 2 * padding - kw) / stride + 1;
  if (ho <= 0 || wo <= 0) shape_fail("conv2d", "kernel larger than input");
  const auto rows = n * ho * wo;
  const auto cols = kh * kw * cin;

  // im2col: one row per output location, zero padded.
  auto patches = std::make_shared<std::vector<Real>>(
      static_cast<std::size_t>(rows * cols), Real(0));
  const Real* x = input.data().data();
  for (std::int64_t b = 0; b < n; ++b) {
    for (std::int64_t oy = 0; oy < ho; ++oy) {
      for (std::int64_t ox = 0; ox < wo; ++ox) {
        Real* row = patches->data() + ((b * ho + oy) * wo + ox) * cols;
        for (std::int64_t ky = 0; ky < kh; ++ky) {
          const std::int64_t iy = oy * stride - padding + ky;
          if (iy < 0 || iy >= h) continue;
          for (std::int64_t kx = 0; kx < kw; ++kx) {
            const std::int64_t ix = ox * stride - padding + kx;
            if (ix < 0 || ix >= w) continue;
            std::copy_n(x + ((b * h + iy) * w + ix) * cin, cin,
                        row + (ky * kw + kx) * cin);
          }
        }
      }
    }
  }
  std::vector<Real> y(static_cast<std::size_t>(rows * cout));
  MatMap(y.data(), rows, cout).noalias() =
      ConstMatMap(patches->data(), rows, cols) *
      ConstMatMap(weight.data().data(), cols, cout);

  const bool keep_patches = weight.requires_grad();
  return make_result(
      OpKind::conv2d, {n, ho, wo, cout}, std::move(y), {input, weight},
      [=, patches = keep_patches ? patches : nullptr](Node& self) {
        Node& nx = *self.inputs[0];
        Node& nw = *self.inputs[1];
        ConstMatMap g(self.grad.data(), rows, cout);
        if (nw.requires_grad) {
          MatMap(nw.grad_buffer().data(), cols, cout).noalias() +=
              ConstMatMap(patches->data(), rows, cols).transpose() * g;
        }
        if (nx.requires_grad) {
          std::vector<Real> gp(static_cast<std::size_t>(rows * cols));
          MatMap(gp.data(), rows, cols).noalias() =
              g * ConstMatMap(nw.data.data(), cols, cout).transpose();
          auto& gx = nx.grad_buffer();
          for (std::int64_t b = 0; b < n; ++b) {
            for (std::int64_t oy = 0; oy < ho; ++oy) {
              for (std::int64_t ox = 0; ox < wo; ++ox) {
                const Real* row = gp.data() + ((b * ho + oy) * wo + ox) * cols;
                for (std::int64_t ky = 0; ky < kh; ++ky) {
                  const std::int64_t iy = oy * stride - padding + ky;
                  if (iy < 0 || iy >= h) continue;
                  for (std::int64_t kx = 0; kx < kw; ++kx) {
                    const std::int64_t ix = ox * stride - padding + kx;
                    if (ix < 0 || ix >= w) continue;
                    Real* dst = gx.data() + ((b * h + iy) * w + ix) * cin;
                    const Real* src = row + (ky * kw + kx) * cin;
                    for (std::int64_t c = 0; c < cin; ++c) dst[c] += src[c];
                  }
                }
              }
            }
          }
        }
      });
}

Tensor softmax_cross_entropy(const Tensor& logits,
                             std::span<const std::int64_t> labels,
                             std::span<const Real> weights) {
  if (logits.rank() != 2) {
    shape_fail("softmax_cross_entropy",
               "logits must be [K,C], got " + shape_string(logits.shape()));
  }
  const auto k = logits.shape()[0], c = logits.shape()[1];
  if (static_cast<std::int64_t>(labels.size()) != k ||
      static_cast<std::int64_t>(weights.size()) != k) {
    shape_fail("softmax_cross_entropy",
               "labels/weights length must equal " + std::to_string(k));
  }
  // Softmax probabilities are kept for the backward rule.
  auto probs = std::make_shared<std::vector<Real>>(
      static_cast<std::size_t>(k * c));
  const Real* z = logits.data().data();
  Real total = 0;
  for (std::int64_t r = 0; r < k; ++r) {
    const std::int64_t label = labels[static_cast<std::size_t>(r)];
    if (label < 0 || label >= c) {
      shape_fail("softmax_cross_entropy",
                 "label " + std::to_string(label) + " out of range");
    }
    const Real* row = z + r * c;
    const Real mx = *std::max_element(row, row + c);
    Real denom = 0;
    for (std::int64_t j = 0; j < c; ++j) denom += std::exp(row[j] - mx);
    const Real lse = mx + std::log(denom);
    for (std::int64_t j = 0; j < c; ++j) {
      (*probs)[static_cast<std::size_t>(r * c + j)] =
          std::exp(row[j] - lse);
    }
    total += weights[static_cast<std::size_t>(r)] * (lse - row[label]);
  }
  std::vector<std::int64_t> lab(labels.begin(), labels.end());
  std::vector<Real> wts(weights.begin(), weights.end());
  return make_result(OpKind::softmax_cross_entropy, {}, {total}, {logits},
                     [=](Node& self) {
                       auto& g = self.inputs[0]->grad_buffer();
                       const Real s = self.grad[0];
                       for (std::int64_t r = 0; r < k; ++r) {
                         const Real wr = wts[static_cast<std::size_t>(r)] * s;
                         if (wr == 0) continue;
                         for (std::int64_t j = 0; j < c; ++j) {
                           const auto idx = static_cast<std::size_t>(r * c + j);
                           g[idx] += wr * ((*probs)[idx] -
                                           (j == lab[static_cast<std::size_t>(
                                                     r)]
                                                ? Real(1)
                                                : Real(0)));
                         }
                       }
                     });
}

Tensor grid_sample(const Tensor& map, const Tensor& coords) {
  if (map.rank() != 3 || coords.rank() != 2 || coords.shape()[1] != 2) {
    shape_fail("grid_sample", "expected map [H,W,C] and coords [K,2], got " +
                                  shape_string(map.shape()) + " and " +
                                  shape_string(coords.shape()));
  }
  const auto h = map.shape()[0], w = map.shape()[1], c = map.shape()[2];
  const auto k = coords.shape()[0];

  struct Tap {
    std::int64_t x0, y0, x1, y1;
    Real fx, fy;
    Real dx_scale, dy_scale;  // d(pixel coord)/d(normalized), 0 if clamped
  };
  auto taps = std::make_shared<std::vector<Tap>>(static_cast<std::size_t>(k));
  const Real* m = map.data().data();
  const Real* q = coords.data().data();
  std::vector<Real> y(static_cast<std::size_t>(k * c));
  for (std::int64_t i = 0; i < k; ++i) {
    Tap t{};
    const Real sx = (w > 1) ? Real(0.5) * Real(w - 1) : Real(0);
    const Real sy = (h > 1) ? Real(0.5) * Real(h - 1) : Real(0);
    Real px = (q[2 * i] + Real(1)) * sx;
    Real py = (q[2 * i + 1] + Real(1)) * sy;
    t.dx_scale = sx;
    t.dy_scale = sy;
    if (px <= 0) {
      px = 0;
      t.dx_scale = 0;
    } else if (px >= Real(w - 1)) {
      px = Real(w - 1);
      t.dx_scale = 0;
    }
    if (py <= 0) {
      py = 0;
      t.dy_scale = 0;
    } else if (py >= Real(h - 1)) {
      py = Real(h - 1);
      t.dy_scale = 0;
    }
    t.x0 = std::min<std::int64_t>(static_cast<std::int64_t>(std::floor(px)),
                                  std::max<std::int64_t>(w - 2, 0));
    t.y0 = std::min<std::int64_t>(static_cast<std::int64_t>(std::floor(py)),
                                  std::max<std::int64_t>(h - 2, 0));
    t.x1 = std::min<std::int64_t>(t.x0 + 1, w - 1);
    t.y1 = std::min<std::int64_t>(t.y0 + 1, h - 1);
    t.fx = px - Real(t.x0);
    t.fy = py - Real(t.y0);
    const Real* p00 = m + (t.y0 * w + t.x0) * c;
    const Real* p01 = m + (t.y0 * w + t.x1) * c;
    const Real* p10 = m + (t.y1 * w + t.x0) * c;
    const Real* p11 = m + (t.y1 * w + t.x1) * c;
    for (std::int64_t ch = 0; ch < c; ++ch) {
      const Real top = p00[ch] + t.fx * (p01[ch] - p00[ch]);
      const Real bot = p10[ch] + t.fx * (p11[ch] - p10[ch]);
      y[static_cast<std::size_t>(i * c + ch)] = top + t.fy * (bot - top);
    }
    (*taps)[static_cast<std::size_t>(i)] = t;
  }
  return make_result(
      OpKind::grid_sample, {k, c}, std::move(y), {map, coords},
      [taps, w, c, k](Node& self) {
        Node& nm = *self.inputs[0];
        Node& nc = *self.inputs[1];
        Real* gm = nm.requires_grad ? nm.grad_buffer().data() : nullptr;
        Real* gc = nc.requires_grad ? nc.grad_buffer().data() : nullptr;
        const Real* m = nm.data.data();
        for (std::int64_t i = 0; i < k; ++i) {
          const Tap& t = (*taps)[static_cast<std::size_t>(i)];
          const Real* g = self.grad.data() + i * c;
          const auto o00 = (t.y0 * w + t.x0) * c, o01 = (t.y0 * w + t.x1) * c,
                     o10 = (t.y1 * w + t.x0) * c, o11 = (t.y1 * w + t.x1) * c;
          Real gx = 0, gy = 0;
          for (std::int64_t ch = 0; ch < c; ++ch) {
            if (gm) {
              gm[o00 + ch] += g[ch] * (1 - t.fx) * (1 - t.fy);
              gm[o01 + ch] += g[ch] * t.fx * (1 - t.fy);
              gm[o10 + ch] += g[ch] * (1 - t.fx) * t.fy;
              gm[o11 + ch] += g[ch] * t.fx * t.fy;
            }
            const Real v00 = m[o00 + ch], v01 = m[o01 + ch],
                       v10 = m[o10 + ch], v11 = m[o11 + ch];
            gx += g[ch] * ((v01 - v00) * (1 - t.fy) + (v11 - v10) * t.fy);
            gy += g[ch] * ((v10 - v00) * (1 - t.fx) + (v11 - v01) * t.fx);
          }
          if (gc) {
            gc[2 * i] += gx * t.dx_scale;
            gc[2 * i + 1] += gy * t.dy_scale;
          }
        }
      });
}

Tensor apply(OpKind kind, std::span<const Tensor> in, const OpAttrs& attrs) {
  auto need = [&](std::size_t n) {
    if (in.size() != n) {
      shape_fail(op_name(kind), "expected " + std::to_string(n) +
                                    " inputs, got " +
                                    std::to_string(in.size()));
    }
  };
  switch (kind) {
    case OpKind::add: need(2); return add(in[0], in[1]);
    case OpKind::sub: need(2); return sub(in[0], in[1]);
    case OpKind::mul: need(2); return mul(in[0], in[1]);
    case OpKind::div: need(2); return div(in[0], in[1]);
    case OpKind::atan2: need(2); return atan2(in[0], in[1]);
    case OpKind::negate: need(1); return negate(in[0]);
    case OpKind::matmul: need(2); return matmul(in[0], in[1]);
    case OpKind::conv2d:
      need(2);
      return conv2d(in[0], in[1], attrs.stride, attrs.padding);
    case OpKind::relu: need(1); return relu(in[0]);
    case OpKind::tanh: need(1); return tanh(in[0]);
    case OpKind::sigmoid: need(1); return sigmoid(in[0]);
    case OpKind::exp: need(1); return exp(in[0]);
    case OpKind::log: need(1); return log(in[0]);
    case OpKind::abs: need(1); return abs(in[0]);
    case OpKind::softplus: need(1); return softplus(in[0]);
    case OpKind::clamp: need(1); return clamp(in[0], attrs.lo, attrs.hi);
    case OpKind::sum:
      need(1);
      return attrs.axis < 0 ? sum(in[0]) : sum(in[0], attrs.axis);
    case OpKind::mean:
      need(1);
      return attrs.axis < 0 ? mean(in[0]) : mean(in[0], attrs.axis);
    case OpKind::broadcast: need(1); return broadcast_to(in[0], attrs.shape);
    case OpKind::reshape: need(1); return reshape(in[0], attrs.shape);
    case OpKind::concat: return concat(in, attrs.axis < 0 ? 0 : attrs.axis);
    case OpKind::slice:
      need(1);
      return slice(in[0], attrs.axis < 0 ? 0 : attrs.axis, attrs.start,
                   attrs.stop);
    case OpKind::softmax_cross_entropy:
      need(1);
      return softmax_cross_entropy(in[0], attrs.labels, attrs.weights);
    case OpKind::grid_sample: need(2); return grid_sample(in[0], in[1]);
    case OpKind::leaf:
    case OpKind::custom:
      break;
  }
  shape_fail(op_name(kind), "not dispatchable through apply");
}

SOFTMESH_END_NAMESPACE
