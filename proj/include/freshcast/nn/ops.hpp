#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include <Eigen/Core>

#include "freshcast/nn/tensor.hpp"

// Differentiable tensor operations. Every op computes its forward value
// eagerly and, when recording, installs a closure that accumulates into the
// parents' gradients.

namespace freshcast::nn {

namespace detail {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MapMat = Eigen::Map<RowMat<T>>;
template <class T>
using CMapMat = Eigen::Map<const RowMat<T>>;

inline Shape broadcast_shape(const Shape& a, const Shape& b) {
  const std::size_t r = std::max(a.size(), b.size());
  Shape out(r);
  for (std::size_t i = 0; i < r; ++i) {
    const std::int64_t da = i < r - a.size() ? 1 : a[i - (r - a.size())];
    const std::int64_t db = i < r - b.size() ? 1 : b[i - (r - b.size())];
    if (da != db && da != 1 && db != 1)
      throw ShapeError("cannot broadcast " + to_string(a) + " with " + to_string(b));
    out[i] = std::max(da, db);
  }
  return out;
}

// Strides of `in` aligned to `out`, zero along broadcast axes.
inline std::vector<std::size_t> broadcast_strides(const Shape& in, const Shape& out) {
  std::vector<std::size_t> strides(out.size(), 0);
  std::size_t s = 1;
  for (std::size_t k = 0; k < in.size(); ++k) {
    const std::size_t i = in.size() - 1 - k;
    const std::size_t o = out.size() - 1 - k;
    strides[o] = in[i] == 1 ? 0 : s;
    s *= static_cast<std::size_t>(in[i]);
  }
  return strides;
}

// Calls f(out_index, a_index, b_index) over the broadcast output.
template <class F>
void for_each_broadcast(const Shape& out, const std::vector<std::size_t>& sa, const std::vector<std::size_t>& sb,
                        F&& f) {
  const std::size_t n = numel(out);
  const std::size_t r = out.size();
  if (r == 0) {
    f(std::size_t{0}, std::size_t{0}, std::size_t{0});
    return;
  }
  std::vector<std::int64_t> idx(r, 0);
  std::size_t ia = 0, ib = 0;
  for (std::size_t i = 0; i < n; ++i) {
    f(i, ia, ib);
    for (std::size_t d = r; d-- > 0;) {
      ++idx[d];
      ia += sa[d];
      ib += sb[d];
      if (idx[d] < out[d]) break;
      ia -= sa[d] * static_cast<std::size_t>(out[d]);
      ib -= sb[d] * static_cast<std::size_t>(out[d]);
      idx[d] = 0;
    }
  }
}

template <class T>
void accumulate(Node<T>& parent, std::size_t i, T v) {
  parent.ensure_grad()[i] += v;
}

// (outer, axis, inner) decomposition of a shape around `axis`.
struct AxisSplit {
  std::size_t outer = 1, axis = 1, inner = 1;
};

inline AxisSplit split_at(const Shape& s, std::size_t axis) {
  if (axis >= s.size()) throw ShapeError("axis " + std::to_string(axis) + " out of range for " + to_string(s));
  AxisSplit r;
  for (std::size_t i = 0; i < axis; ++i) r.outer *= static_cast<std::size_t>(s[i]);
  r.axis = static_cast<std::size_t>(s[axis]);
  for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= static_cast<std::size_t>(s[i]);
  return r;
}

inline std::size_t normalize_axis(int axis, std::size_t rank) {
  const int r = static_cast<int>(rank);
  if (axis < -r || axis >= r) throw ShapeError("axis " + std::to_string(axis) + " out of range");
  return static_cast<std::size_t>(axis < 0 ? axis + r : axis);
}

// Generic broadcasting binary op. da/db: partial derivatives given (x, y, out).
template <class T, class Fwd, class DA, class DB>
Tensor<T> binary(const Tensor<T>& a, const Tensor<T>& b, Fwd fwd, DA da, DB db) {
  const Shape out_shape = broadcast_shape(a.shape(), b.shape());
  const auto sa = broadcast_strides(a.shape(), out_shape);
  const auto sb = broadcast_strides(b.shape(), out_shape);
  std::vector<T> out(numel(out_shape));
  const auto& av = a.values();
  const auto& bv = b.values();
  if (a.shape() == b.shape()) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(av[i], bv[i]);
  } else {
    for_each_broadcast(out_shape, sa, sb, [&](std::size_t i, std::size_t ia, std::size_t ib) { out[i] = fwd(av[ia], bv[ib]); });
  }
  return make_result<T>(out_shape, std::move(out), {a, b}, [out_shape, sa, sb, da, db](Node<T>& self) {
    Node<T>& pa = *self.parents[0];
    Node<T>& pb = *self.parents[1];
    const bool ga = pa.requires_grad, gb = pb.requires_grad;
    if (ga) pa.ensure_grad();
    if (gb) pb.ensure_grad();
    for_each_broadcast(out_shape, sa, sb, [&](std::size_t i, std::size_t ia, std::size_t ib) {
      const T g = self.grad[i];
      if (ga) pa.grad[ia] += g * da(pa.value[ia], pb.value[ib], self.value[i]);
      if (gb) pb.grad[ib] += g * db(pa.value[ia], pb.value[ib], self.value[i]);
    });
  });
}

// Elementwise unary op. df: derivative given (x, out).
template <class T, class Fwd, class DF>
Tensor<T> unary(const Tensor<T>& a, Fwd fwd, DF df) {
  std::vector<T> out(a.numel());
  const auto& av = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(av[i]);
  return make_result<T>(a.shape(), std::move(out), {a}, [df](Node<T>& self) {
    Node<T>& p = *self.parents[0];
    auto& g = p.ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * df(p.value[i], self.value[i]);
  });
}

}  // namespace detail

// ---------------------------------------------------------------- arithmetic

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary(a, b, [](T x, T y) { return x + y; }, [](T, T, T) { return T(1); },
                        [](T, T, T) { return T(1); });
}

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary(a, b, [](T x, T y) { return x - y; }, [](T, T, T) { return T(1); },
                        [](T, T, T) { return T(-1); });
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary(a, b, [](T x, T y) { return x * y; }, [](T, T y, T) { return y; },
                        [](T x, T, T) { return x; });
}

template <class T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary(a, b, [](T x, T y) { return x / y; }, [](T, T y, T) { return T(1) / y; },
                        [](T x, T y, T) { return -x / (y * y); });
}

template <class T>
Tensor<T> operator+(const Tensor<T>& a, const Tensor<T>& b) { return add(a, b); }
template <class T>
Tensor<T> operator-(const Tensor<T>& a, const Tensor<T>& b) { return sub(a, b); }
template <class T>
Tensor<T> operator*(const Tensor<T>& a, const Tensor<T>& b) { return mul(a, b); }
template <class T>
Tensor<T> operator/(const Tensor<T>& a, const Tensor<T>& b) { return div(a, b); }

template <class T>
Tensor<T> scale(const Tensor<T>& a, T s) {
  return detail::unary(a, [s](T x) { return x * s; }, [s](T, T) { return s; });
}

template <class T>
Tensor<T> add_scalar(const Tensor<T>& a, T s) {
  return detail::unary(a, [s](T x) { return x + s; }, [](T, T) { return T(1); });
}

// ---------------------------------------------------------------- activations

template <class T>
Tensor<T> relu(const Tensor<T>& a) {
  return detail::unary(a, [](T x) { return x > T(0) ? x : T(0); }, [](T x, T) { return x > T(0) ? T(1) : T(0); });
}

template <class T>
Tensor<T> relu6(const Tensor<T>& a) {
  return detail::unary(a, [](T x) { return std::clamp(x, T(0), T(6)); },
                       [](T x, T) { return x > T(0) && x < T(6) ? T(1) : T(0); });
}

template <class T>
Tensor<T> sigmoid(const Tensor<T>& a) {
  return detail::unary(a, [](T x) { return T(1) / (T(1) + std::exp(-x)); }, [](T, T y) { return y * (T(1) - y); });
}

template <class T>
Tensor<T> tanh(const Tensor<T>& a) {
  return detail::unary(a, [](T x) { return std::tanh(x); }, [](T, T y) { return T(1) - y * y; });
}

// Exact (erf) GELU.
template <class T>
Tensor<T> gelu(const Tensor<T>& a) {
  constexpr T inv_sqrt2 = T(1) / std::numbers::sqrt2_v<T>;
  constexpr T inv_sqrt2pi = std::numbers::inv_sqrtpi_v<T> * inv_sqrt2;
  return detail::unary(
      a, [](T x) { return T(0.5) * x * (T(1) + std::erf(x * inv_sqrt2)); },
      [](T x, T) { return T(0.5) * (T(1) + std::erf(x * inv_sqrt2)) + x * inv_sqrt2pi * std::exp(T(-0.5) * x * x); });
}

template <class T>
Tensor<T> exp(const Tensor<T>& a) {
  return detail::unary(a, [](T x) { return std::exp(x); }, [](T, T y) { return y; });
}

template <class T>
Tensor<T> log(const Tensor<T>& a) {
  return detail::unary(a, [](T x) { return std::log(x); }, [](T x, T) { return T(1) / x; });
}

template <class T>
Tensor<T> sqrt(const Tensor<T>& a) {
  return detail::unary(a, [](T x) { return std::sqrt(x); }, [](T, T y) { return T(0.5) / y; });
}

template <class T>
Tensor<T> square(const Tensor<T>& a) {
  return detail::unary(a, [](T x) { return x * x; }, [](T x, T) { return T(2) * x; });
}

// ---------------------------------------------------------------- reductions

template <class T>
Tensor<T> sum(const Tensor<T>& a) {
  T s = 0;
  for (T v : a.values()) s += v;
  return detail::make_result<T>({}, {s}, {a}, [](Node<T>& self) {
    Node<T>& p = *self.parents[0];
    for (auto& g : p.ensure_grad()) g += self.grad[0];
  });
}

template <class T>
Tensor<T> mean(const Tensor<T>& a) {
  return scale(sum(a), T(1) / static_cast<T>(a.numel()));
}

template <class T>
Tensor<T> sum(const Tensor<T>& a, int axis, bool keepdim = false) {
  const std::size_t ax = detail::normalize_axis(axis, a.rank());
  const auto sp = detail::split_at(a.shape(), ax);
  Shape out_shape = a.shape();
  if (keepdim) out_shape[ax] = 1;
  else out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(ax));
  std::vector<T> out(sp.outer * sp.inner, T(0));
  const auto& av = a.values();
  for (std::size_t o = 0; o < sp.outer; ++o)
    for (std::size_t k = 0; k < sp.axis; ++k)
      for (std::size_t i = 0; i < sp.inner; ++i) out[o * sp.inner + i] += av[(o * sp.axis + k) * sp.inner + i];
  return detail::make_result<T>(out_shape, std::move(out), {a}, [sp](Node<T>& self) {
    Node<T>& p = *self.parents[0];
    auto& g = p.ensure_grad();
    for (std::size_t o = 0; o < sp.outer; ++o)
      for (std::size_t k = 0; k < sp.axis; ++k)
        for (std::size_t i = 0; i < sp.inner; ++i) g[(o * sp.axis + k) * sp.inner + i] += self.grad[o * sp.inner + i];
  });
}

template <class T>
Tensor<T> mean(const Tensor<T>& a, int axis, bool keepdim = false) {
  const std::size_t ax = detail::normalize_axis(axis, a.rank());
  return scale(sum(a, axis, keepdim), T(1) / static_cast<T>(a.dim(ax)));
}

// ---------------------------------------------------------------- shape ops

template <class T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
  std::int64_t known = 1;
  int infer = -1;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (shape[i] == -1) {
      if (infer >= 0) throw ShapeError("reshape: more than one -1");
      infer = static_cast<int>(i);
    } else {
      known *= shape[i];
    }
  }
  if (infer >= 0) shape[static_cast<std::size_t>(infer)] = known == 0 ? 0 : static_cast<std::int64_t>(a.numel()) / known;
  if (numel(shape) != a.numel())
    throw ShapeError("reshape " + to_string(a.shape()) + " -> " + to_string(shape) + " changes element count");
  return detail::make_result<T>(shape, a.values(), {a}, [](Node<T>& self) {
    Node<T>& p = *self.parents[0];
    auto& g = p.ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

// out.shape[i] = in.shape[dims[i]]
template <class T>
Tensor<T> permute(const Tensor<T>& a, const std::vector<std::size_t>& dims) {
  const std::size_t r = a.rank();
  if (dims.size() != r) throw ShapeError("permute: rank mismatch");
  std::vector<std::size_t> in_strides(r, 1);
  for (std::size_t i = r; i-- > 1;) in_strides[i - 1] = in_strides[i] * static_cast<std::size_t>(a.dim(i));
  Shape out_shape(r);
  std::vector<std::size_t> strides(r);
  for (std::size_t i = 0; i < r; ++i) {
    out_shape[i] = a.dim(dims[i]);
    strides[i] = in_strides[dims[i]];
  }
  // Gather map: out index -> in index.
  std::vector<std::size_t> src(a.numel());
  std::vector<std::size_t> zero(r, 0);
  detail::for_each_broadcast(out_shape, strides, zero, [&](std::size_t i, std::size_t ia, std::size_t) { src[i] = ia; });
  std::vector<T> out(a.numel());
  const auto& av = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[src[i]];
  return detail::make_result<T>(out_shape, std::move(out), {a}, [src = std::move(src)](Node<T>& self) {
    Node<T>& p = *self.parents[0];
    auto& g = p.ensure_grad();
    for (std::size_t i = 0; i < src.size(); ++i) g[src[i]] += self.grad[i];
  });
}

template <class T>
Tensor<T> transpose_last2(const Tensor<T>& a) {
  std::vector<std::size_t> dims(a.rank());
  std::iota(dims.begin(), dims.end(), std::size_t{0});
  std::swap(dims[a.rank() - 1], dims[a.rank() - 2]);
  return permute(a, dims);
}

template <class T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, int axis) {
  if (parts.empty()) throw ShapeError("concat of zero tensors");
  const std::size_t ax = detail::normalize_axis(axis, parts[0].rank());
  Shape out_shape = parts[0].shape();
  out_shape[ax] = 0;
  for (const auto& p : parts) {
    Shape s = p.shape();
    if (s.size() != out_shape.size()) throw ShapeError("concat: rank mismatch");
    for (std::size_t i = 0; i < s.size(); ++i)
      if (i != ax && s[i] != parts[0].dim(i))
        throw ShapeError("concat: shapes " + to_string(parts[0].shape()) + " and " + to_string(s) +
                         " differ outside axis " + std::to_string(ax));
    out_shape[ax] += s[ax];
  }
  const auto sp = detail::split_at(out_shape, ax);
  std::vector<T> out(numel(out_shape));
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& p : parts) {
    offsets.push_back(off);
    const std::size_t len = static_cast<std::size_t>(p.dim(ax)) * sp.inner;
    const auto& pv = p.values();
    for (std::size_t o = 0; o < sp.outer; ++o)
      std::copy_n(pv.begin() + static_cast<std::ptrdiff_t>(o * len), len,
                  out.begin() + static_cast<std::ptrdiff_t>(o * sp.axis * sp.inner + off));
    off += len;
  }
  return detail::make_result<T>(out_shape, std::move(out), parts, [sp, offsets](Node<T>& self) {
    for (std::size_t k = 0; k < self.parents.size(); ++k) {
      Node<T>& p = *self.parents[k];
      if (!p.requires_grad) continue;
      auto& g = p.ensure_grad();
      const std::size_t len = g.size() / sp.outer;
      for (std::size_t o = 0; o < sp.outer; ++o)
        for (std::size_t i = 0; i < len; ++i) g[o * len + i] += self.grad[o * sp.axis * sp.inner + offsets[k] + i];
    }
  });
}

template <class T>
Tensor<T> slice(const Tensor<T>& a, int axis, std::int64_t start, std::int64_t length) {
  const std::size_t ax = detail::normalize_axis(axis, a.rank());
  if (start < 0 || length < 0 || start + length > a.dim(ax))
    throw ShapeError("slice [" + std::to_string(start) + ", +" + std::to_string(length) + ") out of range for " +
                     to_string(a.shape()));
  const auto sp = detail::split_at(a.shape(), ax);
  Shape out_shape = a.shape();
  out_shape[ax] = length;
  const std::size_t len = static_cast<std::size_t>(length) * sp.inner;
  const std::size_t from = static_cast<std::size_t>(start) * sp.inner;
  std::vector<T> out(sp.outer * len);
  const auto& av = a.values();
  for (std::size_t o = 0; o < sp.outer; ++o)
    std::copy_n(av.begin() + static_cast<std::ptrdiff_t>(o * sp.axis * sp.inner + from), len,
                out.begin() + static_cast<std::ptrdiff_t>(o * len));
  return detail::make_result<T>(out_shape, std::move(out), {a}, [sp, len, from](Node<T>& self) {
    Node<T>& p = *self.parents[0];
    auto& g = p.ensure_grad();
    for (std::size_t o = 0; o < sp.outer; ++o)
      for (std::size_t i = 0; i < len; ++i) g[o * sp.axis * sp.inner + from + i] += self.grad[o * len + i];
  });
}

// ---------------------------------------------------------------- linear algebra

// [M,K] x [K,N] -> [M,N]
template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
    throw ShapeError("matmul " + to_string(a.shape()) + " x " + to_string(b.shape()));
  const auto m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<T> out(static_cast<std::size_t>(m * n));
  detail::MapMat<T>(out.data(), m, n).noalias() =
      detail::CMapMat<T>(a.data().data(), m, k) * detail::CMapMat<T>(b.data().data(), k, n);
  return detail::make_result<T>({m, n}, std::move(out), {a, b}, [m, k, n](Node<T>& self) {
    Node<T>& pa = *self.parents[0];
    Node<T>& pb = *self.parents[1];
    detail::CMapMat<T> g(self.grad.data(), m, n);
    if (pa.requires_grad)
      detail::MapMat<T>(pa.ensure_grad().data(), m, k).noalias() += g * detail::CMapMat<T>(pb.value.data(), k, n).transpose();
    if (pb.requires_grad)
      detail::MapMat<T>(pb.ensure_grad().data(), k, n).noalias() += detail::CMapMat<T>(pa.value.data(), m, k).transpose() * g;
  });
}

// [B,M,K] x [B,K,N] -> [B,M,N]
template <class T>
Tensor<T> bmm(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0) || a.dim(2) != b.dim(1))
    throw ShapeError("bmm " + to_string(a.shape()) + " x " + to_string(b.shape()));
  const auto bs = a.dim(0), m = a.dim(1), k = a.dim(2), n = b.dim(2);
  std::vector<T> out(static_cast<std::size_t>(bs * m * n));
  for (std::int64_t i = 0; i < bs; ++i)
    detail::MapMat<T>(out.data() + i * m * n, m, n).noalias() =
        detail::CMapMat<T>(a.data().data() + i * m * k, m, k) * detail::CMapMat<T>(b.data().data() + i * k * n, k, n);
  return detail::make_result<T>({bs, m, n}, std::move(out), {a, b}, [bs, m, k, n](Node<T>& self) {
    Node<T>& pa = *self.parents[0];
    Node<T>& pb = *self.parents[1];
    if (pa.requires_grad) pa.ensure_grad();
    if (pb.requires_grad) pb.ensure_grad();
    for (std::int64_t i = 0; i < bs; ++i) {
      detail::CMapMat<T> g(self.grad.data() + i * m * n, m, n);
      if (pa.requires_grad)
        detail::MapMat<T>(pa.grad.data() + i * m * k, m, k).noalias() +=
            g * detail::CMapMat<T>(pb.value.data() + i * k * n, k, n).transpose();
      if (pb.requires_grad)
        detail::MapMat<T>(pb.grad.data() + i * k * n, k, n).noalias() +=
            detail::CMapMat<T>(pa.value.data() + i * m * k, m, k).transpose() * g;
    }
  });
}

// x [..., in] * w [in, out] + b [out]
template <class T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  const std::int64_t in = w.dim(0);
  if (x.shape().back() != in)
    throw ShapeError("linear: input " + to_string(x.shape()) + " vs weight " + to_string(w.shape()));
  Shape out_shape = x.shape();
  out_shape.back() = w.dim(1);
  auto flat = x.rank() == 2 ? x : reshape(x, {-1, in});
  auto y = add(matmul(flat, w), b);
  return x.rank() == 2 ? y : reshape(y, out_shape);
}

// ---------------------------------------------------------------- softmax family

template <class T>
Tensor<T> softmax(const Tensor<T>& a, int axis = -1) {
  const std::size_t ax = detail::normalize_axis(axis, a.rank());
  const auto sp = detail::split_at(a.shape(), ax);
  std::vector<T> out(a.numel());
  const auto& av = a.values();
  for (std::size_t o = 0; o < sp.outer; ++o)
    for (std::size_t i = 0; i < sp.inner; ++i) {
      const std::size_t base = o * sp.axis * sp.inner + i;
      T mx = av[base];
      for (std::size_t k = 1; k < sp.axis; ++k) mx = std::max(mx, av[base + k * sp.inner]);
      T z = 0;
      for (std::size_t k = 0; k < sp.axis; ++k) z += out[base + k * sp.inner] = std::exp(av[base + k * sp.inner] - mx);
      for (std::size_t k = 0; k < sp.axis; ++k) out[base + k * sp.inner] /= z;
    }
  return detail::make_result<T>(a.shape(), std::move(out), {a}, [sp](Node<T>& self) {
    Node<T>& p = *self.parents[0];
    auto& g = p.ensure_grad();
    for (std::size_t o = 0; o < sp.outer; ++o)
      for (std::size_t i = 0; i < sp.inner; ++i) {
        const std::size_t base = o * sp.axis * sp.inner + i;
        T dot = 0;
        for (std::size_t k = 0; k < sp.axis; ++k) dot += self.grad[base + k * sp.inner] * self.value[base + k * sp.inner];
        for (std::size_t k = 0; k < sp.axis; ++k) {
          const std::size_t j = base + k * sp.inner;
          g[j] += self.value[j] * (self.grad[j] - dot);
        }
      }
  });
}

template <class T>
Tensor<T> log_softmax(const Tensor<T>& a, int axis = -1) {
  const std::size_t ax = detail::normalize_axis(axis, a.rank());
  const auto sp = detail::split_at(a.shape(), ax);
  std::vector<T> out(a.numel());
  const auto& av = a.values();
  for (std::size_t o = 0; o < sp.outer; ++o)
    for (std::size_t i = 0; i < sp.inner; ++i) {
      const std::size_t base = o * sp.axis * sp.inner + i;
      T mx = av[base];
      for (std::size_t k = 1; k < sp.axis; ++k) mx = std::max(mx, av[base + k * sp.inner]);
      T z = 0;
      for (std::size_t k = 0; k < sp.axis; ++k) z += std::exp(av[base + k * sp.inner] - mx);
      const T lse = mx + std::log(z);
      for (std::size_t k = 0; k < sp.axis; ++k) out[base + k * sp.inner] = av[base + k * sp.inner] - lse;
    }
  return detail::make_result<T>(a.shape(), std::move(out), {a}, [sp](Node<T>& self) {
    Node<T>& p = *self.parents[0];
    auto& g = p.ensure_grad();
    for (std::size_t o = 0; o < sp.outer; ++o)
      for (std::size_t i = 0; i < sp.inner; ++i) {
        const std::size_t base = o * sp.axis * sp.inner + i;
        T gs = 0;
        for (std::size_t k = 0; k < sp.axis; ++k) gs += self.grad[base + k * sp.inner];
        for (std::size_t k = 0; k < sp.axis; ++k) {
          const std::size_t j = base + k * sp.inner;
          g[j] += self.grad[j] - std::exp(self.value[j]) * gs;
        }
      }
  });
}

}  // namespace freshcast::nn
