#pragma once

#include <cmath>
#include <random>
#include <span>
#include <vector>

#include "freshcast/nn/ops.hpp"

// Fused layer kernels with hand-written backward passes.

namespace freshcast::nn {

struct Conv2dOptions {
  int stride = 1;
  int padding = 0;
  int groups = 1;
};

namespace detail {

// Column buffer [Cg*kh*kw, Ho*Wo] for one image and one channel group.
template <class T>
void im2col(const T* x, int channels, int h, int w, int kh, int kw, int stride, int pad, int ho, int wo, T* col) {
  for (int c = 0; c < channels; ++c)
    for (int ky = 0; ky < kh; ++ky)
      for (int kx = 0; kx < kw; ++kx) {
        T* row = col + ((c * kh + ky) * kw + kx) * ho * wo;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride - pad + ky;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * stride - pad + kx;
            row[oy * wo + ox] = (iy >= 0 && iy < h && ix >= 0 && ix < w) ? x[(c * h + iy) * w + ix] : T(0);
          }
        }
      }
}

template <class T>
void col2im(const T* col, int channels, int h, int w, int kh, int kw, int stride, int pad, int ho, int wo, T* x) {
  for (int c = 0; c < channels; ++c)
    for (int ky = 0; ky < kh; ++ky)
      for (int kx = 0; kx < kw; ++kx) {
        const T* row = col + ((c * kh + ky) * kw + kx) * ho * wo;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= h) continue;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * stride - pad + kx;
            if (ix >= 0 && ix < w) x[(c * h + iy) * w + ix] += row[oy * wo + ox];
          }
        }
      }
}

}  // namespace detail

// x [N,C,H,W], weight [O, C/groups, kh, kw], bias [O] (may be undefined).
template <class T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias, Conv2dOptions opt = {}) {
  if (x.rank() != 4 || weight.rank() != 4) throw ShapeError("conv2d expects 4-d input and weight");
  const int n = static_cast<int>(x.dim(0)), c = static_cast<int>(x.dim(1));
  const int h = static_cast<int>(x.dim(2)), w = static_cast<int>(x.dim(3));
  const int o = static_cast<int>(weight.dim(0)), cg = static_cast<int>(weight.dim(1));
  const int kh = static_cast<int>(weight.dim(2)), kw = static_cast<int>(weight.dim(3));
  const int groups = opt.groups;
  if (c != cg * groups || o % groups != 0)
    throw ShapeError("conv2d: input " + to_string(x.shape()) + " incompatible with weight " + to_string(weight.shape()) +
                     " and groups=" + std::to_string(groups));
  const int ho = (h + 2 * opt.padding - kh) / opt.stride + 1;
  const int wo = (w + 2 * opt.padding - kw) / opt.stride + 1;
  if (ho <= 0 || wo <= 0) throw ShapeError("conv2d: input " + to_string(x.shape()) + " too small for kernel");
  const int og = o / groups;
  const int krows = cg * kh * kw;
  const int cols = ho * wo;
  const bool has_bias = bias.defined();

  std::vector<T> out(static_cast<std::size_t>(n) * o * cols);
  std::vector<T> col(static_cast<std::size_t>(krows) * cols);
  const T* xv = x.data().data();
  const T* wv = weight.data().data();
  for (int b = 0; b < n; ++b)
    for (int g = 0; g < groups; ++g) {
      detail::im2col(xv + (static_cast<std::size_t>(b) * c + g * cg) * h * w, cg, h, w, kh, kw, opt.stride, opt.padding,
                     ho, wo, col.data());
      detail::MapMat<T>(out.data() + (static_cast<std::size_t>(b) * o + g * og) * cols, og, cols).noalias() =
          detail::CMapMat<T>(wv + static_cast<std::size_t>(g) * og * krows, og, krows) *
          detail::CMapMat<T>(col.data(), krows, cols);
    }
  if (has_bias) {
    const T* bv = bias.data().data();
    for (int b = 0; b < n; ++b)
      for (int k = 0; k < o; ++k) {
        T* dst = out.data() + (static_cast<std::size_t>(b) * o + k) * cols;
        for (int i = 0; i < cols; ++i) dst[i] += bv[k];
      }
  }
  std::vector<Tensor<T>> inputs{x, weight};
  if (has_bias) inputs.push_back(bias);
  return detail::make_result<T>(
      {n, o, ho, wo}, std::move(out), inputs,
      [=](Node<T>& self) {
        Node<T>& px = *self.parents[0];
        Node<T>& pw = *self.parents[1];
        std::vector<T> colbuf(static_cast<std::size_t>(krows) * cols);
        std::vector<T> dcol(static_cast<std::size_t>(krows) * cols);
        if (px.requires_grad) px.ensure_grad();
        if (pw.requires_grad) pw.ensure_grad();
        for (int b = 0; b < n; ++b)
          for (int g = 0; g < groups; ++g) {
            detail::CMapMat<T> gout(self.grad.data() + (static_cast<std::size_t>(b) * o + g * og) * cols, og, cols);
            if (pw.requires_grad) {
              detail::im2col(px.value.data() + (static_cast<std::size_t>(b) * c + g * cg) * h * w, cg, h, w, kh, kw,
                             opt.stride, opt.padding, ho, wo, colbuf.data());
              detail::MapMat<T>(pw.grad.data() + static_cast<std::size_t>(g) * og * krows, og, krows).noalias() +=
                  gout * detail::CMapMat<T>(colbuf.data(), krows, cols).transpose();
            }
            if (px.requires_grad) {
              detail::MapMat<T>(dcol.data(), krows, cols).noalias() =
                  detail::CMapMat<T>(pw.value.data() + static_cast<std::size_t>(g) * og * krows, og, krows).transpose() *
                  gout;
              detail::col2im(dcol.data(), cg, h, w, kh, kw, opt.stride, opt.padding, ho, wo,
                             px.grad.data() + (static_cast<std::size_t>(b) * c + g * cg) * h * w);
            }
          }
        if (self.parents.size() > 2 && self.parents[2]->requires_grad) {
          auto& gb = self.parents[2]->ensure_grad();
          for (int b = 0; b < n; ++b)
            for (int k = 0; k < o; ++k) {
              const T* src = self.grad.data() + (static_cast<std::size_t>(b) * o + k) * cols;
              T s = 0;
              for (int i = 0; i < cols; ++i) s += src[i];
              gb[static_cast<std::size_t>(k)] += s;
            }
        }
      });
}

// Max pooling; padded positions never win.
template <class T>
Tensor<T> max_pool2d(const Tensor<T>& x, int kernel, int stride, int padding = 0) {
  const auto n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::int64_t ho = (h + 2 * padding - kernel) / stride + 1, wo = (w + 2 * padding - kernel) / stride + 1;
  if (ho <= 0 || wo <= 0) throw ShapeError("max_pool2d: input " + to_string(x.shape()) + " too small");
  std::vector<T> out(static_cast<std::size_t>(n * c * ho * wo));
  std::vector<std::size_t> arg(out.size());
  const auto& xv = x.values();
  for (std::int64_t p = 0; p < n * c; ++p)
    for (std::int64_t oy = 0; oy < ho; ++oy)
      for (std::int64_t ox = 0; ox < wo; ++ox) {
        bool found = false;
        std::size_t best = 0;
        for (int ky = 0; ky < kernel; ++ky)
          for (int kx = 0; kx < kernel; ++kx) {
            const std::int64_t iy = oy * stride - padding + ky, ix = ox * stride - padding + kx;
            if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
            const auto idx = static_cast<std::size_t>((p * h + iy) * w + ix);
            if (!found || xv[idx] > xv[best]) best = idx;
            found = true;
          }
        const auto o = static_cast<std::size_t>((p * ho + oy) * wo + ox);
        out[o] = xv[best];
        arg[o] = best;
      }
  return detail::make_result<T>({n, c, ho, wo}, std::move(out), {x}, [arg = std::move(arg)](Node<T>& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < arg.size(); ++i) g[arg[i]] += self.grad[i];
  });
}

// [N,C,H,W] -> [N,C]
template <class T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
  return mean(reshape(x, {x.dim(0), x.dim(1), -1}), -1);
}

// Per-channel batch normalization over (N,H,W). In training mode the running
// statistics are updated in place (momentum convention: new = (1-m)*old + m*batch).
template <class T>
Tensor<T> batch_norm2d(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, Tensor<T>& running_mean,
                       Tensor<T>& running_var, bool training, T momentum = T(0.1), T eps = T(1e-5)) {
  const auto n = x.dim(0), c = x.dim(1);
  const std::size_t hw = static_cast<std::size_t>(x.dim(2) * x.dim(3));
  const std::size_t m = static_cast<std::size_t>(n) * hw;
  const auto& xv = x.values();
  std::vector<T> mu(static_cast<std::size_t>(c)), inv_std(static_cast<std::size_t>(c));
  if (training) {
    for (std::int64_t k = 0; k < c; ++k) {
      T s = 0;
      for (std::int64_t b = 0; b < n; ++b)
        for (std::size_t i = 0; i < hw; ++i) s += xv[(static_cast<std::size_t>(b * c + k)) * hw + i];
      const T mean_k = s / static_cast<T>(m);
      T v = 0;
      for (std::int64_t b = 0; b < n; ++b)
        for (std::size_t i = 0; i < hw; ++i) {
          const T d = xv[(static_cast<std::size_t>(b * c + k)) * hw + i] - mean_k;
          v += d * d;
        }
      const T var_k = v / static_cast<T>(m);
      mu[static_cast<std::size_t>(k)] = mean_k;
      inv_std[static_cast<std::size_t>(k)] = T(1) / std::sqrt(var_k + eps);
      auto rm = running_mean.mutable_data();
      auto rv = running_var.mutable_data();
      const T unbiased = m > 1 ? v / static_cast<T>(m - 1) : var_k;
      rm[static_cast<std::size_t>(k)] = (T(1) - momentum) * rm[static_cast<std::size_t>(k)] + momentum * mean_k;
      rv[static_cast<std::size_t>(k)] = (T(1) - momentum) * rv[static_cast<std::size_t>(k)] + momentum * unbiased;
    }
  } else {
    for (std::int64_t k = 0; k < c; ++k) {
      mu[static_cast<std::size_t>(k)] = running_mean.data()[static_cast<std::size_t>(k)];
      inv_std[static_cast<std::size_t>(k)] = T(1) / std::sqrt(running_var.data()[static_cast<std::size_t>(k)] + eps);
    }
  }
  std::vector<T> xhat(xv.size());
  std::vector<T> out(xv.size());
  const auto& gv = gamma.values();
  const auto& bv = beta.values();
  for (std::int64_t b = 0; b < n; ++b)
    for (std::int64_t k = 0; k < c; ++k)
      for (std::size_t i = 0; i < hw; ++i) {
        const std::size_t j = static_cast<std::size_t>(b * c + k) * hw + i;
        const auto kk = static_cast<std::size_t>(k);
        xhat[j] = (xv[j] - mu[kk]) * inv_std[kk];
        out[j] = gv[kk] * xhat[j] + bv[kk];
      }
  return detail::make_result<T>(
      x.shape(), std::move(out), {x, gamma, beta},
      [n, c, hw, m, training, inv_std = std::move(inv_std), xhat = std::move(xhat)](Node<T>& self) {
        Node<T>& px = *self.parents[0];
        Node<T>& pg = *self.parents[1];
        Node<T>& pb = *self.parents[2];
        for (std::int64_t k = 0; k < c; ++k) {
          const auto kk = static_cast<std::size_t>(k);
          T sum_g = 0, sum_gx = 0;
          for (std::int64_t b = 0; b < n; ++b)
            for (std::size_t i = 0; i < hw; ++i) {
              const std::size_t j = static_cast<std::size_t>(b * c + k) * hw + i;
              sum_g += self.grad[j];
              sum_gx += self.grad[j] * xhat[j];
            }
          if (pg.requires_grad) pg.ensure_grad()[kk] += sum_gx;
          if (pb.requires_grad) pb.ensure_grad()[kk] += sum_g;
          if (!px.requires_grad) continue;
          auto& gx = px.ensure_grad();
          const T gamma_k = pg.value[kk];
          for (std::int64_t b = 0; b < n; ++b)
            for (std::size_t i = 0; i < hw; ++i) {
              const std::size_t j = static_cast<std::size_t>(b * c + k) * hw + i;
              if (training) {
                gx[j] += gamma_k * inv_std[kk] / static_cast<T>(m) *
                         (static_cast<T>(m) * self.grad[j] - sum_g - xhat[j] * sum_gx);
              } else {
                gx[j] += gamma_k * inv_std[kk] * self.grad[j];
              }
            }
        }
      });
}

// Normalizes over the last dimension.
template <class T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps = T(1e-6)) {
  const std::size_t d = static_cast<std::size_t>(x.shape().back());
  const std::size_t rows = x.numel() / d;
  const auto& xv = x.values();
  const auto& gv = gamma.values();
  const auto& bv = beta.values();
  std::vector<T> xhat(xv.size()), out(xv.size()), inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    T s = 0;
    for (std::size_t i = 0; i < d; ++i) s += xv[r * d + i];
    const T mu = s / static_cast<T>(d);
    T v = 0;
    for (std::size_t i = 0; i < d; ++i) v += (xv[r * d + i] - mu) * (xv[r * d + i] - mu);
    inv_std[r] = T(1) / std::sqrt(v / static_cast<T>(d) + eps);
    for (std::size_t i = 0; i < d; ++i) {
      xhat[r * d + i] = (xv[r * d + i] - mu) * inv_std[r];
      out[r * d + i] = gv[i] * xhat[r * d + i] + bv[i];
    }
  }
  return detail::make_result<T>(
      x.shape(), std::move(out), {x, gamma, beta},
      [d, rows, inv_std = std::move(inv_std), xhat = std::move(xhat)](Node<T>& self) {
        Node<T>& px = *self.parents[0];
        Node<T>& pg = *self.parents[1];
        Node<T>& pb = *self.parents[2];
        if (pg.requires_grad) pg.ensure_grad();
        if (pb.requires_grad) pb.ensure_grad();
        if (px.requires_grad) px.ensure_grad();
        std::vector<T> gxhat(d);
        for (std::size_t r = 0; r < rows; ++r) {
          T sum_g = 0, sum_gx = 0;
          for (std::size_t i = 0; i < d; ++i) {
            const T g = self.grad[r * d + i];
            if (pg.requires_grad) pg.grad[i] += g * xhat[r * d + i];
            if (pb.requires_grad) pb.grad[i] += g;
            gxhat[i] = g * pg.value[i];
            sum_g += gxhat[i];
            sum_gx += gxhat[i] * xhat[r * d + i];
          }
          if (!px.requires_grad) continue;
          for (std::size_t i = 0; i < d; ++i)
            px.grad[r * d + i] +=
                inv_std[r] / static_cast<T>(d) * (static_cast<T>(d) * gxhat[i] - sum_g - xhat[r * d + i] * sum_gx);
        }
      });
}

// Inverted dropout; identity when p == 0.
template <class T>
Tensor<T> dropout(const Tensor<T>& x, double p, std::mt19937_64& rng) {
  if (p <= 0.0) return x;
  std::bernoulli_distribution keep(1.0 - p);
  const T s = T(1) / static_cast<T>(1.0 - p);
  std::vector<T> mask(x.numel());
  for (auto& m : mask) m = keep(rng) ? s : T(0);
  return mul(x, Tensor<T>::from(x.shape(), std::move(mask)));
}

// Capsule squash along the last dimension: v = s * |s| / (1 + |s|^2).
// The norm carries a tiny epsilon so the map is smooth at s = 0.
template <class T>
Tensor<T> squash(const Tensor<T>& s, T eps = T(1e-9)) {
  const std::size_t d = static_cast<std::size_t>(s.shape().back());
  const std::size_t rows = s.numel() / d;
  const auto& sv = s.values();
  std::vector<T> out(sv.size()), norms(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    T sq = 0;
    for (std::size_t i = 0; i < d; ++i) sq += sv[r * d + i] * sv[r * d + i];
    const T nrm = std::sqrt(sq + eps);
    norms[r] = nrm;
    const T f = nrm / (T(1) + nrm * nrm);
    for (std::size_t i = 0; i < d; ++i) out[r * d + i] = sv[r * d + i] * f;
  }
  return detail::make_result<T>(s.shape(), std::move(out), {s}, [d, rows, norms = std::move(norms)](Node<T>& self) {
    Node<T>& p = *self.parents[0];
    auto& g = p.ensure_grad();
    for (std::size_t r = 0; r < rows; ++r) {
      const T nrm = norms[r];
      const T q = T(1) + nrm * nrm;
      const T f = nrm / q;
      const T fprime_over_n = (T(1) - nrm * nrm) / (q * q) / nrm;
      T gs = 0;
      for (std::size_t i = 0; i < d; ++i) gs += self.grad[r * d + i] * p.value[r * d + i];
      for (std::size_t i = 0; i < d; ++i)
        g[r * d + i] += f * self.grad[r * d + i] + fprime_over_n * p.value[r * d + i] * gs;
    }
  });
}

// Mean sparse categorical cross-entropy from logits [N,C].
template <class T>
Tensor<T> cross_entropy_logits(const Tensor<T>& logits, std::span<const int> targets) {
  if (logits.rank() != 2 || static_cast<std::size_t>(logits.dim(0)) != targets.size())
    throw ShapeError("cross_entropy: logits " + to_string(logits.shape()) + " vs " + std::to_string(targets.size()) +
                     " targets");
  const auto classes = logits.dim(1);
  std::vector<T> onehot(logits.numel(), T(0));
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (targets[i] < 0 || targets[i] >= classes)
      throw LabelError("target index " + std::to_string(targets[i]) + " out of range [0," + std::to_string(classes) + ")");
    onehot[i * static_cast<std::size_t>(classes) + static_cast<std::size_t>(targets[i])] = T(1);
  }
  auto picked = sum(mul(log_softmax(logits, -1), Tensor<T>::from(logits.shape(), std::move(onehot))));
  return scale(picked, T(-1) / static_cast<T>(targets.size()));
}

// Mean squared error of a [N] or [N,1] prediction against targets.
template <class T>
Tensor<T> mse_loss(const Tensor<T>& pred, std::span<const T> target) {
  if (pred.numel() != target.size())
    throw ShapeError("mse: prediction " + to_string(pred.shape()) + " vs " + std::to_string(target.size()) + " targets");
  auto t = Tensor<T>::from(pred.shape(), std::vector<T>(target.begin(), target.end()));
  return mean(square(sub(pred, t)));
}

}  // namespace freshcast::nn
