#pragma once

#include <Eigen/Core>
#include <cmath>
#include <vector>

#include "brightvae/autodiff.hpp"
#include "brightvae/tensor.hpp"

namespace brightvae {
namespace ops {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using CMatMap = Eigen::Map<const RowMat<T>>;

// ---------------------------------------------------------------------------
// Elementwise
// ---------------------------------------------------------------------------

template <typename T, typename FwdFn, typename BwdFn>
Var<T> elementwise_binary(const Var<T>& a, const Var<T>& b, const char* name, FwdFn fwd,
                          BwdFn bwd) {
  check_same_shape(a.value(), b.value(), name);
  Tensor<T> out(a.shape());
  const T* pa = a.value().data();
  const T* pb = b.value().data();
  T* po = out.data();
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) po[i] = fwd(pa[i], pb[i]);
  return make_op_node<T>(std::move(out), {a, b}, [a, b, bwd](Node<T>& node) mutable {
    const T* g = node.grad.data();
    const T* pa = a.value().data();
    const T* pb = b.value().data();
    const int64_t n = node.grad.numel();
    if (a.requires_grad()) {
      T* da = a.grad().data();
      for (int64_t i = 0; i < n; ++i) da[i] += bwd(g[i], pa[i], pb[i], true);
    }
    if (b.requires_grad()) {
      T* db = b.grad().data();
      for (int64_t i = 0; i < n; ++i) db[i] += bwd(g[i], pa[i], pb[i], false);
    }
  });
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  return elementwise_binary<T>(
      a, b, "add", [](T x, T y) { return x + y; },
      [](T g, T, T, bool) { return g; });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  return elementwise_binary<T>(
      a, b, "sub", [](T x, T y) { return x - y; },
      [](T g, T, T, bool wrt_a) { return wrt_a ? g : -g; });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  return elementwise_binary<T>(
      a, b, "mul", [](T x, T y) { return x * y; },
      [](T g, T x, T y, bool wrt_a) { return wrt_a ? g * y : g * x; });
}

template <typename T>
Var<T> div(const Var<T>& a, const Var<T>& b) {
  return elementwise_binary<T>(
      a, b, "div", [](T x, T y) { return x / y; },
      [](T g, T x, T y, bool wrt_a) { return wrt_a ? g / y : -g * x / (y * y); });
}

template <typename T, typename FwdFn, typename BwdFn>
Var<T> elementwise_unary(const Var<T>& a, FwdFn fwd, BwdFn bwd) {
  Tensor<T> out(a.shape());
  const T* pa = a.value().data();
  T* po = out.data();
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) po[i] = fwd(pa[i]);
  return make_op_node<T>(std::move(out), {a}, [a, bwd](Node<T>& node) mutable {
    if (!a.requires_grad()) return;
    const T* g = node.grad.data();
    const T* pa = a.value().data();
    const T* py = node.value.data();
    T* da = a.grad().data();
    const int64_t n = node.grad.numel();
    for (int64_t i = 0; i < n; ++i) da[i] += bwd(g[i], pa[i], py[i]);
  });
}

template <typename T>
Var<T> relu(const Var<T>& a) {
  return elementwise_unary<T>(
      a, [](T x) { return x > T(0) ? x : T(0); },
      [](T g, T x, T) { return x > T(0) ? g : T(0); });
}

template <typename T>
Var<T> leaky_relu(const Var<T>& a, T slope) {
  return elementwise_unary<T>(
      a, [slope](T x) { return x > T(0) ? x : slope * x; },
      [slope](T g, T x, T) { return x > T(0) ? g : slope * g; });
}

template <typename T>
Var<T> vexp(const Var<T>& a) {
  return elementwise_unary<T>(
      a, [](T x) { return std::exp(x); }, [](T g, T, T y) { return g * y; });
}

template <typename T>
Var<T> vlog(const Var<T>& a) {
  return elementwise_unary<T>(
      a, [](T x) { return std::log(x); }, [](T g, T x, T) { return g / x; });
}

template <typename T>
Var<T> vsqrt(const Var<T>& a) {
  return elementwise_unary<T>(
      a, [](T x) { return std::sqrt(x); },
      [](T g, T, T y) { return y > T(0) ? g / (T(2) * y) : T(0); });
}

template <typename T>
Var<T> square(const Var<T>& a) {
  return elementwise_unary<T>(
      a, [](T x) { return x * x; }, [](T g, T x, T) { return T(2) * x * g; });
}

template <typename T>
Var<T> scale(const Var<T>& a, T c) {
  return elementwise_unary<T>(
      a, [c](T x) { return c * x; }, [c](T g, T, T) { return c * g; });
}

template <typename T>
Var<T> add_scalar(const Var<T>& a, T c) {
  return elementwise_unary<T>(
      a, [c](T x) { return x + c; }, [](T g, T, T) { return g; });
}

template <typename T>
Var<T> stop_gradient(const Var<T>& a) {
  return Var<T>::constant(a.value());
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

template <typename T>
Var<T> sum_all(const Var<T>& a) {
  T s = T(0);
  const T* pa = a.value().data();
  for (int64_t i = 0; i < a.numel(); ++i) s += pa[i];
  return make_op_node<T>(Tensor<T>::scalar(s), {a}, [a](Node<T>& node) mutable {
    if (!a.requires_grad()) return;
    const T g = node.grad[0];
    T* da = a.grad().data();
    for (int64_t i = 0; i < a.numel(); ++i) da[i] += g;
  });
}

template <typename T>
Var<T> mean_all(const Var<T>& a) {
  return scale(sum_all(a), T(1) / static_cast<T>(a.numel()));
}

// ---------------------------------------------------------------------------
// Shape manipulation
// ---------------------------------------------------------------------------

template <typename T>
Var<T> reshape(const Var<T>& a, std::vector<int64_t> shape) {
  Tensor<T> out = a.value().reshaped(std::move(shape));
  return make_op_node<T>(std::move(out), {a}, [a](Node<T>& node) mutable {
    if (!a.requires_grad()) return;
    T* da = a.grad().data();
    const T* g = node.grad.data();
    for (int64_t i = 0; i < node.grad.numel(); ++i) da[i] += g[i];
  });
}

template <typename T>
Tensor<T> tensor_permute(const Tensor<T>& x, const std::vector<int>& perm) {
  const int r = x.rank();
  std::vector<int64_t> oshape(r);
  for (int i = 0; i < r; ++i) oshape[i] = x.dim(perm[i]);
  Tensor<T> out(oshape);
  std::vector<int64_t> istrides(r, 1), ostrides(r, 1);
  for (int i = r - 2; i >= 0; --i) istrides[i] = istrides[i + 1] * x.dim(i + 1);
  for (int i = r - 2; i >= 0; --i) ostrides[i] = ostrides[i + 1] * oshape[i + 1];
  std::vector<int64_t> idx(r, 0);
  const int64_t n = x.numel();
  for (int64_t lin = 0; lin < n; ++lin) {
    int64_t src = 0;
    for (int i = 0; i < r; ++i) src += idx[i] * istrides[perm[i]];
    out[lin] = x[src];
    for (int i = r - 1; i >= 0; --i) {
      if (++idx[i] < oshape[i]) break;
      idx[i] = 0;
    }
  }
  return out;
}

template <typename T>
Var<T> permute(const Var<T>& a, std::vector<int> perm) {
  Tensor<T> out = tensor_permute(a.value(), perm);
  std::vector<int> inv(perm.size());
  for (size_t i = 0; i < perm.size(); ++i) inv[static_cast<size_t>(perm[i])] = static_cast<int>(i);
  return make_op_node<T>(std::move(out), {a}, [a, inv](Node<T>& node) mutable {
    if (!a.requires_grad()) return;
    Tensor<T> gperm = tensor_permute(node.grad, inv);
    T* da = a.grad().data();
    for (int64_t i = 0; i < gperm.numel(); ++i) da[i] += gperm[i];
  });
}

namespace detail {
// Maps a tensor to (outer, dim, inner) strides for slicing/concat along `dim`.
template <typename T>
void split_dims(const Tensor<T>& x, int dim, int64_t& outer, int64_t& d, int64_t& inner) {
  outer = 1;
  for (int i = 0; i < dim; ++i) outer *= x.dim(i);
  d = x.dim(dim);
  inner = 1;
  for (int i = dim + 1; i < x.rank(); ++i) inner *= x.dim(i);
}
}  // namespace detail

template <typename T>
Var<T> slice(const Var<T>& a, int dim, int64_t start, int64_t len) {
  const Tensor<T>& x = a.value();
  if (dim < 0 || dim >= x.rank() || start < 0 || start + len > x.dim(dim))
    throw std::invalid_argument("slice: out of range");
  std::vector<int64_t> oshape = x.shape();
  oshape[static_cast<size_t>(dim)] = len;
  Tensor<T> out(oshape);
  int64_t outer, d, inner;
  detail::split_dims(x, dim, outer, d, inner);
  for (int64_t o = 0; o < outer; ++o)
    for (int64_t j = 0; j < len; ++j)
      std::copy_n(x.data() + (o * d + start + j) * inner, inner,
                  out.data() + (o * len + j) * inner);
  return make_op_node<T>(std::move(out), {a}, [a, dim, start, len](Node<T>& node) mutable {
    if (!a.requires_grad()) return;
    Tensor<T>& da = a.grad();
    int64_t outer, d, inner;
    detail::split_dims(a.value(), dim, outer, d, inner);
    const T* g = node.grad.data();
    for (int64_t o = 0; o < outer; ++o)
      for (int64_t j = 0; j < len; ++j) {
        T* dst = da.data() + (o * d + start + j) * inner;
        const T* src = g + (o * len + j) * inner;
        for (int64_t i = 0; i < inner; ++i) dst[i] += src[i];
      }
  });
}

template <typename T>
Var<T> concat(const Var<T>& a, const Var<T>& b, int dim) {
  const Tensor<T>& x = a.value();
  const Tensor<T>& y = b.value();
  if (x.rank() != y.rank()) throw std::invalid_argument("concat: rank mismatch");
  for (int i = 0; i < x.rank(); ++i)
    if (i != dim && x.dim(i) != y.dim(i))
      throw std::invalid_argument("concat: shape mismatch off the concat axis");
  std::vector<int64_t> oshape = x.shape();
  oshape[static_cast<size_t>(dim)] += y.dim(dim);
  Tensor<T> out(oshape);
  int64_t outer, da_, inner;
  detail::split_dims(x, dim, outer, da_, inner);
  const int64_t db_ = y.dim(dim);
  for (int64_t o = 0; o < outer; ++o) {
    std::copy_n(x.data() + o * da_ * inner, da_ * inner,
                out.data() + o * (da_ + db_) * inner);
    std::copy_n(y.data() + o * db_ * inner, db_ * inner,
                out.data() + (o * (da_ + db_) + da_) * inner);
  }
  return make_op_node<T>(std::move(out), {a, b}, [a, b, dim](Node<T>& node) mutable {
    int64_t outer, da_, inner;
    detail::split_dims(a.value(), dim, outer, da_, inner);
    const int64_t db_ = b.value().dim(dim);
    const T* g = node.grad.data();
    if (a.requires_grad()) {
      T* dst = a.grad().data();
      for (int64_t o = 0; o < outer; ++o) {
        const T* src = g + o * (da_ + db_) * inner;
        for (int64_t i = 0; i < da_ * inner; ++i) dst[o * da_ * inner + i] += src[i];
      }
    }
    if (b.requires_grad()) {
      T* dst = b.grad().data();
      for (int64_t o = 0; o < outer; ++o) {
        const T* src = g + (o * (da_ + db_) + da_) * inner;
        for (int64_t i = 0; i < db_ * inner; ++i) dst[o * db_ * inner + i] += src[i];
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

/// y = x @ w + b with x (N, in), w (in, out), b (out) or undefined.
template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>& b) {
  const int64_t n = x.value().dim(0), in = x.value().dim(1);
  const int64_t out_dim = w.value().dim(1);
  if (w.value().dim(0) != in) throw std::invalid_argument("linear: weight shape mismatch");
  Tensor<T> out({n, out_dim});
  CMatMap<T> xm(x.value().data(), n, in);
  CMatMap<T> wm(w.value().data(), in, out_dim);
  MatMap<T> om(out.data(), n, out_dim);
  om.noalias() = xm * wm;
  if (b.defined()) {
    const T* pb = b.value().data();
    for (int64_t i = 0; i < n; ++i)
      for (int64_t j = 0; j < out_dim; ++j) out[i * out_dim + j] += pb[j];
  }
  std::vector<Var<T>> parents = {x, w};
  if (b.defined()) parents.push_back(b);
  return make_op_node<T>(std::move(out), std::move(parents),
                         [x, w, b, n, in, out_dim](Node<T>& node) mutable {
    CMatMap<T> gm(node.grad.data(), n, out_dim);
    if (x.requires_grad()) {
      MatMap<T> dx(x.grad().data(), n, in);
      CMatMap<T> wm(w.value().data(), in, out_dim);
      dx.noalias() += gm * wm.transpose();
    }
    if (w.requires_grad()) {
      MatMap<T> dw(w.grad().data(), in, out_dim);
      CMatMap<T> xm(x.value().data(), n, in);
      dw.noalias() += xm.transpose() * gm;
    }
    if (b.defined() && b.requires_grad()) {
      T* db = b.grad().data();
      const T* g = node.grad.data();
      for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < out_dim; ++j) db[j] += g[i * out_dim + j];
    }
  });
}

/// Batched matmul: a (N, r, k) @ b (N, k, c) -> (N, r, c).
template <typename T>
Var<T> bmm(const Var<T>& a, const Var<T>& b) {
  const int64_t n = a.value().dim(0), r = a.value().dim(1), k = a.value().dim(2);
  const int64_t c = b.value().dim(2);
  if (b.value().dim(0) != n || b.value().dim(1) != k)
    throw std::invalid_argument("bmm: shape mismatch");
  Tensor<T> out({n, r, c});
  for (int64_t i = 0; i < n; ++i) {
    CMatMap<T> am(a.value().data() + i * r * k, r, k);
    CMatMap<T> bm(b.value().data() + i * k * c, k, c);
    MatMap<T> om(out.data() + i * r * c, r, c);
    om.noalias() = am * bm;
  }
  return make_op_node<T>(std::move(out), {a, b}, [a, b, n, r, k, c](Node<T>& node) mutable {
    for (int64_t i = 0; i < n; ++i) {
      CMatMap<T> gm(node.grad.data() + i * r * c, r, c);
      if (a.requires_grad()) {
        MatMap<T> da(a.grad().data() + i * r * k, r, k);
        CMatMap<T> bm(b.value().data() + i * k * c, k, c);
        da.noalias() += gm * bm.transpose();
      }
      if (b.requires_grad()) {
        MatMap<T> db(b.grad().data() + i * k * c, k, c);
        CMatMap<T> am(a.value().data() + i * r * k, r, k);
        db.noalias() += am.transpose() * gm;
      }
    }
  });
}

/// Batched matmul with transposed right operand: a (N, r, k) @ b^T, b (N, c, k).
template <typename T>
Var<T> bmm_nt(const Var<T>& a, const Var<T>& b) {
  const int64_t n = a.value().dim(0), r = a.value().dim(1), k = a.value().dim(2);
  const int64_t c = b.value().dim(1);
  if (b.value().dim(0) != n || b.value().dim(2) != k)
    throw std::invalid_argument("bmm_nt: shape mismatch");
  Tensor<T> out({n, r, c});
  for (int64_t i = 0; i < n; ++i) {
    CMatMap<T> am(a.value().data() + i * r * k, r, k);
    CMatMap<T> bm(b.value().data() + i * c * k, c, k);
    MatMap<T> om(out.data() + i * r * c, r, c);
    om.noalias() = am * bm.transpose();
  }
  return make_op_node<T>(std::move(out), {a, b}, [a, b, n, r, k, c](Node<T>& node) mutable {
    for (int64_t i = 0; i < n; ++i) {
      CMatMap<T> gm(node.grad.data() + i * r * c, r, c);
      if (a.requires_grad()) {
        MatMap<T> da(a.grad().data() + i * r * k, r, k);
        CMatMap<T> bm(b.value().data() + i * c * k, c, k);
        da.noalias() += gm * bm;
      }
      if (b.requires_grad()) {
        MatMap<T> db(b.grad().data() + i * c * k, c, k);
        CMatMap<T> am(a.value().data() + i * r * k, r, k);
        db.noalias() += gm.transpose() * am;
      }
    }
  });
}

/// Softmax over the last axis; rows are treated independently.
template <typename T>
Var<T> softmax_lastdim(const Var<T>& x) {
  const Tensor<T>& v = x.value();
  const int64_t l = v.dim(v.rank() - 1);
  const int64_t m = v.numel() / l;
  Tensor<T> out(v.shape());
  for (int64_t i = 0; i < m; ++i) {
    const T* row = v.data() + i * l;
    T* orow = out.data() + i * l;
    T mx = row[0];
    for (int64_t j = 1; j < l; ++j) mx = std::max(mx, row[j]);
    T sum = T(0);
    for (int64_t j = 0; j < l; ++j) {
      orow[j] = std::exp(row[j] - mx);
      sum += orow[j];
    }
    const T inv = T(1) / sum;
    for (int64_t j = 0; j < l; ++j) orow[j] *= inv;
  }
  return make_op_node<T>(std::move(out), {x}, [x, m, l](Node<T>& node) mutable {
    if (!x.requires_grad()) return;
    T* dx = x.grad().data();
    const T* g = node.grad.data();
    const T* y = node.value.data();
    for (int64_t i = 0; i < m; ++i) {
      T dot = T(0);
      for (int64_t j = 0; j < l; ++j) dot += g[i * l + j] * y[i * l + j];
      for (int64_t j = 0; j < l; ++j)
        dx[i * l + j] += y[i * l + j] * (g[i * l + j] - dot);
    }
  });
}

// ---------------------------------------------------------------------------
// Convolutions (im2col / col2im backed)
// ---------------------------------------------------------------------------

inline int64_t conv_out_size(int64_t in, int64_t k, int64_t stride, int64_t pad) {
  return (in + 2 * pad - k) / stride + 1;
}

namespace detail {

template <typename T>
void im2col(const T* x, int64_t c, int64_t h, int64_t w, int64_t k, int64_t stride,
            int64_t pad, T* col) {
  const int64_t ho = conv_out_size(h, k, stride, pad);
  const int64_t wo = conv_out_size(w, k, stride, pad);
  for (int64_t ch = 0; ch < c; ++ch)
    for (int64_t ki = 0; ki < k; ++ki)
      for (int64_t kj = 0; kj < k; ++kj) {
        T* dst = col + ((ch * k + ki) * k + kj) * ho * wo;
        for (int64_t i = 0; i < ho; ++i) {
          const int64_t hi = i * stride - pad + ki;
          if (hi < 0 || hi >= h) {
            std::fill_n(dst + i * wo, wo, T(0));
            continue;
          }
          const T* src = x + (ch * h + hi) * w;
          for (int64_t j = 0; j < wo; ++j) {
            const int64_t wi = j * stride - pad + kj;
            dst[i * wo + j] = (wi >= 0 && wi < w) ? src[wi] : T(0);
          }
        }
      }
}

/// Scatter-accumulates columns back into the image (the adjoint of im2col).
template <typename T>
void col2im(const T* col, int64_t c, int64_t h, int64_t w, int64_t k, int64_t stride,
            int64_t pad, T* x) {
  const int64_t ho = conv_out_size(h, k, stride, pad);
  const int64_t wo = conv_out_size(w, k, stride, pad);
  for (int64_t ch = 0; ch < c; ++ch)
    for (int64_t ki = 0; ki < k; ++ki)
      for (int64_t kj = 0; kj < k; ++kj) {
        const T* src = col + ((ch * k + ki) * k + kj) * ho * wo;
        for (int64_t i = 0; i < ho; ++i) {
          const int64_t hi = i * stride - pad + ki;
          if (hi < 0 || hi >= h) continue;
          T* dst = x + (ch * h + hi) * w;
          for (int64_t j = 0; j < wo; ++j) {
            const int64_t wi = j * stride - pad + kj;
            if (wi >= 0 && wi < w) dst[wi] += src[i * wo + j];
          }
        }
      }
}

}  // namespace detail

/// 2-D convolution. x (B, Cin, H, W), w (Cout, Cin, k, k), b (Cout) or undefined.
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& b, int64_t stride,
              int64_t pad) {
  const Tensor<T>& xv = x.value();
  const Tensor<T>& wv = w.value();
  if (xv.rank() != 4 || wv.rank() != 4)
    throw std::invalid_argument("conv2d: expected rank-4 input and weight");
  const int64_t batch = xv.dim(0), cin = xv.dim(1), h = xv.dim(2), wd = xv.dim(3);
  const int64_t cout = wv.dim(0), k = wv.dim(2);
  if (wv.dim(1) != cin)
    throw std::invalid_argument("conv2d: input channels " + std::to_string(cin) +
                                " do not match weight " + std::to_string(wv.dim(1)));
  const int64_t ho = conv_out_size(h, k, stride, pad);
  const int64_t wo = conv_out_size(wd, k, stride, pad);
  if (ho <= 0 || wo <= 0) throw std::invalid_argument("conv2d: output would be empty");
  Tensor<T> out({batch, cout, ho, wo});
  const int64_t ck2 = cin * k * k;
  std::vector<T> col(static_cast<size_t>(ck2 * ho * wo));
  CMatMap<T> wm(wv.data(), cout, ck2);
  for (int64_t n = 0; n < batch; ++n) {
    detail::im2col(xv.data() + n * cin * h * wd, cin, h, wd, k, stride, pad, col.data());
    CMatMap<T> cm(col.data(), ck2, ho * wo);
    MatMap<T> om(out.data() + n * cout * ho * wo, cout, ho * wo);
    om.noalias() = wm * cm;
    if (b.defined()) {
      const T* pb = b.value().data();
      for (int64_t c = 0; c < cout; ++c)
        for (int64_t i = 0; i < ho * wo; ++i) out[(n * cout + c) * ho * wo + i] += pb[c];
    }
  }
  std::vector<Var<T>> parents = {x, w};
  if (b.defined()) parents.push_back(b);
  return make_op_node<T>(
      std::move(out), std::move(parents),
      [x, w, b, batch, cin, h, wd, cout, k, stride, pad, ho, wo](Node<T>& node) mutable {
        const int64_t ck2 = cin * k * k;
        std::vector<T> col(static_cast<size_t>(ck2 * ho * wo));
        CMatMap<T> wm(w.value().data(), cout, ck2);
        for (int64_t n = 0; n < batch; ++n) {
          CMatMap<T> gm(node.grad.data() + n * cout * ho * wo, cout, ho * wo);
          if (w.requires_grad()) {
            detail::im2col(x.value().data() + n * cin * h * wd, cin, h, wd, k, stride, pad,
                           col.data());
            CMatMap<T> cm(col.data(), ck2, ho * wo);
            MatMap<T> dw(w.grad().data(), cout, ck2);
            dw.noalias() += gm * cm.transpose();
          }
          if (x.requires_grad()) {
            MatMap<T> dcol(col.data(), ck2, ho * wo);
            dcol.noalias() = wm.transpose() * gm;
            detail::col2im(col.data(), cin, h, wd, k, stride, pad,
                           x.grad().data() + n * cin * h * wd);
          }
        }
        if (b.defined() && b.requires_grad()) {
          T* db = b.grad().data();
          const T* g = node.grad.data();
          for (int64_t n = 0; n < batch; ++n)
            for (int64_t c = 0; c < cout; ++c)
              for (int64_t i = 0; i < ho * wo; ++i) db[c] += g[(n * cout + c) * ho * wo + i];
        }
      });
}

/// Transposed 2-D convolution. x (B, Cin, H, W), w (Cin, Cout, k, k), b (Cout).
/// Output spatial size is (H-1)*stride - 2*pad + k.
template <typename T>
Var<T> conv_transpose2d(const Var<T>& x, const Var<T>& w, const Var<T>& b, int64_t stride,
                        int64_t pad) {
  const Tensor<T>& xv = x.value();
  const Tensor<T>& wv = w.value();
  const int64_t batch = xv.dim(0), cin = xv.dim(1), h = xv.dim(2), wd = xv.dim(3);
  const int64_t cout = wv.dim(1), k = wv.dim(2);
  if (wv.dim(0) != cin) throw std::invalid_argument("conv_transpose2d: channel mismatch");
  const int64_t ho = (h - 1) * stride - 2 * pad + k;
  const int64_t wo = (wd - 1) * stride - 2 * pad + k;
  Tensor<T> out({batch, cout, ho, wo});
  const int64_t ck2 = cout * k * k;
  std::vector<T> col(static_cast<size_t>(ck2 * h * wd));
  CMatMap<T> wm(wv.data(), cin, ck2);
  for (int64_t n = 0; n < batch; ++n) {
    CMatMap<T> xm(xv.data() + n * cin * h * wd, cin, h * wd);
    MatMap<T> cm(col.data(), ck2, h * wd);
    cm.noalias() = wm.transpose() * xm;
    T* y = out.data() + n * cout * ho * wo;
    detail::col2im(col.data(), cout, ho, wo, k, stride, pad, y);
    if (b.defined()) {
      const T* pb = b.value().data();
      for (int64_t c = 0; c < cout; ++c)
        for (int64_t i = 0; i < ho * wo; ++i) y[c * ho * wo + i] += pb[c];
    }
  }
  std::vector<Var<T>> parents = {x, w};
  if (b.defined()) parents.push_back(b);
  return make_op_node<T>(
      std::move(out), std::move(parents),
      [x, w, b, batch, cin, h, wd, cout, k, stride, pad, ho, wo](Node<T>& node) mutable {
        const int64_t ck2 = cout * k * k;
        std::vector<T> gcol(static_cast<size_t>(ck2 * h * wd));
        for (int64_t n = 0; n < batch; ++n) {
          detail::im2col(node.grad.data() + n * cout * ho * wo, cout, ho, wo, k, stride, pad,
                         gcol.data());
          CMatMap<T> gcm(gcol.data(), ck2, h * wd);
          if (x.requires_grad()) {
            CMatMap<T> wm(w.value().data(), cin, ck2);
            MatMap<T> dx(x.grad().data() + n * cin * h * wd, cin, h * wd);
            dx.noalias() += wm * gcm;
          }
          if (w.requires_grad()) {
            CMatMap<T> xm(x.value().data() + n * cin * h * wd, cin, h * wd);
            MatMap<T> dw(w.grad().data(), cin, ck2);
            dw.noalias() += xm * gcm.transpose();
          }
        }
        if (b.defined() && b.requires_grad()) {
          T* db = b.grad().data();
          const T* g = node.grad.data();
          for (int64_t n = 0; n < batch; ++n)
            for (int64_t c = 0; c < cout; ++c)
              for (int64_t i = 0; i < ho * wo; ++i) db[c] += g[(n * cout + c) * ho * wo + i];
        }
      });
}

/// Applies one fixed (non-learnable) 2-D kernel to every channel independently
/// with "valid" geometry. Used by the SSIM window and Sobel filters.
template <typename T>
Var<T> fixed_depthwise_valid_conv(const Var<T>& x, const Tensor<T>& kernel) {
  const Tensor<T>& xv = x.value();
  const int64_t batch = xv.dim(0), c = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
  const int64_t kh = kernel.dim(0), kw = kernel.dim(1);
  const int64_t ho = h - kh + 1, wo = w - kw + 1;
  if (ho <= 0 || wo <= 0)
    throw std::invalid_argument("fixed_depthwise_valid_conv: image smaller than kernel");
  Tensor<T> out({batch, c, ho, wo});
  for (int64_t p = 0; p < batch * c; ++p) {
    const T* src = xv.data() + p * h * w;
    T* dst = out.data() + p * ho * wo;
    for (int64_t i = 0; i < ho; ++i)
      for (int64_t j = 0; j < wo; ++j) {
        T acc = T(0);
        for (int64_t ki = 0; ki < kh; ++ki)
          for (int64_t kj = 0; kj < kw; ++kj)
            acc += kernel[ki * kw + kj] * src[(i + ki) * w + (j + kj)];
        dst[i * wo + j] = acc;
      }
  }
  return make_op_node<T>(std::move(out), {x},
                         [x, kernel, batch, c, h, w, kh, kw, ho, wo](Node<T>& node) mutable {
    if (!x.requires_grad()) return;
    Tensor<T>& dx = x.grad();
    const T* g = node.grad.data();
    for (int64_t p = 0; p < batch * c; ++p) {
      T* dst = dx.data() + p * h * w;
      const T* src = g + p * ho * wo;
      for (int64_t i = 0; i < ho; ++i)
        for (int64_t j = 0; j < wo; ++j) {
          const T gv = src[i * wo + j];
          for (int64_t ki = 0; ki < kh; ++ki)
            for (int64_t kj = 0; kj < kw; ++kj)
              dst[(i + ki) * w + (j + kj)] += kernel[ki * kw + kj] * gv;
        }
    }
  });
}

}  // namespace ops
}  // namespace brightvae
