#pragma once

#include <limits>

#include "brightvae/blocks.hpp"

namespace brightvae {

/// Per-dimension attention weights for quantization: softmax over
/// down(LeakyReLU(up(v))). D -> D_h -> D with D_h = 2D.
template <typename T>
struct AttentionProjection {
  LinearLayer<T> up, down;
  T leaky_slope = T(0.01);

  static AttentionProjection make(Rng& rng, int64_t d) {
    AttentionProjection p;
    p.up = LinearLayer<T>::make(rng, d, 2 * d);
    p.down = LinearLayer<T>::make(rng, 2 * d, d);
    return p;
  }

  /// Softmax-normalized weights for a batch of vectors, (N, D) -> (N, D).
  Tensor<T> weights(const Tensor<T>& v) const {
    NoGradGuard ng;
    Var<T> x = Var<T>::constant(v);
    Var<T> scores = down.forward(ops::leaky_relu(up.forward(x), leaky_slope));
    return ops::softmax_lastdim(scores).value();
  }

  void register_params(ParamList<T>& out, const std::string& prefix) const {
    up.register_params(out, prefix + ".up");
    down.register_params(out, prefix + ".down");
  }

  int64_t param_count() const { return up.param_count() + down.param_count(); }
};

/// Attention weights for a single D-vector.
template <typename T>
Tensor<T> attention_weights(const Tensor<T>& v, const AttentionProjection<T>& p) {
  if (!v.all_finite()) throw std::runtime_error("attention_weights: non-finite input");
  Tensor<T> batch = v.reshaped({1, v.numel()});
  Tensor<T> w = p.weights(batch);
  return w.reshaped({v.numel()});
}

/// Sum_d w_d * (v_d - e_d)^2.
template <typename T>
T weighted_distance(const T* v, const T* w, const T* e, int64_t d) {
  T acc = T(0);
  for (int64_t i = 0; i < d; ++i) {
    const T diff = v[i] - e[i];
    acc += w[i] * diff * diff;
  }
  return acc;
}

template <typename T>
T weighted_distance(const Tensor<T>& v, const Tensor<T>& w, const Tensor<T>& e) {
  return weighted_distance(v.data(), w.data(), e.data(), v.numel());
}

template <typename T>
struct QuantizeResult {
  Var<T> quantized;       // same shape as the input feature map
  Tensor<int64_t> indices;  // (B, H, W)
  Var<T> latent_loss;     // scalar commitment + codebook term, unweighted norms
};

/// Captures quantization decisions so a finite-difference probe evaluates the
/// same (straight-through) surrogate the backward pass differentiates.
template <typename T>
struct QuantizeFreeze {
  bool captured = false;
  Tensor<int64_t> indices;  // (N)
  Tensor<T> v0;             // (N, D) encoder vectors at capture time
  Tensor<T> e0;             // (N, D) selected codebook rows at capture time
};

/// Attention-weighted vector quantizer. Index selection uses the weighted
/// squared Euclidean distance; the latent loss uses unweighted norms.
template <typename T>
struct Attenquant {
  Var<T> codebook;  // (K, D)
  AttentionProjection<T> proj;
  T beta = T(0.25);
  bool use_attention = true;

  static Attenquant make(Rng& rng, int64_t k, int64_t d, T beta, bool use_attention) {
    if (k <= 0) throw std::invalid_argument("Attenquant: codebook size must be positive");
    if (d <= 0) throw std::invalid_argument("Attenquant: embedding dim must be positive");
    Attenquant q;
    Tensor<T> cb({k, d});
    rng.fill_uniform(cb, -1.0 / static_cast<double>(k), 1.0 / static_cast<double>(k));
    q.codebook = Var<T>::leaf(std::move(cb), true);
    q.beta = beta;
    q.use_attention = use_attention;
    if (use_attention) q.proj = AttentionProjection<T>::make(rng, d);
    return q;
  }

  QuantizeResult<T> quantize(const Var<T>& z_e, QuantizeFreeze<T>* freeze = nullptr) const {
    const Tensor<T>& zv = z_e.value();
    if (zv.rank() != 4) throw std::invalid_argument("quantize: expected (B, D, H, W)");
    const int64_t b = zv.dim(0), d = zv.dim(1), h = zv.dim(2), w = zv.dim(3);
    const int64_t k = codebook.value().dim(0);
    if (codebook.value().dim(1) != d)
      throw std::invalid_argument("quantize: channel dim " + std::to_string(d) +
                                  " does not match codebook dim " +
                                  std::to_string(codebook.value().dim(1)));
    const int64_t n = b * h * w;

    // Gather spatial vectors as rows of (N, D).
    Tensor<T> vecs({n, d});
    for (int64_t bi = 0; bi < b; ++bi)
      for (int64_t ci = 0; ci < d; ++ci) {
        const T* src = zv.data() + (bi * d + ci) * h * w;
        for (int64_t s = 0; s < h * w; ++s) vecs[(bi * h * w + s) * d + ci] = src[s];
      }

    Tensor<int64_t> flat_idx({n});
    const T* cb = codebook.value().data();
    const bool frozen = freeze && freeze->captured;
    if (frozen) {
      flat_idx = freeze->indices;
    } else {
      Tensor<T> wts;
      if (use_attention) {
        wts = proj.weights(vecs);
      } else {
        wts = Tensor<T>::full({n, d}, T(1) / static_cast<T>(d));
      }
      for (int64_t i = 0; i < n; ++i) {
        const T* v = vecs.data() + i * d;
        const T* wv = wts.data() + i * d;
        T best = std::numeric_limits<T>::infinity();
        int64_t best_j = 0;
        for (int64_t j = 0; j < k; ++j) {
          const T dist = weighted_distance(v, wv, cb + j * d, d);
          if (dist < best) {
            best = dist;
            best_j = j;
          }
        }
        flat_idx[i] = best_j;
      }
    }

    // Reference points for the two stop-gradient terms. Outside of freeze mode these
    // are just the current vectors / selected rows.
    Tensor<T> vref = frozen ? freeze->v0 : vecs;
    Tensor<T> eref({n, d});
    if (frozen) {
      eref = freeze->e0;
    } else {
      for (int64_t i = 0; i < n; ++i)
        std::copy_n(cb + flat_idx[i] * d, d, eref.data() + i * d);
    }
    if (freeze && !freeze->captured) {
      freeze->captured = true;
      freeze->indices = flat_idx;
      freeze->v0 = vecs;
      freeze->e0 = eref;
    }

    // Quantized map: codebook rows (or the straight-through surrogate
    // v + (e0 - v0) when frozen, which coincides with e when not frozen).
    Tensor<T> qt(zv.shape());
    for (int64_t bi = 0; bi < b; ++bi)
      for (int64_t s = 0; s < h * w; ++s) {
        const int64_t i = bi * h * w + s;
        for (int64_t ci = 0; ci < d; ++ci) {
          T qv;
          if (frozen)
            qv = vecs[i * d + ci] + (freeze->e0[i * d + ci] - freeze->v0[i * d + ci]);
          else
            qv = eref[i * d + ci];
          qt.at(bi, ci, s / w, s % w) = qv;
        }
      }

    // Latent loss: mean over vectors of ||sg[v] - e||^2 + beta ||v - sg[e]||^2.
    T term1 = T(0), term2 = T(0);
    for (int64_t i = 0; i < n; ++i) {
      const T* erow = cb + flat_idx[i] * d;
      for (int64_t ci = 0; ci < d; ++ci) {
        const T d1 = vref[i * d + ci] - erow[ci];
        term1 += d1 * d1;
        const T d2 = vecs[i * d + ci] - eref[i * d + ci];
        term2 += d2 * d2;
      }
    }
    const T inv_n = T(1) / static_cast<T>(n);
    const T latent = (term1 + beta * term2) * inv_n;

    QuantizeResult<T> res;
    res.indices = Tensor<int64_t>({b, h, w}, std::vector<int64_t>(flat_idx.data(),
                                                                  flat_idx.data() + n));

    // Straight-through: downstream gradients w.r.t. the quantized map are
    // copied to z_e unchanged.
    res.quantized = make_op_node<T>(std::move(qt), {z_e}, [z_e](Node<T>& node) mutable {
      if (!z_e.requires_grad()) return;
      T* dz = z_e.grad().data();
      const T* g = node.grad.data();
      for (int64_t i = 0; i < node.grad.numel(); ++i) dz[i] += g[i];
    });

    // Latent loss gradients: codebook via term 1, encoder via term 2.
    Var<T> cb_var = codebook;
    const T beta_c = beta;
    Tensor<int64_t> idx_copy = flat_idx;
    Tensor<T> vref_c = vref;
    Tensor<T> eref_c = eref;
    res.latent_loss = make_op_node<T>(
        Tensor<T>::scalar(latent), {z_e, cb_var},
        [z_e, cb_var, idx_copy, vref_c, eref_c, beta_c, n, d, b, h, w](Node<T>& node) mutable {
          const T g = node.grad[0];
          const T c1 = T(2) * g / static_cast<T>(n);
          const T c2 = T(2) * beta_c * g / static_cast<T>(n);
          if (cb_var.requires_grad()) {
            T* dcb = cb_var.grad().data();
            const T* cb = cb_var.value().data();
            for (int64_t i = 0; i < n; ++i) {
              const int64_t j = idx_copy[i];
              for (int64_t ci = 0; ci < d; ++ci)
                dcb[j * d + ci] += c1 * (cb[j * d + ci] - vref_c[i * d + ci]);
            }
          }
          if (z_e.requires_grad()) {
            Tensor<T>& dz = z_e.grad();
            const Tensor<T>& zv = z_e.value();
            for (int64_t bi = 0; bi < b; ++bi)
              for (int64_t s = 0; s < h * w; ++s) {
                const int64_t i = bi * h * w + s;
                for (int64_t ci = 0; ci < d; ++ci)
                  dz.at(bi, ci, s / w, s % w) +=
                      c2 * (zv.at(bi, ci, s / w, s % w) - eref_c[i * d + ci]);
              }
          }
        });
    return res;
  }

  void register_params(ParamList<T>& out, const std::string& prefix) const {
    out.push_back({prefix + ".codebook", codebook});
    if (use_attention) proj.register_params(out, prefix + ".proj");
  }

  int64_t param_count() const {
    return codebook.numel() + (use_attention ? proj.param_count() : 0);
  }
};

}  // namespace brightvae
