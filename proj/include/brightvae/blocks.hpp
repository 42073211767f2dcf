#pragma once

#include <string>
#include <vector>

#include "brightvae/ops.hpp"
#include "brightvae/rng.hpp"

namespace brightvae {

template <typename T>
struct NamedParam {
  std::string name;
  Var<T> var;
};

template <typename T>
using ParamList = std::vector<NamedParam<T>>;

enum class Branch { kLocal, kGlobal };

// ---------------------------------------------------------------------------
// Convolution layers
// ---------------------------------------------------------------------------

template <typename T>
struct Conv2dLayer {
  Var<T> w, b;
  int64_t stride = 1, pad = 0;

  static Conv2dLayer make(Rng& rng, int64_t cin, int64_t cout, int64_t k, int64_t stride,
                          int64_t pad) {
    Conv2dLayer l;
    Tensor<T> wt({cout, cin, k, k});
    rng.fill_normal(wt, 0.0, std::sqrt(2.0 / static_cast<double>(cin * k * k)));
    l.w = Var<T>::leaf(std::move(wt), true);
    l.b = Var<T>::leaf(Tensor<T>::zeros({cout}), true);
    l.stride = stride;
    l.pad = pad;
    return l;
  }

  Var<T> forward(const Var<T>& x) const { return ops::conv2d(x, w, b, stride, pad); }

  void register_params(ParamList<T>& out, const std::string& prefix) const {
    out.push_back({prefix + ".w", w});
    out.push_back({prefix + ".b", b});
  }

  int64_t param_count() const { return w.numel() + b.numel(); }
};

template <typename T>
struct ConvTranspose2dLayer {
  Var<T> w, b;  // w is (Cin, Cout, k, k)
  int64_t stride = 2, pad = 1;

  static ConvTranspose2dLayer make(Rng& rng, int64_t cin, int64_t cout, int64_t k,
                                   int64_t stride, int64_t pad) {
    ConvTranspose2dLayer l;
    Tensor<T> wt({cin, cout, k, k});
    rng.fill_normal(wt, 0.0, std::sqrt(2.0 / static_cast<double>(cin * k * k)));
    l.w = Var<T>::leaf(std::move(wt), true);
    l.b = Var<T>::leaf(Tensor<T>::zeros({cout}), true);
    l.stride = stride;
    l.pad = pad;
    return l;
  }

  Var<T> forward(const Var<T>& x) const {
    return ops::conv_transpose2d(x, w, b, stride, pad);
  }

  void register_params(ParamList<T>& out, const std::string& prefix) const {
    out.push_back({prefix + ".w", w});
    out.push_back({prefix + ".b", b});
  }

  int64_t param_count() const { return w.numel() + b.numel(); }
};

template <typename T>
struct LinearLayer {
  Var<T> w, b;  // w is (in, out)

  static LinearLayer make(Rng& rng, int64_t in, int64_t out) {
    LinearLayer l;
    Tensor<T> wt({in, out});
    rng.fill_normal(wt, 0.0, std::sqrt(2.0 / static_cast<double>(in)));
    l.w = Var<T>::leaf(std::move(wt), true);
    l.b = Var<T>::leaf(Tensor<T>::zeros({out}), true);
    return l;
  }

  Var<T> forward(const Var<T>& x) const { return ops::linear(x, w, b); }

  void register_params(ParamList<T>& out, const std::string& prefix) const {
    out.push_back({prefix + ".w", w});
    out.push_back({prefix + ".b", b});
  }

  int64_t param_count() const { return w.numel() + b.numel(); }
};

// ---------------------------------------------------------------------------
// ConvResBlock: x + F(x) with F = ReLU -> 3x3 conv -> ReLU -> 1x1 conv.
// No normalization layers.
// ---------------------------------------------------------------------------

template <typename T>
struct ConvResBlock {
  Conv2dLayer<T> conv3;
  Conv2dLayer<T> conv1;

  static ConvResBlock make(Rng& rng, int64_t channels) {
    ConvResBlock b;
    b.conv3 = Conv2dLayer<T>::make(rng, channels, channels, 3, 1, 1);
    b.conv1 = Conv2dLayer<T>::make(rng, channels, channels, 1, 1, 0);
    return b;
  }

  Var<T> forward(const Var<T>& x) const {
    Var<T> f = conv1.forward(ops::relu(conv3.forward(ops::relu(x))));
    return ops::add(x, f);
  }

  void register_params(ParamList<T>& out, const std::string& prefix) const {
    conv3.register_params(out, prefix + ".conv3");
    conv1.register_params(out, prefix + ".conv1");
  }

  int64_t param_count() const { return conv3.param_count() + conv1.param_count(); }
};

// ---------------------------------------------------------------------------
// Branch-specific initial blocks.
//   local:  conv(s2) -> ReLU -> conv(s2) -> ReLU -> conv(s1) -> ReLU  (x4 down)
//   global: conv(s2) -> ReLU -> conv(s1)                              (x2 down)
// ---------------------------------------------------------------------------

template <typename T>
struct InitialBlock {
  Branch branch = Branch::kLocal;
  std::vector<Conv2dLayer<T>> convs;

  static InitialBlock make(Rng& rng, Branch branch, int64_t in_channels, int64_t channels) {
    InitialBlock b;
    b.branch = branch;
    if (branch == Branch::kLocal) {
      b.convs.push_back(Conv2dLayer<T>::make(rng, in_channels, channels, 3, 2, 1));
      b.convs.push_back(Conv2dLayer<T>::make(rng, channels, channels, 3, 2, 1));
      b.convs.push_back(Conv2dLayer<T>::make(rng, channels, channels, 3, 1, 1));
    } else {
      b.convs.push_back(Conv2dLayer<T>::make(rng, in_channels, channels, 3, 2, 1));
      b.convs.push_back(Conv2dLayer<T>::make(rng, channels, channels, 3, 1, 1));
    }
    return b;
  }

  int64_t total_stride() const { return branch == Branch::kLocal ? 4 : 2; }

  Var<T> forward(const Var<T>& x) const {
    const int64_t s = total_stride();
    if (x.value().dim(2) % s != 0 || x.value().dim(3) % s != 0)
      throw std::invalid_argument("initial_block: spatial dims " +
                                  std::to_string(x.value().dim(2)) + "x" +
                                  std::to_string(x.value().dim(3)) +
                                  " not divisible by stride " + std::to_string(s));
    if (branch == Branch::kLocal) {
      Var<T> h = ops::relu(convs[0].forward(x));
      h = ops::relu(convs[1].forward(h));
      return ops::relu(convs[2].forward(h));
    }
    Var<T> h = ops::relu(convs[0].forward(x));
    return convs[1].forward(h);
  }

  void register_params(ParamList<T>& out, const std::string& prefix) const {
    for (size_t i = 0; i < convs.size(); ++i)
      convs[i].register_params(out, prefix + ".conv" + std::to_string(i));
  }

  int64_t param_count() const {
    int64_t n = 0;
    for (const auto& c : convs) n += c.param_count();
    return n;
  }
};

// ---------------------------------------------------------------------------
// Spatial multi-head self-attention over flattened H*W tokens, with a
// residual connection around the whole layer.
// ---------------------------------------------------------------------------

template <typename T>
struct MultiHeadAttention {
  LinearLayer<T> wq, wk, wv, wo;
  int64_t heads = 8;
  int64_t channels = 0;

  static MultiHeadAttention make(Rng& rng, int64_t channels, int64_t heads) {
    if (channels % heads != 0)
      throw std::invalid_argument("multi_head_attention: channels " +
                                  std::to_string(channels) + " not divisible by heads " +
                                  std::to_string(heads));
    MultiHeadAttention a;
    a.heads = heads;
    a.channels = channels;
    a.wq = LinearLayer<T>::make(rng, channels, channels);
    a.wk = LinearLayer<T>::make(rng, channels, channels);
    a.wv = LinearLayer<T>::make(rng, channels, channels);
    a.wo = LinearLayer<T>::make(rng, channels, channels);
    return a;
  }

  Var<T> forward(const Var<T>& x) const {
    if (x.value().dim(1) != channels)
      throw std::invalid_argument("multi_head_attention: channel mismatch");
    if (!grad_enabled() || !needs_grad(x)) return forward_streaming(x);
    return forward_graph(x);
  }

  /// Post-softmax attention probabilities, (B*heads, T, T). Test hook; only
  /// sensible for small inputs.
  Tensor<T> attention_probs(const Var<T>& x) const {
    NoGradGuard ng;
    const int64_t b = x.value().dim(0), h = x.value().dim(2), w = x.value().dim(3);
    const int64_t t = h * w, d = channels / heads;
    Var<T> tok = tokens(x);
    Var<T> q = split_heads(wq.forward(tok), b, t, d);
    Var<T> k = split_heads(wk.forward(tok), b, t, d);
    Var<T> scores = ops::scale(ops::bmm_nt(q, k), T(1) / static_cast<T>(std::sqrt(double(d))));
    return ops::softmax_lastdim(scores).value();
  }

  void register_params(ParamList<T>& out, const std::string& prefix) const {
    wq.register_params(out, prefix + ".q");
    wk.register_params(out, prefix + ".k");
    wv.register_params(out, prefix + ".v");
    wo.register_params(out, prefix + ".o");
  }

  int64_t param_count() const {
    return wq.param_count() + wk.param_count() + wv.param_count() + wo.param_count();
  }

 private:
  bool needs_grad(const Var<T>& x) const {
    return x.requires_grad() || wq.w.requires_grad();
  }

  Var<T> tokens(const Var<T>& x) const {
    const int64_t b = x.value().dim(0), h = x.value().dim(2), w = x.value().dim(3);
    return ops::reshape(ops::permute(x, {0, 2, 3, 1}), {b * h * w, channels});
  }

  static Var<T> split_heads(const Var<T>& t2d, int64_t b, int64_t t, int64_t d) {
    const int64_t heads = t2d.value().dim(1) / d;
    return ops::reshape(ops::permute(ops::reshape(t2d, {b, t, heads, d}), {0, 2, 1, 3}),
                        {b * heads, t, d});
  }

  Var<T> forward_graph(const Var<T>& x) const {
    const int64_t b = x.value().dim(0), h = x.value().dim(2), w = x.value().dim(3);
    const int64_t t = h * w, d = channels / heads;
    Var<T> tok = tokens(x);
    Var<T> q = split_heads(wq.forward(tok), b, t, d);
    Var<T> k = split_heads(wk.forward(tok), b, t, d);
    Var<T> v = split_heads(wv.forward(tok), b, t, d);
    Var<T> probs = ops::softmax_lastdim(
        ops::scale(ops::bmm_nt(q, k), T(1) / static_cast<T>(std::sqrt(double(d)))));
    Var<T> ctx = ops::bmm(probs, v);  // (B*heads, T, d)
    Var<T> merged = ops::reshape(
        ops::permute(ops::reshape(ctx, {b, heads, t, d}), {0, 2, 1, 3}), {b * t, channels});
    Var<T> out2d = wo.forward(merged);
    Var<T> out = ops::permute(ops::reshape(out2d, {b, h, w, channels}), {0, 3, 1, 2});
    return ops::add(x, out);
  }

  /// Inference path: identical math, but the T x T score matrix is processed
  /// in query blocks so full-resolution images stay within memory.
  Var<T> forward_streaming(const Var<T>& x) const {
    NoGradGuard ng;
    const int64_t b = x.value().dim(0), h = x.value().dim(2), w = x.value().dim(3);
    const int64_t t = h * w, d = channels / heads;
    Var<T> tok = tokens(x);
    const Tensor<T> q = split_heads(wq.forward(tok), b, t, d).value();
    const Tensor<T> k = split_heads(wk.forward(tok), b, t, d).value();
    const Tensor<T> v = split_heads(wv.forward(tok), b, t, d).value();
    Tensor<T> ctx({b * heads, t, d});
    const T inv_sqrt_d = T(1) / static_cast<T>(std::sqrt(double(d)));
    const int64_t block = 256;
    std::vector<T> scores(static_cast<size_t>(std::min(block, t) * t));
    for (int64_t g = 0; g < b * heads; ++g) {
      ops::CMatMap<T> km(k.data() + g * t * d, t, d);
      ops::CMatMap<T> vm(v.data() + g * t * d, t, d);
      for (int64_t q0 = 0; q0 < t; q0 += block) {
        const int64_t rows = std::min(block, t - q0);
        ops::CMatMap<T> qm(q.data() + (g * t + q0) * d, rows, d);
        ops::MatMap<T> sm(scores.data(), rows, t);
        sm.noalias() = qm * km.transpose() * inv_sqrt_d;
        for (int64_t r = 0; r < rows; ++r) {
          auto row = sm.row(r).array();
          row -= row.maxCoeff();
          row = row.exp();
          row /= row.sum();
        }
        ops::MatMap<T> cm(ctx.data() + (g * t + q0) * d, rows, d);
        cm.noalias() = sm * vm;
      }
    }
    Var<T> merged = ops::reshape(
        ops::permute(ops::reshape(Var<T>::constant(std::move(ctx)), {b, heads, t, d}),
                     {0, 2, 1, 3}),
        {b * t, channels});
    Var<T> out2d = wo.forward(merged);
    Var<T> out = ops::permute(ops::reshape(out2d, {b, h, w, channels}), {0, 3, 1, 2});
    return ops::add(x, out);
  }
};

}  // namespace brightvae
