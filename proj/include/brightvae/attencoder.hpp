#pragma once

#include "brightvae/blocks.hpp"

namespace brightvae {

/// Attention-augmented encoder: initial block -> two ConvResBlocks -> ReLU ->
/// multi-head self-attention. The attention stage drops to identity when the
/// configuration disables it.
template <typename T>
struct Attencoder {
  Branch branch = Branch::kLocal;
  InitialBlock<T> initial;
  ConvResBlock<T> res1, res2;
  MultiHeadAttention<T> attn;
  bool use_attention = true;

  static Attencoder make(Rng& rng, Branch branch, int64_t in_channels, int64_t channels,
                         int64_t heads, bool use_attention) {
    Attencoder e;
    e.branch = branch;
    e.initial = InitialBlock<T>::make(rng, branch, in_channels, channels);
    e.res1 = ConvResBlock<T>::make(rng, channels);
    e.res2 = ConvResBlock<T>::make(rng, channels);
    e.use_attention = use_attention;
    if (use_attention) e.attn = MultiHeadAttention<T>::make(rng, channels, heads);
    return e;
  }

  Var<T> forward(const Var<T>& x) const {
    Var<T> h = ops::relu(res2.forward(res1.forward(initial.forward(x))));
    return use_attention ? attn.forward(h) : h;
  }

  void register_params(ParamList<T>& out, const std::string& prefix) const {
    initial.register_params(out, prefix + ".initial");
    res1.register_params(out, prefix + ".res1");
    res2.register_params(out, prefix + ".res2");
    if (use_attention) attn.register_params(out, prefix + ".attn");
  }

  int64_t param_count() const {
    return initial.param_count() + res1.param_count() + res2.param_count() +
           (use_attention ? attn.param_count() : 0);
  }
};

}  // namespace brightvae
