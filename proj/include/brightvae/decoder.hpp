#pragma once

#include "brightvae/blocks.hpp"

namespace brightvae {

/// Branch decoder: 1x1 skip fusion -> initial conv -> two ConvResBlocks ->
/// ReLU -> transposed-conv upsampling. The global branch upsamples x2 and
/// keeps the working width; the local branch upsamples x4 down to 3 channels
/// with a linear (unbounded) final layer.
template <typename T>
struct Decoder {
  Branch branch = Branch::kLocal;
  Conv2dLayer<T> fuse;     // 1x1 over concat(z, skip)
  Conv2dLayer<T> initial;  // 3x3
  ConvResBlock<T> res1, res2;
  std::vector<ConvTranspose2dLayer<T>> upsample;

  static Decoder make(Rng& rng, Branch branch, int64_t z_channels, int64_t skip_channels,
                      int64_t channels) {
    Decoder d;
    d.branch = branch;
    d.fuse = Conv2dLayer<T>::make(rng, z_channels + skip_channels, channels, 1, 1, 0);
    d.initial = Conv2dLayer<T>::make(rng, channels, channels, 3, 1, 1);
    d.res1 = ConvResBlock<T>::make(rng, channels);
    d.res2 = ConvResBlock<T>::make(rng, channels);
    if (branch == Branch::kGlobal) {
      d.upsample.push_back(ConvTranspose2dLayer<T>::make(rng, channels, channels, 4, 2, 1));
    } else {
      d.upsample.push_back(ConvTranspose2dLayer<T>::make(rng, channels, channels, 4, 2, 1));
      d.upsample.push_back(ConvTranspose2dLayer<T>::make(rng, channels, 3, 4, 2, 1));
    }
    return d;
  }

  Var<T> forward(const Var<T>& z, const Var<T>& skip) const {
    if (z.value().dim(2) != skip.value().dim(2) || z.value().dim(3) != skip.value().dim(3))
      throw std::invalid_argument("decode: spatial mismatch between z " +
                                  z.value().shape_str() + " and skip " +
                                  skip.value().shape_str());
    Var<T> h = fuse.forward(ops::concat(z, skip, 1));
    h = ops::relu(res2.forward(res1.forward(initial.forward(h))));
    for (size_t i = 0; i < upsample.size(); ++i) {
      h = upsample[i].forward(h);
      if (i + 1 < upsample.size()) h = ops::relu(h);
    }
    return h;  // final layer is linear; clamping happens at inference only
  }

  void register_params(ParamList<T>& out, const std::string& prefix) const {
    fuse.register_params(out, prefix + ".fuse");
    initial.register_params(out, prefix + ".initial");
    res1.register_params(out, prefix + ".res1");
    res2.register_params(out, prefix + ".res2");
    for (size_t i = 0; i < upsample.size(); ++i)
      upsample[i].register_params(out, prefix + ".up" + std::to_string(i));
  }

  int64_t param_count() const {
    int64_t n = fuse.param_count() + initial.param_count() + res1.param_count() +
                res2.param_count();
    for (const auto& u : upsample) n += u.param_count();
    return n;
  }
};

}  // namespace brightvae
