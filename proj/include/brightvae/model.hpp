#pragma once

#include "brightvae/attencoder.hpp"
#include "brightvae/attenquant.hpp"
#include "brightvae/decoder.hpp"
#include "brightvae/losses.hpp"

namespace brightvae {

struct BrightVAEConfig {
  int64_t channels = 128;       // C; embedding dim D equals C
  int64_t codebook_size = 512;  // K
  int64_t heads = 8;
  double beta = 0.25;
  double lambda_rest = 1.0;
  double lambda_latent = 0.25;
  double lambda_similarity = 0.08;
  SimilarityKind similarity_loss_kind = SimilarityKind::kSsi;
  bool two_receptive_fields = true;
  bool skip_connection = true;
  bool use_attencoder = true;
  bool use_attenquant = true;
  bool use_similarity_loss = true;
  uint64_t seed = 0;

  void validate() const {
    if (channels <= 0) throw std::invalid_argument("config: channels must be positive");
    if (codebook_size <= 0)
      throw std::invalid_argument("config: codebook_size must be positive");
    if (heads <= 0 || channels % heads != 0)
      throw std::invalid_argument("config: channels must be divisible by heads");
    if (beta <= 0.0) throw std::invalid_argument("config: beta must be positive");
    if (lambda_rest < 0 || lambda_latent < 0 || lambda_similarity < 0)
      throw std::invalid_argument("config: loss weights must be nonnegative");
  }
};

template <typename T>
struct ForwardResult {
  Var<T> enhanced;  // (B, 3, H, W), unclamped
  Var<T> latent_loss_global;  // undefined in single-branch configs
  Var<T> latent_loss_local;
  Tensor<int64_t> indices_global;  // empty in single-branch configs
  Tensor<int64_t> indices_local;
};

/// Test hook: freezes both quantizers' decisions so finite differences probe
/// the same straight-through surrogate the backward pass differentiates.
template <typename T>
struct ModelFreeze {
  QuantizeFreeze<T> global;
  QuantizeFreeze<T> local;
};

template <typename T>
class BrightVAE {
 public:
  explicit BrightVAE(const BrightVAEConfig& cfg) : cfg_(cfg) {
    cfg.validate();
    Rng rng(cfg.seed);
    const int64_t c = cfg.channels;
    enc_local_ = Attencoder<T>::make(rng, Branch::kLocal, 3, c, cfg.heads,
                                     cfg.use_attencoder);
    if (cfg.two_receptive_fields) {
      enc_global_ = Attencoder<T>::make(rng, Branch::kGlobal, c, c, cfg.heads,
                                        cfg.use_attencoder);
      quant_global_ = Attenquant<T>::make(rng, cfg.codebook_size, c, T(cfg.beta),
                                          cfg.use_attenquant);
      dec_global_ = Decoder<T>::make(rng, Branch::kGlobal, c, c, c);
      mix_ = Conv2dLayer<T>::make(rng, 2 * c, c, 1, 1, 0);
    }
    quant_local_ = Attenquant<T>::make(rng, cfg.codebook_size, c, T(cfg.beta),
                                       cfg.use_attenquant);
    const int64_t local_z = cfg.two_receptive_fields ? 2 * c : c;
    dec_local_ = Decoder<T>::make(rng, Branch::kLocal, local_z, c, c);
  }

  const BrightVAEConfig& config() const { return cfg_; }

  ForwardResult<T> forward(const Var<T>& x, ModelFreeze<T>* freeze = nullptr) const {
    validate_input(x.value());
    ForwardResult<T> out;
    Var<T> f_loc = enc_local_.forward(x);  // 1/4 resolution
    Var<T> quant_input;
    Var<T> d_glob;
    if (cfg_.two_receptive_fields) {
      Var<T> f_glob = enc_global_.forward(f_loc);  // 1/8 resolution
      QuantizeResult<T> qg =
          quant_global_.quantize(f_glob, freeze ? &freeze->global : nullptr);
      out.latent_loss_global = qg.latent_loss;
      out.indices_global = qg.indices;
      d_glob = dec_global_.forward(qg.quantized, maybe_skip(f_glob));
      quant_input = mix_.forward(ops::concat(f_loc, d_glob, 1));
    } else {
      quant_input = f_loc;
    }
    QuantizeResult<T> ql =
        quant_local_.quantize(quant_input, freeze ? &freeze->local : nullptr);
    out.latent_loss_local = ql.latent_loss;
    out.indices_local = ql.indices;
    Var<T> local_z = cfg_.two_receptive_fields ? ops::concat(ql.quantized, d_glob, 1)
                                               : ql.quantized;
    out.enhanced = dec_local_.forward(local_z, maybe_skip(f_loc));
    return out;
  }

  /// Inference entry point: forward + clamp to the [0, 1] image range.
  Tensor<T> enhance(const Tensor<T>& image) const {
    NoGradGuard ng;
    Tensor<T> x = image.rank() == 3
                      ? image.reshaped({1, image.dim(0), image.dim(1), image.dim(2)})
                      : image;
    Tensor<T> y = forward(Var<T>::constant(x)).enhanced.value();
    for (int64_t i = 0; i < y.numel(); ++i) y[i] = std::clamp(y[i], T(0), T(1));
    return image.rank() == 3 ? y.reshaped({3, image.dim(1), image.dim(2)}) : y;
  }

  ParamList<T> params() const {
    ParamList<T> out;
    enc_local_.register_params(out, "enc_local");
    if (cfg_.two_receptive_fields) {
      enc_global_.register_params(out, "enc_global");
      quant_global_.register_params(out, "quant_global");
      dec_global_.register_params(out, "dec_global");
      mix_.register_params(out, "mix");
    }
    quant_local_.register_params(out, "quant_local");
    dec_local_.register_params(out, "dec_local");
    return out;
  }

  int64_t parameter_count() const {
    int64_t n = 0;
    for (const auto& p : params()) n += p.var.numel();
    return n;
  }

  const Attenquant<T>& local_quantizer() const { return quant_local_; }
  const Attencoder<T>& local_encoder() const { return enc_local_; }

 private:
  Var<T> maybe_skip(const Var<T>& skip) const {
    if (cfg_.skip_connection) return skip;
    return Var<T>::constant(Tensor<T>::zeros(skip.value().shape()));
  }

  void validate_input(const Tensor<T>& x) const {
    if (x.rank() != 4 || x.dim(1) != 3)
      throw std::invalid_argument("forward: expected (batch, 3, H, W) input");
    if (x.dim(2) % 8 != 0 || x.dim(3) % 8 != 0)
      throw std::invalid_argument("forward: H and W must be divisible by 8, got " +
                                  x.shape_str());
  }

  BrightVAEConfig cfg_;
  Attencoder<T> enc_local_;
  Attencoder<T> enc_global_;
  Attenquant<T> quant_global_;
  Attenquant<T> quant_local_;
  Decoder<T> dec_global_;
  Decoder<T> dec_local_;
  Conv2dLayer<T> mix_;
};

}  // namespace brightvae
