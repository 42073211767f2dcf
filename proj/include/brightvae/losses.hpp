#pragma once

#include <string>

#include "brightvae/blocks.hpp"
#include "brightvae/ops.hpp"

namespace brightvae {

enum class SimilarityKind {
  kNone,
  kJaccard,
  kTv,
  kCosine,
  kKld,
  kGmsd,
  kPerceptual,
  kColor,
  kSsi,
};

inline const char* to_string(SimilarityKind k) {
  switch (k) {
    case SimilarityKind::kNone: return "none";
    case SimilarityKind::kJaccard: return "jaccard";
    case SimilarityKind::kTv: return "tv";
    case SimilarityKind::kCosine: return "cosine";
    case SimilarityKind::kKld: return "kld";
    case SimilarityKind::kGmsd: return "gmsd";
    case SimilarityKind::kPerceptual: return "perceptual";
    case SimilarityKind::kColor: return "color";
    case SimilarityKind::kSsi: return "ssi";
  }
  return "?";
}

inline SimilarityKind similarity_kind_from_string(const std::string& s) {
  for (SimilarityKind k : {SimilarityKind::kNone, SimilarityKind::kJaccard,
                           SimilarityKind::kTv, SimilarityKind::kCosine, SimilarityKind::kKld,
                           SimilarityKind::kGmsd, SimilarityKind::kPerceptual,
                           SimilarityKind::kColor, SimilarityKind::kSsi})
    if (s == to_string(k)) return k;
  throw std::invalid_argument("unknown similarity loss kind: " + s);
}

struct LossBreakdown {
  double rest = 0.0;
  double latent = 0.0;
  double similarity = 0.0;
  double total = 0.0;
  SimilarityKind kind = SimilarityKind::kNone;
};

namespace losses {

inline constexpr double kEps = 1e-8;
inline constexpr double kGmsdC = 0.0026;  // 170 / 255^2, stability constant for GMS

// ---------------------------------------------------------------------------
// Reconstruction term: mean squared error over every entry.
// ---------------------------------------------------------------------------
template <typename T>
Var<T> rest_loss(const Var<T>& pred, const Var<T>& target) {
  check_same_shape(pred.value(), target.value(), "rest_loss");
  return ops::mean_all(ops::square(ops::sub(pred, target)));
}

/// Per-branch latent losses combine by summation.
template <typename T>
Var<T> latent_loss_total(const Var<T>& l_global, const Var<T>& l_local) {
  if (!l_global.defined()) return l_local;
  return ops::add(l_global, l_local);
}

// ---------------------------------------------------------------------------
// SSIM (11x11 Gaussian window, sigma 1.5, K1=0.01, K2=0.03, L=1) and the
// structural-similarity loss on top of it. Differentiable end to end.
// ---------------------------------------------------------------------------
template <typename T>
Tensor<T> gaussian_window(int64_t size = 11, double sigma = 1.5) {
  Tensor<T> w({size, size});
  const double c = (size - 1) / 2.0;
  double sum = 0.0;
  for (int64_t i = 0; i < size; ++i)
    for (int64_t j = 0; j < size; ++j) {
      const double v = std::exp(-((i - c) * (i - c) + (j - c) * (j - c)) / (2 * sigma * sigma));
      w[i * size + j] = static_cast<T>(v);
      sum += v;
    }
  for (int64_t i = 0; i < w.numel(); ++i) w[i] = static_cast<T>(w[i] / sum);
  return w;
}

template <typename T>
Var<T> ssim_mean(const Var<T>& x, const Var<T>& y) {
  check_same_shape(x.value(), y.value(), "ssim");
  if (x.value().dim(2) < 11 || x.value().dim(3) < 11)
    throw std::invalid_argument("ssim: image smaller than the 11x11 window");
  static const Tensor<T> win = gaussian_window<T>();
  const T c1 = T(0.01 * 0.01), c2 = T(0.03 * 0.03);
  auto filt = [&](const Var<T>& v) { return ops::fixed_depthwise_valid_conv(v, win); };
  Var<T> mu_x = filt(x), mu_y = filt(y);
  Var<T> mu_xx = ops::square(mu_x), mu_yy = ops::square(mu_y), mu_xy = ops::mul(mu_x, mu_y);
  Var<T> sig_x = ops::sub(filt(ops::square(x)), mu_xx);
  Var<T> sig_y = ops::sub(filt(ops::square(y)), mu_yy);
  Var<T> sig_xy = ops::sub(filt(ops::mul(x, y)), mu_xy);
  Var<T> num = ops::mul(ops::add_scalar(ops::scale(mu_xy, T(2)), c1),
                        ops::add_scalar(ops::scale(sig_xy, T(2)), c2));
  Var<T> den = ops::mul(ops::add_scalar(ops::add(mu_xx, mu_yy), c1),
                        ops::add_scalar(ops::add(sig_x, sig_y), c2));
  return ops::mean_all(ops::div(num, den));
}

template <typename T>
Var<T> ssi_loss(const Var<T>& pred, const Var<T>& target) {
  return ops::add_scalar(ops::scale(ssim_mean(pred, target), T(-1)), T(1));
}

// ---------------------------------------------------------------------------
// Candidate similarity losses for the loss-function sweep
// ---------------------------------------------------------------------------

/// a) Soft IoU: 1 - sum(p*t) / (sum(p) + sum(t) - sum(p*t) + eps).
template <typename T>
Var<T> jaccard_loss(const Var<T>& pred, const Var<T>& target) {
  check_same_shape(pred.value(), target.value(), "jaccard_loss");
  Var<T> inter = ops::sum_all(ops::mul(pred, target));
  Var<T> uni = ops::add_scalar(
      ops::sub(ops::add(ops::sum_all(pred), ops::sum_all(target)), inter), T(kEps));
  return ops::add_scalar(ops::scale(ops::div(inter, uni), T(-1)), T(1));
}

/// b) Mean squared horizontal-neighbor differences plus vertical ones.
template <typename T>
Var<T> tv_loss(const Var<T>& pred) {
  const int64_t h = pred.value().dim(2), w = pred.value().dim(3);
  Var<T> total;
  if (w > 1) {
    Var<T> dh = ops::sub(ops::slice(pred, 3, 1, w - 1), ops::slice(pred, 3, 0, w - 1));
    total = ops::mean_all(ops::square(dh));
  }
  if (h > 1) {
    Var<T> dv = ops::sub(ops::slice(pred, 2, 1, h - 1), ops::slice(pred, 2, 0, h - 1));
    Var<T> mv = ops::mean_all(ops::square(dv));
    total = total.defined() ? ops::add(total, mv) : mv;
  }
  if (!total.defined()) total = Var<T>::constant(Tensor<T>::scalar(T(0)));
  return total;
}

/// c) 1 - cosine between the flattened images.
template <typename T>
Var<T> cosine_loss(const Var<T>& pred, const Var<T>& target) {
  check_same_shape(pred.value(), target.value(), "cosine_loss");
  Var<T> dot = ops::sum_all(ops::mul(pred, target));
  Var<T> np = ops::vsqrt(ops::sum_all(ops::square(pred)));
  Var<T> nt = ops::vsqrt(ops::sum_all(ops::square(target)));
  Var<T> den = ops::add_scalar(ops::mul(np, nt), T(kEps));
  return ops::add_scalar(ops::scale(ops::div(dot, den), T(-1)), T(1));
}

namespace detail {

/// Hard histogram over equal-width bins on [0, 1], eps-smoothed + renormalized.
template <typename T>
std::vector<double> hard_histogram(const Tensor<T>& img, int bins, double eps) {
  std::vector<double> h(static_cast<size_t>(bins), 0.0);
  const int64_t n = img.numel();
  for (int64_t i = 0; i < n; ++i) {
    int b = static_cast<int>(static_cast<double>(img[i]) * bins);
    b = std::clamp(b, 0, bins - 1);
    h[static_cast<size_t>(b)] += 1.0;
  }
  double sum = 0.0;
  for (double& v : h) {
    v = v / static_cast<double>(n) + eps;
    sum += v;
  }
  for (double& v : h) v /= sum;
  return h;
}

/// Differentiable soft histogram: per-pixel softmax over Gaussian bin kernels
/// (bandwidth = bin width), averaged over pixels. Output (bins).
template <typename T>
Var<T> soft_histogram(const Var<T>& x, int bins) {
  const int64_t n = x.numel();
  const double sigma = 1.0 / bins;
  const double inv2s2 = 1.0 / (2.0 * sigma * sigma);
  std::vector<double> centers(static_cast<size_t>(bins));
  for (int b = 0; b < bins; ++b) centers[static_cast<size_t>(b)] = (b + 0.5) / bins;

  // Captured by value: the backward closure outlives this stack frame.
  auto row_weights = [bins, inv2s2, centers](double xi, std::vector<double>& w) {
    double mx = -1e300;
    for (int b = 0; b < bins; ++b) {
      const double d = xi - centers[static_cast<size_t>(b)];
      w[static_cast<size_t>(b)] = -d * d * inv2s2;
      mx = std::max(mx, w[static_cast<size_t>(b)]);
    }
    double sum = 0.0;
    for (int b = 0; b < bins; ++b) {
      w[static_cast<size_t>(b)] = std::exp(w[static_cast<size_t>(b)] - mx);
      sum += w[static_cast<size_t>(b)];
    }
    for (int b = 0; b < bins; ++b) w[static_cast<size_t>(b)] /= sum;
  };

  Tensor<T> hist({bins});
  {
    std::vector<double> w(static_cast<size_t>(bins));
    std::vector<double> acc(static_cast<size_t>(bins), 0.0);
    for (int64_t i = 0; i < n; ++i) {
      row_weights(static_cast<double>(x.value()[i]), w);
      for (int b = 0; b < bins; ++b) acc[static_cast<size_t>(b)] += w[static_cast<size_t>(b)];
    }
    for (int b = 0; b < bins; ++b)
      hist[b] = static_cast<T>(acc[static_cast<size_t>(b)] / static_cast<double>(n));
  }
  return make_op_node<T>(std::move(hist), {x},
                         [x, bins, inv2s2, centers, row_weights, n](Node<T>& node) mutable {
    if (!x.requires_grad()) return;
    T* dx = x.grad().data();
    const T* g = node.grad.data();
    std::vector<double> w(static_cast<size_t>(bins));
    for (int64_t i = 0; i < n; ++i) {
      const double xi = static_cast<double>(x.value()[i]);
      row_weights(xi, w);
      // dl_b = -(x - c_b) / sigma^2; dw_b/dx = w_b (dl_b - sum_b' w_b' dl_b')
      double s = 0.0;
      for (int b = 0; b < bins; ++b)
        s += w[static_cast<size_t>(b)] * (-2.0 * inv2s2 * (xi - centers[static_cast<size_t>(b)]));
      double acc = 0.0;
      for (int b = 0; b < bins; ++b) {
        const double dl = -2.0 * inv2s2 * (xi - centers[static_cast<size_t>(b)]);
        acc += static_cast<double>(g[b]) * w[static_cast<size_t>(b)] * (dl - s);
      }
      dx[i] += static_cast<T>(acc / static_cast<double>(n));
    }
  });
}

}  // namespace detail

/// d) Reported (hard-binned) KL(hist(target) || hist(pred)).
template <typename T>
double kld_loss(const Tensor<T>& pred, const Tensor<T>& target, int bins = 256,
                double eps = kEps) {
  const auto hp = detail::hard_histogram(pred, bins, eps);
  const auto ht = detail::hard_histogram(target, bins, eps);
  double kl = 0.0;
  for (int b = 0; b < bins; ++b)
    kl += ht[static_cast<size_t>(b)] *
          std::log(ht[static_cast<size_t>(b)] / hp[static_cast<size_t>(b)]);
  return kl;
}

/// d) Training path: soft-binned, differentiable w.r.t. pred.
template <typename T>
Var<T> kld_loss_soft(const Var<T>& pred, const Var<T>& target, int bins = 64) {
  Var<T> hp = detail::soft_histogram(pred, bins);
  Tensor<T> ht;
  {
    NoGradGuard ng;
    ht = detail::soft_histogram(Var<T>::constant(target.value()), bins).value();
  }
  // Smooth + renormalize both; KL(ht || hp) = sum ht' (ln ht' - ln hp').
  const T eps = T(kEps);
  const T norm = T(1) / (T(1) + T(bins) * eps);
  Var<T> hp_s = ops::scale(ops::add_scalar(hp, eps), norm);
  Tensor<T> ht_s({bins});
  T entropy = T(0);
  for (int b = 0; b < bins; ++b) {
    ht_s[b] = (ht[b] + eps) * norm;
    entropy += ht_s[b] * std::log(ht_s[b]);
  }
  Var<T> cross = ops::sum_all(ops::mul(Var<T>::constant(ht_s), ops::vlog(hp_s)));
  return ops::add_scalar(ops::scale(cross, T(-1)), entropy);
}

/// e) GMSD-style loss: Sobel gradient magnitudes, GMS map, 1 - mean(GMS).
template <typename T>
Var<T> gmsd_loss(const Var<T>& pred, const Var<T>& target) {
  check_same_shape(pred.value(), target.value(), "gmsd_loss");
  static const Tensor<T> sobel_x({3, 3}, {-1, 0, 1, -2, 0, 2, -1, 0, 1});
  static const Tensor<T> sobel_y({3, 3}, {-1, -2, -1, 0, 0, 0, 1, 2, 1});
  auto to_gray = [](const Var<T>& img) {
    Var<T> r = ops::slice(img, 1, 0, 1);
    Var<T> g = ops::slice(img, 1, 1, 1);
    Var<T> b = ops::slice(img, 1, 2, 1);
    return ops::add(ops::add(ops::scale(r, T(0.299)), ops::scale(g, T(0.587))),
                    ops::scale(b, T(0.114)));
  };
  auto grad_mag = [](const Var<T>& gray) {
    Var<T> gx = ops::fixed_depthwise_valid_conv(gray, sobel_x);
    Var<T> gy = ops::fixed_depthwise_valid_conv(gray, sobel_y);
    return ops::vsqrt(ops::add_scalar(ops::add(ops::square(gx), ops::square(gy)), T(1e-12)));
  };
  Var<T> g1 = grad_mag(to_gray(pred));
  Var<T> g2 = grad_mag(to_gray(target));
  const T c = T(kGmsdC);
  Var<T> gms = ops::div(ops::add_scalar(ops::scale(ops::mul(g1, g2), T(2)), c),
                        ops::add_scalar(ops::add(ops::square(g1), ops::square(g2)), c));
  return ops::add_scalar(ops::scale(ops::mean_all(gms), T(-1)), T(1));
}

/// Pluggable convolutional feature pyramid with fixed seeded random weights.
/// Stands in for a pre-trained backbone in desk-scale runs; used by both the
/// perceptual loss and LPIPS.
template <typename T>
struct RandomFeatureExtractor {
  std::vector<Var<T>> weights;  // (Cout, Cin, 3, 3), non-trainable
  std::vector<Var<T>> biases;

  static RandomFeatureExtractor make(uint64_t seed, int64_t in_channels = 3,
                                     std::vector<int64_t> widths = {16, 32, 64}) {
    RandomFeatureExtractor e;
    Rng rng(seed);
    int64_t cin = in_channels;
    for (int64_t cout : widths) {
      Tensor<T> w({cout, cin, 3, 3});
      rng.fill_normal(w, 0.0, std::sqrt(2.0 / static_cast<double>(cin * 9)));
      e.weights.push_back(Var<T>::leaf(std::move(w), false));
      e.biases.push_back(Var<T>::leaf(Tensor<T>::zeros({cout}), false));
      cin = cout;
    }
    return e;
  }

  size_t num_stages() const { return weights.size(); }

  std::vector<Var<T>> features(const Var<T>& x) const {
    std::vector<Var<T>> feats;
    Var<T> h = x;
    for (size_t i = 0; i < weights.size(); ++i) {
      h = ops::relu(ops::conv2d(h, weights[i], biases[i], /*stride=*/2, /*pad=*/1));
      feats.push_back(h);
    }
    return feats;
  }
};

/// f) Mean of per-stage feature MSEs under the injected extractor.
template <typename T>
Var<T> perceptual_loss(const Var<T>& pred, const Var<T>& target,
                       const RandomFeatureExtractor<T>* extractor) {
  if (extractor == nullptr || extractor->num_stages() == 0)
    throw std::invalid_argument("perceptual_loss: no feature extractor configured");
  std::vector<Var<T>> fp = extractor->features(pred);
  std::vector<Var<T>> ft;
  {
    NoGradGuard ng;
    ft = extractor->features(Var<T>::constant(target.value()));
  }
  Var<T> total;
  for (size_t i = 0; i < fp.size(); ++i) {
    Var<T> m = ops::mean_all(ops::square(ops::sub(fp[i], Var<T>::constant(ft[i].value()))));
    total = total.defined() ? ops::add(total, m) : m;
  }
  return ops::scale(total, T(1) / static_cast<T>(fp.size()));
}

/// g) Sum over channels of (mean difference)^2 + (variance difference)^2.
template <typename T>
Var<T> color_consistency_loss(const Var<T>& pred, const Var<T>& target) {
  check_same_shape(pred.value(), target.value(), "color_consistency_loss");
  if (pred.value().dim(1) != 3)
    throw std::invalid_argument("color_consistency_loss: expected 3-channel images");
  Var<T> total;
  for (int64_t c = 0; c < 3; ++c) {
    Var<T> pc = ops::slice(pred, 1, c, 1);
    Var<T> tc = ops::slice(target, 1, c, 1);
    Var<T> mu_p = ops::mean_all(pc), mu_t = ops::mean_all(tc);
    Var<T> var_p = ops::sub(ops::mean_all(ops::square(pc)), ops::square(mu_p));
    Var<T> var_t = ops::sub(ops::mean_all(ops::square(tc)), ops::square(mu_t));
    Var<T> term = ops::add(ops::square(ops::sub(mu_p, mu_t)),
                           ops::square(ops::sub(var_p, var_t)));
    total = total.defined() ? ops::add(total, term) : term;
  }
  return total;
}

/// Dispatch for the configured similarity term. `kNone` yields no Var.
template <typename T>
Var<T> similarity_loss(SimilarityKind kind, const Var<T>& pred, const Var<T>& target,
                       const RandomFeatureExtractor<T>* extractor = nullptr,
                       int kld_bins = 64) {
  switch (kind) {
    case SimilarityKind::kNone: return Var<T>();
    case SimilarityKind::kJaccard: return jaccard_loss(pred, target);
    case SimilarityKind::kTv: return tv_loss(pred);
    case SimilarityKind::kCosine: return cosine_loss(pred, target);
    case SimilarityKind::kKld: return kld_loss_soft(pred, target, kld_bins);
    case SimilarityKind::kGmsd: return gmsd_loss(pred, target);
    case SimilarityKind::kPerceptual: return perceptual_loss(pred, target, extractor);
    case SimilarityKind::kColor: return color_consistency_loss(pred, target);
    case SimilarityKind::kSsi: return ssi_loss(pred, target);
  }
  throw std::logic_error("similarity_loss: unreachable");
}

/// Weighted sum of the three terms; the similarity term is omitted when
/// `use_similarity` is false.
template <typename T>
Var<T> total_loss(const Var<T>& rest, const Var<T>& latent, const Var<T>& similarity,
                  double lambda_rest, double lambda_latent, double lambda_similarity,
                  bool use_similarity) {
  if (lambda_rest < 0 || lambda_latent < 0 || lambda_similarity < 0)
    throw std::invalid_argument("total_loss: negative loss weights rejected");
  Var<T> total = ops::add(ops::scale(rest, T(lambda_rest)),
                          ops::scale(latent, T(lambda_latent)));
  if (use_similarity && similarity.defined())
    total = ops::add(total, ops::scale(similarity, T(lambda_similarity)));
  return total;
}

}  // namespace losses
}  // namespace brightvae
