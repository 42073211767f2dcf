#pragma once

#include <optional>
#include <string>
#include <vector>

#include "brightvae/losses.hpp"

namespace brightvae {
namespace metrics {

inline constexpr double kPsnrCap = 100.0;  // sentinel for zero MSE

/// 10*log10(max^2 / MSE), capped at 100 dB when MSE vanishes.
template <typename T>
double psnr(const Tensor<T>& pred, const Tensor<T>& target, double max_val = 1.0) {
  check_same_shape(pred, target, "psnr");
  double mse = 0.0;
  for (int64_t i = 0; i < pred.numel(); ++i) {
    const double d = static_cast<double>(pred[i]) - static_cast<double>(target[i]);
    mse += d * d;
  }
  mse /= static_cast<double>(pred.numel());
  if (mse <= 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(max_val * max_val / mse));
}

/// Mean SSIM (11x11 Gaussian window, sigma 1.5, K1=0.01, K2=0.03, L=1).
template <typename T>
double ssim(const Tensor<T>& pred, const Tensor<T>& target) {
  NoGradGuard ng;
  Tensor<T> p = pred.rank() == 3 ? pred.reshaped({1, pred.dim(0), pred.dim(1), pred.dim(2)})
                                 : pred;
  Tensor<T> t = target.rank() == 3
                    ? target.reshaped({1, target.dim(0), target.dim(1), target.dim(2)})
                    : target;
  return static_cast<double>(
      losses::ssim_mean(Var<T>::constant(p), Var<T>::constant(t)).value().item());
}

/// LPIPS-style distance: per stage, channel-unit-normalized features, squared
/// difference, uniform channel weights, spatial average; summed over stages.
template <typename T>
double lpips(const Tensor<T>& pred, const Tensor<T>& target,
             const losses::RandomFeatureExtractor<T>& extractor) {
  NoGradGuard ng;
  auto as_batch = [](const Tensor<T>& x) {
    return x.rank() == 3 ? x.reshaped({1, x.dim(0), x.dim(1), x.dim(2)}) : x;
  };
  std::vector<Var<T>> fp = extractor.features(Var<T>::constant(as_batch(pred)));
  std::vector<Var<T>> ft = extractor.features(Var<T>::constant(as_batch(target)));
  double total = 0.0;
  for (size_t s = 0; s < fp.size(); ++s) {
    const Tensor<T>& a = fp[s].value();
    const Tensor<T>& b = ft[s].value();
    const int64_t bn = a.dim(0), c = a.dim(1), hw = a.dim(2) * a.dim(3);
    double stage = 0.0;
    for (int64_t n = 0; n < bn; ++n)
      for (int64_t i = 0; i < hw; ++i) {
        // Unit-normalize both feature vectors along channels.
        double na = 0.0, nb = 0.0;
        for (int64_t ch = 0; ch < c; ++ch) {
          const double va = a[(n * c + ch) * hw + i];
          const double vb = b[(n * c + ch) * hw + i];
          na += va * va;
          nb += vb * vb;
        }
        na = std::sqrt(na) + losses::kEps;
        nb = std::sqrt(nb) + losses::kEps;
        double d2 = 0.0;
        for (int64_t ch = 0; ch < c; ++ch) {
          const double d = a[(n * c + ch) * hw + i] / na - b[(n * c + ch) * hw + i] / nb;
          d2 += d * d;
        }
        stage += d2 / static_cast<double>(c);
      }
    total += stage / static_cast<double>(bn * hw);
  }
  return total;
}

struct MetricRow {
  std::string id;
  double psnr = 0.0;
  double ssim = 0.0;
  std::optional<double> lpips;  // absent when no extractor is configured
};

struct MetricReport {
  std::vector<MetricRow> per_image;

  double mean_psnr() const {
    double s = 0.0;
    for (const auto& r : per_image) s += r.psnr;
    return per_image.empty() ? 0.0 : s / static_cast<double>(per_image.size());
  }
  double mean_ssim() const {
    double s = 0.0;
    for (const auto& r : per_image) s += r.ssim;
    return per_image.empty() ? 0.0 : s / static_cast<double>(per_image.size());
  }
  std::optional<double> mean_lpips() const {
    double s = 0.0;
    int64_t n = 0;
    for (const auto& r : per_image) {
      if (!r.lpips) return std::nullopt;
      s += *r.lpips;
      ++n;
    }
    if (n == 0) return std::nullopt;
    return s / static_cast<double>(n);
  }
  size_t count() const { return per_image.size(); }
};

/// CSV with columns id, psnr, ssim, lpips; missing LPIPS renders as "-".
std::string to_csv(const MetricReport& report);
/// JSON aggregate block (means + count).
std::string to_json(const MetricReport& report);

}  // namespace metrics
}  // namespace brightvae
