#pragma once

#include <optional>

#include "brightvae/checkpoint.hpp"
#include "brightvae/data.hpp"
#include "brightvae/metrics.hpp"
#include "brightvae/model.hpp"

namespace brightvae {

struct TrainConfig {
  int64_t epochs = 1000;
  int64_t batch_size = 5;
  double lr_max = 3e-4;
  double lr_min = 3e-5;
  int64_t warmup_epochs = 5;
  int64_t cycle_epochs = 50;
  uint64_t seed = 0;
  int64_t checkpoint_every = 0;  // 0: final checkpoint only
  int64_t eval_every = 0;        // 0: never during training
  double grad_clip = 0.0;        // 0: off
  std::string precision = "float32";  // or "float64"
  std::string extractor = "random";   // feature extractor for perceptual/LPIPS, or "none"
  uint64_t extractor_seed = 1234;
  int kld_bins = 64;             // soft-binning resolution on the training path
  std::string device = "cpu";

  void validate() const {
    if (epochs < 1) throw std::invalid_argument("train config: epochs must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("train config: batch_size must be >= 1");
    if (!(lr_min > 0 && lr_min <= lr_max))
      throw std::invalid_argument("train config: need 0 < lr_min <= lr_max");
    if (warmup_epochs < 0 || cycle_epochs < 1)
      throw std::invalid_argument("train config: bad schedule parameters");
    if (precision != "float32" && precision != "float64")
      throw std::invalid_argument("train config: precision must be float32 or float64");
    if (extractor != "random" && extractor != "none")
      throw std::invalid_argument("train config: extractor must be random or none");
    if (device != "cpu") throw std::invalid_argument("train config: only cpu is supported");
  }
};

/// Linear warm-up 0 -> lr_max over warmup_epochs, then a triangle wave
/// between lr_max and lr_min with period cycle_epochs.
double cyclic_lr(int64_t step, const TrainConfig& cfg);

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<LossBreakdown> history;  // one mean breakdown per epoch
};

/// Full training loop (seeded shuffling, weighted three-term loss, ADAM with the cyclic
/// schedule, straight-through gradients at both quantizers). Deterministic
/// given seed and platform. `out_dir` empty: no checkpoint files are written.
TrainResult train(const BrightVAEConfig& model_cfg, const TrainConfig& train_cfg,
                  const DatasetSplit& data, const std::filesystem::path& out_dir = {},
                  const Checkpoint* resume = nullptr);

/// Enhances every low image and scores it against the ground truth.
metrics::MetricReport evaluate(const Checkpoint& ckpt, const DatasetSplit& data,
                               bool with_lpips = true);

/// Per-image enhancement via a checkpointed model (CLI + report plumbing).
Tensor<double> enhance_with_checkpoint(const Checkpoint& ckpt, const Tensor<double>& low);

struct AblationRow {
  std::string label;                // "1".."6" or a Table-3 loss name
  std::vector<std::string> toggles;  // component grid only
  std::optional<double> psnr, ssim, lpips;
  int64_t param_count = 0;
};

/// Table-2 component grid: trains the six toggle configurations and reports
/// metrics on `test` (falls back to `train` when the test split is empty).
std::vector<AblationRow> ablate_components(const BrightVAEConfig& base,
                                           const TrainConfig& train_cfg,
                                           const DatasetSplit& train,
                                           const DatasetSplit& test);

/// Table-3 loss sweep: nine rows (Rest & Latent plus the eight candidates).
std::vector<AblationRow> ablate_losses(const BrightVAEConfig& base,
                                       const TrainConfig& train_cfg,
                                       const DatasetSplit& train, const DatasetSplit& test);

std::string components_csv(const std::vector<AblationRow>& rows);
std::string losses_csv(const std::vector<AblationRow>& rows);

}  // namespace brightvae
