// Acceptance gate: one self-contained check per release criterion, each
// printing a single PASS/FAIL line. The process exits nonzero if any fail.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <json.hpp>
#include <string>
#include <vector>

#include "brightvae/config_json.hpp"
#include "brightvae/image_io.hpp"
#include "brightvae/training.hpp"
#include "test_util.hpp"

using namespace brightvae;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

void require(bool ok, const std::string& what) {
  if (!ok) throw std::runtime_error(what);
}

BrightVAEConfig desk_model(int64_t channels = 8, int64_t codebook = 16, int64_t heads = 2) {
  BrightVAEConfig cfg;
  cfg.channels = channels;
  cfg.codebook_size = codebook;
  cfg.heads = heads;
  return cfg;
}

// --- 1. Quantizer exactness -------------------------------------------------
void criterion_quantizer_exactness() {
  const auto t0 = Clock::now();
  Rng rng(101);
  const int64_t n = 1000, k = 16, d = 8;
  Attenquant<double> q = Attenquant<double>::make(rng, k, d, 0.25, true);
  Tensor<double> rows = testutil::random_tensor({n, d}, rng, -1.0, 1.0);
  Tensor<double> map({1, d, 1, n});
  for (int64_t i = 0; i < n; ++i)
    for (int64_t c = 0; c < d; ++c) map[c * n + i] = rows[i * d + c];
  Tensor<double> wts = q.proj.weights(rows);
  QuantizeResult<double> res = q.quantize(Var<double>::constant(map));

  for (int64_t i = 0; i < n; ++i) {
    double best = std::numeric_limits<double>::infinity();
    int64_t best_j = 0;
    for (int64_t j = 0; j < k; ++j) {
      double dist = 0.0;
      for (int64_t c = 0; c < d; ++c) {
        const double diff = rows[i * d + c] - q.codebook.value()[j * d + c];
        dist += wts[i * d + c] * diff * diff;
      }
      if (dist < best) {
        best = dist;
        best_j = j;
      }
    }
    require(res.indices[i] == best_j,
            "index mismatch vs oracle at vector " + std::to_string(i));
    for (int64_t c = 0; c < d; ++c)
      require(res.quantized.value()[c * n + i] ==
                  q.codebook.value()[res.indices[i] * d + c],
              "quantized output is not a bit-exact codebook row");
  }
  require(seconds_since(t0) < 10.0, "exceeded the 10 s budget");
}

// --- 2. Attention normalization ---------------------------------------------
void criterion_attention_normalization() {
  Rng rng(102);
  const int64_t d = 8;
  AttentionProjection<double> proj = AttentionProjection<double>::make(rng, d);
  for (int i = 0; i < 10000; ++i) {
    Tensor<double> v = testutil::random_tensor({d}, rng, -3.0, 3.0);
    Tensor<double> w = attention_weights(v, proj);
    double sum = 0.0;
    for (int64_t c = 0; c < d; ++c) {
      require(w[c] >= 0.0, "negative attention weight");
      sum += w[c];
    }
    require(std::abs(sum - 1.0) <= 1e-6, "weights sum differs from 1 by more than 1e-6");
  }
}

// --- 3. Latent-loss ground truth --------------------------------------------
void criterion_latent_loss_values() {
  const double beta = 0.25, delta = 1e-3;
  Rng rng(103);
  Attenquant<double> q = Attenquant<double>::make(rng, 8, 4, beta, true);
  const int64_t n = 4, d = 4;
  Tensor<double> map({1, d, 1, n});
  for (int64_t i = 0; i < n; ++i)
    for (int64_t c = 0; c < d; ++c) map[c * n + i] = q.codebook.value()[(2 * i) * d + c];
  QuantizeResult<double> on = q.quantize(Var<double>::constant(map));
  require(std::abs(on.latent_loss.value().item()) < 1e-9,
          "on-codebook latent loss is not 0 within 1e-9");

  for (int64_t i = 0; i < n; ++i) map[0 * n + i] += delta;
  QuantizeResult<double> off = q.quantize(Var<double>::constant(map));
  for (int64_t i = 0; i < n; ++i)
    require(off.indices[i] == on.indices[i], "the delta offset changed an index");
  const double expected = (1.0 + beta) * delta * delta;
  require(std::abs(off.latent_loss.value().item() - expected) < 1e-9,
          "offset latent loss differs from (1+beta)*delta^2 by more than 1e-9");
}

// --- 4. Gradient fidelity ---------------------------------------------------
void criterion_gradient_fidelity() {
  const auto t0 = Clock::now();
  BrightVAEConfig cfg = desk_model(4, 8, 2);
  BrightVAE<double> model(cfg);
  Rng rng(104);
  Var<double> x = Var<double>::leaf(testutil::random_tensor({1, 3, 16, 16}, rng), true);
  Var<double> gt = Var<double>::constant(testutil::random_tensor({1, 3, 16, 16}, rng));

  ModelFreeze<double> freeze;
  auto build = [&] {
    ForwardResult<double> out = model.forward(x, &freeze);
    Var<double> rest = losses::rest_loss(out.enhanced, gt);
    Var<double> latent = losses::latent_loss_total(out.latent_loss_global,
                                                   out.latent_loss_local);
    Var<double> sim = losses::ssi_loss(out.enhanced, gt);
    return losses::total_loss(rest, latent, sim, cfg.lambda_rest, cfg.lambda_latent,
                              cfg.lambda_similarity, true);
  };

  // Sample 1% of every parameter tensor (at least one entry each).
  double worst = 0.0;
  ParamList<double> params = model.params();
  for (const auto& p : params) {
    const int64_t probes = std::max<int64_t>(1, p.var.numel() / 100);
    worst = std::max(worst, testutil::fd_max_rel_error(build, {p.var}, 1e-5, probes));
  }
  worst = std::max(worst, testutil::fd_max_rel_error(build, {x}, 1e-5, 8));
  require(worst < 1e-3,
          "max relative gradient error " + std::to_string(worst) + " >= 1e-3");
  require(seconds_since(t0) < 300.0, "exceeded the 5 min budget");
}

// --- 5. Loss unit suite -----------------------------------------------------
void criterion_loss_unit_suite() {
  auto close = [](double got, double want, const char* name) {
    require(std::abs(got - want) <= 1e-6,
            std::string(name) + " = " + std::to_string(got) + ", expected " +
                std::to_string(want));
  };
  auto cv = [](std::vector<int64_t> s, std::vector<double> v) {
    return Var<double>::constant(Tensor<double>(std::move(s), std::move(v)));
  };
  close(losses::jaccard_loss(cv({1, 1, 1, 2}, {1, 0}), cv({1, 1, 1, 2}, {1, 1}))
            .value().item(),
        0.5, "jaccard");
  close(losses::cosine_loss(cv({1, 1, 1, 2}, {1, 0}), cv({1, 1, 1, 2}, {1, 1}))
            .value().item(),
        1.0 - 1.0 / std::sqrt(2.0), "cosine");
  close(losses::kld_loss(Tensor<double>({4}, {0.1, 0.1, 0.9, 0.9}),
                         Tensor<double>({4}, {0.1, 0.2, 0.3, 0.4}), 2),
        std::log(2.0), "kld");
  {
    Rng rng(105);
    Tensor<double> base = testutil::random_tensor({1, 3, 4, 4}, rng, 0.1, 0.8);
    Tensor<double> shifted = base;
    for (int64_t i = 0; i < shifted.numel(); ++i) shifted[i] += 0.1;
    close(losses::color_consistency_loss(Var<double>::constant(shifted),
                                         Var<double>::constant(base))
              .value().item(),
          0.03, "color");
  }
  close(losses::tv_loss(cv({1, 1, 1, 2}, {0, 1})).value().item(), 1.0, "tv");
  close(losses::rest_loss(cv({1, 1, 2, 2}, {0, 1, 0, 1}), cv({1, 1, 2, 2}, {0, 0, 0, 0}))
            .value().item(),
        0.5, "rest");
}

// --- 6. Metric fidelity -----------------------------------------------------
void criterion_metric_fidelity() {
  // SSIM against the frozen external-oracle fixture.
  std::ifstream in(testutil::fixture_dir() / "ssim_expected.json");
  require(in.good(), "missing tests/fixtures/ssim_expected.json");
  nlohmann::json expected = nlohmann::json::parse(in);
  require(expected.size() == 10, "fixture must hold 10 pairs");
  for (const auto& entry : expected) {
    const std::string stem = entry.at("pair").get<std::string>();
    Tensor<double> a = read_png(testutil::fixture_dir() / (stem + "_a.png"));
    Tensor<double> b = read_png(testutil::fixture_dir() / (stem + "_b.png"));
    const double want = entry.at("ssim").get<double>();
    const double got = metrics::ssim(a, b);
    require(std::abs(got - want) <= 1e-4,
            "SSIM for " + stem + " differs from oracle by " + std::to_string(got - want));
  }

  // PSNR closed form: MSE 0.01 -> 20 dB.
  Tensor<double> p({1, 1, 2, 2}, {0.1, 0.2, 0.3, 0.4});
  Tensor<double> t({1, 1, 2, 2}, {0.2, 0.3, 0.4, 0.5});
  require(std::abs(metrics::psnr(p, t) - 20.0) < 1e-9, "PSNR closed form mismatch");
  require(metrics::psnr(p, p) == 100.0, "zero-MSE PSNR must cap at 100 dB");

  // Monotone degradation under growing noise.
  Rng rng(106);
  Tensor<double> clean = testutil::random_tensor({3, 32, 32}, rng, 0.2, 0.8);
  double prev = 1e9;
  for (double sigma : {0.01, 0.05, 0.1}) {
    Tensor<double> noisy = clean;
    Rng nrng(107);
    for (int64_t i = 0; i < noisy.numel(); ++i) noisy[i] += nrng.normal() * sigma;
    const double v = metrics::psnr(noisy, clean);
    require(v < prev, "PSNR did not degrade monotonically with noise");
    prev = v;
  }
}

// --- 7. Shape contract ------------------------------------------------------
void criterion_shape_contract() {
  BrightVAE<float> model(desk_model());
  Rng rng(108);
  NoGradGuard ng;
  for (int64_t side : {64, 512}) {
    const auto t0 = Clock::now();
    Tensor<double> img = testutil::random_tensor({1, 3, side, side}, rng);
    ForwardResult<float> out = model.forward(Var<float>::constant(img.cast<float>()));
    require(out.enhanced.value().shape() == std::vector<int64_t>{1, 3, side, side},
            "output size differs from input at " + std::to_string(side));
    require(out.indices_local.shape() == std::vector<int64_t>{1, side / 4, side / 4},
            "local index grid is not at 1/4 resolution");
    require(out.indices_global.shape() == std::vector<int64_t>{1, side / 8, side / 8},
            "global index grid is not at 1/8 resolution");
    if (side == 512)
      require(seconds_since(t0) < 60.0, "512x512 forward exceeded the 60 s budget");
  }
}

// --- 8. Toy training run ----------------------------------------------------
void criterion_toy_training() {
  const auto t0 = Clock::now();
  DatasetSplit train_data = make_synth_dataset(16, 64, 7);
  DatasetSplit held = make_synth_dataset(4, 64, 7001);

  BrightVAEConfig mcfg = desk_model(16, 32, 4);
  mcfg.seed = 7;
  TrainConfig tcfg;  // training defaults, shortened to the 200-epoch gate
  tcfg.epochs = 200;
  tcfg.batch_size = 5;
  tcfg.seed = 7;
  tcfg.extractor = "none";
  TrainResult res = train(mcfg, tcfg, train_data);
  require(res.history.size() == 200, "expected 200 history entries");
  require(res.history.back().total < 0.5 * res.history.front().total,
          "final-epoch loss did not halve the epoch-1 loss");

  double psnr_low = 0.0, psnr_enh = 0.0, ssim_low = 0.0, ssim_enh = 0.0;
  for (const auto& pair : held.pairs) {
    Tensor<double> enh = enhance_with_checkpoint(res.checkpoint, pair.low);
    psnr_low += metrics::psnr(pair.low, pair.gt);
    psnr_enh += metrics::psnr(enh, pair.gt);
    ssim_low += metrics::ssim(pair.low, pair.gt);
    ssim_enh += metrics::ssim(enh, pair.gt);
  }
  const double n = static_cast<double>(held.size());
  require(psnr_enh / n >= psnr_low / n + 2.0,
          "held-out PSNR gain " + std::to_string((psnr_enh - psnr_low) / n) + " dB < 2 dB");
  require(ssim_enh / n > ssim_low / n, "held-out SSIM did not improve");
  require(seconds_since(t0) < 1200.0, "exceeded the 20 min budget");
}

// --- 9. Ablation structure --------------------------------------------------
void criterion_ablation_structure() {
  DatasetSplit train_data = make_synth_dataset(4, 16, 301);
  DatasetSplit test_data = make_synth_dataset(2, 16, 302);
  BrightVAEConfig base = desk_model();
  TrainConfig tcfg;
  tcfg.epochs = 1;
  tcfg.batch_size = 2;
  tcfg.extractor = "random";
  tcfg.seed = 303;

  std::vector<AblationRow> comp = ablate_components(base, tcfg, train_data, test_data);
  require(comp.size() == 6, "component grid must have exactly 6 rows");
  for (size_t i = 0; i < comp.size(); ++i) {
    require(comp[i].label == std::to_string(i + 1), "bad component row label");
    require(comp[i].toggles.size() == 5, "component row must list 5 toggles");
    require(comp[i].psnr && std::isfinite(*comp[i].psnr) && std::isfinite(*comp[i].ssim),
            "non-finite metrics in component row " + comp[i].label);
    if (i > 0)
      require(comp[i].param_count >= comp[i - 1].param_count,
              "parameter counts are not nondecreasing across the grid");
  }

  std::vector<AblationRow> sweep = ablate_losses(base, tcfg, train_data, test_data);
  require(sweep.size() == 9, "loss sweep must have exactly 9 rows");
  const std::vector<std::string> labels = {"Rest & Latent",
                                           "Rest & Latent & Jaccard",
                                           "Rest & Latent & TV",
                                           "Rest & Latent & Cosine Similarity",
                                           "Rest & Latent & KLD",
                                           "Rest & Latent & GMSD",
                                           "Rest & Latent & Perceptual",
                                           "Rest & Latent & Color Consistency",
                                           "Rest & Latent & Structural Similarity"};
  for (size_t i = 0; i < sweep.size(); ++i) {
    require(sweep[i].label == labels[i], "bad loss row label: " + sweep[i].label);
    require(sweep[i].psnr && std::isfinite(*sweep[i].psnr),
            "non-finite metrics in loss row " + sweep[i].label);
  }
}

// --- 10. Schedule property --------------------------------------------------
void criterion_schedule_property() {
  TrainConfig cfg;
  cfg.warmup_epochs = 10;
  cfg.cycle_epochs = 20;
  cfg.lr_max = 1e-3;
  cfg.lr_min = 1e-5;
  require(cyclic_lr(0, cfg) == 0.0, "lr at step 0 is not 0");
  require(std::abs(cyclic_lr(10, cfg) - cfg.lr_max) < 1e-15,
          "lr at warm-up end is not lr_max");
  for (int64_t half : {20, 40, 60})
    require(std::abs(cyclic_lr(half, cfg) - cfg.lr_min) < 1e-15,
            "lr at a half-period is not lr_min");
  for (int64_t s = 10; s < 30; ++s) {
    require(cyclic_lr(s, cfg) == cyclic_lr(s + 20, cfg) &&
                cyclic_lr(s, cfg) == cyclic_lr(s + 40, cfg) &&
                cyclic_lr(s, cfg) == cyclic_lr(s + 60, cfg),
            "schedule is not exactly periodic over 3 periods");
  }
}

// --- 11. Reproducibility ----------------------------------------------------
void criterion_reproducibility() {
  auto pipeline = [] {
    DatasetSplit data = make_synth_dataset(6, 16, 401);
    DatasetSplit held = make_synth_dataset(2, 16, 402);
    BrightVAEConfig mcfg = desk_model();
    mcfg.seed = 5;
    TrainConfig tcfg;
    tcfg.epochs = 2;
    tcfg.batch_size = 3;
    tcfg.seed = 5;
    tcfg.extractor = "none";
    TrainResult res = train(mcfg, tcfg, data);
    return std::make_pair(res, evaluate(res.checkpoint, held, false));
  };
  auto [res_a, rep_a] = pipeline();
  auto [res_b, rep_b] = pipeline();
  require(res_a.history.size() == res_b.history.size(), "history sizes differ");
  for (size_t i = 0; i < res_a.history.size(); ++i)
    require(res_a.history[i].total == res_b.history[i].total &&
                res_a.history[i].rest == res_b.history[i].rest,
            "identical seeds produced different loss histories");
  require(rep_a.count() == rep_b.count(), "report sizes differ");
  for (size_t i = 0; i < rep_a.count(); ++i)
    require(rep_a.per_image[i].psnr == rep_b.per_image[i].psnr &&
                rep_a.per_image[i].ssim == rep_b.per_image[i].ssim,
            "identical seeds produced different metric reports");

  // Checkpoint round trip must preserve evaluation bit-exactly.
  const std::filesystem::path path =
      std::filesystem::temp_directory_path() / "brightvae_accept.ckpt";
  save_checkpoint(path, res_a.checkpoint);
  Checkpoint loaded = load_checkpoint(path);
  std::filesystem::remove(path);
  DatasetSplit held = make_synth_dataset(2, 16, 402);
  metrics::MetricReport rep_c = evaluate(loaded, held, false);
  for (size_t i = 0; i < rep_a.count(); ++i)
    require(rep_a.per_image[i].psnr == rep_c.per_image[i].psnr &&
                rep_a.per_image[i].ssim == rep_c.per_image[i].ssim,
            "checkpoint round trip changed evaluation output");
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    std::function<void()> run;
  };
  const std::vector<Criterion> criteria = {
      {"1. quantizer exactness vs brute-force oracle", criterion_quantizer_exactness},
      {"2. attention weights form a distribution", criterion_attention_normalization},
      {"3. latent loss analytic ground truth", criterion_latent_loss_values},
      {"4. end-to-end gradient fidelity", criterion_gradient_fidelity},
      {"5. loss unit suite hand values", criterion_loss_unit_suite},
      {"6. metric fidelity vs external oracle", criterion_metric_fidelity},
      {"7. shape contract at 64 and 512", criterion_shape_contract},
      {"8. toy training improves held-out quality", criterion_toy_training},
      {"9. ablation tables structure", criterion_ablation_structure},
      {"10. cyclic schedule properties", criterion_schedule_property},
      {"11. seeded reproducibility and checkpoint round trip", criterion_reproducibility},
  };

  int failures = 0;
  for (const auto& c : criteria) {
    try {
      c.run();
      std::printf("PASS %s\n", c.name);
    } catch (const std::exception& e) {
      ++failures;
      std::printf("FAIL %s: %s\n", c.name, e.what());
    }
    std::fflush(stdout);
  }
  if (failures) std::printf("%d criterion(s) failed\n", failures);
  return failures == 0 ? 0 : 1;
}
