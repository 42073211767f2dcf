#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <unistd.h>

#include <filesystem>

#include "brightvae/training.hpp"
#include "test_util.hpp"

using namespace brightvae;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("brightvae_train_" + std::to_string(::getpid()) + "_" +
            std::to_string(reinterpret_cast<uintptr_t>(this)));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

BrightVAEConfig tiny_model() {
  BrightVAEConfig cfg;
  cfg.channels = 8;
  cfg.codebook_size = 8;
  cfg.heads = 2;
  cfg.seed = 3;
  return cfg;
}

TrainConfig tiny_train(int64_t epochs) {
  TrainConfig cfg;
  cfg.epochs = epochs;
  cfg.batch_size = 2;
  cfg.lr_max = 1e-3;
  cfg.lr_min = 1e-4;
  cfg.warmup_epochs = 2;
  cfg.cycle_epochs = 4;
  cfg.seed = 11;
  cfg.extractor = "none";
  return cfg;
}

bool same_history(const std::vector<LossBreakdown>& a, const std::vector<LossBreakdown>& b) {
  if (a.size() != b.size()) return false;
  for (size_t i = 0; i < a.size(); ++i)
    if (a[i].rest != b[i].rest || a[i].latent != b[i].latent ||
        a[i].similarity != b[i].similarity || a[i].total != b[i].total)
      return false;
  return true;
}

}  // namespace

TEST_CASE("cyclic schedule ramps, peaks, dips, and repeats") {
  TrainConfig cfg = tiny_train(1);
  cfg.warmup_epochs = 10;
  cfg.cycle_epochs = 20;
  cfg.lr_max = 1e-3;
  cfg.lr_min = 1e-5;

  CHECK(cyclic_lr(0, cfg) == 0.0);
  // Linear ramp through warm-up, hitting lr_max exactly at its end.
  CHECK(cyclic_lr(5, cfg) == doctest::Approx(5e-4));
  CHECK(cyclic_lr(10, cfg) == doctest::Approx(cfg.lr_max));
  // Triangle trough at every half period.
  CHECK(cyclic_lr(20, cfg) == doctest::Approx(cfg.lr_min));
  CHECK(cyclic_lr(40, cfg) == doctest::Approx(cfg.lr_min));
  CHECK(cyclic_lr(60, cfg) == doctest::Approx(cfg.lr_min));
  // Exact periodicity across three periods past warm-up.
  for (int64_t s = 10; s < 30; ++s) {
    CHECK(cyclic_lr(s, cfg) == cyclic_lr(s + 20, cfg));
    CHECK(cyclic_lr(s, cfg) == cyclic_lr(s + 40, cfg));
    CHECK(cyclic_lr(s, cfg) >= cfg.lr_min);
    CHECK(cyclic_lr(s, cfg) <= cfg.lr_max);
  }
}

TEST_CASE("training past warm-up moves parameters and stays finite") {
  DatasetSplit data = make_synth_dataset(4, 16, 5);
  BrightVAEConfig mcfg = tiny_model();
  // Two epochs: the warm-up learning rate is exactly 0 during the first one.
  TrainResult res = train(mcfg, tiny_train(2), data);
  REQUIRE(res.history.size() == 2);
  CHECK(std::isfinite(res.history[0].total));
  CHECK(std::isfinite(res.history[1].total));
  CHECK(res.checkpoint.epoch == 2);

  // Parameters in the checkpoint differ from a freshly seeded model.
  BrightVAE<float> fresh(mcfg);
  ParamList<float> params = fresh.params();
  REQUIRE(params.size() == res.checkpoint.params.size());
  bool moved = false;
  for (size_t i = 0; i < params.size(); ++i) {
    Tensor<float> trained = res.checkpoint.params[i].to<float>();
    for (int64_t j = 0; j < trained.numel() && !moved; ++j)
      moved = trained[j] != params[i].var.value()[j];
  }
  CHECK(moved);
}

TEST_CASE("identical seeds give identical histories and evaluations") {
  DatasetSplit data = make_synth_dataset(4, 16, 6);
  DatasetSplit held = make_synth_dataset(2, 16, 60);
  TrainResult a = train(tiny_model(), tiny_train(2), data);
  TrainResult b = train(tiny_model(), tiny_train(2), data);
  CHECK(same_history(a.history, b.history));

  metrics::MetricReport ra = evaluate(a.checkpoint, held, false);
  metrics::MetricReport rb = evaluate(b.checkpoint, held, false);
  REQUIRE(ra.count() == rb.count());
  for (size_t i = 0; i < ra.count(); ++i) {
    CHECK(ra.per_image[i].psnr == rb.per_image[i].psnr);
    CHECK(ra.per_image[i].ssim == rb.per_image[i].ssim);
  }
}

TEST_CASE("resuming from a checkpoint replays the continuous run") {
  DatasetSplit data = make_synth_dataset(4, 16, 7);
  TrainResult full = train(tiny_model(), tiny_train(4), data);

  TrainResult half = train(tiny_model(), tiny_train(2), data);
  TrainConfig rest_cfg = tiny_train(4);
  TrainResult resumed = train(tiny_model(), rest_cfg, data, {}, &half.checkpoint);
  // The resumed run reports only its own epochs, and they must match the tail
  // of the uninterrupted run exactly.
  REQUIRE(resumed.history.size() == 2);
  CHECK(same_history({full.history.begin() + 2, full.history.end()}, resumed.history));

  REQUIRE(full.checkpoint.params.size() == resumed.checkpoint.params.size());
  for (size_t i = 0; i < full.checkpoint.params.size(); ++i)
    CHECK(full.checkpoint.params[i].bytes == resumed.checkpoint.params[i].bytes);
}

TEST_CASE("checkpoint files round trip bit-exactly") {
  TempDir tmp;
  DatasetSplit data = make_synth_dataset(3, 16, 8);
  TrainConfig tcfg = tiny_train(2);
  tcfg.checkpoint_every = 1;
  TrainResult res = train(tiny_model(), tcfg, data, tmp.path);
  CHECK(fs::exists(tmp.path / "epoch_00001.ckpt"));
  REQUIRE(fs::exists(tmp.path / "final.ckpt"));

  Checkpoint loaded = load_checkpoint(tmp.path / "final.ckpt");
  CHECK(loaded.epoch == res.checkpoint.epoch);
  CHECK(loaded.precision == res.checkpoint.precision);
  REQUIRE(loaded.params.size() == res.checkpoint.params.size());
  for (size_t i = 0; i < loaded.params.size(); ++i) {
    CHECK(loaded.params[i].name == res.checkpoint.params[i].name);
    CHECK(loaded.params[i].bytes == res.checkpoint.params[i].bytes);
  }

  metrics::MetricReport r1 = evaluate(res.checkpoint, data, false);
  metrics::MetricReport r2 = evaluate(loaded, data, false);
  for (size_t i = 0; i < r1.count(); ++i) {
    CHECK(r1.per_image[i].psnr == r2.per_image[i].psnr);
    CHECK(r1.per_image[i].ssim == r2.per_image[i].ssim);
  }
}

TEST_CASE("enhance through a checkpoint matches the in-memory model") {
  DatasetSplit data = make_synth_dataset(2, 16, 9);
  TrainResult res = train(tiny_model(), tiny_train(1), data);
  Tensor<double> out = enhance_with_checkpoint(res.checkpoint, data.pairs[0].low);
  CHECK(out.shape() == data.pairs[0].low.shape());
  for (int64_t i = 0; i < out.numel(); ++i) {
    CHECK(out[i] >= 0.0);
    CHECK(out[i] <= 1.0);
  }
}

TEST_CASE("component ablation grid has six cumulative rows") {
  DatasetSplit train_data = make_synth_dataset(3, 16, 10);
  DatasetSplit test_data = make_synth_dataset(2, 16, 11);
  std::vector<AblationRow> rows =
      ablate_components(tiny_model(), tiny_train(1), train_data, test_data);
  REQUIRE(rows.size() == 6);
  for (size_t i = 0; i < rows.size(); ++i) {
    CHECK(rows[i].label == std::to_string(i + 1));
    REQUIRE(rows[i].toggles.size() == 5);
    REQUIRE(rows[i].psnr.has_value());
    CHECK(std::isfinite(*rows[i].psnr));
    CHECK(std::isfinite(*rows[i].ssim));
    if (i > 0) CHECK(rows[i].param_count >= rows[i - 1].param_count);
  }
  for (const std::string& t : rows[0].toggles) CHECK(t == "no");
  for (const std::string& t : rows[5].toggles) CHECK(t == "yes");

  const std::string csv = components_csv(rows);
  CHECK(csv.rfind("Configuration,Two Receptive Fields,SSI Loss,Skip Connection,"
                  "Attencoder Module,Attenquant Module,PSNR,SSIM,LPIPS\n",
                  0) == 0);
}

TEST_CASE("loss ablation sweep has the nine labeled rows") {
  DatasetSplit train_data = make_synth_dataset(3, 16, 12);
  DatasetSplit test_data = make_synth_dataset(2, 16, 13);
  std::vector<AblationRow> rows =
      ablate_losses(tiny_model(), tiny_train(1), train_data, test_data);
  REQUIRE(rows.size() == 9);
  const std::vector<std::string> labels = {"Rest & Latent",
                                           "Rest & Latent & Jaccard",
                                           "Rest & Latent & TV",
                                           "Rest & Latent & Cosine Similarity",
                                           "Rest & Latent & KLD",
                                           "Rest & Latent & GMSD",
                                           "Rest & Latent & Perceptual",
                                           "Rest & Latent & Color Consistency",
                                           "Rest & Latent & Structural Similarity"};
  for (size_t i = 0; i < rows.size(); ++i) {
    CHECK(rows[i].label == labels[i]);
    // With the extractor disabled the perceptual row reports no metrics.
    if (labels[i] == "Rest & Latent & Perceptual") {
      CHECK_FALSE(rows[i].psnr.has_value());
    } else {
      REQUIRE(rows[i].psnr.has_value());
      CHECK(std::isfinite(*rows[i].psnr));
    }
  }
  const std::string csv = losses_csv(rows);
  CHECK(csv.rfind("Loss Function,PSNR,SSIM,LPIPS\n", 0) == 0);
  CHECK(csv.find("Rest & Latent & Perceptual,-,-,-") != std::string::npos);
}

TEST_CASE("train rejects empty datasets and mismatched precisions") {
  DatasetSplit empty;
  CHECK_THROWS_AS(train(tiny_model(), tiny_train(1), empty), std::invalid_argument);

  DatasetSplit data = make_synth_dataset(2, 16, 14);
  TrainResult res = train(tiny_model(), tiny_train(1), data);
  TrainConfig other = tiny_train(2);
  other.precision = "float64";
  CHECK_THROWS_AS(train(tiny_model(), other, data, {}, &res.checkpoint),
                  std::runtime_error);
}
