#include "brightvae/training.hpp"

#include <cstdio>
#include <unordered_map>

#include "brightvae/config_json.hpp"

namespace brightvae {

double cyclic_lr(int64_t step, const TrainConfig& cfg) {
  if (step < 0) throw std::invalid_argument("cyclic_lr: step must be nonnegative");
  if (step < cfg.warmup_epochs)
    return cfg.lr_max * static_cast<double>(step) / static_cast<double>(cfg.warmup_epochs);
  const int64_t t = (step - cfg.warmup_epochs) % cfg.cycle_epochs;
  const double phase = static_cast<double>(t) / static_cast<double>(cfg.cycle_epochs);
  const double tri = 1.0 - std::abs(2.0 * phase - 1.0);
  return cfg.lr_max - (cfg.lr_max - cfg.lr_min) * tri;
}

namespace {

template <typename T>
void load_tensor_list(ParamList<T>& params, const std::vector<CheckpointTensor>& saved,
                      const char* what,
                      std::vector<Tensor<T>>* into = nullptr) {
  std::unordered_map<std::string, const CheckpointTensor*> by_name;
  for (const auto& t : saved) by_name[t.name] = &t;
  if (by_name.size() != params.size())
    throw std::runtime_error(std::string("checkpoint ") + what + " holds " +
                             std::to_string(by_name.size()) + " tensors, model expects " +
                             std::to_string(params.size()));
  for (size_t i = 0; i < params.size(); ++i) {
    auto it = by_name.find(params[i].name);
    if (it == by_name.end())
      throw std::runtime_error(std::string("checkpoint ") + what + " is missing tensor " +
                               params[i].name);
    Tensor<T> t = it->second->template to<T>();
    if (t.shape() != params[i].var.value().shape())
      throw std::runtime_error("checkpoint tensor " + params[i].name + " has shape " +
                               t.shape_str() + ", model expects " +
                               params[i].var.value().shape_str());
    if (into)
      (*into)[i] = std::move(t);
    else
      params[i].var.value() = std::move(t);
  }
}

template <typename T>
std::vector<CheckpointTensor> dump_tensor_list(const ParamList<T>& params,
                                               const std::vector<Tensor<T>>* state = nullptr) {
  std::vector<CheckpointTensor> out;
  out.reserve(params.size());
  for (size_t i = 0; i < params.size(); ++i)
    out.push_back(CheckpointTensor::from(params[i].name,
                                         state ? (*state)[i] : params[i].var.value()));
  return out;
}

template <typename T>
Tensor<T> make_batch(const DatasetSplit& data, const std::vector<size_t>& order, size_t begin,
                     size_t end, bool low) {
  const Tensor<double>& first = low ? data.pairs[order[begin]].low : data.pairs[order[begin]].gt;
  const int64_t h = first.dim(1), w = first.dim(2);
  Tensor<T> batch({static_cast<int64_t>(end - begin), 3, h, w});
  for (size_t i = begin; i < end; ++i) {
    const Tensor<double>& img = low ? data.pairs[order[i]].low : data.pairs[order[i]].gt;
    if (img.dim(1) != h || img.dim(2) != w)
      throw std::runtime_error("batch mixes image sizes: " + img.shape_str() + " vs " +
                               first.shape_str());
    T* dst = batch.data() + static_cast<int64_t>(i - begin) * 3 * h * w;
    for (int64_t j = 0; j < img.numel(); ++j) dst[j] = static_cast<T>(img[j]);
  }
  return batch;
}

void check_finite(double v, const char* term, int64_t epoch) {
  if (!std::isfinite(v))
    throw std::runtime_error(std::string("non-finite ") + term + " loss at epoch " +
                             std::to_string(epoch) + "; aborting");
}

template <typename T>
struct Adam {
  std::vector<Tensor<T>> m, v;
  int64_t step = 0;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

  explicit Adam(const ParamList<T>& params) {
    for (const auto& p : params) {
      m.push_back(Tensor<T>::zeros(p.var.value().shape()));
      v.push_back(Tensor<T>::zeros(p.var.value().shape()));
    }
  }

  void update(ParamList<T>& params, double lr, double grad_clip) {
    ++step;
    double clip_scale = 1.0;
    if (grad_clip > 0.0) {
      double sq = 0.0;
      for (auto& p : params) {
        const Tensor<T>& g = p.var.grad();
        for (int64_t i = 0; i < g.numel(); ++i)
          sq += static_cast<double>(g[i]) * static_cast<double>(g[i]);
      }
      const double norm = std::sqrt(sq);
      if (norm > grad_clip) clip_scale = grad_clip / norm;
    }
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));
    for (size_t i = 0; i < params.size(); ++i) {
      Tensor<T>& value = params[i].var.value();
      const Tensor<T>& grad = params[i].var.grad();
      for (int64_t j = 0; j < value.numel(); ++j) {
        const double g = static_cast<double>(grad[j]) * clip_scale;
        const double mj = beta1 * m[i][j] + (1.0 - beta1) * g;
        const double vj = beta2 * v[i][j] + (1.0 - beta2) * g * g;
        m[i][j] = static_cast<T>(mj);
        v[i][j] = static_cast<T>(vj);
        value[j] = static_cast<T>(value[j] -
                                  lr * (mj / bc1) / (std::sqrt(vj / bc2) + eps));
      }
    }
  }
};

template <typename T>
Checkpoint snapshot(const BrightVAEConfig& model_cfg, const TrainConfig& train_cfg,
                    const ParamList<T>& params, const Adam<T>& adam, int64_t epoch) {
  Checkpoint ckpt;
  ckpt.model_config_json = to_json_string(model_cfg);
  ckpt.train_config_json = to_json_string(train_cfg);
  ckpt.epoch = epoch;
  ckpt.optimizer_step = adam.step;
  ckpt.rng_epoch_cursor = static_cast<uint64_t>(epoch);
  ckpt.precision = sizeof(T) == 4 ? "f32" : "f64";
  ckpt.params = dump_tensor_list(params);
  ckpt.adam_m = dump_tensor_list(params, &adam.m);
  ckpt.adam_v = dump_tensor_list(params, &adam.v);
  return ckpt;
}

template <typename T>
TrainResult train_impl(const BrightVAEConfig& model_cfg, const TrainConfig& train_cfg,
                       const DatasetSplit& data, const std::filesystem::path& out_dir,
                       const Checkpoint* resume) {
  BrightVAE<T> model(model_cfg);
  ParamList<T> params = model.params();
  Adam<T> adam(params);

  int64_t start_epoch = 0;
  if (resume) {
    const std::string want = sizeof(T) == 4 ? "f32" : "f64";
    if (resume->precision != want)
      throw std::runtime_error("resume checkpoint precision " + resume->precision +
                               " does not match configured " + train_cfg.precision);
    load_tensor_list(params, resume->params, "params");
    load_tensor_list(params, resume->adam_m, "adam_m", &adam.m);
    load_tensor_list(params, resume->adam_v, "adam_v", &adam.v);
    adam.step = resume->optimizer_step;
    start_epoch = resume->epoch;
    if (start_epoch >= train_cfg.epochs)
      throw std::runtime_error("resume checkpoint is already at epoch " +
                               std::to_string(start_epoch));
  }

  losses::RandomFeatureExtractor<T> extractor;
  const bool have_extractor = train_cfg.extractor == "random";
  if (have_extractor)
    extractor = losses::RandomFeatureExtractor<T>::make(train_cfg.extractor_seed);
  const bool want_similarity =
      model_cfg.use_similarity_loss && model_cfg.similarity_loss_kind != SimilarityKind::kNone;

  if (!out_dir.empty()) std::filesystem::create_directories(out_dir);

  TrainResult result;
  std::vector<size_t> order(data.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int64_t epoch = start_epoch; epoch < train_cfg.epochs; ++epoch) {
    const double lr = cyclic_lr(epoch, train_cfg);

    // Seeded per-epoch shuffle of the identity order: the permutation depends
    // on the epoch index alone, so resuming at epoch k replays the same order
    // an uninterrupted run would have used.
    {
      for (size_t i = 0; i < order.size(); ++i) order[i] = i;
      Rng rng = Rng::derive(train_cfg.seed, static_cast<uint64_t>(epoch));
      for (size_t i = order.size(); i > 1; --i) {
        const size_t j = static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(i) - 1));
        std::swap(order[i - 1], order[j]);
      }
    }

    LossBreakdown epoch_mean;
    epoch_mean.kind = want_similarity ? model_cfg.similarity_loss_kind : SimilarityKind::kNone;
    int64_t seen = 0;

    for (size_t begin = 0; begin < order.size();
         begin += static_cast<size_t>(train_cfg.batch_size)) {
      const size_t end =
          std::min(order.size(), begin + static_cast<size_t>(train_cfg.batch_size));
      Var<T> low = Var<T>::constant(make_batch<T>(data, order, begin, end, true));
      Var<T> gt = Var<T>::constant(make_batch<T>(data, order, begin, end, false));

      ForwardResult<T> fwd = model.forward(low);
      Var<T> rest = losses::rest_loss(fwd.enhanced, gt);
      Var<T> latent = losses::latent_loss_total(fwd.latent_loss_global, fwd.latent_loss_local);
      Var<T> sim;
      if (want_similarity)
        sim = losses::similarity_loss(model_cfg.similarity_loss_kind, fwd.enhanced, gt,
                                      have_extractor ? &extractor : nullptr,
                                      train_cfg.kld_bins);
      Var<T> total =
          losses::total_loss(rest, latent, sim, model_cfg.lambda_rest, model_cfg.lambda_latent,
                             model_cfg.lambda_similarity, want_similarity);

      const double rest_v = static_cast<double>(rest.value().item());
      const double latent_v = static_cast<double>(latent.value().item());
      const double sim_v = sim.defined() ? static_cast<double>(sim.value().item()) : 0.0;
      const double total_v = static_cast<double>(total.value().item());
      check_finite(rest_v, "rest", epoch);
      check_finite(latent_v, "latent", epoch);
      check_finite(sim_v, "similarity", epoch);
      check_finite(total_v, "total", epoch);

      for (auto& p : params) {
        p.var.grad();  // ensure allocated so Adam always sees a gradient
        p.var.zero_grad();
      }
      backward(total);
      adam.update(params, lr, train_cfg.grad_clip);

      const double n = static_cast<double>(end - begin);
      epoch_mean.rest += rest_v * n;
      epoch_mean.latent += latent_v * n;
      epoch_mean.similarity += sim_v * n;
      epoch_mean.total += total_v * n;
      seen += static_cast<int64_t>(end - begin);
    }

    epoch_mean.rest /= static_cast<double>(seen);
    epoch_mean.latent /= static_cast<double>(seen);
    epoch_mean.similarity /= static_cast<double>(seen);
    epoch_mean.total /= static_cast<double>(seen);
    result.history.push_back(epoch_mean);

    const int64_t done = epoch + 1;
    if (!out_dir.empty() && train_cfg.checkpoint_every > 0 &&
        done % train_cfg.checkpoint_every == 0 && done < train_cfg.epochs) {
      char name[32];
      std::snprintf(name, sizeof(name), "epoch_%05lld.ckpt", static_cast<long long>(done));
      save_checkpoint(out_dir / name, snapshot(model_cfg, train_cfg, params, adam, done));
    }
  }

  result.checkpoint = snapshot(model_cfg, train_cfg, params, adam, train_cfg.epochs);
  if (!out_dir.empty()) save_checkpoint(out_dir / "final.ckpt", result.checkpoint);
  return result;
}

/// Rebuilds the model a checkpoint describes and installs its parameters.
template <typename T>
BrightVAE<T> model_from_checkpoint(const Checkpoint& ckpt) {
  BrightVAE<T> model(model_config_from_json(ckpt.model_config_json));
  ParamList<T> params = model.params();
  load_tensor_list(params, ckpt.params, "params");
  return model;
}

template <typename T>
metrics::MetricReport evaluate_impl(const Checkpoint& ckpt, const DatasetSplit& data,
                                    bool with_lpips) {
  BrightVAE<T> model = model_from_checkpoint<T>(ckpt);
  TrainConfig train_cfg;
  if (!ckpt.train_config_json.empty())
    train_cfg = train_config_from_json(ckpt.train_config_json);
  const bool lpips_ok = with_lpips && train_cfg.extractor == "random";
  losses::RandomFeatureExtractor<T> extractor;
  if (lpips_ok)
    extractor = losses::RandomFeatureExtractor<T>::make(train_cfg.extractor_seed);

  metrics::MetricReport report;
  for (const auto& pair : data.pairs) {
    Tensor<T> low = pair.low.template cast<T>();
    Tensor<T> gt = pair.gt.template cast<T>();
    Tensor<T> enhanced = model.enhance(low);
    metrics::MetricRow row;
    row.id = pair.id;
    row.psnr = metrics::psnr(enhanced.template cast<double>(), pair.gt);
    row.ssim = metrics::ssim(enhanced, gt);
    if (lpips_ok) row.lpips = metrics::lpips(enhanced, gt, extractor);
    report.per_image.push_back(std::move(row));
  }
  return report;
}

bool checkpoint_is_f32(const Checkpoint& ckpt) {
  if (ckpt.precision == "f32") return true;
  if (ckpt.precision == "f64") return false;
  throw std::runtime_error("checkpoint has unknown precision tag: " + ckpt.precision);
}

}  // namespace

TrainResult train(const BrightVAEConfig& model_cfg, const TrainConfig& train_cfg,
                  const DatasetSplit& data, const std::filesystem::path& out_dir,
                  const Checkpoint* resume) {
  model_cfg.validate();
  train_cfg.validate();
  if (data.empty()) throw std::invalid_argument("train: dataset is empty");
  if (train_cfg.precision == "float64")
    return train_impl<double>(model_cfg, train_cfg, data, out_dir, resume);
  return train_impl<float>(model_cfg, train_cfg, data, out_dir, resume);
}

metrics::MetricReport evaluate(const Checkpoint& ckpt, const DatasetSplit& data,
                               bool with_lpips) {
  if (data.empty()) throw std::invalid_argument("evaluate: dataset is empty");
  return checkpoint_is_f32(ckpt) ? evaluate_impl<float>(ckpt, data, with_lpips)
                                 : evaluate_impl<double>(ckpt, data, with_lpips);
}

Tensor<double> enhance_with_checkpoint(const Checkpoint& ckpt, const Tensor<double>& low) {
  if (checkpoint_is_f32(ckpt)) {
    BrightVAE<float> model = model_from_checkpoint<float>(ckpt);
    return model.enhance(low.cast<float>()).cast<double>();
  }
  BrightVAE<double> model = model_from_checkpoint<double>(ckpt);
  return model.enhance(low);
}

namespace {

int64_t count_params(const BrightVAEConfig& cfg) {
  // Structural count only; float32 is enough and cheapest to build.
  return BrightVAE<float>(cfg).parameter_count();
}

AblationRow run_ablation_cell(const std::string& label, const BrightVAEConfig& cfg,
                              const TrainConfig& train_cfg, const DatasetSplit& train_split,
                              const DatasetSplit& eval_split) {
  AblationRow row;
  row.label = label;
  row.param_count = count_params(cfg);
  TrainResult result = train(cfg, train_cfg, train_split);
  metrics::MetricReport report =
      evaluate(result.checkpoint, eval_split, train_cfg.extractor == "random");
  row.psnr = report.mean_psnr();
  row.ssim = report.mean_ssim();
  row.lpips = report.mean_lpips();
  return row;
}

const DatasetSplit& pick_eval_split(const DatasetSplit& train_split,
                                    const DatasetSplit& test_split) {
  return test_split.empty() ? train_split : test_split;
}

}  // namespace

std::vector<AblationRow> ablate_components(const BrightVAEConfig& base,
                                           const TrainConfig& train_cfg,
                                           const DatasetSplit& train_split,
                                           const DatasetSplit& test_split) {
  const DatasetSplit& eval_split = pick_eval_split(train_split, test_split);
  // Cumulative toggle grid: each row enables one more component than the last.
  struct RowSpec {
    bool two_fields, ssi, skip, attencoder, attenquant;
  };
  const RowSpec grid[6] = {
      {false, false, false, false, false}, {true, false, false, false, false},
      {true, true, false, false, false},   {true, true, true, false, false},
      {true, true, true, true, false},     {true, true, true, true, true},
  };
  std::vector<AblationRow> rows;
  for (int i = 0; i < 6; ++i) {
    BrightVAEConfig cfg = base;
    cfg.two_receptive_fields = grid[i].two_fields;
    cfg.use_similarity_loss = grid[i].ssi;
    cfg.similarity_loss_kind = SimilarityKind::kSsi;
    cfg.skip_connection = grid[i].skip;
    cfg.use_attencoder = grid[i].attencoder;
    cfg.use_attenquant = grid[i].attenquant;
    AblationRow row =
        run_ablation_cell(std::to_string(i + 1), cfg, train_cfg, train_split, eval_split);
    auto mark = [](bool on) { return std::string(on ? "yes" : "no"); };
    row.toggles = {mark(grid[i].two_fields), mark(grid[i].ssi), mark(grid[i].skip),
                   mark(grid[i].attencoder), mark(grid[i].attenquant)};
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<AblationRow> ablate_losses(const BrightVAEConfig& base,
                                       const TrainConfig& train_cfg,
                                       const DatasetSplit& train_split,
                                       const DatasetSplit& test_split) {
  const DatasetSplit& eval_split = pick_eval_split(train_split, test_split);
  struct RowSpec {
    const char* label;
    SimilarityKind kind;
  };
  const RowSpec sweep[9] = {
      {"Rest & Latent", SimilarityKind::kNone},
      {"Rest & Latent & Jaccard", SimilarityKind::kJaccard},
      {"Rest & Latent & TV", SimilarityKind::kTv},
      {"Rest & Latent & Cosine Similarity", SimilarityKind::kCosine},
      {"Rest & Latent & KLD", SimilarityKind::kKld},
      {"Rest & Latent & GMSD", SimilarityKind::kGmsd},
      {"Rest & Latent & Perceptual", SimilarityKind::kPerceptual},
      {"Rest & Latent & Color Consistency", SimilarityKind::kColor},
      {"Rest & Latent & Structural Similarity", SimilarityKind::kSsi},
  };
  std::vector<AblationRow> rows;
  for (const auto& spec : sweep) {
    BrightVAEConfig cfg = base;
    cfg.similarity_loss_kind = spec.kind;
    cfg.use_similarity_loss = spec.kind != SimilarityKind::kNone;
    if (spec.kind == SimilarityKind::kPerceptual && train_cfg.extractor == "none") {
      // No feature extractor configured: emit the row with "-" metrics.
      AblationRow row;
      row.label = spec.label;
      row.param_count = count_params(cfg);
      rows.push_back(std::move(row));
      continue;
    }
    rows.push_back(run_ablation_cell(spec.label, cfg, train_cfg, train_split, eval_split));
  }
  return rows;
}

namespace {

std::string metric_cell(const std::optional<double>& v) {
  if (!v) return "-";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", *v);
  return buf;
}

}  // namespace

std::string components_csv(const std::vector<AblationRow>& rows) {
  std::string out =
      "Configuration,Two Receptive Fields,SSI Loss,Skip Connection,"
      "Attencoder Module,Attenquant Module,PSNR,SSIM,LPIPS\n";
  for (const auto& row : rows) {
    out += row.label;
    for (const auto& t : row.toggles) out += "," + t;
    out += "," + metric_cell(row.psnr) + "," + metric_cell(row.ssim) + "," +
           metric_cell(row.lpips) + "\n";
  }
  return out;
}

std::string losses_csv(const std::vector<AblationRow>& rows) {
  std::string out = "Loss Function,PSNR,SSIM,LPIPS\n";
  for (const auto& row : rows)
    out += row.label + "," + metric_cell(row.psnr) + "," + metric_cell(row.ssim) + "," +
           metric_cell(row.lpips) + "\n";
  return out;
}

}  // namespace brightvae
