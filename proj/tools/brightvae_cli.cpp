// Command-line front door: dataset synthesis, training, evaluation,
// single-image enhancement, ablation grids, and report rendering.
//
// Exit codes: 0 success, 1 usage/validation error, 2 runtime failure.

#include <chrono>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "brightvae/config_json.hpp"
#include "brightvae/data.hpp"
#include "brightvae/image_io.hpp"
#include "brightvae/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace brightvae;

namespace {

std::string timestamp_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << text;
}

/// Run context: collects artifact paths and writes the single manifest every
/// command leaves next to its outputs, including on failure.
struct Manifest {
  std::string command;
  fs::path path;
  std::string started = timestamp_now();
  json config = json::object();
  uint64_t seed = 0;
  std::vector<std::string> artifacts;

  void set_config(const std::string& config_json_text) {
    config = json::parse(config_json_text);
  }

  void add(const fs::path& artifact) { artifacts.push_back(artifact.string()); }

  void write(bool success, const std::string& error = {}) const {
    if (path.empty()) return;
    json m{{"command", command},
           {"config", config},
           {"seed", seed},
           {"config_hash", config_hash(config.dump())},
           {"started", started},
           {"finished", timestamp_now()},
           {"artifacts", artifacts},
           {"success", success}};
    if (!error.empty()) m["error"] = error;
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    write_text(path, m.dump(2) + "\n");
  }
};

void require_empty_or_force(const fs::path& dir, bool force) {
  if (force || !fs::exists(dir)) return;
  if (fs::is_directory(dir) && fs::directory_iterator(dir) == fs::directory_iterator())
    return;
  throw std::invalid_argument("output " + dir.string() +
                              " already exists and is not empty (use --force)");
}

// ---------------------------------------------------------------------------
// make-synth
// ---------------------------------------------------------------------------
void cmd_make_synth(const fs::path& out, int pairs, int size, uint64_t seed, bool force,
                    Manifest& manifest) {
  require_empty_or_force(out, force);
  DatasetSplit all = make_synth_dataset(pairs, size, seed);
  // 80/20 split, at least one pair in train.
  DatasetSplit train{"train", {}}, test{"test", {}};
  const size_t n_test = all.size() / 5;
  for (size_t i = 0; i < all.size(); ++i)
    (i < all.size() - n_test ? train : test).pairs.push_back(std::move(all.pairs[i]));
  save_split(train, out / "train");
  save_split(test, out / "test");
  manifest.seed = seed;
  manifest.config = {{"pairs", pairs}, {"size", size}, {"seed", seed}};
  manifest.add(out / "train");
  manifest.add(out / "test");
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------
std::string history_csv(const std::vector<LossBreakdown>& history, int64_t first_epoch) {
  std::string out = "epoch,rest,latent,similarity,total\n";
  for (size_t i = 0; i < history.size(); ++i) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%lld,%.8g,%.8g,%.8g,%.8g\n",
                  static_cast<long long>(first_epoch + static_cast<int64_t>(i)),
                  history[i].rest, history[i].latent, history[i].similarity,
                  history[i].total);
    out += buf;
  }
  return out;
}

void cmd_train(const fs::path& config_path, const fs::path& data_dir, const fs::path& out,
               const fs::path& resume_path, Manifest& manifest) {
  FullConfig cfg = parse_config_file(config_path);
  manifest.set_config(to_json_string(cfg));
  manifest.seed = cfg.train.seed;
  auto [train_split, test_split] = load_paired_dataset(data_dir);
  (void)test_split;
  Checkpoint resume;
  const bool resuming = !resume_path.empty();
  if (resuming) resume = load_checkpoint(resume_path);
  TrainResult result =
      brightvae::train(cfg.model, cfg.train, train_split, out, resuming ? &resume : nullptr);
  const int64_t first_epoch = resuming ? resume.epoch : 0;
  write_text(out / "history.csv", history_csv(result.history, first_epoch));
  manifest.add(out / "final.ckpt");
  manifest.add(out / "history.csv");
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------
void cmd_eval(const fs::path& ckpt_path, const fs::path& data_dir, const fs::path& out,
              Manifest& manifest) {
  Checkpoint ckpt = load_checkpoint(ckpt_path);
  manifest.set_config(ckpt.model_config_json);
  auto [train_split, test_split] = load_paired_dataset(data_dir);
  const DatasetSplit& split = test_split.empty() ? train_split : test_split;

  fs::create_directories(out / "images");
  metrics::MetricReport report = evaluate(ckpt, split);
  // Dump the image triples so `report` can build triptychs later.
  for (const auto& pair : split.pairs) {
    Tensor<double> enhanced = enhance_with_checkpoint(ckpt, pair.low);
    write_png(out / "images" / (pair.id + ".low.png"), pair.low);
    write_png(out / "images" / (pair.id + ".enhanced.png"), enhanced);
    write_png(out / "images" / (pair.id + ".gt.png"), pair.gt);
  }
  write_text(out / "metrics.csv", metrics::to_csv(report));
  write_text(out / "metrics.json", metrics::to_json(report));
  manifest.add(out / "metrics.csv");
  manifest.add(out / "metrics.json");
  manifest.add(out / "images");
}

// ---------------------------------------------------------------------------
// enhance
// ---------------------------------------------------------------------------
void cmd_enhance(const fs::path& ckpt_path, const fs::path& in, const fs::path& out,
                 Manifest& manifest) {
  Checkpoint ckpt = load_checkpoint(ckpt_path);
  manifest.set_config(ckpt.model_config_json);
  Tensor<double> low = read_png(in);
  Tensor<double> enhanced = enhance_with_checkpoint(ckpt, low);
  if (!out.parent_path().empty()) fs::create_directories(out.parent_path());
  write_png(out, enhanced);
  manifest.add(out);
}

// ---------------------------------------------------------------------------
// ablate
// ---------------------------------------------------------------------------
json ablation_sidecar(const std::vector<AblationRow>& rows, const FullConfig& cfg,
                      double seconds) {
  json runs = json::array();
  for (const auto& row : rows)
    runs.push_back({{"label", row.label}, {"param_count", row.param_count}});
  return json{{"seed", cfg.train.seed},
              {"config_hash", config_hash(to_json_string(cfg))},
              {"duration_seconds", seconds},
              {"runs", runs}};
}

void cmd_ablate(const fs::path& config_path, const fs::path& data_dir,
                const std::string& grid, const fs::path& out, Manifest& manifest) {
  FullConfig cfg = parse_config_file(config_path);
  manifest.set_config(to_json_string(cfg));
  manifest.seed = cfg.train.seed;
  auto [train_split, test_split] = load_paired_dataset(data_dir);
  fs::create_directories(out);

  const auto t0 = std::chrono::steady_clock::now();
  std::vector<AblationRow> rows;
  std::string csv;
  fs::path csv_path;
  if (grid == "components") {
    rows = ablate_components(cfg.model, cfg.train, train_split, test_split);
    csv = components_csv(rows);
    csv_path = out / "components.csv";
  } else if (grid == "losses") {
    rows = ablate_losses(cfg.model, cfg.train, train_split, test_split);
    csv = losses_csv(rows);
    csv_path = out / "losses.csv";
  } else {
    throw std::invalid_argument("--grid must be components or losses, got " + grid);
  }
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  write_text(csv_path, csv);
  const fs::path sidecar = csv_path.string() + ".meta.json";
  write_text(sidecar, ablation_sidecar(rows, cfg, seconds).dump(2) + "\n");
  manifest.add(csv_path);
  manifest.add(sidecar);
}

// ---------------------------------------------------------------------------
// report: triptychs plus metric bar charts from an eval run directory
// ---------------------------------------------------------------------------
Tensor<double> hstack_images(const std::vector<Tensor<double>>& images) {
  const int64_t h = images.front().dim(1);
  int64_t w = 0;
  for (const auto& img : images) {
    if (img.dim(1) != h) throw std::runtime_error("triptych images differ in height");
    w += img.dim(2);
  }
  Tensor<double> out({3, h, w});
  int64_t x0 = 0;
  for (const auto& img : images) {
    const int64_t iw = img.dim(2);
    for (int64_t c = 0; c < 3; ++c)
      for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < iw; ++x)
          out[(c * h + y) * w + x0 + x] = img[(c * h + y) * iw + x];
    x0 += iw;
  }
  return out;
}

Tensor<double> bar_chart(const std::vector<double>& values, double vmax) {
  const int64_t h = 240, w = std::max<int64_t>(320, 24 * static_cast<int64_t>(values.size()));
  Tensor<double> img = Tensor<double>::full({3, h, w}, 1.0);
  const int64_t n = static_cast<int64_t>(values.size());
  const int64_t slot = w / std::max<int64_t>(n, 1);
  for (int64_t i = 0; i < n; ++i) {
    const double frac = vmax > 0 ? std::clamp(values[static_cast<size_t>(i)] / vmax, 0.0, 1.0)
                                 : 0.0;
    const int64_t bar_h = static_cast<int64_t>(frac * (h - 20));
    for (int64_t y = h - 10 - bar_h; y < h - 10; ++y)
      for (int64_t x = i * slot + 4; x < (i + 1) * slot - 4; ++x) {
        img[(0 * h + y) * w + x] = 0.2;
        img[(1 * h + y) * w + x] = 0.4;
        img[(2 * h + y) * w + x] = 0.8;
      }
  }
  return img;
}

void cmd_report(const fs::path& runs, const fs::path& out, Manifest& manifest) {
  const fs::path images = runs / "images";
  if (!fs::exists(images))
    throw std::runtime_error("no images directory under " + runs.string() +
                             " (expected an eval run)");
  fs::create_directories(out);

  size_t triptychs = 0;
  for (const auto& entry : fs::directory_iterator(images)) {
    const std::string name = entry.path().filename().string();
    const std::string suffix = ".low.png";
    if (name.size() <= suffix.size() || name.substr(name.size() - suffix.size()) != suffix)
      continue;
    const std::string id = name.substr(0, name.size() - suffix.size());
    Tensor<double> low = read_png(images / (id + ".low.png"));
    Tensor<double> enhanced = read_png(images / (id + ".enhanced.png"));
    Tensor<double> gt = read_png(images / (id + ".gt.png"));
    const fs::path trip = out / (id + ".triptych.png");
    write_png(trip, hstack_images({low, enhanced, gt}));
    manifest.add(trip);
    ++triptychs;
  }
  if (triptychs == 0) throw std::runtime_error("no image triples found in " + images.string());

  // Bar charts from the metrics table.
  std::ifstream is(runs / "metrics.csv");
  if (is) {
    std::vector<double> psnr, ssim, lpips;
    std::string line;
    std::getline(is, line);  // header
    while (std::getline(is, line)) {
      std::istringstream ls(line);
      std::string id, p, s, l;
      std::getline(ls, id, ',');
      std::getline(ls, p, ',');
      std::getline(ls, s, ',');
      std::getline(ls, l, ',');
      psnr.push_back(std::stod(p));
      ssim.push_back(std::stod(s));
      if (l != "-" && !l.empty()) lpips.push_back(std::stod(l));
    }
    write_png(out / "psnr.png", bar_chart(psnr, 50.0));
    write_png(out / "ssim.png", bar_chart(ssim, 1.0));
    manifest.add(out / "psnr.png");
    manifest.add(out / "ssim.png");
    if (!lpips.empty()) {
      write_png(out / "lpips.png", bar_chart(lpips, 1.0));
      manifest.add(out / "lpips.png");
    }
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hierarchical vector-quantized autoencoder for low-light image enhancement"};
  app.require_subcommand(1);

  std::string out_dir, config_path, data_dir, ckpt_path, resume_path, in_path, grid, runs_dir;
  int pairs = 16, size = 64;
  uint64_t seed = 0;
  bool force = false;

  auto* synth = app.add_subcommand("make-synth", "Generate a synthetic paired dataset");
  synth->add_option("--out", out_dir)->required();
  synth->add_option("--pairs", pairs);
  synth->add_option("--size", size);
  synth->add_option("--seed", seed);
  synth->add_flag("--force", force);

  auto* train = app.add_subcommand("train", "Train a model");
  train->add_option("--config", config_path)->required();
  train->add_option("--data", data_dir)->required();
  train->add_option("--out", out_dir)->required();
  train->add_option("--resume", resume_path);

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
  eval->add_option("--ckpt", ckpt_path)->required();
  eval->add_option("--data", data_dir)->required();
  eval->add_option("--out", out_dir)->required();

  auto* enhance = app.add_subcommand("enhance", "Enhance a single image");
  enhance->add_option("--ckpt", ckpt_path)->required();
  enhance->add_option("--in", in_path)->required();
  enhance->add_option("--out", out_dir)->required();

  auto* ablate = app.add_subcommand("ablate", "Run an ablation grid");
  ablate->add_option("--config", config_path)->required();
  ablate->add_option("--data", data_dir)->required();
  ablate->add_option("--grid", grid)->required();
  ablate->add_option("--out", out_dir)->required();

  auto* report = app.add_subcommand("report", "Render triptychs and charts from an eval run");
  report->add_option("--runs", runs_dir)->required();
  report->add_option("--out", out_dir)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  Manifest manifest;
  try {
    if (synth->parsed()) {
      manifest.command = "make-synth";
      manifest.path = fs::path(out_dir) / "manifest.json";
      cmd_make_synth(out_dir, pairs, size, seed, force, manifest);
    } else if (train->parsed()) {
      manifest.command = "train";
      manifest.path = fs::path(out_dir) / "manifest.json";
      cmd_train(config_path, data_dir, out_dir, resume_path, manifest);
    } else if (eval->parsed()) {
      manifest.command = "eval";
      manifest.path = fs::path(out_dir) / "manifest.json";
      cmd_eval(ckpt_path, data_dir, out_dir, manifest);
    } else if (enhance->parsed()) {
      manifest.command = "enhance";
      manifest.path = fs::path(out_dir + ".manifest.json");
      cmd_enhance(ckpt_path, in_path, out_dir, manifest);
    } else if (ablate->parsed()) {
      manifest.command = "ablate";
      manifest.path = fs::path(out_dir) / "manifest.json";
      cmd_ablate(config_path, data_dir, grid, out_dir, manifest);
    } else if (report->parsed()) {
      manifest.command = "report";
      manifest.path = fs::path(out_dir) / "manifest.json";
      cmd_report(runs_dir, out_dir, manifest);
    }
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    manifest.write(false, e.what());
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    manifest.write(false, e.what());
    return 2;
  }
  manifest.write(true);
  return 0;
}
