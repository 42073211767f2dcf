#include "brightvae/data.hpp"

#include <algorithm>
#include <iostream>
#include <map>
#include <sstream>

#include "brightvae/image_io.hpp"
#include "brightvae/rng.hpp"

namespace brightvae {

namespace {

namespace fs = std::filesystem;

std::map<std::string, fs::path> list_pngs(const fs::path& dir) {
  std::map<std::string, fs::path> out;
  if (!fs::exists(dir)) return out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    if (entry.path().extension() != ".png") continue;
    out[entry.path().stem().string()] = entry.path();
  }
  return out;
}

DatasetSplit load_split(const fs::path& root, const std::string& name) {
  DatasetSplit split;
  split.name = name;
  const fs::path low_dir = root / name / "low";
  const fs::path gt_dir = root / name / "gt";
  auto lows = list_pngs(low_dir);
  auto gts = list_pngs(gt_dir);

  std::vector<std::string> orphans;
  for (const auto& [id, p] : lows)
    if (!gts.count(id)) orphans.push_back(name + "/low/" + p.filename().string());
  for (const auto& [id, p] : gts)
    if (!lows.count(id)) orphans.push_back(name + "/gt/" + p.filename().string());
  if (!orphans.empty()) {
    std::sort(orphans.begin(), orphans.end());
    std::ostringstream os;
    os << "unmatched image files under " << root.string() << ":";
    for (const auto& o : orphans) os << " " << o;
    throw std::runtime_error(os.str());
  }

  for (const auto& [id, low_path] : lows) {  // std::map iterates in sorted order
    ImagePair pair;
    pair.id = id;
    pair.low = read_png(low_path);
    pair.gt = read_png(gts.at(id));
    if (!pair.low.same_shape(pair.gt))
      throw std::runtime_error("pair " + id + ": low " + pair.low.shape_str() +
                               " does not match gt " + pair.gt.shape_str());
    split.pairs.push_back(std::move(pair));
  }
  return split;
}

}  // namespace

std::pair<DatasetSplit, DatasetSplit> load_paired_dataset(const fs::path& root,
                                                          DatasetLayout layout) {
  if (!fs::exists(root))
    throw std::runtime_error("dataset root does not exist: " + root.string());
  DatasetSplit train = load_split(root, "train");
  DatasetSplit test = load_split(root, "test");
  if (train.empty() && test.empty())
    throw std::runtime_error("no image pairs found under " + root.string());
  if (layout == DatasetLayout::kEndo4ie && (train.size() != 690 || test.size() != 266))
    std::cerr << "warning: expected 690 train / 266 test pairs for this layout, found "
              << train.size() << " / " << test.size() << "\n";
  return {std::move(train), std::move(test)};
}

void save_split(const DatasetSplit& split, const fs::path& dir) {
  fs::create_directories(dir / "low");
  fs::create_directories(dir / "gt");
  for (const auto& pair : split.pairs) {
    write_png(dir / "low" / (pair.id + ".png"), pair.low);
    write_png(dir / "gt" / (pair.id + ".png"), pair.gt);
  }
}

Tensor<double> synth_darken(const Tensor<double>& gt, double gamma, double gain,
                            double noise_sigma, uint64_t seed) {
  Rng rng(seed);
  Tensor<double> low = gt;
  for (int64_t i = 0; i < low.numel(); ++i) {
    double v = gain * std::pow(std::clamp(low[i], 0.0, 1.0), gamma);
    if (noise_sigma > 0.0) v += rng.normal(0.0, noise_sigma);
    low[i] = std::clamp(v, 0.0, 1.0);
  }
  return low;
}

DatasetSplit make_synth_dataset(int n_pairs, int size, uint64_t seed) {
  if (n_pairs < 1) throw std::invalid_argument("make_synth_dataset: n_pairs must be >= 1");
  if (size < 8 || size % 8 != 0)
    throw std::invalid_argument("make_synth_dataset: size must be a positive multiple of 8");

  DatasetSplit split;
  split.name = "synth";
  for (int n = 0; n < n_pairs; ++n) {
    Rng rng = Rng::derive(seed, static_cast<uint64_t>(n));

    // Smooth blobs on a dim gradient background, loosely tissue-like.
    Tensor<double> gt({3, size, size});
    const double base_r = rng.uniform(0.45, 0.75);
    const double base_g = rng.uniform(0.25, 0.5);
    const double base_b = rng.uniform(0.2, 0.45);
    const double grad_x = rng.uniform(-0.15, 0.15);
    const double grad_y = rng.uniform(-0.15, 0.15);
    const int n_blobs = static_cast<int>(rng.uniform_int(4, 9));
    struct Blob {
      double cx, cy, radius, r, g, b;
    };
    std::vector<Blob> blobs(static_cast<size_t>(n_blobs));
    for (auto& blob : blobs) {
      blob.cx = rng.uniform(0.0, size);
      blob.cy = rng.uniform(0.0, size);
      blob.radius = rng.uniform(size * 0.08, size * 0.3);
      blob.r = rng.uniform(-0.25, 0.35);
      blob.g = rng.uniform(-0.2, 0.25);
      blob.b = rng.uniform(-0.2, 0.25);
    }
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) {
        const double fx = static_cast<double>(x) / size;
        const double fy = static_cast<double>(y) / size;
        double r = base_r + grad_x * fx + grad_y * fy;
        double g = base_g + 0.5 * (grad_x * fx + grad_y * fy);
        double b = base_b + 0.3 * (grad_x * fx + grad_y * fy);
        for (const auto& blob : blobs) {
          const double dx = x - blob.cx, dy = y - blob.cy;
          const double k = std::exp(-(dx * dx + dy * dy) / (2.0 * blob.radius * blob.radius));
          r += blob.r * k;
          g += blob.g * k;
          b += blob.b * k;
        }
        const int64_t hw = static_cast<int64_t>(y) * size + x;
        gt[0 * size * size + hw] = std::clamp(r, 0.0, 1.0);
        gt[1 * size * size + hw] = std::clamp(g, 0.0, 1.0);
        gt[2 * size * size + hw] = std::clamp(b, 0.0, 1.0);
      }

    // Quantize to the 8-bit grid so PNG round trips are lossless.
    gt = quantize_to_8bit(gt);

    const double gamma = rng.uniform(1.5, 3.0);
    const double gain = rng.uniform(0.3, 0.7);
    const double sigma = rng.uniform(0.0, 0.02);
    Tensor<double> low = quantize_to_8bit(synth_darken(gt, gamma, gain, sigma, rng.next_u64()));

    char id[16];
    std::snprintf(id, sizeof(id), "%04d", n);
    split.pairs.push_back({id, std::move(low), std::move(gt)});
  }
  return split;
}

}  // namespace brightvae
