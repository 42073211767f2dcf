#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "brightvae/tensor.hpp"

namespace brightvae {

struct ImagePair {
  std::string id;
  Tensor<double> low;  // (3, H, W) in [0, 1]
  Tensor<double> gt;   // same shape
};

struct DatasetSplit {
  std::string name;  // "train" or "test"
  std::vector<ImagePair> pairs;

  size_t size() const { return pairs.size(); }
  bool empty() const { return pairs.empty(); }
};

enum class DatasetLayout { kGeneric, kEndo4ie };

/// Loads `root/{train,test}/{low,gt}/*.png`, matched by filename and sorted.
/// Unmatched filenames are a hard error listing the orphans. The Endo4IE
/// layout expects 690 train / 266 test pairs and warns (stderr) when partial.
std::pair<DatasetSplit, DatasetSplit> load_paired_dataset(
    const std::filesystem::path& root, DatasetLayout layout = DatasetLayout::kGeneric);

/// Writes a split into the `dir/low`, `dir/gt` layout as PNGs.
void save_split(const DatasetSplit& split, const std::filesystem::path& dir);

/// low = clamp(gain * gt^gamma + N(0, sigma), 0, 1), deterministic given seed.
Tensor<double> synth_darken(const Tensor<double>& gt, double gamma, double gain,
                            double noise_sigma, uint64_t seed);

/// Procedural smooth "tissue-like" ground truths paired with darkened copies.
/// Pixels are quantized to the 8-bit grid so on-disk round trips are exact.
DatasetSplit make_synth_dataset(int n_pairs, int size, uint64_t seed);

}  // namespace brightvae
