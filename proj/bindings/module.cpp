// Python bindings for the main operations: dataset synthesis, training,
// evaluation, single-image enhancement, and the quality metrics.
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "brightvae/config_json.hpp"
#include "brightvae/image_io.hpp"
#include "brightvae/training.hpp"

namespace py = pybind11;
using namespace brightvae;

namespace {

using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor<double> tensor_from_array(const DoubleArray& arr) {
  std::vector<int64_t> shape(static_cast<size_t>(arr.ndim()));
  for (py::ssize_t i = 0; i < arr.ndim(); ++i)
    shape[static_cast<size_t>(i)] = arr.shape(i);
  Tensor<double> t(shape);
  std::memcpy(t.data(), arr.data(), static_cast<size_t>(t.numel()) * sizeof(double));
  return t;
}

py::array_t<double> array_from_tensor(const Tensor<double>& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  py::array_t<double> arr(shape);
  std::memcpy(arr.mutable_data(), t.data(),
              static_cast<size_t>(t.numel()) * sizeof(double));
  return arr;
}

Tensor<double> image_from_array(const DoubleArray& arr) {
  if (arr.ndim() != 3 || arr.shape(0) != 3)
    throw std::invalid_argument("expected a (3, H, W) float array");
  return tensor_from_array(arr);
}

py::dict report_to_dict(const metrics::MetricReport& report) {
  py::list rows;
  for (const auto& r : report.per_image) {
    py::dict row;
    row["id"] = r.id;
    row["psnr"] = r.psnr;
    row["ssim"] = r.ssim;
    row["lpips"] = r.lpips ? py::cast(*r.lpips) : py::none();
    rows.append(row);
  }
  py::dict out;
  out["per_image"] = rows;
  out["mean_psnr"] = report.mean_psnr();
  out["mean_ssim"] = report.mean_ssim();
  out["mean_lpips"] = report.mean_lpips() ? py::cast(*report.mean_lpips()) : py::none();
  out["count"] = report.count();
  return out;
}

FullConfig parse_full_config(const std::string& config_json) {
  return config_json.empty() ? FullConfig{} : parse_config_text(config_json);
}

const DatasetSplit& pick_split(const std::pair<DatasetSplit, DatasetSplit>& splits,
                               const std::string& name) {
  if (name == "train") return splits.first;
  if (name == "test") return splits.second;
  throw std::invalid_argument("split must be 'train' or 'test'");
}

}  // namespace

PYBIND11_MODULE(_brightvae, m) {
  m.doc() = "Low-light image enhancement with a hierarchical vector-quantized "
            "autoencoder: training, evaluation, and metrics.";

  m.def(
      "make_synth_dir",
      [](const std::filesystem::path& root, int n_train, int n_test, int size,
         uint64_t seed) {
        DatasetSplit train_split = make_synth_dataset(n_train, size, seed);
        train_split.name = "train";
        save_split(train_split, root / "train");
        if (n_test > 0) {
          DatasetSplit test_split = make_synth_dataset(n_test, size, seed + 1);
          test_split.name = "test";
          save_split(test_split, root / "test");
        }
      },
      py::arg("root"), py::arg("n_train"), py::arg("n_test") = 0, py::arg("size") = 64,
      py::arg("seed") = 0,
      "Writes a synthetic paired dataset in the root/{train,test}/{low,gt} layout.");

  m.def(
      "make_synth_pairs",
      [](int n_pairs, int size, uint64_t seed) {
        DatasetSplit split = make_synth_dataset(n_pairs, size, seed);
        py::list out;
        for (const auto& pair : split.pairs) {
          py::dict d;
          d["id"] = pair.id;
          d["low"] = array_from_tensor(pair.low);
          d["gt"] = array_from_tensor(pair.gt);
          out.append(d);
        }
        return out;
      },
      py::arg("n_pairs"), py::arg("size") = 64, py::arg("seed") = 0,
      "Returns synthetic (low, gt) image pairs as numpy arrays.");

  m.def(
      "train",
      [](const std::string& config_json, const std::filesystem::path& data_root,
         const std::filesystem::path& out_dir) {
        FullConfig cfg = parse_full_config(config_json);
        auto splits = load_paired_dataset(data_root);
        TrainResult res = train(cfg.model, cfg.train, splits.first, out_dir);
        py::list history;
        for (const auto& e : res.history) {
          py::dict row;
          row["rest"] = e.rest;
          row["latent"] = e.latent;
          row["similarity"] = e.similarity;
          row["total"] = e.total;
          history.append(row);
        }
        return history;
      },
      py::arg("config_json"), py::arg("data_root"), py::arg("out_dir"),
      "Trains on the train split; writes final.ckpt into out_dir and returns the "
      "per-epoch loss history.");

  m.def(
      "evaluate",
      [](const std::filesystem::path& checkpoint, const std::filesystem::path& data_root,
         const std::string& split, bool with_lpips) {
        Checkpoint ckpt = load_checkpoint(checkpoint);
        auto splits = load_paired_dataset(data_root);
        return report_to_dict(evaluate(ckpt, pick_split(splits, split), with_lpips));
      },
      py::arg("checkpoint"), py::arg("data_root"), py::arg("split") = "test",
      py::arg("with_lpips") = true,
      "Enhances every pair in the chosen split and reports PSNR/SSIM/LPIPS.");

  m.def(
      "enhance",
      [](const std::filesystem::path& checkpoint, const DoubleArray& low) {
        Checkpoint ckpt = load_checkpoint(checkpoint);
        return array_from_tensor(enhance_with_checkpoint(ckpt, image_from_array(low)));
      },
      py::arg("checkpoint"), py::arg("low"),
      "Enhances one (3, H, W) image in [0, 1] through a trained checkpoint.");

  m.def(
      "psnr",
      [](const DoubleArray& pred, const DoubleArray& target, double max_val) {
        return metrics::psnr(tensor_from_array(pred), tensor_from_array(target), max_val);
      },
      py::arg("pred"), py::arg("target"), py::arg("max_val") = 1.0);

  m.def(
      "ssim",
      [](const DoubleArray& pred, const DoubleArray& target) {
        return metrics::ssim(image_from_array(pred), image_from_array(target));
      },
      py::arg("pred"), py::arg("target"));

  m.def(
      "read_png",
      [](const std::filesystem::path& path) { return array_from_tensor(read_png(path)); },
      py::arg("path"));

  m.def(
      "write_png",
      [](const std::filesystem::path& path, const DoubleArray& image) {
        write_png(path, image_from_array(image));
      },
      py::arg("path"), py::arg("image"));

  m.def("default_config", [] { return to_json_string(FullConfig{}); },
        "The full default configuration as a JSON string.");
}
