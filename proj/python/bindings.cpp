// Python bindings: numpy in, numpy out. Models stay on the C++ side.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "retinagan/discriminator.hpp"
#include "retinagan/experiments.hpp"
#include "retinagan/metrics.hpp"
#include "retinagan/phantom.hpp"
#include "retinagan/pipeline.hpp"
#include "retinagan/srbaseline.hpp"
#include "retinagan/trainer.hpp"

namespace py = pybind11;
using namespace retinagan;

namespace {

using F64 = py::array_t<double, py::array::c_style | py::array::forcecast>;
using U8 = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

template <typename T, typename A>
Grid<T> to_grid(const A& a, const char* what) {
  if (a.ndim() != 2) throw std::invalid_argument(std::string(what) + ": expected a 2-D array");
  Grid<T> g(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)));
  std::copy(a.data(), a.data() + a.size(), g.data().begin());
  return g;
}

template <typename T>
py::array_t<T> to_array(const Grid<T>& g) {
  py::array_t<T> out({g.rows(), g.cols()});
  std::copy(g.data().begin(), g.data().end(), out.mutable_data());
  return out;
}

py::array_t<double> rgb_to_array(const RgbImage& img) {
  py::array_t<double> out({img.rows(), img.cols(), 3});
  auto m = out.mutable_unchecked<3>();
  for (int r = 0; r < img.rows(); ++r) {
    for (int c = 0; c < img.cols(); ++c) {
      m(r, c, 0) = img(r, c).r;
      m(r, c, 1) = img(r, c).g;
      m(r, c, 2) = img(r, c).b;
    }
  }
  return out;
}

RgbImage array_to_rgb(const F64& a) {
  if (a.ndim() != 3 || a.shape(2) != 3) throw std::invalid_argument("expected an H x W x 3 array");
  RgbImage img(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)));
  auto v = a.unchecked<3>();
  for (int r = 0; r < img.rows(); ++r) {
    for (int c = 0; c < img.cols(); ++c) img(r, c) = {v(r, c, 0), v(r, c, 1), v(r, c, 2)};
  }
  return img;
}

py::dict report_dict(const MetricReport& r) {
  py::dict d;
  d["dice"] = r.dice;
  d["miou"] = r.miou;
  d["per_class_dice"] = std::vector<double>(r.per_class_dice.begin(), r.per_class_dice.end());
  d["per_class_iou"] = std::vector<double>(r.per_class_iou.begin(), r.per_class_iou.end());
  d["present"] = std::vector<bool>(r.present.begin(), r.present.end());
  return d;
}

std::vector<PatchPair> store_split(const std::filesystem::path& dir, const std::string& split) {
  PatchStore store = read_patch_store(dir);
  if (split == "train") return store.train;
  if (split == "test") return store.test;
  throw std::invalid_argument("split must be 'train' or 'test'");
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Joint super-resolution and segmentation of OCT B-scans";
  m.attr("NUM_CLASSES") = kNumClasses;
  m.attr("PATCH_SIZE") = kPatchSize;

  m.def(
      "generate_scan",
      [](int height, int width, std::uint64_t seed, double speckle, double min_thickness) {
        PhantomConfig c;
        c.height = height;
        c.width = width;
        c.seed = seed;
        c.speckle_strength = speckle;
        c.min_thickness = min_thickness;
        const Scan s = generate_scan(c);
        return py::make_tuple(to_array(s.image), to_array(s.labels));
      },
      py::arg("height") = 448, py::arg("width") = 448, py::arg("seed") = 1, py::arg("speckle") = 0.15,
      py::arg("min_thickness") = 8.0, "Synthetic layered B-scan: (image float64 HxW, labels uint8 HxW).");

  m.def("median_filter3", [](const F64& a) { return to_array(median_filter3(to_grid<double>(a, "image"))); });
  m.def(
      "unsharp_mask",
      [](const F64& a, double sigma, double amount) {
        return to_array(unsharp_mask(to_grid<double>(a, "image"), sigma, amount));
      },
      py::arg("image"), py::arg("sigma") = 1.0, py::arg("amount") = 1.0);
  m.def("downsample4", [](const F64& a) { return to_array(downsample4(to_grid<double>(a, "patch"))); });
  m.def(
      "bicubic_upsample",
      [](const F64& a, int factor) { return to_array(bicubic_upsample(to_grid<double>(a, "image"), factor)); },
      py::arg("image"), py::arg("factor") = 4);
  m.def(
      "patch_offsets",
      [](int rows, int cols, int patch, double overlap) {
        std::vector<std::pair<int, int>> out;
        for (const auto& o : patch_offsets(rows, cols, patch, overlap)) out.emplace_back(o.row, o.col);
        return out;
      },
      py::arg("rows"), py::arg("cols"), py::arg("patch") = kPatchSize, py::arg("overlap") = kPatchOverlap);

  m.def("dice_coefficient", [](const U8& pred, const U8& gt) {
    return dice_coefficient(to_grid<std::uint8_t>(pred, "pred"), to_grid<std::uint8_t>(gt, "gt"));
  });
  m.def("miou", [](const U8& pred, const U8& gt) {
    return report_dict(miou(to_grid<std::uint8_t>(pred, "pred"), to_grid<std::uint8_t>(gt, "gt")));
  });
  m.def("render_rgb", [](const U8& labels) { return rgb_to_array(render_rgb(to_grid<std::uint8_t>(labels, "labels"))); });
  m.def("decode_rgb", [](const F64& rgb) { return to_array(decode_rgb_to_labels(array_to_rgb(rgb))); });
  m.def("palette", [] {
    std::vector<std::array<double, 3>> out;
    for (const auto& c : label_palette()) out.push_back({c.r, c.g, c.b});
    return out;
  });
  m.def("class_names", [] {
    const auto& n = class_names();
    return std::vector<std::string>(n.begin(), n.end());
  });

  m.def(
      "receptive_field",
      [](int n_layers) {
        DiscriminatorConfig c;
        c.n_layers = n_layers;
        return receptive_field(c);
      },
      py::arg("n_layers") = 3);
  m.def(
      "score_map_size",
      [](int input_size, int n_layers) {
        DiscriminatorConfig c;
        c.n_layers = n_layers;
        return score_map_size(c, input_size);
      },
      py::arg("input_size") = kPatchSize, py::arg("n_layers") = 3);

  m.def("grid_rows", [] {
    py::list rows;
    for (const GridRow& r : default_grid_rows()) {
      py::dict d;
      d["id"] = r.id();
      d["label"] = r.label();
      d["table"] = r.table();
      d["published_dice"] = r.reference()->dice;
      d["published_miou"] = r.reference()->miou;
      rows.append(d);
    }
    return rows;
  });

  m.def(
      "predict",
      [](const std::filesystem::path& checkpoint, const F64& input_lr) {
        Generator g = load_generator(checkpoint);
        PatchPair p;
        p.input_lr = to_grid<double>(input_lr, "input_lr");
        py::gil_scoped_release release;
        LabelMap out = predict_labels(g, {p}, 1).front();
        py::gil_scoped_acquire acquire;
        return to_array(out);
      },
      py::arg("checkpoint"), py::arg("input_lr"), "Label map predicted by a generator checkpoint for one 56x56 input.");
  m.def(
      "evaluate",
      [](const std::filesystem::path& checkpoint, const std::filesystem::path& patch_store, const std::string& split,
         int batch_size) {
        const auto pairs = store_split(patch_store, split);
        MetricReport r;
        {
          py::gil_scoped_release release;
          r = evaluate(checkpoint, pairs, batch_size);
        }
        return report_dict(r);
      },
      py::arg("checkpoint"), py::arg("patch_store"), py::arg("split") = "test", py::arg("batch_size") = 16);
}
