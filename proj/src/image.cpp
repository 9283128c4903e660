#include "retinagan/image.hpp"

namespace retinagan {

const Palette& label_palette() {
  static const Palette palette{{
      {0.0, 0.0, 0.0},  // background
      {1.0, 0.0, 0.0},  // ILM
      {0.0, 1.0, 0.0},  // RNFL
      {0.0, 0.0, 1.0},  // GCL
      {1.0, 1.0, 0.0},  // IPL
      {1.0, 0.0, 1.0},  // INL
      {0.0, 1.0, 1.0},  // OPL
      {1.0, 1.0, 1.0},  // ONL
  }};
  return palette;
}

const std::array<std::string, kNumClasses>& class_names() {
  static const std::array<std::string, kNumClasses> names{
      "background", "ILM", "RNFL", "GCL", "IPL", "INL", "OPL", "ONL"};
  return names;
}

RgbImage render_rgb(const LabelMap& labels, const Palette& palette) {
  RgbImage out(labels.rows(), labels.cols());
  auto src = labels.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < src.size(); ++i) {
    if (src[i] >= kNumClasses) throw std::out_of_range("render_rgb: class index out of range");
    dst[i] = palette[src[i]];
  }
  return out;
}

}  // namespace retinagan
