#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace retinagan {

/// Seven retinal layers plus background.
inline constexpr int kNumClasses = 8;

/// Row-major 2-D buffer. Indexing is (row, col).
template <typename T>
class Grid {
 public:
  Grid() = default;
  Grid(int rows, int cols, T fill = T{})
      : rows_(rows), cols_(cols), data_(checked_size(rows, cols), fill) {}

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T& operator()(int r, int c) { return data_[static_cast<std::size_t>(r) * cols_ + c]; }
  const T& operator()(int r, int c) const {
    return data_[static_cast<std::size_t>(r) * cols_ + c];
  }

  /// Border-replicating access.
  const T& clamped(int r, int c) const {
    r = r < 0 ? 0 : (r >= rows_ ? rows_ - 1 : r);
    c = c < 0 ? 0 : (c >= cols_ ? cols_ - 1 : c);
    return (*this)(r, c);
  }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }

  template <typename U>
  bool same_shape(const Grid<U>& other) const {
    return rows_ == other.rows() && cols_ == other.cols();
  }

  friend bool operator==(const Grid&, const Grid&) = default;

 private:
  static std::size_t checked_size(int rows, int cols) {
    if (rows < 0 || cols < 0) throw std::invalid_argument("Grid: negative dimensions");
    return static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols);
  }

  int rows_ = 0;
  int cols_ = 0;
  std::vector<T> data_;
};

/// Grayscale intensities, nominally in [0, 1].
using Image = Grid<double>;
/// Per-pixel class indices in [0, kNumClasses).
using LabelMap = Grid<std::uint8_t>;

struct Rgb {
  double r = 0.0;
  double g = 0.0;
  double b = 0.0;
  friend bool operator==(const Rgb&, const Rgb&) = default;
};
using RgbImage = Grid<Rgb>;

using Palette = std::array<Rgb, kNumClasses>;

/// Color coding for the label maps. Every color is a corner of the unit RGB
/// cube, so each channel of a rendered label map is a binary mask.
/// Order: background, ILM, RNFL, GCL, IPL, INL, OPL, ONL.
const Palette& label_palette();

/// Names of the classes, index-aligned with label_palette().
const std::array<std::string, kNumClasses>& class_names();

/// Exact palette lookup.
RgbImage render_rgb(const LabelMap& labels, const Palette& palette = label_palette());

/// Copies the rows x cols window whose top-left corner is (row, col).
template <typename T>
Grid<T> crop(const Grid<T>& src, int row, int col, int rows, int cols) {
  if (row < 0 || col < 0 || row + rows > src.rows() || col + cols > src.cols()) {
    throw std::out_of_range("crop: window outside source");
  }
  Grid<T> out(rows, cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) out(r, c) = src(row + r, col + c);
  }
  return out;
}

}  // namespace retinagan
