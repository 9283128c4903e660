#pragma once

// Reference implementations used only by the tests. They are written from
// the definitions, without sharing code with the library.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "retinagan/image.hpp"

namespace oracle {

inline retinagan::LabelMap random_labels(int rows, int cols, std::mt19937_64& rng,
                                         int classes = retinagan::kNumClasses) {
  std::uniform_int_distribution<int> d(0, classes - 1);
  retinagan::LabelMap m(rows, cols);
  for (auto& v : m.data()) v = static_cast<std::uint8_t>(d(rng));
  return m;
}

struct Scores {
  double dice = 0.0;
  double miou = 0.0;
};

// Means over classes occurring in gt, from an explicit confusion matrix.
inline Scores confusion_scores(const retinagan::LabelMap& pred, const retinagan::LabelMap& gt) {
  constexpr int K = retinagan::kNumClasses;
  std::array<std::array<long, K>, K> cm{};
  for (int r = 0; r < gt.rows(); ++r) {
    for (int c = 0; c < gt.cols(); ++c) ++cm[gt(r, c)][pred(r, c)];
  }
  Scores s;
  int present = 0;
  for (int k = 0; k < K; ++k) {
    long row = 0, col = 0;
    for (int j = 0; j < K; ++j) {
      row += cm[k][j];
      col += cm[j][k];
    }
    if (row == 0) continue;
    const long tp = cm[k][k];
    s.dice += 2.0 * tp / static_cast<double>(row + col);
    s.miou += tp / static_cast<double>(row + col - tp);
    ++present;
  }
  s.dice /= present;
  s.miou /= present;
  return s;
}


// Median of the replicated 3x3 neighbourhood, by sorting.
inline retinagan::Image median_reference(const retinagan::Image& in) {
  retinagan::Image out(in.rows(), in.cols());
  for (int r = 0; r < in.rows(); ++r) {
    for (int c = 0; c < in.cols(); ++c) {
      std::vector<double> v;
      for (int dr = -1; dr <= 1; ++dr) {
        for (int dc = -1; dc <= 1; ++dc) {
          const int rr = std::clamp(r + dr, 0, in.rows() - 1);
          const int cc = std::clamp(c + dc, 0, in.cols() - 1);
          v.push_back(in(rr, cc));
        }
      }
      std::sort(v.begin(), v.end());
      out(r, c) = v[4];
    }
  }
  return out;
}

// Unclamped unsharp mask with a directly evaluated 2-D Gaussian.
inline retinagan::Image unsharp_reference(const retinagan::Image& in, double sigma, double amount) {
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  double norm = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    for (int j = -radius; j <= radius; ++j) norm += std::exp(-(i * i + j * j) / (2 * sigma * sigma));
  }
  retinagan::Image out(in.rows(), in.cols());
  for (int r = 0; r < in.rows(); ++r) {
    for (int c = 0; c < in.cols(); ++c) {
      double blur = 0.0;
      for (int i = -radius; i <= radius; ++i) {
        for (int j = -radius; j <= radius; ++j) {
          blur += std::exp(-(i * i + j * j) / (2 * sigma * sigma)) * in.clamped(r + i, c + j);
        }
      }
      out(r, c) = in(r, c) + amount * (in(r, c) - blur / norm);
    }
  }
  return out;
}

// Every origin that is a stride multiple or the final clamped window.
inline std::size_t window_count(int extent, int patch, int stride) {
  std::size_t n = 0;
  for (int o = 0; o + patch <= extent; ++o) {
    if (o % stride == 0 || o == extent - patch) ++n;
  }
  return n;
}

}  // namespace oracle
