#pragma once

#include <array>
#include <string>
#include <vector>

#include "retinagan/image.hpp"

namespace retinagan {

/// Hard segmentation scores for one prediction. Averages run over the
/// classes present in the ground truth only.
struct MetricReport {
  double dice = 0.0;
  double miou = 0.0;
  std::array<double, kNumClasses> per_class_dice{};
  std::array<double, kNumClasses> per_class_iou{};
  /// Class occurs in the ground truth.
  std::array<bool, kNumClasses> present{};

  /// "<id>,<dice>,<miou>,<iou_0>,...,<iou_7>"
  std::string csv_row(const std::string& config_id) const;
  static std::string csv_header();
};

/// Mean per-class 2|P&G| / (|P| + |G|) over classes present in gt.
double dice_coefficient(const LabelMap& pred, const LabelMap& gt);

/// Per-class |P&G| / |P|G| and their mean over classes present in gt. The
/// Dice fields are filled as well. Classes absent from gt report IoU 1 when
/// also absent from pred and 0 otherwise; neither enters the means.
MetricReport miou(const LabelMap& pred, const LabelMap& gt);

/// Element-wise mean of reports (per-image averaging).
MetricReport average_reports(const std::vector<MetricReport>& reports);

/// Nearest palette colour per pixel, Euclidean in RGB; ties go to the lower index.
LabelMap decode_rgb_to_labels(const RgbImage& rgb, const Palette& palette = label_palette());

/// Throws std::invalid_argument if two palette entries coincide.
void validate_palette(const Palette& palette);

}  // namespace retinagan
