#include "retinagan/metrics.hpp"

#include <cstdio>
#include <limits>
#include <stdexcept>
#include <vector>

namespace retinagan {
namespace {

struct ClassCounts {
  std::array<std::uint64_t, kNumClasses> pred{};
  std::array<std::uint64_t, kNumClasses> gt{};
  std::array<std::uint64_t, kNumClasses> both{};
};

ClassCounts count_classes(const LabelMap& pred, const LabelMap& gt) {
  if (!pred.same_shape(gt)) throw std::invalid_argument("metrics: prediction and ground truth differ in shape");
  ClassCounts k;
  auto p = pred.data();
  auto g = gt.data();
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] >= kNumClasses || g[i] >= kNumClasses) throw std::out_of_range("metrics: class index out of range");
    ++k.pred[p[i]];
    ++k.gt[g[i]];
    if (p[i] == g[i]) ++k.both[p[i]];
  }
  return k;
}

}  // namespace

double dice_coefficient(const LabelMap& pred, const LabelMap& gt) { return miou(pred, gt).dice; }

MetricReport miou(const LabelMap& pred, const LabelMap& gt) {
  const ClassCounts k = count_classes(pred, gt);
  MetricReport rep;
  double dice_sum = 0.0;
  double iou_sum = 0.0;
  int n_present = 0;
  for (int c = 0; c < kNumClasses; ++c) {
    rep.present[c] = k.gt[c] > 0;
    const std::uint64_t uni = k.pred[c] + k.gt[c] - k.both[c];
    if (uni == 0) {
      rep.per_class_dice[c] = 1.0;
      rep.per_class_iou[c] = 1.0;
      continue;
    }
    rep.per_class_dice[c] = 2.0 * static_cast<double>(k.both[c]) / static_cast<double>(k.pred[c] + k.gt[c]);
    rep.per_class_iou[c] = static_cast<double>(k.both[c]) / static_cast<double>(uni);
    if (rep.present[c]) {
      dice_sum += rep.per_class_dice[c];
      iou_sum += rep.per_class_iou[c];
      ++n_present;
    }
  }
  if (n_present == 0) throw std::invalid_argument("metrics: empty ground truth");
  rep.dice = dice_sum / n_present;
  rep.miou = iou_sum / n_present;
  return rep;
}

MetricReport average_reports(const std::vector<MetricReport>& reports) {
  if (reports.empty()) throw std::invalid_argument("average_reports: no reports");
  MetricReport out;
  std::array<int, kNumClasses> n_present{};
  for (const auto& r : reports) {
    out.dice += r.dice;
    out.miou += r.miou;
    for (int c = 0; c < kNumClasses; ++c) {
      if (!r.present[c]) continue;
      out.present[c] = true;
      out.per_class_dice[c] += r.per_class_dice[c];
      out.per_class_iou[c] += r.per_class_iou[c];
      ++n_present[c];
    }
  }
  const double n = static_cast<double>(reports.size());
  out.dice /= n;
  out.miou /= n;
  for (int c = 0; c < kNumClasses; ++c) {
    if (n_present[c] == 0) {
      out.per_class_dice[c] = 1.0;
      out.per_class_iou[c] = 1.0;
    } else {
      out.per_class_dice[c] /= n_present[c];
      out.per_class_iou[c] /= n_present[c];
    }
  }
  return out;
}

std::string MetricReport::csv_header() {
  std::string h = "config_id,dice,miou";
  for (int c = 0; c < kNumClasses; ++c) h += ",iou_" + std::to_string(c);
  return h;
}

std::string MetricReport::csv_row(const std::string& config_id) const {
  std::string row = config_id;
  char buf[32];
  auto append = [&](double v) {
    std::snprintf(buf, sizeof buf, ",%.6f", v);
    row += buf;
  };
  append(dice);
  append(miou);
  for (double v : per_class_iou) append(v);
  return row;
}

void validate_palette(const Palette& palette) {
  for (int i = 0; i < kNumClasses; ++i) {
    for (int j = 0; j < i; ++j) {
      if (palette[i] == palette[j]) throw std::invalid_argument("palette colours must be distinct");
    }
  }
}

LabelMap decode_rgb_to_labels(const RgbImage& rgb, const Palette& palette) {
  validate_palette(palette);
  LabelMap out(rgb.rows(), rgb.cols());
  auto src = rgb.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < src.size(); ++i) {
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (int c = 0; c < kNumClasses; ++c) {
      const double dr = src[i].r - palette[c].r;
      const double dg = src[i].g - palette[c].g;
      const double db = src[i].b - palette[c].b;
      const double d = dr * dr + dg * dg + db * db;
      if (d < best_d) {
        best_d = d;
        best = c;
      }
    }
    dst[i] = static_cast<std::uint8_t>(best);
  }
  return out;
}

}  // namespace retinagan
