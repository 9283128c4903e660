#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "retinagan/image.hpp"
#include "retinagan/phantom.hpp"

namespace retinagan {

inline constexpr int kPatchSize = 224;
inline constexpr int kInputSize = 56;
inline constexpr int kUpscale = 4;
inline constexpr double kPatchOverlap = 0.75;

// ---- preprocessing -------------------------------------------------------

/// 3x3 median with edge replication. Requires at least 3x3 input.
Image median_filter3(const Image& image);

/// Separable Gaussian blur, kernel radius ceil(3 sigma), edge replication.
Image gaussian_blur(const Image& image, double sigma);

/// clamp(image + amount * (image - gaussian_blur(image, sigma)), 0, 1)
Image unsharp_mask(const Image& image, double sigma = 1.0, double amount = 1.0);

struct PreprocessOptions {
  double unsharp_sigma = 1.0;
  double unsharp_amount = 1.0;
};

/// median_filter3 then unsharp_mask; labels pass through untouched.
Scan preprocess(const Scan& scan, const PreprocessOptions& options = {});

// ---- augmentation --------------------------------------------------------

struct AugmentOp {
  enum class Kind { identity, hflip, rotate, translate };
  Kind kind = Kind::identity;
  double angle_deg = 0.0;  // rotate: counter-clockwise, about the image centre
  double dx = 0.0;         // translate: columns
  double dy = 0.0;         // translate: rows

  static AugmentOp identity() { return {}; }
  static AugmentOp hflip() { return {Kind::hflip}; }
  static AugmentOp rotate(double deg) { return {Kind::rotate, deg}; }
  static AugmentOp translate(double dx, double dy) { return {Kind::translate, 0.0, dx, dy}; }

  /// e.g. "identity", "hflip", "rotate(-7.25)", "translate(3.5,-12)".
  std::string describe() const;
};

/// Maximum rotation magnitude.
inline constexpr double kMaxRotationDeg = 15.0;
/// Default translation range, as a fraction of the frame size.
inline constexpr double kTranslateFraction = 0.10;

struct LabeledImage {
  Image image;
  LabelMap labels;
};

/// Geometric transform with bilinear sampling (image, reflected border) and
/// nearest-neighbour sampling (labels, background outside the frame), both
/// driven by the same parameters.
LabeledImage augment(const LabeledImage& input, const AugmentOp& op);

/// Draws concrete parameters for `kind`: angle uniform in [-15, 15] degrees,
/// translation uniform within +/-10% of the frame in each axis.
AugmentOp sample_augment(AugmentOp::Kind kind, int rows, int cols, std::uint64_t seed);

// ---- patching ------------------------------------------------------------

struct PatchOffset {
  int row = 0;
  int col = 0;
  friend bool operator==(const PatchOffset&, const PatchOffset&) = default;
};

/// Row-major window origins at stride patch * (1 - overlap), with a final
/// border-clamped window on each axis when the range is not a stride multiple.
std::vector<PatchOffset> patch_offsets(int rows, int cols, int patch = kPatchSize,
                                       double overlap = kPatchOverlap);

template <typename T>
std::vector<std::pair<PatchOffset, Grid<T>>> extract_patches(const Grid<T>& src, int patch = kPatchSize,
                                                             double overlap = kPatchOverlap) {
  std::vector<std::pair<PatchOffset, Grid<T>>> out;
  for (const PatchOffset& o : patch_offsets(src.rows(), src.cols(), patch, overlap)) {
    out.emplace_back(o, crop(src, o.row, o.col, patch, patch));
  }
  return out;
}

/// Mean over non-overlapping factor x factor blocks.
Image downsample_area(const Image& image, int factor);
/// 224x224 -> 56x56 area average.
Image downsample4(const Image& patch224);
/// Block-wise majority vote; ties go to the lower class index.
LabelMap downsample_majority(const LabelMap& labels, int factor);

// ---- patch dataset -------------------------------------------------------

struct Provenance {
  std::string scan_id;
  std::string patient_id;
  PatchOffset offset;
  std::string augmentation;
};

struct PatchPair {
  std::string id;
  Image input_lr;            // 56x56
  LabelMap target_label_hr;  // 224x224
  Provenance provenance;

  /// Palette rendering of target_label_hr.
  RgbImage target_rgb_hr() const { return render_rgb(target_label_hr); }
};

/// Augmentations applied to every scan; each entry yields one augmented copy.
struct AugmentPlan {
  std::vector<AugmentOp::Kind> ops{AugmentOp::Kind::identity};
  std::uint64_t seed = 0;

  static AugmentPlan identity_only() { return {}; }
  /// identity, hflip, rotate, translate.
  static AugmentPlan full(std::uint64_t seed = 0);
};

struct DatasetStats {
  std::size_t n_scans = 0;
  std::size_t n_augmented = 0;
  std::size_t n_pairs = 0;
  std::array<std::uint64_t, kNumClasses> class_pixels{};

  std::string to_json() const;
};

struct PatchDataset {
  std::vector<PatchPair> pairs;
  DatasetStats stats;
};

/// Scans must already be preprocessed. For each scan and each plan entry:
/// augment, slide the 224 window, and synthesize input_lr with downsample4.
PatchDataset build_patch_dataset(const std::vector<Scan>& scans, const AugmentPlan& plan,
                                 double overlap = kPatchOverlap);

// ---- splitting -----------------------------------------------------------

enum class SplitPolicy { by_patient, by_patch };

struct SplitManifest {
  std::vector<std::string> train;
  std::vector<std::string> test;
  SplitPolicy policy = SplitPolicy::by_patient;
};

/// by_patient keeps every patch of a patient on one side, with
/// round(ratio * n_patients) patients in train (at least one per side).
/// by_patch splits the shuffled pairs at round(ratio * n_pairs).
SplitManifest split_dataset(const std::vector<PatchPair>& pairs, double ratio = 0.8,
                            SplitPolicy policy = SplitPolicy::by_patient, std::uint64_t seed = 0);

/// Pairs whose id is listed in `ids`, in the order of `ids`.
std::vector<PatchPair> select_pairs(const std::vector<PatchPair>& pairs, const std::vector<std::string>& ids);

std::string to_string(SplitPolicy policy);
SplitPolicy split_policy_from_string(const std::string& name);

// ---- patch store ---------------------------------------------------------

/// <dir>/<split>/{input,label,rgb}/<id>.png plus <dir>/manifest.json and
/// <dir>/stats.json. Inputs are stored as 16-bit PNG.
void write_patch_store(const std::filesystem::path& dir, const std::vector<PatchPair>& pairs,
                       const SplitManifest& split, const DatasetStats& stats);

struct PatchStore {
  std::vector<PatchPair> train;
  std::vector<PatchPair> test;
  SplitPolicy policy = SplitPolicy::by_patient;
};
PatchStore read_patch_store(const std::filesystem::path& dir);

}  // namespace retinagan
