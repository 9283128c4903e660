#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "retinagan/image.hpp"

namespace retinagan {

/// Parameters of the synthetic layered-retina B-scan generator.
struct PhantomConfig {
  int height = 448;
  int width = 448;
  int n_layers = 7;
  /// Lower bound on every layer's thickness, in pixels, at every column.
  double min_thickness = 8.0;
  /// Horizontal spacing of the boundary spline control points, in pixels.
  double boundary_smoothness = 48.0;
  double speckle_strength = 0.15;
  /// Mean gray level per class (background first).
  std::array<double, kNumClasses> intensity_palette{0.06, 0.92, 0.70, 0.42, 0.60, 0.24, 0.52, 0.34};
  std::uint64_t seed = 1;

  /// Throws std::invalid_argument when an invariant is violated.
  void validate() const;
};

struct Scan {
  Image image;
  LabelMap labels;
  std::string scan_id;
  std::string patient_id;
  std::uint64_t seed = 0;
};

/// Renders one scan. Class boundaries are interpolating cubic splines through
/// jittered control points; each band takes its palette intensity and the
/// result is speckled. Deterministic in config.seed.
Scan generate_scan(const PhantomConfig& config);

/// Multiplicative speckle, out = clamp(image * n, 0, 1), where
/// n = 1 + strength * (z^2 - 1) / sqrt(2) with z standard normal, so E[n] = 1
/// and Var[n] = strength^2.
Image add_speckle(const Image& image, double strength, std::uint64_t seed);

/// n_patients x scans_per_patient scans, each seeded from (config.seed, patient, scan).
std::vector<Scan> generate_dataset(int n_patients, int scans_per_patient, const PhantomConfig& config);

/// Writes <dir>/images/<scan_id>.png, <dir>/labels/<scan_id>.png and <dir>/manifest.json.
void write_dataset(const std::vector<Scan>& scans, const std::filesystem::path& dir,
                   const PhantomConfig& config);
std::vector<Scan> read_dataset(const std::filesystem::path& dir);

}  // namespace retinagan
