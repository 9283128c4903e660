#include "retinagan/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "retinagan/io.hpp"
#include "retinagan/random.hpp"

namespace retinagan {
namespace {

/// Interpolating cubic (Catmull-Rom) curve through equally spaced control
/// values, sampled at every pixel column.
std::vector<double> spline_curve(const std::vector<double>& knots, double spacing, int width) {
  std::vector<double> out(width);
  const int n = static_cast<int>(knots.size());
  auto knot = [&](int i) { return knots[std::clamp(i, 0, n - 1)]; };
  for (int x = 0; x < width; ++x) {
    const double pos = (x + 0.5) / spacing;
    const int i = static_cast<int>(std::floor(pos));
    const double t = pos - i;
    const double p0 = knot(i - 1), p1 = knot(i), p2 = knot(i + 1), p3 = knot(i + 2);
    out[x] = 0.5 * ((2.0 * p1) + (-p0 + p2) * t + (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) * t * t +
                    (-p0 + 3.0 * p1 - 3.0 * p2 + p3) * t * t * t);
  }
  return out;
}

std::vector<double> jittered_curve(std::mt19937_64& rng, double mean, double stddev, double spacing,
                                   int width) {
  const int n_knots = static_cast<int>(std::ceil(width / spacing)) + 2;
  std::normal_distribution<double> jitter(0.0, stddev);
  std::vector<double> knots(n_knots);
  for (auto& k : knots) k = mean + jitter(rng);
  return spline_curve(knots, spacing, width);
}

}  // namespace

void PhantomConfig::validate() const {
  if (height <= 0 || width <= 0) throw std::invalid_argument("PhantomConfig: dimensions must be positive");
  if (n_layers != kNumClasses - 1) throw std::invalid_argument("PhantomConfig: n_layers must be 7");
  if (!(min_thickness > 0.0)) throw std::invalid_argument("PhantomConfig: min_thickness must be positive");
  if (!(min_thickness * n_layers < height)) {
    throw std::invalid_argument("PhantomConfig: layers do not fit (min_thickness * 7 >= height)");
  }
  if (!(boundary_smoothness >= 1.0)) throw std::invalid_argument("PhantomConfig: boundary_smoothness < 1");
  if (!(speckle_strength >= 0.0)) throw std::invalid_argument("PhantomConfig: speckle_strength < 0");
  for (std::size_t i = 0; i < intensity_palette.size(); ++i) {
    if (intensity_palette[i] < 0.0 || intensity_palette[i] > 1.0) {
      throw std::invalid_argument("PhantomConfig: palette intensity outside [0,1]");
    }
    for (std::size_t j = 0; j < i; ++j) {
      if (intensity_palette[i] == intensity_palette[j]) {
        throw std::invalid_argument("PhantomConfig: palette intensities must be pairwise distinct");
      }
    }
  }
}

Image add_speckle(const Image& image, double strength, std::uint64_t seed) {
  if (!(strength >= 0.0)) throw std::invalid_argument("add_speckle: strength must be >= 0");
  Image out = image;
  if (strength == 0.0) return out;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double scale = strength / std::sqrt(2.0);
  for (double& v : out.data()) {
    const double z = normal(rng);
    v = std::clamp(v * (1.0 + scale * (z * z - 1.0)), 0.0, 1.0);
  }
  return out;
}

Scan generate_scan(const PhantomConfig& config) {
  config.validate();
  const int h = config.height;
  const int w = config.width;
  const double min_t = config.min_thickness;
  const int n_layers = config.n_layers;
  std::mt19937_64 rng(derive_seed(config.seed, {1}));
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  // Part 0 is the background band above the retina; parts 1..6 are layer
  // thicknesses. The last layer runs to the bottom of the frame.
  std::vector<std::vector<double>> parts;
  const double top_mean = 0.22 * h;
  parts.push_back(jittered_curve(rng, top_mean, 0.05 * h, config.boundary_smoothness, w));
  const double layer_mean = std::max(min_t * 1.5, 0.075 * h);
  for (int k = 1; k < n_layers; ++k) {
    const double mean = layer_mean * (0.7 + 0.6 * unit(rng));
    parts.push_back(jittered_curve(rng, mean, 0.2 * mean, config.boundary_smoothness, w));
  }

  const double background_min = 1.0;
  const double budget = h - min_t - background_min - min_t * (n_layers - 1);
  std::vector<std::vector<double>> boundaries(n_layers, std::vector<double>(w));
  for (int x = 0; x < w; ++x) {
    std::vector<double> excess(parts.size());
    double total_excess = 0.0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
      const double floor_k = k == 0 ? background_min : min_t;
      excess[k] = std::max(0.0, parts[k][x] - floor_k);
      total_excess += excess[k];
    }
    const double shrink = total_excess > budget ? budget / total_excess : 1.0;
    double y = 0.0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
      y += (k == 0 ? background_min : min_t) + excess[k] * shrink;
      boundaries[k][x] = y;
    }
  }

  Scan scan;
  scan.seed = config.seed;
  scan.scan_id = "scan";
  scan.patient_id = "patient";
  scan.labels = LabelMap(h, w);
  Image clean(h, w);
  for (int x = 0; x < w; ++x) {
    for (int r = 0; r < h; ++r) {
      const double centre = r + 0.5;
      int cls = 0;
      while (cls < n_layers && boundaries[cls][x] <= centre) ++cls;
      scan.labels(r, x) = static_cast<std::uint8_t>(cls);
      clean(r, x) = config.intensity_palette[cls];
    }
  }
  scan.image = add_speckle(clean, config.speckle_strength, derive_seed(config.seed, {2}));
  return scan;
}

std::vector<Scan> generate_dataset(int n_patients, int scans_per_patient, const PhantomConfig& config) {
  if (n_patients <= 0 || scans_per_patient <= 0) {
    throw std::invalid_argument("generate_dataset: counts must be positive");
  }
  std::vector<Scan> scans;
  scans.reserve(static_cast<std::size_t>(n_patients) * scans_per_patient);
  for (int p = 0; p < n_patients; ++p) {
    for (int s = 0; s < scans_per_patient; ++s) {
      PhantomConfig c = config;
      c.seed = derive_seed(config.seed, {static_cast<std::uint64_t>(p), static_cast<std::uint64_t>(s)});
      Scan scan = generate_scan(c);
      char pid[32];
      char sid[48];
      std::snprintf(pid, sizeof pid, "P%03d", p);
      std::snprintf(sid, sizeof sid, "P%03d_S%02d", p, s);
      scan.patient_id = pid;
      scan.scan_id = sid;
      scans.push_back(std::move(scan));
    }
  }
  return scans;
}

void write_dataset(const std::vector<Scan>& scans, const std::filesystem::path& dir,
                   const PhantomConfig& config) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "images");
  fs::create_directories(dir / "labels");
  nlohmann::json manifest;
  manifest["generator"] = {{"height", config.height},
                           {"width", config.width},
                           {"n_layers", config.n_layers},
                           {"min_thickness", config.min_thickness},
                           {"boundary_smoothness", config.boundary_smoothness},
                           {"speckle_strength", config.speckle_strength},
                           {"intensity_palette", config.intensity_palette},
                           {"seed", config.seed}};
  nlohmann::json entries = nlohmann::json::array();
  for (const Scan& s : scans) {
    const fs::path image_rel = fs::path("images") / (s.scan_id + ".png");
    const fs::path label_rel = fs::path("labels") / (s.scan_id + ".png");
    io::write_gray8(dir / image_rel, s.image);
    io::write_labels(dir / label_rel, s.labels);
    entries.push_back({{"scan_id", s.scan_id},
                       {"patient_id", s.patient_id},
                       {"image", image_rel.generic_string()},
                       {"labels", label_rel.generic_string()},
                       {"seed", s.seed}});
  }
  manifest["scans"] = std::move(entries);
  std::ofstream(dir / "manifest.json") << manifest.dump(2) << '\n';
}

std::vector<Scan> read_dataset(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw std::runtime_error("read_dataset: missing " + (dir / "manifest.json").string());
  const nlohmann::json manifest = nlohmann::json::parse(in);
  std::vector<Scan> scans;
  for (const auto& e : manifest.at("scans")) {
    Scan s;
    s.scan_id = e.at("scan_id").get<std::string>();
    s.patient_id = e.at("patient_id").get<std::string>();
    s.seed = e.at("seed").get<std::uint64_t>();
    s.image = io::read_gray(dir / e.at("image").get<std::string>());
    s.labels = io::read_labels(dir / e.at("labels").get<std::string>());
    if (!s.image.same_shape(s.labels)) {
      throw std::runtime_error("read_dataset: image/label size mismatch for " + s.scan_id);
    }
    scans.push_back(std::move(s));
  }
  return scans;
}

}  // namespace retinagan
