#include "retinagan/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>
#include <set>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "retinagan/io.hpp"
#include "retinagan/random.hpp"

namespace retinagan {

// ---- preprocessing -------------------------------------------------------

Image median_filter3(const Image& image) {
  if (image.rows() < 3 || image.cols() < 3) {
    throw std::invalid_argument("median_filter3: image must be at least 3x3");
  }
  Image out(image.rows(), image.cols());
  std::array<double, 9> window{};
  for (int r = 0; r < image.rows(); ++r) {
    for (int c = 0; c < image.cols(); ++c) {
      int k = 0;
      for (int dr = -1; dr <= 1; ++dr) {
        for (int dc = -1; dc <= 1; ++dc) window[k++] = image.clamped(r + dr, c + dc);
      }
      std::nth_element(window.begin(), window.begin() + 4, window.end());
      out(r, c) = window[4];
    }
  }
  return out;
}

Image gaussian_blur(const Image& image, double sigma) {
  if (!(sigma > 0.0)) throw std::invalid_argument("gaussian_blur: sigma must be positive");
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    sum += kernel[i + radius];
  }
  for (double& k : kernel) k /= sum;

  Image tmp(image.rows(), image.cols());
  for (int r = 0; r < image.rows(); ++r) {
    for (int c = 0; c < image.cols(); ++c) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) acc += kernel[i + radius] * image.clamped(r, c + i);
      tmp(r, c) = acc;
    }
  }
  Image out(image.rows(), image.cols());
  for (int r = 0; r < image.rows(); ++r) {
    for (int c = 0; c < image.cols(); ++c) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) acc += kernel[i + radius] * tmp.clamped(r + i, c);
      out(r, c) = acc;
    }
  }
  return out;
}

Image unsharp_mask(const Image& image, double sigma, double amount) {
  if (!(amount >= 0.0)) throw std::invalid_argument("unsharp_mask: amount must be >= 0");
  const Image blurred = gaussian_blur(image, sigma);
  Image out(image.rows(), image.cols());
  auto src = image.data();
  auto blur = blurred.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < dst.size(); ++i) {
    dst[i] = std::clamp(src[i] + amount * (src[i] - blur[i]), 0.0, 1.0);
  }
  return out;
}

Scan preprocess(const Scan& scan, const PreprocessOptions& options) {
  Scan out = scan;
  out.image = unsharp_mask(median_filter3(scan.image), options.unsharp_sigma, options.unsharp_amount);
  return out;
}

// ---- augmentation --------------------------------------------------------

std::string AugmentOp::describe() const {
  char buf[96];
  switch (kind) {
    case Kind::identity:
      return "identity";
    case Kind::hflip:
      return "hflip";
    case Kind::rotate:
      std::snprintf(buf, sizeof buf, "rotate(%.6g)", angle_deg);
      return buf;
    case Kind::translate:
      std::snprintf(buf, sizeof buf, "translate(%.6g,%.6g)", dx, dy);
      return buf;
  }
  return "unknown";
}

namespace {

/// Symmetric reflection of a continuous pixel-centre coordinate into [0, n-1].
double reflect_coord(double x, int n) {
  if (n == 1) return 0.0;
  const double period = 2.0 * (n - 1);
  x = std::fmod(std::abs(x), period);
  return x > n - 1 ? period - x : x;
}

double sample_bilinear_reflect(const Image& img, double y, double x) {
  y = reflect_coord(y, img.rows());
  x = reflect_coord(x, img.cols());
  const int y0 = static_cast<int>(std::floor(y));
  const int x0 = static_cast<int>(std::floor(x));
  const double fy = y - y0;
  const double fx = x - x0;
  const double a = img.clamped(y0, x0), b = img.clamped(y0, x0 + 1);
  const double c = img.clamped(y0 + 1, x0), d = img.clamped(y0 + 1, x0 + 1);
  return (1 - fy) * ((1 - fx) * a + fx * b) + fy * ((1 - fx) * c + fx * d);
}

std::uint8_t sample_nearest_or_background(const LabelMap& labels, double y, double x) {
  const long r = std::lround(y);
  const long c = std::lround(x);
  if (r < 0 || c < 0 || r >= labels.rows() || c >= labels.cols()) return 0;
  return labels(static_cast<int>(r), static_cast<int>(c));
}

template <typename SourceCoord>
LabeledImage resample(const LabeledImage& in, SourceCoord source) {
  const int rows = in.image.rows();
  const int cols = in.image.cols();
  LabeledImage out{Image(rows, cols), LabelMap(rows, cols)};
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const auto [y, x] = source(r, c);
      out.image(r, c) = sample_bilinear_reflect(in.image, y, x);
      out.labels(r, c) = sample_nearest_or_background(in.labels, y, x);
    }
  }
  return out;
}

}  // namespace

LabeledImage augment(const LabeledImage& input, const AugmentOp& op) {
  if (!input.image.same_shape(input.labels)) {
    throw std::invalid_argument("augment: image and labels differ in size");
  }
  const int rows = input.image.rows();
  const int cols = input.image.cols();
  switch (op.kind) {
    case AugmentOp::Kind::identity:
      return input;
    case AugmentOp::Kind::hflip: {
      LabeledImage out{Image(rows, cols), LabelMap(rows, cols)};
      for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
          out.image(r, c) = input.image(r, cols - 1 - c);
          out.labels(r, c) = input.labels(r, cols - 1 - c);
        }
      }
      return out;
    }
    case AugmentOp::Kind::rotate: {
      const double theta = op.angle_deg * std::numbers::pi / 180.0;
      const double cs = std::cos(theta), sn = std::sin(theta);
      const double cy = (rows - 1) / 2.0, cx = (cols - 1) / 2.0;
      return resample(input, [&](int r, int c) {
        const double dy = r - cy, dx = c - cx;
        return std::pair{cy - sn * dx + cs * dy, cx + cs * dx + sn * dy};
      });
    }
    case AugmentOp::Kind::translate:
      return resample(input, [&](int r, int c) { return std::pair{r - op.dy, c - op.dx}; });
  }
  throw std::invalid_argument("augment: unknown op");
}

AugmentOp sample_augment(AugmentOp::Kind kind, int rows, int cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  switch (kind) {
    case AugmentOp::Kind::identity:
      return AugmentOp::identity();
    case AugmentOp::Kind::hflip:
      return AugmentOp::hflip();
    case AugmentOp::Kind::rotate:
      return AugmentOp::rotate(kMaxRotationDeg * unit(rng));
    case AugmentOp::Kind::translate: {
      const double dx = kTranslateFraction * cols * unit(rng);
      const double dy = kTranslateFraction * rows * unit(rng);
      return AugmentOp::translate(dx, dy);
    }
  }
  throw std::invalid_argument("sample_augment: unknown op");
}

// ---- patching ------------------------------------------------------------

namespace {

std::vector<int> axis_offsets(int extent, int patch, int stride) {
  std::vector<int> out;
  for (int o = 0; o + patch <= extent; o += stride) out.push_back(o);
  if (out.back() != extent - patch) out.push_back(extent - patch);
  return out;
}

}  // namespace

std::vector<PatchOffset> patch_offsets(int rows, int cols, int patch, double overlap) {
  if (patch <= 0) throw std::invalid_argument("patch_offsets: patch must be positive");
  if (!(overlap >= 0.0 && overlap < 1.0)) throw std::invalid_argument("patch_offsets: overlap must be in [0,1)");
  if (rows < patch || cols < patch) throw std::invalid_argument("patch_offsets: input smaller than patch");
  const int stride = std::max(1, static_cast<int>(std::lround(patch * (1.0 - overlap))));
  std::vector<PatchOffset> out;
  for (int r : axis_offsets(rows, patch, stride)) {
    for (int c : axis_offsets(cols, patch, stride)) out.push_back({r, c});
  }
  return out;
}

Image downsample_area(const Image& image, int factor) {
  if (factor <= 0 || image.rows() % factor != 0 || image.cols() % factor != 0) {
    throw std::invalid_argument("downsample_area: size not divisible by factor");
  }
  Image out(image.rows() / factor, image.cols() / factor);
  const double inv = 1.0 / (factor * factor);
  for (int r = 0; r < out.rows(); ++r) {
    for (int c = 0; c < out.cols(); ++c) {
      double acc = 0.0;
      for (int i = 0; i < factor; ++i) {
        for (int j = 0; j < factor; ++j) acc += image(r * factor + i, c * factor + j);
      }
      out(r, c) = acc * inv;
    }
  }
  return out;
}

Image downsample4(const Image& patch224) {
  if (patch224.rows() != kPatchSize || patch224.cols() != kPatchSize) {
    throw std::invalid_argument("downsample4: expected a 224x224 patch");
  }
  return downsample_area(patch224, kUpscale);
}

LabelMap downsample_majority(const LabelMap& labels, int factor) {
  if (factor <= 0 || labels.rows() % factor != 0 || labels.cols() % factor != 0) {
    throw std::invalid_argument("downsample_majority: size not divisible by factor");
  }
  LabelMap out(labels.rows() / factor, labels.cols() / factor);
  for (int r = 0; r < out.rows(); ++r) {
    for (int c = 0; c < out.cols(); ++c) {
      std::array<int, 256> counts{};
      for (int i = 0; i < factor; ++i) {
        for (int j = 0; j < factor; ++j) ++counts[labels(r * factor + i, c * factor + j)];
      }
      int best = 0;
      for (int k = 1; k < 256; ++k) {
        if (counts[k] > counts[best]) best = k;
      }
      out(r, c) = static_cast<std::uint8_t>(best);
    }
  }
  return out;
}

// ---- patch dataset -------------------------------------------------------

AugmentPlan AugmentPlan::full(std::uint64_t seed) {
  return {{AugmentOp::Kind::identity, AugmentOp::Kind::hflip, AugmentOp::Kind::rotate,
           AugmentOp::Kind::translate},
          seed};
}

std::string DatasetStats::to_json() const {
  nlohmann::json j{{"n_scans", n_scans},
                   {"n_augmented", n_augmented},
                   {"n_pairs", n_pairs},
                   {"class_pixels", class_pixels}};
  return j.dump(2);
}

PatchDataset build_patch_dataset(const std::vector<Scan>& scans, const AugmentPlan& plan, double overlap) {
  if (plan.ops.empty()) throw std::invalid_argument("build_patch_dataset: empty augmentation plan");
  PatchDataset out;
  out.stats.n_scans = scans.size();
  for (std::size_t s = 0; s < scans.size(); ++s) {
    const Scan& scan = scans[s];
    for (std::size_t a = 0; a < plan.ops.size(); ++a) {
      const AugmentOp op =
          sample_augment(plan.ops[a], scan.image.rows(), scan.image.cols(),
                         derive_seed(plan.seed, {hash_string(scan.scan_id), static_cast<std::uint64_t>(a)}));
      const LabeledImage aug = augment({scan.image, scan.labels}, op);
      ++out.stats.n_augmented;
      for (const PatchOffset& o : patch_offsets(aug.image.rows(), aug.image.cols(), kPatchSize, overlap)) {
        PatchPair pair;
        char id[160];
        std::snprintf(id, sizeof id, "%s_a%zu_r%03d_c%03d", scan.scan_id.c_str(), a, o.row, o.col);
        pair.id = id;
        pair.input_lr = downsample4(crop(aug.image, o.row, o.col, kPatchSize, kPatchSize));
        pair.target_label_hr = crop(aug.labels, o.row, o.col, kPatchSize, kPatchSize);
        pair.provenance = {scan.scan_id, scan.patient_id, o, op.describe()};
        for (std::uint8_t v : pair.target_label_hr.data()) ++out.stats.class_pixels[v];
        out.pairs.push_back(std::move(pair));
      }
    }
  }
  out.stats.n_pairs = out.pairs.size();
  return out;
}

// ---- splitting -----------------------------------------------------------

std::string to_string(SplitPolicy policy) {
  return policy == SplitPolicy::by_patient ? "by-patient" : "by-patch";
}

SplitPolicy split_policy_from_string(const std::string& name) {
  if (name == "by-patient" || name == "by_patient") return SplitPolicy::by_patient;
  if (name == "by-patch" || name == "by_patch") return SplitPolicy::by_patch;
  throw std::invalid_argument("unknown split policy: " + name);
}

SplitManifest split_dataset(const std::vector<PatchPair>& pairs, double ratio, SplitPolicy policy,
                            std::uint64_t seed) {
  if (pairs.empty()) throw std::invalid_argument("split_dataset: no pairs");
  if (!(ratio > 0.0 && ratio < 1.0)) throw std::invalid_argument("split_dataset: ratio must be in (0,1)");
  std::mt19937_64 rng(derive_seed(seed, {hash_string("split")}));
  SplitManifest m;
  m.policy = policy;
  if (policy == SplitPolicy::by_patch) {
    std::vector<std::size_t> order(pairs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);
    const auto n_train = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(pairs.size())));
    for (std::size_t i = 0; i < order.size(); ++i) {
      (i < n_train ? m.train : m.test).push_back(pairs[order[i]].id);
    }
    return m;
  }

  std::vector<std::string> patients;
  {
    std::set<std::string> unique;
    for (const auto& p : pairs) unique.insert(p.provenance.patient_id);
    patients.assign(unique.begin(), unique.end());
  }
  if (patients.size() < 2) {
    throw std::invalid_argument("split_dataset: by-patient split needs at least 2 patients");
  }
  std::shuffle(patients.begin(), patients.end(), rng);
  const long n = static_cast<long>(patients.size());
  const long n_train = std::clamp<long>(std::lround(ratio * static_cast<double>(n)), 1, n - 1);
  std::unordered_set<std::string> train_patients(patients.begin(), patients.begin() + n_train);
  for (const auto& p : pairs) {
    (train_patients.count(p.provenance.patient_id) ? m.train : m.test).push_back(p.id);
  }
  return m;
}

std::vector<PatchPair> select_pairs(const std::vector<PatchPair>& pairs, const std::vector<std::string>& ids) {
  std::unordered_map<std::string, const PatchPair*> index;
  for (const auto& p : pairs) index.emplace(p.id, &p);
  std::vector<PatchPair> out;
  out.reserve(ids.size());
  for (const auto& id : ids) {
    auto it = index.find(id);
    if (it == index.end()) throw std::invalid_argument("select_pairs: unknown id " + id);
    out.push_back(*it->second);
  }
  return out;
}

// ---- patch store ---------------------------------------------------------

void write_patch_store(const std::filesystem::path& dir, const std::vector<PatchPair>& pairs,
                       const SplitManifest& split, const DatasetStats& stats) {
  namespace fs = std::filesystem;
  nlohmann::json manifest;
  manifest["policy"] = to_string(split.policy);
  manifest["patch_size"] = kPatchSize;
  manifest["input_size"] = kInputSize;
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& [split_name, ids] : {std::pair{"train", &split.train}, std::pair{"test", &split.test}}) {
    const fs::path root = dir / split_name;
    for (const char* sub : {"input", "label", "rgb"}) fs::create_directories(root / sub);
    for (const PatchPair& p : select_pairs(pairs, *ids)) {
      const std::string file = p.id + ".png";
      io::write_gray16(root / "input" / file, p.input_lr);
      io::write_labels(root / "label" / file, p.target_label_hr);
      io::write_rgb8(root / "rgb" / file, p.target_rgb_hr());
      entries.push_back({{"id", p.id},
                         {"split", split_name},
                         {"scan_id", p.provenance.scan_id},
                         {"patient_id", p.provenance.patient_id},
                         {"row", p.provenance.offset.row},
                         {"col", p.provenance.offset.col},
                         {"augmentation", p.provenance.augmentation},
                         {"input", (fs::path(split_name) / "input" / file).generic_string()},
                         {"label", (fs::path(split_name) / "label" / file).generic_string()},
                         {"rgb", (fs::path(split_name) / "rgb" / file).generic_string()}});
    }
  }
  manifest["pairs"] = std::move(entries);
  std::ofstream(dir / "manifest.json") << manifest.dump(2) << '\n';
  std::ofstream(dir / "stats.json") << stats.to_json() << '\n';
}

PatchStore read_patch_store(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw std::runtime_error("read_patch_store: missing " + (dir / "manifest.json").string());
  const nlohmann::json manifest = nlohmann::json::parse(in);
  PatchStore store;
  store.policy = split_policy_from_string(manifest.at("policy").get<std::string>());
  for (const auto& e : manifest.at("pairs")) {
    PatchPair p;
    p.id = e.at("id").get<std::string>();
    p.provenance.scan_id = e.at("scan_id").get<std::string>();
    p.provenance.patient_id = e.at("patient_id").get<std::string>();
    p.provenance.offset = {e.at("row").get<int>(), e.at("col").get<int>()};
    p.provenance.augmentation = e.at("augmentation").get<std::string>();
    p.input_lr = io::read_gray(dir / e.at("input").get<std::string>());
    p.target_label_hr = io::read_labels(dir / e.at("label").get<std::string>());
    const std::string split = e.at("split").get<std::string>();
    (split == "train" ? store.train : store.test).push_back(std::move(p));
  }
  return store;
}

}  // namespace retinagan
