#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "retinagan/generators.hpp"
#include "retinagan/metrics.hpp"
#include "retinagan/phantom.hpp"
#include "retinagan/pipeline.hpp"
#include "retinagan/srbaseline.hpp"
#include "retinagan/trainer.hpp"

namespace retinagan {

enum class PipelineKind {
  no_sr,           // 56x56 segmentation scored against 56x56 labels
  disjoint_srcnn,  // 56x56 segmentation, bicubic x4, SR-CNN refinement
  joint,           // generator upsamples x4 itself
};

std::string to_string(PipelineKind p);
PipelineKind pipeline_from_string(const std::string& s);

/// End-to-end phantom data: generate, preprocess, patch, split.
struct DataRecipe {
  int n_patients = 10;
  int scans_per_patient = 1;
  PhantomConfig phantom;
  PreprocessOptions preprocess;
  bool augment = false;
  double overlap = kPatchOverlap;
  double train_ratio = 0.8;
  SplitPolicy policy = SplitPolicy::by_patient;
  std::uint64_t seed = 0;
};

nlohmann::json to_json(const DataRecipe& r);

struct PreparedData {
  std::vector<PatchPair> train;
  std::vector<PatchPair> test;
  SplitManifest split;
  DatasetStats stats;
};

PreparedData prepare_phantom_data(const DataRecipe& recipe);

/// Patches, split and stats from already generated scans.
PreparedData prepare_data(const std::vector<Scan>& scans, const DataRecipe& recipe);

/// Published score of a grid row, for side-by-side display only.
struct PublishedScore {
  double dice = 0.0;
  double miou = 0.0;
};

/// Published score of the external ReLayNet comparison row.
inline constexpr PublishedScore kRelaynetReference{0.856, 0.751};

struct GridRow {
  PipelineKind pipeline = PipelineKind::joint;
  Arch arch = Arch::resnet;
  Upsampler upsampler = Upsampler::subpixel;
  bool use_dice = true;

  /// 1 for the no-SR / disjoint rows, 2 for the joint rows.
  int table() const { return pipeline == PipelineKind::joint ? 2 : 1; }
  /// Stable identifier, e.g. "joint-resnet-subpixel-dice".
  std::string id() const;
  /// Row label as printed in the published tables.
  std::string label() const;
  std::optional<PublishedScore> reference() const;
};

struct GridSpec {
  std::vector<GridRow> rows;
  TrainConfig train;
  Head head = Head::rgb;
  int base_width = 64;
  /// 0 selects the per-architecture default.
  int unet_depth = 0;
  int resnet_depth = 0;
  SrcnnConfig srcnn;
  SrcnnTrainConfig srcnn_train;
  std::filesystem::path output_dir;
  std::uint64_t seed = 0;
  /// Free-form description of where the data came from, copied into the manifest.
  nlohmann::json data_source = nlohmann::json::object();
};

/// 8 rows in the order of the disjoint-baseline table followed by the 8
/// joint rows.
std::vector<GridRow> default_grid_rows();
GridSpec default_grid_spec();

/// Reduced-scale data and grid: 6 patients of 280x280 scans (4 patches
/// each), narrow networks, one epoch per row.
DataRecipe smoke_data_recipe(std::uint64_t seed = 0);
GridSpec smoke_grid_spec(std::uint64_t seed = 0);

/// Seed of one row, derived from the grid seed and the row id only.
std::uint64_t row_seed(std::uint64_t grid_seed, const GridRow& row);

GeneratorConfig row_generator_config(const GridSpec& spec, const GridRow& row);
TrainConfig row_train_config(const GridSpec& spec, const GridRow& row);

struct ExperimentResult {
  std::string row_id;
  std::string label;
  int table = 0;
  PipelineKind pipeline = PipelineKind::joint;
  double dice = 0.0;
  double miou = 0.0;
  double train_seconds = 0.0;
  std::filesystem::path checkpoint;
  std::filesystem::path srcnn_checkpoint;
  std::optional<PublishedScore> published;
  std::uint64_t seed = 0;
  bool best_in_table = false;
  /// Empty on success.
  std::string error;
};

nlohmann::json to_json(const ExperimentResult& r);
ExperimentResult result_from_json(const nlohmann::json& j);

/// Trains and evaluates one row. Disjoint rows use `srcnn` (required).
ExperimentResult run_row(const GridSpec& spec, const GridRow& row, const std::vector<PatchPair>& train,
                         const std::vector<PatchPair>& test, Srcnn* srcnn);

/// Runs every row. The SR-CNN is trained once and shared by the disjoint
/// rows. A failing row is recorded with its error and the rest continue.
/// Writes results.json and the run manifest to spec.output_dir.
std::vector<ExperimentResult> run_grid(const GridSpec& spec, const std::vector<PatchPair>& train,
                                       const std::vector<PatchPair>& test);

/// Flags the highest-Dice successful row of each table.
void mark_best_rows(std::vector<ExperimentResult>& results);

std::string results_csv_header();
std::string results_csv(const std::vector<ExperimentResult>& results);

/// Everything needed to reproduce the grid: spec, per-row configs and seeds.
nlohmann::json run_manifest(const GridSpec& spec);

/// One row of image panels: input, ground truth, then each model's output.
struct ReportSample {
  std::string id;
  Image input_lr;
  LabelMap ground_truth;
  std::vector<LabelMap> outputs;  // 56x56 outputs are shown at x4 nearest
};

/// Panel width is (2 + outputs) * 224.
RgbImage render_panel(const ReportSample& sample);

/// Runs each successful row's checkpoint on `pairs`. Failed rows yield a
/// blank map so panel layout stays aligned with the results table.
std::vector<ReportSample> collect_samples(const std::vector<ExperimentResult>& results,
                                          const std::vector<PatchPair>& pairs);

/// Writes results.csv, report.md, run_manifest.json and panels/<id>.png.
void render_report(const std::vector<ExperimentResult>& results, const std::vector<ReportSample>& samples,
                   const nlohmann::json& manifest, const std::filesystem::path& dir);

void save_results(const std::filesystem::path& path, const std::vector<ExperimentResult>& results);
std::vector<ExperimentResult> load_results(const std::filesystem::path& path);

}  // namespace retinagan
