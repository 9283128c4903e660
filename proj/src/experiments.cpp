#include "retinagan/experiments.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>

#include "retinagan/io.hpp"
#include "retinagan/objectives.hpp"
#include "retinagan/random.hpp"

namespace retinagan {

std::string to_string(PipelineKind p) {
  switch (p) {
    case PipelineKind::no_sr:
      return "no_sr";
    case PipelineKind::disjoint_srcnn:
      return "disjoint_srcnn";
    case PipelineKind::joint:
      return "joint";
  }
  return "?";
}

PipelineKind pipeline_from_string(const std::string& s) {
  if (s == "no_sr") return PipelineKind::no_sr;
  if (s == "disjoint_srcnn") return PipelineKind::disjoint_srcnn;
  if (s == "joint") return PipelineKind::joint;
  throw std::invalid_argument("unknown pipeline: " + s);
}

nlohmann::json to_json(const DataRecipe& r) {
  return {{"n_patients", r.n_patients},
          {"scans_per_patient", r.scans_per_patient},
          {"height", r.phantom.height},
          {"width", r.phantom.width},
          {"n_layers", r.phantom.n_layers},
          {"min_thickness", r.phantom.min_thickness},
          {"boundary_smoothness", r.phantom.boundary_smoothness},
          {"speckle_strength", r.phantom.speckle_strength},
          {"intensity_palette", r.phantom.intensity_palette},
          {"phantom_seed", r.phantom.seed},
          {"unsharp_sigma", r.preprocess.unsharp_sigma},
          {"unsharp_amount", r.preprocess.unsharp_amount},
          {"augment", r.augment},
          {"overlap", r.overlap},
          {"train_ratio", r.train_ratio},
          {"split", to_string(r.policy)},
          {"seed", r.seed}};
}

PreparedData prepare_data(const std::vector<Scan>& scans, const DataRecipe& recipe) {
  std::vector<Scan> clean;
  clean.reserve(scans.size());
  for (const Scan& s : scans) clean.push_back(preprocess(s, recipe.preprocess));
  const AugmentPlan plan = recipe.augment ? AugmentPlan::full(derive_seed(recipe.seed, {hash_string("augment")}))
                                          : AugmentPlan::identity_only();
  PatchDataset ds = build_patch_dataset(clean, plan, recipe.overlap);
  PreparedData out;
  out.split = split_dataset(ds.pairs, recipe.train_ratio, recipe.policy, derive_seed(recipe.seed, {hash_string("split")}));
  out.train = select_pairs(ds.pairs, out.split.train);
  out.test = select_pairs(ds.pairs, out.split.test);
  out.stats = ds.stats;
  return out;
}

PreparedData prepare_phantom_data(const DataRecipe& recipe) {
  return prepare_data(generate_dataset(recipe.n_patients, recipe.scans_per_patient, recipe.phantom), recipe);
}

DataRecipe smoke_data_recipe(std::uint64_t seed) {
  DataRecipe r;
  r.n_patients = 6;
  r.phantom.height = 280;
  r.phantom.width = 280;
  r.phantom.seed = derive_seed(seed, {hash_string("phantom")});
  r.seed = seed;
  return r;
}

GridSpec smoke_grid_spec(std::uint64_t seed) {
  GridSpec spec = default_grid_spec();
  spec.seed = seed;
  spec.base_width = 8;
  spec.unet_depth = 2;
  spec.resnet_depth = 2;
  spec.train.epochs = 1;
  spec.train.batch_size = 4;
  spec.train.eval_batch_size = 4;
  spec.train.disc_base_width = 8;
  spec.srcnn.width1 = 8;
  spec.srcnn.width2 = 4;
  spec.srcnn_train.epochs = 1;
  return spec;
}

std::string GridRow::id() const {
  std::string id = to_string(pipeline) + "-" + to_string(arch);
  if (pipeline == PipelineKind::joint) id += "-" + to_string(upsampler);
  return id + (use_dice ? "-dice" : "-nodice");
}

std::string GridRow::label() const {
  const std::string prefix = use_dice ? "Added Dice | " : "No Dice | ";
  const std::string net = arch == Arch::unet ? "U-Net" : "ResNet";
  switch (pipeline) {
    case PipelineKind::no_sr:
      return prefix + "GAN(" + net + ")";
    case PipelineKind::disjoint_srcnn:
      return prefix + "GAN(" + net + ") then SR-CNN";
    case PipelineKind::joint:
      return prefix + "GAN(" + net + " + " +
             (upsampler == Upsampler::subpixel ? "Sub-pixel_Conv" : "Transposed_Conv") + ")";
  }
  return prefix;
}

std::optional<PublishedScore> GridRow::reference() const {
  const bool resnet = arch == Arch::resnet;
  switch (pipeline) {
    case PipelineKind::no_sr:
      if (!use_dice) return resnet ? PublishedScore{0.825, 0.690} : PublishedScore{0.816, 0.685};
      return resnet ? PublishedScore{0.833, 0.718} : PublishedScore{0.822, 0.710};
    case PipelineKind::disjoint_srcnn:
      if (!use_dice) return resnet ? PublishedScore{0.831, 0.692} : PublishedScore{0.814, 0.681};
      return resnet ? PublishedScore{0.838, 0.721} : PublishedScore{0.825, 0.709};
    case PipelineKind::joint: {
      if (upsampler == Upsampler::none) return std::nullopt;
      const bool sub = upsampler == Upsampler::subpixel;
      if (!use_dice) {
        if (resnet) return sub ? PublishedScore{0.855, 0.743} : PublishedScore{0.840, 0.729};
        return sub ? PublishedScore{0.831, 0.718} : PublishedScore{0.834, 0.719};
      }
      if (resnet) return sub ? PublishedScore{0.867, 0.765} : PublishedScore{0.853, 0.745};
      return sub ? PublishedScore{0.841, 0.734} : PublishedScore{0.839, 0.722};
    }
  }
  return std::nullopt;
}

std::vector<GridRow> default_grid_rows() {
  std::vector<GridRow> rows;
  for (bool dice : {false, true}) {
    for (Arch arch : {Arch::unet, Arch::resnet}) {
      rows.push_back({PipelineKind::no_sr, arch, Upsampler::none, dice});
      rows.push_back({PipelineKind::disjoint_srcnn, arch, Upsampler::none, dice});
    }
  }
  for (bool dice : {false, true}) {
    for (Arch arch : {Arch::unet, Arch::resnet}) {
      for (Upsampler up : {Upsampler::transposed, Upsampler::subpixel}) {
        rows.push_back({PipelineKind::joint, arch, up, dice});
      }
    }
  }
  return rows;
}

GridSpec default_grid_spec() {
  GridSpec spec;
  spec.rows = default_grid_rows();
  return spec;
}

std::uint64_t row_seed(std::uint64_t grid_seed, const GridRow& row) {
  return derive_seed(grid_seed, {hash_string(row.id())});
}

GeneratorConfig row_generator_config(const GridSpec& spec, const GridRow& row) {
  GeneratorConfig g;
  g.arch = row.arch;
  g.upsampler = row.pipeline == PipelineKind::joint ? row.upsampler : Upsampler::none;
  g.head = spec.head;
  g.base_width = spec.base_width;
  g.depth = row.arch == Arch::unet ? spec.unet_depth : spec.resnet_depth;
  g.seed = row_seed(spec.seed, row);
  return g;
}

TrainConfig row_train_config(const GridSpec& spec, const GridRow& row) {
  TrainConfig t = spec.train;
  t.seed = row_seed(spec.seed, row);
  if (!row.use_dice) t.weights.alpha_dice = 0.0;
  t.output_dir = spec.output_dir.empty() ? std::filesystem::path{} : spec.output_dir / "rows" / row.id();
  return t;
}

nlohmann::json to_json(const ExperimentResult& r) {
  nlohmann::json j{{"row_id", r.row_id},
                   {"label", r.label},
                   {"table", r.table},
                   {"pipeline", to_string(r.pipeline)},
                   {"dice", r.dice},
                   {"miou", r.miou},
                   {"train_seconds", r.train_seconds},
                   {"checkpoint", r.checkpoint.generic_string()},
                   {"srcnn_checkpoint", r.srcnn_checkpoint.generic_string()},
                   {"seed", r.seed},
                   {"best_in_table", r.best_in_table},
                   {"error", r.error}};
  if (r.published) j["published"] = {{"dice", r.published->dice}, {"miou", r.published->miou}};
  return j;
}

ExperimentResult result_from_json(const nlohmann::json& j) {
  ExperimentResult r;
  r.row_id = j.at("row_id").get<std::string>();
  r.label = j.at("label").get<std::string>();
  r.table = j.at("table").get<int>();
  r.pipeline = pipeline_from_string(j.at("pipeline").get<std::string>());
  r.dice = j.at("dice").get<double>();
  r.miou = j.at("miou").get<double>();
  r.train_seconds = j.at("train_seconds").get<double>();
  r.checkpoint = j.at("checkpoint").get<std::string>();
  r.srcnn_checkpoint = j.at("srcnn_checkpoint").get<std::string>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.best_in_table = j.at("best_in_table").get<bool>();
  r.error = j.at("error").get<std::string>();
  if (j.contains("published")) {
    r.published = PublishedScore{j["published"].at("dice").get<double>(), j["published"].at("miou").get<double>()};
  }
  return r;
}

ExperimentResult run_row(const GridSpec& spec, const GridRow& row, const std::vector<PatchPair>& train_pairs,
                         const std::vector<PatchPair>& test_pairs, Srcnn* srcnn) {
  ExperimentResult r;
  r.row_id = row.id();
  r.label = row.label();
  r.table = row.table();
  r.pipeline = row.pipeline;
  r.published = row.reference();
  r.seed = row_seed(spec.seed, row);
  if (row.pipeline == PipelineKind::disjoint_srcnn && srcnn == nullptr) {
    throw std::invalid_argument("run_row: disjoint row needs an SR-CNN");
  }
  const auto t0 = std::chrono::steady_clock::now();
  TrainResult tr = train(train_pairs, test_pairs, row_generator_config(spec, row), row_train_config(spec, row));
  r.train_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  r.checkpoint = tr.final_checkpoint;
  MetricReport rep;
  if (row.pipeline == PipelineKind::disjoint_srcnn) {
    rep = evaluate_disjoint(tr.state.generator, srcnn, test_pairs, spec.train.eval_batch_size);
    if (!spec.output_dir.empty()) r.srcnn_checkpoint = spec.output_dir / "srcnn.ckpt";
  } else {
    rep = evaluate(tr.state.generator, test_pairs, spec.train.eval_batch_size);
  }
  r.dice = rep.dice;
  r.miou = rep.miou;
  return r;
}

namespace {

void save_srcnn(const std::filesystem::path& path, Srcnn& model) {
  Checkpoint ck;
  ck.meta["kind"] = "srcnn";
  ck.meta["srcnn"] = model->config();
  collect_module_state(*model, "srcnn", ck);
  save_checkpoint(path, ck);
}

Srcnn load_srcnn(const std::filesystem::path& path) {
  const Checkpoint ck = load_checkpoint(path);
  if (ck.meta.value("kind", "") != "srcnn") throw std::runtime_error(path.string() + " is not an SR-CNN checkpoint");
  Srcnn model = build_srcnn(ck.meta.at("srcnn").get<SrcnnConfig>());
  restore_module_state(*model, "srcnn", ck);
  model->eval();
  return model;
}

}  // namespace

std::vector<ExperimentResult> run_grid(const GridSpec& spec, const std::vector<PatchPair>& train_pairs,
                                       const std::vector<PatchPair>& test_pairs) {
  if (!spec.output_dir.empty()) std::filesystem::create_directories(spec.output_dir);
  Srcnn srcnn{nullptr};
  bool needs_srcnn = false;
  for (const auto& row : spec.rows) needs_srcnn |= row.pipeline == PipelineKind::disjoint_srcnn;
  std::string srcnn_error;
  if (needs_srcnn) {
    try {
      SrcnnConfig sc = spec.srcnn;
      sc.seed = derive_seed(spec.seed, {hash_string("srcnn")});
      srcnn = build_srcnn(sc);
      SrcnnTrainConfig st = spec.srcnn_train;
      st.seed = sc.seed;
      train_srcnn(srcnn, make_sr_pairs(train_pairs), st);
      if (!spec.output_dir.empty()) save_srcnn(spec.output_dir / "srcnn.ckpt", srcnn);
    } catch (const std::exception& e) {
      srcnn_error = std::string("SR-CNN training failed: ") + e.what();
    }
  }

  std::vector<ExperimentResult> results;
  for (const GridRow& row : spec.rows) {
    if (spec.train.verbose) std::fprintf(stderr, "[grid] %s\n", row.label().c_str());
    try {
      if (row.pipeline == PipelineKind::disjoint_srcnn && !srcnn_error.empty()) throw std::runtime_error(srcnn_error);
      results.push_back(run_row(spec, row, train_pairs, test_pairs, srcnn ? &srcnn : nullptr));
    } catch (const std::exception& e) {
      ExperimentResult r;
      r.row_id = row.id();
      r.label = row.label();
      r.table = row.table();
      r.pipeline = row.pipeline;
      r.published = row.reference();
      r.seed = row_seed(spec.seed, row);
      r.error = e.what();
      results.push_back(std::move(r));
    }
  }
  mark_best_rows(results);
  if (!spec.output_dir.empty()) {
    save_results(spec.output_dir / "results.json", results);
    std::ofstream(spec.output_dir / "run_manifest.json") << run_manifest(spec).dump(2) << '\n';
  }
  return results;
}

void mark_best_rows(std::vector<ExperimentResult>& results) {
  for (int table : {1, 2}) {
    ExperimentResult* best = nullptr;
    for (auto& r : results) {
      if (r.table != table) continue;
      r.best_in_table = false;
      if (r.error.empty() && (best == nullptr || r.dice > best->dice)) best = &r;
    }
    if (best) best->best_in_table = true;
  }
}

std::string results_csv_header() {
  return "table,row_id,label,dice,miou,published_dice,published_miou,train_seconds,best_in_table,status";
}

std::string results_csv(const std::vector<ExperimentResult>& results) {
  std::ostringstream out;
  out << results_csv_header() << '\n';
  char buf[512];
  for (const auto& r : results) {
    const std::string published_dice = r.published ? (std::snprintf(buf, sizeof buf, "%.3f", r.published->dice), buf) : "";
    const std::string published_miou = r.published ? (std::snprintf(buf, sizeof buf, "%.3f", r.published->miou), buf) : "";
    std::string status = r.error.empty() ? "ok" : "error: " + r.error;
    for (char& c : status) {
      if (c == ',' || c == '\n') c = ';';
    }
    std::snprintf(buf, sizeof buf, "%d,%s,%s,%.4f,%.4f,%s,%s,%.1f,%d,%s", r.table, r.row_id.c_str(), r.label.c_str(),
                  r.dice, r.miou, published_dice.c_str(), published_miou.c_str(), r.train_seconds, r.best_in_table ? 1 : 0,
                  status.c_str());
    out << buf << '\n';
  }
  return out.str();
}

nlohmann::json run_manifest(const GridSpec& spec) {
  nlohmann::json m;
  m["grid_seed"] = spec.seed;
  m["head"] = to_string(spec.head);
  m["base_width"] = spec.base_width;
  m["unet_depth"] = spec.unet_depth;
  m["resnet_depth"] = spec.resnet_depth;
  m["train"] = spec.train;
  m["srcnn"] = spec.srcnn;
  m["srcnn_train"] = {{"epochs", spec.srcnn_train.epochs},
                      {"batch_size", spec.srcnn_train.batch_size},
                      {"lr", spec.srcnn_train.lr},
                      {"crop", spec.srcnn_train.crop},
                      {"seed", derive_seed(spec.seed, {hash_string("srcnn")})}};
  m["data_source"] = spec.data_source;
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : spec.rows) {
    nlohmann::json train_cfg = row_train_config(spec, row);
    rows.push_back({{"row_id", row.id()},
                    {"label", row.label()},
                    {"table", row.table()},
                    {"pipeline", to_string(row.pipeline)},
                    {"use_dice", row.use_dice},
                    {"seed", row_seed(spec.seed, row)},
                    {"generator", row_generator_config(spec, row)},
                    {"train", train_cfg}});
  }
  m["rows"] = std::move(rows);
  return m;
}

namespace {

RgbImage upscale_nearest(const RgbImage& src, int factor) {
  RgbImage out(src.rows() * factor, src.cols() * factor);
  for (int r = 0; r < out.rows(); ++r) {
    for (int c = 0; c < out.cols(); ++c) out(r, c) = src(r / factor, c / factor);
  }
  return out;
}

void blit(RgbImage& dst, const RgbImage& src, int col0) {
  for (int r = 0; r < src.rows() && r < dst.rows(); ++r) {
    for (int c = 0; c < src.cols(); ++c) dst(r, col0 + c) = src(r, c);
  }
}

RgbImage to_display(const LabelMap& labels) {
  RgbImage rgb = render_rgb(labels);
  if (rgb.rows() < kPatchSize) rgb = upscale_nearest(rgb, kPatchSize / std::max(1, rgb.rows()));
  return rgb;
}

}  // namespace

RgbImage render_panel(const ReportSample& sample) {
  const int n = static_cast<int>(sample.outputs.size());
  RgbImage panel(kPatchSize, (2 + n) * kPatchSize);
  const Image input = bicubic_upsample(sample.input_lr, kUpscale);
  RgbImage gray(input.rows(), input.cols());
  for (int r = 0; r < input.rows(); ++r) {
    for (int c = 0; c < input.cols(); ++c) {
      const double v = std::clamp(input(r, c), 0.0, 1.0);
      gray(r, c) = {v, v, v};
    }
  }
  blit(panel, gray, 0);
  blit(panel, to_display(sample.ground_truth), kPatchSize);
  for (int i = 0; i < n; ++i) blit(panel, to_display(sample.outputs[i]), (2 + i) * kPatchSize);
  return panel;
}

std::vector<ReportSample> collect_samples(const std::vector<ExperimentResult>& results,
                                          const std::vector<PatchPair>& pairs) {
  std::vector<ReportSample> samples;
  for (const auto& p : pairs) samples.push_back({p.id, p.input_lr, p.target_label_hr, {}});
  for (const auto& r : results) {
    std::vector<LabelMap> preds;
    if (r.error.empty() && !r.checkpoint.empty()) {
      Generator g = load_generator(r.checkpoint);
      if (r.pipeline == PipelineKind::disjoint_srcnn) {
        Srcnn srcnn = load_srcnn(r.srcnn_checkpoint);
        for (const auto& p : pairs) preds.push_back(disjoint_pipeline(g, &srcnn, p.input_lr));
      } else {
        preds = predict_labels(g, pairs);
      }
    } else {
      preds.assign(pairs.size(), LabelMap(kPatchSize, kPatchSize));
    }
    for (std::size_t i = 0; i < samples.size(); ++i) samples[i].outputs.push_back(std::move(preds[i]));
  }
  return samples;
}

void render_report(const std::vector<ExperimentResult>& results, const std::vector<ReportSample>& samples,
                   const nlohmann::json& manifest, const std::filesystem::path& dir) {
  if (results.empty()) throw std::invalid_argument("render_report: no results");
  namespace fs = std::filesystem;
  fs::create_directories(dir / "panels");
  std::ofstream(dir / "results.csv") << results_csv(results);
  std::ofstream(dir / "run_manifest.json") << manifest.dump(2) << '\n';

  std::ostringstream md;
  char buf[512];
  for (int table : {1, 2}) {
    md << (table == 1 ? "## No super-resolution vs. disjoint SR-CNN\n\n" : "## Joint super-resolution and segmentation\n\n");
    md << "| Model | Dice | mIOU | Published Dice | Published mIOU |\n|---|---|---|---|---|\n";
    for (const auto& r : results) {
      if (r.table != table) continue;
      const std::string mark = r.best_in_table ? " **(best)**" : "";
      if (!r.error.empty()) {
        md << "| " << r.label << " | failed | failed | ";
      } else {
        std::snprintf(buf, sizeof buf, "| %s%s | %.4f | %.4f | ", r.label.c_str(), mark.c_str(), r.dice, r.miou);
        md << buf;
      }
      if (r.published) {
        std::snprintf(buf, sizeof buf, "%.3f | %.3f |\n", r.published->dice, r.published->miou);
        md << buf;
      } else {
        md << " |  |\n";
      }
    }
    if (table == 2) {
      std::snprintf(buf, sizeof buf, "| Added Dice | ReLayNet (external, not run) | | | %.3f | %.3f |\n",
                    kRelaynetReference.dice, kRelaynetReference.miou);
      md << buf;
    }
    md << '\n';
  }
  md << "Published values come from a private clinical dataset and are shown for orientation only;\n"
        "they are not expected to match scores on synthetic phantom data.\n";
  for (const auto& r : results) {
    if (!r.error.empty()) md << "\nRow " << r.row_id << " failed: " << r.error << '\n';
  }
  std::ofstream(dir / "report.md") << md.str();

  for (const auto& s : samples) {
    if (s.outputs.size() != results.size()) throw std::invalid_argument("render_report: sample/result count mismatch");
    io::write_rgb8(dir / "panels" / (s.id + ".png"), render_panel(s));
  }
}

void save_results(const std::filesystem::path& path, const std::vector<ExperimentResult>& results) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : results) arr.push_back(to_json(r));
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream(path) << arr.dump(2) << '\n';
}

std::vector<ExperimentResult> load_results(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<ExperimentResult> out;
  for (const auto& e : nlohmann::json::parse(in)) out.push_back(result_from_json(e));
  return out;
}

}  // namespace retinagan
