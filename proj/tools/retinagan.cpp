// Command-line front end: data generation, preprocessing, training,
// evaluation and the ablation grid.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "retinagan/experiments.hpp"
#include "retinagan/io.hpp"

namespace fs = std::filesystem;
using namespace retinagan;

namespace {

// {"train": {"epochs": 5}} sets `train --epochs 5`; top-level scalars apply
// to the main program. Command-line flags take precedence.
class JsonConfig : public CLI::Config {
 public:
  std::string to_config(const CLI::App* app, bool default_also, bool, std::string) const override {
    nlohmann::json j;
    for (const CLI::Option* opt : app->get_options({})) {
      if (opt->get_lnames().empty() || !opt->get_configurable()) continue;
      const std::string name = opt->get_lnames()[0];
      if (opt->count() > 0) {
        j[name] = opt->as<std::string>();
      } else if (default_also && !opt->get_default_str().empty()) {
        j[name] = opt->get_default_str();
      }
    }
    return j.dump(2);
  }

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    nlohmann::json j;
    try {
      input >> j;
    } catch (const nlohmann::json::exception& e) {
      throw CLI::ConversionError(std::string("config file: ") + e.what());
    }
    std::vector<CLI::ConfigItem> items;
    walk(j, {}, items);
    return items;
  }

 private:
  static std::string flat(const nlohmann::json& v) {
    return v.is_string() ? v.get<std::string>() : v.dump();
  }

  static void walk(const nlohmann::json& j, const std::vector<std::string>& parents,
                   std::vector<CLI::ConfigItem>& items) {
    for (const auto& [key, value] : j.items()) {
      std::string name = key;
      std::replace(name.begin(), name.end(), '_', '-');
      if (value.is_object()) {
        std::vector<std::string> p = parents;
        p.push_back(name);
        walk(value, p, items);
        continue;
      }
      CLI::ConfigItem item;
      item.parents = parents;
      item.name = name;
      if (value.is_array()) {
        for (const auto& v : value) item.inputs.push_back(flat(v));
      } else {
        item.inputs.push_back(flat(value));
      }
      items.push_back(std::move(item));
    }
  }
};

const std::map<std::string, Arch> kArchNames{{"unet", Arch::unet}, {"resnet", Arch::resnet}};
const std::map<std::string, Upsampler> kUpsamplerNames{
    {"subpixel", Upsampler::subpixel}, {"transposed", Upsampler::transposed}, {"none", Upsampler::none}};
const std::map<std::string, Head> kHeadNames{{"rgb", Head::rgb}, {"softmax8", Head::softmax8}};
const std::map<std::string, SplitPolicy> kSplitNames{{"by-patient", SplitPolicy::by_patient},
                                                     {"by-patch", SplitPolicy::by_patch}};

struct PhantomOpts {
  int patients = 10;
  int scans_per_patient = 1;
  PhantomConfig phantom;
};

void add_phantom_flags(CLI::App* cmd, PhantomOpts& o) {
  cmd->add_option("--patients", o.patients, "Number of synthetic patients")->capture_default_str();
  cmd->add_option("--scans-per-patient", o.scans_per_patient)->capture_default_str();
  cmd->add_option("--height", o.phantom.height, "Scan height in pixels")->capture_default_str();
  cmd->add_option("--width", o.phantom.width, "Scan width in pixels")->capture_default_str();
  cmd->add_option("--min-thickness", o.phantom.min_thickness)->capture_default_str();
  cmd->add_option("--smoothness", o.phantom.boundary_smoothness, "Boundary control-point spacing")
      ->capture_default_str();
  cmd->add_option("--speckle", o.phantom.speckle_strength)->capture_default_str();
  cmd->add_option("--phantom-seed", o.phantom.seed)->capture_default_str();
}

struct DataOpts {
  PreprocessOptions preprocess;
  bool augment = false;
  double overlap = kPatchOverlap;
  int patch = kPatchSize;
  int scale = kUpscale;
  double ratio = 0.8;
  SplitPolicy policy = SplitPolicy::by_patient;
  std::uint64_t seed = 0;
};

void add_data_flags(CLI::App* cmd, DataOpts& o) {
  cmd->add_option("--unsharp-sigma", o.preprocess.unsharp_sigma)->capture_default_str();
  cmd->add_option("--unsharp-amount", o.preprocess.unsharp_amount)->capture_default_str();
  cmd->add_flag("--augment", o.augment, "Add flipped, rotated and translated copies");
  cmd->add_option("--overlap", o.overlap, "Patch overlap fraction")->capture_default_str()->check(CLI::Range(0.0, 0.99));
  cmd->add_option("--patch", o.patch, "High-resolution patch size")->capture_default_str()->check(CLI::IsMember({kPatchSize}));
  cmd->add_option("--scale", o.scale, "Super-resolution factor")->capture_default_str()->check(CLI::IsMember({kUpscale}));
  cmd->add_option("--ratio", o.ratio, "Training fraction")->capture_default_str()->check(CLI::Range(0.0, 1.0));
  cmd->add_option("--split", o.policy, "by-patient or by-patch")
      ->transform(CLI::CheckedTransformer(kSplitNames))
      ->option_text("by-patient|by-patch [by-patient]");
  cmd->add_option("--split-seed", o.seed)->capture_default_str();
}

DataRecipe make_recipe(const PhantomOpts& p, const DataOpts& d) {
  DataRecipe r;
  r.n_patients = p.patients;
  r.scans_per_patient = p.scans_per_patient;
  r.phantom = p.phantom;
  r.preprocess = d.preprocess;
  r.augment = d.augment;
  r.overlap = d.overlap;
  r.train_ratio = d.ratio;
  r.policy = d.policy;
  r.seed = d.seed;
  return r;
}

struct ModelOpts {
  GeneratorConfig generator;
  TrainConfig train;
  bool dice = true;
  int threads = 0;
  bool quiet = false;
};

void add_model_flags(CLI::App* cmd, ModelOpts& o) {
  cmd->add_option("--arch", o.generator.arch, "unet or resnet")
      ->transform(CLI::CheckedTransformer(kArchNames))
      ->option_text("unet|resnet [resnet]");
  cmd->add_option("--upsampler", o.generator.upsampler, "subpixel, transposed, or none (56x56 output)")
      ->transform(CLI::CheckedTransformer(kUpsamplerNames))
      ->option_text("subpixel|transposed|none [subpixel]");
  cmd->add_option("--head", o.generator.head, "rgb or softmax8")
      ->transform(CLI::CheckedTransformer(kHeadNames))
      ->option_text("rgb|softmax8 [rgb]");
  cmd->add_option("--base-width", o.generator.base_width, "Generator width")->capture_default_str();
  cmd->add_option("--depth", o.generator.depth, "U-Net levels or ResNet blocks; 0 uses the default")
      ->capture_default_str();
  cmd->add_flag("--dice,!--no-dice", o.dice, "Add the Dice term to the generator objective (default on)");
  cmd->add_option("--lambda", o.train.weights.lambda_l1, "L1 weight")->capture_default_str();
  cmd->add_option("--alpha", o.train.weights.alpha_dice, "Dice weight")->capture_default_str();
  cmd->add_option("--lr", o.train.lr_g, "Generator learning rate")->capture_default_str();
  cmd->add_option("--lr-d", o.train.lr_d, "Discriminator learning rate")->capture_default_str();
  cmd->add_option("--beta1", o.train.beta1)->capture_default_str();
  cmd->add_option("--beta2", o.train.beta2)->capture_default_str();
  cmd->add_option("--epochs", o.train.epochs)->capture_default_str();
  cmd->add_option("--decay-epochs", o.train.decay_epochs, "Final epochs over which learning rates fall linearly to 0")
      ->capture_default_str();
  cmd->add_option("--batch-size", o.train.batch_size)->capture_default_str();
  cmd->add_option("--disc-width", o.train.disc_base_width)->capture_default_str();
  cmd->add_option("--disc-layers", o.train.disc_layers)->capture_default_str();
  cmd->add_flag("!--unconditional", o.train.conditional, "Discriminator does not see the input");
  cmd->add_option("--seed", o.train.seed)->capture_default_str();
  cmd->add_option("--threads", o.threads, "Intra-op threads; 0 keeps the backend default")->capture_default_str();
  cmd->add_flag("--quiet", o.quiet, "No per-epoch log lines");
}

void apply_model_opts(ModelOpts& o) {
  if (!o.dice) o.train.weights.alpha_dice = 0.0;
  o.train.verbose = !o.quiet;
  o.generator.seed = o.train.seed;
  if (o.threads > 0) torch::set_num_threads(o.threads);
}

void print_report(const MetricReport& r) {
  nlohmann::json j{{"dice", r.dice}, {"miou", r.miou}};
  for (int c = 0; c < kNumClasses; ++c) {
    j["per_class"][class_names()[c]] = {
        {"dice", r.per_class_dice[c]}, {"iou", r.per_class_iou[c]}, {"present", r.present[c]}};
  }
  std::cout << j.dump(2) << '\n';
}

LabelMap read_prediction(const fs::path& path) {
  try {
    return io::read_labels(path);
  } catch (const std::runtime_error&) {
    return decode_rgb_to_labels(io::read_rgb(path));
  }
}

// Samples are stored and read back so `render` sees the same bytes as `grid`.
std::vector<PatchPair> store_samples(const fs::path& dir, const std::vector<PatchPair>& pairs) {
  SplitManifest split;
  for (const auto& p : pairs) split.test.push_back(p.id);
  write_patch_store(dir, pairs, split, DatasetStats{});
  return read_patch_store(dir).test;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Joint super-resolution and layer segmentation of OCT B-scans"};
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.config_formatter(std::make_shared<JsonConfig>());
  app.set_config("--config", "", "JSON file of option values, nested by subcommand");

  // generate-data
  auto* gen = app.add_subcommand("generate-data", "Write synthetic layered B-scans and label maps");
  PhantomOpts gen_opts;
  fs::path gen_out;
  gen->add_option("--out", gen_out, "Output directory")->required();
  add_phantom_flags(gen, gen_opts);
  gen->callback([&] {
    const auto scans = generate_dataset(gen_opts.patients, gen_opts.scans_per_patient, gen_opts.phantom);
    write_dataset(scans, gen_out, gen_opts.phantom);
    std::fprintf(stderr, "wrote %zu scans to %s\n", scans.size(), gen_out.c_str());
  });

  // preprocess
  auto* pre = app.add_subcommand("preprocess", "Denoise, sharpen, patch and split scans into a patch store");
  fs::path pre_in, pre_out;
  DataOpts pre_opts;
  pre->add_option("--data", pre_in, "Scan directory from generate-data")->required()->check(CLI::ExistingDirectory);
  pre->add_option("--out", pre_out, "Patch store directory")->required();
  add_data_flags(pre, pre_opts);
  pre->callback([&] {
    PhantomOpts none;
    const PreparedData data = prepare_data(read_dataset(pre_in), make_recipe(none, pre_opts));
    std::vector<PatchPair> all = data.train;
    all.insert(all.end(), data.test.begin(), data.test.end());
    write_patch_store(pre_out, all, data.split, data.stats);
    std::fprintf(stderr, "%zu train / %zu test patches in %s\n", data.train.size(), data.test.size(), pre_out.c_str());
  });

  // train
  auto* tr = app.add_subcommand("train", "Train one generator/discriminator pair");
  fs::path tr_data, tr_out;
  std::optional<fs::path> tr_resume;
  ModelOpts tr_opts;
  tr->add_option("--data", tr_data, "Patch store")->required()->check(CLI::ExistingDirectory);
  tr->add_option("--out", tr_out, "Run directory")->required();
  tr->add_option("--resume", tr_resume, "Checkpoint to continue from")->check(CLI::ExistingFile);
  add_model_flags(tr, tr_opts);
  tr->callback([&] {
    apply_model_opts(tr_opts);
    tr_opts.train.output_dir = tr_out;
    const PatchStore store = read_patch_store(tr_data);
    TrainResult result = train(store.train, store.test, tr_opts.generator, tr_opts.train, tr_resume);
    print_report(evaluate(result.state.generator, store.test, tr_opts.train.eval_batch_size));
  });

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "Score a checkpoint or a directory of predicted label maps");
  fs::path ev_data;
  std::string ev_split = "test";
  std::optional<fs::path> ev_ckpt, ev_srcnn, ev_pred;
  ev->add_option("--data", ev_data, "Patch store")->required()->check(CLI::ExistingDirectory);
  ev->add_option("--split", ev_split)->capture_default_str()->check(CLI::IsMember({"train", "test"}));
  auto* ck_opt = ev->add_option("--checkpoint", ev_ckpt, "Generator checkpoint")->check(CLI::ExistingFile);
  auto* pred_opt = ev->add_option("--predictions", ev_pred, "Directory of <id>.png label or palette images")
                       ->check(CLI::ExistingDirectory);
  ev->add_option("--srcnn", ev_srcnn, "SR-CNN checkpoint; scores the disjoint pipeline")
      ->check(CLI::ExistingFile)
      ->needs(ck_opt);
  ck_opt->excludes(pred_opt);
  ev->callback([&] {
    const PatchStore store = read_patch_store(ev_data);
    const auto& pairs = ev_split == "train" ? store.train : store.test;
    if (ev_pred) {
      std::vector<MetricReport> reports;
      for (const auto& p : pairs) reports.push_back(miou(read_prediction(*ev_pred / (p.id + ".png")), p.target_label_hr));
      print_report(average_reports(reports));
    } else if (ev_ckpt && ev_srcnn) {
      Generator g = load_generator(*ev_ckpt);
      Checkpoint ck = load_checkpoint(*ev_srcnn);
      Srcnn s = build_srcnn(ck.meta.at("srcnn").get<SrcnnConfig>());
      restore_module_state(*s, "srcnn", ck);
      print_report(evaluate_disjoint(g, &s, pairs));
    } else if (ev_ckpt) {
      print_report(evaluate(*ev_ckpt, pairs));
    } else {
      throw CLI::RequiredError("--checkpoint or --predictions");
    }
  });

  // grid
  auto* gr = app.add_subcommand("grid", "Train and score the 16-row architecture/loss ablation grid");
  fs::path gr_out;
  std::optional<fs::path> gr_data;
  bool gr_smoke = false;
  int gr_samples = 2;
  std::vector<std::string> gr_rows;
  ModelOpts gr_opts;
  PhantomOpts gr_phantom;
  DataOpts gr_dataopts;
  gr->add_option("--out", gr_out, "Grid directory")->required();
  gr->add_option("--data", gr_data, "Patch store; generated from the phantom flags when absent")
      ->check(CLI::ExistingDirectory);
  gr->add_flag("--smoke", gr_smoke, "Reduced-scale grid: small data, narrow networks, one epoch");
  gr->add_option("--rows", gr_rows, "Only these row ids")->delimiter(',');
  gr->add_option("--samples", gr_samples, "Test patches shown in the image panels")->capture_default_str();
  add_model_flags(gr, gr_opts);
  add_phantom_flags(gr, gr_phantom);
  add_data_flags(gr, gr_dataopts);
  gr->callback([&] {
    apply_model_opts(gr_opts);
    GridSpec spec = default_grid_spec();
    DataRecipe recipe = make_recipe(gr_phantom, gr_dataopts);
    if (gr_smoke) {
      spec = smoke_grid_spec(gr_opts.train.seed);
      recipe = smoke_data_recipe(gr_opts.train.seed);
      // Explicit flags still override the smoke scale.
      auto given = [&](const char* name) { return gr->count(name) > 0; };
      if (given("--epochs")) spec.train.epochs = gr_opts.train.epochs;
      if (given("--batch-size")) spec.train.batch_size = gr_opts.train.batch_size;
      if (given("--base-width")) spec.base_width = gr_opts.generator.base_width;
      if (given("--disc-width")) spec.train.disc_base_width = gr_opts.train.disc_base_width;
    } else {
      spec.train = gr_opts.train;
      spec.base_width = gr_opts.generator.base_width;
      spec.unet_depth = spec.resnet_depth = gr_opts.generator.depth;
      spec.head = gr_opts.generator.head;
    }
    spec.train.verbose = gr_opts.train.verbose;
    spec.seed = gr_opts.train.seed;
    spec.output_dir = gr_out;
    if (!gr_rows.empty()) {
      std::vector<GridRow> keep;
      for (const auto& row : spec.rows) {
        if (std::find(gr_rows.begin(), gr_rows.end(), row.id()) != gr_rows.end()) keep.push_back(row);
      }
      if (keep.size() != gr_rows.size()) throw CLI::ValidationError("--rows", "unknown row id");
      spec.rows = keep;
    }
    PreparedData data;
    if (gr_data) {
      PatchStore store = read_patch_store(*gr_data);
      data.train = std::move(store.train);
      data.test = std::move(store.test);
      spec.data_source = {{"patch_store", fs::absolute(*gr_data).generic_string()}};
    } else {
      data = prepare_phantom_data(recipe);
      spec.data_source = to_json(recipe);
    }
    spec.data_source["train_pairs"] = data.train.size();
    spec.data_source["test_pairs"] = data.test.size();
    const auto results = run_grid(spec, data.train, data.test);
    std::vector<PatchPair> shown(data.test.begin(),
                                 data.test.begin() + std::min<std::size_t>(gr_samples, data.test.size()));
    shown = store_samples(gr_out / "samples", shown);
    render_report(results, collect_samples(results, shown), run_manifest(spec), gr_out);
    std::cout << results_csv(results);
    bool any_ok = false;
    for (const auto& r : results) any_ok |= r.error.empty();
    if (!any_ok) throw std::runtime_error("every grid row failed");
  });

  // render
  auto* rd = app.add_subcommand("render", "Rebuild the report of a finished grid from its checkpoints");
  fs::path rd_grid;
  std::optional<fs::path> rd_out;
  rd->add_option("--grid", rd_grid, "Grid directory")->required()->check(CLI::ExistingDirectory);
  rd->add_option("--out", rd_out, "Report directory; defaults to the grid directory");
  rd->callback([&] {
    const auto results = load_results(rd_grid / "results.json");
    std::ifstream in(rd_grid / "run_manifest.json");
    if (!in) throw std::runtime_error("missing run_manifest.json in " + rd_grid.string());
    const nlohmann::json manifest = nlohmann::json::parse(in);
    const auto samples = read_patch_store(rd_grid / "samples").test;
    render_report(results, collect_samples(results, samples), manifest, rd_out.value_or(rd_grid));
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    if (code != 0) std::cerr << app.help();
    return code;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
