// Acceptance run: one PASS/FAIL line per criterion.
//
//   acceptance <retinagan-cli> <work-dir> [criteria, e.g. 1,2,5]

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>

#include "retinagan/discriminator.hpp"
#include "retinagan/experiments.hpp"
#include "retinagan/generators.hpp"
#include "retinagan/metrics.hpp"
#include "retinagan/objectives.hpp"
#include "retinagan/pipeline.hpp"
#include "retinagan/srbaseline.hpp"
#include "retinagan/trainer.hpp"
#include "test_oracles.hpp"
#include "test_torch.hpp"

using namespace retinagan;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

fs::path g_cli;
fs::path g_work;

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v, int digits = 4) {
  std::ostringstream s;
  s.precision(digits);
  s << v;
  return s.str();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + p.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// Runs the CLI with output captured in <log>; returns the exit status.
int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = "\"" + g_cli.string() + "\" " + args + " > \"" + log.string() + "\" 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

Outcome metric_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(1);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const LabelMap pred = oracle::random_labels(32, 32, rng);
    const LabelMap gt = oracle::random_labels(32, 32, rng);
    const oracle::Scores ref = oracle::confusion_scores(pred, gt);
    const MetricReport r = miou(pred, gt);
    worst = std::max({worst, std::abs(r.dice - ref.dice), std::abs(r.miou - ref.miou),
                      std::abs(dice_coefficient(pred, gt) - ref.dice)});
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-12 && secs < 10.0,
          "100 random 8-class 32x32 pairs, max abs err " + fmt(worst) + " (< 1e-12), " + fmt(secs, 3) + " s (< 10 s)"};
}

Outcome dice_gradient() {
  const auto t0 = std::chrono::steady_clock::now();
  torch::manual_seed(2);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const torch::Tensor p = torch::softmax(torch::randn({1, kNumClasses, 8, 8}, torch::kFloat64), 1);
    const torch::Tensor labels = torch::randint(0, kNumClasses, {1, 8, 8}, torch::kLong);
    const torch::Tensor g = encode_labels(labels, Head::softmax8).to(torch::kFloat64);
    worst = std::max(worst, testing::gradient_error([&](const torch::Tensor& x) { return dice_loss(x, g); }, p));
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-4 && secs < 30.0,
          "20 random soft 8x8 predictions in float64, max relative err " + fmt(worst) + " (< 1e-4), " +
              fmt(secs, 3) + " s (< 30 s)"};
}

Outcome loss_spot_values() {
  auto full = [](double v, std::vector<int64_t> shape) { return torch::full(shape, v, torch::kFloat64); };
  const std::vector<int64_t> map{2, 1, 26, 26};
  torch::Tensor half = torch::zeros({1, 8, 8}, torch::kFloat64);
  half.slice(1, 0, 4).fill_(1.0);
  const torch::Tensor mask = (torch::rand({1, 3, 8, 8}, torch::kFloat64) > 0.5).to(torch::kFloat64);
  const std::vector<std::pair<double, double>> pairs{
      {adversarial_loss_g(full(1.0, map)).item<double>(), 0.0},
      {adversarial_loss_g(full(0.5, map)).item<double>(), std::log(2.0)},
      {adversarial_loss_d(full(0.5, map), full(0.5, map)).item<double>(), 2 * std::log(2.0)},
      {dice_loss(full(0.5, {1, 8, 8}), half).item<double>(), 1.0 / 3.0},
      {dice_loss(mask, mask).item<double>(), 0.0},
  };
  double worst = 0.0;
  for (const auto& [got, want] : pairs) worst = std::max(worst, std::abs(got - want));
  return {worst < 1e-6, "0, ln 2, 2 ln 2, 1/3 and perfect-overlap dice, max abs err " + fmt(worst) + " (< 1e-6)"};
}

Outcome shapes() {
  torch::NoGradGuard no_grad;
  std::vector<std::string> bad;
  for (Arch arch : {Arch::unet, Arch::resnet}) {
    for (Upsampler up : {Upsampler::transposed, Upsampler::subpixel}) {
      for (Head head : {Head::rgb, Head::softmax8}) {
        GeneratorConfig cfg;
        cfg.arch = arch;
        cfg.upsampler = up;
        cfg.head = head;
        Generator g = build_generator(cfg);
        g->eval();
        const torch::Tensor y = g->forward(torch::rand({1, 1, 56, 56}));
        const int64_t c = head == Head::rgb ? 3 : 8;
        if (y.sizes() != torch::IntArrayRef({1, c, 224, 224})) {
          bad.push_back(to_string(arch) + "+" + to_string(up) + "/" + to_string(head));
        }
      }
    }
  }
  // Subpixel index oracle: out[c, h*r+i, w*r+j] = in[c*r*r + i*r + j, h, w].
  const int r = 4;
  const torch::Tensor in = torch::randn({48, 5, 6}, torch::kFloat64);
  const torch::Tensor out = subpixel_upsample(in, r);
  bool subpixel_ok = out.sizes() == torch::IntArrayRef({3, 20, 24});
  if (subpixel_ok) {
    auto a = in.accessor<double, 3>();
    auto b = out.accessor<double, 3>();
    for (int c = 0; c < 3; ++c)
      for (int h = 0; h < 5; ++h)
        for (int w = 0; w < 6; ++w)
          for (int i = 0; i < r; ++i)
            for (int j = 0; j < r; ++j) subpixel_ok &= b[c][h * r + i][w * r + j] == a[c * r * r + i * r + j][h][w];
  }

  const DiscriminatorConfig dcfg;
  PatchDiscriminator d = build_patchgan(dcfg);
  d->eval();
  const torch::Tensor scores = discriminate(d, torch::rand({1, 1, 224, 224}), torch::rand({1, 3, 224, 224}));
  // r_in = r_out * stride + kernel - stride, output layer first.
  int rf = 1;
  for (int s : {1, 1, 2, 2, 2}) rf = rf * s + 4 - s;
  const bool disc_ok = scores.sizes() == torch::IntArrayRef({1, 1, 26, 26}) && rf == 70 && receptive_field(dcfg) == 70;

  std::string detail = "8 generator variants 1x56x56 -> C x224x224" + std::string(bad.empty() ? "" : " (bad: ");
  for (const auto& b : bad) detail += b + " ";
  if (!bad.empty()) detail += ")";
  detail += std::string(", subpixel index oracle ") + (subpixel_ok ? "exact" : "MISMATCH") + ", discriminator map " +
            std::to_string(scores.size(2)) + "x" + std::to_string(scores.size(3)) + ", receptive field " +
            std::to_string(receptive_field(dcfg)) + " (analytic " + std::to_string(rf) + ")";
  return {bad.empty() && subpixel_ok && disc_ok, detail};
}

Outcome pipeline_oracles() {
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Image img(37, 29);
  for (double& v : img.data()) v = u(rng);

  const bool median_ok = median_filter3(img) == oracle::median_reference(img);

  double unsharp_err = 0.0;
  const Image ref = oracle::unsharp_reference(img, 1.0, 1.0);
  const Image sharp = unsharp_mask(img, 1.0, 1.0);
  for (std::size_t i = 0; i < img.size(); ++i) {
    unsharp_err = std::max(unsharp_err, std::abs(sharp.data()[i] - std::clamp(ref.data()[i], 0.0, 1.0)));
  }

  // Bicubic on a ramp: output j samples input coordinate (j + 0.5) / 4 - 0.5.
  Image ramp(4, 20);
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 20; ++c) ramp(r, c) = 0.1 + 0.04 * c;
  const Image up = bicubic_upsample(ramp, 4);
  double bicubic_err = 0.0;
  for (int j = 0; j < 80; ++j) {
    const double x = (j + 0.5) / 4 - 0.5;
    if (x < 1.0 || x > 18.0) continue;
    for (int r = 0; r < 16; ++r) bicubic_err = std::max(bicubic_err, std::abs(up(r, j) - (0.1 + 0.04 * x)));
  }

  Image patch(224, 224);
  for (double& v : patch.data()) v = u(rng);
  const Image small = downsample4(patch);
  double down_err = 0.0;
  for (int r = 0; r < 56; ++r) {
    for (int c = 0; c < 56; ++c) {
      double s = 0.0;
      for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) s += patch(4 * r + i, 4 * c + j);
      down_err = std::max(down_err, std::abs(small(r, c) - s / 16.0));
    }
  }

  std::uniform_int_distribution<int> side(224, 600);
  int count_mismatch = 0;
  for (int t = 0; t < 50; ++t) {
    const int rows = side(rng), cols = side(rng);
    if (patch_offsets(rows, cols).size() != oracle::window_count(rows, 224, 56) * oracle::window_count(cols, 224, 56)) {
      ++count_mismatch;
    }
  }
  const std::size_t n448 = patch_offsets(448, 448).size();

  const bool pass = median_ok && unsharp_err < 1e-9 && bicubic_err < 1e-6 && down_err < 1e-12 && count_mismatch == 0 &&
                    n448 == 25;
  return {pass, std::string("median ") + (median_ok ? "exact" : "MISMATCH") + ", unsharp err " + fmt(unsharp_err) +
                    " (< 1e-9), bicubic ramp err " + fmt(bicubic_err) + " (< 1e-6), downsample4 err " +
                    fmt(down_err) + " (< 1e-12), patch counts " + std::to_string(50 - count_mismatch) +
                    "/50, 448x448 -> " + std::to_string(n448) + " patches"};
}

Outcome desk_benchmark() {
  const fs::path dir = g_work / "desk";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const auto t0 = std::chrono::steady_clock::now();
  const int rc = run_cli(
      "grid --out \"" + dir.string() +
          "\" --rows joint-resnet-subpixel-dice,joint-resnet-subpixel-nodice"
          " --patients 10 --scans-per-patient 1 --height 448 --width 392"
          " --base-width 32 --disc-width 8 --batch-size 2 --lr 2e-3 --lr-d 2e-3"
          " --epochs 30 --decay-epochs 15 --seed 0",
      dir / "grid.log");
  const double secs = seconds_since(t0);
  if (rc != 0) return {false, "grid exited with " + std::to_string(rc) + ", see " + (dir / "grid.log").string()};

  const auto results = load_results(dir / "results.json");
  const nlohmann::json manifest = nlohmann::json::parse(slurp(dir / "run_manifest.json"));
  const ExperimentResult *dice = nullptr, *nodice = nullptr;
  for (const auto& r : results) {
    if (r.row_id == "joint-resnet-subpixel-dice") dice = &r;
    if (r.row_id == "joint-resnet-subpixel-nodice") nodice = &r;
  }
  if (!dice || !nodice) return {false, "grid did not report both rows"};
  const std::size_t pairs = manifest["data_source"].value("train_pairs", std::size_t{0}) +
                            manifest["data_source"].value("test_pairs", std::size_t{0});
  double best = 0.0;
  int best_epoch = 0;
  if (dice->error.empty()) {
    for (const auto& e : load_gan_checkpoint(dice->checkpoint).history.records) {
      if (e.eval_dice > best) {
        best = e.eval_dice;
        best_epoch = e.epoch;
      }
    }
  }
  const bool pass = dice->error.empty() && nodice->error.empty() && dice->dice >= 0.80 && pairs == 200;
  return {pass, std::to_string(pairs) + " phantom pairs (by-patient split), ResNet+sub-pixel+Dice final test Dice " + fmt(dice->dice) + " (>= 0.80; best " +
                    fmt(best) + " at epoch " + std::to_string(best_epoch) + "), alpha=0 row Dice " +
                    fmt(nodice->dice) + (nodice->error.empty() ? "" : " FAILED: " + nodice->error) + ", both rows in " +
                    "results.csv, " + fmt(secs / 60.0, 3) + " min on " + std::to_string(torch::get_num_threads()) +
                    " thread(s)"};
}

Outcome determinism() {
  const PreparedData data = prepare_phantom_data(smoke_data_recipe(0));
  const GridSpec spec = smoke_grid_spec(0);
  const GridRow row{PipelineKind::joint, Arch::resnet, Upsampler::subpixel, true};
  TrainConfig t = row_train_config(spec, row);
  t.output_dir.clear();
  t.epochs = 2;
  const GeneratorConfig g = row_generator_config(spec, row);
  const TrainHistory a = train(data.train, data.test, g, t).state.history;
  const TrainHistory b = train(data.train, data.test, g, t).state.history;
  if (a.records.size() != 2 || b.records.size() != 2) return {false, "wrong record count"};
  double worst = 0.0;
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    const EpochRecord &x = a.records[i], &y = b.records[i];
    for (auto [p, q] : {std::pair{x.d_loss, y.d_loss}, {x.g_total, y.g_total}, {x.g_adversarial, y.g_adversarial},
                        {x.g_l1, y.g_l1}, {x.g_dice, y.g_dice}, {x.eval_dice, y.eval_dice},
                        {x.eval_miou, y.eval_miou}}) {
      worst = std::max(worst, std::abs(p - q));
    }
  }
  return {worst <= 1e-6 && t.deterministic,
          "two seeded smoke runs (2 epochs), max history difference " + fmt(worst) + " (<= 1e-6)"};
}

Outcome grid_integrity() {
  const fs::path dir = g_work / "smoke";
  const fs::path again = g_work / "smoke_render";
  fs::remove_all(dir);
  fs::remove_all(again);
  fs::create_directories(g_work);
  const auto t0 = std::chrono::steady_clock::now();
  if (int rc = run_cli("grid --smoke --out \"" + dir.string() + "\"", g_work / "smoke.log"); rc != 0) {
    return {false, "grid --smoke exited with " + std::to_string(rc)};
  }
  const double secs = seconds_since(t0);
  if (int rc = run_cli("render --grid \"" + dir.string() + "\" --out \"" + again.string() + "\"",
                       g_work / "render.log");
      rc != 0) {
    return {false, "render exited with " + std::to_string(rc)};
  }

  const auto results = load_results(dir / "results.json");
  const auto rows = default_grid_rows();
  std::vector<std::string> problems;
  if (results.size() != 16) problems.push_back(std::to_string(results.size()) + " rows");
  for (std::size_t i = 0; i < std::min(results.size(), rows.size()); ++i) {
    const auto& r = results[i];
    if (r.label != rows[i].label()) problems.push_back("label " + r.label);
    if (!r.error.empty()) problems.push_back(r.row_id + ": " + r.error);
    if (!(r.dice >= 0 && r.dice <= 1 && r.miou >= 0 && r.miou <= 1)) problems.push_back(r.row_id + " out of range");
  }
  const nlohmann::json manifest = nlohmann::json::parse(slurp(dir / "run_manifest.json"));
  const std::string manifest_text = manifest.dump();
  for (const auto& row : rows) {
    if (manifest_text.find(row.id()) == std::string::npos) problems.push_back("manifest lacks " + row.id());
  }
  if (!manifest.contains("data_source")) problems.push_back("manifest lacks data_source");
  const std::string report = slurp(dir / "report.md");
  for (const char* v : {"0.867 | 0.765", "0.838 | 0.721"}) {
    if (report.find(v) == std::string::npos) problems.push_back(std::string("report lacks ") + v);
  }
  std::istringstream csv(slurp(dir / "results.csv"));
  int lines = 0;
  for (std::string l; std::getline(csv, l);) ++lines;
  if (lines != 17) problems.push_back("results.csv has " + std::to_string(lines) + " lines");

  int compared = 0;
  std::vector<fs::path> files{"results.csv", "report.md", "run_manifest.json"};
  for (const auto& e : fs::directory_iterator(dir / "panels")) files.push_back(fs::path("panels") / e.path().filename());
  for (const auto& f : files) {
    if (slurp(dir / f) != slurp(again / f)) problems.push_back("re-render differs: " + f.string());
    ++compared;
  }

  std::string detail = std::to_string(results.size()) + " rows with published labels and metrics in [0,1], manifest, "
                       "reference 0.867/0.765 and 0.838/0.721 in report, " +
                       std::to_string(compared) + " files byte-identical after render, grid " + fmt(secs, 3) + " s";
  for (const auto& p : problems) detail += "; " + p;
  return {problems.empty(), detail};
}

Outcome checkpoint_round_trip() {
  const PreparedData data = prepare_phantom_data(smoke_data_recipe(0));
  struct Variant {
    Arch arch;
    Upsampler up;
    Head head;
  };
  std::vector<Variant> variants;
  for (Arch a : {Arch::unet, Arch::resnet}) {
    for (Upsampler u : {Upsampler::transposed, Upsampler::subpixel, Upsampler::none}) variants.push_back({a, u, Head::rgb});
    variants.push_back({a, Upsampler::subpixel, Head::softmax8});
  }
  double worst = 0.0;
  int ok = 0;
  std::string failed;
  for (const auto& v : variants) {
    GeneratorConfig g;
    g.arch = v.arch;
    g.upsampler = v.up;
    g.head = v.head;
    g.base_width = 8;
    g.depth = 2;
    TrainConfig t;
    t.epochs = 1;
    t.batch_size = 4;
    t.eval_batch_size = 4;
    t.disc_base_width = 8;
    const std::string id = to_string(v.arch) + "-" + to_string(v.up) + "-" + to_string(v.head);
    t.output_dir = g_work / "ckpt" / id;
    fs::remove_all(t.output_dir);
    TrainResult r = train(data.train, data.test, g, t);
    const double live = evaluate(r.state.generator, data.test, 4).dice;
    const double saved = evaluate(r.final_checkpoint, data.test, 4).dice;
    Generator loaded = load_generator(r.final_checkpoint);
    const double reloaded = evaluate(loaded, data.test, 1).dice;
    const double err = std::max(std::abs(live - saved), std::abs(live - reloaded));
    worst = std::max(worst, err);
    if (err <= 1e-6) {
      ++ok;
    } else {
      failed += " " + id;
    }
  }
  return {ok == static_cast<int>(variants.size()),
          std::to_string(ok) + "/" + std::to_string(variants.size()) +
              " generator variants (U-Net/ResNet x transposed/sub-pixel/none, rgb and softmax8 heads), max Dice "
              "difference after save -> load -> evaluate " +
              fmt(worst) + " (<= 1e-6)" + failed};
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 3) {
    std::cerr << "usage: acceptance <retinagan-cli> <work-dir> [criteria]\n";
    return 2;
  }
  g_cli = fs::absolute(argv[1]);
  g_work = fs::absolute(argv[2]);
  fs::create_directories(g_work);
  std::set<int> only;
  if (argc > 3) {
    std::istringstream in(argv[3]);
    for (std::string tok; std::getline(in, tok, ',');) only.insert(std::stoi(tok));
  }

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"metric oracle equivalence", metric_oracle},
      {"dice-loss gradient", dice_gradient},
      {"loss spot values", loss_spot_values},
      {"shape and scaling contracts", shapes},
      {"pipeline oracles", pipeline_oracles},
      {"desk-scale training benchmark", desk_benchmark},
      {"determinism", determinism},
      {"grid integrity", grid_integrity},
      {"checkpoint round-trip", checkpoint_round_trip},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int n = static_cast<int>(i) + 1;
    if (!only.empty() && !only.count(n)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << n << " (" << criteria[i].first << "): " << o.detail
              << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
