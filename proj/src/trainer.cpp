#include "retinagan/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <stdexcept>

#include "retinagan/random.hpp"
#include "retinagan/srbaseline.hpp"

namespace retinagan {

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"lr_g", c.lr_g},
       {"lr_d", c.lr_d},
       {"adam_betas", {c.beta1, c.beta2}},
       {"epochs", c.epochs},
       {"decay_epochs", c.decay_epochs},
       {"batch_size", c.batch_size},
       {"lambda_l1", c.weights.lambda_l1},
       {"alpha_dice", c.weights.alpha_dice},
       {"seed", c.seed},
       {"device", c.device},
       {"deterministic", c.deterministic},
       {"disc_base_width", c.disc_base_width},
       {"disc_layers", c.disc_layers},
       {"conditional", c.conditional},
       {"eval_batch_size", c.eval_batch_size}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  // Every key is optional so hand-written config files can be partial.
  c.lr_g = j.value("lr_g", c.lr_g);
  c.lr_d = j.value("lr_d", c.lr_d);
  if (j.contains("adam_betas")) {
    c.beta1 = j.at("adam_betas").at(0).get<double>();
    c.beta2 = j.at("adam_betas").at(1).get<double>();
  }
  c.epochs = j.value("epochs", c.epochs);
  c.decay_epochs = j.value("decay_epochs", c.decay_epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.weights.lambda_l1 = j.value("lambda_l1", c.weights.lambda_l1);
  c.weights.alpha_dice = j.value("alpha_dice", c.weights.alpha_dice);
  c.seed = j.value("seed", c.seed);
  c.device = j.value("device", c.device);
  c.deterministic = j.value("deterministic", c.deterministic);
  c.disc_base_width = j.value("disc_base_width", c.disc_base_width);
  c.disc_layers = j.value("disc_layers", c.disc_layers);
  c.conditional = j.value("conditional", c.conditional);
  c.eval_batch_size = j.value("eval_batch_size", c.eval_batch_size);
}

std::string TrainHistory::to_csv() const {
  std::ostringstream out;
  out << "epoch,d_loss,g_total,g_adversarial,g_l1,g_dice,eval_dice,eval_miou,seconds\n";
  char buf[256];
  for (const auto& r : records) {
    std::snprintf(buf, sizeof buf, "%d,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.3f\n", r.epoch, r.d_loss, r.g_total,
                  r.g_adversarial, r.g_l1, r.g_dice, r.eval_dice, r.eval_miou, r.seconds);
    out << buf;
  }
  return out.str();
}

nlohmann::json TrainHistory::to_json() const {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : records) {
    arr.push_back({{"epoch", r.epoch},
                   {"d_loss", r.d_loss},
                   {"g_total", r.g_total},
                   {"g_adversarial", r.g_adversarial},
                   {"g_l1", r.g_l1},
                   {"g_dice", r.g_dice},
                   {"eval_dice", r.eval_dice},
                   {"eval_miou", r.eval_miou},
                   {"seconds", r.seconds}});
  }
  return arr;
}

TrainHistory TrainHistory::from_json(const nlohmann::json& j) {
  TrainHistory h;
  for (const auto& e : j) {
    h.records.push_back({e.at("epoch").get<int>(), e.at("d_loss").get<double>(), e.at("g_total").get<double>(),
                         e.at("g_adversarial").get<double>(), e.at("g_l1").get<double>(),
                         e.at("g_dice").get<double>(), e.at("eval_dice").get<double>(),
                         e.at("eval_miou").get<double>(), e.at("seconds").get<double>()});
  }
  return h;
}

TrainingData make_training_data(const std::vector<PatchPair>& pairs, int upscale) {
  if (upscale != 1 && upscale != kUpscale) throw std::invalid_argument("make_training_data: upscale must be 1 or 4");
  TrainingData data;
  data.upscale = upscale;
  if (pairs.empty()) return data;
  std::vector<torch::Tensor> inputs;
  std::vector<torch::Tensor> labels;
  for (const PatchPair& p : pairs) {
    inputs.push_back(tensor_from_image(p.input_lr).unsqueeze(0));
    labels.push_back(tensor_from_label_map(upscale == 1 ? downsample_majority(p.target_label_hr, kUpscale)
                                                        : p.target_label_hr));
    data.ids.push_back(p.id);
  }
  data.inputs = torch::stack(inputs);
  data.labels = torch::stack(labels);
  return data;
}

Batch make_batch(const TrainingData& data, std::span<const int64_t> indices, Head head) {
  const torch::Tensor idx = torch::tensor(std::vector<int64_t>(indices.begin(), indices.end()), torch::kLong);
  Batch b;
  b.inputs = data.inputs.index_select(0, idx);
  b.conditions = data.upscale == 1 ? b.inputs : bicubic_upsample(b.inputs, data.upscale);
  b.targets = encode_labels(data.labels.index_select(0, idx), head);
  for (int64_t i : indices) b.ids.push_back(data.ids[static_cast<std::size_t>(i)]);
  return b;
}

namespace {

void set_requires_grad(torch::nn::Module& module, bool flag) {
  for (auto& p : module.parameters()) p.set_requires_grad(flag);
}

[[noreturn]] void non_finite(const Batch& batch, const char* what, const StepLosses& s) {
  std::ostringstream msg;
  msg << "non-finite " << what << " (d=" << s.d_loss << ", g_adv=" << s.g_adversarial << ", g_l1=" << s.g_l1
      << ", g_dice=" << s.g_dice << ", g_total=" << s.g_total << ") on batch [";
  for (std::size_t i = 0; i < batch.ids.size(); ++i) msg << (i ? ", " : "") << batch.ids[i];
  msg << "]";
  throw std::runtime_error(msg.str());
}

}  // namespace

StepLosses train_step(const Batch& batch, Generator& generator, PatchDiscriminator& discriminator,
                      torch::optim::Adam& opt_g, torch::optim::Adam& opt_d, const TrainConfig& config) {
  generator->train();
  discriminator->train();
  StepLosses s;

  const torch::Tensor fake = generator->forward(batch.inputs);

  // Discriminator: real labels vs generated labels cut off from G's graph.
  set_requires_grad(*discriminator, true);
  opt_d.zero_grad();
  const torch::Tensor score_real = discriminate(discriminator, batch.conditions, batch.targets);
  const torch::Tensor score_fake = discriminate(discriminator, batch.conditions, fake.detach());
  const torch::Tensor d_loss = adversarial_loss_d(score_real, score_fake);
  s.d_loss = d_loss.item<double>();
  if (!std::isfinite(s.d_loss)) non_finite(batch, "discriminator loss", s);
  d_loss.backward();
  opt_d.step();

  // Generator, with the discriminator frozen.
  set_requires_grad(*discriminator, false);
  opt_g.zero_grad();
  const GeneratorLoss g = total_generator_loss(discriminate(discriminator, batch.conditions, fake), fake,
                                               batch.targets, config.weights);
  s.g_total = g.total.item<double>();
  s.g_adversarial = g.adversarial.item<double>();
  s.g_l1 = g.l1.item<double>();
  s.g_dice = g.dice.item<double>();
  if (!std::isfinite(s.g_total)) non_finite(batch, "generator loss", s);
  g.total.backward();
  opt_g.step();
  set_requires_grad(*discriminator, true);
  return s;
}

GanState make_gan(const GeneratorConfig& generator_config, const TrainConfig& train_config) {
  GanState st;
  st.generator_config = generator_config;
  st.train_config = train_config;
  st.discriminator_config.condition_channels = generator_config.in_channels;
  st.discriminator_config.label_channels = generator_config.out_channels();
  st.discriminator_config.conditional = train_config.conditional;
  st.discriminator_config.base_width = train_config.disc_base_width;
  st.discriminator_config.n_layers = train_config.disc_layers;
  st.discriminator_config.seed = derive_seed(generator_config.seed, {hash_string("discriminator")});
  st.generator = build_generator(generator_config);
  st.discriminator = build_patchgan(st.discriminator_config);
  const torch::Device device(train_config.device);
  st.generator->to(device);
  st.discriminator->to(device);
  st.opt_g = std::make_unique<torch::optim::Adam>(
      st.generator->parameters(),
      torch::optim::AdamOptions(train_config.lr_g).betas({train_config.beta1, train_config.beta2}));
  st.opt_d = std::make_unique<torch::optim::Adam>(
      st.discriminator->parameters(),
      torch::optim::AdamOptions(train_config.lr_d).betas({train_config.beta1, train_config.beta2}));
  return st;
}

namespace {

void collect_adam_state(torch::optim::Adam& opt, const std::string& prefix, Checkpoint& ck) {
  const auto& params = opt.param_groups().at(0).params();
  auto& state = opt.state();
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto it = state.find(params[i].unsafeGetTensorImpl());
    if (it == state.end()) continue;
    auto& s = static_cast<torch::optim::AdamParamState&>(*it->second);
    const std::string base = prefix + "." + std::to_string(i);
    ck.tensors.emplace_back(base + ".step", torch::tensor({s.step()}, torch::kInt64));
    ck.tensors.emplace_back(base + ".exp_avg", s.exp_avg().clone());
    ck.tensors.emplace_back(base + ".exp_avg_sq", s.exp_avg_sq().clone());
  }
}

void restore_adam_state(torch::optim::Adam& opt, const std::string& prefix, const Checkpoint& ck) {
  const auto& params = opt.param_groups().at(0).params();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const std::string base = prefix + "." + std::to_string(i);
    if (!ck.contains(base + ".step")) continue;
    auto s = std::make_unique<torch::optim::AdamParamState>();
    s->step(ck.at(base + ".step").item<int64_t>());
    s->exp_avg(ck.at(base + ".exp_avg").clone());
    s->exp_avg_sq(ck.at(base + ".exp_avg_sq").clone());
    opt.state()[params[i].unsafeGetTensorImpl()] = std::move(s);
  }
}

}  // namespace

void save_gan_checkpoint(const std::filesystem::path& path, const GanState& state) {
  Checkpoint ck;
  ck.meta["kind"] = "gan";
  ck.meta["generator"] = state.generator_config;
  ck.meta["discriminator"] = state.discriminator_config;
  ck.meta["train"] = state.train_config;
  ck.meta["epochs_done"] = state.epochs_done;
  ck.meta["best_dice"] = state.best_dice;
  ck.meta["history"] = state.history.to_json();
  collect_module_state(*state.generator, "generator", ck);
  collect_module_state(*state.discriminator, "discriminator", ck);
  if (state.opt_g) collect_adam_state(*state.opt_g, "opt_g", ck);
  if (state.opt_d) collect_adam_state(*state.opt_d, "opt_d", ck);
  save_checkpoint(path, ck);
}

GanState load_gan_checkpoint(const std::filesystem::path& path) {
  const Checkpoint ck = load_checkpoint(path);
  if (ck.meta.value("kind", "") != "gan") throw std::runtime_error(path.string() + " is not a GAN checkpoint");
  TrainConfig tc;
  from_json(ck.meta.at("train"), tc);
  GanState st = make_gan(ck.meta.at("generator").get<GeneratorConfig>(), tc);
  const auto dc = ck.meta.at("discriminator").get<DiscriminatorConfig>();
  if (dc.in_channels() != st.discriminator_config.in_channels()) {
    throw std::runtime_error(path.string() + ": discriminator config mismatch");
  }
  restore_module_state(*st.generator, "generator", ck);
  restore_module_state(*st.discriminator, "discriminator", ck);
  restore_adam_state(*st.opt_g, "opt_g", ck);
  restore_adam_state(*st.opt_d, "opt_d", ck);
  st.epochs_done = ck.meta.at("epochs_done").get<int>();
  st.best_dice = ck.meta.at("best_dice").get<double>();
  st.history = TrainHistory::from_json(ck.meta.at("history"));
  return st;
}

Generator load_generator(const std::filesystem::path& path) {
  const Checkpoint ck = load_checkpoint(path);
  Generator g = build_generator(ck.meta.at("generator").get<GeneratorConfig>());
  restore_module_state(*g, "generator", ck);
  g->eval();
  return g;
}

void configure_backend(const TrainConfig& config) {
  at::globalContext().setDeterministicAlgorithms(config.deterministic, /*warn_only=*/true);
}

double lr_factor(const TrainConfig& config, int epoch) {
  const int decay_from = config.epochs - config.decay_epochs;
  if (config.decay_epochs <= 0 || epoch <= decay_from) return 1.0;
  return static_cast<double>(config.epochs - epoch + 1) / (config.decay_epochs + 1);
}

namespace {

void set_lr(torch::optim::Adam& opt, double lr) {
  for (auto& group : opt.param_groups()) static_cast<torch::optim::AdamOptions&>(group.options()).lr(lr);
}

}  // namespace

void train_epochs(GanState& st, const std::vector<PatchPair>& train_pairs, const std::vector<PatchPair>& test_pairs) {
  const TrainConfig& cfg = st.train_config;
  if (train_pairs.empty()) throw std::invalid_argument("train: empty training split");
  if (test_pairs.empty()) throw std::invalid_argument("train: empty test split");
  if (cfg.batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
  if (cfg.decay_epochs < 0 || cfg.decay_epochs > cfg.epochs) throw std::invalid_argument("train: bad decay_epochs");
  configure_backend(cfg);
  const int upscale = st.generator_config.upscale();
  const TrainingData data = make_training_data(train_pairs, upscale);
  const Head head = st.generator_config.head;
  namespace fs = std::filesystem;
  if (!cfg.output_dir.empty()) fs::create_directories(cfg.output_dir);

  while (st.epochs_done < cfg.epochs) {
    const int epoch = st.epochs_done + 1;
    set_lr(*st.opt_g, cfg.lr_g * lr_factor(cfg, epoch));
    set_lr(*st.opt_d, cfg.lr_d * lr_factor(cfg, epoch));
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<int64_t> order(static_cast<std::size_t>(data.size()));
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int64_t>(i);
    std::mt19937_64 rng(derive_seed(cfg.seed, {hash_string("shuffle"), static_cast<std::uint64_t>(epoch)}));
    std::shuffle(order.begin(), order.end(), rng);

    EpochRecord rec;
    rec.epoch = epoch;
    int steps = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      // A lone trailing sample would skew batch-norm statistics of a batched run.
      if (cfg.batch_size > 1 && end - start < 2 && steps > 0) break;
      const Batch batch = make_batch(data, std::span<const int64_t>(order).subspan(start, end - start), head);
      const StepLosses s = train_step(batch, st.generator, st.discriminator, *st.opt_g, *st.opt_d, cfg);
      rec.d_loss += s.d_loss;
      rec.g_total += s.g_total;
      rec.g_adversarial += s.g_adversarial;
      rec.g_l1 += s.g_l1;
      rec.g_dice += s.g_dice;
      ++steps;
    }
    rec.d_loss /= steps;
    rec.g_total /= steps;
    rec.g_adversarial /= steps;
    rec.g_l1 /= steps;
    rec.g_dice /= steps;
    const MetricReport report = evaluate(st.generator, test_pairs, cfg.eval_batch_size);
    rec.eval_dice = report.dice;
    rec.eval_miou = report.miou;
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    st.history.records.push_back(rec);
    st.epochs_done = epoch;

    const bool improved = rec.eval_dice > st.best_dice;
    if (improved) st.best_dice = rec.eval_dice;
    if (!cfg.output_dir.empty()) {
      if (improved) save_gan_checkpoint(cfg.output_dir / "best.ckpt", st);
      save_gan_checkpoint(cfg.output_dir / "final.ckpt", st);
      std::ofstream(cfg.output_dir / "history.csv") << st.history.to_csv();
    }
    if (cfg.verbose) {
      std::fprintf(stderr, "[epoch %d/%d] d=%.4f g=%.4f (adv %.4f l1 %.4f dice %.4f) eval dice=%.4f miou=%.4f %.1fs\n",
                   epoch, cfg.epochs, rec.d_loss, rec.g_total, rec.g_adversarial, rec.g_l1, rec.g_dice,
                   rec.eval_dice, rec.eval_miou, rec.seconds);
    }
  }
}

TrainResult train(const std::vector<PatchPair>& train_pairs, const std::vector<PatchPair>& test_pairs,
                  const GeneratorConfig& generator_config, const TrainConfig& train_config,
                  const std::optional<std::filesystem::path>& resume) {
  TrainResult result;
  if (resume) {
    result.state = load_gan_checkpoint(*resume);
    // The stored config governs the models; the caller's config may extend the run.
    result.state.train_config.epochs = train_config.epochs;
    result.state.train_config.output_dir = train_config.output_dir;
    result.state.train_config.verbose = train_config.verbose;
  } else {
    result.state = make_gan(generator_config, train_config);
  }
  train_epochs(result.state, train_pairs, test_pairs);
  if (!train_config.output_dir.empty()) {
    result.best_checkpoint = train_config.output_dir / "best.ckpt";
    result.final_checkpoint = train_config.output_dir / "final.ckpt";
  }
  return result;
}

std::vector<LabelMap> predict_labels(Generator& generator, const std::vector<PatchPair>& pairs, int batch_size) {
  if (batch_size < 1) throw std::invalid_argument("predict_labels: batch_size must be >= 1");
  torch::NoGradGuard no_grad;
  generator->eval();
  std::vector<LabelMap> out;
  out.reserve(pairs.size());
  for (std::size_t start = 0; start < pairs.size(); start += batch_size) {
    const std::size_t end = std::min(pairs.size(), start + batch_size);
    std::vector<torch::Tensor> xs;
    for (std::size_t i = start; i < end; ++i) xs.push_back(tensor_from_image(pairs[i].input_lr).unsqueeze(0));
    const torch::Tensor y = generator->forward(torch::stack(xs));
    for (int64_t i = 0; i < y.size(0); ++i) out.push_back(decode_output(y[i], generator->config().head));
  }
  return out;
}

MetricReport evaluate(Generator& generator, const std::vector<PatchPair>& pairs, int batch_size) {
  if (pairs.empty()) throw std::invalid_argument("evaluate: empty split");
  const std::vector<LabelMap> preds = predict_labels(generator, pairs, batch_size);
  const bool low_res = generator->config().upscale() == 1;
  std::vector<MetricReport> reports;
  reports.reserve(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const LabelMap& gt = pairs[i].target_label_hr;
    reports.push_back(low_res ? miou(preds[i], downsample_majority(gt, kUpscale)) : miou(preds[i], gt));
  }
  return average_reports(reports);
}

MetricReport evaluate(const std::filesystem::path& checkpoint, const std::vector<PatchPair>& pairs, int batch_size) {
  Generator g = load_generator(checkpoint);
  return evaluate(g, pairs, batch_size);
}

}  // namespace retinagan
