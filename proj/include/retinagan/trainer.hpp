#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "retinagan/checkpoint.hpp"
#include "retinagan/discriminator.hpp"
#include "retinagan/generators.hpp"
#include "retinagan/metrics.hpp"
#include "retinagan/objectives.hpp"
#include "retinagan/pipeline.hpp"

namespace retinagan {

struct TrainConfig {
  double lr_g = 1e-4;
  double lr_d = 1e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  int epochs = 100;
  /// Linear decay of both learning rates to zero over the last this many
  /// epochs; 0 keeps them constant.
  int decay_epochs = 0;
  int batch_size = 16;
  LossWeights weights;
  std::uint64_t seed = 0;
  std::string device = "cpu";
  /// Request deterministic kernels from the backend.
  bool deterministic = true;

  int disc_base_width = 64;
  int disc_layers = 3;
  bool conditional = true;

  int eval_batch_size = 16;
  /// Where best.ckpt, final.ckpt and history.csv go; empty disables saving.
  std::filesystem::path output_dir;
  bool verbose = false;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

struct EpochRecord {
  int epoch = 0;
  double d_loss = 0.0;
  double g_total = 0.0;
  double g_adversarial = 0.0;
  double g_l1 = 0.0;
  double g_dice = 0.0;
  double eval_dice = 0.0;
  double eval_miou = 0.0;
  double seconds = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> records;

  std::string to_csv() const;
  nlohmann::json to_json() const;
  static TrainHistory from_json(const nlohmann::json& j);
};

/// Patches converted to tensors at the generator's output resolution.
struct TrainingData {
  torch::Tensor inputs;  // N x 1 x 56 x 56, float
  torch::Tensor labels;  // N x S x S, uint8; S = 56 * upscale
  std::vector<std::string> ids;
  int upscale = 4;

  int64_t size() const { return inputs.defined() ? inputs.size(0) : 0; }
};

/// upscale 4 keeps the 224x224 labels; upscale 1 uses their 4x4 majority vote.
TrainingData make_training_data(const std::vector<PatchPair>& pairs, int upscale);

struct Batch {
  torch::Tensor inputs;      // N x 1 x 56 x 56
  torch::Tensor conditions;  // inputs resampled to the target resolution
  torch::Tensor targets;     // encoded labels (rgb or one-hot)
  std::vector<std::string> ids;
};

Batch make_batch(const TrainingData& data, std::span<const int64_t> indices, Head head);

struct StepLosses {
  double d_loss = 0.0;
  double g_total = 0.0;
  double g_adversarial = 0.0;
  double g_l1 = 0.0;
  double g_dice = 0.0;
};

/// One discriminator update on (real, detached generated) followed by one
/// generator update on the full objective. The discriminator's parameters
/// are frozen during the generator update. Throws std::runtime_error with
/// the batch ids and term values when a loss is not finite.
StepLosses train_step(const Batch& batch, Generator& generator, PatchDiscriminator& discriminator,
                      torch::optim::Adam& opt_g, torch::optim::Adam& opt_d, const TrainConfig& config);

/// Everything needed to continue training.
struct GanState {
  GeneratorConfig generator_config;
  DiscriminatorConfig discriminator_config;
  TrainConfig train_config;
  Generator generator{nullptr};
  PatchDiscriminator discriminator{nullptr};
  std::unique_ptr<torch::optim::Adam> opt_g;
  std::unique_ptr<torch::optim::Adam> opt_d;
  int epochs_done = 0;
  double best_dice = -1.0;
  TrainHistory history;
};

/// Fresh models; the discriminator seed is derived from the generator's.
GanState make_gan(const GeneratorConfig& generator_config, const TrainConfig& train_config);

void save_gan_checkpoint(const std::filesystem::path& path, const GanState& state);
GanState load_gan_checkpoint(const std::filesystem::path& path);
/// Generator only, in evaluation mode.
Generator load_generator(const std::filesystem::path& path);

/// Learning-rate multiplier for a 1-based epoch.
double lr_factor(const TrainConfig& config, int epoch);

/// Applies determinism and threading settings for `config`.
void configure_backend(const TrainConfig& config);

/// Trains until `state.train_config.epochs` epochs are done, evaluating on
/// `test` after each epoch. Shuffling is seeded per epoch, so a resumed run
/// matches an uninterrupted one.
void train_epochs(GanState& state, const std::vector<PatchPair>& train, const std::vector<PatchPair>& test);

struct TrainResult {
  GanState state;
  std::filesystem::path best_checkpoint;
  std::filesystem::path final_checkpoint;
};

/// Builds the models (or resumes from `resume`) and trains.
TrainResult train(const std::vector<PatchPair>& train_pairs, const std::vector<PatchPair>& test_pairs,
                  const GeneratorConfig& generator_config, const TrainConfig& train_config,
                  const std::optional<std::filesystem::path>& resume = std::nullopt);

/// Per-image Dice/mIOU averaged over `pairs`, generator in evaluation mode.
/// Upscaling generators are scored against the 224x224 labels, the others
/// against the 56x56 majority-vote labels.
MetricReport evaluate(Generator& generator, const std::vector<PatchPair>& pairs, int batch_size = 16);
MetricReport evaluate(const std::filesystem::path& checkpoint, const std::vector<PatchPair>& pairs,
                      int batch_size = 16);

/// Label maps predicted for `pairs`, in order.
std::vector<LabelMap> predict_labels(Generator& generator, const std::vector<PatchPair>& pairs, int batch_size = 16);

}  // namespace retinagan
