#pragma once

#include <cstdint>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

namespace retinagan {

struct DiscriminatorConfig {
  int condition_channels = 1;
  int label_channels = 3;
  /// When false the score map depends on the label image alone.
  bool conditional = true;
  int base_width = 64;
  /// Stride-2 blocks after the first; 3 gives the 70x70 receptive field.
  int n_layers = 3;
  std::uint64_t seed = 0;

  int in_channels() const { return (conditional ? condition_channels : 0) + label_channels; }
  void validate() const;
};

void to_json(nlohmann::json& j, const DiscriminatorConfig& c);
void from_json(const nlohmann::json& j, DiscriminatorConfig& c);

/// Input pixels seen by one output unit.
int receptive_field(const DiscriminatorConfig& config);
/// Score-map side length for a square input of side `input`.
int score_map_size(const DiscriminatorConfig& config, int input);

/// patchGAN: 4x4 convolutions with strides 2 (first block and n_layers-1
/// more), then stride 1 twice; each block is conv, ReLU, batch norm (none
/// in the first block). Scores are squashed to (0, 1).
class PatchDiscriminatorImpl : public torch::nn::Module {
 public:
  explicit PatchDiscriminatorImpl(const DiscriminatorConfig& config);
  torch::Tensor forward(const torch::Tensor& x);
  const DiscriminatorConfig& config() const { return config_; }

 private:
  DiscriminatorConfig config_;
  torch::nn::Sequential body_{nullptr};
};
TORCH_MODULE(PatchDiscriminator);

PatchDiscriminator build_patchgan(const DiscriminatorConfig& config);

/// Concatenates condition and label along channels (condition dropped when
/// unconditional) and scores the pair.
torch::Tensor discriminate(PatchDiscriminator& model, const torch::Tensor& condition, const torch::Tensor& label);

}  // namespace retinagan
