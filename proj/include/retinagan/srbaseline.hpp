#pragma once

#include <cstdint>
#include <vector>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "retinagan/generators.hpp"
#include "retinagan/image.hpp"
#include "retinagan/metrics.hpp"
#include "retinagan/pipeline.hpp"

namespace retinagan {

/// Coefficient of the Keys cubic convolution kernel.
inline constexpr double kBicubicA = -0.5;

/// (in * factor) x in interpolation matrix: half-pixel aligned sample
/// positions, four taps, indices clamped at the borders.
torch::Tensor bicubic_matrix(int64_t in, int64_t factor, torch::ScalarType dtype = torch::kFloat64);

Image bicubic_upsample(const Image& image, int factor = 4);
/// Works on the last two dimensions of any tensor with dim >= 2.
torch::Tensor bicubic_upsample(const torch::Tensor& x, int factor = 4);

struct SrcnnConfig {
  int kernel1 = 9;
  int kernel2 = 1;
  int kernel3 = 5;
  int width1 = 64;
  int width2 = 32;
  int channels = 3;
  int upscale = 4;
  /// Predict a correction added to the bicubic input instead of the image itself.
  bool residual = true;
  std::uint64_t seed = 0;
};

void to_json(nlohmann::json& j, const SrcnnConfig& c);
void from_json(const nlohmann::json& j, SrcnnConfig& c);

/// Three same-size convolutions (k1 -> k2 -> k3) with ReLU between them,
/// operating on an already bicubic-upsampled image.
class SrcnnImpl : public torch::nn::Module {
 public:
  explicit SrcnnImpl(const SrcnnConfig& config);
  torch::Tensor forward(const torch::Tensor& x);
  const SrcnnConfig& config() const { return config_; }

  /// Zeroes the last layer so the network adds nothing to its input.
  void zero_refinement();

 private:
  SrcnnConfig config_;
  torch::nn::Conv2d conv1_{nullptr};
  torch::nn::Conv2d conv2_{nullptr};
  torch::nn::Conv2d conv3_{nullptr};
};
TORCH_MODULE(Srcnn);

Srcnn build_srcnn(const SrcnnConfig& config);

struct SrPairs {
  torch::Tensor inputs;   // N x 3 x 224 x 224, bicubic-upsampled low-res segmentation
  torch::Tensor targets;  // N x 3 x 224 x 224, high-res segmentation
};

/// Low-res side: majority-vote 56x56 labels, palette rendered, bicubic x4.
SrPairs make_sr_pairs(const std::vector<PatchPair>& pairs);

struct SrcnnTrainConfig {
  int epochs = 20;
  int batch_size = 8;
  double lr = 1e-3;
  /// Side of the random training sub-images; 0 trains on full frames.
  int crop = 48;
  std::uint64_t seed = 0;
};

/// Mean-squared-error training. Returns the mean training loss per epoch.
std::vector<double> train_srcnn(Srcnn& model, const SrPairs& data, const SrcnnTrainConfig& config);

/// MSE of model(inputs) against targets, in evaluation mode.
double srcnn_mse(Srcnn& model, const SrPairs& data);

/// Palette colour expectation for softmax8 outputs; rgb outputs pass through.
torch::Tensor output_to_rgb(const torch::Tensor& output, Head head);

/// 56x56 segmentation -> bicubic x4 -> SR-CNN refinement (skipped when
/// `srcnn` is null) -> RGB batch at 224x224. Never records gradients.
torch::Tensor disjoint_forward(Generator& gan56, Srcnn* srcnn, const torch::Tensor& inputs);

/// Single-image disjoint pipeline, decoded to a 224x224 label map.
LabelMap disjoint_pipeline(Generator& gan56, Srcnn* srcnn, const Image& input_lr);

/// Per-image metrics of the disjoint pipeline, averaged.
MetricReport evaluate_disjoint(Generator& gan56, Srcnn* srcnn, const std::vector<PatchPair>& pairs,
                               int batch_size = 16);

}  // namespace retinagan
