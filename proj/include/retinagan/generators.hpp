#pragma once

#include <cstdint>
#include <string>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

namespace retinagan {

enum class Arch { unet, resnet };
enum class Upsampler {
  transposed,
  subpixel,
  /// No upscaling: the 56x56 generator of the disjoint SR-CNN baseline.
  none,
};
enum class Head {
  rgb,       // 3 channels, sigmoid
  softmax8,  // one channel per class, softmax
};

std::string to_string(Arch a);
std::string to_string(Upsampler u);
std::string to_string(Head h);
Arch arch_from_string(const std::string& s);
Upsampler upsampler_from_string(const std::string& s);
Head head_from_string(const std::string& s);

struct GeneratorConfig {
  Arch arch = Arch::resnet;
  Upsampler upsampler = Upsampler::subpixel;
  Head head = Head::rgb;
  int in_channels = 1;
  int base_width = 64;
  /// Resolution levels (U-Net) or bottleneck count (ResNet); 0 selects 4 / 9.
  int depth = 0;
  std::uint64_t seed = 0;

  int resolved_depth() const;
  /// 4 for transposed/subpixel, 1 for none.
  int upscale() const;
  int out_channels() const;
  /// Channel width after the upsampling stage.
  int upsampled_width() const;
  void validate() const;
};

void to_json(nlohmann::json& j, const GeneratorConfig& c);
void from_json(const nlohmann::json& j, GeneratorConfig& c);

/// Pixel shuffle: (N,) C*r*r x H x W -> C x H*r x W*r with
/// out[c, h*r+i, w*r+j] = in[c*r*r + i*r + j, h, w].
torch::Tensor subpixel_upsample(const torch::Tensor& x, int64_t r);

/// 1x1 reduce -> 3x3 -> 1x1 expand, each followed by batch norm (ReLU on
/// the first two), added to the identity. No activation after the sum, so a
/// block with zero weights is exactly the identity.
class BottleneckBlockImpl : public torch::nn::Module {
 public:
  BottleneckBlockImpl(int64_t channels, int64_t reduced);
  torch::Tensor forward(const torch::Tensor& x);
  int64_t channels() const { return channels_; }

 private:
  int64_t channels_;
  torch::nn::Sequential residual_{nullptr};
};
TORCH_MODULE(BottleneckBlock);

/// Bottleneck whose middle layer is a 2x2 stride-2 transposed convolution;
/// the skip path goes through its own 2x2 stride-2 transposed convolution.
/// Output is ReLU(skip + residual) at twice the spatial size.
class TransposedBottleneckImpl : public torch::nn::Module {
 public:
  TransposedBottleneckImpl(int64_t in_channels, int64_t out_channels);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  int64_t in_channels_;
  torch::nn::Sequential residual_{nullptr};
  torch::nn::ConvTranspose2d skip_{nullptr};
};
TORCH_MODULE(TransposedBottleneck);

/// 3x3 convolution to out*r*r channels, pixel shuffle by r, batch norm, ReLU.
class SubpixelConvImpl : public torch::nn::Module {
 public:
  SubpixelConvImpl(int64_t in_channels, int64_t out_channels, int64_t r);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  int64_t r_;
  torch::nn::Conv2d conv_{nullptr};
  torch::nn::BatchNorm2d norm_{nullptr};
};
TORCH_MODULE(SubpixelConv);

/// (conv3x3, BN, ReLU) x 2
class DoubleConvImpl : public torch::nn::Module {
 public:
  DoubleConvImpl(int64_t in_channels, int64_t out_channels);
  torch::Tensor forward(const torch::Tensor& x) { return body_->forward(x); }

 private:
  torch::nn::Sequential body_{nullptr};
};
TORCH_MODULE(DoubleConv);

/// Encoder-decoder with concatenating skips; returns base_width channels at
/// the input resolution.
class UNetBodyImpl : public torch::nn::Module {
 public:
  UNetBodyImpl(int64_t in_channels, int64_t base_width, int levels);
  torch::Tensor forward(const torch::Tensor& x);

  /// When set, the skip of encoder level `level` is replaced by zeros.
  void set_skip_ablation(int level) { ablated_skip_ = level; }

 private:
  int levels_;
  int ablated_skip_ = -1;
  std::vector<DoubleConv> encoders_;
  std::vector<torch::nn::ConvTranspose2d> ups_;
  std::vector<DoubleConv> decoders_;
};
TORCH_MODULE(UNetBody);

/// 3x3 stem followed by `blocks` bottlenecks at the input resolution.
class ResNetBodyImpl : public torch::nn::Module {
 public:
  ResNetBodyImpl(int64_t in_channels, int64_t base_width, int blocks);
  torch::Tensor forward(const torch::Tensor& x) { return body_->forward(x); }

 private:
  torch::nn::Sequential body_{nullptr};
};
TORCH_MODULE(ResNetBody);

/// Full generator: body -> upsampler -> 1x1 head. Outputs probabilities:
/// sigmoid per channel (rgb) or softmax across channels (softmax8).
class GeneratorImpl : public torch::nn::Module {
 public:
  explicit GeneratorImpl(const GeneratorConfig& config);
  torch::Tensor forward(const torch::Tensor& x);
  const GeneratorConfig& config() const { return config_; }

  /// Null unless arch == unet.
  UNetBody unet_body() const { return unet_; }

 private:
  GeneratorConfig config_;
  UNetBody unet_{nullptr};
  ResNetBody resnet_{nullptr};
  torch::nn::Sequential upsampler_{nullptr};
  torch::nn::Conv2d head_{nullptr};
};
TORCH_MODULE(Generator);

Generator build_unet_generator(GeneratorConfig config);
Generator build_resnet_generator(GeneratorConfig config);
Generator build_generator(const GeneratorConfig& config);

/// Conv weights ~ N(0, 0.02), conv biases 0, norm scale 1 and shift 0,
/// drawn from a generator seeded with `seed`.
void init_weights(torch::nn::Module& module, std::uint64_t seed);

int64_t parameter_count(const torch::nn::Module& module);

}  // namespace retinagan
