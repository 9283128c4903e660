#include "retinagan/generators.hpp"

#include <ATen/CPUGeneratorImpl.h>

#include <stdexcept>

namespace retinagan {

namespace nn = torch::nn;

std::string to_string(Arch a) { return a == Arch::unet ? "unet" : "resnet"; }

std::string to_string(Upsampler u) {
  switch (u) {
    case Upsampler::transposed:
      return "transposed";
    case Upsampler::subpixel:
      return "subpixel";
    case Upsampler::none:
      return "none";
  }
  return "?";
}

std::string to_string(Head h) { return h == Head::rgb ? "rgb" : "softmax8"; }

Arch arch_from_string(const std::string& s) {
  if (s == "unet") return Arch::unet;
  if (s == "resnet") return Arch::resnet;
  throw std::invalid_argument("unknown arch: " + s);
}

Upsampler upsampler_from_string(const std::string& s) {
  if (s == "transposed") return Upsampler::transposed;
  if (s == "subpixel") return Upsampler::subpixel;
  if (s == "none") return Upsampler::none;
  throw std::invalid_argument("unknown upsampler: " + s);
}

Head head_from_string(const std::string& s) {
  if (s == "rgb") return Head::rgb;
  if (s == "softmax8") return Head::softmax8;
  throw std::invalid_argument("unknown head: " + s);
}

int GeneratorConfig::resolved_depth() const {
  if (depth > 0) return depth;
  return arch == Arch::unet ? 4 : 9;
}

int GeneratorConfig::upscale() const { return upsampler == Upsampler::none ? 1 : 4; }

int GeneratorConfig::out_channels() const { return head == Head::rgb ? 3 : 8; }

int GeneratorConfig::upsampled_width() const {
  return upsampler == Upsampler::none ? base_width : base_width / 4;
}

void GeneratorConfig::validate() const {
  if (in_channels <= 0) throw std::invalid_argument("GeneratorConfig: in_channels must be positive");
  if (base_width < 4 || base_width % 4 != 0) {
    throw std::invalid_argument("GeneratorConfig: base_width must be a positive multiple of 4");
  }
  if (depth < 0) throw std::invalid_argument("GeneratorConfig: depth must be >= 0");
  if (arch == Arch::unet) {
    const int levels = resolved_depth();
    // 56 must halve cleanly levels-1 times.
    if (levels < 1 || 56 % (1 << (levels - 1)) != 0) {
      throw std::invalid_argument("GeneratorConfig: U-Net levels must be in [1, 4] for 56x56 inputs");
    }
  }
}

void to_json(nlohmann::json& j, const GeneratorConfig& c) {
  j = {{"arch", to_string(c.arch)},       {"upsampler", to_string(c.upsampler)},
       {"head", to_string(c.head)},       {"in_channels", c.in_channels},
       {"base_width", c.base_width},      {"depth", c.depth},
       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, GeneratorConfig& c) {
  c.arch = arch_from_string(j.at("arch").get<std::string>());
  c.upsampler = upsampler_from_string(j.at("upsampler").get<std::string>());
  c.head = head_from_string(j.at("head").get<std::string>());
  c.in_channels = j.at("in_channels").get<int>();
  c.base_width = j.at("base_width").get<int>();
  c.depth = j.at("depth").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
}

torch::Tensor subpixel_upsample(const torch::Tensor& x, int64_t r) {
  if (r < 1) throw std::invalid_argument("subpixel_upsample: factor must be >= 1");
  const bool batched = x.dim() == 4;
  if (!batched && x.dim() != 3) throw std::invalid_argument("subpixel_upsample: expected CxHxW or NxCxHxW");
  const torch::Tensor in = batched ? x : x.unsqueeze(0);
  const int64_t n = in.size(0), c = in.size(1), h = in.size(2), w = in.size(3);
  if (c % (r * r) != 0) throw std::invalid_argument("subpixel_upsample: channels not divisible by r^2");
  const int64_t oc = c / (r * r);
  // (n, oc, i, j, h, w) -> (n, oc, h, i, w, j)
  torch::Tensor out = in.reshape({n, oc, r, r, h, w}).permute({0, 1, 4, 2, 5, 3}).reshape({n, oc, h * r, w * r});
  return batched ? out : out.squeeze(0);
}

namespace {

nn::Conv2d conv(int64_t in, int64_t out, int64_t k, bool bias = false) {
  return nn::Conv2d(nn::Conv2dOptions(in, out, k).padding(k / 2).bias(bias));
}

nn::ConvTranspose2d conv_t2(int64_t in, int64_t out) {
  return nn::ConvTranspose2d(nn::ConvTranspose2dOptions(in, out, 2).stride(2).bias(false));
}

}  // namespace

BottleneckBlockImpl::BottleneckBlockImpl(int64_t channels, int64_t reduced) : channels_(channels) {
  residual_ = register_module(
      "residual", nn::Sequential(conv(channels, reduced, 1), nn::BatchNorm2d(reduced), nn::ReLU(),
                                 conv(reduced, reduced, 3), nn::BatchNorm2d(reduced), nn::ReLU(),
                                 conv(reduced, channels, 1), nn::BatchNorm2d(channels)));
}

torch::Tensor BottleneckBlockImpl::forward(const torch::Tensor& x) {
  if (x.size(1) != channels_) throw std::invalid_argument("BottleneckBlock: channel mismatch");
  return x + residual_->forward(x);
}

TransposedBottleneckImpl::TransposedBottleneckImpl(int64_t in_channels, int64_t out_channels)
    : in_channels_(in_channels) {
  const int64_t mid = std::max<int64_t>(1, in_channels / 4);
  residual_ = register_module(
      "residual", nn::Sequential(conv(in_channels, mid, 1), nn::BatchNorm2d(mid), nn::ReLU(), conv_t2(mid, mid),
                                 nn::BatchNorm2d(mid), nn::ReLU(), conv(mid, out_channels, 1),
                                 nn::BatchNorm2d(out_channels)));
  skip_ = register_module("skip", conv_t2(in_channels, out_channels));
}

torch::Tensor TransposedBottleneckImpl::forward(const torch::Tensor& x) {
  if (x.size(1) != in_channels_) throw std::invalid_argument("TransposedBottleneck: channel mismatch");
  return torch::relu(skip_->forward(x) + residual_->forward(x));
}

SubpixelConvImpl::SubpixelConvImpl(int64_t in_channels, int64_t out_channels, int64_t r) : r_(r) {
  conv_ = register_module("conv", conv(in_channels, out_channels * r * r, 3));
  norm_ = register_module("norm", nn::BatchNorm2d(out_channels));
}

torch::Tensor SubpixelConvImpl::forward(const torch::Tensor& x) {
  return torch::relu(norm_->forward(subpixel_upsample(conv_->forward(x), r_)));
}

DoubleConvImpl::DoubleConvImpl(int64_t in_channels, int64_t out_channels) {
  body_ = register_module("body", nn::Sequential(conv(in_channels, out_channels, 3), nn::BatchNorm2d(out_channels),
                                                 nn::ReLU(), conv(out_channels, out_channels, 3),
                                                 nn::BatchNorm2d(out_channels), nn::ReLU()));
}

UNetBodyImpl::UNetBodyImpl(int64_t in_channels, int64_t base_width, int levels) : levels_(levels) {
  int64_t prev = in_channels;
  for (int i = 0; i < levels; ++i) {
    const int64_t width = base_width << i;
    encoders_.push_back(register_module("enc" + std::to_string(i), DoubleConv(prev, width)));
    prev = width;
  }
  for (int i = levels - 1; i >= 1; --i) {
    const int64_t width = base_width << i;
    const int64_t below = base_width << (i - 1);
    ups_.push_back(register_module("up" + std::to_string(i), nn::ConvTranspose2d(nn::ConvTranspose2dOptions(width, below, 2).stride(2))));
    decoders_.push_back(register_module("dec" + std::to_string(i), DoubleConv(2 * below, below)));
  }
}

torch::Tensor UNetBodyImpl::forward(const torch::Tensor& x) {
  std::vector<torch::Tensor> skips;
  torch::Tensor h = x;
  for (int i = 0; i < levels_; ++i) {
    if (i > 0) h = torch::max_pool2d(h, 2);
    h = encoders_[i]->forward(h);
    skips.push_back(h);
  }
  for (int i = levels_ - 1, k = 0; i >= 1; --i, ++k) {
    h = ups_[k]->forward(h);
    torch::Tensor skip = skips[i - 1];
    if (ablated_skip_ == i - 1) skip = torch::zeros_like(skip);
    h = decoders_[k]->forward(torch::cat({skip, h}, 1));
  }
  return h;
}

ResNetBodyImpl::ResNetBodyImpl(int64_t in_channels, int64_t base_width, int blocks) {
  body_ = nn::Sequential(conv(in_channels, base_width, 3), nn::BatchNorm2d(base_width), nn::ReLU());
  const int64_t reduced = std::max<int64_t>(1, base_width / 4);
  for (int i = 0; i < blocks; ++i) body_->push_back(BottleneckBlock(base_width, reduced));
  register_module("body", body_);
}

GeneratorImpl::GeneratorImpl(const GeneratorConfig& config) : config_(config) {
  config_.validate();
  const int64_t base = config_.base_width;
  if (config_.arch == Arch::unet) {
    unet_ = register_module("unet", UNetBody(config_.in_channels, base, config_.resolved_depth()));
  } else {
    resnet_ = register_module("resnet", ResNetBody(config_.in_channels, base, config_.resolved_depth()));
  }

  upsampler_ = nn::Sequential();
  switch (config_.upsampler) {
    case Upsampler::transposed:
      if (config_.arch == Arch::resnet) {
        upsampler_->push_back(TransposedBottleneck(base, base / 2));
        upsampler_->push_back(TransposedBottleneck(base / 2, base / 4));
      } else {
        upsampler_->push_back(conv_t2(base, base / 2));
        upsampler_->push_back(nn::BatchNorm2d(base / 2));
        upsampler_->push_back(nn::ReLU());
        upsampler_->push_back(conv_t2(base / 2, base / 4));
        upsampler_->push_back(nn::BatchNorm2d(base / 4));
        upsampler_->push_back(nn::ReLU());
      }
      break;
    case Upsampler::subpixel:
      upsampler_->push_back(SubpixelConv(base, base / 4, 4));
      break;
    case Upsampler::none:
      upsampler_->push_back(nn::Identity());
      break;
  }
  register_module("upsampler", upsampler_);
  head_ = register_module("head", conv(config_.upsampled_width(), config_.out_channels(), 1, true));
  init_weights(*this, config_.seed);
}

torch::Tensor GeneratorImpl::forward(const torch::Tensor& x) {
  if (x.dim() != 4 || x.size(1) != config_.in_channels) {
    throw std::invalid_argument("Generator: expected N x " + std::to_string(config_.in_channels) + " x H x W input");
  }
  torch::Tensor h = config_.arch == Arch::unet ? unet_->forward(x) : resnet_->forward(x);
  h = head_->forward(upsampler_->forward(h));
  return config_.head == Head::rgb ? torch::sigmoid(h) : torch::softmax(h, 1);
}

Generator build_unet_generator(GeneratorConfig config) {
  if (config.arch != Arch::unet) throw std::invalid_argument("build_unet_generator: arch must be unet");
  return Generator(config);
}

Generator build_resnet_generator(GeneratorConfig config) {
  if (config.arch != Arch::resnet) throw std::invalid_argument("build_resnet_generator: arch must be resnet");
  return Generator(config);
}

Generator build_generator(const GeneratorConfig& config) {
  return config.arch == Arch::unet ? build_unet_generator(config) : build_resnet_generator(config);
}

void init_weights(torch::nn::Module& module, std::uint64_t seed) {
  torch::NoGradGuard no_grad;
  auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
  for (auto& item : module.named_parameters(/*recurse=*/true)) {
    torch::Tensor& p = item.value();
    const std::string& name = item.key();
    const bool is_bias = name.size() >= 4 && name.compare(name.size() - 4, 4, "bias") == 0;
    if (is_bias) {
      p.zero_();
    } else if (p.dim() > 1) {
      p.normal_(0.0, 0.02, gen);
    } else {
      p.fill_(1.0);
    }
  }
}

int64_t parameter_count(const torch::nn::Module& module) {
  int64_t n = 0;
  for (const auto& p : module.parameters()) n += p.numel();
  return n;
}

}  // namespace retinagan
