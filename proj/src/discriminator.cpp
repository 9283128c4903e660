#include "retinagan/discriminator.hpp"

#include <stdexcept>

#include "retinagan/generators.hpp"

namespace retinagan {

namespace nn = torch::nn;

namespace {

struct LayerSpec {
  int kernel;
  int stride;
};

std::vector<LayerSpec> layer_specs(const DiscriminatorConfig& c) {
  std::vector<LayerSpec> specs{{4, 2}};
  for (int i = 1; i < c.n_layers; ++i) specs.push_back({4, 2});
  specs.push_back({4, 1});
  specs.push_back({4, 1});  // output
  return specs;
}

}  // namespace

void DiscriminatorConfig::validate() const {
  if (label_channels <= 0 || (conditional && condition_channels <= 0)) {
    throw std::invalid_argument("DiscriminatorConfig: channel counts must be positive");
  }
  if (base_width <= 0) throw std::invalid_argument("DiscriminatorConfig: base_width must be positive");
  if (n_layers < 1) throw std::invalid_argument("DiscriminatorConfig: n_layers must be >= 1");
}

void to_json(nlohmann::json& j, const DiscriminatorConfig& c) {
  j = {{"condition_channels", c.condition_channels},
       {"label_channels", c.label_channels},
       {"conditional", c.conditional},
       {"base_width", c.base_width},
       {"n_layers", c.n_layers},
       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, DiscriminatorConfig& c) {
  c.condition_channels = j.at("condition_channels").get<int>();
  c.label_channels = j.at("label_channels").get<int>();
  c.conditional = j.at("conditional").get<bool>();
  c.base_width = j.at("base_width").get<int>();
  c.n_layers = j.at("n_layers").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
}

int receptive_field(const DiscriminatorConfig& config) {
  int rf = 1;
  const auto specs = layer_specs(config);
  for (auto it = specs.rbegin(); it != specs.rend(); ++it) rf = (rf - 1) * it->stride + it->kernel;
  return rf;
}

int score_map_size(const DiscriminatorConfig& config, int input) {
  int size = input;
  for (const LayerSpec& s : layer_specs(config)) size = (size + 2 - s.kernel) / s.stride + 1;
  return size;
}

PatchDiscriminatorImpl::PatchDiscriminatorImpl(const DiscriminatorConfig& config) : config_(config) {
  config_.validate();
  const auto specs = layer_specs(config_);
  body_ = nn::Sequential();
  int64_t in = config_.in_channels();
  int64_t width = config_.base_width;
  for (std::size_t i = 0; i + 1 < specs.size(); ++i) {
    body_->push_back(nn::Conv2d(nn::Conv2dOptions(in, width, specs[i].kernel).stride(specs[i].stride).padding(1)));
    body_->push_back(nn::ReLU());
    if (i > 0) body_->push_back(nn::BatchNorm2d(width));
    in = width;
    width = std::min<int64_t>(width * 2, int64_t{config_.base_width} * 8);
  }
  body_->push_back(nn::Conv2d(nn::Conv2dOptions(in, 1, specs.back().kernel).stride(1).padding(1)));
  register_module("body", body_);
  init_weights(*this, config_.seed);
}

torch::Tensor PatchDiscriminatorImpl::forward(const torch::Tensor& x) {
  if (x.dim() != 4 || x.size(1) != config_.in_channels()) {
    throw std::invalid_argument("PatchDiscriminator: expected N x " + std::to_string(config_.in_channels()) +
                                " x H x W input");
  }
  return torch::sigmoid(body_->forward(x));
}

PatchDiscriminator build_patchgan(const DiscriminatorConfig& config) { return PatchDiscriminator(config); }

torch::Tensor discriminate(PatchDiscriminator& model, const torch::Tensor& condition, const torch::Tensor& label) {
  if (!model->config().conditional) return model->forward(label);
  if (condition.dim() != 4 || label.dim() != 4 || condition.size(0) != label.size(0) ||
      condition.size(2) != label.size(2) || condition.size(3) != label.size(3)) {
    throw std::invalid_argument("discriminate: condition and label differ in batch or spatial size");
  }
  return model->forward(torch::cat({condition, label}, 1));
}

}  // namespace retinagan
