#include "retinagan/objectives.hpp"

#include <cstring>
#include <stdexcept>

namespace retinagan {

torch::Tensor adversarial_loss_g(const torch::Tensor& scores_fake) {
  return -torch::log(scores_fake.clamp(kScoreEpsilon, 1.0)).mean();
}

torch::Tensor adversarial_loss_d(const torch::Tensor& scores_real, const torch::Tensor& scores_fake) {
  return -torch::log(scores_real.clamp(kScoreEpsilon, 1.0)).mean() -
         torch::log((1.0 - scores_fake).clamp(kScoreEpsilon, 1.0)).mean();
}

torch::Tensor l1_loss(const torch::Tensor& generated, const torch::Tensor& target) {
  if (generated.sizes() != target.sizes()) throw std::invalid_argument("l1_loss: shape mismatch");
  return (generated - target).abs().mean();
}

torch::Tensor dice_loss(const torch::Tensor& generated, const torch::Tensor& target) {
  if (generated.sizes() != target.sizes()) throw std::invalid_argument("dice_loss: shape mismatch");
  if (generated.dim() != 3 && generated.dim() != 4) {
    throw std::invalid_argument("dice_loss: expected C x H x W or N x C x H x W");
  }
  // Flatten to (items, pixels) where each item is one channel of one sample.
  const int64_t pixels = generated.size(-1) * generated.size(-2);
  const torch::Tensor p = generated.reshape({-1, pixels});
  const torch::Tensor g = target.to(generated.dtype()).reshape({-1, pixels});
  const torch::Tensor inter = (p * g).sum(1);
  const torch::Tensor denom = (p * p).sum(1) + (g * g).sum(1);
  return (1.0 - (2.0 * inter + kDiceEpsilon) / (denom + kDiceEpsilon)).mean();
}

GeneratorLoss total_generator_loss(const torch::Tensor& scores_fake, const torch::Tensor& generated,
                                   const torch::Tensor& target, const LossWeights& weights) {
  if (weights.lambda_l1 < 0.0 || weights.alpha_dice < 0.0) {
    throw std::invalid_argument("total_generator_loss: weights must be non-negative");
  }
  GeneratorLoss out;
  out.adversarial = adversarial_loss_g(scores_fake);
  out.l1 = retinagan::l1_loss(generated, target);
  out.dice = weights.alpha_dice > 0.0 ? dice_loss(generated, target) : torch::zeros({}, generated.options());
  out.total = out.adversarial + weights.lambda_l1 * out.l1;
  if (weights.alpha_dice > 0.0) out.total = out.total + weights.alpha_dice * out.dice;
  return out;
}

torch::Tensor encode_labels(const torch::Tensor& labels, Head head) {
  const torch::Tensor idx = labels.to(torch::kLong);
  if (head == Head::softmax8) {
    return torch::one_hot(idx, kNumClasses).permute({0, 3, 1, 2}).to(torch::kFloat32).contiguous();
  }
  const Palette& pal = label_palette();
  torch::Tensor table = torch::empty({kNumClasses, 3}, torch::kFloat32);
  for (int c = 0; c < kNumClasses; ++c) {
    table[c][0] = pal[c].r;
    table[c][1] = pal[c].g;
    table[c][2] = pal[c].b;
  }
  return table.index({idx}).permute({0, 3, 1, 2}).contiguous();
}

LabelMap decode_output(const torch::Tensor& output, Head head) {
  if (output.dim() != 3) throw std::invalid_argument("decode_output: expected C x H x W");
  if (head == Head::softmax8) return label_map_from_tensor(output.argmax(0));
  return decode_rgb_to_labels(rgb_from_tensor(output));
}

LabelMap label_map_from_tensor(const torch::Tensor& labels) {
  const torch::Tensor t = labels.to(torch::kUInt8).contiguous().cpu();
  if (t.dim() != 2) throw std::invalid_argument("label_map_from_tensor: expected H x W");
  LabelMap out(static_cast<int>(t.size(0)), static_cast<int>(t.size(1)));
  std::memcpy(out.data().data(), t.data_ptr<std::uint8_t>(), out.size());
  return out;
}

torch::Tensor tensor_from_label_map(const LabelMap& labels) {
  torch::Tensor t = torch::empty({labels.rows(), labels.cols()}, torch::kUInt8);
  std::memcpy(t.data_ptr<std::uint8_t>(), labels.data().data(), labels.size());
  return t;
}

torch::Tensor tensor_from_image(const Image& image) {
  torch::Tensor t = torch::empty({image.rows(), image.cols()}, torch::kFloat64);
  std::memcpy(t.data_ptr<double>(), image.data().data(), image.size() * sizeof(double));
  return t.to(torch::kFloat32);
}

Image image_from_tensor(const torch::Tensor& t) {
  const torch::Tensor d = t.to(torch::kFloat64).contiguous().cpu();
  if (d.dim() != 2) throw std::invalid_argument("image_from_tensor: expected H x W");
  Image out(static_cast<int>(d.size(0)), static_cast<int>(d.size(1)));
  std::memcpy(out.data().data(), d.data_ptr<double>(), out.size() * sizeof(double));
  return out;
}

RgbImage rgb_from_tensor(const torch::Tensor& t) {
  const torch::Tensor d = t.to(torch::kFloat64).contiguous().cpu();
  if (d.dim() != 3 || d.size(0) != 3) throw std::invalid_argument("rgb_from_tensor: expected 3 x H x W");
  const int h = static_cast<int>(d.size(1));
  const int w = static_cast<int>(d.size(2));
  RgbImage out(h, w);
  const double* p = d.data_ptr<double>();
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  auto dst = out.data();
  for (std::size_t i = 0; i < plane; ++i) dst[i] = {p[i], p[plane + i], p[2 * plane + i]};
  return out;
}

}  // namespace retinagan
