#pragma once

#include <torch/torch.h>

#include "retinagan/generators.hpp"
#include "retinagan/metrics.hpp"

namespace retinagan {

/// Clamp applied to discriminator scores before taking logs.
inline constexpr double kScoreEpsilon = 1e-7;
/// Smoothing added to the numerator and denominator of the soft Dice ratio.
inline constexpr double kDiceEpsilon = 1e-6;

struct LossWeights {
  double lambda_l1 = 100.0;
  double alpha_dice = 1.0;
};

/// -mean(log D(G(x))), the non-saturating generator objective.
torch::Tensor adversarial_loss_g(const torch::Tensor& scores_fake);

/// -mean(log D(y)) - mean(log(1 - D(G(x)))).
torch::Tensor adversarial_loss_d(const torch::Tensor& scores_real, const torch::Tensor& scores_fake);

/// Mean absolute difference.
torch::Tensor l1_loss(const torch::Tensor& generated, const torch::Tensor& target);

/// Soft Dice loss per channel,
///   1 - (2 sum p g + eps) / (sum p^2 + sum g^2 + eps),
/// averaged over channels (and batch items for 4-D input).
torch::Tensor dice_loss(const torch::Tensor& generated, const torch::Tensor& target);

struct GeneratorLoss {
  torch::Tensor total;
  torch::Tensor adversarial;
  torch::Tensor l1;
  torch::Tensor dice;
};

/// adversarial + lambda * l1 + alpha * dice. The Dice term is skipped (and
/// reported as zero) when alpha is zero.
GeneratorLoss total_generator_loss(const torch::Tensor& scores_fake, const torch::Tensor& generated,
                                   const torch::Tensor& target, const LossWeights& weights);

/// Training target for a label batch (N x H x W, integer): palette colours
/// (N x 3 x H x W) for the rgb head, one-hot (N x 8 x H x W) for softmax8.
torch::Tensor encode_labels(const torch::Tensor& labels, Head head);

/// Class map of one generator output (C x H x W): nearest palette colour
/// for rgb, argmax for softmax8.
LabelMap decode_output(const torch::Tensor& output, Head head);

LabelMap label_map_from_tensor(const torch::Tensor& labels);
torch::Tensor tensor_from_label_map(const LabelMap& labels);
torch::Tensor tensor_from_image(const Image& image);
Image image_from_tensor(const torch::Tensor& t);
RgbImage rgb_from_tensor(const torch::Tensor& t);

}  // namespace retinagan
