#include "test_doctest.hpp"

#include <cmath>

#include "retinagan/srbaseline.hpp"
#include "test_fixtures.hpp"
#include "test_torch.hpp"

using namespace retinagan;

TEST_CASE("bicubic reproduces constants and is the identity at factor 1") {
  Image flat(7, 5, 0.37);
  const Image up = bicubic_upsample(flat, 4);
  REQUIRE(up.rows() == 28);
  REQUIRE(up.cols() == 20);
  for (double v : up.data()) CHECK(std::abs(v - 0.37) < 1e-12);

  Image noise(6, 6);
  for (std::size_t i = 0; i < noise.size(); ++i) noise.data()[i] = std::sin(1.7 * static_cast<double>(i));
  const Image same = bicubic_upsample(noise, 1);
  for (std::size_t i = 0; i < noise.size(); ++i) CHECK(std::abs(same.data()[i] - noise.data()[i]) < 1e-12);
  CHECK_THROWS(bicubic_upsample(noise, 0));
}

TEST_CASE("bicubic reproduces linear ramps in the interior") {
  // Sample i of the input sits at coordinate i; output j sits at (j + 0.5) / f - 0.5.
  const int n = 16, f = 4;
  Image ramp(3, n);
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < n; ++c) ramp(r, c) = 0.25 + 0.05 * c;
  }
  const Image up = bicubic_upsample(ramp, f);
  int checked = 0;
  for (int j = 0; j < n * f; ++j) {
    const double x = (j + 0.5) / f - 0.5;
    if (x < 1.0 || x > n - 2.0) continue;  // all four taps inside the image
    for (int r = 0; r < 3 * f; ++r) CHECK(std::abs(up(r, j) - (0.25 + 0.05 * x)) < 1e-6);
    ++checked;
  }
  CHECK(checked > n * f / 2);
}

TEST_CASE("tensor and image bicubic agree") {
  Image img(9, 11);
  for (std::size_t i = 0; i < img.size(); ++i) img.data()[i] = std::cos(0.3 * static_cast<double>(i));
  const torch::Tensor t = torch::from_blob(img.data().data(), {1, 1, 9, 11}, torch::kFloat64).clone();
  const torch::Tensor up = bicubic_upsample(t, 4);
  REQUIRE(up.sizes() == torch::IntArrayRef({1, 1, 36, 44}));
  const Image ref = bicubic_upsample(img, 4);
  auto a = up.accessor<double, 4>();
  double worst = 0;
  for (int r = 0; r < 36; ++r) {
    for (int c = 0; c < 44; ++c) worst = std::max(worst, std::abs(a[0][0][r][c] - ref(r, c)));
  }
  CHECK(worst < 1e-12);
  const torch::Tensor m = bicubic_matrix(5, 4);
  CHECK(torch::allclose(m.sum(1), torch::ones({20}, torch::kFloat64)));
}

TEST_CASE("SR-CNN shapes and the zero-refinement switch") {
  torch::NoGradGuard no_grad;
  SrcnnConfig cfg;
  cfg.width1 = 16;
  cfg.width2 = 8;
  Srcnn net = build_srcnn(cfg);
  const torch::Tensor x = torch::rand({2, 3, 224, 224});
  CHECK(net->forward(x).sizes() == x.sizes());
  // The residual head starts at zero, so a fresh model is the bicubic baseline.
  CHECK(torch::equal(net->forward(x), x));
  {
    torch::NoGradGuard g;
    for (auto& p : net->parameters()) p.add_(0.01);
  }
  CHECK_FALSE(torch::equal(net->forward(x), x));
  net->zero_refinement();
  CHECK(torch::equal(net->forward(x), x));
  CHECK_THROWS(net->forward(torch::rand({1, 1, 32, 32})));
}

TEST_CASE("SR-CNN training beats bicubic by 10% and leaves the GAN untouched") {
  const std::vector<PatchPair> pairs = fixtures::all_pairs(fixtures::phantom_patches(4, 11));
  REQUIRE(pairs.size() == 100);
  const SrPairs data = make_sr_pairs(pairs);
  CHECK(data.inputs.sizes() == torch::IntArrayRef({100, 3, 224, 224}));

  GeneratorConfig gcfg;
  gcfg.base_width = 8;
  gcfg.depth = 2;
  gcfg.upsampler = Upsampler::none;
  Generator gan = build_generator(gcfg);
  const auto before = testing::snapshot(*gan);

  SrcnnConfig cfg;
  cfg.seed = 3;
  Srcnn net = build_srcnn(cfg);
  const double bicubic_mse = srcnn_mse(net, data);
  SrcnnTrainConfig tcfg;
  tcfg.epochs = 8;
  tcfg.seed = 3;
  const std::vector<double> losses = train_srcnn(net, data, tcfg);
  CHECK(losses.size() == 8);
  const double trained_mse = srcnn_mse(net, data);
  MESSAGE("bicubic mse " << bicubic_mse << ", trained " << trained_mse);
  CHECK(trained_mse <= 0.9 * bicubic_mse);
  CHECK(testing::same_state(before, testing::snapshot(*gan)));

  const LabelMap out = disjoint_pipeline(gan, &net, pairs[0].input_lr);
  CHECK(out.rows() == 224);
  CHECK(out.cols() == 224);
  CHECK(testing::same_state(before, testing::snapshot(*gan)));
}

TEST_CASE("disjoint pipeline without SR-CNN is bicubic of the 56x56 output") {
  torch::NoGradGuard no_grad;
  GeneratorConfig gcfg;
  gcfg.base_width = 8;
  gcfg.depth = 2;
  gcfg.upsampler = Upsampler::none;
  Generator gan = build_generator(gcfg);
  gan->eval();
  const torch::Tensor x = torch::rand({2, 1, 56, 56});
  const torch::Tensor expect = bicubic_upsample(gan->forward(x), 4);
  CHECK(torch::allclose(disjoint_forward(gan, nullptr, x), expect, 1e-5, 1e-6));

  SrcnnConfig cfg;
  cfg.width1 = 8;
  cfg.width2 = 4;
  Srcnn identity = build_srcnn(cfg);
  identity->zero_refinement();
  CHECK(torch::allclose(disjoint_forward(gan, &identity, x), expect, 1e-5, 1e-6));
}
