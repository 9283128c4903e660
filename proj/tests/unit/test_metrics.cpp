#include "test_doctest.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "retinagan/metrics.hpp"
#include "test_oracles.hpp"

using namespace retinagan;

TEST_CASE("dice and iou on the 2x2 example") {
  LabelMap pred(2, 2, 0), gt(2, 2, 0);
  pred(0, 0) = pred(0, 1) = 1;
  gt(0, 0) = gt(1, 0) = 1;
  const MetricReport r = miou(pred, gt);
  CHECK(r.per_class_dice[1] == doctest::Approx(0.5));
  CHECK(r.per_class_iou[1] == doctest::Approx(1.0 / 3.0));
  CHECK(r.present[0]);
  CHECK(r.present[1]);
  CHECK_FALSE(r.present[2]);
  CHECK(r.per_class_iou[2] == 1.0);  // absent from both
}

TEST_CASE("perfect and disjoint predictions") {
  LabelMap gt(4, 4, 3);
  CHECK(dice_coefficient(gt, gt) == 1.0);
  CHECK(miou(gt, gt).miou == 1.0);
  LabelMap other(4, 4, 5);
  CHECK(dice_coefficient(other, gt) == 0.0);
  CHECK(miou(other, gt).miou == 0.0);
  CHECK(miou(other, gt).per_class_iou[5] == 0.0);  // predicted but absent
  CHECK_THROWS(miou(LabelMap(3, 4), gt));
}

TEST_CASE("metrics match the brute-force confusion matrix") {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 100; ++trial) {
    const LabelMap pred = oracle::random_labels(32, 32, rng);
    const LabelMap gt = oracle::random_labels(32, 32, rng, trial % 3 == 0 ? 5 : kNumClasses);
    const auto ref = oracle::confusion_scores(pred, gt);
    const MetricReport r = miou(pred, gt);
    CHECK(std::abs(r.dice - ref.dice) < 1e-12);
    CHECK(std::abs(r.miou - ref.miou) < 1e-12);
    CHECK(std::abs(dice_coefficient(pred, gt) - ref.dice) < 1e-12);
  }
}

TEST_CASE("metrics are invariant to consistent relabelling") {
  std::mt19937_64 rng(3);
  std::array<std::uint8_t, kNumClasses> perm{};
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  for (int trial = 0; trial < 10; ++trial) {
    const LabelMap pred = oracle::random_labels(16, 16, rng);
    const LabelMap gt = oracle::random_labels(16, 16, rng);
    LabelMap p2 = pred, g2 = gt;
    for (auto& v : p2.data()) v = perm[v];
    for (auto& v : g2.data()) v = perm[v];
    CHECK(miou(p2, g2).dice == doctest::Approx(miou(pred, gt).dice).epsilon(1e-14));
    CHECK(miou(p2, g2).miou == doctest::Approx(miou(pred, gt).miou).epsilon(1e-14));
  }
}

TEST_CASE("average_reports is an element-wise mean") {
  LabelMap a(2, 2, 1), b(2, 2, 1);
  b(0, 0) = 2;
  const MetricReport ra = miou(a, a), rb = miou(b, a);
  const MetricReport avg = average_reports({ra, rb});
  CHECK(avg.dice == doctest::Approx((ra.dice + rb.dice) / 2));
  CHECK(avg.miou == doctest::Approx((ra.miou + rb.miou) / 2));
  CHECK_THROWS(average_reports({}));
}

TEST_CASE("palette decoding") {
  const Palette& pal = label_palette();
  CHECK_NOTHROW(validate_palette(pal));

  RgbImage exact(1, kNumClasses);
  for (int k = 0; k < kNumClasses; ++k) exact(0, k) = pal[k];
  const LabelMap back = decode_rgb_to_labels(exact);
  for (int k = 0; k < kNumClasses; ++k) CHECK(back(0, k) == k);

  double min_gap = 1e9;
  for (int i = 0; i < kNumClasses; ++i) {
    for (int j = 0; j < i; ++j) {
      const double d = std::sqrt(std::pow(pal[i].r - pal[j].r, 2) + std::pow(pal[i].g - pal[j].g, 2) +
                                 std::pow(pal[i].b - pal[j].b, 2));
      min_gap = std::min(min_gap, d);
    }
  }
  const double radius = 0.5 * min_gap * 0.999;  // inf-norm bound
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> u(-radius, radius);
  RgbImage noisy(20, kNumClasses);
  for (int r = 0; r < 20; ++r) {
    for (int k = 0; k < kNumClasses; ++k) noisy(r, k) = {pal[k].r + u(rng), pal[k].g + u(rng), pal[k].b + u(rng)};
  }
  const LabelMap nb = decode_rgb_to_labels(noisy);
  for (int r = 0; r < 20; ++r) {
    for (int k = 0; k < kNumClasses; ++k) CHECK(nb(r, k) == k);
  }

  RgbImage tie(1, 1);
  tie(0, 0) = {0.5, 0.0, 0.0};  // equidistant from black and red
  CHECK(decode_rgb_to_labels(tie)(0, 0) == 0);
  tie(0, 0) = {0.5, 0.5, 0.5};  // centre of the cube, equidistant from all
  CHECK(decode_rgb_to_labels(tie)(0, 0) == 0);

  Palette dup = pal;
  dup[4] = dup[2];
  CHECK_THROWS_AS(validate_palette(dup), std::invalid_argument);
}
