#pragma once

#include <algorithm>
#include <functional>

#include <torch/torch.h>

namespace testing {

/// Relative error ||autodiff - central differences|| / max(||.||, ||.||) of
/// the gradient of the scalar f at x. x must be float64.
inline double gradient_error(const std::function<torch::Tensor(const torch::Tensor&)>& f, const torch::Tensor& x,
                             double h = 1e-6) {
  torch::Tensor xa = x.detach().clone().requires_grad_(true);
  f(xa).backward();
  const torch::Tensor analytic = xa.grad().detach().reshape({-1});

  torch::NoGradGuard no_grad;
  torch::Tensor flat = x.detach().clone().reshape({-1});
  torch::Tensor numeric = torch::empty_like(flat);
  auto acc = flat.accessor<double, 1>();
  for (int64_t i = 0; i < flat.numel(); ++i) {
    const double keep = acc[i];
    acc[i] = keep + h;
    const double up = f(flat.view(x.sizes())).item<double>();
    acc[i] = keep - h;
    const double down = f(flat.view(x.sizes())).item<double>();
    acc[i] = keep;
    numeric[i] = (up - down) / (2 * h);
  }
  const double scale = std::max({analytic.norm().item<double>(), numeric.norm().item<double>(), 1e-12});
  return (analytic - numeric).norm().item<double>() / scale;
}

/// Every parameter and buffer, cloned.
inline std::vector<torch::Tensor> snapshot(const torch::nn::Module& m) {
  std::vector<torch::Tensor> out;
  for (const auto& p : m.parameters()) out.push_back(p.detach().clone());
  for (const auto& b : m.buffers()) out.push_back(b.detach().clone());
  return out;
}

inline bool same_state(const std::vector<torch::Tensor>& a, const std::vector<torch::Tensor>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!torch::equal(a[i], b[i])) return false;
  }
  return true;
}

inline bool params_equal(const torch::nn::Module& m, const std::vector<torch::Tensor>& before) {
  const auto params = m.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!torch::equal(params[i], before[i])) return false;
  }
  return true;
}

}  // namespace testing
