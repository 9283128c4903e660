#include "retinagan/srbaseline.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include "retinagan/objectives.hpp"
#include "retinagan/random.hpp"

namespace retinagan {

namespace nn = torch::nn;

namespace {

double cubic_kernel(double x) {
  const double a = kBicubicA;
  x = std::abs(x);
  if (x <= 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
  if (x < 2.0) return ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a;
  return 0.0;
}

}  // namespace

torch::Tensor bicubic_matrix(int64_t in, int64_t factor, torch::ScalarType dtype) {
  if (factor < 1) throw std::invalid_argument("bicubic: factor must be >= 1");
  if (in < 1) throw std::invalid_argument("bicubic: empty input");
  const int64_t out = in * factor;
  torch::Tensor m = torch::zeros({out, in}, torch::kFloat64);
  auto acc = m.accessor<double, 2>();
  for (int64_t o = 0; o < out; ++o) {
    const double src = (o + 0.5) / static_cast<double>(factor) - 0.5;
    const auto base = static_cast<int64_t>(std::floor(src));
    const double t = src - base;
    for (int64_t k = -1; k <= 2; ++k) {
      const int64_t idx = std::clamp<int64_t>(base + k, 0, in - 1);
      acc[o][idx] += cubic_kernel(t - k);
    }
  }
  return m.to(dtype);
}

torch::Tensor bicubic_upsample(const torch::Tensor& x, int factor) {
  if (x.dim() < 2) throw std::invalid_argument("bicubic_upsample: expected at least 2 dimensions");
  const torch::Tensor rows = bicubic_matrix(x.size(-2), factor, x.scalar_type());
  const torch::Tensor cols = bicubic_matrix(x.size(-1), factor, x.scalar_type());
  return torch::matmul(torch::matmul(rows, x), cols.t());
}

Image bicubic_upsample(const Image& image, int factor) {
  torch::Tensor t = torch::empty({image.rows(), image.cols()}, torch::kFloat64);
  std::memcpy(t.data_ptr<double>(), image.data().data(), image.size() * sizeof(double));
  return image_from_tensor(bicubic_upsample(t, factor));
}

void to_json(nlohmann::json& j, const SrcnnConfig& c) {
  j = {{"kernels", {c.kernel1, c.kernel2, c.kernel3}},
       {"widths", {c.width1, c.width2}},
       {"channels", c.channels},
       {"upscale", c.upscale},
       {"residual", c.residual},
       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, SrcnnConfig& c) {
  const auto k = j.at("kernels").get<std::vector<int>>();
  const auto w = j.at("widths").get<std::vector<int>>();
  if (k.size() != 3 || w.size() != 2) throw std::runtime_error("SrcnnConfig: malformed kernels/widths");
  c.kernel1 = k[0];
  c.kernel2 = k[1];
  c.kernel3 = k[2];
  c.width1 = w[0];
  c.width2 = w[1];
  c.channels = j.at("channels").get<int>();
  c.upscale = j.at("upscale").get<int>();
  c.residual = j.at("residual").get<bool>();
  c.seed = j.at("seed").get<std::uint64_t>();
}

SrcnnImpl::SrcnnImpl(const SrcnnConfig& config) : config_(config) {
  for (int k : {config.kernel1, config.kernel2, config.kernel3}) {
    if (k < 1 || k % 2 == 0) throw std::invalid_argument("Srcnn: kernels must be odd and positive");
  }
  auto same = [](int64_t in, int64_t out, int64_t k) {
    return nn::Conv2d(nn::Conv2dOptions(in, out, k).padding(k / 2).padding_mode(torch::kReplicate));
  };
  conv1_ = register_module("conv1", same(config.channels, config.width1, config.kernel1));
  conv2_ = register_module("conv2", same(config.width1, config.width2, config.kernel2));
  conv3_ = register_module("conv3", same(config.width2, config.channels, config.kernel3));
  init_weights(*this, config.seed);
  if (config.residual) zero_refinement();
}

torch::Tensor SrcnnImpl::forward(const torch::Tensor& x) {
  if (x.dim() != 4 || x.size(1) != config_.channels) throw std::invalid_argument("Srcnn: bad input shape");
  torch::Tensor y = conv3_->forward(torch::relu(conv2_->forward(torch::relu(conv1_->forward(x)))));
  return config_.residual ? x + y : y;
}

void SrcnnImpl::zero_refinement() {
  torch::NoGradGuard no_grad;
  conv3_->weight.zero_();
  conv3_->bias.zero_();
}

Srcnn build_srcnn(const SrcnnConfig& config) { return Srcnn(config); }

SrPairs make_sr_pairs(const std::vector<PatchPair>& pairs) {
  if (pairs.empty()) throw std::invalid_argument("make_sr_pairs: no pairs");
  std::vector<torch::Tensor> lows;
  std::vector<torch::Tensor> highs;
  for (const PatchPair& p : pairs) {
    lows.push_back(tensor_from_label_map(downsample_majority(p.target_label_hr, kUpscale)));
    highs.push_back(tensor_from_label_map(p.target_label_hr));
  }
  SrPairs out;
  out.inputs = bicubic_upsample(encode_labels(torch::stack(lows), Head::rgb), kUpscale);
  out.targets = encode_labels(torch::stack(highs), Head::rgb);
  return out;
}

std::vector<double> train_srcnn(Srcnn& model, const SrPairs& data, const SrcnnTrainConfig& config) {
  if (config.epochs < 0 || config.batch_size < 1) throw std::invalid_argument("train_srcnn: bad config");
  const int64_t n = data.inputs.size(0);
  const int64_t side = data.inputs.size(-1);
  const int crop = config.crop > 0 ? std::min<int>(config.crop, static_cast<int>(side)) : static_cast<int>(side);
  torch::optim::Adam opt(model->parameters(), torch::optim::AdamOptions(config.lr));
  std::mt19937_64 rng(derive_seed(config.seed, {hash_string("srcnn")}));
  std::vector<double> history;
  model->train();
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::vector<int64_t> order(n);
    for (int64_t i = 0; i < n; ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);
    std::uniform_int_distribution<int> offset(0, static_cast<int>(side) - crop);
    double total = 0.0;
    int batches = 0;
    for (int64_t start = 0; start < n; start += config.batch_size) {
      std::vector<torch::Tensor> xs, ys;
      for (int64_t i = start; i < std::min<int64_t>(n, start + config.batch_size); ++i) {
        const int r = offset(rng), c = offset(rng);
        using torch::indexing::Slice;
        xs.push_back(data.inputs[order[i]].index({Slice(), Slice(r, r + crop), Slice(c, c + crop)}));
        ys.push_back(data.targets[order[i]].index({Slice(), Slice(r, r + crop), Slice(c, c + crop)}));
      }
      const torch::Tensor loss = torch::mse_loss(model->forward(torch::stack(xs)), torch::stack(ys));
      opt.zero_grad();
      loss.backward();
      opt.step();
      total += loss.item<double>();
      ++batches;
    }
    history.push_back(total / std::max(batches, 1));
  }
  return history;
}

double srcnn_mse(Srcnn& model, const SrPairs& data) {
  torch::NoGradGuard no_grad;
  model->eval();
  double total = 0.0;
  const int64_t n = data.inputs.size(0);
  for (int64_t start = 0; start < n; start += 16) {
    const int64_t end = std::min<int64_t>(n, start + 16);
    const torch::Tensor pred = model->forward(data.inputs.slice(0, start, end));
    total += torch::mse_loss(pred, data.targets.slice(0, start, end), torch::Reduction::Sum).item<double>();
  }
  return total / static_cast<double>(data.targets.numel());
}

torch::Tensor output_to_rgb(const torch::Tensor& output, Head head) {
  if (head == Head::rgb) return output;
  const Palette& pal = label_palette();
  torch::Tensor table = torch::empty({kNumClasses, 3}, output.options());
  for (int c = 0; c < kNumClasses; ++c) {
    table[c][0] = pal[c].r;
    table[c][1] = pal[c].g;
    table[c][2] = pal[c].b;
  }
  // (N, 8, H, W) x (8, 3) -> (N, 3, H, W)
  return torch::einsum("nkhw,kc->nchw", {output, table});
}

torch::Tensor disjoint_forward(Generator& gan56, Srcnn* srcnn, const torch::Tensor& inputs) {
  torch::NoGradGuard no_grad;
  gan56->eval();
  if (gan56->config().upscale() != 1) throw std::invalid_argument("disjoint_forward: generator must not upsample");
  torch::Tensor rgb = bicubic_upsample(output_to_rgb(gan56->forward(inputs), gan56->config().head), kUpscale);
  if (srcnn != nullptr) {
    (*srcnn)->eval();
    rgb = (*srcnn)->forward(rgb);
  }
  return rgb;
}

LabelMap disjoint_pipeline(Generator& gan56, Srcnn* srcnn, const Image& input_lr) {
  const torch::Tensor x = tensor_from_image(input_lr).unsqueeze(0).unsqueeze(0);
  return decode_output(disjoint_forward(gan56, srcnn, x)[0], Head::rgb);
}

MetricReport evaluate_disjoint(Generator& gan56, Srcnn* srcnn, const std::vector<PatchPair>& pairs, int batch_size) {
  if (pairs.empty()) throw std::invalid_argument("evaluate_disjoint: empty split");
  std::vector<MetricReport> reports;
  for (std::size_t start = 0; start < pairs.size(); start += batch_size) {
    const std::size_t end = std::min(pairs.size(), start + batch_size);
    std::vector<torch::Tensor> xs;
    for (std::size_t i = start; i < end; ++i) xs.push_back(tensor_from_image(pairs[i].input_lr).unsqueeze(0));
    const torch::Tensor rgb = disjoint_forward(gan56, srcnn, torch::stack(xs));
    for (std::size_t i = start; i < end; ++i) {
      reports.push_back(miou(decode_output(rgb[static_cast<int64_t>(i - start)], Head::rgb), pairs[i].target_label_hr));
    }
  }
  return average_reports(reports);
}

}  // namespace retinagan
