#include "test_doctest.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

#include "retinagan/checkpoint.hpp"
#include "retinagan/io.hpp"

using namespace retinagan;
namespace fs = std::filesystem;

namespace {

fs::path tmp(const std::string& name) { return fs::temp_directory_path() / ("retinagan_io_" + name); }

}  // namespace

TEST_CASE("png round trips") {
  Image img(13, 17);
  for (std::size_t i = 0; i < img.size(); ++i) img.data()[i] = static_cast<double>(i % 97) / 96.0;

  io::write_gray16(tmp("g16.png"), img);
  const Image g16 = io::read_gray(tmp("g16.png"));
  REQUIRE(g16.rows() == 13);
  REQUIRE(g16.cols() == 17);
  for (std::size_t i = 0; i < img.size(); ++i) CHECK(std::abs(g16.data()[i] - img.data()[i]) <= 0.5 / 65535 + 1e-12);

  io::write_gray8(tmp("g8.png"), img);
  const Image g8 = io::read_gray(tmp("g8.png"));
  for (std::size_t i = 0; i < img.size(); ++i) CHECK(std::abs(g8.data()[i] - img.data()[i]) <= 0.5 / 255 + 1e-12);

  LabelMap labels(5, 9);
  for (std::size_t i = 0; i < labels.size(); ++i) labels.data()[i] = static_cast<std::uint8_t>(i % kNumClasses);
  io::write_labels(tmp("l.png"), labels);
  CHECK(io::read_labels(tmp("l.png")) == labels);

  const RgbImage rgb = render_rgb(labels);
  io::write_rgb8(tmp("rgb.png"), rgb);
  CHECK(io::read_rgb(tmp("rgb.png")) == rgb);

  CHECK_THROWS(io::read_gray(tmp("missing.png")));
  for (const char* f : {"g16.png", "g8.png", "l.png", "rgb.png"}) fs::remove(tmp(f));
}

TEST_CASE("checkpoint round trip") {
  Checkpoint ck;
  ck.meta = {{"kind", "test"}, {"n", 3}};
  ck.tensors.emplace_back("a", torch::randn({3, 4}));
  ck.tensors.emplace_back("b", torch::randint(0, 100, {5}, torch::kLong));
  ck.tensors.emplace_back("c", torch::randn({2, 2}, torch::kFloat64).t());  // non-contiguous
  ck.tensors.emplace_back("d", torch::tensor(7.0f));
  save_checkpoint(tmp("ck.bin"), ck);
  const Checkpoint back = load_checkpoint(tmp("ck.bin"));
  CHECK(back.meta == ck.meta);
  REQUIRE(back.tensors.size() == 4);
  for (const auto& [name, t] : ck.tensors) {
    REQUIRE(back.contains(name));
    CHECK((back.at(name).scalar_type() == t.scalar_type()));
    CHECK(torch::equal(back.at(name), t));
  }
  CHECK_FALSE(back.contains("e"));
  CHECK_THROWS(back.at("e"));

  std::ofstream(tmp("bad.bin")) << "not a checkpoint";
  CHECK_THROWS(load_checkpoint(tmp("bad.bin")));
  fs::remove(tmp("bad.bin"));
  fs::remove(tmp("ck.bin"));
}

TEST_CASE("module state restore") {
  torch::nn::Linear a(3, 2), b(3, 2);
  torch::nn::BatchNorm1d bn(2);
  Checkpoint ck;
  collect_module_state(*a, "m", ck);
  restore_module_state(*b, "m", ck);
  CHECK(torch::equal(a->weight, b->weight));
  CHECK(torch::equal(a->bias, b->bias));
  CHECK_THROWS(restore_module_state(*bn, "m", ck));
  torch::nn::Linear wrong(4, 2);
  CHECK_THROWS(restore_module_state(*wrong, "m", ck));
}
