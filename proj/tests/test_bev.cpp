#include <doctest.h>

#include <algorithm>
#include <vector>

#include "odgcnn/bev.hpp"
#include "odgcnn/ops.hpp"
#include "odgcnn/rng.hpp"
#include "odgcnn/scene.hpp"

using namespace odgcnn;

namespace {

GridSpec small_grid() {
  GridSpec g;
  g.x_min = -4;
  g.y_min = -4;
  g.cell = 0.5;
  g.width = 16;
  g.height = 16;
  return g;
}

ConvBlock random_block(Rng& rng, std::size_t c_in, std::size_t c_out, std::size_t stride) {
  std::vector<double> b(c_out);
  for (double& v : b) v = rng.uniform(-0.1, 0.1);
  return {init_weight(rng, 9 * c_in, c_out), Tensor::from({c_out}, b), stride};
}

}  // namespace

TEST_CASE("pillarize boundary convention") {
  const GridSpec g = small_grid();
  const PointCloud cloud = {{-4.0, -4.0, 0, 0}, {-4.001, 0, 0, 0}, {3.999, 3.999, 0, 0}, {4.0, 0, 0, 0}};
  const PillarAssignment a = pillarize(cloud, g);
  REQUIRE(a.cells.size() == 2);
  CHECK(a.cells[0] == 0);
  CHECK(a.point_indices[0] == std::vector<std::size_t>{0});
  CHECK(a.cells[1] == 16 * 16 - 1);
  CHECK(a.dropped == 2);
}

TEST_CASE("pillarize conserves points") {
  const GridSpec g = small_grid();
  Rng rng(5);
  PointCloud cloud(1000);
  for (auto& p : cloud) p = {rng.uniform(-4, 4), rng.uniform(-4, 4), rng.uniform(0, 2), rng.uniform()};
  const PillarAssignment a = pillarize(cloud, g);
  std::size_t total = 0;
  for (const auto& members : a.point_indices) total += members.size();
  CHECK(total == 1000);
  CHECK(a.dropped == 0);
  CHECK(std::is_sorted(a.cells.begin(), a.cells.end()));
}

TEST_CASE("pointnet pillar is a channel-wise max over the MLP") {
  const PointNetParams identity{Tensor::from({2, 2}, {1, 0, 0, 1}), Tensor::zeros({2}), Tensor::from({2, 2}, {1, 0, 0, 1}),
                                Tensor::zeros({2})};
  const Tensor out = pointnet_pillar(Tensor::from({2, 2}, {1, 2, 3, 0}), identity);
  CHECK(std::vector<double>(out.data().begin(), out.data().end()) == std::vector<double>{3, 2});

  Rng rng(2);
  const PointNetParams p{init_weight(rng, 3, 4), Tensor::from({4}, {0.1, -0.1, 0.2, 0}), init_weight(rng, 4, 5),
                         Tensor::from({5}, {0, 0.3, 0, -0.2, 0.1})};
  const Tensor x = Tensor::from({1, 3}, {0.4, -1.2, 0.7});
  const Tensor single = pointnet_pillar(x, p);
  const Tensor mlp = ops::relu(ops::add_bias(ops::matmul(ops::relu(ops::add_bias(ops::matmul(x, p.w1), p.b1)), p.w2), p.b2));
  CHECK(std::vector<double>(single.data().begin(), single.data().end()) ==
        std::vector<double>(mlp.data().begin(), mlp.data().end()));

  CHECK_THROWS(pointnet_pillar(Tensor::from({1, 2}, {1, 2}), p));
}

TEST_CASE("scatter_to_grid") {
  GridSpec g = small_grid();
  g.width = 8;
  g.height = 8;
  SUBCASE("one pillar") {
    const std::vector<std::size_t> cells = {3 * 8 + 2};
    const BevGrid grid = scatter_to_grid(Tensor::from({1, 3}, {1, 2, 3}), cells, g);
    for (std::size_t cell = 0; cell < 64; ++cell)
      for (std::size_t c = 0; c < 3; ++c) CHECK(grid.data.at(cell, c) == (cell == 26 ? c + 1.0 : 0.0));
  }
  SUBCASE("duplicate entries rejected") {
    const std::vector<std::size_t> cells = {5, 5};
    CHECK_THROWS(scatter_to_grid(Tensor::from({2, 1}, {1, 2}), cells, g));
  }
}

TEST_CASE("conv backbone") {
  GridSpec g;
  g.width = 64;
  g.height = 64;
  g.cell = 0.5;
  Rng rng(9);
  SUBCASE("zero input and zero biases give zero output") {
    std::vector<ConvBlock> blocks = {random_block(rng, 8, 16, 1), random_block(rng, 16, 32, 2)};
    for (auto& b : blocks) b.bias = Tensor::zeros(b.bias.shape());
    const BevGrid out = conv_backbone({g, 8, Tensor::zeros({64 * 64, 8})}, blocks);
    for (double v : out.data.data()) CHECK(v == 0.0);
  }
  SUBCASE("output shape") {
    const std::vector<ConvBlock> blocks = {random_block(rng, 8, 16, 1), random_block(rng, 16, 32, 2),
                                           random_block(rng, 32, 32, 1)};
    const BevGrid out = conv_backbone({g, 8, Tensor::zeros({64 * 64, 8})}, blocks);
    CHECK(out.spec.width == 32);
    CHECK(out.spec.height == 32);
    CHECK(out.channels == 32);
    CHECK(out.data.shape() == Shape{32 * 32, 32});
    CHECK(out.spec.cell == 1.0);
  }
  SUBCASE("odd grid rejected for a stride-2 block") {
    GridSpec odd = g;
    odd.width = 63;
    const std::vector<ConvBlock> blocks = {random_block(rng, 2, 4, 2)};
    CHECK_THROWS(conv_backbone({odd, 2, Tensor::zeros({63 * 64, 2})}, blocks));
  }
  SUBCASE("shifting the input by one output cell shifts the interior") {
    GridSpec s;
    s.width = 24;
    s.height = 24;
    const std::vector<ConvBlock> blocks = {random_block(rng, 2, 4, 1), random_block(rng, 4, 4, 2), random_block(rng, 4, 3, 1)};
    std::vector<double> a(24 * 24 * 2, 0.0), b(24 * 24 * 2, 0.0);
    for (std::size_t y = 6; y < 18; ++y)
      for (std::size_t x = 6; x < 16; ++x)
        for (std::size_t c = 0; c < 2; ++c) {
          const double v = rng.uniform(-1, 1);
          a[(y * 24 + x) * 2 + c] = v;
          b[(y * 24 + x + 2) * 2 + c] = v;
        }
    const BevGrid fa = conv_backbone({s, 2, Tensor::from({24 * 24, 2}, a)}, blocks);
    const BevGrid fb = conv_backbone({s, 2, Tensor::from({24 * 24, 2}, b)}, blocks);
    for (std::size_t y = 2; y < 10; ++y)
      for (std::size_t x = 2; x < 9; ++x)
        for (std::size_t c = 0; c < 3; ++c) CHECK(fb.data.at(y * 12 + x + 1, c) == doctest::Approx(fa.data.at(y * 12 + x, c)).epsilon(1e-12));
  }
}

TEST_CASE("encoder output is invariant to point order") {
  SceneConfig sc;
  sc.half_extent = 8;
  const Scene scene = sample_scene(sc, 21);
  BevConfig cfg;
  cfg.grid.x_min = -8;
  cfg.grid.y_min = -8;
  cfg.grid.cell = 0.5;
  cfg.grid.width = 32;
  cfg.grid.height = 32;
  cfg.half_extent = 8;
  const BevEncoder enc(cfg);
  ParamRegistry params;
  Rng rng(1);
  enc.register_params(params, rng);

  PointCloud shuffled = scene.points;
  Rng shuffle_rng(4);
  for (std::size_t i = shuffled.size(); i > 1; --i)
    std::swap(shuffled[i - 1], shuffled[static_cast<std::size_t>(shuffle_rng.uniform_int(0, static_cast<std::int64_t>(i) - 1))]);

  const BevGrid a = enc.forward(make_pillar_batch(scene.points, cfg.grid, 8), params);
  const BevGrid b = enc.forward(make_pillar_batch(shuffled, cfg.grid, 8), params);
  CHECK(std::equal(a.data.data().begin(), a.data.data().end(), b.data.data().begin()));
}

TEST_CASE("empty scene runs through the encoder") {
  BevConfig cfg;
  const BevEncoder enc(cfg);
  ParamRegistry params;
  Rng rng(1);
  enc.register_params(params, rng);
  const PillarBatch batch = make_pillar_batch({}, cfg.grid, cfg.half_extent);
  CHECK(batch.pillar_count() == 0);
  const BevGrid fd = enc.forward(batch, params);
  CHECK(fd.spec == cfg.out_spec());
  for (double v : fd.data.data()) CHECK(v == 0.0);
}
