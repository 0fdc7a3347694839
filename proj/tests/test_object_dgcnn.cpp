#include <doctest.h>

#include <cmath>
#include <numbers>
#include <set>
#include <vector>

#include "odgcnn/nn.hpp"
#include "odgcnn/object_dgcnn.hpp"
#include "odgcnn/ops.hpp"

using namespace odgcnn;

namespace {

std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

Tensor random_tensor(Rng& rng, Shape shape, double scale = 1.0) {
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = rng.uniform(-scale, scale);
  return Tensor::from(std::move(shape), std::move(v));
}

GridSpec grid8() {
  GridSpec g;
  g.x_min = -4;
  g.y_min = -2;
  g.cell = 1.0;
  g.width = 8;
  g.height = 8;
  return g;
}

BevConfig small_bev() {
  BevConfig b;
  b.grid.x_min = -8;
  b.grid.y_min = -8;
  b.grid.cell = 1.0;
  b.grid.width = 16;
  b.grid.height = 16;
  b.half_extent = 8;
  b.pointnet_hidden = 8;
  b.pointnet_out = 8;
  b.conv_channels = {8, 8};
  b.conv_strides = {1, 2};
  return b;
}

DgcnnConfig small_head() {
  DgcnnConfig h;
  h.num_queries = 6;
  h.query_dim = 8;
  h.num_layers = 2;
  h.neighbors = 3;
  h.edge_hidden = 8;
  return h;
}

BevGrid random_fd(Rng& rng, const GridSpec& spec, std::size_t channels) {
  return {spec, channels, random_tensor(rng, {spec.cells(), channels})};
}

}  // namespace

TEST_CASE("decode_query") {
  Rng rng(3);
  const GridSpec g = grid8();
  ParamRegistry params;
  nn::register_linear(params, rng, "q.ref", 5, 2);
  nn::register_linear(params, rng, "q.offset", 5, 8);
  nn::register_linear(params, rng, "q.atten", 5, 4);
  const Tensor queries = random_tensor(rng, {3, 5});

  SUBCASE("shape") {
    const QueryDecode d = decode_query(queries, g, params, "q", 4);
    CHECK(d.reference.shape() == Shape{3, 2});
    CHECK(d.offsets.shape() == Shape{3, 8});
    CHECK(d.weight_logits.shape() == Shape{3, 4});
  }
  SUBCASE("zero reference network lands on the extent centre") {
    for (double& v : params.get("q.ref.w").mutable_data()) v = 0;
    const QueryDecode d = decode_query(queries, g, params, "q", 4);
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK(d.reference.at(i, 0) == 0.0);
      CHECK(d.reference.at(i, 1) == 2.0);
    }
  }
  SUBCASE("zero offset network samples at the reference point") {
    for (double& v : params.get("q.offset.w").mutable_data()) v = 0;
    for (double& v : params.get("q.offset.b").mutable_data()) v = 0;
    const QueryDecode d = decode_query(queries, g, params, "q", 4);
    for (double v : d.offsets.data()) CHECK(v == 0.0);
  }
  SUBCASE("width mismatch") { CHECK_THROWS(decode_query(queries, g, params, "q", 3)); }
}

TEST_CASE("bilinear sampling") {
  const GridSpec g = grid8();
  std::vector<double> v(64 * 2);
  for (std::size_t i = 0; i < 64; ++i) {
    v[2 * i] = static_cast<double>(i);
    v[2 * i + 1] = -static_cast<double>(i);
  }
  const BevGrid grid{g, 2, Tensor::from({64, 2}, v)};
  // Cell (ix=2, iy=3) centre is (-1.5, 1.5).
  const Tensor at_centre = bilinear_sample(grid, Tensor::from({1, 2}, {-1.5, 1.5}));
  CHECK(values(at_centre) == std::vector<double>{26, -26});

  std::vector<double> step(64, 0.0);
  step[1] = 1.0;
  const BevGrid two{g, 1, Tensor::from({64, 1}, step)};
  CHECK(bilinear_sample(two, Tensor::from({1, 2}, {-3.0, -1.5})).item() == doctest::Approx(0.5).epsilon(1e-15));

  const Tensor far = bilinear_sample(grid, Tensor::from({2, 2}, {-100, -100, 100, 100}));
  CHECK(values(far) == std::vector<double>{0, 0, 63, -63});
}

TEST_CASE("aggregate") {
  const Tensor sampled = Tensor::from({3, 2}, {1, 2, 3, 4, 8, 0});
  const Tensor mean = aggregate(sampled, Tensor::from({1, 3}, {0.7, 0.7, 0.7}));
  CHECK(mean.at(0, 0) == doctest::Approx(4.0).epsilon(1e-14));
  CHECK(mean.at(0, 1) == doctest::Approx(2.0).epsilon(1e-14));
  const Tensor hard = aggregate(sampled, Tensor::from({1, 3}, {0, 1000, 0}));
  CHECK(std::abs(hard.at(0, 0) - 3) < 1e-9);
  CHECK(std::abs(hard.at(0, 1) - 4) < 1e-9);
}

TEST_CASE("knn graph") {
  const Tensor f = Tensor::from({3, 1}, {0, 0.1, 5.0});
  const KnnGraph g = knn_graph(f, 2);
  CHECK(std::vector<std::size_t>(g.of(0).begin(), g.of(0).end()) == std::vector<std::size_t>{0, 1});
  CHECK(std::vector<std::size_t>(g.of(2).begin(), g.of(2).end()) == std::vector<std::size_t>{2, 1});

  Rng rng(8);
  const Tensor r = random_tensor(rng, {7, 3});
  const KnnGraph self_only = knn_graph(r, 1);
  for (std::size_t i = 0; i < 7; ++i) CHECK(self_only.of(i)[0] == i);
  const KnnGraph all = knn_graph(r, 7);
  for (std::size_t i = 0; i < 7; ++i) {
    CHECK(all.of(i)[0] == i);
    const std::set<std::size_t> s(all.of(i).begin(), all.of(i).end());
    CHECK(s.size() == 7);
  }
  CHECK_THROWS(knn_graph(r, 0));
  CHECK_THROWS(knn_graph(r, 8));
}

TEST_CASE("edge conv") {
  Rng rng(12);
  ParamRegistry params;
  nn::register_linear(params, rng, "e.l1", 8, 6, 1.0, 0.1);
  nn::register_linear(params, rng, "e.l2", 6, 4, 1.0, 0.1);
  const Tensor f = random_tensor(rng, {5, 4});

  SUBCASE("self-only graph") {
    const Tensor out = edge_conv(f, knn_graph(f, 1), params, "e", true);
    const Tensor edge = ops::concat_lastaxis(f, Tensor::zeros({5, 4}));
    const Tensor expect = ops::relu(nn::linear(params, "e.l2", ops::relu(nn::linear(params, "e.l1", edge))));
    CHECK(values(out) == values(expect));
  }
  SUBCASE("permutation equivariance") {
    const std::vector<std::size_t> perm = {3, 0, 4, 1, 2};
    const Tensor fp = ops::gather_rows(f, perm);
    const Tensor out = edge_conv(f, knn_graph(f, 3), params, "e", true);
    const Tensor out_p = edge_conv(fp, knn_graph(fp, 3), params, "e", true);
    for (std::size_t i = 0; i < 5; ++i)
      for (std::size_t c = 0; c < 4; ++c) CHECK(out_p.at(i, c) == doctest::Approx(out.at(perm[i], c)).epsilon(1e-12));
  }
  SUBCASE("plain concatenation") {
    const Tensor out = edge_conv(f, knn_graph(f, 1), params, "e", false);
    const Tensor edge = ops::concat_lastaxis(f, f);
    const Tensor expect = ops::relu(nn::linear(params, "e.l2", ops::relu(nn::linear(params, "e.l1", edge))));
    CHECK(values(out) == values(expect));
  }
}

TEST_CASE("self-attention alternative") {
  Rng rng(13);
  ParamRegistry params;
  for (const char* p : {"a.q", "a.k", "a.v"}) nn::register_linear(params, rng, p, 4, 8, 1.0, 0.1);

  SUBCASE("single query returns its value projection") {
    const Tensor f = random_tensor(rng, {1, 4});
    const Tensor out = self_attention_alt(f, params, "a", 4);
    const Tensor v = nn::linear(params, "a.v", f);
    for (std::size_t c = 0; c < 8; ++c) CHECK(out.at(0, c) == doctest::Approx(v.at(0, c)).epsilon(1e-14));
  }
  SUBCASE("zero query and key projections give the mean value") {
    for (const char* p : {"a.q.w", "a.q.b", "a.k.w", "a.k.b"})
      for (double& x : params.get(p).mutable_data()) x = 0;
    const Tensor f = random_tensor(rng, {5, 4});
    const Tensor out = self_attention_alt(f, params, "a", 2);
    const Tensor v = nn::linear(params, "a.v", f);
    for (std::size_t c = 0; c < 8; ++c) {
      double mean = 0;
      for (std::size_t i = 0; i < 5; ++i) mean += v.at(i, c) / 5;
      for (std::size_t i = 0; i < 5; ++i) CHECK(out.at(i, c) == doctest::Approx(mean).epsilon(1e-12));
    }
  }
  SUBCASE("permutation equivariance") {
    const Tensor f = random_tensor(rng, {5, 4});
    const std::vector<std::size_t> perm = {4, 2, 0, 1, 3};
    const Tensor out = self_attention_alt(f, params, "a", 4);
    const Tensor out_p = self_attention_alt(ops::gather_rows(f, perm), params, "a", 4);
    for (std::size_t i = 0; i < 5; ++i)
      for (std::size_t c = 0; c < 8; ++c) CHECK(out_p.at(i, c) == doctest::Approx(out.at(perm[i], c)).epsilon(1e-12));
  }
  SUBCASE("head count must divide the width") { CHECK_THROWS(self_attention_alt(random_tensor(rng, {2, 4}), params, "a", 3)); }
}

TEST_CASE("layer forward") {
  Rng rng(21);
  const ObjectDgcnn model(small_bev(), small_head());
  ParamRegistry params;
  model.register_params(params, rng);
  const BevGrid fd = random_fd(rng, model.feature_spec(), 8);
  const Tensor q0 = params.get("dgcnn.query0");

  SUBCASE("set size preserved") {
    const auto res = model.layer_forward(q0, fd, params, 0);
    CHECK(res.queries.shape() == q0.shape());
    CHECK(res.decode.sampled.shape() == Shape{6 * 4, 8});
  }
  SUBCASE("zeroed interaction networks leave only the residual") {
    for (auto& [name, t] : params)
      if (name.starts_with("dgcnn.layer0.edge"))
        for (double& x : t.mutable_data()) x = 0;
    const auto res = model.layer_forward(q0, fd, params, 0);
    CHECK(values(res.queries) == values(q0));
  }
  SUBCASE("feature gradient is local to the sampled cells") {
    BevGrid leaf = fd;
    leaf.data = fd.data.clone(true);
    Tape tape;
    std::set<std::size_t> touched;
    {
      TapeScope scope(tape);
      const auto res = model.layer_forward(q0, leaf, params, 0);
      const std::size_t m = 6, k = 4;
      const GridSpec& s = leaf.spec;
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < k; ++j) {
          double u = (res.decode.reference.at(i, 0) + res.decode.offsets.at(i, 2 * j) - s.x_min) / s.cell - 0.5;
          double v = (res.decode.reference.at(i, 1) + res.decode.offsets.at(i, 2 * j + 1) - s.y_min) / s.cell - 0.5;
          u = std::clamp(u, 0.0, static_cast<double>(s.width - 1));
          v = std::clamp(v, 0.0, static_cast<double>(s.height - 1));
          const auto x0 = static_cast<std::size_t>(std::floor(u)), y0 = static_cast<std::size_t>(std::floor(v));
          for (std::size_t dy = 0; dy < 2; ++dy)
            for (std::size_t dx = 0; dx < 2; ++dx)
              touched.insert(std::min(y0 + dy, s.height - 1) * s.width + std::min(x0 + dx, s.width - 1));
        }
      tape.backward(ops::sum_all(res.queries));
    }
    REQUIRE(leaf.data.has_grad());
    std::size_t nonzero_near = 0;
    for (std::size_t cell = 0; cell < leaf.spec.cells(); ++cell) {
      bool any = false;
      for (std::size_t c = 0; c < 8; ++c) any = any || leaf.data.grad()[cell * 8 + c] != 0.0;
      if (touched.count(cell)) {
        nonzero_near += any;
      } else {
        CHECK_FALSE(any);
      }
    }
    CHECK(nonzero_near > 0);
    CHECK(touched.size() < leaf.spec.cells());
  }
}

TEST_CASE("prediction heads") {
  Rng rng(22);
  const ObjectDgcnn model(small_bev(), small_head());
  ParamRegistry params;
  model.register_params(params, rng);
  const BevGrid fd = random_fd(rng, model.feature_spec(), 8);

  SUBCASE("zero box head decodes to the reference point with unit size") {
    for (const char* p : {"head.box.l2.w", "head.box.l2.b"})
      for (double& x : params.get(p).mutable_data()) x = 0;
    const auto res = model.layer_forward(params.get("dgcnn.query0"), fd, params, 0);
    const SetPrediction pred = model.predict_heads(res.queries, res.decode, params);
    const std::vector<Detection> dets = decode_detections(pred);
    REQUIRE(dets.size() == 6);
    for (std::size_t i = 0; i < 6; ++i) {
      CHECK(dets[i].box.x == res.decode.reference.at(i, 0));
      CHECK(dets[i].box.y == res.decode.reference.at(i, 1));
      CHECK(dets[i].box.z == 0.0);
      CHECK(dets[i].box.w == 1.0);
      CHECK(dets[i].box.l == 1.0);
      CHECK(dets[i].box.h == 1.0);
      CHECK(dets[i].box.yaw == 0.0);
    }
  }
  SUBCASE("probabilities and yaw range") {
    for (std::uint64_t trial = 0; trial < 5; ++trial) {
      Rng r(100 + trial);
      ParamRegistry p;
      model.register_params(p, r);
      for (double& x : p.get("head.box.l2.b").mutable_data()) x = r.uniform(-3, 3);
      const SetPrediction pred = model.forward_head(random_fd(r, model.feature_spec(), 8), p);
      for (std::size_t i = 0; i < pred.size(); ++i) {
        double s = 0;
        for (std::size_t c = 0; c < 4; ++c) s += pred.probs.at(i, c);
        CHECK(std::abs(s - 1) <= 1e-9);
      }
      for (const Detection& d : decode_detections(pred)) {
        CHECK(d.box.yaw > -std::numbers::pi);
        CHECK(d.box.yaw <= std::numbers::pi);
      }
    }
  }
}

TEST_CASE("full model forward") {
  Rng rng(30);
  for (const Interaction kind : {Interaction::dgcnn, Interaction::self_attention}) {
    DgcnnConfig h = small_head();
    h.interaction = kind;
    h.attention_heads = 2;
    const ObjectDgcnn model(small_bev(), h);
    ParamRegistry params;
    model.register_params(params, rng);
    const PointCloud cloud = {{0.2, 0.3, 0.5, 0.4}, {-3.1, 2.2, 1.0, 0.9}, {5.5, -6.0, 0.2, 0.1}};
    const auto out = model.forward(make_pillar_batch(cloud, model.encoder().config().grid, 8), params);
    CHECK(out.prediction.probs.shape() == Shape{6, 4});
    CHECK(out.prediction.boxes.shape() == Shape{6, kBoxEncodingDim});
    CHECK(out.features.spec == model.feature_spec());
    const auto empty = model.forward(make_pillar_batch({}, model.encoder().config().grid, 8), params);
    CHECK(empty.prediction.size() == 6);
  }
}

TEST_CASE("config validation") {
  DgcnnConfig h = small_head();
  h.neighbors = 7;
  CHECK_THROWS(ObjectDgcnn(small_bev(), h));
  h = small_head();
  h.interaction = Interaction::self_attention;
  h.attention_heads = 3;
  CHECK_THROWS(ObjectDgcnn(small_bev(), h));
  CHECK(parse_interaction(to_string(Interaction::self_attention)) == Interaction::self_attention);
  CHECK_THROWS(parse_interaction("transformer"));
}
