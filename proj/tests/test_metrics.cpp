#include <doctest.h>

#include <cmath>
#include <numbers>
#include <sstream>
#include <vector>

#include "odgcnn/metrics.hpp"
#include "odgcnn/rng.hpp"

using namespace odgcnn;

namespace {

Box9 at(double x, double y) { return {x, y, 0.5, 1.9, 4.5, 1.6, 0.2, 1, 0}; }

Detection det(std::size_t label, double score, const Box9& box) {
  Detection d;
  d.probs.assign(4, 0.0);
  d.probs[label] = score;
  d.probs[3] = 1 - score;
  d.box = box;
  return d;
}

std::vector<SceneDetections> random_scenes(Rng& rng) {
  std::vector<SceneDetections> scenes(4);
  for (auto& s : scenes) {
    for (int t = 0; t < 5; ++t) {
      LabeledBox b;
      b.box = at(rng.uniform(-10, 10), rng.uniform(-10, 10));
      b.box.yaw = rng.uniform(-3, 3);
      b.label = static_cast<std::size_t>(rng.uniform_int(0, 2));
      s.targets.push_back(b);
    }
    for (const auto& t : s.targets) {
      Box9 b = t.box;
      b.x += rng.normal(0, 0.8);
      b.y += rng.normal(0, 0.8);
      b.w *= 1.1;
      s.detections.push_back(det(t.label, rng.uniform(0.2, 0.9), b));
    }
    for (int f = 0; f < 4; ++f)
      s.detections.push_back(det(static_cast<std::size_t>(rng.uniform_int(0, 2)), rng.uniform(0.1, 0.8), at(rng.uniform(-10, 10), rng.uniform(-10, 10))));
  }
  return scenes;
}

const std::vector<std::string> kNames = {"car", "pedestrian", "barrier"};

}  // namespace

TEST_CASE("centre matching") {
  const std::vector<Box9> one_target = {at(0, 0)};
  CHECK(match_by_center(std::vector<Box9>{at(0, 0)}, one_target, 0.5).true_positive == std::vector<bool>{true});
  const CenterMatch two = match_by_center(std::vector<Box9>{at(0.1, 0), at(0, 0)}, one_target, 2.0);
  CHECK(two.true_positive == std::vector<bool>{true, false});
  REQUIRE(two.pairs.size() == 1);
  CHECK(two.pairs[0] == std::pair<std::size_t, std::size_t>{0, 0});
  CHECK(match_by_center(std::vector<Box9>{at(1.0, 0)}, one_target, 1.0).true_positive == std::vector<bool>{false});
  const CenterMatch nearest = match_by_center(std::vector<Box9>{at(1.5, 0)}, std::vector<Box9>{at(0, 0), at(2, 0)}, 2.0);
  CHECK(nearest.pairs[0].second == 1);
}

TEST_CASE("average precision") {
  CHECK(average_precision({{0.9, true}, {0.8, true}, {0.1, true}}, 3) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(average_precision({}, 3) == 0.0);
  // Independent numpy evaluation of the same interpolation rule.
  CHECK(average_precision({{0.9, true}, {0.5, false}}, 2) == doctest::Approx(0.43827160493827155).epsilon(1e-14));
  CHECK(average_precision({{0.5, false}, {0.9, true}}, 2) == doctest::Approx(0.43827160493827155).epsilon(1e-14));

  Rng rng(3);
  for (int trial = 0; trial < 2000; ++trial) {
    const auto n = static_cast<std::size_t>(rng.uniform_int(1, 8));
    std::vector<ScoredLabel> labels;
    std::size_t tps = 0;
    for (int i = 0; i < rng.uniform_int(0, 10); ++i) {
      const bool tp = tps + 1 < n && rng.uniform() < 0.5;
      tps += tp;
      labels.push_back({rng.uniform(), tp});
    }
    const double before = average_precision(labels, n);
    labels.push_back({rng.uniform(), true});
    CHECK(average_precision(labels, n) >= before);
    CHECK(before >= 0.0);
    CHECK(before <= 1.0);
  }
}

TEST_CASE("TP errors") {
  const Box9 a = at(1, 2);
  const TpErrors exact = tp_errors(std::vector<std::pair<Box9, Box9>>{{a, a}});
  CHECK(exact.ate == 0.0);
  CHECK(exact.ase == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(exact.aoe == 0.0);
  CHECK(exact.ave == 0.0);

  Box9 shifted = a;
  shifted.x += 0.3;
  CHECK(tp_errors(std::vector<std::pair<Box9, Box9>>{{shifted, a}}).ate == doctest::Approx(0.3).epsilon(1e-14));

  Box9 turned = a;
  turned.yaw += 3 * std::numbers::pi / 2;
  CHECK(tp_errors(std::vector<std::pair<Box9, Box9>>{{turned, a}}).aoe == doctest::Approx(std::numbers::pi / 2).epsilon(1e-14));

  const TpErrors none = tp_errors({});
  CHECK(none.ate == 1.0);
  CHECK(none.ave == 1.0);
}

TEST_CASE("NDS") {
  CHECK(nds(1.0, {0, 0, 0, 0}) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(nds(0.0, {1, 1.5, 3, 2}) == 0.0);
  CHECK(nds(0.5, {0.5, 0, 0, 0}) == doctest::Approx(2.0 / 3).epsilon(1e-15));
  Rng rng(1);
  for (int i = 0; i < 100; ++i) {
    const double m = rng.uniform();
    CHECK(nds(m, {0, 0, 0, 0}) == doctest::Approx(m * 5 / 9 + 4.0 / 9).epsilon(1e-14));
    const double v = nds(m, {rng.uniform(0, 2), rng.uniform(0, 2), rng.uniform(0, 4), rng.uniform(0, 2)});
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
}

TEST_CASE("evaluate detections") {
  Rng rng(17);
  const std::vector<SceneDetections> scenes = random_scenes(rng);
  const MetricsReport r = evaluate_detections(scenes, kNames);
  CHECK(r.ap.size() == 3);
  CHECK(r.ap[0].size() == 4);
  CHECK(r.num_targets == 20);
  CHECK(r.num_detections == 36);
  CHECK(r.mean_ap > 0.0);

  SUBCASE("only the ranking matters") {
    std::vector<SceneDetections> scaled = scenes;
    for (auto& s : scaled)
      for (auto& d : s.detections) {
        for (std::size_t c = 0; c < 3; ++c) d.probs[c] *= 0.37;
        d.probs[3] = 1 - 0.37 * (1 - d.probs[3]);
      }
    const MetricsReport q = evaluate_detections(scaled, kNames);
    CHECK(q.mean_ap == r.mean_ap);
    CHECK(q.nds == r.nds);
    CHECK(q.ap == r.ap);
  }
  SUBCASE("perfect detections") {
    std::vector<SceneDetections> perfect = scenes;
    for (auto& s : perfect) {
      s.detections.clear();
      for (const auto& t : s.targets) s.detections.push_back(det(t.label, 0.9, t.box));
    }
    const MetricsReport q = evaluate_detections(perfect, kNames);
    CHECK(q.mean_ap == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(q.nds == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("no detections") {
    std::vector<SceneDetections> empty = scenes;
    for (auto& s : empty) s.detections.clear();
    const MetricsReport q = evaluate_detections(empty, kNames);
    CHECK(q.mean_ap == 0.0);
    CHECK(q.nds == 0.0);
  }
  SUBCASE("report text") {
    std::ostringstream out;
    write_metrics(out, r, "x.");
    const std::string text = out.str();
    CHECK(text.find("x.nds=") != std::string::npos);
    CHECK(text.find("x.ap.pedestrian@0.5=") != std::string::npos);
    std::ostringstream csv;
    write_ap_csv(csv, r, "base");
    CHECK(csv.str().find("base,car,") != std::string::npos);
  }
}
