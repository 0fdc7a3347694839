#include <doctest.h>

#include <cmath>
#include <cstring>
#include <sstream>
#include <string>

#include "odgcnn/scene.hpp"

using namespace odgcnn;

namespace {

bool same_points(const PointCloud& a, const PointCloud& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i].x != b[i].x || a[i].y != b[i].y || a[i].z != b[i].z || a[i].intensity != b[i].intensity) return false;
  return true;
}

bool same_boxes(const std::vector<LabeledBox>& a, const std::vector<LabeledBox>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (std::memcmp(&a[i].box, &b[i].box, sizeof(Box9)) != 0 || a[i].label != b[i].label) return false;
  return true;
}

std::string serialize(const Scene& s) {
  std::ostringstream out;
  write_scene(out, s);
  return out.str();
}

}  // namespace

TEST_CASE("scene sampling") {
  const SceneConfig cfg;
  SUBCASE("deterministic per seed") {
    const Scene a = sample_scene(cfg, 42), b = sample_scene(cfg, 42), c = sample_scene(cfg, 43);
    CHECK(same_points(a.points, b.points));
    CHECK(same_boxes(a.boxes, b.boxes));
    CHECK_FALSE(same_points(a.points, c.points));
  }
  SUBCASE("clutter only") {
    SceneConfig empty = cfg;
    empty.min_objects = 0;
    empty.max_objects = 0;
    const Scene s = sample_scene(empty, 1);
    CHECK(s.boxes.empty());
    CHECK(s.points.size() == empty.clutter_points);
  }
  SUBCASE("boxes hold points and do not overlap") {
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
      const Scene s = sample_scene(cfg, seed);
      CHECK(s.boxes.size() >= cfg.min_objects);
      CHECK(s.boxes.size() <= cfg.max_objects);
      for (const LabeledBox& b : s.boxes) {
        RotatedBoxBEV fp = bev_footprint(b.box);
        fp.w += 6 * cfg.noise_sigma;
        fp.l += 6 * cfg.noise_sigma;
        std::size_t inside = 0;
        for (const LidarPoint& p : s.points) inside += footprint_contains(fp, p.x, p.y);
        CHECK(inside >= 1);
      }
      for (std::size_t i = 0; i < s.boxes.size(); ++i)
        for (std::size_t j = i + 1; j < s.boxes.size(); ++j)
          CHECK(rotated_iou_bev(bev_footprint(s.boxes[i].box), bev_footprint(s.boxes[j].box)) < 0.05);
      for (const LabeledBox& b : s.boxes) {
        CHECK(std::abs(b.box.x) < cfg.half_extent);
        CHECK(std::abs(b.box.y) < cfg.half_extent);
      }
    }
  }
  SUBCASE("crowded configuration gives up") {
    SceneConfig crowded = cfg;
    crowded.half_extent = 2;
    crowded.center_margin = 1;
    crowded.min_objects = 20;
    crowded.max_objects = 20;
    CHECK_THROWS_WITH(sample_scene(crowded, 0), doctest::Contains("1000"));
  }
}

TEST_CASE("densify and sparsify") {
  const SceneConfig cfg;
  const Scene s = sample_scene(cfg, 7);
  const Scene same = sparsify(s, 1.0, 3);
  CHECK(same_points(same.points, s.points));

  Scene big = s;
  big.points.resize(2000, LidarPoint{1, 1, 1, 0.5});
  CHECK(sparsify(big, 0.25, 5).points.size() == 500);

  const Scene dense = densify(s, 4, 9, cfg);
  CHECK(dense.points.size() == 4 * s.points.size());
  CHECK(same_boxes(dense.boxes, s.boxes));
  CHECK(same_points(densify(s, 4, 9, cfg).points, dense.points));
  CHECK_THROWS(sparsify(s, 0.0, 1));
  CHECK_THROWS(densify(s, 0, 1, cfg));
}

TEST_CASE("scene text format") {
  const SceneConfig cfg;
  SUBCASE("round trip") {
    const Scene s = sample_scene(cfg, 11);
    const std::string text = serialize(s);
    std::istringstream in(text);
    const Scene back = read_scene(in);
    CHECK(back.points.size() == s.points.size());
    CHECK(back.boxes.size() == s.boxes.size());
    CHECK(serialize(back) == text);
  }
  SUBCASE("empty scene") {
    std::istringstream in(serialize(Scene{}));
    const Scene back = read_scene(in);
    CHECK(back.points.empty());
    CHECK(back.boxes.empty());
  }
  SUBCASE("truncated file names the line") {
    const std::string text = serialize(sample_scene(cfg, 12));
    std::istringstream in(text.substr(0, text.size() / 2));
    CHECK_THROWS_WITH(read_scene(in), doctest::Contains("line"));
  }
  SUBCASE("bad header") {
    std::istringstream in("SCENE v9\n");
    CHECK_THROWS_WITH(read_scene(in), doctest::Contains("line 1"));
  }
}
