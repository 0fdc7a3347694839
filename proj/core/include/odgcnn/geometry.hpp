#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

namespace odgcnn {

// 3D box: centre (x, y, z) in metres, size (w, l, h) in metres with l along
// the heading, yaw in radians, BEV velocity (vx, vy) in m/s.
struct Box9 {
  double x = 0, y = 0, z = 0;
  double w = 1, l = 1, h = 1;
  double yaw = 0;
  double vx = 0, vy = 0;
};

struct LabeledBox {
  Box9 box;
  std::size_t label = 0;
};

// Regression encoding shared by losses and matching costs:
// (x, y, z, log w, log l, log h, sin yaw, cos yaw, vx, vy).
inline constexpr std::size_t kBoxEncodingDim = 10;
using BoxEncoding = std::array<double, kBoxEncodingDim>;

BoxEncoding encode_box(const Box9& box);
// Inverse of encode_box for network outputs: sizes through exp, yaw through
// atan2 of the raw (sin, cos) pair with atan2(0, 0) defined as 0.
Box9 decode_box(std::span<const double> encoding);

// Wraps to (-pi, pi].
double wrap_angle(double angle);
// Smallest absolute difference between two headings, in [0, pi].
double angle_distance(double a, double b);

struct Point2 {
  double x = 0, y = 0;
};

struct RotatedBoxBEV {
  double x = 0, y = 0;
  double w = 1, l = 1;
  double yaw = 0;
};

RotatedBoxBEV bev_footprint(const Box9& box);
// Counter-clockwise corners.
std::array<Point2, 4> corners(const RotatedBoxBEV& box);
bool footprint_contains(const RotatedBoxBEV& box, double x, double y);

double polygon_area(std::span<const Point2> polygon);
// Sutherland-Hodgman clip of a polygon against a convex counter-clockwise one.
std::vector<Point2> clip_convex(std::span<const Point2> subject, std::span<const Point2> clip);

// Exact rectangle-rectangle IoU in the ground plane. Symmetric bit for bit;
// boxes with near-zero area give 0.
double rotated_iou_bev(const RotatedBoxBEV& a, const RotatedBoxBEV& b);

// Detector output after decoding: class probabilities over C + 1 entries
// (the last one is "no object") and a box.
struct Detection {
  std::vector<double> probs;
  Box9 box;

  std::size_t no_object_index() const { return probs.size() - 1; }
  // Best real class and its probability.
  std::size_t label() const;
  double score() const;
};

}  // namespace odgcnn
