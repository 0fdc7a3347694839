#include "odgcnn/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <tuple>

namespace odgcnn {

BoxEncoding encode_box(const Box9& b) {
  return {b.x, b.y, b.z, std::log(b.w), std::log(b.l), std::log(b.h), std::sin(b.yaw), std::cos(b.yaw), b.vx, b.vy};
}

Box9 decode_box(std::span<const double> e) {
  if (e.size() != kBoxEncodingDim) throw std::invalid_argument("decode_box: expected 10 values");
  Box9 b;
  b.x = e[0];
  b.y = e[1];
  b.z = e[2];
  b.w = std::exp(e[3]);
  b.l = std::exp(e[4]);
  b.h = std::exp(e[5]);
  b.yaw = (e[6] == 0.0 && e[7] == 0.0) ? 0.0 : std::atan2(e[6], e[7]);
  if (b.yaw == -std::numbers::pi) b.yaw = std::numbers::pi;
  b.vx = e[8];
  b.vy = e[9];
  return b;
}

double wrap_angle(double angle) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double a = std::fmod(angle, two_pi);
  if (a <= -std::numbers::pi) a += two_pi;
  if (a > std::numbers::pi) a -= two_pi;
  return a;
}

double angle_distance(double a, double b) { return std::abs(wrap_angle(a - b)); }

RotatedBoxBEV bev_footprint(const Box9& b) { return {b.x, b.y, b.w, b.l, b.yaw}; }

std::array<Point2, 4> corners(const RotatedBoxBEV& b) {
  const double c = std::cos(b.yaw), s = std::sin(b.yaw);
  const double hl = 0.5 * b.l, hw = 0.5 * b.w;
  const std::array<Point2, 4> local = {{{hl, hw}, {-hl, hw}, {-hl, -hw}, {hl, -hw}}};
  std::array<Point2, 4> out;
  for (std::size_t i = 0; i < 4; ++i) {
    out[i] = {b.x + c * local[i].x - s * local[i].y, b.y + s * local[i].x + c * local[i].y};
  }
  return out;
}

bool footprint_contains(const RotatedBoxBEV& b, double x, double y) {
  const double c = std::cos(b.yaw), s = std::sin(b.yaw);
  const double dx = x - b.x, dy = y - b.y;
  const double along = c * dx + s * dy;
  const double across = -s * dx + c * dy;
  return std::abs(along) <= 0.5 * b.l && std::abs(across) <= 0.5 * b.w;
}

double polygon_area(std::span<const Point2> poly) {
  double twice = 0.0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const Point2& p = poly[i];
    const Point2& q = poly[(i + 1) % poly.size()];
    twice += p.x * q.y - q.x * p.y;
  }
  return 0.5 * std::abs(twice);
}

std::vector<Point2> clip_convex(std::span<const Point2> subject, std::span<const Point2> clip) {
  std::vector<Point2> output(subject.begin(), subject.end());
  for (std::size_t e = 0; e < clip.size() && !output.empty(); ++e) {
    const Point2 a = clip[e];
    const Point2 b = clip[(e + 1) % clip.size()];
    const auto side = [&](const Point2& p) { return (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x); };
    std::vector<Point2> input;
    input.swap(output);
    for (std::size_t i = 0; i < input.size(); ++i) {
      const Point2& cur = input[i];
      const Point2& prev = input[(i + input.size() - 1) % input.size()];
      const double sc = side(cur), sp = side(prev);
      if (sc >= 0.0) {
        if (sp < 0.0) {
          const double t = sp / (sp - sc);
          output.push_back({prev.x + t * (cur.x - prev.x), prev.y + t * (cur.y - prev.y)});
        }
        output.push_back(cur);
      } else if (sp >= 0.0) {
        const double t = sp / (sp - sc);
        output.push_back({prev.x + t * (cur.x - prev.x), prev.y + t * (cur.y - prev.y)});
      }
    }
  }
  return output;
}

double rotated_iou_bev(const RotatedBoxBEV& a, const RotatedBoxBEV& b) {
  constexpr double kMinArea = 1e-12;
  const double area_a = a.w * a.l, area_b = b.w * b.l;
  if (!(area_a > kMinArea) || !(area_b > kMinArea)) return 0.0;
  // Fixed operand order makes iou(a, b) and iou(b, a) the same computation.
  const auto key = [](const RotatedBoxBEV& r) { return std::tie(r.x, r.y, r.w, r.l, r.yaw); };
  const bool swap = key(b) < key(a);
  const RotatedBoxBEV& first = swap ? b : a;
  const RotatedBoxBEV& second = swap ? a : b;
  const auto pa = corners(first);
  const auto pb = corners(second);
  const auto inter_poly = clip_convex(pa, pb);
  const double inter = inter_poly.size() < 3 ? 0.0 : polygon_area(inter_poly);
  const double uni = area_a + area_b - inter;
  if (!(uni > kMinArea)) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

std::size_t Detection::label() const {
  std::size_t best = 0;
  for (std::size_t c = 1; c + 1 < probs.size(); ++c)
    if (probs[c] > probs[best]) best = c;
  return best;
}

double Detection::score() const { return probs[label()]; }

}  // namespace odgcnn
