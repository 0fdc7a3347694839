#include "odgcnn/scene.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "odgcnn/rng.hpp"

namespace odgcnn {

void SceneConfig::validate() const {
  if (!(half_extent > 0)) throw std::invalid_argument("scene config: extent must be positive");
  if (classes.empty()) throw std::invalid_argument("scene config: no classes");
  for (const auto& c : classes) {
    if (!(c.w > 0 && c.l > 0 && c.h > 0)) throw std::invalid_argument("scene config: size prior of " + c.name + " not positive");
  }
  if (min_objects > max_objects) throw std::invalid_argument("scene config: min_objects > max_objects");
  if (min_points_per_object > max_points_per_object) {
    throw std::invalid_argument("scene config: min_points_per_object > max_points_per_object");
  }
  if (center_margin >= half_extent) throw std::invalid_argument("scene config: margin leaves no room for centres");
  if (max_speed < 0 || noise_sigma < 0 || size_jitter < 0 || size_jitter >= 1) {
    throw std::invalid_argument("scene config: speed, noise and jitter must be non-negative (jitter < 1)");
  }
}

std::string SceneConfig::describe() const {
  std::ostringstream out;
  out << "half_extent=" << half_extent << " classes=" << classes.size() << " objects=[" << min_objects << ","
      << max_objects << "] points_per_object=[" << min_points_per_object << "," << max_points_per_object
      << "] clutter=" << clutter_points << " max_overlap_iou=" << max_overlap_iou << " max_attempts=" << max_attempts;
  return out.str();
}

namespace {

double truncated_noise(Rng& rng, double sigma) {
  if (sigma == 0.0) return 0.0;
  return sigma * std::clamp(rng.normal(), -3.0, 3.0);
}

LidarPoint surface_point(Rng& rng, const Box9& box, double sigma) {
  const double side_lh = box.l * box.h, side_wh = box.w * box.h, top = box.w * box.l;
  const double total = 2 * side_lh + 2 * side_wh + top;
  const double pick = rng.uniform() * total;
  double along, across, up;
  const double u = rng.uniform(), v = rng.uniform();
  if (pick < side_lh) {
    along = (u - 0.5) * box.l, across = 0.5 * box.w, up = v * box.h;
  } else if (pick < 2 * side_lh) {
    along = (u - 0.5) * box.l, across = -0.5 * box.w, up = v * box.h;
  } else if (pick < 2 * side_lh + side_wh) {
    along = 0.5 * box.l, across = (u - 0.5) * box.w, up = v * box.h;
  } else if (pick < 2 * side_lh + 2 * side_wh) {
    along = -0.5 * box.l, across = (u - 0.5) * box.w, up = v * box.h;
  } else {
    along = (u - 0.5) * box.l, across = (v - 0.5) * box.w, up = box.h;
  }
  const double c = std::cos(box.yaw), s = std::sin(box.yaw);
  LidarPoint p;
  p.x = box.x + c * along - s * across + truncated_noise(rng, sigma);
  p.y = box.y + s * along + c * across + truncated_noise(rng, sigma);
  p.z = box.z - 0.5 * box.h + up + truncated_noise(rng, sigma);
  p.intensity = rng.uniform();
  return p;
}

LidarPoint clutter_point(Rng& rng, double half_extent, double sigma) {
  LidarPoint p;
  p.x = rng.uniform(-half_extent, half_extent);
  p.y = rng.uniform(-half_extent, half_extent);
  p.z = truncated_noise(rng, sigma);
  p.intensity = rng.uniform();
  return p;
}

// Index of the box whose slightly inflated volume holds the point, or -1.
long owning_box(const Scene& scene, const LidarPoint& p, double tolerance) {
  for (std::size_t b = 0; b < scene.boxes.size(); ++b) {
    const Box9& box = scene.boxes[b].box;
    RotatedBoxBEV fp = bev_footprint(box);
    fp.w += 2 * tolerance;
    fp.l += 2 * tolerance;
    const double bottom = box.z - 0.5 * box.h;
    if (footprint_contains(fp, p.x, p.y) && p.z >= bottom - tolerance && p.z <= bottom + box.h + tolerance) {
      return static_cast<long>(b);
    }
  }
  return -1;
}

}  // namespace

Scene sample_scene(const SceneConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  Scene scene;
  const auto n_objects = static_cast<std::size_t>(
      rng.uniform_int(static_cast<std::int64_t>(config.min_objects), static_cast<std::int64_t>(config.max_objects)));
  std::size_t attempts = 0;
  const double lo = -config.half_extent + config.center_margin;
  const double hi = config.half_extent - config.center_margin;
  while (scene.boxes.size() < n_objects) {
    if (++attempts > config.max_attempts) {
      throw std::runtime_error("scene generation: box placement exceeded " + std::to_string(config.max_attempts) +
                               " attempts (" + config.describe() + ")");
    }
    LabeledBox cand;
    cand.label = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(config.num_classes()) - 1));
    const ClassPrior& prior = config.classes[cand.label];
    Box9& b = cand.box;
    b.w = prior.w * rng.uniform(1 - config.size_jitter, 1 + config.size_jitter);
    b.l = prior.l * rng.uniform(1 - config.size_jitter, 1 + config.size_jitter);
    b.h = prior.h * rng.uniform(1 - config.size_jitter, 1 + config.size_jitter);
    b.yaw = wrap_angle(rng.uniform(-std::numbers::pi, std::numbers::pi));
    b.x = rng.uniform(lo, hi);
    b.y = rng.uniform(lo, hi);
    b.z = 0.5 * b.h;
    const double heading = rng.uniform(-std::numbers::pi, std::numbers::pi);
    const double speed = rng.uniform(0.0, config.max_speed);
    b.vx = speed * std::cos(heading);
    b.vy = speed * std::sin(heading);
    const bool clear = std::all_of(scene.boxes.begin(), scene.boxes.end(), [&](const LabeledBox& other) {
      return rotated_iou_bev(bev_footprint(other.box), bev_footprint(b)) < config.max_overlap_iou;
    });
    if (clear) scene.boxes.push_back(cand);
  }
  for (const LabeledBox& lb : scene.boxes) {
    const auto count = rng.uniform_int(static_cast<std::int64_t>(config.min_points_per_object),
                                       static_cast<std::int64_t>(config.max_points_per_object));
    for (std::int64_t i = 0; i < count; ++i) scene.points.push_back(surface_point(rng, lb.box, config.noise_sigma));
  }
  for (std::size_t i = 0; i < config.clutter_points; ++i) {
    scene.points.push_back(clutter_point(rng, config.half_extent, config.noise_sigma));
  }
  return scene;
}

Scene densify(const Scene& scene, std::size_t factor, std::uint64_t seed, const SceneConfig& config) {
  if (factor < 1) throw std::invalid_argument("densify: factor must be >= 1");
  Scene out = scene;
  Rng rng(seed);
  const double tolerance = 3.0 * config.noise_sigma + 1e-9;
  for (const LidarPoint& p : scene.points) {
    const long owner = owning_box(scene, p, tolerance);
    for (std::size_t k = 1; k < factor; ++k) {
      out.points.push_back(owner >= 0 ? surface_point(rng, scene.boxes[static_cast<std::size_t>(owner)].box,
                                                      config.noise_sigma)
                                      : clutter_point(rng, config.half_extent, config.noise_sigma));
    }
  }
  return out;
}

Scene sparsify(const Scene& scene, double keep_fraction, std::uint64_t seed) {
  if (!(keep_fraction > 0.0 && keep_fraction <= 1.0)) throw std::invalid_argument("sparsify: keep_fraction must be in (0, 1]");
  const std::size_t n = scene.points.size();
  const auto keep = static_cast<std::size_t>(std::llround(keep_fraction * static_cast<double>(n)));
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed);
  for (std::size_t i = 0; i < keep && i + 1 < n; ++i) {
    const auto j = static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(i), static_cast<std::int64_t>(n - 1)));
    std::swap(order[i], order[j]);
  }
  order.resize(keep);
  std::sort(order.begin(), order.end());
  Scene out;
  out.boxes = scene.boxes;
  out.points.reserve(keep);
  for (std::size_t i : order) out.points.push_back(scene.points[i]);
  return out;
}

namespace {

void put_real(std::ostream& out, double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  out << buf;
}

[[noreturn]] void parse_error(std::size_t line, const std::string& what) {
  throw std::runtime_error("scene file line " + std::to_string(line) + ": " + what);
}

std::vector<std::string> read_fields(std::istream& in, std::size_t& line_no, std::size_t expected, const char* what) {
  std::string line;
  ++line_no;
  if (!std::getline(in, line)) parse_error(line_no, std::string("unexpected end of file, expected ") + what);
  std::istringstream ss(line);
  std::vector<std::string> fields;
  for (std::string f; ss >> f;) fields.push_back(f);
  if (fields.size() != expected) {
    parse_error(line_no, std::string("expected ") + std::to_string(expected) + " fields for " + what + ", got " +
                             std::to_string(fields.size()));
  }
  return fields;
}

double parse_real(const std::string& s, std::size_t line) {
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    parse_error(line, "bad number '" + s + "'");
  }
  if (used != s.size() || !std::isfinite(v)) parse_error(line, "bad number '" + s + "'");
  return v;
}

std::size_t parse_count(const std::string& s, std::size_t line) {
  if (s.empty() || !std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; })) {
    parse_error(line, "bad count '" + s + "'");
  }
  return static_cast<std::size_t>(std::stoull(s));
}

}  // namespace

void write_scene(std::ostream& out, const Scene& scene) {
  out << "SCENE v1\n";
  out << "P " << scene.points.size() << '\n';
  for (const LidarPoint& p : scene.points) {
    put_real(out, p.x);
    out << ' ';
    put_real(out, p.y);
    out << ' ';
    put_real(out, p.z);
    out << ' ';
    put_real(out, p.intensity);
    out << '\n';
  }
  out << "B " << scene.boxes.size() << '\n';
  for (const LabeledBox& lb : scene.boxes) {
    const Box9& b = lb.box;
    for (double v : {b.x, b.y, b.z, b.w, b.l, b.h, b.yaw, b.vx, b.vy}) {
      put_real(out, v);
      out << ' ';
    }
    out << lb.label << '\n';
  }
}

Scene read_scene(std::istream& in) {
  std::size_t line_no = 0;
  std::string header;
  ++line_no;
  if (!std::getline(in, header) || header != "SCENE v1") parse_error(line_no, "missing 'SCENE v1' header");
  Scene scene;
  auto pf = read_fields(in, line_no, 2, "point count");
  if (pf[0] != "P") parse_error(line_no, "expected 'P <N>'");
  const std::size_t n_points = parse_count(pf[1], line_no);
  scene.points.reserve(n_points);
  for (std::size_t i = 0; i < n_points; ++i) {
    auto f = read_fields(in, line_no, 4, "point");
    scene.points.push_back({parse_real(f[0], line_no), parse_real(f[1], line_no), parse_real(f[2], line_no),
                            parse_real(f[3], line_no)});
  }
  auto bf = read_fields(in, line_no, 2, "box count");
  if (bf[0] != "B") parse_error(line_no, "expected 'B <M>'");
  const std::size_t n_boxes = parse_count(bf[1], line_no);
  for (std::size_t i = 0; i < n_boxes; ++i) {
    auto f = read_fields(in, line_no, 10, "box");
    LabeledBox lb;
    Box9& b = lb.box;
    double* fields[] = {&b.x, &b.y, &b.z, &b.w, &b.l, &b.h, &b.yaw, &b.vx, &b.vy};
    for (std::size_t k = 0; k < 9; ++k) *fields[k] = parse_real(f[k], line_no);
    if (!(b.w > 0 && b.l > 0 && b.h > 0)) parse_error(line_no, "box sizes must be positive");
    lb.label = parse_count(f[9], line_no);
    scene.boxes.push_back(lb);
  }
  return scene;
}

void save_scene(const Scene& scene, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write scene " + path.string());
  write_scene(out, scene);
}

Scene load_scene(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read scene " + path.string());
  return read_scene(in);
}

}  // namespace odgcnn
