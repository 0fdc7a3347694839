#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "odgcnn/geometry.hpp"

namespace odgcnn {

struct LidarPoint {
  double x = 0, y = 0, z = 0;
  double intensity = 0;
};

using PointCloud = std::vector<LidarPoint>;

struct Scene {
  PointCloud points;
  std::vector<LabeledBox> boxes;
};

struct ClassPrior {
  std::string name;
  double w, l, h;
};

struct SceneConfig {
  double half_extent = 16.0;  // scene covers [-half_extent, half_extent)^2
  std::vector<ClassPrior> classes = {
      {"car", 1.9, 4.5, 1.6},
      {"pedestrian", 0.7, 0.7, 1.7},
      {"barrier", 0.5, 2.5, 1.0},
  };
  std::size_t min_objects = 2;
  std::size_t max_objects = 8;
  std::size_t min_points_per_object = 40;
  std::size_t max_points_per_object = 120;
  std::size_t clutter_points = 200;
  double max_speed = 5.0;
  double size_jitter = 0.1;     // relative, uniform in [1 - j, 1 + j]
  double noise_sigma = 0.02;    // per-axis surface noise, truncated at 3 sigma
  double center_margin = 1.0;   // keeps box centres this far inside the extent
  double max_overlap_iou = 0.05;
  std::size_t max_attempts = 1000;

  std::size_t num_classes() const { return classes.size(); }
  void validate() const;
  std::string describe() const;
};

Scene sample_scene(const SceneConfig& config, std::uint64_t seed);

// Each original point gains (factor - 1) companions: a fresh surface sample on
// the box that owns it, or a fresh clutter point otherwise.
Scene densify(const Scene& scene, std::size_t factor, std::uint64_t seed, const SceneConfig& config);
// Keeps llround(keep_fraction * N) points chosen uniformly, in original order.
Scene sparsify(const Scene& scene, double keep_fraction, std::uint64_t seed);

// "SCENE v1" text format, reals with 9 significant digits.
void write_scene(std::ostream& out, const Scene& scene);
Scene read_scene(std::istream& in);
void save_scene(const Scene& scene, const std::filesystem::path& path);
Scene load_scene(const std::filesystem::path& path);

}  // namespace odgcnn
