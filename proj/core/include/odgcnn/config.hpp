#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "odgcnn/bev.hpp"
#include "odgcnn/dense.hpp"
#include "odgcnn/matcher.hpp"
#include "odgcnn/object_dgcnn.hpp"
#include "odgcnn/optim.hpp"
#include "odgcnn/scene.hpp"

namespace odgcnn {

// Raised for malformed or inconsistent run configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class HeadKind { set, dense };
enum class DistillMode { none, set, feature, pseudo, self };
// Which version of each scene a model sees.
enum class InputDensity { plain, dense, sparse };

std::string to_string(HeadKind v);
std::string to_string(DistillMode v);
std::string to_string(InputDensity v);

struct DataConfig {
  SceneConfig scene;
  std::uint64_t data_seed = 0;
  std::size_t train_scenes = 500;
  std::size_t eval_scenes = 100;
  std::filesystem::path data_dir;  // load scenes written by gen-data instead of sampling
  std::size_t dense_factor = 2;
  double sparse_keep = 0.5;
};

struct TrainConfig {
  std::uint64_t seed = 0;
  std::size_t epochs = 10;
  std::size_t batch_size = 4;
  CyclicSchedule lr;
  AdamWConfig adamw;
  InputDensity input = InputDensity::plain;
};

struct DistillConfig {
  DistillMode mode = DistillMode::none;
  std::filesystem::path teacher;  // checkpoint; its config.echo must sit beside it
  InputDensity teacher_input = InputDensity::plain;
  double alpha = 1.0;
  double beta = 1.0;
  bool mask_no_object = false;
  double pseudo_fraction = 1.0;
  double pseudo_threshold = 0.5;  // keep teacher detections with p(no object) below this
  bool init_from_teacher = false;
};

struct EvalConfig {
  std::size_t top_k = 100;
  double nms_threshold = 0.5;
  double score_floor = 0.05;  // dense head only
  std::filesystem::path checkpoint;
};

struct AblateConfig {
  std::string sweep;  // neighbors | layers | interaction
  std::vector<std::string> values;
};

struct RunConfig {
  HeadKind head = HeadKind::set;
  BevConfig bev;
  DgcnnConfig dgcnn;
  DenseConfig dense;
  IndicatorMode indicator = IndicatorMode::detr;
  DataConfig data;
  TrainConfig train;
  DistillConfig distill;
  EvalConfig eval;
  AblateConfig ablate;

  // Grid keys are stored as size + cell; the grid is centred on the origin.
  void set_grid(std::size_t size, double cell);
  void validate() const;
};

// Applies one key=value assignment. Throws ConfigError for unknown keys or
// unparsable values.
void apply_setting(RunConfig& config, const std::string& key, const std::string& value);

// Reads key=value lines; blank lines and text after '#' are ignored.
RunConfig parse_config(std::istream& in, RunConfig base = {});
RunConfig load_config(const std::filesystem::path& path, RunConfig base = {});

// Every key with its resolved value, one per line, in a fixed order. Feeding
// the echo back through parse_config reproduces the configuration.
void write_config(std::ostream& out, const RunConfig& config);
std::string config_echo(const RunConfig& config);

}  // namespace odgcnn
